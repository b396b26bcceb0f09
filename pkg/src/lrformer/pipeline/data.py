"""Synthetic phantoms, degradation generators, and the dataset directory layout.

Clean images are procedurally generated piecewise-smooth phantoms
(overlapping ellipses on a gentle gradient, values in [0, 1]). Three
degradations are supported:

  noise     - dose-dependent Gaussian surrogate with signal-proportional
              variance VAR_SCALE * x * (1/dose - 1); dose 1 is a no-op
  bicubic   - antialiased Catmull-Rom (a = -0.5) downsampling by 2 or 4
  artifact  - multiplicative low-order polynomial bias field, or random
              block masking

A dataset directory holds `clean/`, `degraded/<spec-id>/`, `priors/` (all
tensor containers with PGM previews for the images) and `manifest.txt`
with one `id spec-id seed` record per line.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..prior import produce_prior
from ..tensorio import read_tensor, write_pgm, write_prior, write_tensor

KINDS = ("noise", "bicubic", "artifact")
ARTIFACT_MODES = ("bias_field", "block_masking")

# variance of the noise surrogate at dose d is VAR_SCALE * x * (1/d - 1)
VAR_SCALE = 0.01


@dataclass
class DegradationSpec:
    kind: str = "noise"
    dose_fraction: float = 0.25
    factor: int = 2
    artifact_mode: str = "bias_field"
    strength: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if self.kind == "noise" and not 0.0 < self.dose_fraction <= 1.0:
            raise ValueError(
                f"dose fraction must be in (0, 1], got {self.dose_fraction}"
            )
        if self.kind == "bicubic" and self.factor not in (2, 4):
            raise ValueError(f"bicubic factor must be 2 or 4, got {self.factor}")
        if self.kind == "artifact":
            if self.artifact_mode not in ARTIFACT_MODES:
                raise ValueError(
                    f"unknown artifact mode {self.artifact_mode!r}"
                )
            if self.strength < 0.0:
                raise ValueError(f"strength must be >= 0, got {self.strength}")

    @property
    def spec_id(self) -> str:
        if self.kind == "noise":
            return f"noise-d{self.dose_fraction:g}"
        if self.kind == "bicubic":
            return f"bicubic-x{self.factor}"
        mode = "bias" if self.artifact_mode == "bias_field" else "block"
        return f"artifact-{mode}-s{self.strength:g}"


# -- phantoms -----------------------------------------------------------------


def make_phantom(size: int, rng: np.random.Generator) -> np.ndarray:
    """One piecewise-smooth phantom with 3..6 ellipses, values in [0, 1]."""
    coords = np.linspace(-1.0, 1.0, size)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    img = 0.3 + 0.1 * (rng.uniform(-1, 1) * xx + rng.uniform(-1, 1) * yy)
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(-0.6, 0.6, size=2)
        ay, ax = rng.uniform(0.15, 0.55, size=2)
        angle = rng.uniform(0.0, np.pi)
        level = rng.uniform(-0.35, 0.45)
        ry = (yy - cy) * np.cos(angle) - (xx - cx) * np.sin(angle)
        rx = (yy - cy) * np.sin(angle) + (xx - cx) * np.cos(angle)
        inside = (ry / ay) ** 2 + (rx / ax) ** 2 <= 1.0
        img = img + level * inside
    lo, hi = img.min(), img.max()
    if hi - lo > 1e-9:
        img = 0.05 + 0.9 * (img - lo) / (hi - lo)
    return np.clip(img, 0.0, 1.0)


def generate_phantoms(count: int, size: int, seed: int) -> list[np.ndarray]:
    return [make_phantom(size, np.random.default_rng([seed, i]))
            for i in range(count)]


# -- bicubic resampling -------------------------------------------------------


def _cubic_kernel(s: np.ndarray, a: float = -0.5) -> np.ndarray:
    s = np.abs(s)
    out = np.zeros_like(s)
    near = s <= 1.0
    mid = (s > 1.0) & (s < 2.0)
    out[near] = (a + 2.0) * s[near] ** 3 - (a + 3.0) * s[near] ** 2 + 1.0
    out[mid] = a * s[mid] ** 3 - 5.0 * a * s[mid] ** 2 + 8.0 * a * s[mid] - 4.0 * a
    return out


def _resample_matrix(n_in: int, factor: int) -> np.ndarray:
    """Rows map input samples to a factor-times-smaller axis (antialiased)."""
    n_out = n_in // factor
    weights = np.zeros((n_out, n_in))
    support = 2 * factor
    for i in range(n_out):
        center = (i + 0.5) * factor - 0.5
        lo = int(np.floor(center)) - support + 1
        taps = np.arange(lo, lo + 2 * support)
        w = _cubic_kernel((taps - center) / factor)
        taps = np.clip(taps, 0, n_in - 1)  # replicate edges
        for t, wt in zip(taps, w):
            weights[i, t] += wt
        weights[i] /= weights[i].sum()
    return weights


def bicubic_down(image: np.ndarray, factor: int) -> np.ndarray:
    if image.shape[0] % factor or image.shape[1] % factor:
        raise ValueError(
            f"extents {image.shape} not divisible by factor {factor}"
        )
    rows = _resample_matrix(image.shape[0], factor)
    cols = _resample_matrix(image.shape[1], factor)
    return rows @ image @ cols.T


# -- degradations -------------------------------------------------------------


def degrade(clean: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Pure function of (clean, spec); spec.seed drives all randomness."""
    clean = np.asarray(clean, dtype=np.float64)
    if clean.min() < 0.0 or clean.max() > 1.0:
        raise ValueError("clean image values must lie in [0, 1]")
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "noise":
        sigma = np.sqrt(VAR_SCALE * np.maximum(clean, 0.0)
                        * (1.0 / spec.dose_fraction - 1.0))
        return clean + sigma * rng.standard_normal(clean.shape)
    if spec.kind == "bicubic":
        return bicubic_down(clean, spec.factor)
    if spec.artifact_mode == "bias_field":
        coords = np.linspace(-1.0, 1.0, clean.shape[0])
        yy, xx = np.meshgrid(coords, np.linspace(-1.0, 1.0, clean.shape[1]),
                             indexing="ij")
        coeffs = rng.uniform(-1.0, 1.0, size=6)
        poly = (coeffs[0] * xx + coeffs[1] * yy + coeffs[2] * xx * yy
                + coeffs[3] * xx**2 + coeffs[4] * yy**2 + coeffs[5])
        poly /= max(np.abs(poly).max(), 1e-9)
        return clean * (1.0 + spec.strength * poly)
    # block masking: zero out random 8x8 tiles
    out = clean.copy()
    blocks = max(1, int(round(spec.strength * 10)))
    for _ in range(blocks):
        y = int(rng.integers(0, max(1, clean.shape[0] - 7)))
        x = int(rng.integers(0, max(1, clean.shape[1] - 7)))
        out[y:y + 8, x:x + 8] = 0.0
    return out


# -- dataset layout -----------------------------------------------------------


@dataclass
class DatasetRecord:
    image_id: str
    spec_id: str
    seed: int
    clean_path: Path
    degraded_path: Path

    def load_clean(self) -> np.ndarray:
        return read_tensor(self.clean_path)

    def load_degraded(self) -> np.ndarray:
        return read_tensor(self.degraded_path)


def synthesize_dataset(root: str | Path, count: int, size: int,
                       spec: DegradationSpec, seed: int) -> list[DatasetRecord]:
    """Write clean + degraded images and the manifest; idempotent per seed."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    root = Path(root)
    clean_dir = root / "clean"
    degraded_dir = root / "degraded" / spec.spec_id
    clean_dir.mkdir(parents=True, exist_ok=True)
    degraded_dir.mkdir(parents=True, exist_ok=True)

    records = []
    lines = ["# id spec seed"]
    for i in range(count):
        image_id = f"phantom_{i:04d}"
        clean = make_phantom(size, np.random.default_rng([seed, i]))
        item_seed = seed + 1 + i
        degraded = degrade(clean, replace(spec, seed=item_seed))
        clean_path = clean_dir / f"{image_id}.ten"
        degraded_path = degraded_dir / f"{image_id}.ten"
        write_tensor(clean_path, clean)
        write_pgm(clean_dir / f"{image_id}.pgm", clean)
        write_tensor(degraded_path, degraded)
        write_pgm(degraded_dir / f"{image_id}.pgm", degraded)
        lines.append(f"{image_id} {spec.spec_id} {item_seed}")
        records.append(DatasetRecord(image_id, spec.spec_id, item_seed,
                                     clean_path, degraded_path))
    (root / "manifest.txt").write_text("\n".join(lines) + "\n")
    return records


def load_dataset(root: str | Path) -> list[DatasetRecord]:
    root = Path(root)
    manifest = root / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest at {manifest}")
    records = []
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        image_id, spec_id, seed = line.split()
        clean_path = root / "clean" / f"{image_id}.ten"
        degraded_path = root / "degraded" / spec_id / f"{image_id}.ten"
        for p in (clean_path, degraded_path):
            if not p.exists():
                raise FileNotFoundError(f"manifest names missing file {p}")
        records.append(DatasetRecord(image_id, spec_id, int(seed),
                                     clean_path, degraded_path))
    return records


def produce_prior_cache(root: str | Path, segmenter, samples: int = 4,
                        alpha: float = 0.5, beta: float = 0.5,
                        seed: int = 0) -> int:
    """One reliability-map record per degraded image, in manifest order."""
    root = Path(root)
    records = load_dataset(root)
    prior_dir = root / "priors"
    prior_dir.mkdir(exist_ok=True)
    for index, record in enumerate(records):
        degraded = record.load_degraded()
        prior = produce_prior(segmenter, degraded, samples=samples,
                              alpha=alpha, beta=beta,
                              base_seed=seed + 1000 * index)
        write_prior(prior_dir / f"{record.image_id}.prior", record.image_id,
                    samples, alpha, beta, prior.reliability)
    return len(records)


def load_prior_map(root: str | Path, image_id: str) -> np.ndarray:
    """Reliability map for one image; raises naming the image if absent."""
    from ..tensorio import read_prior

    path = Path(root) / "priors" / f"{image_id}.prior"
    if not path.exists():
        raise FileNotFoundError(
            f"no cached prior for image {image_id!r} (expected {path})"
        )
    stored_id, _, _, _, reliability = read_prior(path)
    if stored_id != image_id:
        raise ValueError(
            f"prior record at {path} belongs to {stored_id!r}, not {image_id!r}"
        )
    return reliability
