"""Reliability-guided frequency-domain image restoration, desk scale.

Subpackages and modules:
  numerics  - tensors, packed-spectrum real FFT, autodiff, gradient checks
  prior     - MC-dropout segmentation sampling and the reliability map
  gfca      - guided frequency cross-attention block
  model     - encoder/decoder assembly and losses
  pipeline  - synthetic data, metrics, training, ablations
  bench     - attention cost model and micro-benchmarks
  tensorio  - binary tensor container, checkpoints, PGM images
  cli       - command-line front end
"""

__version__ = "0.1.0"
