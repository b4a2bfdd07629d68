"""Simulator and analysis toolkit for federated learning over a fading
wireless multiple-access channel.

The package provides:

- ``geometry``: parameter vectors and exact projections onto convex sets,
- ``losses``: strongly convex local costs with exact gradients and
  curvature-constant estimation,
- ``channel``: positive fading coefficients, analog superposition and
  normalized aggregation weights,
- ``protocols``: the over-the-air training loop, a TDMA averaging baseline,
  a centralized projected-gradient oracle and the experiment runner,
- ``analysis``: convergence metrics, contraction/series checks and the
  expected-error envelope with Monte-Carlo verification,
- ``data``: synthetic blob datasets, iid partitioning and CSV persistence,
- ``service``/``cli``: a FastAPI front-end and a thin command-line client.

Everything is deterministic given the configured seeds; no operation reads
wall-clock entropy.
"""

from ota_fedsim.errors import ConfigError, InvariantViolation, ParseError

__all__ = ["ConfigError", "InvariantViolation", "ParseError"]
__version__ = "0.1.0"
