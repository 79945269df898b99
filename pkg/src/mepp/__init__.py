"""Multipartite GHZ entanglement purification with parity-check detectors.

Closed-form ensemble transformations (:mod:`mepp.ensemble_calc`), an exact
small-register state-vector oracle (:mod:`mepp.exact_sim`), Monte Carlo
trajectory sampling (:mod:`mepp.montecarlo`) and threshold-driven yield
accounting (:mod:`mepp.scheduler`).
"""

__version__ = "0.1.0"
