"""Bayesian inference on 2x2x2 contingency tables with maximum-entropy priors."""

from .tables import CountTable, FreqTensor, load_fixture, normalize, read_table
from .models import ModelCase
from .inference import DensityCurve, SamplerConfig, map_estimate, run_chain, curve_from_chain
from .effects import ate_cov, ate_diff, pte_convolution

__all__ = [
    "CountTable", "FreqTensor", "load_fixture", "normalize", "read_table", "ModelCase",
    "DensityCurve", "SamplerConfig", "map_estimate", "run_chain", "curve_from_chain",
    "ate_cov", "ate_diff", "pte_convolution",
]
