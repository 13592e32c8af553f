"""Sweeps of the covariance-constrained prior over a grid of (alpha, delta) targets.

Each cell reports two views of the posterior treatment effect:

* the fixed ``pte_*`` columns come from profile slices at the cell's MAP point:
  within each confounder stratum the slices of q_Z|a,T and q_Z|a,notT are
  convolved, and the two stratum curves are mixed with weights q_A, 1 - q_A
  taken from the MAP point;
* the ``marg_*`` columns convolve the sampled marginals of the margin ratios
  q_Z|T and q_Z|notT, which are also what the ``qzt*`` columns summarize.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .effects import pte_convolution, pte_summary
from .inference import (
    DEFAULT_GRID,
    STREAM_SWEEP,
    ChainResult,
    DensityCurve,
    SamplerConfig,
    curve_from_chain,
    derive_rng,
    functional_values,
    kde_curve,
    map_estimate,
    profile_density,
    run_chain,
    silverman_bandwidth,
)
from .maxent import covariances, solve_covariance_constraints
from .models import LATENT, ModelCase, joint_cells_array
from .tables import FreqTensor, TableError

log = logging.getLogger(__name__)

FIXED_COLUMNS = (
    "alpha", "delta", "pte_mode", "pte_sd", "p_neg",
    "qzt_mode", "qzt_sd", "qztbar_mode", "qztbar_sd", "accept_rate",
)
EXTRA_COLUMNS = (
    "marg_pte_mode", "marg_pte_sd", "marg_p_neg",
    "pte_mode_A", "pte_mode_notA", "p_neg_A", "p_neg_notA", "map_q_A",
)
COLUMNS = FIXED_COLUMNS + EXTRA_COLUMNS + ("errors",)

# coordinates of q_Z|a,T and q_Z|a,notT in the 7-parameter hypothesis
STRATUM_COORDS = {"A": (3, 4), "notA": (5, 6)}


@dataclass(frozen=True)
class SweepGrid:
    alphas: tuple[float, ...]
    deltas: tuple[float, ...]

    def __post_init__(self):
        for name in ("alphas", "deltas"):
            v = tuple(float(x) for x in getattr(self, name))
            if not v:
                raise ValueError(f"{name} must not be empty")
            if any(not math.isfinite(x) or abs(x) > 1 for x in v):
                raise ValueError(f"{name} must lie in [-1, 1]")
            if any(b <= a for a, b in zip(v, v[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, v)

    @classmethod
    def square(cls, values) -> "SweepGrid":
        return cls(tuple(values), tuple(values))

    def cells(self) -> list[tuple[float, float]]:
        """(alpha, delta) pairs in row-major (alpha, delta) order; the position is the cell index."""
        return [(a, d) for a in self.alphas for d in self.deltas]


@dataclass(frozen=True)
class SweepConfig:
    sampler: SamplerConfig = SamplerConfig()
    grid_size: int = DEFAULT_GRID
    map_starts: int = 8


@dataclass
class SweepCellResult:
    alpha: float
    delta: float
    pte_mode: float = math.nan
    pte_sd: float = math.nan
    p_neg: float = math.nan
    qzt_mode: float = math.nan
    qzt_sd: float = math.nan
    qztbar_mode: float = math.nan
    qztbar_sd: float = math.nan
    accept_rate: float = math.nan
    extras: dict = field(default_factory=dict)
    errors: str = ""
    curves: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return not self.errors

    def row(self) -> dict:
        out = {k: getattr(self, k) for k in FIXED_COLUMNS}
        out.update({k: self.extras.get(k, math.nan) for k in EXTRA_COLUMNS})
        out["errors"] = self.errors
        return out


def cell_seed(master_seed: int, index: int) -> int:
    """Master seed of sweep cell ``index``."""
    return int(derive_rng(master_seed, STREAM_SWEEP, index).integers(2**63))


def mix(curves: list[DensityCurve], weights) -> DensityCurve:
    dens = sum(w * c.density for w, c in zip(weights, curves))
    return DensityCurve(curves[0].grid, dens, {"kind": "pte"})


def profile_effects(case: ModelCase, data: FreqTensor, n: float, map_point, grid_size: int = DEFAULT_GRID) -> dict:
    """Stratum PTEs from MAP profile slices and their q_A-weighted mixture."""
    out = {}
    for stratum, (kt, ku) in STRATUM_COORDS.items():
        treated = profile_density(case, data, n, kt, map_point, grid_size)
        untreated = profile_density(case, data, n, ku, map_point, grid_size)
        out[stratum] = pte_convolution(treated, untreated)
    qa = float(map_point[0])
    out["mixture"] = mix([out["A"], out["notA"]], [qa, 1 - qa])
    return out


def analyze(case: ModelCase, data: FreqTensor, n: float, cfg: SweepConfig, seed: int) -> SweepCellResult:
    """Posterior summaries of one 7-parameter case with every random choice drawn from ``seed``."""
    res = SweepCellResult(case.alpha if case.alpha is not None else math.nan,
                          case.delta if case.delta is not None else math.nan)
    sampler = SamplerConfig(cfg.sampler.steps, cfg.sampler.burn_in, cfg.sampler.thin,
                            cfg.sampler.proposal_sd, seed)
    mp = map_estimate(case, data, n, starts=cfg.map_starts, seed=seed)
    prof = profile_effects(case, data, n, mp.point, cfg.grid_size)
    s = pte_summary(prof["mixture"])
    res.pte_mode, res.pte_sd, res.p_neg = s["mode"], s["sd"], s["p_neg"]

    chain = run_chain(case, data, n, sampler)
    qzt = curve_from_chain(chain, "q_Z|T", cfg.grid_size)
    qztbar = curve_from_chain(chain, "q_Z|notT", cfg.grid_size)
    res.qzt_mode, res.qzt_sd = qzt.mode, qzt.sd
    res.qztbar_mode, res.qztbar_sd = qztbar.mode, qztbar.sd
    res.accept_rate = chain.accept_rate
    marg = pte_convolution(qzt, qztbar)
    m = pte_summary(marg)
    res.extras = {
        "marg_pte_mode": m["mode"], "marg_pte_sd": m["sd"], "marg_p_neg": m["p_neg"],
        "pte_mode_A": prof["A"].mode, "pte_mode_notA": prof["notA"].mode,
        "p_neg_A": prof["A"].prob_below(0.0), "p_neg_notA": prof["notA"].prob_below(0.0),
        "map_q_A": float(mp.point[0]),
    }
    if chain.warnings:
        res.errors = "; ".join(chain.warnings)
    res.curves = {"pte": prof["mixture"], "pte_A": prof["A"], "pte_notA": prof["notA"],
                  "qzt": qzt, "qztbar": qztbar, "marg_pte": marg}
    return res


def baseline(data: FreqTensor, n: float, cfg: SweepConfig = SweepConfig(), seed: int = 0) -> SweepCellResult:
    """The same summaries under the plain entropy prior (no confounder information)."""
    if data.axis_names != ("t", "z"):
        raise TableError(f"sweep needs (t, z) data, got {data.axis_names}")
    return analyze(ModelCase.latent(), data, n, cfg, seed)


def run_cell(data: FreqTensor, n: float, alpha: float, delta: float, cfg: SweepConfig, seed: int) -> SweepCellResult:
    case = ModelCase.sensitivity(alpha, delta)
    qhat = solve_covariance_constraints(alpha, delta).qhat
    cov = covariances(qhat)
    if abs(cov["at"] - alpha) > 1e-12 or abs(cov["az"] - delta) > 1e-12:
        raise ArithmeticError(f"reference misses its covariance targets: {cov}")
    res = analyze(case, data, n, cfg, seed)
    res.alpha, res.delta = float(alpha), float(delta)
    return res


def run_sweep(data: FreqTensor, n: float, grid: SweepGrid, cfg: SweepConfig = SweepConfig(),
              seed: int = 0) -> list[SweepCellResult]:
    """One result per grid cell, ordered by (alpha, delta).

    A failing cell is reported through its ``errors`` field and the sweep
    carries on with the rest.
    """
    if data.axis_names != ("t", "z"):
        raise TableError(f"sweep needs (t, z) data, got {data.axis_names}")
    out = []
    for index, (alpha, delta) in enumerate(grid.cells()):
        try:
            res = run_cell(data, n, alpha, delta, cfg, cell_seed(seed, index))
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            log.warning("sweep cell (%g, %g) failed: %s", alpha, delta, exc)
            res = SweepCellResult(float(alpha), float(delta), errors=f"{type(exc).__name__}: {exc}")
        out.append(res)
    return out


# ---------------------------------------------------------------------------
# importance reweighting of a baseline chain


def margin_curves(chain: ChainResult, weights=None, bandwidths=None, grid_size: int = DEFAULT_GRID) -> dict:
    """Kernel curves of q_Z|T and q_Z|notT from a 7-parameter chain and their convolution.

    ``bandwidths`` (one per functional) default to Silverman's rule on the
    unweighted draws, so curves built from one chain with different weights
    share their smoothing.
    """
    out = {}
    for key, name in (("qzt", "q_Z|T"), ("qztbar", "q_Z|notT")):
        vals, (lo, hi) = functional_values(chain.case, chain.samples, name)
        h = silverman_bandwidth(vals) if bandwidths is None else bandwidths[key]
        out[key] = kde_curve(vals, lo, hi, grid_size, bandwidth=h, weights=weights)
    out["marg_pte"] = pte_convolution(out["qzt"], out["qztbar"])
    return out


def reweight_chain(chain: ChainResult, alpha: float, delta: float, grid_size: int = DEFAULT_GRID) -> dict:
    """Margin curves of the (alpha, delta) cell estimated from a baseline chain.

    The cell posterior is the baseline posterior times exp(sum_k q_k log qhat_k),
    since -KL(q || qhat) = H[q] + q . log qhat and both use the same likelihood.
    Reusing the baseline draws cancels most Monte Carlo noise when a cell is
    compared with the baseline. The bandwidths are those of the unweighted
    baseline curves.
    """
    if chain.case is None or chain.case.tag != LATENT:
        raise ValueError("reweighting needs a chain of the latent (entropy prior) model")
    if not (abs(alpha) < 1 and abs(delta) < 1):
        raise ValueError("reweighting needs an interior reference (|alpha|, |delta| < 1)")
    logq = np.log(solve_covariance_constraints(alpha, delta).qhat.flat())
    s = joint_cells_array(chain.samples) @ logq
    w = np.exp(s - s.max())
    out = margin_curves(chain, w, None, grid_size)
    out["ess"] = float(w.sum() ** 2 / (w @ w))
    return out


# ---------------------------------------------------------------------------
# CSV


def format_number(x: float) -> str:
    return format(float(x), ".17g")


def sweep_csv(results: list[SweepCellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in results:
        row = r.row()
        w.writerow([row[k] if k == "errors" else format_number(row[k]) for k in COLUMNS])
    return buf.getvalue()


def write_sweep_csv(path, results: list[SweepCellResult]) -> None:
    Path(path).write_bytes(sweep_csv(results).encode("ascii", "replace"))


def read_sweep_csv(path) -> list[SweepCellResult]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != COLUMNS:
        raise TableError(f"unexpected sweep columns {tuple(rows[0].keys())}")
    out = []
    for row in rows:
        fixed = {k: float(row[k]) for k in FIXED_COLUMNS}
        extras = {k: float(row[k]) for k in EXTRA_COLUMNS}
        out.append(SweepCellResult(**fixed, extras=extras, errors=row["errors"]))
    return out
