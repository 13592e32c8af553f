"""MAP estimation, profile slices, sampled marginals and a quadrature oracle."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .models import MARGINAL, ModelCase, make_log_posterior, make_log_posterior_array, plug_in_point
from .tables import FreqTensor

log = logging.getLogger(__name__)

DEFAULT_GRID = 512
MAX_ORACLE_RESOLUTION = 401


class EmptyDensityError(ValueError):
    """Every point of a requested slice has zero posterior density."""


class SamplerWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# seeds


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Generator for stream ``keys`` of ``master_seed``.

    Streams are numpy SeedSequence children addressed by spawn_key, so the
    stream for (stream_id, index) never depends on how many other streams
    were drawn before it.
    """
    ss = np.random.SeedSequence(int(master_seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


# stream ids for derive_rng
STREAM_MAP = 1
STREAM_CHAIN = 2
STREAM_SWEEP = 3

# proposals are drawn this many steps at a time
NOISE_BLOCK = 65_536


# ---------------------------------------------------------------------------
# curves


def trapezoid(y, x) -> float:
    return float(np.trapezoid(y, x))


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float)
        y = np.asarray(self.density, dtype=float)
        if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
            raise ValueError("grid and density must be equal-length 1-d arrays")
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise ValueError("density must be finite and non-negative")
        area = trapezoid(y, x)
        if area <= 0:
            raise EmptyDensityError("density has zero mass")
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "density", y / area)

    @classmethod
    def on_support(cls, lo: float, hi: float, values, diagnostics=None) -> "DensityCurve":
        values = np.asarray(values, dtype=float)
        return cls(np.linspace(lo, hi, len(values)), values, diagnostics or {})

    @property
    def support(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def integral(self) -> float:
        return trapezoid(self.density, self.grid)

    @property
    def mode(self) -> float:
        return float(self.grid[int(np.argmax(self.density))])

    @property
    def mean(self) -> float:
        return trapezoid(self.grid * self.density, self.grid)

    @property
    def sd(self) -> float:
        m = self.mean
        return math.sqrt(max(trapezoid((self.grid - m) ** 2 * self.density, self.grid), 0.0))

    def cdf(self) -> np.ndarray:
        x, y = self.grid, self.density
        c = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))])
        return c / c[-1]

    def quantile(self, prob: float) -> float:
        c = self.cdf()
        return float(np.interp(prob, c, self.grid))

    def prob_below(self, x0: float) -> float:
        """P(X < x0) by trapezoid integration with linear interpolation at x0."""
        if x0 <= self.grid[0]:
            return 0.0
        if x0 >= self.grid[-1]:
            return 1.0
        c = self.cdf()
        return float(np.interp(x0, self.grid, c))

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        tail = (1 - level) / 2
        return self.quantile(tail), self.quantile(1 - tail)

    def at(self, x) -> np.ndarray:
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)

    def l1_distance(self, other: "DensityCurve") -> float:
        """Integrated |f - g| on the union grid (each curve linearly interpolated)."""
        x = np.union1d(self.grid, other.grid)
        return trapezoid(np.abs(self.at(x) - other.at(x)), x)

    def summary(self) -> dict:
        lo, hi = self.interval()
        return {"mode": self.mode, "mean": self.mean, "sd": self.sd, "q025": lo, "q975": hi}


def silverman_bandwidth(samples, weights=None) -> float:
    """0.9 min(sd, IQR / 1.34) n^(-1/5), with n the Kish effective size when weighted."""
    x = np.asarray(samples, dtype=float).ravel()
    if weights is None:
        sd = x.std(ddof=1)
        iqr = np.subtract(*np.percentile(x, [75, 25]))
        n = x.size
    else:
        w = np.asarray(weights, dtype=float).ravel() / np.sum(weights)
        mean = w @ x
        sd = math.sqrt(max(w @ (x - mean) ** 2, 0.0))
        order = np.argsort(x)
        c = np.cumsum(w[order])
        iqr = float(np.interp(0.75, c, x[order]) - np.interp(0.25, c, x[order]))
        n = 1.0 / float(w @ w)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * n ** (-0.2)


def kde_curve(samples, lo: float, hi: float, grid_size: int = DEFAULT_GRID, bandwidth: float | None = None,
              diagnostics=None, weights=None) -> DensityCurve:
    """Gaussian kernel density on a uniform grid, reflected at both ends of [lo, hi].

    The default bandwidth is Silverman's rule on the samples, floored at one
    grid cell. Optional non-negative ``weights`` give a weighted estimate.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    if weights is None:
        wt = np.ones_like(x)
    else:
        wt = np.asarray(weights, dtype=float).ravel()
        if wt.shape != x.shape or np.any(wt < 0) or not np.all(np.isfinite(wt)) or wt.sum() <= 0:
            raise ValueError("weights must be finite, non-negative, not all zero, one per sample")
    grid = np.linspace(lo, hi, grid_size)
    cell = grid[1] - grid[0]
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x, weights)
    h = max(float(bandwidth), cell)

    # bin onto a fine grid then convolve; exact enough at h >= one cell
    fine = 4
    edges = np.linspace(lo, hi, fine * (grid_size - 1) + 1)
    centers = edges
    w = np.zeros_like(centers)
    pos = np.clip((x - lo) / (edges[1] - edges[0]), 0, len(edges) - 1)
    i0 = np.floor(pos).astype(int)
    frac = pos - i0
    i1 = np.minimum(i0 + 1, len(edges) - 1)
    np.add.at(w, i0, wt * (1 - frac))
    np.add.at(w, i1, wt * frac)

    dens = np.zeros(grid_size)
    occupied = np.nonzero(w)[0]
    c = centers[occupied]
    wc = w[occupied]
    # reflected copies so mass leaking past a boundary is folded back in
    for shift, sign in ((0.0, 1.0), (2 * lo, -1.0), (2 * hi, -1.0)):
        src = shift + sign * c
        for start in range(0, grid_size, 256):
            g = grid[start:start + 256, None]
            dens[start:start + 256] += np.exp(-0.5 * ((g - src[None, :]) / h) ** 2) @ wc
    diag = dict(diagnostics or {})
    diag["bandwidth"] = h
    return DensityCurve(grid, dens, diag)


# ---------------------------------------------------------------------------
# MAP


@dataclass(frozen=True)
class MapResult:
    point: np.ndarray
    objective: float
    starts: list = field(default_factory=list, repr=False)


def _coordinate_ascent(f: Callable, x0: np.ndarray, tol: float, max_sweeps: int) -> tuple[np.ndarray, float]:
    x = np.array(x0, dtype=float)
    fx = f(x)
    for _ in range(max_sweeps):
        before = fx
        for k in range(len(x)):
            def neg(v, k=k):
                x[k] = v
                val = f(x)
                return 1e300 if val == -math.inf else -val
            keep = x[k]
            res = minimize_scalar(neg, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-10})
            if -res.fun >= fx:
                x[k] = res.x
                fx = -res.fun
            else:
                x[k] = keep
        if fx - before <= tol:
            break
    return x, fx


def map_estimate(case: ModelCase, data: FreqTensor, n: float, starts: int = 8, tol: float = 1e-10,
                 seed: int = 0, max_sweeps: int = 500) -> MapResult:
    """Multi-start coordinate ascent with Brent line searches on the closed cube.

    Start 0 is the cube centre, start 1 the data plug-in point, the rest are
    uniform draws. Among starts within ``tol`` of the best objective the one
    closest to the cube centre wins.
    """
    if starts < 1:
        raise ValueError("starts must be >= 1")
    f = make_log_posterior(case, data, n)
    rng = derive_rng(seed, STREAM_MAP)
    inits = [np.full(case.dim, 0.5), np.clip(plug_in_point(case, data), 0.01, 0.99)]
    inits += [rng.uniform(0.02, 0.98, case.dim) for _ in range(max(starts - 2, 0))]
    inits = inits[:starts]
    runs = []
    for x0 in inits:
        x, fx = _coordinate_ascent(f, x0, tol, max_sweeps)
        runs.append({"start": x0.tolist(), "point": x.tolist(), "objective": fx})
    best = max(r["objective"] for r in runs)
    tied = [r for r in runs if r["objective"] >= best - tol]
    pick = min(tied, key=lambda r: float(np.sum((np.asarray(r["point"]) - 0.5) ** 2)))
    return MapResult(np.array(pick["point"]), float(pick["objective"]), runs)


# ---------------------------------------------------------------------------
# profiles


def profile_curve(logf: Callable[[np.ndarray], float], point, coordinate: int,
                  grid_size: int = DEFAULT_GRID, diagnostics=None) -> DensityCurve:
    """exp(logf) along one coordinate of the unit cube with the others frozen at ``point``."""
    if grid_size < 64:
        raise ValueError("grid_size must be >= 64")
    x = np.array(point, dtype=float)
    grid = np.linspace(0.0, 1.0, grid_size)
    vals = np.empty(grid_size)
    for i, g in enumerate(grid):
        x[coordinate] = g
        vals[i] = logf(x)
    if not np.any(np.isfinite(vals)):
        raise EmptyDensityError(f"posterior is zero along coordinate {coordinate}")
    dens = np.exp(vals - np.max(vals[np.isfinite(vals)]))
    return DensityCurve(grid, dens, dict(diagnostics or {}))


def profile_density(case: ModelCase, data: FreqTensor, n: float, coordinate: int, map_point,
                    grid_size: int = DEFAULT_GRID) -> DensityCurve:
    """Posterior along one coordinate with the others frozen at ``map_point``."""
    if not 0 <= coordinate < case.dim:
        raise IndexError(f"coordinate {coordinate} out of range for {case.tag} model")
    if len(map_point) != case.dim:
        raise ValueError(f"map_point needs {case.dim} coordinates")
    return profile_curve(make_log_posterior(case, data, n), map_point, coordinate, grid_size,
                         {"coordinate": case.param_names[coordinate], "kind": "profile"})


# ---------------------------------------------------------------------------
# sampler


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 200_000
    burn_in: int = 20_000
    thin: int = 10
    proposal_sd: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.steps > self.burn_in >= 0:
            raise ValueError(f"need steps > burn_in >= 0, got steps={self.steps}, burn_in={self.burn_in}")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not self.proposal_sd > 0:
            raise ValueError("proposal_sd must be positive")


@dataclass(frozen=True)
class ChainResult:
    samples: np.ndarray
    accept_rate: float
    warnings: tuple[str, ...] = ()
    case: ModelCase | None = field(default=None, repr=False)
    data: FreqTensor | None = field(default=None, repr=False)
    n: float | None = None

    @property
    def diagnostics(self) -> dict:
        return {"accept_rate": self.accept_rate, "retained": int(len(self.samples)),
                "warnings": list(self.warnings)}


def _reflect(v: float) -> float:
    v = math.fmod(v, 2.0)
    if v < 0.0:
        v += 2.0
    return 2.0 - v if v > 1.0 else v


def metropolis(logf: Callable[[list], float], x0: Sequence[float], cfg: SamplerConfig,
               rng: np.random.Generator) -> ChainResult:
    """Random-walk Metropolis on the unit cube [0, 1]^d.

    All coordinates move at once by independent N(0, proposal_sd) steps and
    are reflected back into [0, 1], which keeps the proposal symmetric.
    """
    d = len(x0)
    x = [float(v) for v in x0]
    fx = logf(x)
    if fx == -math.inf:
        raise ValueError("chain must start at a point of positive density")
    keep = np.empty(((cfg.steps - cfg.burn_in + cfg.thin - 1) // cfg.thin, d))
    accepted = 0
    row = 0
    for block in range(0, cfg.steps, NOISE_BLOCK):
        m = min(NOISE_BLOCK, cfg.steps - block)
        noise = rng.normal(0.0, cfg.proposal_sd, size=(m, d)).tolist()
        logu = np.log(rng.uniform(size=m)).tolist()
        for j in range(m):
            e = noise[j]
            y = [_reflect(x[k] + e[k]) for k in range(d)]
            fy = logf(y)
            if fy != -math.inf and (fy >= fx or logu[j] < fy - fx):
                x, fx = y, fy
                accepted += 1
            i = block + j
            if i >= cfg.burn_in and (i - cfg.burn_in) % cfg.thin == 0:
                keep[row] = x
                row += 1
    rate = accepted / cfg.steps
    notes = []
    if not 0.05 <= rate <= 0.95:
        msg = f"acceptance rate {rate:.3f} outside [0.05, 0.95]"
        warnings.warn(msg, SamplerWarning, stacklevel=3)
        notes.append(msg)
    return ChainResult(keep[:row], rate, tuple(notes))


def run_chain(case: ModelCase, data: FreqTensor, n: float, cfg: SamplerConfig = SamplerConfig(),
              start: Sequence[float] | None = None, stream: int = 0) -> ChainResult:
    """Metropolis chain on the posterior of ``case``; stream ``stream`` of ``cfg.seed``."""
    f = make_log_posterior(case, data, n)
    x0 = list(np.clip(plug_in_point(case, data) if start is None else start, 0.01, 0.99))
    if f(x0) == -math.inf:
        x0 = [0.5] * case.dim
    res = metropolis(f, x0, cfg, derive_rng(cfg.seed, STREAM_CHAIN, stream))
    return ChainResult(res.samples, res.accept_rate, res.warnings, case, data, n)


# functionals of a joint (7-coordinate) sample, evaluated on arrays
def _cells_from_theta(th: np.ndarray) -> np.ndarray:
    qa, qta, qtna, z1, z2, z3, z4 = th.T
    at, ant = qa * qta, qa * (1 - qta)
    nat, nant = (1 - qa) * qtna, (1 - qa) * (1 - qtna)
    return np.stack([at * z1, at * (1 - z1), ant * z2, ant * (1 - z2),
                     nat * z3, nat * (1 - z3), nant * z4, nant * (1 - z4)], axis=1)


def _safe_ratio(num, den):
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / den
    return np.where(den > 0, r, 0.5)


def _rate_given_treatment(th: np.ndarray, level: int) -> np.ndarray:
    """q_Z|T (level 0) or q_Z|notT (level 1) as a margin ratio over the confounder."""
    c = _cells_from_theta(th)
    if level == 0:
        return _safe_ratio(c[:, 0] + c[:, 4], c[:, 0] + c[:, 1] + c[:, 4] + c[:, 5])
    return _safe_ratio(c[:, 2] + c[:, 6], c[:, 2] + c[:, 3] + c[:, 6] + c[:, 7])


def _adjusted_effect(th: np.ndarray) -> np.ndarray:
    """sum_a q_a (q_Z|a,T - q_Z|a,notT): the within-confounder effect averaged over a."""
    qa = th[:, 0]
    return qa * (th[:, 3] - th[:, 4]) + (1 - qa) * (th[:, 5] - th[:, 6])


JOINT_FUNCTIONALS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], tuple[float, float]]] = {
    "q_Z|T": (lambda th: _rate_given_treatment(th, 0), (0.0, 1.0)),
    "q_Z|notT": (lambda th: _rate_given_treatment(th, 1), (0.0, 1.0)),
    "tau_A": (lambda th: th[:, 3] - th[:, 4], (-1.0, 1.0)),
    "tau_notA": (lambda th: th[:, 5] - th[:, 6], (-1.0, 1.0)),
    "tau_adjusted": (_adjusted_effect, (-1.0, 1.0)),
    "tau_marginal": (lambda th: _rate_given_treatment(th, 0) - _rate_given_treatment(th, 1), (-1.0, 1.0)),
}


def _coordinate_index(case: ModelCase, coordinate) -> int | None:
    if isinstance(coordinate, (int, np.integer)):
        if not 0 <= coordinate < case.dim:
            raise IndexError(f"coordinate {coordinate} out of range for {case.tag} model")
        return int(coordinate)
    if coordinate in case.param_names:
        return case.param_names.index(coordinate)
    return None


def functional_values(case: ModelCase, samples: np.ndarray, coordinate) -> tuple[np.ndarray, tuple[float, float]]:
    """Per-sample values of a coordinate (index or name) or a named joint functional."""
    index = _coordinate_index(case, coordinate)
    if index is not None:
        return samples[:, index], (0.0, 1.0)
    if case.dim == 7 and coordinate in JOINT_FUNCTIONALS:
        fn, support = JOINT_FUNCTIONALS[coordinate]
        return fn(samples), support
    raise KeyError(f"unknown coordinate or functional {coordinate!r} for {case.tag} model")


def rao_blackwell_curve(case: ModelCase, data: FreqTensor, n: float, samples: np.ndarray, coordinate: int,
                       grid_size: int = DEFAULT_GRID, diagnostics=None) -> DensityCurve:
    """Average over draws of the exact conditional density of one coordinate given the others."""
    f = make_log_posterior_array(case, data, n)
    grid = np.linspace(0.0, 1.0, grid_size)
    total = np.zeros(grid_size)
    used = 0
    chunk = max(1, 250_000 // grid_size)
    for start in range(0, len(samples), chunk):
        block = np.repeat(samples[start:start + chunk, None, :], grid_size, axis=1)
        block[:, :, coordinate] = grid
        lp = f(block)
        top = np.max(lp, axis=1, keepdims=True)
        ok = np.isfinite(top[:, 0])
        dens = np.exp(lp[ok] - top[ok])
        dens /= np.trapezoid(dens, grid, axis=1)[:, None]
        total += dens.sum(axis=0)
        used += int(ok.sum())
    if used == 0:
        raise EmptyDensityError("no draw gives a proper conditional density")
    return DensityCurve(grid, total / used, dict(diagnostics or {}))


def curve_from_chain(chain: ChainResult, coordinate, grid_size: int = DEFAULT_GRID,
                     smoothing: str = "auto") -> DensityCurve:
    """Density curve of a coordinate or named functional from a chain.

    ``smoothing="auto"`` uses the Rao-Blackwell estimate for plain coordinates
    and a reflected Gaussian kernel for derived functionals.
    """
    case = chain.case
    vals, (lo, hi) = functional_values(case, chain.samples, coordinate)
    index = _coordinate_index(case, coordinate)
    name = case.param_names[index] if index is not None else coordinate
    diag = {**chain.diagnostics, "coordinate": name, "kind": "marginal"}
    if smoothing == "auto":
        smoothing = "rao-blackwell" if index is not None else "kde"
    if smoothing == "rao-blackwell":
        if index is None:
            raise ValueError(f"Rao-Blackwell smoothing needs a plain coordinate, got {coordinate!r}")
        diag["smoothing"] = "rao-blackwell"
        return rao_blackwell_curve(case, chain.data, chain.n, chain.samples, index, grid_size, diag)
    if smoothing != "kde":
        raise ValueError(f"unknown smoothing {smoothing!r}")
    diag["smoothing"] = "kde"
    return kde_curve(vals, lo, hi, grid_size, diagnostics=diag)


def sample_marginal(case: ModelCase, data: FreqTensor, n: float, coordinate, cfg: SamplerConfig = SamplerConfig(),
                    grid_size: int = DEFAULT_GRID, smoothing: str = "auto") -> DensityCurve:
    chain = run_chain(case, data, n, cfg)
    return curve_from_chain(chain, coordinate, grid_size, smoothing)


# ---------------------------------------------------------------------------
# quadrature oracle (marginal model only)


def grid_log_posterior_marginal(data: FreqTensor, n: float, resolution: int):
    """log posterior of the marginal model on the resolution^3 tensor grid (axes q_T, q_Z|T, q_Z|notT).

    Written independently of the model closures: explicit cell products on
    broadcast arrays.
    """
    if data.axis_names != ("t", "z"):
        raise ValueError("oracle needs (t, z) data")
    g = np.linspace(0.0, 1.0, resolution)
    qt = g[:, None, None]
    z1 = g[None, :, None]
    z0 = g[None, None, :]
    cells = [qt * z1, qt * (1 - z1), (1 - qt) * z0, (1 - qt) * (1 - z0)]
    p = data.flat()
    with np.errstate(divide="ignore", invalid="ignore"):
        logpost = np.zeros((resolution,) * 3)
        for pk, ck in zip(p, cells):
            ck = np.broadcast_to(ck, logpost.shape)
            logpost -= np.where(ck > 0, ck * np.log(ck), 0.0)
            if pk > 0 and n > 0:
                logpost += n * pk * np.log(ck)
        if n > 0:
            logpost -= n * float(np.sum(p[p > 0] * np.log(p[p > 0])))
    return g, logpost


def grid_marginal(case: ModelCase, data: FreqTensor, n: float, coordinate: int, resolution: int = 201) -> DensityCurve:
    """Tensor-product trapezoid marginal of the 3-coordinate posterior."""
    if case.tag != MARGINAL:
        raise ValueError("grid_marginal is only defined for the marginal model")
    if resolution > MAX_ORACLE_RESOLUTION:
        raise ValueError(f"resolution {resolution} exceeds {MAX_ORACLE_RESOLUTION}")
    if resolution < 3:
        raise ValueError("resolution must be >= 3")
    if not 0 <= coordinate < 3:
        raise IndexError(f"coordinate {coordinate} out of range for marginal model")
    g, lp = grid_log_posterior_marginal(data, n, resolution)
    dens = np.exp(lp - np.max(lp))
    others = [ax for ax in range(3) if ax != coordinate]
    # integrate the higher axis first so axis numbers stay valid
    for ax in sorted(others, reverse=True):
        dens = np.trapezoid(dens, g, axis=ax)
    return DensityCurve(g, dens, {"coordinate": case.param_names[coordinate], "kind": "oracle",
                                  "resolution": resolution})
