"""Treatment-effect functionals on frequency tensors and posterior curves."""

from __future__ import annotations

import numpy as np

from .inference import DensityCurve
from .tables import CODES, FreqTensor, TableError, conditional


def ate_cov(f: FreqTensor) -> float:
    """Cov[t, z] = sum q_tz t z under the +1/-1 coding."""
    if f.axis_names != ("t", "z"):
        raise TableError(f"ate_cov needs a (t, z) tensor, got {f.axis_names}")
    return float(CODES @ f.freqs @ CODES)


def ate_diff(f: FreqTensor, conditioning: tuple[str, object] | None = None) -> float:
    """E[z | T] - E[z | notT] = 2 (q_Z|T - q_Z|notT), optionally within a slice such as ("a", "A")."""
    given = {}
    if conditioning is not None:
        axis, level = conditioning
        if axis in ("t", "z"):
            raise TableError("can only condition on the confounder axis")
        given[axis] = level
    treated = conditional(f, ("z", 1), {**given, "t": 1})
    untreated = conditional(f, ("z", 1), {**given, "t": -1})
    return 2.0 * (treated - untreated)


def _trapezoid_weights(m: int, h: float) -> np.ndarray:
    w = np.full(m, h)
    w[0] = w[-1] = h / 2
    return w


def pte_convolution(treated: DensityCurve, untreated: DensityCurve) -> DensityCurve:
    """Density of X - Y for independent X ~ treated, Y ~ untreated, both on [0, 1].

    Each curve is read as the point masses its trapezoid rule assigns to the
    grid nodes; those are convolved (treated against the reflected untreated)
    and divided by the trapezoid weights of the 2M-1 output grid on [-1, 1].
    Total mass and the mean difference are therefore preserved exactly under
    trapezoid integration.
    """
    if len(treated.grid) != len(untreated.grid) or not np.allclose(treated.grid, untreated.grid):
        raise ValueError("treated and untreated curves must share a grid")
    if treated.support != (0.0, 1.0):
        raise ValueError(f"rate curves must live on [0, 1], got {treated.support}")
    m = len(treated.grid)
    h = treated.step
    w = _trapezoid_weights(m, h)
    mass = np.convolve(treated.density * w, (untreated.density * w)[::-1])
    dens = np.clip(mass / _trapezoid_weights(2 * m - 1, h), 0.0, None)
    grid = np.linspace(-1.0, 1.0, 2 * m - 1)
    return DensityCurve(grid, dens, {"kind": "pte"})


def pte_summary(curve: DensityCurve) -> dict:
    s = curve.summary()
    s["p_neg"] = curve.prob_below(0.0)
    s["p_pos"] = 1.0 - s["p_neg"]
    return s
