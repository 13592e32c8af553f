"""Maximum-entropy reference distributions over the 8-cell (a, t, z) space.

Two closed forms (marginal (a, z) constraint; covariance constraints on a*t
and a*z) and a generic dual Newton solver for linear moment constraints that
serves as an independent check on both.

Multiplier convention: qhat is proportional to exp(-sum_i lambda_i f_i) where
f_i are the constraint functions, so a constraint pushing the moment up gets a
negative multiplier.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .infotheory import shannon_entropy
from .tables import CODES, FreqTensor, TableError

log = logging.getLogger(__name__)

# a, t, z codes for every cell in canonical order
_A, _T, _Z = np.meshgrid(CODES, CODES, CODES, indexing="ij")
CELL_A = _A.ravel()
CELL_T = _T.ravel()
CELL_Z = _Z.ravel()


class InfeasibleConstraintError(ValueError):
    """Constraint targets cannot be met by any distribution on the cells."""


class MaxEntConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class LinearConstraint:
    weights: np.ndarray
    target: float
    name: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape != (8,) or not np.all(np.isfinite(w)):
            raise ValueError("constraint weights must be 8 finite reals")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "target", float(self.target))

    def value(self, q) -> float:
        q = q.flat() if isinstance(q, FreqTensor) else np.asarray(q, dtype=float).ravel()
        return float(self.weights @ q)


@dataclass(frozen=True)
class MaxEntSolution:
    qhat: FreqTensor
    multipliers: np.ndarray
    multiplier_names: tuple[str, ...]
    achieved_entropy: float
    residual: float
    iterations: int = 0
    constraints: tuple[LinearConstraint, ...] = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {
            "cells": [float(x) for x in self.qhat.flat()],
            "multipliers": {k: float(v) for k, v in zip(self.multiplier_names, self.multipliers)},
            "achieved_entropy": self.achieved_entropy,
            "residual": self.residual,
        }


def max_residual(q, constraints) -> float:
    q = q.flat() if isinstance(q, FreqTensor) else np.asarray(q, dtype=float).ravel()
    res = abs(q.sum() - 1.0)
    for c in constraints:
        res = max(res, abs(c.value(q) - c.target))
    return float(res)


# ---------------------------------------------------------------------------
# constraint builders


def marginal_constraints(qbar: FreqTensor) -> list[LinearConstraint]:
    """sum_t q[a, t, z] = qbar[a, z] for all four (a, z)."""
    if qbar.axis_names != ("a", "z"):
        raise TableError(f"marginal constraint needs an (a, z) tensor, got {qbar.axis_names}")
    out = []
    for i, a in enumerate(("A", "notA")):
        for j, z in enumerate(("Z", "notZ")):
            w = np.zeros((2, 2, 2))
            w[i, :, j] = 1.0
            out.append(LinearConstraint(w, qbar.freqs[i, j], f"mu[{a},{z}]"))
    return out


def covariance_constraints(alpha: float, delta: float) -> list[LinearConstraint]:
    """E[a t] = alpha and E[a z] = delta under the +1/-1 coding."""
    return [
        LinearConstraint(CELL_A * CELL_T, alpha, "lambda_at"),
        LinearConstraint(CELL_A * CELL_Z, delta, "lambda_az"),
    ]


# ---------------------------------------------------------------------------
# closed forms


def solve_marginal_constraint(qbar: FreqTensor) -> MaxEntSolution:
    """Split each (a, z) mass evenly over t.

    Multipliers are gauge-fixed so that sum exp(-mu) = 1, i.e. mu = -log qbar
    (+inf for an empty cell).
    """
    cons = marginal_constraints(qbar)
    q = np.repeat(qbar.freqs[:, None, :] / 2.0, 2, axis=1)
    with np.errstate(divide="ignore"):
        mu = -np.log(qbar.freqs.ravel())
    qhat = FreqTensor(("a", "t", "z"), q)
    return MaxEntSolution(
        qhat=qhat,
        multipliers=mu,
        multiplier_names=tuple(c.name for c in cons),
        achieved_entropy=shannon_entropy(qhat),
        residual=max_residual(qhat, cons),
        constraints=tuple(cons),
    )


def solve_covariance_constraints(alpha: float, delta: float) -> MaxEntSolution:
    """qhat = (1 + alpha a t)(1 + delta a z) / 8 with multipliers -atanh(alpha), -atanh(delta)."""
    for name, v in (("alpha", alpha), ("delta", delta)):
        if not np.isfinite(v) or abs(v) > 1:
            raise InfeasibleConstraintError(f"{name}={v} outside [-1, 1]")
    q = (1 + alpha * CELL_A * CELL_T) * (1 + delta * CELL_A * CELL_Z) / 8.0
    q = np.clip(q, 0.0, None)
    cons = covariance_constraints(alpha, delta)
    with np.errstate(divide="ignore"):
        lam = np.array([-np.arctanh(alpha), -np.arctanh(delta)])
    qhat = FreqTensor(("a", "t", "z"), q)
    return MaxEntSolution(
        qhat=qhat,
        multipliers=lam,
        multiplier_names=("lambda_at", "lambda_az"),
        achieved_entropy=shannon_entropy(qhat),
        residual=max_residual(qhat, cons),
        constraints=tuple(cons),
    )


# ---------------------------------------------------------------------------
# generic solver


def _feasible(constraints) -> bool:
    if not constraints:
        return True
    A = np.vstack([np.ones(8)] + [c.weights for c in constraints])
    b = np.array([1.0] + [c.target for c in constraints])
    res = linprog(np.zeros(8), A_eq=A, b_eq=b, bounds=[(0, None)] * 8, method="highs")
    return res.status == 0


def _forced_zero_cells(constraints) -> list[int]:
    """Cells that must be empty in every distribution meeting the constraints."""
    A = np.vstack([np.ones(8)] + [c.weights for c in constraints])
    b = np.array([1.0] + [c.target for c in constraints])
    out = []
    for k in range(8):
        cost = np.zeros(8)
        cost[k] = -1.0
        res = linprog(cost, A_eq=A, b_eq=b, bounds=[(0, None)] * 8, method="highs")
        if res.status == 0 and -res.fun < 1e-12:
            out.append(k)
    return out


def _gibbs(lam: np.ndarray, F: np.ndarray) -> tuple[np.ndarray, float]:
    s = -(lam @ F) if len(lam) else np.zeros(F.shape[1])
    m = s.max()
    w = np.exp(s - m)
    z = w.sum()
    return w / z, m + np.log(z)


def dual_newton(constraints, tol: float = 1e-10, max_iter: int = 200) -> MaxEntSolution:
    """Maximize entropy on the 8 cells subject to linear moment constraints.

    Minimizes the convex dual log Z(lambda) + lambda . b by Newton steps with
    step halving; the Hessian is the covariance of the constraint functions
    under the current Gibbs distribution. Redundant constraints are handled by
    a least-squares Newton direction.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    constraints = list(constraints)
    k = len(constraints)
    F = np.array([c.weights for c in constraints]).reshape(k, 8)
    b = np.array([c.target for c in constraints])
    lam = np.zeros(k)

    def dual(lam_):
        _, logz = _gibbs(lam_, F)
        return logz + lam_ @ b

    it = 0
    q, _ = _gibbs(lam, F)
    resid = max_residual(q, constraints)
    while resid > tol and it < max_iter:
        it += 1
        mean = F @ q
        grad = b - mean
        centered = F - mean[:, None]
        hess = (centered * q) @ centered.T
        step = np.linalg.lstsq(hess, -grad, rcond=1e-13)[0]
        f0 = dual(lam)
        t = 1.0
        while t > 1e-12:
            cand = lam + t * step
            # near the optimum dual differences drop below rounding; fall back on the residual
            if dual(cand) <= f0 + 1e-4 * t * (grad @ step):
                break
            if max_residual(_gibbs(cand, F)[0], constraints) < resid:
                break
            t *= 0.5
        else:
            break
        lam = lam + t * step
        q, _ = _gibbs(lam, F)
        resid = max_residual(q, constraints)

    if resid <= tol and q.min() < 1e-6 and _forced_zero_cells(constraints):
        # targets on the boundary of the moment set: the multipliers only look converged
        raise MaxEntConvergenceError("multipliers diverge: constraints force empty cells", resid, it)
    if resid > tol:
        if not _feasible(constraints):
            raise InfeasibleConstraintError(f"constraints are infeasible (residual {resid:.3e})")
        raise MaxEntConvergenceError("dual Newton did not converge", resid, it)

    log.debug("dual_newton converged in %d iterations, residual %.2e", it, resid)
    qhat = FreqTensor(("a", "t", "z"), q)
    return MaxEntSolution(
        qhat=qhat,
        multipliers=lam,
        multiplier_names=tuple(c.name or f"c{i}" for i, c in enumerate(constraints)),
        achieved_entropy=shannon_entropy(qhat),
        residual=resid,
        iterations=it,
        constraints=tuple(constraints),
    )


def lift_az(qbar: FreqTensor) -> FreqTensor:
    """Lift an (a, z) tensor to (a, t, z) by halving over t."""
    return solve_marginal_constraint(qbar).qhat


def covariances(q) -> dict[str, float]:
    """E[a t], E[a z], E[t z] under the +1/-1 coding."""
    q = q.flat() if isinstance(q, FreqTensor) else np.asarray(q, dtype=float).ravel()
    return {
        "at": float(q @ (CELL_A * CELL_T)),
        "az": float(q @ (CELL_A * CELL_Z)),
        "tz": float(q @ (CELL_T * CELL_Z)),
    }
