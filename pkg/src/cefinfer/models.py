"""Unnormalized log-posteriors for the five prior/likelihood combinations.

Hypotheses are points of the parameter cube: 7 nested-conditional coordinates
(see ``tables.PARAM_NAMES``) or, for the marginal model, 3 coordinates
(q_T, q_Z|T, q_Z|notT). Densities are taken with respect to the flat measure
on that cube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import infotheory as it
from .maxent import solve_covariance_constraints, solve_marginal_constraint
from .tables import (
    MARGINAL_PARAM_NAMES,
    PARAM_NAMES,
    FreqTensor,
    TableError,
    assemble_joint,
    assemble_marginal,
    tz_margin,
)

JOINT = "joint"
MARGINAL = "marginal"
LATENT = "latent"
PARTIAL = "partial"
SENSITIVITY = "sensitivity"
TAGS = (JOINT, MARGINAL, LATENT, PARTIAL, SENSITIVITY)

# long names used in prose / figures
CASE_LABELS = {
    JOINT: "JointFull",
    MARGINAL: "MarginalLow",
    LATENT: "LatentLow",
    PARTIAL: "PartialInfo",
    SENSITIVITY: "Sensitivity",
}


@dataclass(frozen=True)
class ModelCase:
    tag: str
    qbar: FreqTensor | None = None
    alpha: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown model {self.tag!r}; expected one of {TAGS}")
        if self.tag == PARTIAL:
            if self.qbar is None:
                raise ValueError("partial model needs qbar, an (a, z) tensor")
            if self.qbar.axis_names != ("a", "z"):
                raise TableError(f"qbar must be over (a, z), got {self.qbar.axis_names}")
        if self.tag == SENSITIVITY and (self.alpha is None or self.delta is None):
            raise ValueError("sensitivity model needs alpha and delta")

    @classmethod
    def joint(cls):
        return cls(JOINT)

    @classmethod
    def marginal(cls):
        return cls(MARGINAL)

    @classmethod
    def latent(cls):
        return cls(LATENT)

    @classmethod
    def partial(cls, qbar: FreqTensor):
        return cls(PARTIAL, qbar=qbar)

    @classmethod
    def sensitivity(cls, alpha: float, delta: float):
        return cls(SENSITIVITY, alpha=float(alpha), delta=float(delta))

    @property
    def dim(self) -> int:
        return 3 if self.tag == MARGINAL else 7

    @property
    def param_names(self) -> tuple[str, ...]:
        return MARGINAL_PARAM_NAMES if self.tag == MARGINAL else PARAM_NAMES

    @property
    def data_axes(self) -> tuple[str, ...]:
        return ("a", "t", "z") if self.tag == JOINT else ("t", "z")

    def reference(self) -> FreqTensor | None:
        """The maxent reference qhat of the CEF prior, if the case has one."""
        if self.tag == PARTIAL:
            return solve_marginal_constraint(self.qbar).qhat
        if self.tag == SENSITIVITY:
            return solve_covariance_constraints(self.alpha, self.delta).qhat
        return None


def _check_hypothesis(case: ModelCase, h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape != (case.dim,):
        raise TableError(f"{case.tag} model needs {case.dim} coordinates, got shape {h.shape}")
    return h


def check_data(case: ModelCase, data: FreqTensor) -> FreqTensor:
    """Return the data tensor the likelihood of ``case`` is evaluated on."""
    if case.tag == JOINT:
        if data.axis_names != ("a", "t", "z"):
            raise TableError(f"joint model needs (a, t, z) data, got {data.axis_names}")
        return data
    if case.tag == PARTIAL:
        return tz_margin(data)
    if data.axis_names != ("t", "z"):
        raise TableError(f"{case.tag} model needs (t, z) data, got {data.axis_names}")
    return data


def hypothesis_tensor(case: ModelCase, h) -> FreqTensor:
    h = _check_hypothesis(case, h)
    return assemble_marginal(h) if case.tag == MARGINAL else assemble_joint(h)


def log_prior(case: ModelCase, h) -> float:
    q = hypothesis_tensor(case, h)
    if case.tag in (JOINT, LATENT, MARGINAL):
        return it.shannon_entropy(q)
    return -it.relative_entropy(q, case.reference())


def log_likelihood(case: ModelCase, h, data: FreqTensor, n: float) -> float:
    p = check_data(case, data)
    q = hypothesis_tensor(case, h)
    if case.tag not in (JOINT, MARGINAL):
        q = tz_margin(q)
    return it.multinomial_loglik(p, q, n)


def log_posterior(case: ModelCase, h, data: FreqTensor, n: float) -> float:
    lp = log_prior(case, h)
    if lp == -math.inf:
        return -math.inf
    return lp + log_likelihood(case, h, data, n)


# ---------------------------------------------------------------------------
# fast scalar path used by the optimizers and samplers


def _xlogx(x: float) -> float:
    return x * math.log(x) if x > 0.0 else 0.0


def _cells7(th: Sequence[float]) -> tuple[float, ...]:
    qa, qta, qtna, z1, z2, z3, z4 = th
    qna = 1.0 - qa
    at, ant = qa * qta, qa * (1.0 - qta)
    nat, nant = qna * qtna, qna * (1.0 - qtna)
    return (
        at * z1, at * (1.0 - z1),
        ant * z2, ant * (1.0 - z2),
        nat * z3, nat * (1.0 - z3),
        nant * z4, nant * (1.0 - z4),
    )


def _cells3(th: Sequence[float]) -> tuple[float, ...]:
    qt, z1, z2 = th
    return (qt * z1, qt * (1.0 - z1), (1.0 - qt) * z2, (1.0 - qt) * (1.0 - z2))


def _kl_term(p: Sequence[float], q: Sequence[float], plogp: float) -> float:
    # sum p log(p/q) given precomputed sum p log p
    s = plogp
    for pk, qk in zip(p, q):
        if pk > 0.0:
            if qk <= 0.0:
                return math.inf
            s -= pk * math.log(qk)
    return max(s, 0.0)


def make_log_posterior(case: ModelCase, data: FreqTensor, n: float) -> Callable[[Sequence[float]], float]:
    """Compile log_posterior(case, ., data, n) into a closure over plain floats.

    The closure does no input validation; callers keep points inside the cube.
    """
    p = check_data(case, data)
    pv = tuple(float(x) for x in p.flat())
    plogp = sum(_xlogx(x) for x in pv)
    n = float(n)
    tag = case.tag
    ref = case.reference()
    if ref is not None:
        logref = tuple(math.log(x) if x > 0 else -math.inf for x in ref.flat())

    if tag == MARGINAL:
        def f(th):
            q = _cells3(th)
            prior = -sum(_xlogx(x) for x in q)
            kl = _kl_term(pv, q, plogp)
            return -math.inf if kl == math.inf else prior - n * kl
        return f

    if tag == JOINT:
        def f(th):
            q = _cells7(th)
            prior = -sum(_xlogx(x) for x in q)
            kl = _kl_term(pv, q, plogp)
            return -math.inf if kl == math.inf else prior - n * kl
        return f

    def loglik(q):
        m = (q[0] + q[4], q[1] + q[5], q[2] + q[6], q[3] + q[7])
        kl = _kl_term(pv, m, plogp)
        return -math.inf if kl == math.inf else -n * kl

    if tag == LATENT:
        def f(th):
            q = _cells7(th)
            ll = loglik(q)
            return ll if ll == -math.inf else ll - sum(_xlogx(x) for x in q)
        return f

    # CEF prior: -KL(q || qhat) = H[q] + q . log qhat
    def f(th):
        q = _cells7(th)
        prior = 0.0
        for qk, lk in zip(q, logref):
            if qk > 0.0:
                if lk == -math.inf:
                    return -math.inf
                prior -= qk * (math.log(qk) - lk)
        ll = loglik(q)
        return ll if ll == -math.inf else prior + ll
    return f


def plug_in_point(case: ModelCase, data: FreqTensor) -> np.ndarray:
    """Data-frequency coordinates, with undefined conditionals set to 0.5.

    For cases whose data lack the confounder the (t, z) rates are copied to
    both confounder levels and q_A, q_T|. are set from the data margin.
    """
    p = check_data(case, data)
    f = p.freqs
    if case.tag == JOINT:
        qa = f.sum(axis=(1, 2))
        qat = f.sum(axis=2)
        th = [qa[0]]
        th += [qat[i, 0] / qa[i] if qa[i] > 0 else 0.5 for i in (0, 1)]
        th += [f[i, j, 0] / qat[i, j] if qat[i, j] > 0 else 0.5 for i in (0, 1) for j in (0, 1)]
        return np.array(th)
    qt = f.sum(axis=1)
    rates = [f[j, 0] / qt[j] if qt[j] > 0 else 0.5 for j in (0, 1)]
    if case.tag == MARGINAL:
        return np.array([qt[0], *rates])
    return np.array([0.5, qt[0], qt[0], rates[0], rates[1], rates[0], rates[1]])


# ---------------------------------------------------------------------------
# vectorized path: arrays of hypotheses with the coordinates on the last axis


def _xlogx_array(x: np.ndarray) -> np.ndarray:
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, x * np.log(safe), 0.0)


def joint_cells_array(th: np.ndarray) -> np.ndarray:
    qa, qta, qtna, z1, z2, z3, z4 = np.moveaxis(th, -1, 0)
    at, ant = qa * qta, qa * (1 - qta)
    nat, nant = (1 - qa) * qtna, (1 - qa) * (1 - qtna)
    return np.stack([at * z1, at * (1 - z1), ant * z2, ant * (1 - z2),
                     nat * z3, nat * (1 - z3), nant * z4, nant * (1 - z4)], axis=-1)


def marginal_cells_array(th: np.ndarray) -> np.ndarray:
    qt, z1, z0 = np.moveaxis(th, -1, 0)
    return np.stack([qt * z1, qt * (1 - z1), (1 - qt) * z0, (1 - qt) * (1 - z0)], axis=-1)


def _loglik_array(p: np.ndarray, q: np.ndarray, n: float, plogp: float) -> np.ndarray:
    mask = p > 0
    qs = q[..., mask]
    with np.errstate(divide="ignore"):
        cross = np.sum(p[mask] * np.log(qs), axis=-1)
    out = n * (cross - plogp)
    return np.where(np.all(qs > 0, axis=-1), np.minimum(out, 0.0), -np.inf)


def make_log_posterior_array(case: ModelCase, data: FreqTensor, n: float) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized log_posterior over an array of hypotheses (last axis = coordinates)."""
    p = check_data(case, data).flat()
    plogp = float(np.sum(_xlogx_array(p)))
    n = float(n)
    ref = case.reference()

    def f(th):
        th = np.asarray(th, dtype=float)
        q = marginal_cells_array(th) if case.tag == MARGINAL else joint_cells_array(th)
        if ref is None:
            prior = -np.sum(_xlogx_array(q), axis=-1)
        else:
            r = ref.flat()
            bad = np.any((q > 0) & (r == 0), axis=-1)
            with np.errstate(divide="ignore"):
                logr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), 0.0)
            prior = -np.sum(_xlogx_array(q), axis=-1) + np.sum(q * logr, axis=-1)
            prior = np.where(bad, -np.inf, prior)
        if case.tag in (JOINT, MARGINAL):
            qd = q
        else:
            qd = q[..., :4] + q[..., 4:]
        return prior + _loglik_array(p, qd, n, plogp)

    return f
