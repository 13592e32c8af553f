"""Binary contingency tables, frequency tensors and nested-conditional coordinates.

Cells are stored in lexicographic (a, t, z) order with the positive level
(code +1) first, so a 3-axis tensor has shape (2, 2, 2) and index 0 on any
axis means A, T or Z respectively.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

CODES = np.array([1.0, -1.0])
AXIS_NAMES = ("a", "t", "z")
DEFAULT_LEVELS = {
    "a": ("A", "notA"),
    "t": ("T", "notT"),
    "z": ("Z", "notZ"),
}
PARAM_NAMES = (
    "q_A",
    "q_T|A",
    "q_T|notA",
    "q_Z|A,T",
    "q_Z|A,notT",
    "q_Z|notA,T",
    "q_Z|notA,notT",
)
MARGINAL_PARAM_NAMES = ("q_T", "q_Z|T", "q_Z|notT")

SUM_TOL = 1e-12


class TableError(ValueError):
    """Malformed table input (bad shape, negative counts, missing cells)."""


class UndefinedConditionalError(ArithmeticError):
    """A conditional frequency was requested on a zero-mass event."""

    def __init__(self, message: str, parameters: Sequence[str] = ()):
        super().__init__(message)
        self.parameters = tuple(parameters)


@dataclass(frozen=True)
class BinaryAxis:
    name: str
    levels: tuple[str, str]

    def __post_init__(self):
        if self.name not in AXIS_NAMES:
            raise TableError(f"unknown axis {self.name!r}; expected one of {AXIS_NAMES}")
        if len(self.levels) != 2 or self.levels[0] == self.levels[1]:
            raise TableError(f"axis {self.name!r} needs two distinct levels, got {self.levels!r}")
        object.__setattr__(self, "levels", tuple(self.levels))

    def index(self, level) -> int:
        """Array index (0 or 1) of a level given as a label or a +1/-1 code."""
        if isinstance(level, str):
            if level in self.levels:
                return self.levels.index(level)
            # case-insensitive fallback, e.g. "a" for "A"
            lowered = [lv.lower() for lv in self.levels]
            if level.lower() in lowered:
                return lowered.index(level.lower())
            raise TableError(f"level {level!r} not in axis {self.name!r} {self.levels!r}")
        if level in (1, True):
            return 0
        if level == -1:
            return 1
        raise TableError(f"level code must be +1 or -1, got {level!r}")

    @classmethod
    def default(cls, name: str) -> "BinaryAxis":
        return cls(name, DEFAULT_LEVELS[name])


def _make_axes(axes) -> tuple[BinaryAxis, ...]:
    out = tuple(ax if isinstance(ax, BinaryAxis) else BinaryAxis.default(ax) for ax in axes)
    names = [ax.name for ax in out]
    if len(out) not in (2, 3):
        raise TableError(f"tables need 2 or 3 axes, got {len(out)}")
    if len(set(names)) != len(names):
        raise TableError(f"duplicate axes {names}")
    if names != sorted(names, key=AXIS_NAMES.index):
        raise TableError(f"axes must be in canonical (a, t, z) order, got {names}")
    return out


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CountTable:
    axes: tuple[BinaryAxis, ...]
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        axes = _make_axes(self.axes)
        counts = np.asarray(self.counts)
        if counts.size != 2 ** len(axes):
            raise TableError(f"{len(axes)} axes need {2 ** len(axes)} counts, got {counts.size}")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise TableError("counts must be integers")
        counts = counts.astype(np.int64).reshape((2,) * len(axes))
        if np.any(counts < 0):
            raise TableError("counts must be non-negative")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "counts", _frozen(counts))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def axis_names(self) -> tuple[str, ...]:
        return tuple(ax.name for ax in self.axes)

    def flat(self) -> list[int]:
        return [int(c) for c in self.counts.ravel()]


@dataclass(frozen=True)
class FreqTensor:
    axes: tuple[BinaryAxis, ...]
    freqs: np.ndarray = field(repr=False)

    def __post_init__(self):
        axes = _make_axes(self.axes)
        freqs = np.asarray(self.freqs, dtype=float)
        if freqs.size != 2 ** len(axes):
            raise TableError(f"{len(axes)} axes need {2 ** len(axes)} cells, got {freqs.size}")
        freqs = freqs.reshape((2,) * len(axes))
        if not np.all(np.isfinite(freqs)):
            raise TableError("frequencies must be finite")
        if np.any(freqs < 0) or np.any(freqs > 1):
            raise TableError("frequencies must lie in [0, 1]")
        if abs(freqs.sum() - 1.0) > SUM_TOL * 10:
            raise TableError(f"frequencies sum to {freqs.sum():.17g}, not 1")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "freqs", _frozen(freqs))

    @property
    def axis_names(self) -> tuple[str, ...]:
        return tuple(ax.name for ax in self.axes)

    def axis(self, name: str) -> BinaryAxis:
        for ax in self.axes:
            if ax.name == name:
                return ax
        raise TableError(f"axis {name!r} not present in {self.axis_names}")

    def flat(self) -> np.ndarray:
        return self.freqs.ravel()

    @classmethod
    def from_flat(cls, values, axes=("a", "t", "z")) -> "FreqTensor":
        return cls(tuple(axes), np.asarray(values, dtype=float))

    @classmethod
    def uniform(cls, axes=("a", "t", "z")) -> "FreqTensor":
        k = 2 ** len(axes)
        return cls(tuple(axes), np.full(k, 1.0 / k))


def normalize(table: CountTable) -> FreqTensor:
    total = table.total
    if total < 1:
        raise TableError("cannot normalize a table with zero total")
    return FreqTensor(table.axes, table.counts / total)


def marginalize(f: FreqTensor, drop_axis: str) -> FreqTensor:
    names = f.axis_names
    if drop_axis not in names:
        raise TableError(f"axis {drop_axis!r} not present in {names}")
    if len(names) != 3:
        raise TableError("marginalize expects a 3-axis tensor")
    i = names.index(drop_axis)
    freqs = f.freqs.sum(axis=i)
    freqs = freqs / freqs.sum()
    return FreqTensor(tuple(ax for ax in f.axes if ax.name != drop_axis), freqs)


def _event_index(f: FreqTensor, event: Mapping[str, object]) -> tuple:
    idx: list = [slice(None)] * len(f.axes)
    for name, level in event.items():
        ax = f.axis(name)
        idx[f.axis_names.index(name)] = ax.index(level)
    return tuple(idx)


def conditional(f: FreqTensor, target: tuple[str, object], given: Mapping[str, object] | None = None) -> float:
    """Frequency of ``target`` (axis, level) within the event ``given``.

    Levels may be labels ("T", "notA") or codes (+1, -1).
    """
    given = dict(given or {})
    name, level = target
    if name in given:
        raise TableError(f"axis {name!r} appears in both target and condition")
    denom = float(f.freqs[_event_index(f, given)].sum())
    if denom <= 0.0:
        raise UndefinedConditionalError(f"conditioning event {given!r} has zero frequency", [repr(given)])
    num = float(f.freqs[_event_index(f, {**given, name: level})].sum())
    return num / denom


def assemble_joint(theta) -> FreqTensor:
    """Build q_{a,t,z} = q_{z|a,t} q_{t|a} q_a from the 7 nested-conditional coordinates."""
    return FreqTensor(("a", "t", "z"), joint_cells(theta))


def joint_cells(theta) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    if th.shape != (7,):
        raise TableError(f"joint hypothesis needs 7 coordinates, got shape {th.shape}")
    if np.any(th < 0) or np.any(th > 1):
        raise TableError("coordinates must lie in [0, 1]")
    qa, qt_a, qt_na, qz_at, qz_ant, qz_nat, qz_nant = th
    pa = np.array([qa, 1 - qa])
    pt = np.array([[qt_a, 1 - qt_a], [qt_na, 1 - qt_na]])
    pz1 = np.array([[qz_at, qz_ant], [qz_nat, qz_nant]])
    pz = np.stack([pz1, 1 - pz1], axis=-1)
    return pa[:, None, None] * pt[:, :, None] * pz


def assemble_marginal(theta) -> FreqTensor:
    """Build q_{t,z} = q_{z|t} q_t from (q_T, q_{Z|T}, q_{Z|notT})."""
    th = np.asarray(theta, dtype=float)
    if th.shape != (3,):
        raise TableError(f"marginal hypothesis needs 3 coordinates, got shape {th.shape}")
    if np.any(th < 0) or np.any(th > 1):
        raise TableError("coordinates must lie in [0, 1]")
    qt, qz_t, qz_nt = th
    cells = np.array([[qt * qz_t, qt * (1 - qz_t)], [(1 - qt) * qz_nt, (1 - qt) * (1 - qz_nt)]])
    return FreqTensor(("t", "z"), cells)


def decompose(f: FreqTensor) -> np.ndarray:
    """Inverse of :func:`assemble_joint`; raises if any conditioning margin is zero."""
    if f.axis_names != ("a", "t", "z"):
        raise TableError(f"decompose expects (a, t, z) axes, got {f.axis_names}")
    q = f.freqs
    qa = q.sum(axis=(1, 2))
    qat = q.sum(axis=2)
    bad = []
    theta = np.empty(7)
    theta[0] = qa[0]
    for k, i in ((1, 0), (2, 1)):
        if qa[i] > 0:
            theta[k] = qat[i, 0] / qa[i]
        else:
            bad.append(PARAM_NAMES[k])
    for k, (i, j) in zip(range(3, 7), ((0, 0), (0, 1), (1, 0), (1, 1))):
        if qat[i, j] > 0:
            theta[k] = q[i, j, 0] / qat[i, j]
        else:
            bad.append(PARAM_NAMES[k])
    if bad:
        raise UndefinedConditionalError(
            "zero-probability conditioning margin for " + ", ".join(bad), bad
        )
    return np.clip(theta, 0.0, 1.0)


def decompose_marginal(f: FreqTensor) -> np.ndarray:
    if f.axis_names != ("t", "z"):
        raise TableError(f"expected (t, z) axes, got {f.axis_names}")
    q = f.freqs
    qt = q.sum(axis=1)
    bad = [MARGINAL_PARAM_NAMES[k + 1] for k in (0, 1) if qt[k] <= 0]
    if bad:
        raise UndefinedConditionalError("zero-probability conditioning margin for " + ", ".join(bad), bad)
    return np.array([qt[0], q[0, 0] / qt[0], q[1, 0] / qt[1]])


def tz_margin(f: FreqTensor) -> FreqTensor:
    """The (t, z) margin of a 3-axis tensor; 2-axis (t, z) tensors pass through."""
    if f.axis_names == ("t", "z"):
        return f
    return marginalize(f, "a")


# ---------------------------------------------------------------------------
# file formats


def read_csv(path) -> CountTable:
    """Read ``a,t,z,count`` (or ``t,z,count``) rows, one per cell."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TableError(f"{path}: empty file") from None
        if header[-1] != "count" or tuple(header[:-1]) not in (("a", "t", "z"), ("t", "z")):
            raise TableError(f"{path}: header must be a,t,z,count or t,z,count; got {','.join(header)}")
        names = header[:-1]
        rows = [r for r in reader if r and any(x.strip() for x in r)]

    # positive level is whichever label is the default one, else first seen
    seen: dict[str, list[str]] = {nm: [] for nm in names}
    for r in rows:
        if len(r) != len(header):
            raise TableError(f"{path}: row {r!r} has {len(r)} fields, expected {len(header)}")
        for nm, v in zip(names, r):
            v = v.strip()
            if v not in seen[nm]:
                seen[nm].append(v)
    axes = []
    for nm in names:
        labels = seen[nm]
        if len(labels) != 2:
            raise TableError(f"{path}: axis {nm!r} must have exactly two levels, found {labels}")
        pos, neg = DEFAULT_LEVELS[nm]
        if set(labels) == {pos, neg}:
            axes.append(BinaryAxis(nm, (pos, neg)))
        else:
            axes.append(BinaryAxis(nm, (labels[0], labels[1])))

    counts = np.full((2,) * len(names), -1, dtype=np.int64)
    for r in rows:
        idx = tuple(ax.index(v.strip()) for ax, v in zip(axes, r))
        if counts[idx] != -1:
            raise TableError(f"{path}: duplicate cell {r[:-1]!r}")
        try:
            c = int(r[-1])
        except ValueError:
            raise TableError(f"{path}: count {r[-1]!r} is not an integer") from None
        counts[idx] = c
        if c < 0:
            raise TableError(f"{path}: negative count in row {r!r}")
    if np.any(counts == -1):
        missing = [tuple(axes[k].levels[i] for k, i in enumerate(ix)) for ix in np.argwhere(counts == -1)]
        raise TableError(f"{path}: missing cells {missing}")
    return CountTable(tuple(axes), counts)


def write_csv(table: CountTable, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*table.axis_names, "count"])
        for idx in np.ndindex(*table.counts.shape):
            w.writerow([*(ax.levels[i] for ax, i in zip(table.axes, idx)), int(table.counts[idx])])


def _axes_from_json(doc) -> tuple[BinaryAxis, ...]:
    names = doc.get("axes")
    if not isinstance(names, list):
        raise TableError("JSON table needs an 'axes' list")
    levels = doc.get("levels", {})
    return tuple(BinaryAxis(nm, tuple(levels.get(nm, DEFAULT_LEVELS.get(nm, ("+", "-"))))) for nm in names)


def read_json(path):
    """Read a JSON table; returns a CountTable for integer ``counts`` or a FreqTensor for ``freqs``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise TableError(f"{path}: invalid JSON ({exc})") from None
    axes = _axes_from_json(doc)
    if "counts" in doc:
        table = CountTable(axes, np.asarray(doc["counts"]))
        if "n" in doc and int(doc["n"]) != table.total:
            raise TableError(f"{path}: n={doc['n']} does not match count total {table.total}")
        return table
    if "freqs" in doc:
        return FreqTensor(axes, np.asarray(doc["freqs"], dtype=float))
    raise TableError(f"{path}: JSON table needs 'counts' or 'freqs'")


def read_table(path):
    """Dispatch on extension: ``.csv`` or ``.json``."""
    path = Path(path)
    if not path.exists():
        raise TableError(f"{path}: no such file")
    if path.suffix.lower() == ".csv":
        return read_csv(path)
    if path.suffix.lower() == ".json":
        return read_json(path)
    raise TableError(f"{path}: unsupported table format {path.suffix!r}")


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("cefinfer") / "data" / name))


def load_fixture(name: str):
    return read_table(fixture_path(name))
