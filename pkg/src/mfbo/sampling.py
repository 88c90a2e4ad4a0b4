"""Space-filling initial designs on box domains.

All designs are generated in the unit cube and mapped affinely onto the
problem domain; the unit-cube image is kept so that downstream surrogates
can work in normalized coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lower, upper]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"need lower < upper per dimension, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def to_unit(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / self.width

    def from_unit(self, u) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=float) * self.width

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


UNIT_INTERVAL = Domain(np.zeros(1), np.ones(1))


def unit_cube(dim: int) -> Domain:
    return Domain(np.zeros(dim), np.ones(dim))


@dataclass(frozen=True)
class Design:
    """Design points in unit-cube coordinates plus a high-fidelity mask.

    Every point is a low-fidelity point; points with ``high[i]`` set are
    evaluated at both fidelities.
    """

    domain: Domain
    unit: np.ndarray
    high: np.ndarray = field(default=None)

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.unit, dtype=float))
        object.__setattr__(self, "unit", u)
        mask = np.zeros(len(u), dtype=bool) if self.high is None else np.asarray(self.high, dtype=bool)
        if mask.shape != (len(u),):
            raise ValueError("high mask must have one entry per point")
        object.__setattr__(self, "high", mask)

    def __len__(self):
        return len(self.unit)

    @property
    def points(self) -> np.ndarray:
        return self.domain.from_unit(self.unit)

    @property
    def unit_low(self) -> np.ndarray:
        return self.unit

    @property
    def unit_high(self) -> np.ndarray:
        return self.unit[self.high]

    @property
    def n_high(self) -> int:
        return int(self.high.sum())

    def fidelity_tags(self) -> list[set[str]]:
        return [{"low", "high"} if h else {"low"} for h in self.high]


def lhs(domain: Domain, n: int, seed: int | np.random.Generator | None = None) -> Design:
    """Latin hypercube design with exactly one point per stratum and axis."""
    if n < 1:
        raise ValueError("empty design: n must be >= 1")
    rng = np.random.default_rng(seed)
    d = domain.dim
    u = np.empty((n, d))
    for j in range(d):
        u[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return Design(domain, u)


def nested_subset(design: Design, n_high: int, seed: int | np.random.Generator | None = None) -> Design:
    """Tag ``n_high`` of the design's points as high fidelity.

    Greedy maximin: a random first point, then repeatedly the point whose
    distance to the already selected set is largest (lowest index on ties).
    """
    n = len(design)
    if n_high > n:
        raise ValueError(f"n_high={n_high} exceeds design size {n}")
    if n_high < 0:
        raise ValueError("n_high must be non-negative")
    mask = np.zeros(n, dtype=bool)
    if n_high == 0:
        return Design(design.domain, design.unit, mask)
    rng = np.random.default_rng(seed)
    u = design.unit
    first = int(rng.integers(n))
    mask[first] = True
    dmin = np.linalg.norm(u - u[first], axis=1)
    for _ in range(n_high - 1):
        cand = np.where(mask, -np.inf, dmin)
        nxt = int(np.argmax(cand))
        mask[nxt] = True
        dmin = np.minimum(dmin, np.linalg.norm(u - u[nxt], axis=1))
    return Design(design.domain, design.unit, mask)


def nested_lhs(domain: Domain, n_low: int, n_high: int, seed=None) -> Design:
    rng = np.random.default_rng(seed)
    return nested_subset(lhs(domain, n_low, rng), n_high, rng)
