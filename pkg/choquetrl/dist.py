"""
Quantile-based distributions
----------------------------
Every law on the real line is carried by its left quantile ``Q(p)`` on
``(0, 1]``, its right quantile ``Q+(p)`` on ``[0, 1)`` and the integrated
quantile ``G(u) = int_0^u Q``. Moments, expected shortfalls, convex-order
checks and comonotone sums are all computed from those three functions.
"""
from __future__ import annotations

import enum
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Any, ClassVar, Final, Mapping, Sequence

import numpy as np
from scipy import special

from choquetrl.errors import DomainError, UnsupportedKindError
from choquetrl.quadrature import integrate

PROB_TOL: Final = 1e-12
MEAN_TOL: Final = 1e-9
ORDER_MARGIN: Final = 1e-10
_BISECT_STEPS: Final = 60
TABLE_TOL: Final = 1e-7
TABLE_LOGIT_SPAN: Final = 34.0
TABLE_MAX_NODES: Final = 1 << 17

logger = logging.getLogger(__name__)


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _scalar_or_array(values: np.ndarray, like):
    if np.ndim(like) == 0:
        return float(values)
    return values


def tail_dense_levels(count: int) -> np.ndarray:
    """Open grid on (0, 1) that clusters near both ends."""
    k = np.arange(count, dtype=float)
    return 0.5 * (1.0 - np.cos(np.pi * (k + 0.5) / count))


class Distribution(ABC):
    """A law on the reals represented through its quantile functions."""

    kind: ClassVar[str] = ""

    # -- per-kind primitives (vectorized) ----------------------------------
    @abstractmethod
    def _quantile(self, u: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _cumulative(self, u: np.ndarray) -> np.ndarray:
        """int_0^u Q(r) dr."""

    def _right_quantile(self, u: np.ndarray) -> np.ndarray:
        return self._quantile(u)

    def _quantile_upper(self, p: np.ndarray) -> np.ndarray:
        return self._quantile(1.0 - p)

    def _sf(self, x: np.ndarray) -> np.ndarray:
        # F(x) = sup{u : Q(u) <= x}, found by bisection on the quantile
        lo = np.zeros_like(x)
        hi = np.ones_like(x)
        for _ in range(_BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            below = self._quantile(mid) <= x
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 1.0 - lo

    @property
    @abstractmethod
    def mean(self) -> float: ...

    @property
    @abstractmethod
    def variance(self) -> float: ...

    @property
    def kinks(self) -> tuple[float, ...]:
        """Levels in (0, 1) where Q is not smooth."""
        return ()

    @property
    def jump_levels(self) -> tuple[float, ...]:
        """Levels in (0, 1) where Q jumps (gaps in the support)."""
        return ()

    @property
    @abstractmethod
    def support(self) -> tuple[float, float]: ...

    @abstractmethod
    def affine(self, shift: float, scale: float) -> "Distribution":
        """Law of ``shift + scale * X`` for ``scale > 0``."""

    @abstractmethod
    def to_spec(self) -> dict[str, Any]: ...

    # -- public evaluation -------------------------------------------------
    def quantile(self, p):
        u = _as_array(p)
        if np.any((u <= 0.0) | (u > 1.0)):
            raise DomainError("left quantile is defined on (0, 1]")
        return _scalar_or_array(self._quantile(u), p)

    def right_quantile(self, p):
        u = _as_array(p)
        if np.any((u < 0.0) | (u >= 1.0)):
            raise DomainError("right quantile is defined on [0, 1)")
        return _scalar_or_array(self._right_quantile(u), p)

    def quantile_upper(self, p):
        """``Q(1 - p)`` evaluated without cancellation for small ``p``."""
        return _scalar_or_array(self._quantile_upper(_as_array(p)), p)

    def integrated_quantile(self, a, b):
        lo, hi = _as_array(a), _as_array(b)
        if np.any((lo < 0.0) | (hi > 1.0) | (lo > hi)):
            raise DomainError("integration levels must satisfy 0 <= a <= b <= 1")
        values = self._cumulative(hi) - self._cumulative(lo)
        if np.ndim(values) == 0:
            return float(values)
        return values

    def sf(self, x):
        """Survival ``P(X >= x)`` up to atoms."""
        return _scalar_or_array(self._sf(_as_array(x)), x)

    @property
    def std(self) -> float:
        return math.sqrt(max(self.variance, 0.0))

    @property
    def is_continuous_quantile(self) -> bool:
        return not self.jump_levels

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if count < 1:
            raise DomainError("sample count must be at least 1")
        # 53-bit midpoints keep U strictly inside (0, 1)
        u = (np.floor(rng.random(count) * 2.0**53) + 0.5) / 2.0**53
        return self._quantile(u)


# ---------------------------------------------------------------------------
# Discrete family
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Discrete(Distribution):
    atoms: tuple[float, ...]
    probs: tuple[float, ...]

    kind: ClassVar[str] = "discrete"
    expected_size: ClassVar[int | None] = None

    def __post_init__(self):
        x = _as_array(self.atoms).ravel()
        w = _as_array(self.probs).ravel()
        if x.size == 0 or x.size != w.size:
            raise DomainError("atoms and probs must be non-empty and of equal length")
        if not np.all(np.isfinite(x)) or np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise DomainError("atoms must be finite and probabilities non-negative")
        total = float(w.sum())
        if abs(total - 1.0) > PROB_TOL * max(1.0, x.size):
            raise DomainError(f"probabilities sum to {total!r}, not 1")
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order] / total
        merged_x: list[float] = []
        merged_w: list[float] = []
        for atom, weight in zip(x, w):
            if weight == 0.0:
                continue
            if merged_x and atom == merged_x[-1]:
                merged_w[-1] += weight
            else:
                merged_x.append(float(atom))
                merged_w.append(float(weight))
        if self.expected_size is not None and len(merged_x) != self.expected_size:
            raise DomainError(f"{self.kind} needs exactly {self.expected_size} distinct atoms")
        object.__setattr__(self, "atoms", tuple(merged_x))
        object.__setattr__(self, "probs", tuple(merged_w))

    @cached_property
    def _x(self) -> np.ndarray:
        return np.array(self.atoms)

    @cached_property
    def _levels(self) -> np.ndarray:
        levels = np.cumsum(self.probs)
        levels[-1] = 1.0
        return levels

    @cached_property
    def _prefix(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self._x * np.array(self.probs))))

    def _quantile(self, u):
        idx = np.clip(np.searchsorted(self._levels, u, side="left"), 0, self._x.size - 1)
        return self._x[idx]

    def _right_quantile(self, u):
        idx = np.clip(np.searchsorted(self._levels, u, side="right"), 0, self._x.size - 1)
        return self._x[idx]

    def _cumulative(self, u):
        idx = np.clip(np.searchsorted(self._levels, u, side="left"), 0, self._x.size - 1)
        start = np.concatenate(([0.0], self._levels))[idx]
        return self._prefix[idx] + self._x[idx] * (u - start)

    def _sf(self, x):
        starts = np.concatenate(([0.0], self._levels))
        return 1.0 - starts[np.searchsorted(self._x, x, side="left")]

    @property
    def mean(self) -> float:
        return math.fsum(a * w for a, w in zip(self.atoms, self.probs))

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum(w * (a - m) ** 2 for a, w in zip(self.atoms, self.probs))

    @property
    def kinks(self):
        return tuple(float(c) for c in self._levels[:-1])

    jump_levels = kinks

    @property
    def support(self):
        return self.atoms[0], self.atoms[-1]

    def affine(self, shift, scale):
        if scale <= 0.0:
            raise DomainError("affine scale must be positive")
        return discrete([shift + scale * a for a in self.atoms], self.probs)

    def to_spec(self):
        return {"kind": self.kind, "atoms": list(self.atoms), "probs": list(self.probs)}


@dataclass(frozen=True)
class TwoPoint(Discrete):
    kind: ClassVar[str] = "two-point"
    expected_size: ClassVar[int | None] = 2

    @classmethod
    def of(cls, low: float, high: float, p_high: float) -> "TwoPoint":
        return cls((low, high), (1.0 - p_high, p_high))


@dataclass(frozen=True)
class ThreePoint(Discrete):
    kind: ClassVar[str] = "three-point"
    expected_size: ClassVar[int | None] = 3


def discrete(atoms: Sequence[float], probs: Sequence[float]) -> Discrete:
    """Build a discrete law, promoted to TwoPoint/ThreePoint by atom count."""
    law = Discrete(tuple(atoms), tuple(probs))
    promoted = {2: TwoPoint, 3: ThreePoint}.get(len(law.atoms))
    return promoted(law.atoms, law.probs) if promoted else law


def dirac(c: float) -> Discrete:
    return Discrete((float(c),), (1.0,))


# ---------------------------------------------------------------------------
# Continuous families
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Uniform(Distribution):
    a: float
    b: float

    kind: ClassVar[str] = "uniform"

    def __post_init__(self):
        if not self.b > self.a:
            raise DomainError("Uniform needs a < b")

    def _quantile(self, u):
        return self.a + (self.b - self.a) * u

    def _cumulative(self, u):
        return self.a * u + 0.5 * (self.b - self.a) * u * u

    def _sf(self, x):
        return np.clip((self.b - x) / (self.b - self.a), 0.0, 1.0)

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    @property
    def variance(self):
        return (self.b - self.a) ** 2 / 12.0

    @property
    def support(self):
        return self.a, self.b

    def affine(self, shift, scale):
        if scale <= 0.0:
            raise DomainError("affine scale must be positive")
        return Uniform(shift + scale * self.a, shift + scale * self.b)

    def to_spec(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Normal(Distribution):
    mu: float
    var: float

    kind: ClassVar[str] = "normal"

    def __post_init__(self):
        if not self.var > 0.0:
            raise DomainError("Normal needs a positive variance")

    @cached_property
    def _sigma(self) -> float:
        return math.sqrt(self.var)

    def _quantile(self, u):
        return self.mu + self._sigma * special.ndtri(u)

    def _quantile_upper(self, p):
        return self.mu - self._sigma * special.ndtri(p)

    def _cumulative(self, u):
        z = special.ndtri(u)
        density = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        return self.mu * u - self._sigma * np.where(np.isfinite(z), density, 0.0)

    def _sf(self, x):
        return special.ndtr((self.mu - x) / self._sigma)

    @property
    def mean(self):
        return self.mu

    @property
    def variance(self):
        return self.var

    @property
    def support(self):
        return -math.inf, math.inf

    def affine(self, shift, scale):
        if scale <= 0.0:
            raise DomainError("affine scale must be positive")
        return Normal(shift + scale * self.mu, scale * scale * self.var)

    def to_spec(self):
        return {"kind": self.kind, "mu": self.mu, "var": self.var}


@dataclass(frozen=True)
class ShiftedExponential(Distribution):
    shift: float
    rate: float

    kind: ClassVar[str] = "shifted-exponential"

    def __post_init__(self):
        if not self.rate > 0.0:
            raise DomainError("ShiftedExponential needs a positive rate")

    def _quantile(self, u):
        with np.errstate(divide="ignore"):
            return self.shift - np.log1p(-u) / self.rate

    def _quantile_upper(self, p):
        with np.errstate(divide="ignore"):
            return self.shift - np.log(p) / self.rate

    def _cumulative(self, u):
        tail = 1.0 - u
        return self.shift * u + (special.xlogy(tail, tail) + u) / self.rate

    def _sf(self, x):
        return np.where(x <= self.shift, 1.0, np.exp(-self.rate * (x - self.shift)))

    @property
    def mean(self):
        return self.shift + 1.0 / self.rate

    @property
    def variance(self):
        return 1.0 / self.rate**2

    @property
    def support(self):
        return self.shift, math.inf

    def affine(self, shift, scale):
        if scale <= 0.0:
            raise DomainError("affine scale must be positive")
        return ShiftedExponential(shift + scale * self.shift, self.rate / scale)

    def to_spec(self):
        return {"kind": self.kind, "shift": self.shift, "rate": self.rate}


# ---------------------------------------------------------------------------
# Tabulated and composite laws
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GridQuantile(Distribution):
    """Quantile function interpolated linearly in p between nodes.

    A repeated p value encodes a jump of Q; nodes missing at p=0 or p=1 are
    extended flat (an atom at the end value).
    """

    p: tuple[float, ...]
    q: tuple[float, ...]

    kind: ClassVar[str] = "grid"

    def __post_init__(self):
        ps, qs = _as_array(self.p).ravel(), _as_array(self.q).ravel()
        if ps.size < 1 or ps.size != qs.size:
            raise DomainError("grid needs matching, non-empty p and q columns")
        if not (np.all(np.isfinite(ps)) and np.all(np.isfinite(qs))):
            raise DomainError("grid values must be finite")
        if ps[0] < 0.0 or ps[-1] > 1.0 or np.any(np.diff(ps) < 0.0):
            raise DomainError("grid levels must be sorted inside [0, 1]")
        if np.any(np.diff(qs) < 0.0):
            raise DomainError("grid quantiles must be non-decreasing")
        if ps[0] > 0.0:
            ps, qs = np.concatenate(([0.0], ps)), np.concatenate(([qs[0]], qs))
        if ps[-1] < 1.0:
            ps, qs = np.concatenate((ps, [1.0])), np.concatenate((qs, [qs[-1]]))
        nodes: list[tuple[float, float]] = []
        for level, value in zip(ps, qs):
            if nodes and nodes[-1] == (level, value):
                continue
            # more than two nodes on one level: keep the outer pair
            if len(nodes) >= 2 and nodes[-1][0] == level and nodes[-2][0] == level:
                nodes[-1] = (float(level), float(value))
                continue
            nodes.append((float(level), float(value)))
        if len(nodes) == 1:
            nodes.append((1.0, nodes[0][1]))
        object.__setattr__(self, "p", tuple(n[0] for n in nodes))
        object.__setattr__(self, "q", tuple(n[1] for n in nodes))

    @cached_property
    def _P(self) -> np.ndarray:
        return np.array(self.p)

    @cached_property
    def _Q(self) -> np.ndarray:
        return np.array(self.q)

    @cached_property
    def _prefix(self) -> np.ndarray:
        widths = np.diff(self._P)
        areas = 0.5 * widths * (self._Q[:-1] + self._Q[1:])
        return np.concatenate(([0.0], np.cumsum(areas)))

    def _interp(self, u, right: np.ndarray) -> np.ndarray:
        j = np.clip(right, 1, self._P.size - 1)
        p0, p1 = self._P[j - 1], self._P[j]
        q0, q1 = self._Q[j - 1], self._Q[j]
        width = p1 - p0
        safe = np.where(width > 0.0, width, 1.0)
        return np.where(width > 0.0, q0 + (u - p0) * (q1 - q0) / safe, q1), j

    def _quantile(self, u):
        first = np.searchsorted(self._P, u, side="left")
        at_node = (first < self._P.size) & (self._P[np.minimum(first, self._P.size - 1)] == u)
        value, _ = self._interp(u, first)
        return np.where(at_node, self._Q[np.minimum(first, self._P.size - 1)], value)

    def _right_quantile(self, u):
        value, _ = self._interp(u, np.searchsorted(self._P, u, side="right"))
        return value

    def _cumulative(self, u):
        value, j = self._interp(u, np.searchsorted(self._P, u, side="right"))
        p0, q0 = self._P[j - 1], self._Q[j - 1]
        return self._prefix[j - 1] + 0.5 * (u - p0) * (q0 + value)

    def _sf(self, x):
        k = np.searchsorted(self._Q, x, side="right") - 1
        inner = np.clip(k, 0, self._Q.size - 2)
        q0, q1 = self._Q[inner], self._Q[inner + 1]
        p0, p1 = self._P[inner], self._P[inner + 1]
        gap = np.where(q1 > q0, q1 - q0, 1.0)
        cdf = np.where(q1 > q0, p0 + (x - q0) / gap * (p1 - p0), p1)
        cdf = np.where(k < 0, 0.0, np.where(k >= self._Q.size - 1, 1.0, cdf))
        return 1.0 - cdf

    @property
    def mean(self):
        return float(self._prefix[-1])

    @property
    def variance(self):
        c = self._Q - self.mean
        widths = np.diff(self._P)
        return float(np.sum(widths * (c[:-1] ** 2 + c[:-1] * c[1:] + c[1:] ** 2)) / 3.0)

    @property
    def kinks(self):
        return tuple(sorted({lvl for lvl in self.p if 0.0 < lvl < 1.0}))

    @property
    def jump_levels(self):
        return tuple(
            self.p[i]
            for i in range(len(self.p) - 1)
            if self.p[i] == self.p[i + 1] and self.q[i] != self.q[i + 1] and 0.0 < self.p[i] < 1.0
        )

    @property
    def support(self):
        return self.q[0], self.q[-1]

    def affine(self, shift, scale):
        if scale <= 0.0:
            raise DomainError("affine scale must be positive")
        return GridQuantile(self.p, tuple(shift + scale * v for v in self.q))

    def to_spec(self):
        return {"kind": self.kind, "p": list(self.p), "q": list(self.q)}


@dataclass(frozen=True)
class ComonotoneSum(Distribution):
    """Exact quantile sum of laws that share no closed family."""

    parts: tuple[Distribution, ...]

    kind: ClassVar[str] = "comonotone-sum"

    def _quantile(self, u):
        return sum(part._quantile(u) for part in self.parts)

    def _right_quantile(self, u):
        return sum(part._right_quantile(u) for part in self.parts)

    def _quantile_upper(self, p):
        return sum(part._quantile_upper(p) for part in self.parts)

    def _cumulative(self, u):
        return sum(part._cumulative(u) for part in self.parts)

    @property
    def mean(self):
        return math.fsum(part.mean for part in self.parts)

    @cached_property
    def variance(self):
        m = self.mean
        value, _ = integrate(lambda u: (self._quantile(u) - m) ** 2, 0.0, 1.0, self.kinks)
        return value

    @property
    def kinks(self):
        return tuple(sorted({k for part in self.parts for k in part.kinks}))

    @property
    def jump_levels(self):
        return tuple(sorted({k for part in self.parts for k in part.jump_levels}))

    @property
    def support(self):
        lows, highs = zip(*(part.support for part in self.parts))
        return sum(lows), sum(highs)

    def affine(self, shift, scale):
        if scale <= 0.0:
            raise DomainError("affine scale must be positive")
        head, *rest = self.parts
        return ComonotoneSum((head.affine(shift, scale), *(part.affine(0.0, scale) for part in rest)))

    def to_spec(self):
        return {"kind": self.kind, "parts": [part.to_spec() for part in self.parts]}

    def to_grid(self, size: int = 1025, tol: float = TABLE_TOL) -> GridQuantile:
        """Tabulated copy, for consumers that need a GridQuantile."""
        return from_table(*quantile_table(self, size, tol))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------
def mean(law: Distribution) -> float:
    return law.mean


def variance(law: Distribution) -> float:
    return law.variance


def _open_level(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise DomainError(f"level {p!r} must lie in (0, 1)")


def es(law: Distribution, p: float) -> float:
    """Expected shortfall: mean of the upper tail beyond level ``p``."""
    _open_level(p)
    return law.integrated_quantile(p, 1.0) / (1.0 - p)


def es_left(law: Distribution, p: float) -> float:
    _open_level(p)
    return law.integrated_quantile(0.0, p) / p


def tail_mean_eps(law: Distribution, eps: float) -> float:
    _open_level(eps)
    return law.integrated_quantile(1.0 - eps, 1.0) / eps


def iqr(law: Distribution, alpha: float) -> float:
    """Inter-quantile difference ``Q+(alpha) - Q(1 - alpha)``."""
    if not 0.5 <= alpha < 1.0:
        raise DomainError("alpha must lie in [1/2, 1)")
    return law.right_quantile(alpha) - law.quantile(1.0 - alpha)


def wasserstein_to_dirac(law: Distribution, alpha: float) -> float:
    """Smallest asymmetric W1 distance from ``law`` to a point mass."""
    _open_level(alpha)
    return alpha * law.integrated_quantile(alpha, 1.0) - (1.0 - alpha) * law.integrated_quantile(0.0, alpha)


def _require_discrete(law: Distribution) -> Discrete:
    if not isinstance(law, Discrete):
        raise UnsupportedKindError(f"pairwise formulas need a discrete law, got {law.kind}")
    return law


def gini_mean_difference(law: Distribution) -> float:
    d = _require_discrete(law)
    x, w = np.array(d.atoms), np.array(d.probs)
    return 0.5 * float(w @ np.abs(x[:, None] - x[None, :]) @ w)


def maxiance(law: Distribution) -> float:
    d = _require_discrete(law)
    x, w = np.array(d.atoms), np.array(d.probs)
    return float(w @ np.maximum(x[:, None], x[None, :]) @ w) - d.mean


def mean_preserving_spread(law: Discrete, index: int, left: float, right: float) -> Discrete:
    """Split atom ``index`` into ``x - left`` and ``x + right`` keeping the mean."""
    if left <= 0.0 or right <= 0.0:
        raise DomainError("spread offsets must be positive")
    atoms, probs = list(law.atoms), list(law.probs)
    x, w = atoms.pop(index), probs.pop(index)
    atoms += [x - left, x + right]
    probs += [w * right / (left + right), w * left / (left + right)]
    return discrete(atoms, probs)


class ConvexOrder(str, enum.Enum):
    YES = "yes"
    NO = "no"
    INCONCLUSIVE = "inconclusive"


def convex_order_leq(first: Distribution, second: Distribution, grid: int = 1000) -> ConvexOrder:
    """Test ``first <=cx second`` through upper integrated quantiles."""
    if grid < 2:
        raise DomainError("convex-order grid needs at least 2 intervals")
    if abs(first.mean - second.mean) > MEAN_TOL:
        return ConvexOrder.NO
    exact = isinstance(first, Discrete) and isinstance(second, Discrete)
    levels = set(first.kinks) | set(second.kinks)
    if not exact:
        levels |= set(np.arange(1, grid, dtype=float) / grid)
    points = np.array(sorted(levels), dtype=float)
    if points.size == 0:
        return ConvexOrder.YES if exact else ConvexOrder.INCONCLUSIVE
    upper_first = first.mean - first._cumulative(points)
    upper_second = second.mean - second._cumulative(points)
    gap = upper_first - upper_second
    if np.max(gap) > ORDER_MARGIN:
        return ConvexOrder.NO
    if exact or np.all(gap <= -ORDER_MARGIN):
        return ConvexOrder.YES
    return ConvexOrder.INCONCLUSIVE


def _is_dirac(law: Distribution) -> bool:
    return isinstance(law, Discrete) and len(law.atoms) == 1


def quantile_add(first: Distribution, second: Distribution) -> Distribution:
    """Comonotone sum: the law whose quantile is ``Q1 + Q2``."""
    if _is_dirac(first):
        return second.affine(first.atoms[0], 1.0)
    if _is_dirac(second):
        return first.affine(second.atoms[0], 1.0)
    same = type(first) is type(second)
    if same and isinstance(first, Uniform):
        return Uniform(first.a + second.a, first.b + second.b)
    if same and isinstance(first, Normal):
        return Normal(first.mu + second.mu, (first._sigma + second._sigma) ** 2)
    if same and isinstance(first, ShiftedExponential):
        return ShiftedExponential(first.shift + second.shift, 1.0 / (1.0 / first.rate + 1.0 / second.rate))
    if isinstance(first, Discrete) and isinstance(second, Discrete):
        levels = np.union1d(first._levels, second._levels)
        levels = levels[levels > 0.0]
        atoms = first._quantile(levels) + second._quantile(levels)
        probs = np.diff(np.concatenate(([0.0], levels)))
        return discrete(atoms, probs)
    if isinstance(first, GridQuantile) and isinstance(second, GridQuantile):
        nodes: list[tuple[float, float]] = []
        for level in np.union1d(first._P, second._P):
            values = []
            if level > 0.0:
                values.append(first._quantile(level) + second._quantile(level))
            if level < 1.0:
                values.append(first._right_quantile(level) + second._right_quantile(level))
            for value in values:
                node = (float(level), float(value))
                if not nodes or nodes[-1] != node:
                    nodes.append(node)
        return GridQuantile(tuple(n[0] for n in nodes), tuple(n[1] for n in nodes))
    parts: list[Distribution] = []
    for law in (first, second):
        parts.extend(law.parts if isinstance(law, ComonotoneSum) else (law,))
    return ComonotoneSum(tuple(parts))


def sample(law: Distribution, rng: np.random.Generator, count: int) -> np.ndarray:
    return law.sample(rng, count)


def _table_values(law: Distribution, p: np.ndarray) -> np.ndarray:
    upper = p > 0.5
    q = np.empty_like(p)
    q[~upper] = law._quantile(p[~upper])
    # 1 - p is exact above one half
    q[upper] = law._quantile_upper(1.0 - p[upper])
    return q


def _logit_midpoints(p: np.ndarray) -> np.ndarray:
    t = special.logit(p)
    return special.expit(0.5 * (t[:-1] + t[1:]))


def quantile_table(law: Distribution, size: int = 1025, tol: float = TABLE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """(p, q) nodes that a GridQuantile can re-ingest.

    Discrete and grid laws are emitted exactly, a uniform law on ``size``
    evenly spaced nodes. Other laws start from ``size`` logit-spaced levels
    and cells are bisected in logit until the interpolated quantile is
    within ``tol`` of the true one in L2(0, 1), so that Phi_h of the table is
    off by at most ``tol * ||h'||``.
    """
    if isinstance(law, Discrete):
        levels = np.concatenate(([0.0], law._levels))
        p = np.repeat(levels, 2)[1:-1]
        q = np.repeat(law._x, 2)
        return p, q
    if isinstance(law, GridQuantile):
        return law._P.copy(), law._Q.copy()
    if size < 3:
        raise DomainError("quantile table needs at least 3 nodes")
    if not tol > 0.0:
        raise DomainError("quantile table tolerance must be positive")
    if isinstance(law, Uniform):
        p = np.linspace(0.0, 1.0, size)
        return p, law.a + (law.b - law.a) * p

    budget = tol * tol
    p = np.union1d(special.expit(np.linspace(-TABLE_LOGIT_SPAN, TABLE_LOGIT_SPAN, size)), law.kinks)
    p = p[(p > 0.0) & (p < 1.0)]
    jumps = np.array(law.jump_levels, dtype=float)
    while True:
        q = _table_values(law, p)
        start = q.copy()
        at_jump = np.isin(p, jumps)
        start[at_jump] = law._right_quantile(p[at_jump])
        mid = _logit_midpoints(p)
        width = np.diff(p)
        share = (mid - p[:-1]) / width
        error = _table_values(law, mid) - (start[:-1] + share * (q[1:] - start[:-1]))
        cells = error * error * width
        total = float(np.sum(cells))
        split = (cells > budget / (4.0 * cells.size)) & (mid > p[:-1]) & (mid < p[1:])
        if total <= budget or not split.any():
            break
        if p.size >= TABLE_MAX_NODES:
            logger.warning("quantile table for %s stopped at %d nodes with L2 error %.3g", law.kind, p.size, math.sqrt(total))
            break
        p = np.union1d(p, mid[split])

    ps = np.concatenate(([0.0], np.repeat(p, np.where(at_jump, 2, 1)), [1.0]))
    pairs = np.column_stack((q, start)).ravel()
    keep = np.column_stack((np.ones_like(at_jump), at_jump)).ravel()
    qs = np.concatenate(([q[0]], pairs[keep], [q[-1]]))
    return ps, qs


def from_table(p: Sequence[float], q: Sequence[float]) -> GridQuantile:
    return GridQuantile(tuple(float(v) for v in p), tuple(float(v) for v in q))


_FAMILIES: Final[dict[str, type[Distribution]]] = {
    cls.kind: cls
    for cls in (Discrete, TwoPoint, ThreePoint, Uniform, Normal, ShiftedExponential, GridQuantile)
}


def available_distributions() -> list[str]:
    return [*_FAMILIES, "dirac", "comonotone-sum"]


def distribution_from_spec(spec: Mapping[str, Any]) -> Distribution:
    """Build a distribution from ``{"kind": tag, **params}``."""
    params = dict(spec)
    tag = params.pop("kind", None)
    if tag == "dirac":
        return dirac(float(params.pop("c", params.pop("value", 0.0))))
    if tag == "comonotone-sum":
        parts = [distribution_from_spec(p) for p in params.pop("parts", [])]
        if len(parts) < 2:
            raise DomainError("comonotone-sum needs at least two parts")
        result = parts[0]
        for part in parts[1:]:
            result = quantile_add(result, part)
        return result
    family = _FAMILIES.get(tag)
    if family is None:
        raise UnsupportedKindError(f"Unknown distribution: {tag}")
    try:
        if family in (Discrete, TwoPoint, ThreePoint):
            law = family(tuple(map(float, params.pop("atoms"))), tuple(map(float, params.pop("probs"))))
        elif family is GridQuantile:
            law = from_table(params.pop("p"), params.pop("q"))
    except KeyError as exc:
        raise DomainError(f"{tag} is missing parameter {exc.args[0]!r}") from None
    if family not in (Discrete, TwoPoint, ThreePoint, GridQuantile):
        try:
            law = family(**{k: float(v) for k, v in params.items()})
        except TypeError as exc:
            raise DomainError(f"bad parameters for {tag}: {exc}") from None
        params = {}
    if params:
        raise DomainError(f"unknown parameters for {tag}: {sorted(params)}")
    return law
