"""
Distortion functions
--------------------
Concave distortions h on [0, 1] with h(0) = h(1) = 0, their right-derivatives
and L2 norms. Each kind registers under a string tag so configs and the CLI
can name it; ``get_distortion`` is the factory.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, ClassVar, Final, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import special

from choquetrl.dist import Discrete, Distribution, GridQuantile, distribution_from_spec, tail_dense_levels
from choquetrl.errors import DomainError, UnsupportedKindError
from choquetrl.quadrature import integrate

MEAN_RTOL: Final = 1e-8
SLOPE_TOL: Final = 1e-7
TABULATION_NODES: Final = 2048


class Piece(NamedTuple):
    """Interval ``[left, right)`` on which h' equals ``slope``."""

    left: float
    right: float
    slope: float


class Distortion(ABC):
    """A distortion h with right-derivative h'."""

    tag: ClassVar[str] = ""

    @abstractmethod
    def _h(self, p: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _hprime(self, p: np.ndarray) -> np.ndarray: ...

    @property
    def pieces(self) -> tuple[Piece, ...] | None:
        """Constant pieces of h', or None when h' is not a step function."""
        return None

    @property
    def breakpoints(self) -> tuple[float, ...]:
        if self.pieces is None:
            return ()
        return tuple(piece.left for piece in self.pieces[1:])

    @property
    def jumps(self) -> tuple[tuple[float, float], ...]:
        """Interior discontinuities of h as ``(p, h(p) - h(p-))``."""
        return ()

    @property
    def is_continuous(self) -> bool:
        return not self.jumps

    @cached_property
    def l2_norm_sq(self) -> float:
        if self.pieces is not None:
            return math.fsum(piece.slope**2 * (piece.right - piece.left) for piece in self.pieces)
        return l2_norm_sq_numeric(self)

    @abstractmethod
    def to_spec(self) -> dict[str, Any]: ...

    def h(self, p):
        values = self._h(np.asarray(p, dtype=float))
        return float(values) if np.ndim(p) == 0 else values

    def hprime(self, p):
        with np.errstate(divide="ignore"):
            values = self._hprime(np.asarray(p, dtype=float))
        return float(values) if np.ndim(p) == 0 else values

    def __call__(self, p):
        return self.h(p)


class StepDerivative(Distortion):
    """Distortions whose h' is piecewise constant."""

    @property
    @abstractmethod
    def pieces(self) -> tuple[Piece, ...]: ...

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lefts = np.array([piece.left for piece in self.pieces])
        widths = np.array([piece.right - piece.left for piece in self.pieces])
        slopes = np.array([piece.slope for piece in self.pieces])
        return lefts, widths, slopes

    def _h(self, p):
        lefts, widths, slopes = self._table
        covered = np.clip(p[..., None] - lefts, 0.0, widths)
        return covered @ slopes

    def _hprime(self, p):
        lefts, _, slopes = self._table
        idx = np.searchsorted(lefts, p, side="right") - 1
        return slopes[np.clip(idx, 0, slopes.size - 1)]


def _steps(*pieces: tuple[float, float, float]) -> tuple[Piece, ...]:
    return tuple(Piece(*piece) for piece in pieces if piece[1] > piece[0])


# ---------------------------------------------------------------------------
# Catalog kinds
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class EpsGreedyBernoulli(StepDerivative):
    eps: float

    tag: ClassVar[str] = "eps-greedy"

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise DomainError("eps must lie in (0, 1)")

    @property
    def pieces(self):
        return _steps((0.0, self.eps, 1.0 - self.eps), (self.eps, 1.0, -self.eps))

    def _h(self, p):
        return np.minimum(p, self.eps) - self.eps * p

    @cached_property
    def l2_norm_sq(self):
        return self.eps * (1.0 - self.eps)

    def to_spec(self):
        return {"kind": self.tag, "eps": self.eps}


@dataclass(frozen=True)
class DiscreteUniform(StepDerivative):
    """h' is the upper quantile of {0: 1-eps; +-j: eps/(2n), j = 1..n}."""

    eps: float
    n: int

    tag: ClassVar[str] = "discrete-uniform"

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise DomainError("eps must lie in (0, 1)")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))

    @property
    def pieces(self):
        width = self.eps / (2 * self.n)
        top = [(i * width, (i + 1) * width, float(self.n - i)) for i in range(self.n)]
        bottom = [
            (1.0 - self.eps / 2 + i * width, 1.0 - self.eps / 2 + (i + 1) * width, -float(i + 1))
            for i in range(self.n)
        ]
        return _steps(*top, (self.eps / 2, 1.0 - self.eps / 2, 0.0), *bottom)

    @cached_property
    def l2_norm_sq(self):
        return self.eps * (self.n + 1) * (2 * self.n + 1) / 6.0

    def to_spec(self):
        return {"kind": self.tag, "eps": self.eps, "n": self.n}


@dataclass(frozen=True)
class CRE(Distortion):
    """Cumulative residual entropy, h(p) = -p log p."""

    tag: ClassVar[str] = "cre"

    def _h(self, p):
        return -special.xlogy(p, p)

    def _hprime(self, p):
        return -np.log(p) - 1.0

    @cached_property
    def l2_norm_sq(self):
        return 1.0

    def to_spec(self):
        return {"kind": self.tag}


@dataclass(frozen=True)
class GaussianScore(Distortion):
    """h' is the standard normal quantile at 1 - p."""

    tag: ClassVar[str] = "gaussian-score"

    def _h(self, p):
        z = special.ndtri(p)
        return np.where(np.isfinite(z), np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi), 0.0)

    def _hprime(self, p):
        return -special.ndtri(p)

    @cached_property
    def l2_norm_sq(self):
        return 1.0

    def to_spec(self):
        return {"kind": self.tag}


@dataclass(frozen=True)
class InterES(StepDerivative):
    """Difference between the upper ES at alpha and the lower ES at 1 - alpha."""

    alpha: float

    tag: ClassVar[str] = "inter-es"

    def __post_init__(self):
        if not 0.5 <= self.alpha < 1.0:
            raise DomainError("alpha must lie in [1/2, 1)")

    @property
    def pieces(self):
        a, tail = self.alpha, 1.0 - self.alpha
        return _steps((0.0, tail, 1.0 / tail), (tail, a, 0.0), (a, 1.0, -1.0 / tail))

    def _h(self, p):
        tail = 1.0 - self.alpha
        return np.minimum(p / tail, 1.0) + np.minimum((self.alpha - p) / tail, 0.0)

    @cached_property
    def l2_norm_sq(self):
        return 2.0 / (1.0 - self.alpha)

    def to_spec(self):
        return {"kind": self.tag, "alpha": self.alpha}


@dataclass(frozen=True)
class WassersteinSym(StepDerivative):
    tag: ClassVar[str] = "wasserstein-sym"

    @property
    def pieces(self):
        return _steps((0.0, 0.5, 1.0), (0.5, 1.0, -1.0))

    def _h(self, p):
        return np.minimum(p, 1.0 - p)

    @cached_property
    def l2_norm_sq(self):
        return 1.0

    def to_spec(self):
        return {"kind": self.tag}


@dataclass(frozen=True)
class WassersteinAsym(StepDerivative):
    alpha: float

    tag: ClassVar[str] = "wasserstein-asym"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")

    @property
    def pieces(self):
        a = self.alpha
        return _steps((0.0, 1.0 - a, a), (1.0 - a, 1.0, a - 1.0))

    def _h(self, p):
        a = self.alpha
        return np.where(p < 1.0 - a, a * p, (1.0 - a) * (1.0 - p))

    @cached_property
    def l2_norm_sq(self):
        return self.alpha * (1.0 - self.alpha)

    def to_spec(self):
        return {"kind": self.tag, "alpha": self.alpha}


@dataclass(frozen=True)
class Gini(Distortion):
    """Gini mean difference, h(p) = p - p^2."""

    tag: ClassVar[str] = "gini"

    def _h(self, p):
        return p - p * p

    def _hprime(self, p):
        return 1.0 - 2.0 * p

    @cached_property
    def l2_norm_sq(self):
        return 1.0 / 3.0

    def to_spec(self):
        return {"kind": self.tag}


@dataclass(frozen=True)
class PiecewiseLinear(StepDerivative):
    """Linear interpolation between (p, h) nodes.

    Repeated p values encode a jump of h; h is right-continuous there.
    """

    ps: tuple[float, ...]
    hs: tuple[float, ...]

    tag: ClassVar[str] = "piecewise"

    def __post_init__(self):
        ps = tuple(float(v) for v in self.ps)
        hs = tuple(float(v) for v in self.hs)
        if len(ps) < 2 or len(ps) != len(hs):
            raise DomainError("piecewise distortion needs at least two (p, h) nodes")
        if ps[0] != 0.0 or ps[-1] != 1.0 or any(b < a for a, b in zip(ps, ps[1:])):
            raise DomainError("nodes must be sorted and span exactly [0, 1]")
        if not all(math.isfinite(v) for v in hs):
            raise DomainError("node values must be finite")
        object.__setattr__(self, "ps", ps)
        object.__setattr__(self, "hs", hs)

    @cached_property
    def _nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.ps), np.array(self.hs)

    @property
    def pieces(self):
        return tuple(
            Piece(p0, p1, (h1 - h0) / (p1 - p0))
            for p0, p1, h0, h1 in zip(self.ps, self.ps[1:], self.hs, self.hs[1:])
            if p1 > p0
        )

    @property
    def jumps(self):
        return tuple(
            (p0, h1 - h0)
            for p0, p1, h0, h1 in zip(self.ps, self.ps[1:], self.hs, self.hs[1:])
            if p0 == p1 and h1 != h0 and 0.0 < p0 < 1.0
        )

    def _segment(self, p):
        ps, hs = self._nodes
        idx = np.clip(np.searchsorted(ps, p, side="right") - 1, 0, ps.size - 2)
        return ps[idx], ps[idx + 1], hs[idx], hs[idx + 1]

    def _h(self, p):
        p0, p1, h0, h1 = self._segment(p)
        width = p1 - p0
        safe = np.where(width > 0.0, width, 1.0)
        return np.where(width > 0.0, h0 + (p - p0) * (h1 - h0) / safe, h1)

    def _hprime(self, p):
        p0, p1, h0, h1 = self._segment(p)
        width = p1 - p0
        return np.where(width > 0.0, (h1 - h0) / np.where(width > 0.0, width, 1.0), np.nan)

    @classmethod
    def sampled(cls, fn: Callable[[np.ndarray], np.ndarray], grid: int = 2001) -> "PiecewiseLinear":
        ps = np.linspace(0.0, 1.0, grid)
        return cls(tuple(ps), tuple(np.asarray(fn(ps), dtype=float)))

    def to_spec(self):
        return {"kind": self.tag, "nodes": [[p, h] for p, h in zip(self.ps, self.hs)]}


@dataclass(frozen=True)
class FromQuantile(Distortion):
    """Distortion generated by a law: h'(p) = Q(1 - p) - m."""

    source: Distribution
    m: float

    tag: ClassVar[str] = "from-quantile"

    def _h(self, p):
        value = self.source._cumulative(np.ones_like(p)) - self.source._cumulative(1.0 - p) - self.m * p
        # endpoint values pinned to the boundary condition
        return np.where((p <= 0.0) | (p >= 1.0), 0.0, value)

    def _hprime(self, p):
        return self.source._quantile_upper(p) - self.m

    @property
    def pieces(self):
        if not isinstance(self.source, Discrete):
            return None
        levels = np.concatenate(([0.0], self.source._levels))
        return tuple(
            Piece(1.0 - hi, 1.0 - lo, atom - self.m)
            for lo, hi, atom in reversed(list(zip(levels[:-1], levels[1:], self.source.atoms)))
        )

    @property
    def breakpoints(self):
        return tuple(sorted(1.0 - k for k in self.source.kinks))

    @cached_property
    def l2_norm_sq(self):
        return self.source.variance + (self.source.mean - self.m) ** 2

    def to_spec(self):
        return {"kind": self.tag, "distribution": self.source.to_spec(), "m": self.m}


@dataclass(frozen=True)
class Scaled(Distortion):
    """Temperature-scaled distortion ``factor * base``."""

    base: Distortion
    factor: float

    tag: ClassVar[str] = "scaled"

    def __post_init__(self):
        if not self.factor > 0.0:
            raise DomainError("temperature factor must be positive")

    def _h(self, p):
        return self.factor * self.base._h(p)

    def _hprime(self, p):
        return self.factor * self.base._hprime(p)

    @property
    def pieces(self):
        if self.base.pieces is None:
            return None
        return tuple(Piece(pc.left, pc.right, self.factor * pc.slope) for pc in self.base.pieces)

    @property
    def breakpoints(self):
        return self.base.breakpoints

    @property
    def jumps(self):
        return tuple((p, self.factor * size) for p, size in self.base.jumps)

    @cached_property
    def l2_norm_sq(self):
        return self.factor**2 * self.base.l2_norm_sq

    def to_spec(self):
        return {**self.base.to_spec(), "scale": self.factor}


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------
def eval_h(d: Distortion, p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"h is defined on [0, 1], got {p!r}")
    return d.h(p)


def eval_hprime(d: Distortion, p: float) -> float:
    if not 0.0 <= p < 1.0:
        raise DomainError(f"h' is defined on [0, 1), got {p!r}")
    return d.hprime(p)


def l2_norm_sq_numeric(d: Distortion) -> float:
    value, _ = integrate(lambda p: d.hprime(p) ** 2, 0.0, 1.0, d.breakpoints)
    return value


def l2_norm(d: Distortion) -> float:
    norm_sq = d.l2_norm_sq
    return math.sqrt(norm_sq) if math.isfinite(norm_sq) else math.inf


@dataclass(frozen=True)
class ValidityReport:
    boundary_ok: bool
    concave_ok: bool
    nonneg_ok: bool

    @property
    def ok(self) -> bool:
        return self.boundary_ok and self.concave_ok and self.nonneg_ok

    def to_dict(self) -> dict[str, bool]:
        return {
            "boundary_ok": self.boundary_ok,
            "concave_ok": self.concave_ok,
            "nonneg_ok": self.nonneg_ok,
            "ok": self.ok,
        }


def validate(d: Distortion, grid_size: int = 1001) -> ValidityReport:
    """Check the regularizer conditions on a uniform grid plus breakpoints."""
    if grid_size < 3:
        raise DomainError("validation grid needs at least 3 points")
    special_points = [*d.breakpoints, *(p for p, _ in d.jumps)]
    grid = np.unique(np.concatenate((np.linspace(0.0, 1.0, grid_size), special_points)))
    # near-duplicate points only amplify round-off in the secant test
    grid = grid[np.concatenate(([True], np.diff(grid) > 1e-9))]
    hv = d.h(grid)
    scale = max(1.0, float(np.max(np.abs(hv))))

    boundary_ok = abs(d.h(0.0)) <= 1e-12 and abs(d.h(1.0)) <= 1e-12
    nonneg_ok = bool(np.all(hv >= -1e-12 * scale))

    derivative = d.hprime(grid[:-1])
    derivative_ok = not np.any(np.diff(derivative) > SLOPE_TOL * scale)
    secants = np.diff(hv) / np.diff(grid)
    secant_ok = not np.any(np.diff(secants) > SLOPE_TOL * scale * grid_size)
    return ValidityReport(boundary_ok, bool(derivative_ok and secant_ok), nonneg_ok)


def from_distribution(source: Distribution | Callable[[np.ndarray], np.ndarray], m: float) -> FromQuantile:
    """Distortion whose static optimizer is the location-scale family of ``source``."""
    if isinstance(source, Distribution):
        reference = source.mean
        if abs(m - reference) > MEAN_RTOL * max(1.0, abs(reference)):
            raise DomainError(f"mean {m!r} does not match the quantile integral {reference!r}")
        return FromQuantile(source, float(m))

    levels = tail_dense_levels(TABULATION_NODES)
    values = np.asarray(source(levels), dtype=float)
    if np.any(np.diff(values) < 0.0):
        raise DomainError("quantile function must be non-decreasing")
    table = GridQuantile(tuple(levels), tuple(values))
    reference, _ = integrate(lambda u: np.asarray(source(u), dtype=float), 0.0, 1.0, tol=1e-10)
    if abs(m - reference) > MEAN_RTOL * max(1.0, abs(reference)):
        raise DomainError(f"mean {m!r} does not match the quantile integral {reference!r}")
    return FromQuantile(table, table.mean)


def _nodes_of(d: Distortion) -> list[tuple[float, float]]:
    if isinstance(d, PiecewiseLinear):
        return list(zip(d.ps, d.hs))
    if d.pieces is None:
        raise UnsupportedKindError(f"{d.tag} has no finite breakpoint graph")
    jumps = dict(d.jumps)
    nodes = [(0.0, d.h(0.0))]
    for piece in d.pieces[1:]:
        p = piece.left
        right_value = d.h(p)
        if p in jumps:
            nodes.append((p, right_value - jumps[p]))
        nodes.append((p, right_value))
    nodes.append((1.0, d.h(1.0)))
    return nodes


def concave_envelope(d: Distortion) -> PiecewiseLinear:
    """Least concave majorant via the upper hull of the breakpoint graph."""
    hull: list[tuple[float, float]] = []
    for point in sorted(_nodes_of(d)):
        while len(hull) >= 2:
            (p0, h0), (p1, h1) = hull[-2], hull[-1]
            cross = (p1 - p0) * (point[1] - h0) - (h1 - h0) * (point[0] - p0)
            if cross < 0.0:
                break
            hull.pop()
        hull.append(point)
    return PiecewiseLinear(tuple(p for p, _ in hull), tuple(h for _, h in hull))


def iqr_indicator(alpha: float) -> PiecewiseLinear:
    """Inter-quantile range distortion, the indicator of [1 - alpha, alpha]."""
    if not 0.5 <= alpha < 1.0:
        raise DomainError("alpha must lie in [1/2, 1)")
    lo = 1.0 - alpha
    return PiecewiseLinear((0.0, lo, lo, alpha, alpha, 1.0), (0.0, 0.0, 1.0, 1.0, 0.0, 0.0))


def gcre_distortion(n: int, grid: int = 2001) -> PiecewiseLinear:
    """Sampled generalized CRE distortion p(-log p)^n / n!."""
    if n < 1:
        raise DomainError("order n must be at least 1")

    def fn(p):
        with np.errstate(divide="ignore", invalid="ignore"):
            values = p * (-np.log(p)) ** n / math.factorial(n)
        return np.where(p > 0.0, values, 0.0)

    return PiecewiseLinear.sampled(fn, grid)


def scaled(d: Distortion, lam: float) -> Distortion:
    if isinstance(d, Scaled):
        return Scaled(d.base, d.factor * lam)
    return Scaled(d, float(lam))


_REGISTRY: Final[dict[str, type[Distortion]]] = {
    cls.tag: cls
    for cls in (
        EpsGreedyBernoulli,
        DiscreteUniform,
        CRE,
        GaussianScore,
        InterES,
        WassersteinSym,
        WassersteinAsym,
        Gini,
        PiecewiseLinear,
        FromQuantile,
    )
}

CATALOG_TAGS: Final = tuple(tag for tag in _REGISTRY if tag not in ("piecewise", "from-quantile"))


def available_distortions() -> list[str]:
    return list(_REGISTRY)


def get_distortion(tag: str, **params: Any) -> Distortion:
    """Factory keyed by the distortion tag."""
    cls = _REGISTRY.get(tag)
    if cls is None:
        raise UnsupportedKindError(f"Unknown distortion: {tag}")
    if cls is PiecewiseLinear:
        nodes = params.pop("nodes", None)
        if nodes is None:
            raise DomainError("piecewise distortion needs nodes")
        ps, hs = zip(*((float(p), float(h)) for p, h in nodes))
        d: Distortion = PiecewiseLinear(ps, hs)
    elif cls is FromQuantile:
        spec = params.pop("distribution", None)
        if spec is None:
            raise DomainError("from-quantile distortion needs a distribution")
        source = spec if isinstance(spec, Distribution) else distribution_from_spec(spec)
        d = from_distribution(source, float(params.pop("m", source.mean)))
    else:
        try:
            d = cls(**params)
        except TypeError as exc:
            raise DomainError(f"bad parameters for {tag}: {exc}") from None
        params = {}
    if params:
        raise DomainError(f"unknown parameters for {tag}: {sorted(params)}")
    return d


def distortion_from_spec(spec: Mapping[str, Any]) -> Distortion:
    params = dict(spec)
    tag = params.pop("kind", None)
    factor = params.pop("scale", None)
    if tag is None:
        raise DomainError("distortion spec needs a kind")
    d = get_distortion(tag, **params)
    return scaled(d, float(factor)) if factor is not None else d


__all__: Sequence[str] = (
    "CATALOG_TAGS",
    "CRE",
    "DiscreteUniform",
    "Distortion",
    "EpsGreedyBernoulli",
    "FromQuantile",
    "GaussianScore",
    "Gini",
    "InterES",
    "Piece",
    "PiecewiseLinear",
    "Scaled",
    "StepDerivative",
    "ValidityReport",
    "WassersteinAsym",
    "WassersteinSym",
    "available_distortions",
    "concave_envelope",
    "distortion_from_spec",
    "eval_h",
    "eval_hprime",
    "from_distribution",
    "gcre_distortion",
    "get_distortion",
    "iqr_indicator",
    "l2_norm",
    "l2_norm_sq_numeric",
    "scaled",
    "validate",
)
