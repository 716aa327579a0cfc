"""
Choquet regularizer evaluation
------------------------------
Two independent routes to Phi_h(law): the quantile route (primary) and the
survival-function route used as a cross-check. Differential entropy is
provided for comparison with the regularizers.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Final

import numpy as np

from choquetrl.dist import Discrete, Distribution, GridQuantile, Normal, ShiftedExponential, Uniform
from choquetrl.distortion import Distortion
from choquetrl.errors import DiscontinuityError, UnsupportedKindError
from choquetrl.quadrature import integrate

TRUNCATION_TOL: Final = 1e-9
JUMP_MATCH_TOL: Final = 1e-12
_FIRST_TAIL: Final = 1e-4
_TAIL_SHRINK: Final = 1e-2
_SMALLEST_TAIL: Final = 1e-300


class Route(str, enum.Enum):
    QUANTILE = "quantile"
    SURVIVAL = "survival"


@dataclass(frozen=True)
class RegularizerValue:
    value: float
    route: Route
    est_abs_error: float

    def to_dict(self) -> dict[str, object]:
        return {"phi": self.value, "route": self.route.value, "abs_err": self.est_abs_error}


def _check_common_jumps(d: Distortion, law: Distribution) -> None:
    levels = law.jump_levels
    for p, _ in d.jumps:
        if any(abs((1.0 - p) - level) <= JUMP_MATCH_TOL for level in levels):
            raise DiscontinuityError(
                f"distortion and quantile both jump at p={p!r}; the Choquet integral is ambiguous there"
            )


def phi_quantile(d: Distortion, law: Distribution) -> RegularizerValue:
    """Phi_h(law) = int_0^1 Q(1 - p) dh(p)."""
    pieces = d.pieces
    if pieces is not None:
        _check_common_jumps(d, law)
        terms = [
            piece.slope * law.integrated_quantile(1.0 - piece.right, 1.0 - piece.left)
            for piece in pieces
        ]
        terms += [size * law.quantile(1.0 - p) for p, size in d.jumps]
        value = math.fsum(terms)
        return RegularizerValue(value, Route.QUANTILE, 4 * np.finfo(float).eps * math.fsum(map(abs, terms)))

    if not d.is_continuous:
        raise UnsupportedKindError(f"{d.tag} is discontinuous without a step derivative")

    if isinstance(law, Discrete):
        # Stieltjes sum over the constant stretches of Q
        levels = np.concatenate(([0.0], law._levels))
        mass = d.h(1.0 - levels[:-1]) - d.h(1.0 - levels[1:])
        terms = np.array(law.atoms) * mass
        value = math.fsum(terms)
        return RegularizerValue(value, Route.QUANTILE, 4 * np.finfo(float).eps * float(np.sum(np.abs(terms))))

    breakpoints = {*d.breakpoints, *(1.0 - k for k in law.kinks)}
    value, error = integrate(lambda p: law.quantile_upper(p) * d.hprime(p), 0.0, 1.0, breakpoints)
    return RegularizerValue(value, Route.QUANTILE, error)


def _survival_breakpoints(law: Distribution) -> set[float]:
    if isinstance(law, Discrete):
        return set(law.atoms)
    if isinstance(law, GridQuantile):
        return set(law.q)
    kinks = np.array(law.kinks)
    return set(law.quantile(kinks).tolist()) if kinks.size else set()


def phi_survival(d: Distortion, law: Distribution) -> RegularizerValue:
    """Phi_h(law) = int h(S(x)) dx with S(x) = law([x, inf)), split at 0."""
    h_one = d.h(1.0)

    def integrand(x):
        return d.h(np.clip(law.sf(x), 0.0, 1.0)) - h_one * (x < 0.0)

    lo, hi = law.support
    marks = _survival_breakpoints(law) | {0.0}
    if math.isfinite(lo) and math.isfinite(hi):
        value, error = integrate(integrand, lo, hi, marks)
        return RegularizerValue(value, Route.SURVIVAL, error)

    tail = _FIRST_TAIL
    previous = None
    while True:
        left = lo if math.isfinite(lo) else law.quantile(tail)
        right = hi if math.isfinite(hi) else law.quantile_upper(tail)
        value, error = integrate(integrand, left, right, marks)
        if previous is not None:
            change = abs(value - previous)
            if change < TRUNCATION_TOL or tail * _TAIL_SHRINK < _SMALLEST_TAIL:
                return RegularizerValue(value, Route.SURVIVAL, error + change)
        previous = value
        tail *= _TAIL_SHRINK


def differential_entropy(law: Distribution) -> float:
    """Shannon differential entropy -int f log f, in nats."""
    if isinstance(law, Uniform):
        return math.log(law.b - law.a)
    if isinstance(law, Normal):
        return 0.5 * math.log(2.0 * math.pi * math.e * law.var)
    if isinstance(law, ShiftedExponential):
        return 1.0 - math.log(law.rate)
    if isinstance(law, GridQuantile) and not law.jump_levels:
        # quantile form: int_0^1 log Q'(p) dp on each linear stretch
        widths = np.diff(law._P)
        rises = np.diff(law._Q)
        used = widths > 0.0
        if np.any(rises[used] <= 0.0):
            raise UnsupportedKindError("grid law has atoms; differential entropy is -inf")
        return float(np.sum(widths[used] * np.log(rises[used] / widths[used])))
    raise UnsupportedKindError(f"differential entropy needs an absolutely continuous law, got {law.kind}")
