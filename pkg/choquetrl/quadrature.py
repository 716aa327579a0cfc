"""
Panel-wise quadrature
---------------------
Integration used by the Choquet and norm computations. The range is split at
every supplied breakpoint and each panel goes to ``scipy.integrate.quad``,
whose Gauss-Kronrod nodes never touch panel endpoints, so integrands that
blow up at 0 or 1 (log and normal-quantile singularities) need no special
casing.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, Final, Iterable

import numpy as np
import scipy.integrate as spi

from choquetrl.errors import NumericalError

logger = logging.getLogger(__name__)

DEFAULT_TOL: Final = 1e-12
QUAD_LIMIT: Final = 200


def panel_edges(a: float, b: float, breakpoints: Iterable[float] = ()) -> list[float]:
    inner = {float(x) for x in breakpoints if a < x < b}
    return [a, *sorted(inner), b]


def _scalar(f: Callable[[np.ndarray], np.ndarray]) -> Callable[[float], float]:
    def call(x: float) -> float:
        value = float(np.asarray(f(np.array([x], dtype=float)), dtype=float).reshape(-1)[0])
        if not math.isfinite(value):
            raise NumericalError(f"non-finite integrand at {x!r}")
        return value

    return call


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    breakpoints: Iterable[float] = (),
    tol: float = DEFAULT_TOL,
) -> tuple[float, float]:
    """Integrate a vectorized ``f`` over ``[a, b]``.

    Returns ``(value, abs_error)`` where the error is the sum of the
    per-panel ``quad`` error estimates.
    """
    if not a < b:
        return 0.0, 0.0
    g = _scalar(f)
    values: list[float] = []
    error = 0.0
    edges = panel_edges(a, b, breakpoints)
    for left, right in zip(edges[:-1], edges[1:]):
        value, abserr, *rest = spi.quad(
            g, left, right, epsabs=tol, epsrel=max(tol, 1e-10), limit=QUAD_LIMIT, full_output=1
        )
        if len(rest) > 1:
            # ier > 0: subdivision limit or roundoff
            logger.debug("quad on [%r, %r]: %s", left, right, rest[1])
        if not math.isfinite(value):
            raise NumericalError(f"non-finite integral on panel [{left!r}, {right!r}]")
        values.append(value)
        error += abserr
    return math.fsum(values), error
