"""
Mean-variance constrained maximization
--------------------------------------
Closed-form maximizer of Phi_h over laws with mean m and standard deviation
s, a randomized falsification oracle for it, and the Glasser sharpness check
for the Gini regularizer.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Final, NamedTuple, Sequence

import numpy as np
from tqdm import tqdm

from choquetrl.choquet import phi_quantile
from choquetrl.dist import Distribution, GridQuantile, Normal, ShiftedExponential, Uniform, discrete, tail_dense_levels
from choquetrl.distortion import CRE, Distortion, FromQuantile, GaussianScore, Gini, Scaled, l2_norm
from choquetrl.errors import DegenerateError, DiscontinuityError, DomainError
from choquetrl.streams import substream

logger = logging.getLogger(__name__)

ORACLE_SLACK: Final = 1e-9
GLASSER_TOL: Final = 1e-10
DEGENERATE_VAR: Final = 1e-12
ORACLE_CHUNK: Final = 4096
SQRT3: Final = math.sqrt(3.0)


@dataclass(frozen=True)
class MVConstraint:
    m: float
    s: float

    def __post_init__(self):
        if not (math.isfinite(self.m) and math.isfinite(self.s)) or self.s <= 0.0:
            raise DomainError("constraint needs a finite mean and a positive standard deviation")


class StaticOptimum(NamedTuple):
    distribution: Distribution
    max_value: float


def _uniform(d, m, s, norm):
    return Uniform(m - SQRT3 * s, m + SQRT3 * s)


def _normal(d, m, s, norm):
    return Normal(m, s * s)


def _shifted_exponential(d, m, s, norm):
    return ShiftedExponential(m - s, 1.0 / s)


def _affine_source(d: FromQuantile, m, s, norm):
    return d.source.affine(m - s * d.m / norm, s / norm)


_CLOSED_FORMS: Final[dict[str, Callable[..., Distribution]]] = {
    Gini.tag: _uniform,
    GaussianScore.tag: _normal,
    CRE.tag: _shifted_exponential,
    FromQuantile.tag: _affine_source,
}


def _from_pieces(d: Distortion, m: float, s: float, norm: float) -> Distribution:
    atoms = [m + s * piece.slope / norm for piece in d.pieces]
    probs = [piece.right - piece.left for piece in d.pieces]
    return discrete(atoms, probs)


def _tabulated(d: Distortion, m: float, s: float, norm: float) -> Distribution:
    levels = tail_dense_levels(2048)
    values = m + s * d.hprime(1.0 - levels) / norm
    return GridQuantile(tuple(levels), tuple(np.maximum.accumulate(values)))


def maximize(d: Distortion, c: MVConstraint) -> StaticOptimum:
    """Law with quantile m + s h'(1-p) / ||h'|| and its value s ||h'||."""
    if isinstance(d, Scaled):
        inner = maximize(d.base, c)
        return StaticOptimum(inner.distribution, d.factor * inner.max_value)
    if not d.is_continuous:
        raise DiscontinuityError(f"{d.tag} is discontinuous; take its concave envelope first")
    norm = l2_norm(d)
    if not norm > 0.0 or not math.isfinite(norm):
        raise DegenerateError(f"||h'|| = {norm!r}; the maximization has no solution")

    builder = _CLOSED_FORMS.get(d.tag)
    if builder is None:
        builder = _from_pieces if d.pieces is not None else _tabulated
    law = builder(d, c.m, c.s, norm)
    return StaticOptimum(law, c.s * norm)


# ---------------------------------------------------------------------------
# Falsification oracle
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class OracleReport:
    trials: int
    atoms: int
    best_value: float
    bound: float
    margin: float
    best_index: int
    best_is_candidate: bool
    passed: bool

    def to_dict(self) -> dict[str, object]:
        return asdict(self)


def _standardized_trial(seed: int, index: int, atoms: int, m: float, s: float) -> tuple[np.ndarray, np.ndarray]:
    rng = substream(seed, index)
    while True:
        x = rng.standard_normal(atoms)
        w = rng.dirichlet(np.ones(atoms))
        mu = float(w @ x)
        var = float(w @ (x - mu) ** 2)
        if var > DEGENERATE_VAR:
            break
    x = m + s * (x - mu) / math.sqrt(var)
    order = np.argsort(x)
    return x[order], w[order]


def _batch_values(d: Distortion, xs: np.ndarray, ws: np.ndarray) -> np.ndarray:
    upper = np.cumsum(ws, axis=1)
    upper[:, -1] = 1.0
    lower = np.concatenate((np.zeros((ws.shape[0], 1)), upper[:, :-1]), axis=1)
    mass = d.h(1.0 - lower) - d.h(1.0 - upper)
    return np.sum(xs * mass, axis=1)


def oracle_falsify(
    d: Distortion,
    c: MVConstraint,
    trials: int,
    atoms: int,
    seed: int = 0,
    *,
    workers: int = 1,
    candidates: Sequence[Distribution] = (),
    progress: bool = False,
) -> OracleReport:
    """Search random standardized discrete laws for a value above s ||h'||."""
    if trials < 1 or atoms < 3:
        raise DomainError("oracle needs trials >= 1 and atoms >= 3")
    if not d.is_continuous:
        raise DiscontinuityError(f"{d.tag} is discontinuous")
    bound = c.s * l2_norm(d)

    def run_chunk(start: int) -> np.ndarray:
        stop = min(start + ORACLE_CHUNK, trials)
        draws = [_standardized_trial(seed, i, atoms, c.m, c.s) for i in range(start, stop)]
        xs = np.stack([x for x, _ in draws])
        ws = np.stack([w for _, w in draws])
        return _batch_values(d, xs, ws)

    starts = range(0, trials, ORACLE_CHUNK)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        chunks = list(tqdm(pool.map(run_chunk, starts), total=len(starts), disable=not progress, desc="oracle"))
    values = np.concatenate(chunks)

    best_index = int(np.argmax(values))
    best_value = float(values[best_index])
    best_is_candidate = False
    for k, law in enumerate(candidates):
        value = phi_quantile(d, law).value
        if value > best_value:
            best_value, best_index, best_is_candidate = value, k, True

    report = OracleReport(
        trials=trials,
        atoms=atoms,
        best_value=best_value,
        bound=bound,
        margin=bound - best_value,
        best_index=best_index,
        best_is_candidate=best_is_candidate,
        passed=best_value <= bound + ORACLE_SLACK,
    )
    logger.info("oracle %s: best %.12g vs bound %.12g", d.tag, best_value, bound)
    return report


# ---------------------------------------------------------------------------
# Glasser's inequality
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GlasserReport:
    s: float
    sigma: float
    phi: float
    ratio: float
    passed: bool

    def to_dict(self) -> dict[str, object]:
        return asdict(self)


def glasser_check(s: float) -> GlasserReport:
    """Equality case of sigma >= sqrt(3) Phi_Gini at the uniform optimizer."""
    gini = Gini()
    law = maximize(gini, MVConstraint(0.0, s)).distribution
    sigma = law.std
    phi = phi_quantile(gini, law).value
    ratio = SQRT3 * phi / sigma
    passed = abs(ratio - 1.0) <= GLASSER_TOL and abs(sigma - s) <= GLASSER_TOL * s
    return GlasserReport(s=s, sigma=sigma, phi=phi, ratio=ratio, passed=passed)


def glasser_gap(law: Distribution) -> float:
    """sigma(law) - sqrt(3) Phi_Gini(law); non-negative for every law."""
    return law.std - SQRT3 * phi_quantile(Gini(), law).value
