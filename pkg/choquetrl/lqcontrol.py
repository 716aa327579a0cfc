"""
Exploratory LQ control
----------------------
Closed-form solution of the Choquet-regularized linear-quadratic problem

    dX = (A X + B mu) dt + sqrt((C X + D mu)^2 + D^2 sigma^2) dW
    r  = -M/2 x^2 - R x mu - N/2 (mu^2 + sigma^2) - P x - L mu

with discount rho and temperature lam. The value function is quadratic,
V(x) = k2/2 x^2 + k1 x + k0, and the optimal policy at x is the static
maximizer of the regularizer at the HJB-induced mean and variance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Final, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from choquetrl.dist import Distribution
from choquetrl.distortion import Distortion, l2_norm
from choquetrl.errors import DegenerateError, DomainError, NumericalError, WellPosednessError
from choquetrl.staticopt import MVConstraint, maximize

logger = logging.getLogger(__name__)

DENOM_TOL: Final = 1e-300


@dataclass(frozen=True)
class LQModel:
    A: float
    B: float
    C: float
    D: float
    M: float
    R: float
    N: float
    P: float
    L: float
    rho: float
    lam: float

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "LQModel":
        data = dict(values)
        if "lambda" in data:
            if "lam" in data:
                raise DomainError("give either 'lambda' or 'lam', not both")
            data["lam"] = data.pop("lambda")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise DomainError(f"unknown LQ model keys: {unknown}")
        missing = sorted(names - set(data))
        if missing:
            raise DomainError(f"missing LQ model keys: {missing}")
        return cls(**{k: float(v) for k, v in data.items()})

    def to_dict(self) -> dict[str, float]:
        data = asdict(self)
        data["lambda"] = data.pop("lam")
        return data

    @property
    def drift_gain(self) -> float:
        """2A + C^2, the growth rate of E[X^2] without control."""
        return 2.0 * self.A + self.C**2

    @property
    def discount_threshold(self) -> float:
        bcd = self.B + self.C * self.D
        return self.drift_gain + max((self.D**2 * self.R**2 - 2.0 * self.N * self.R * bcd) / self.N, 0.0)


class Flag(NamedTuple):
    ok: bool
    margin: float


@dataclass(frozen=True)
class WellPosednessReport:
    n_positive: Flag
    m_nonneg: Flag
    mn_gt_r2: Flag
    discount: Flag
    rho_positive: Flag
    lam_positive: Flag

    @property
    def passed(self) -> bool:
        return all(flag.ok for flag in self._flags().values())

    def _flags(self) -> dict[str, Flag]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def failed_flags(self) -> list[str]:
        return [name for name, flag in self._flags().items() if not flag.ok]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {name: {"ok": flag.ok, "margin": flag.margin} for name, flag in self._flags().items()}
        out["passed"] = self.passed
        return out


def check_wellposed(model: LQModel) -> WellPosednessReport:
    """Each solvability hypothesis as a flag with its signed margin."""
    if model.N > 0.0:
        discount_margin = model.rho - model.discount_threshold
    else:
        discount_margin = -math.inf
    mn_margin = model.M * model.N - model.R**2
    return WellPosednessReport(
        n_positive=Flag(model.N > 0.0, model.N),
        m_nonneg=Flag(model.M >= 0.0, model.M),
        mn_gt_r2=Flag(mn_margin > 0.0, mn_margin),
        discount=Flag(discount_margin > 0.0, discount_margin),
        rho_positive=Flag(model.rho > 0.0, model.rho),
        lam_positive=Flag(model.lam > 0.0, model.lam),
    )


@dataclass(frozen=True)
class LQSolution:
    delta: float
    k2: float
    k1: float
    k0: float
    norm_hprime: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def _effective_cost(model: LQModel, k2: float) -> float:
    q = model.N - k2 * model.D**2
    if not q > 0.0:
        raise DegenerateError(f"N - k2 D^2 = {q!r} must be positive")
    return q


def solve(model: LQModel, d: Distortion) -> LQSolution:
    """Delta, k2, k1 and k0 of the quadratic value function."""
    report = check_wellposed(model)
    if not report.passed:
        raise WellPosednessError(report)

    bcd = model.B + model.C * model.D
    slack = model.rho - model.drift_gain
    delta = slack * model.N + 2.0 * bcd * model.R - model.D**2 * model.M
    lead = bcd**2 + model.D**2 * slack
    const = model.R**2 - model.M * model.N
    disc = delta**2 - 4.0 * lead * const
    if disc < 0.0:
        raise NumericalError(f"negative discriminant {disc!r}")
    # minus root of lead k^2 - delta k + const = 0, written without cancellation
    denom = delta + math.sqrt(disc)
    if not abs(denom) > DENOM_TOL:
        raise DegenerateError("k2 root is undefined for these parameters")
    k2 = 2.0 * const / denom
    if not k2 < 0.0:
        raise NumericalError(f"k2 = {k2!r} is not negative")

    q = _effective_cost(model, k2)
    gain = k2 * bcd - model.R
    k1_denom = model.B * gain + (model.A - model.rho) * q
    if not abs(k1_denom) > DENOM_TOL:
        raise DegenerateError("k1 equation is singular")
    k1 = (model.P * q + model.L * gain) / k1_denom

    norm = l2_norm(d)
    k0 = ((k1 * model.B - model.L) ** 2 + model.lam**2 * norm**2) / (2.0 * model.rho * q)
    logger.debug("solved LQ: delta=%g k2=%g k1=%g k0=%g", delta, k2, k1, k0)
    return LQSolution(delta=delta, k2=k2, k1=k1, k0=k0, norm_hprime=norm)


def riccati_residuals(model: LQModel, sol: LQSolution) -> tuple[float, float, float]:
    """Left minus right side of the three scalar equations for k2, k1, k0."""
    q = _effective_cost(model, sol.k2)
    bcd = model.B + model.C * model.D
    gain = sol.k2 * bcd - model.R
    pull = sol.k1 * model.B - model.L
    r2 = model.rho * sol.k2 - (gain**2 / q + sol.k2 * model.drift_gain - model.M)
    r1 = model.rho * sol.k1 - (pull * gain / q + sol.k1 * model.A - model.P)
    r0 = model.rho * sol.k0 - (pull**2 + model.lam**2 * sol.norm_hprime**2) / (2.0 * q)
    return r2, r1, r0


def value(sol: LQSolution, x):
    x_arr = np.asarray(x, dtype=float)
    v = 0.5 * sol.k2 * x_arr**2 + sol.k1 * x_arr + sol.k0
    return float(v) if np.ndim(x) == 0 else v


def policy_moments(model: LQModel, sol: LQSolution, x):
    """Mean mu*(x) and the state-free variance of the optimal policy."""
    q = _effective_cost(model, sol.k2)
    bcd = model.B + model.C * model.D
    x_arr = np.asarray(x, dtype=float)
    mu = ((sol.k2 * bcd - model.R) * x_arr + sol.k1 * model.B - model.L) / q
    var = (model.lam * sol.norm_hprime / q) ** 2
    return (float(mu) if np.ndim(x) == 0 else mu), var


def policy(model: LQModel, sol: LQSolution, d: Distortion, x: float) -> Distribution:
    mu, var = policy_moments(model, sol, x)
    return maximize(d, MVConstraint(mu, math.sqrt(var))).distribution


def hjb_residual(model: LQModel, sol: LQSolution, x):
    """Maximized HJB right-hand side at (mu*, sigma*) minus rho V(x)."""
    x_arr = np.asarray(x, dtype=float)
    mu, var = policy_moments(model, sol, x_arr)
    sigma = math.sqrt(var)
    v1 = sol.k2 * x_arr + sol.k1
    v2 = sol.k2
    reward = (
        -0.5 * model.M * x_arr**2
        - model.R * x_arr * mu
        - 0.5 * model.N * (mu**2 + var)
        - model.P * x_arr
        - model.L * mu
        + model.lam * sigma * sol.norm_hprime
    )
    generator = (
        (model.A * x_arr + model.B * mu) * v1
        + 0.5 * ((model.C * x_arr + model.D * mu) ** 2 + model.D**2 * var) * v2
    )
    residual = reward + generator - model.rho * value(sol, x_arr)
    return float(residual) if np.ndim(x) == 0 else residual


@dataclass(frozen=True)
class CompareRow:
    distortion: str
    x: float
    mu_star: float
    var_star: float
    V: float


def compare_policies(model: LQModel, distortions: Iterable[tuple[str, Distortion]], xs: Sequence[float]) -> list[CompareRow]:
    """Policy moments and values for several regularizers on a state grid."""
    rows = []
    for name, d in distortions:
        sol = solve(model, d)
        for x in xs:
            mu, var = policy_moments(model, sol, x)
            rows.append(CompareRow(name, float(x), mu, var, value(sol, x)))
    return rows
