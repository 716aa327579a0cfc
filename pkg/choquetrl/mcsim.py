"""
Monte Carlo validation
----------------------
Euler–Maruyama simulation of the exploratory state equation under a feedback
policy, discounted-reward estimation against the closed-form value function,
and the transversality diagnostic e^{-rho T} E[X_T^2].
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Final, Sequence

import numpy as np
from tqdm import tqdm

from choquetrl.choquet import phi_quantile
from choquetrl.distortion import Distortion
from choquetrl.errors import DomainError, NumericalError
from choquetrl.lqcontrol import LQModel, LQSolution, policy, policy_moments
from choquetrl.streams import substream

logger = logging.getLogger(__name__)

REGULARIZER_MODES: Final = ("closed-form", "quadrature")
NEGATIVE_DIFFUSION_TOL: Final = 1e-12
TRANSVERSALITY_RATIO: Final = 1e-2
TAIL_WARN_RATIO: Final = 1e-3

StateFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 10.0
    n_paths: int = 10_000
    seed: int = 0
    antithetic: bool = False
    workers: int = 1
    batch_size: int = 512
    n_checkpoints: int = 10
    regularizer: str = "closed-form"

    def __post_init__(self):
        if not (self.dt > 0.0 and self.horizon > 0.0 and self.dt < self.horizon):
            raise DomainError("need 0 < dt < horizon")
        if self.n_paths < 1:
            raise DomainError("n_paths must be at least 1")
        if self.antithetic and self.n_paths % 2:
            raise DomainError("antithetic sampling needs an even number of paths")
        if self.batch_size < 1 or self.workers < 1 or self.n_checkpoints < 2:
            raise DomainError("batch_size and workers must be positive, n_checkpoints at least 2")
        if self.regularizer not in REGULARIZER_MODES:
            raise DomainError(f"regularizer must be one of {REGULARIZER_MODES}")


@dataclass(frozen=True)
class PathEnsemble:
    times: np.ndarray
    states: np.ndarray = field(repr=False)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class TransversalityReport:
    points: tuple[tuple[float, float], ...]
    passed: bool

    @classmethod
    def from_points(cls, points: Sequence[tuple[float, float]]) -> "TransversalityReport":
        if len(points) < 2:
            raise DomainError("transversality check needs at least 2 checkpoints")
        first, last = points[0][1], points[-1][1]
        return cls(tuple((float(t), float(v)) for t, v in points), last < TRANSVERSALITY_RATIO * (first + 1e-12))

    def to_dict(self) -> dict[str, object]:
        return {"points": [list(p) for p in self.points], "passed": self.passed}


@dataclass(frozen=True)
class SimResult:
    value_estimate: float
    std_error: float
    transversality: tuple[tuple[float, float], ...]
    horizon: float
    tail_bound: float
    n_paths: int

    def to_dict(self) -> dict[str, object]:
        return {
            "value_estimate": self.value_estimate,
            "std_error": self.std_error,
            "transversality": [list(p) for p in self.transversality],
            "horizon": self.horizon,
            "tail_bound": self.tail_bound,
            "n_paths": self.n_paths,
        }


def _step_grid(horizon: float, dt: float) -> tuple[int, float]:
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    return n_steps, horizon / n_steps


def _path_noise(cfg: SimConfig, start: int, stop: int, n_steps: int) -> np.ndarray:
    noise = np.empty((stop - start, n_steps))
    for row, path in enumerate(range(start, stop)):
        if cfg.antithetic:
            z = substream(cfg.seed, path // 2).standard_normal(n_steps)
            noise[row] = -z if path % 2 else z
        else:
            noise[row] = substream(cfg.seed, path).standard_normal(n_steps)
    return noise


def _euler_batch(
    model: LQModel,
    mean_fn: StateFn,
    var_fn: StateFn,
    x0: float,
    cfg: SimConfig,
    n_steps: int,
    dt: float,
    start: int,
    stop: int,
    record_steps: Sequence[int],
    reward_fn: Callable[[np.ndarray, np.ndarray, np.ndarray, int], np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    size = stop - start
    noisy = model.C != 0.0 or model.D != 0.0
    noise = _path_noise(cfg, start, stop, n_steps) if noisy else None
    columns = {step: col for col, step in enumerate(record_steps)}
    recorded = np.empty((size, len(record_steps)))
    acc = np.zeros(size)
    x = np.full(size, float(x0))
    sqrt_dt = math.sqrt(dt)
    for i in range(n_steps + 1):
        if i in columns:
            recorded[:, columns[i]] = x
        mu = np.broadcast_to(mean_fn(x), x.shape)
        var = np.broadcast_to(var_fn(x), x.shape)
        if reward_fn is not None:
            weight = 0.5 * dt if i in (0, n_steps) else dt
            acc += weight * reward_fn(x, mu, var, i)
        if i == n_steps:
            break
        step = (model.A * x + model.B * mu) * dt
        if noisy:
            diff2 = (model.C * x + model.D * mu) ** 2 + model.D**2 * var
            if np.any(diff2 < -NEGATIVE_DIFFUSION_TOL) or not np.all(np.isfinite(diff2)):
                raise NumericalError(f"diffusion argument invalid at step {i}")
            step = step + np.sqrt(np.maximum(diff2, 0.0)) * sqrt_dt * noise[:, i]
        x = x + step
    return recorded, acc


def _run_batches(cfg: SimConfig, worker: Callable[[int, int], tuple[np.ndarray, np.ndarray]], progress: bool, desc: str):
    starts = list(range(0, cfg.n_paths, cfg.batch_size))

    def job(start: int):
        return worker(start, min(start + cfg.batch_size, cfg.n_paths))

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(tqdm(pool.map(job, starts), total=len(starts), disable=not progress, desc=desc))
    recorded = np.concatenate([r for r, _ in results], axis=0)
    acc = np.concatenate([a for _, a in results])
    return recorded, acc


def simulate_state(
    model: LQModel,
    mean_fn: StateFn,
    var_fn: StateFn,
    x0: float,
    cfg: SimConfig,
    *,
    record_every: int = 1,
    progress: bool = False,
) -> PathEnsemble:
    """Euler–Maruyama paths of the exploratory state on {0, dt, ..., T}."""
    if record_every < 1:
        raise DomainError("record_every must be positive")
    n_steps, dt = _step_grid(cfg.horizon, cfg.dt)
    record_steps = list(range(0, n_steps + 1, record_every))
    if record_steps[-1] != n_steps:
        record_steps.append(n_steps)

    def worker(start, stop):
        return _euler_batch(model, mean_fn, var_fn, x0, cfg, n_steps, dt, start, stop, record_steps)

    states, _ = _run_batches(cfg, worker, progress, "paths")
    return PathEnsemble(np.array(record_steps) * dt, states)


def transversality_check(paths: PathEnsemble, rho: float, checkpoints: Sequence[float]) -> TransversalityReport:
    """e^{-rho T_k} mean(X_{T_k}^2) at each checkpoint."""
    if len(checkpoints) < 2:
        raise DomainError("transversality check needs at least 2 checkpoints")
    points = []
    for t in checkpoints:
        idx = int(np.argmin(np.abs(paths.times - t)))
        points.append((float(paths.times[idx]), math.exp(-rho * paths.times[idx]) * float(np.mean(paths.states[:, idx] ** 2))))
    return TransversalityReport.from_points(points)


def estimate_value(
    model: LQModel,
    sol: LQSolution,
    d: Distortion,
    x0: float,
    cfg: SimConfig,
    *,
    progress: bool = False,
) -> SimResult:
    """Discounted regularized reward under the optimal policy, with std error.

    With ``regularizer="quadrature"`` the bonus is lambda * Phi_h of the policy
    law, evaluated once at ``x0``: the policy variance does not depend on the
    state, so Phi_h is the same at every step and every path.
    """
    horizon = max(10.0 / model.rho, cfg.horizon)
    n_steps, dt = _step_grid(horizon, cfg.dt)
    _, var_star = policy_moments(model, sol, 0.0)
    sigma_star = math.sqrt(var_star)
    if cfg.regularizer == "quadrature":
        bonus = model.lam * phi_quantile(d, policy(model, sol, d, x0)).value
    else:
        bonus = model.lam * sigma_star * sol.norm_hprime

    def mean_fn(x):
        return policy_moments(model, sol, x)[0]

    def var_fn(x):
        return var_star

    def reward_fn(x, mu, var, step):
        running = (
            -0.5 * model.M * x**2
            - model.R * x * mu
            - 0.5 * model.N * (mu**2 + var)
            - model.P * x
            - model.L * mu
            + bonus
        )
        return math.exp(-model.rho * step * dt) * running

    checkpoint_steps = sorted({int(round(k * n_steps / cfg.n_checkpoints)) for k in range(1, cfg.n_checkpoints + 1)})

    def worker(start, stop):
        return _euler_batch(model, mean_fn, var_fn, x0, cfg, n_steps, dt, start, stop, checkpoint_steps, reward_fn)

    recorded, values = _run_batches(cfg, worker, progress, "value")
    estimate = float(np.mean(values))
    if cfg.antithetic:
        pairs = values.reshape(-1, 2).mean(axis=1)
        std_error = float(np.std(pairs, ddof=1) / math.sqrt(pairs.size)) if pairs.size > 1 else 0.0
    else:
        std_error = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0

    transversality = tuple(
        (step * dt, math.exp(-model.rho * step * dt) * float(np.mean(recorded[:, col] ** 2)))
        for col, step in enumerate(checkpoint_steps)
    )
    tail = transversality[-1][1]
    if tail > TAIL_WARN_RATIO * abs(estimate):
        logger.warning("transversality tail %.3g exceeds %.0e of |estimate| %.3g", tail, TAIL_WARN_RATIO, abs(estimate))
    return SimResult(
        value_estimate=estimate,
        std_error=std_error,
        transversality=transversality,
        horizon=horizon,
        tail_bound=math.exp(-model.rho * horizon),
        n_paths=cfg.n_paths,
    )
