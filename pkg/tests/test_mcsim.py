import math
from dataclasses import replace

import numpy as np
import pytest

from choquetrl.distortion import Gini, InterES
from choquetrl.errors import DomainError, NumericalError
from choquetrl.lqcontrol import LQModel, solve, value
from choquetrl.mcsim import SimConfig, TransversalityReport, estimate_value, simulate_state, transversality_check


@pytest.fixture
def noisy_model():
    return LQModel(A=-0.5, B=1.0, C=0.2, D=0.5, M=1.0, R=0.0, N=1.0, P=0.1, L=0.0, rho=1.0, lam=1.0)


def _zero(x):
    return np.zeros_like(x)


@pytest.mark.parametrize("x0", [0.0, 1.0])
def test_benchmark_value_matches_closed_form(benchmark_model, x0):
    sol = solve(benchmark_model, Gini())
    cfg = SimConfig(dt=1e-3, horizon=10.0, n_paths=4, batch_size=4)
    result = estimate_value(benchmark_model, sol, Gini(), x0, cfg)
    expected = value(sol, x0)
    assert result.value_estimate == pytest.approx(expected, rel=0.02, abs=1e-3)
    assert result.std_error == 0.0
    assert result.horizon == pytest.approx(10.0)
    assert result.tail_bound == pytest.approx(math.exp(-20.0))
    assert TransversalityReport.from_points(result.transversality).passed


def test_quadrature_regularizer_agrees_with_closed_form(benchmark_model):
    d = InterES(0.75)
    sol = solve(benchmark_model, d)
    base = SimConfig(dt=1e-2, horizon=10.0, n_paths=2, batch_size=2)
    closed = estimate_value(benchmark_model, sol, d, 1.0, base)
    quad = estimate_value(benchmark_model, sol, d, 1.0, replace(base, regularizer="quadrature"))
    assert quad.value_estimate == pytest.approx(closed.value_estimate, rel=1e-9)


def test_explosive_state_fails_transversality():
    model = LQModel(A=1.0, B=1.0, C=0.0, D=0.0, M=1.0, R=0.0, N=1.0, P=0.0, L=0.0, rho=1.0, lam=1.0)
    cfg = SimConfig(dt=1e-2, horizon=5.0, n_paths=2, batch_size=2)
    paths = simulate_state(model, _zero, _zero, 1.0, cfg, record_every=10)
    report = transversality_check(paths, model.rho, [1.0, 3.0, 5.0])
    assert not report.passed
    assert report.points[-1][1] > report.points[0][1]
    assert report.points[-1][1] == pytest.approx(math.exp(5.0), rel=0.1)


def test_simulated_paths_layout(noisy_model):
    cfg = SimConfig(dt=1e-2, horizon=1.0, n_paths=6, batch_size=4, seed=5)
    paths = simulate_state(noisy_model, _zero, lambda x: np.ones_like(x), 0.5, cfg, record_every=10)
    assert paths.n_paths == 6
    assert paths.states.shape == (6, 11)
    assert paths.times[-1] == pytest.approx(1.0)
    assert np.all(paths.states[:, 0] == 0.5)
    again = simulate_state(noisy_model, _zero, lambda x: np.ones_like(x), 0.5, cfg, record_every=10)
    assert np.array_equal(paths.states, again.states)


def test_results_do_not_depend_on_worker_count(noisy_model):
    sol = solve(noisy_model, Gini())
    cfg = SimConfig(dt=1e-2, horizon=10.0, n_paths=64, batch_size=16, seed=9)
    single = estimate_value(noisy_model, sol, Gini(), 1.0, cfg)
    pooled = estimate_value(noisy_model, sol, Gini(), 1.0, replace(cfg, workers=4))
    assert single == pooled


def test_antithetic_pairs_reduce_the_standard_error(noisy_model):
    sol = solve(noisy_model, Gini())
    cfg = SimConfig(dt=1e-2, horizon=10.0, n_paths=400, batch_size=100, seed=2)
    plain = estimate_value(noisy_model, sol, Gini(), 2.0, cfg)
    paired = estimate_value(noisy_model, sol, Gini(), 2.0, replace(cfg, antithetic=True))
    assert paired.std_error < plain.std_error


def test_negative_diffusion_argument_is_rejected(noisy_model):
    cfg = SimConfig(dt=1e-2, horizon=1.0, n_paths=2, batch_size=2)
    with pytest.raises(NumericalError):
        simulate_state(noisy_model, _zero, lambda x: -np.ones_like(x), 0.0, cfg)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dt": 0.0},
        {"dt": 2.0, "horizon": 1.0},
        {"n_paths": 0},
        {"n_paths": 3, "antithetic": True},
        {"workers": 0},
        {"n_checkpoints": 1},
        {"regularizer": "monte-carlo"},
    ],
)
def test_sim_config_validation(kwargs):
    with pytest.raises(DomainError):
        SimConfig(**kwargs)


def test_transversality_needs_two_checkpoints(benchmark_model):
    cfg = SimConfig(dt=1e-2, horizon=1.0, n_paths=2, batch_size=2)
    paths = simulate_state(benchmark_model, _zero, _zero, 1.0, cfg)
    with pytest.raises(DomainError):
        transversality_check(paths, 2.0, [1.0])
    with pytest.raises(DomainError):
        simulate_state(benchmark_model, _zero, _zero, 1.0, cfg, record_every=0)


def test_horizon_stretches_with_slow_discount():
    slow_discount = LQModel(A=0.0, B=1.0, C=0.0, D=0.0, M=1.0, R=0.0, N=1.0, P=0.0, L=0.0, rho=0.05, lam=1.0)
    sol = solve(slow_discount, Gini())
    cfg = SimConfig(dt=0.1, horizon=1.0, n_paths=2, batch_size=2, n_checkpoints=2)
    result = estimate_value(slow_discount, sol, Gini(), 0.0, cfg)
    assert result.horizon == pytest.approx(200.0)
    assert result.tail_bound == pytest.approx(math.exp(-10.0))


@pytest.mark.slow
def test_acceptance_run_on_noisy_model(noisy_model):
    sol = solve(noisy_model, Gini())
    cfg = SimConfig(dt=1e-3, horizon=10.0, n_paths=100_000, batch_size=2048, seed=0, workers=4)
    result = estimate_value(noisy_model, sol, Gini(), 1.0, cfg)
    expected = value(sol, 1.0)
    gap = abs(result.value_estimate - expected)
    assert gap <= 3.0 * result.std_error
    assert gap <= 0.02 * abs(expected)
    assert TransversalityReport.from_points(result.transversality).passed


def test_halving_the_step_stays_within_noise(noisy_model):
    sol = solve(noisy_model, Gini())
    coarse_cfg = SimConfig(dt=2e-2, horizon=10.0, n_paths=2000, batch_size=500, seed=1)
    coarse = estimate_value(noisy_model, sol, Gini(), 1.0, coarse_cfg)
    fine = estimate_value(noisy_model, sol, Gini(), 1.0, replace(coarse_cfg, dt=1e-2))
    noise = math.hypot(coarse.std_error, fine.std_error)
    assert abs(coarse.value_estimate - fine.value_estimate) <= 4.0 * noise


def test_uncontrolled_decay_follows_the_ode():
    model = LQModel(A=-1.0, B=0.0, C=0.0, D=0.0, M=1.0, R=0.0, N=1.0, P=0.0, L=0.0, rho=1.0, lam=1.0)
    cfg = SimConfig(dt=1e-3, horizon=1.0, n_paths=2, batch_size=2)
    paths = simulate_state(model, _zero, _zero, 2.0, cfg, record_every=100)
    expected = 2.0 * np.exp(-paths.times)
    assert np.allclose(paths.states, expected, rtol=1e-3)


def test_pure_noise_matches_brownian_moments():
    model = LQModel(A=0.0, B=1.0, C=0.0, D=1.0, M=1.0, R=0.0, N=1.0, P=0.0, L=0.0, rho=1.0, lam=1.0)
    n = 10_000
    cfg = SimConfig(dt=1e-2, horizon=2.0, n_paths=n, batch_size=2500, seed=11)
    paths = simulate_state(model, _zero, lambda x: np.ones_like(x), 0.5, cfg, record_every=200)
    final = paths.states[:, -1]
    assert abs(final.mean() - 0.5) <= 3.0 * math.sqrt(2.0 / n)
    assert abs(final.var(ddof=1) - 2.0) <= 3.0 * 2.0 * math.sqrt(2.0 / (n - 1))


def test_noisy_model_value_matches_closed_form(noisy_model):
    sol = solve(noisy_model, Gini())
    cfg = SimConfig(dt=2e-3, horizon=10.0, n_paths=4000, batch_size=1000, seed=3)
    result = estimate_value(noisy_model, sol, Gini(), 1.0, cfg)
    expected = value(sol, 1.0)
    gap = abs(result.value_estimate - expected)
    assert result.std_error > 0.0
    assert gap <= 3.0 * result.std_error
    assert gap <= 0.02 * abs(expected)
