import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquetrl.dist import (
    ComonotoneSum,
    ConvexOrder,
    Discrete,
    GridQuantile,
    Normal,
    ShiftedExponential,
    ThreePoint,
    TwoPoint,
    Uniform,
    available_distributions,
    convex_order_leq,
    dirac,
    discrete,
    distribution_from_spec,
    es,
    es_left,
    from_table,
    gini_mean_difference,
    iqr,
    maxiance,
    mean_preserving_spread,
    quantile_add,
    quantile_table,
    tail_mean_eps,
    wasserstein_to_dirac,
)
from choquetrl.errors import DomainError, UnsupportedKindError

from conftest import discrete_laws


def test_discrete_sorts_merges_and_promotes():
    law = discrete([1.0, -1.0, 1.0], [0.25, 0.5, 0.25])
    assert isinstance(law, TwoPoint)
    assert law.atoms == (-1.0, 1.0)
    assert law.probs == pytest.approx((0.5, 0.5))
    assert isinstance(discrete([0, 1, 2], [0.2, 0.3, 0.5]), ThreePoint)


def test_discrete_rejects_bad_probabilities():
    with pytest.raises(DomainError):
        Discrete((0.0, 1.0), (0.5, 0.6))
    with pytest.raises(DomainError):
        Discrete((0.0, 1.0), (1.5, -0.5))
    with pytest.raises(DomainError):
        TwoPoint((0.0, 1.0, 2.0), (0.2, 0.3, 0.5))


def test_left_and_right_quantiles_at_an_atom_boundary():
    law = TwoPoint.of(0.0, 1.0, 0.5)
    assert law.quantile(0.5) == 0.0
    assert law.right_quantile(0.5) == 1.0
    assert law.quantile(1.0) == 1.0
    assert law.right_quantile(0.0) == 0.0
    with pytest.raises(DomainError):
        law.quantile(0.0)
    with pytest.raises(DomainError):
        law.right_quantile(1.0)


def test_uniform_moments_and_tails():
    law = Uniform(0.0, 1.0)
    assert law.mean == pytest.approx(0.5)
    assert law.variance == pytest.approx(1.0 / 12.0)
    assert es(law, 0.5) == pytest.approx(0.75)
    assert es_left(law, 0.5) == pytest.approx(0.25)
    assert tail_mean_eps(law, 0.1) == pytest.approx(0.95)
    assert iqr(law, 0.75) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        es(law, 1.0)


def test_normal_and_exponential_integrated_quantiles():
    normal = Normal(1.0, 4.0)
    assert normal.integrated_quantile(0.0, 1.0) == pytest.approx(1.0, abs=1e-14)
    assert es(normal, 0.5) == pytest.approx(1.0 + 2.0 * math.sqrt(2.0 / math.pi), rel=1e-12)
    expo = ShiftedExponential(-1.0, 2.0)
    assert expo.mean == pytest.approx(-0.5)
    assert expo.integrated_quantile(0.0, 1.0) == pytest.approx(-0.5, abs=1e-14)
    assert expo.quantile_upper(1e-300) == pytest.approx(-1.0 + 300 * math.log(10) / 2.0)


def test_grid_quantile_jumps_and_flat_ends():
    law = GridQuantile((0.2, 0.5, 0.5, 0.8), (0.0, 1.0, 3.0, 4.0))
    assert law.p[0] == 0.0 and law.p[-1] == 1.0
    assert law.jump_levels == (0.5,)
    assert law.quantile(0.5) == pytest.approx(1.0)
    assert law.right_quantile(0.5) == pytest.approx(3.0)
    assert law.quantile(0.1) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        GridQuantile((0.0, 1.0), (1.0, 0.0))


def test_wasserstein_and_pairwise_formulas():
    law = TwoPoint.of(0.0, 1.0, 0.5)
    assert gini_mean_difference(law) == pytest.approx(0.25)
    assert maxiance(law) == pytest.approx(0.25)
    assert wasserstein_to_dirac(Uniform(0.0, 1.0), 0.5) == pytest.approx(0.125)
    with pytest.raises(UnsupportedKindError):
        gini_mean_difference(Uniform(0.0, 1.0))


@given(discrete_laws())
@settings(max_examples=100, deadline=None)
def test_gini_mean_difference_equals_maxiance(law):
    assert gini_mean_difference(law) == pytest.approx(maxiance(law), abs=1e-9)


def test_convex_order_basic_cases():
    spread = TwoPoint.of(-1.0, 1.0, 0.5)
    assert convex_order_leq(dirac(0.0), spread) is ConvexOrder.YES
    assert convex_order_leq(spread, dirac(0.0)) is ConvexOrder.NO
    assert convex_order_leq(dirac(0.0), dirac(1.0)) is ConvexOrder.NO
    assert convex_order_leq(Uniform(-1.0, 1.0), Uniform(-2.0, 2.0)) is ConvexOrder.YES
    assert convex_order_leq(Uniform(-1.0, 1.0), Uniform(-1.0, 1.0)) is ConvexOrder.INCONCLUSIVE
    law = ThreePoint((-1.0, 0.0, 2.0), (0.25, 0.5, 0.25))
    assert convex_order_leq(law, law) is ConvexOrder.YES


@given(discrete_laws(), st.data())
@settings(max_examples=100, deadline=None)
def test_mean_preserving_spread_dominates(law, data):
    index = data.draw(st.integers(0, len(law.atoms) - 1))
    left = data.draw(st.floats(0.01, 5.0))
    right = data.draw(st.floats(0.01, 5.0))
    spread = mean_preserving_spread(law, index, left, right)
    assert spread.mean == pytest.approx(law.mean, abs=1e-9)
    assert convex_order_leq(law, spread) is ConvexOrder.YES


def test_quantile_add_closed_families():
    assert quantile_add(Uniform(0, 1), Uniform(1, 3)) == Uniform(1, 4)
    summed = quantile_add(Normal(0, 1), Normal(1, 4))
    assert summed.mu == pytest.approx(1.0) and summed.var == pytest.approx(9.0)
    expo = quantile_add(ShiftedExponential(0, 1), ShiftedExponential(1, 0.5))
    assert expo.shift == pytest.approx(1.0) and expo.rate == pytest.approx(1.0 / 3.0)
    assert quantile_add(dirac(2.0), Uniform(0, 1)) == Uniform(2, 3)


def test_quantile_add_discrete_merges_levels():
    first = TwoPoint.of(0.0, 1.0, 0.5)
    second = TwoPoint.of(0.0, 10.0, 0.25)
    total = quantile_add(first, second)
    assert total.atoms == pytest.approx((0.0, 1.0, 11.0))
    assert total.probs == pytest.approx((0.5, 0.25, 0.25))


def test_quantile_add_mixed_kinds_is_exact_sum():
    total = quantile_add(Normal(0.0, 1.0), Uniform(0.0, 2.0))
    assert isinstance(total, ComonotoneSum)
    assert total.mean == pytest.approx(1.0)
    u = np.array([0.1, 0.5, 0.9])
    assert np.allclose(total.quantile(u), Normal(0.0, 1.0).quantile(u) + 2.0 * u)


def test_mixed_sum_tabulates_with_its_jump():
    total = quantile_add(Normal(0.0, 1.0), TwoPoint.of(0.0, 3.0, 0.5))
    assert isinstance(total, ComonotoneSum)
    grid = total.to_grid()
    assert isinstance(grid, GridQuantile)
    assert grid.jump_levels == (0.5,)
    assert grid.quantile(0.5) == pytest.approx(0.0, abs=1e-12)
    assert grid.right_quantile(0.5) == pytest.approx(3.0, abs=1e-12)
    assert grid.mean == pytest.approx(total.mean, abs=1e-6)


def test_quantile_add_grids():
    first = from_table((0.0, 1.0), (0.0, 1.0))
    second = from_table((0.0, 0.5, 0.5, 1.0), (0.0, 0.0, 1.0, 1.0))
    total = quantile_add(first, second)
    assert isinstance(total, GridQuantile)
    assert total.quantile(0.25) == pytest.approx(0.25)
    assert total.right_quantile(0.5) == pytest.approx(1.5)
    assert total.mean == pytest.approx(first.mean + second.mean)


def test_quantile_table_reproduces_laws():
    law = ThreePoint((-1.0, 0.0, 2.0), (0.25, 0.5, 0.25))
    table = from_table(*quantile_table(law))
    u = np.linspace(0.01, 1.0, 100)
    assert np.array_equal(table.quantile(u), law.quantile(u))
    uniform = Uniform(-1.0, 1.0)
    table = from_table(*quantile_table(uniform, 65))
    assert np.allclose(table.quantile(u), uniform.quantile(u), atol=1e-14)


def test_sample_is_reproducible_and_in_support():
    law = Uniform(2.0, 3.0)
    first = law.sample(np.random.default_rng(7), 1000)
    second = law.sample(np.random.default_rng(7), 1000)
    assert np.array_equal(first, second)
    assert first.min() > 2.0 and first.max() < 3.0


def test_sample_moments_of_a_million_draws():
    rng = np.random.default_rng(2024)
    assert np.all(dirac(1.5).sample(rng, 100) == 1.5)
    coin = TwoPoint.of(-1.0, 1.0, 0.5).sample(rng, 1_000_000)
    assert abs(coin.mean()) <= 4e-3
    uniform = Uniform(0.0, 1.0).sample(rng, 1_000_000)
    assert abs(uniform.var() - 1.0 / 12.0) <= 5e-3
    with pytest.raises(DomainError):
        Uniform(0.0, 1.0).sample(rng, 0)


@pytest.mark.parametrize(
    "law",
    [Uniform(-1.0, 2.0), Normal(0.5, 4.0), ShiftedExponential(1.0, 0.5)],
    ids=lambda law: law.kind,
)
@pytest.mark.parametrize("n", [1_000, 100_000])
def test_sample_kolmogorov_distance(law, n):
    draws = np.sort(law.sample(np.random.default_rng(n), n))
    cdf = 1.0 - law.sf(draws)
    ranks = np.arange(1, n + 1) / n
    distance = max(np.max(ranks - cdf), np.max(cdf - (ranks - 1.0 / n)))
    assert distance < 2.0 / math.sqrt(n)


def test_distribution_specs():
    assert distribution_from_spec({"kind": "uniform", "a": 0, "b": 2}) == Uniform(0.0, 2.0)
    assert distribution_from_spec({"kind": "dirac", "c": 3}).atoms == (3.0,)
    law = distribution_from_spec(
        {"kind": "comonotone-sum", "parts": [{"kind": "uniform", "a": 0, "b": 1}, {"kind": "uniform", "a": 0, "b": 1}]}
    )
    assert law == Uniform(0.0, 2.0)
    two = distribution_from_spec({"kind": "two-point", "atoms": [0, 1], "probs": [0.5, 0.5]})
    assert distribution_from_spec(two.to_spec()) == two
    with pytest.raises(DomainError):
        distribution_from_spec({"kind": "discrete", "atoms": [0, 1]})
    with pytest.raises(DomainError):
        distribution_from_spec({"kind": "normal", "mu": 0, "var": 1, "skew": 2})
    with pytest.raises(UnsupportedKindError):
        distribution_from_spec({"kind": "cauchy"})
    assert "grid" in available_distributions()
