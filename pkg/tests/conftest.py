import math

import numpy as np
import pytest
from hypothesis import strategies as st

from choquetrl.dist import Normal, ShiftedExponential, Uniform, discrete
from choquetrl.distortion import (
    CRE,
    DiscreteUniform,
    EpsGreedyBernoulli,
    GaussianScore,
    Gini,
    InterES,
    WassersteinAsym,
    WassersteinSym,
)
from choquetrl.lqcontrol import LQModel

CATALOG = [
    EpsGreedyBernoulli(0.3),
    DiscreteUniform(0.4, 2),
    CRE(),
    GaussianScore(),
    InterES(0.75),
    WassersteinSym(),
    WassersteinAsym(0.3),
    Gini(),
]


@pytest.fixture(autouse=True)
def isolated_home(tmp_path, monkeypatch):
    """Keep config lookups, logs and history out of the real home directory."""
    home = tmp_path / "home"
    monkeypatch.setenv("CHOQUETRL_HOME", str(home))
    monkeypatch.delenv("CHOQUET_SEED", raising=False)
    monkeypatch.chdir(tmp_path)
    return home


@pytest.fixture(params=CATALOG, ids=lambda d: d.tag)
def catalog_distortion(request):
    return request.param


@pytest.fixture
def benchmark_model():
    return LQModel(A=0.0, B=1.0, C=0.0, D=0.0, M=1.0, R=0.0, N=1.0, P=0.0, L=0.0, rho=2.0, lam=1.0)


@st.composite
def discrete_laws(draw, min_atoms=1, max_atoms=6):
    size = draw(st.integers(min_atoms, max_atoms))
    atoms = draw(
        st.lists(
            st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False),
            min_size=size,
            max_size=size,
            unique=True,
        )
    )
    weights = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=size, max_size=size)))
    return discrete(atoms, list(weights / weights.sum()))


@st.composite
def continuous_laws(draw):
    kind = draw(st.sampled_from(["uniform", "normal", "exponential"]))
    loc = draw(st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False))
    scale = draw(st.floats(0.1, 5.0))
    if kind == "uniform":
        return Uniform(loc, loc + scale)
    if kind == "normal":
        return Normal(loc, scale * scale)
    return ShiftedExponential(loc, 1.0 / scale)


def laws():
    return st.one_of(discrete_laws(), continuous_laws())


def quantile_l2(first, second, size=4001):
    """L2(0, 1) distance between two left quantile functions on a midpoint grid."""
    u = (np.arange(size) + 0.5) / size
    return math.sqrt(float(np.mean((first.quantile(u) - second.quantile(u)) ** 2)))
