import numpy as np
import pytest

from src.config import reset_config
from src.models import TrainConfig
from src.nets import IcnnModel, MlpModel, MonotoneModel
from src.problems import make_problem


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """Each test gets its own output root and a fresh config singleton."""
    monkeypatch.setenv("CONSPARSE_OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.delenv("CONSPARSE_THREADS", raising=False)
    monkeypatch.delenv("CONSPARSE_PRESETS_DIR", raising=False)
    monkeypatch.delenv("CONSPARSE_EPOCHS", raising=False)
    reset_config()
    yield
    reset_config()


@pytest.fixture
def icnn(rng):
    return IcnnModel.initialize([3, 6, 1], rng)


@pytest.fixture
def icnn2(rng):
    return IcnnModel.initialize([2, 5, 1], rng)


@pytest.fixture
def monotone(rng):
    return MonotoneModel.initialize([1, 4, 1], rng)


@pytest.fixture
def mlp(rng):
    return MlpModel.initialize([3, 5, 1], rng)


@pytest.fixture
def yield_problem():
    return make_problem("yield", "drucker", law="drucker")


@pytest.fixture
def hardening_problem():
    return make_problem("hardening", "U71Mn", E=220000.0, nu=0.3, sigma_y=484.5)


@pytest.fixture
def treloar_problem():
    return make_problem("hyper-incompressible", "treloar-20C", train_modes=["UT", "ET"], test_modes=["PS"])


@pytest.fixture
def gent_problem():
    return make_problem("hyper-compressible", "gent-gent", n_train=8, n_test=16)


@pytest.fixture
def quick_config():
    return TrainConfig(lam=1e-3, epochs=30, hidden=[4], seeds=[0], log_every=10)
