import random

import numpy as np
import pytest

from config.settings import settings
from models.schemas import ExperimentConfig, TraceConfig
from services.curve import G, AffinePoint, affine_multiply
from services.experiment import ExperimentRunner


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def py_random():
    return random.Random(1234)


@pytest.fixture(scope="session")
def runner():
    return ExperimentRunner()


@pytest.fixture
def random_point(py_random):
    """A random multiple of G, as an AffinePoint"""
    def make(word_bits=32):
        x, y = affine_multiply(py_random.randrange(2, 1 << 64), G.coords())
        return AffinePoint.from_ints(x, y, word_bits)
    return make


@pytest.fixture(scope="session")
def reference_config():
    """The 22-bit scenario on the desk timing preset at the measured SNR"""
    return ExperimentConfig(scalar=settings.REFERENCE_SCALAR, trace=TraceConfig.desk(seed=7))


@pytest.fixture(scope="session")
def reference_trace(runner, reference_config):
    return runner.build_trace(reference_config)


@pytest.fixture(scope="session")
def quiet_config():
    """Noise-free, jitter-free, address-dominated leakage with a short scalar"""
    trace = TraceConfig.desk(jitter="none", value_weight=0.0, address_weight=5.0, noise_sigma=0.0, seed=3)
    return ExperimentConfig(scalar="11011", trace=trace, target_snr=None)
