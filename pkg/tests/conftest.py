import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from robustmes.model import Converter, ConverterOutput, Design, Economics, PwlCurve, SystemModel

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

LINEAR = PwlCurve(((0.0, 0.0), (1.0, 1.0)))


def supply_model(cap_bounds=(0.0, 1e4), curve=LINEAR, form="f"):
    """One externally fed converter serving one form."""
    c = Converter("src", "external", (ConverterOutput(form, curve),), capacity_bounds=cap_bounds)
    return SystemModel((form,), (c,), n_copies=1, economics=Economics(gamma_fuel=0.0, delta_t=1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def oversized():
    return Design({"src#1": 1e4})
