import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tdfinite.instances import GeneratorConfig, random_instance
from tdfinite.mrp import Instance
from tdfinite.sampling import trial_generator

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SYM_P = [[0.5, 0.5], [0.5, 0.5]]


@pytest.fixture
def d1():
    """Symmetric two-state chain, one constant feature, reward 1 from state 0."""
    return Instance.build(SYM_P, [[1.0, 1.0], [0.0, 0.0]], 0.5, [[1.0], [1.0]])


@pytest.fixture
def skewed():
    P = [[0.9, 0.1], [0.5, 0.5]]
    return Instance.build(P, [[0.0, 10.0], [0.0, 0.0]], 0.9, np.eye(2))


def make_instances(count, seed=0, **kw):
    cfg = GeneratorConfig(**kw)
    return [random_instance(trial_generator(seed, i), cfg) for i in range(count)]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    lines = [mod.RESULTS[k].line() for k in sorted(mod.RESULTS)]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
