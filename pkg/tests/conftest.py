import numpy as np
import pytest

from memefuse.config import SynthConfig, from_dict, tiny_model

CLASSES = {"mr": 2, "sa": 4, "id": 4, "od": 2}


def make_config(**sections):
    base = {"classes": CLASSES, "model": tiny_model().__dict__,
            "optim": {"steps": 10, "batch_size": 4},
            "data": {"synth": {"n_train": 8, "n_test": 4, "mode": "aligned"}}}
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            base[key] = {**base[key], **value}
        else:
            base[key] = value
    return from_dict(base)


@pytest.fixture
def config():
    return make_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def synth_samples():
    from memefuse.ingest.synth import synth_generate
    return synth_generate(SynthConfig(n_train=6, n_test=3, mode="aligned"), CLASSES)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
