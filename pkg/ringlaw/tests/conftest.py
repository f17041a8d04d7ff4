import json

import pytest

from ringlaw.services.measure import GSpectrum, MeasureSpec, discretize


@pytest.fixture
def truncated_half():
    """g = 1 with weight 0.5, g = 0 otherwise"""
    return discretize(MeasureSpec.truncated(0.5))


@pytest.fixture
def two_atom():
    return GSpectrum.from_atoms([(0.25, 0.5), (1.0, 0.5)])


@pytest.fixture
def uniform_spec():
    return MeasureSpec.uniform(0.1, 0.9, 64)


@pytest.fixture
def uniform_measure(uniform_spec):
    return discretize(uniform_spec)


@pytest.fixture
def write_config(tmp_path):
    """Write a run document to tmp_path and return its path"""
    def _write(document, name='run.json'):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return str(path)
    return _write
