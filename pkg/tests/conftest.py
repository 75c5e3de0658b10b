"""Shared fixtures for the contraction-tuner tests."""

import pytest

from contraction_tuner.backend_manager import BackendManager
from contraction_tuner.config import Config
from contraction_tuner.contraction import parse_spec
from contraction_tuner.dataset import matmul_spec


@pytest.fixture
def matmul64():
    """The 64x64x64 matmul benchmark."""
    return matmul_spec(64, 64, 64)


@pytest.fixture
def small_spec():
    """A matmul small enough to execute point by point."""
    return parse_spec("small: C[m,n] += A[m,k] * B[k,n] | m=6 n=5 k=7")


@pytest.fixture
def toy_spec():
    """A matmul whose reachable schedule space is tiny."""
    return parse_spec("toy: C[m,n] += A[m,k] * B[k,n] | m=4 n=4 k=4")


@pytest.fixture
def manager():
    """A cost-model backend manager with a fresh cache."""
    return BackendManager(Config())


@pytest.fixture
def config_file(tmp_path):
    """A configuration file with every default, written to a temporary directory."""
    path = tmp_path / "config.yaml"
    Config().save_to_file(str(path))
    return path


RANDOM_TEMPLATES = [
    ("C[m,n] += A[m,k] * B[k,n]", 32),
    ("C[m,n] += A[k,m] * B[k,n]", 32),
    ("C[m,n] += A[m,k] * B[n,k] post=relu", 32),
    ("C[i] += A[i,k] * B[k]", 32),
    ("C[b,m,n] += A[b,m,k] * B[b,k,n]", 12),
    ("C[i,j] += A[i,r,s] * B[s,r,j] post=relu", 12),
]


@pytest.fixture
def random_spec():
    """Factory drawing a contraction with random extents (at most 32) from a generator."""

    def draw(rng):
        template, limit = RANDOM_TEMPLATES[int(rng.integers(len(RANDOM_TEMPLATES)))]
        head, _, post = template.partition(" post=")
        variables = dict.fromkeys(v for v in head if v.islower())
        bounds = " ".join(f"{v}={int(rng.integers(1, limit + 1))}" for v in variables)
        text = f"{head} | {bounds}" + (f" post={post}" if post else "")
        return parse_spec(text)

    return draw
