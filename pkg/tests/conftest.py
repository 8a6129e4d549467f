import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)
sys.path.insert(0, os.path.join(ROOT, "scripts"))
sys.path.insert(0, os.path.join(ROOT, "qa"))

from sensing.datasets import HarmonicConfig, generate_harmonic, split  # noqa: E402
from sensing.pod import ModalBasis, center, pod_basis, prior_from_pod  # noqa: E402


@pytest.fixture(scope="session")
def harmonic_split():
    """Small harmonic benchmark: 20 locations, 200 samples, 150/50 split."""
    x = generate_harmonic(HarmonicConfig(n_grid=20, n_terms=10, n_samples=200, seed=0))
    return split(x, 0.75)


@pytest.fixture(scope="session")
def harmonic_model(harmonic_split):
    train, _ = harmonic_split
    basis = pod_basis(center(train), 8)
    return basis, prior_from_pod(basis)


@pytest.fixture
def random_basis():
    """Factory: orthonormal N x n basis from a seeded Gaussian matrix."""
    def make(n_locations, n_modes, seed=0):
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((n_locations, n_modes)))
        return ModalBasis(phi=q, singular_values=np.ones(n_modes), n_samples_used=2)
    return make


@pytest.fixture
def random_spd():
    def make(n, seed=0):
        rng = np.random.default_rng(seed)
        b = rng.standard_normal((n, n))
        return b @ b.T / n + 0.1 * np.eye(n)
    return make
