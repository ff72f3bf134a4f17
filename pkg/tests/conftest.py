import numpy as np
import pytest

from flowground.bundle import Bundle, BundleSpec, generate_synthetic_bundle
from flowground.config import PipelineConfig


@pytest.fixture(scope="session")
def object_bundle(tmp_path_factory):
    out = generate_synthetic_bundle(BundleSpec(kind="object", seed=7),
                                    tmp_path_factory.mktemp("bundles") / "obj")
    return Bundle.load(out)


@pytest.fixture(scope="session")
def hand_bundle(tmp_path_factory):
    out = generate_synthetic_bundle(BundleSpec(kind="hand", seed=3),
                                    tmp_path_factory.mktemp("bundles") / "hand")
    return Bundle.load(out)


@pytest.fixture
def config():
    return PipelineConfig()


def random_rotation(rng):
    """Uniform random rotation via QR with sign-fixed diagonal."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q
