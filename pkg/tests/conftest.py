import numpy as np
import pytest

from priorlsqr.penalty import PenaltyKind, PenaltySpec
from priorlsqr.problems import make_deconv1d

ALL_KINDS = [
    PenaltySpec(PenaltyKind.TIKHONOV),
    PenaltySpec(PenaltyKind.TV_SMOOTHED, T=0.5),
    PenaltySpec(PenaltyKind.PM_LOG, T=0.7),
    PenaltySpec(PenaltyKind.PM_EXP, T=0.9),
]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def deconv128():
    return make_deconv1d(n=128, seed=3)


@pytest.fixture(scope="session")
def deconv512():
    return make_deconv1d()


def rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
