import numpy as np
import pytest

from nonlinrom.fem import build_space
from nonlinrom.measurement import build_measurements
from nonlinrom.model import AffineModel, ParameterBox, build_model


def restrict_model(model, d):
    """Keep only the first ``d`` parameters of ``model`` (the rest frozen at 0)."""
    return AffineModel(model.space, model.A[: d + 1], model.f[: d + 1].copy(), ParameterBox.cube(d),
                       model.abar, model.c[:d].copy(), model.partition, model.membership[:, :d])


def with_affine_rhs(model, scale=0.3, seed=0):
    """Copy of ``model`` with nonzero ``f_j`` for ``j >= 1``."""
    rng = np.random.default_rng(seed)
    f = model.f.copy()
    f[1:] = scale * rng.standard_normal(f[1:].shape) * np.abs(model.f[0]).max()
    return AffineModel(model.space, model.A, f, model.box, model.abar, model.c, model.partition,
                       model.membership)


@pytest.fixture(scope="session")
def space8():
    return build_space(8)  # 49 dofs: small enough for dense oracles


@pytest.fixture(scope="session")
def space16():
    return build_space(16)


@pytest.fixture(scope="session")
def model8(space8):
    return build_model(space8, "grid2x2", c=0.9)


@pytest.fixture(scope="session")
def model16(space16):
    return build_model(space16, "grid2x2", c=0.9)


@pytest.fixture(scope="session")
def mspace8(space8):
    return build_measurements(space8, "random", m=6, box_width=0.25, seed=3)


@pytest.fixture(scope="session")
def mspace16(space16):
    return build_measurements(space16, "random", m=8, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
