import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nonlinrom.family import build_family
from nonlinrom.measurement import build_measurements, observe_noisy
from nonlinrom.model import build_model, sample_snapshots, solve_state
from nonlinrom.storage import (ArtifactVersionError, dump_states, load_family, load_observation,
                               load_states, save_family, save_observation)


@pytest.fixture(scope="module")
def trained(space16):
    model = build_model(space16, "grid2x2")
    mspace = build_measurements(space16, "evenly_spaced", m=4)
    fam = build_family(model, sample_snapshots(model, 40, seed=0), mspace, K_max=3)
    return model, mspace, fam


def test_family_roundtrip(trained, tmp_path):
    model, mspace, fam = trained
    save_family(tmp_path / "fam", fam, model, mspace)
    fam2, models, mspace2 = load_family(tmp_path / "fam")
    assert fam2.K == fam.K and fam2.history == fam.history
    for a, b in zip(fam.cells, fam2.cells):
        assert_allclose(a.hierarchy.basis, b.hierarchy.basis)
        assert (a.n_star, a.created, a.split_at) == (b.n_star, b.created, b.split_at)
    assert_allclose(mspace2.psi, mspace.psi)
    assert models[0].spec() == model.spec()


def test_version_mismatch(trained, tmp_path):
    model, mspace, fam = trained
    save_family(tmp_path / "fam", fam, model, mspace)
    doc = json.loads((tmp_path / "fam.json").read_text())
    doc["format_version"] = 99
    (tmp_path / "fam.json").write_text(json.dumps(doc))
    with pytest.raises(ArtifactVersionError):
        load_family(tmp_path / "fam")


def test_observation_roundtrip(trained, tmp_path):
    model, mspace, _ = trained
    obs = observe_noisy(mspace, solve_state(model, np.zeros(4)), 1e-3, seed=1)
    save_observation(tmp_path / "obs.json", obs)
    back = load_observation(tmp_path / "obs.json")
    assert_allclose(back.w, obs.w)
    assert_allclose(back.z, obs.z)
    assert back.eps_noise == obs.eps_noise


def test_state_dump_layout(tmp_path, rng):
    U = rng.standard_normal((7, 3))
    dump_states(tmp_path / "s", U, note="x")
    raw = np.fromfile(tmp_path / "s.bin", dtype="<f8")
    assert_allclose(raw[:7], U[:, 0])  # one state per contiguous block
    back, header = load_states(tmp_path / "s")
    assert_allclose(back, U)
    assert header["n_dof"] == 7 and header["note"] == "x"
