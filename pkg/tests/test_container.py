import os

import numpy as np
import pytest

from helpers import toy_model
from qmcl.closure import TrainingConfig, TrajectoryDataset, initialize, run, train
from qmcl.container import FORMAT_VERSION, dataset_fingerprint, load_model, read_manifest, save_model
from qmcl.dynamics import IntegratorConfig, L96Params, Lorenz96, integrate_truth
from qmcl.errors import ContainerError


@pytest.fixture(scope="module")
def model():
    return toy_model(N=300, L=16, r=4)


def assert_models_identical(a, b):
    np.testing.assert_array_equal(a.basis.phi, b.basis.phi)
    np.testing.assert_array_equal(a.basis.eigenvalues, b.basis.eigenvalues)
    np.testing.assert_array_equal(a.koopman, b.koopman)
    np.testing.assert_array_equal(a.train_z, b.train_z)
    np.testing.assert_array_equal(a.effect_map.train_x, b.effect_map.train_x)
    assert a.effect_map.bandwidth == b.effect_map.bandwidth
    assert len(a.flux_observables) == len(b.flux_observables)
    for Za, Zb, da, db in zip(a.flux_observables, b.flux_observables, a.flux_spectra, b.flux_spectra):
        np.testing.assert_array_equal(Za, Zb)
        np.testing.assert_array_equal(da.eigenvalues, db.eigenvalues)
        np.testing.assert_array_equal(da.eigenvectors, db.eigenvectors)
    assert (a.dt, a.r, a.basis_bandwidth, a.k_nn) == (b.dt, b.r, b.basis_bandwidth, b.k_nn)
    assert a.system == b.system
    assert a.config == b.config


def test_roundtrip_bitwise(model, tmp_path):
    save_model(model, tmp_path / "m")
    assert_models_identical(model, load_model(tmp_path / "m"))


def test_roundtrip_l96(tmp_path):
    sysm = Lorenz96(L96Params(F=8.0))
    x0 = np.zeros(9)
    x0[0] = 1.0
    y0 = np.zeros((8, 9))
    y0[0, 0] = 1.1
    traj = integrate_truth(sysm, sysm.pack(x0, y0), IntegratorConfig(0.01, 16), 300)[100:]
    X = sysm.resolved(traj)
    data = TrajectoryDataset(dt=0.01, w=X, x=X, z=sysm.flux(traj))
    m = train(data, TrainingConfig(L=10, feature_bandwidth=2.0, r=5, basis_bandwidth=3.0), sysm)
    save_model(m, tmp_path / "m")
    back = load_model(tmp_path / "m")
    assert_models_identical(m, back)
    assert back.system.p.F == 8.0 and back.flux_dim == 9


def test_loaded_model_runs_identically(model, tmp_path):
    save_model(model, tmp_path / "m")
    back = load_model(tmp_path / "m")
    x0 = model.effect_map.train_x[0]
    a = run(model, initialize(model, x0), 100)
    b = run(back, initialize(back, x0), 100)
    np.testing.assert_array_equal(a.x, b.x)


def test_manifest_contents(model, tmp_path):
    save_model(model, tmp_path / "m", fingerprint="sha256:abc", timestamp="T0")
    e = read_manifest(tmp_path / "m")
    assert e["format_version"] == str(FORMAT_VERSION)
    assert e["dtype"] == "float64" and e["byte_order"] == "little"
    assert e["dataset_fingerprint"] == "sha256:abc"
    assert e["created"] == "T0"
    assert e["config.L"] == "16"
    assert e["array.phi"] == "phi.bin 300,16"
    assert os.path.getsize(tmp_path / "m" / "phi.bin") == 8 * 300 * 16


def test_blob_is_little_endian_row_major(model, tmp_path):
    save_model(model, tmp_path / "m")
    raw = np.frombuffer((tmp_path / "m" / "koopman.bin").read_bytes(), dtype="<f8")
    np.testing.assert_array_equal(raw.reshape(16, 16), model.koopman)


def test_retraining_gives_identical_container(tmp_path):
    a, b = toy_model(N=250, L=10), toy_model(N=250, L=10)
    save_model(a, tmp_path / "a")
    save_model(b, tmp_path / "b", timestamp="another time")
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    for name in names:
        da = (tmp_path / "a" / name).read_bytes()
        db = (tmp_path / "b" / name).read_bytes()
        if name == "manifest.txt":
            strip = lambda t: [l for l in t.decode().splitlines() if not l.startswith("created")]
            assert strip(da) == strip(db)
        else:
            assert da == db


def test_mismatched_blob_size_fails(model, tmp_path):
    save_model(model, tmp_path / "m")
    blob = tmp_path / "m" / "koopman.bin"
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(ContainerError, match="koopman.bin"):
        load_model(tmp_path / "m")


def test_missing_blob_fails(model, tmp_path):
    save_model(model, tmp_path / "m")
    os.remove(tmp_path / "m" / "train_z.bin")
    with pytest.raises(ContainerError):
        load_model(tmp_path / "m")


def test_manifest_errors(model, tmp_path):
    with pytest.raises(ContainerError):
        load_model(tmp_path / "nothing")
    save_model(model, tmp_path / "m")
    path = tmp_path / "m" / "manifest.txt"
    text = path.read_text()
    path.write_text(text.replace(f"format_version = {FORMAT_VERSION}", "format_version = 99"))
    with pytest.raises(ContainerError, match="format_version"):
        load_model(tmp_path / "m")
    path.write_text("\n".join(l for l in text.splitlines() if not l.startswith("array.koopman")))
    with pytest.raises(ContainerError, match="koopman"):
        load_model(tmp_path / "m")
    path.write_text("format = something else\n")
    with pytest.raises(ContainerError):
        load_model(tmp_path / "m")
    path.write_text("no equals sign here\n")
    with pytest.raises(ContainerError):
        load_model(tmp_path / "m")


def test_dataset_fingerprint():
    a = np.arange(6.0).reshape(3, 2)
    assert dataset_fingerprint(a) == dataset_fingerprint(a.copy())
    assert dataset_fingerprint(a) != dataset_fingerprint(a.reshape(2, 3))
    b = a.copy()
    b[0, 0] = np.nextafter(0.0, 1.0)
    assert dataset_fingerprint(a) != dataset_fingerprint(b)
    assert dataset_fingerprint(a).startswith("sha256:")
