import json

import numpy as np
import pytest

import krnet


def small_flow(dim=2):
    return {"dim": dim, "num_partitions": dim, "depth": 2, "width": 8}


def test_version_and_catalog():
    assert krnet.version().startswith("0.1.0")
    assert set(krnet.problems()) >= {"ou1d", "ou2d", "mix2d", "mix4d", "mix8d"}
    assert krnet.problem_defaults("mix2d")["flow"]["dim"] == 2


def test_lyapunov_residual():
    a = np.array([[1.0, 0.3], [0.1, 2.0]])
    d = np.array([[1.0, 0.2], [0.2, 0.5]])
    s = krnet.lyapunov_solve(a, d)
    np.testing.assert_allclose(a @ s + s @ a.T, 2 * d, atol=1e-12)


def test_roundtrip_and_log_pdf():
    m = krnet.Model(small_flow())
    m.initialize(3)
    x = np.random.default_rng(0).normal(size=(50, 2))
    z, logdet = m.forward(x)
    assert logdet.shape == (50,)
    np.testing.assert_allclose(m.inverse(z), x, atol=1e-10)
    expected = -0.5 * (z**2).sum(axis=1) - np.log(2 * np.pi) + logdet
    np.testing.assert_allclose(m.log_pdf(x), expected, atol=1e-10)


def test_parameters_and_checkpoint(tmp_path):
    m = krnet.Model(small_flow())
    m.initialize(1)
    theta = m.parameters()
    assert theta.shape == (m.count_parameters(),)
    m.set_parameters(theta * 0.5)
    path = tmp_path / "m.ckpt"
    m.save(str(path))
    back = krnet.Model.load(str(path))
    np.testing.assert_array_equal(back.parameters(), theta * 0.5)
    with pytest.raises(krnet.ConfigError):
        m.set_parameters(theta[:-1])


def test_exact_ou_has_zero_residual():
    pts = np.random.default_rng(1).uniform(-2, 2, size=(20, 2))
    assert np.isfinite(krnet.exact_log_pdf("ou2d", pts)).all()
    m = krnet.Model(small_flow())
    m.initialize(0)
    r = m.fp_residual("ou2d", pts)
    assert r.shape == (20,)
    assert np.isfinite(r).all()


def test_sample_is_seeded():
    m = krnet.Model(small_flow())
    m.initialize(2)
    np.testing.assert_array_equal(m.sample(10, seed=4), m.sample(10, seed=4))


def test_run_grid_of_exact_density(tmp_path):
    summary = krnet.run("grid", {"problem": "ou2d", "dim": 2, "lo": -25, "hi": 25, "resolution": 201}, tmp_path)
    assert abs(summary["mass_exact"] - 1.0) < 1e-3
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "ok"


def test_bad_config_raises(tmp_path):
    with pytest.raises(krnet.ConfigError):
        krnet.run("solve-fp", {"problem": "nope"}, tmp_path)
