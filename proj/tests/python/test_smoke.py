import math

import numpy as np
import pytest

import fbesag


def five_area():
    return fbesag.Graph(5, [(0, 1), (0, 3), (1, 2), (1, 3), (2, 3), (3, 4)])


def test_graph_and_partition():
    g = five_area()
    assert g.n_areas == 5 and g.n_edges == 6
    assert g.neighbors(3) == [0, 1, 2, 4]
    p = fbesag.partition(g, ["b", "b", "b", "a", "a"])
    assert p.n_subregions == 2
    assert p.labels == [0, 0, 0, 1, 1]
    assert p.names == ["b", "a"]
    assert fbesag.parse_graph(g.to_text()).edges() == g.edges()


def test_precision_two_regions():
    g = five_area()
    p = fbesag.partition(g, [1, 1, 1, 2, 2])
    q = fbesag.precision(g, p, np.array([1.0, 2.0])).toarray()
    assert q[0, 0] == pytest.approx(2.5)
    assert q[0, 3] == pytest.approx(-1.5)
    assert np.allclose(q, q.T)
    assert np.allclose(q.sum(axis=1), 0)
    flat = fbesag.precision(g, p, np.array([3.0, 3.0])).toarray()
    assert np.allclose(flat, fbesag.besag_precision(g, 3.0).toarray())


def test_sample_field_sums_to_zero():
    g = fbesag.grid_graph(4, 4)
    x = fbesag.sample_field(g, fbesag.single_region(g), np.array([1.0]), seed=3)
    assert x.shape == (16,)
    assert abs(x.sum()) < 1e-8


def test_prior():
    lam = fbesag.lambda_from(1.0, 1e-5)
    assert lam == pytest.approx(-math.log(1e-5))
    xs = np.linspace(-40, 80, 20001)
    dens = np.exp([fbesag.log_pc_prior(x, lam) for x in xs])
    assert np.trapezoid(dens, xs) == pytest.approx(1.0, abs=1e-6)
    draws = fbesag.sample_prior(3, 2000, seed=5)
    assert draws.shape == (2000, 3)
    gamma = draws - draws.mean(axis=1, keepdims=True)
    assert np.all(np.isfinite(fbesag.log_joint_pc_prior(draws[0])))
    assert 0.1 < gamma.std() < 0.2


def test_fit_and_errors():
    g = fbesag.grid_graph(3, 3)
    p = fbesag.partition(g, [0, 0, 0, 1, 1, 1, 1, 1, 1])
    counts = [3, 5, 2, 8, 6, 4, 7, 5, 9]
    f = fbesag.fit(g, p, counts, theta_draws=300, dic_draws=300)
    assert f.converged
    assert f.theta_names == ["log_tau[0]", "log_tau[1]"]
    assert len(f.latent_mean) == 10
    assert math.isfinite(f.dic) and math.isfinite(f.log_ml)
    again = fbesag.fit(g, p, counts, theta_draws=300, dic_draws=300)
    assert again.dic == f.dic
    with pytest.raises(ValueError):
        fbesag.fit(g, p, counts[:-1], offsets=[1.0] * 9)
    with pytest.raises(fbesag.ParseError):
        fbesag.parse_graph("2\n1 1 x\n2 1 1\n")


def test_run_cli(tmp_path):
    code, out, err = fbesag.run_cli(["--help"])
    assert code == 0
    assert "fit" in out + err
    code, _, err = fbesag.run_cli(["fit", "--graph", str(tmp_path / "missing.graph")])
    assert code != 0 and err
