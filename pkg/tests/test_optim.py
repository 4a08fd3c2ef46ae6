import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from additive_ae import network as nw
from additive_ae.optim import OptimSettings, check_gradient, minimize


def quadratic(A, b):
    def f(x):
        return 0.5 * x @ A @ x - b @ x, A @ x - b
    return f


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


def spd(rng, d, cond=50.0):
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return Q @ np.diag(np.geomspace(1, cond, d)) @ Q.T


@pytest.mark.parametrize("d", [1, 2, 5, 10, 50])
def test_quadratic(d, rng):
    c = rng.normal(size=d)
    res = minimize(lambda x: (float((x - c) @ (x - c)), 2 * (x - c)), np.zeros(d),
                   OptimSettings(grad_tol=1e-10))
    assert res.iterations <= d + 5
    np.testing.assert_allclose(res.x, c, atol=1e-8)


@pytest.mark.parametrize("d", [5, 10])
def test_ill_conditioned_quadratic(d, rng):
    A = spd(rng, d)
    b = rng.normal(size=d)
    res = minimize(quadratic(A, b), np.zeros(d), OptimSettings(grad_tol=1e-10))
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-8)


def test_rosenbrock():
    res = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimSettings(grad_tol=1e-10))
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)
    assert res.stop_reason == "grad_tol"


def test_stationary_start():
    res = minimize(lambda x: (float(x @ x), 2 * x), np.zeros(4))
    assert res.iterations == 0 and res.stop_reason == "grad_tol"


def test_max_iters_zero(rng):
    x0 = rng.normal(size=3)
    res = minimize(lambda x: (float(x @ x), 2 * x), x0, OptimSettings(max_iters=0))
    assert res.stop_reason == "max_iters"
    assert np.array_equal(res.x, x0)


@hsettings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 8))
def test_history_monotone(seed, d):
    rng = np.random.default_rng(seed)
    A = spd(rng, d, cond=1e3)
    res = minimize(quadratic(A, rng.normal(size=d)), rng.normal(size=d))
    h = np.array(res.cost_history)
    assert np.all(np.diff(h) <= 0)
    assert len(res.grad_norm_history) == len(h) == res.iterations + 1


def test_deterministic(rng):
    A = spd(rng, 6)
    b = rng.normal(size=6)
    r1 = minimize(quadratic(A, b), np.ones(6))
    r2 = minimize(quadratic(A, b), np.ones(6))
    assert np.array_equal(r1.x, r2.x) and r1.cost_history == r2.cost_history


def test_rel_cost_stop():
    # no stationary point: the gradient never vanishes, the cost levels off at 1
    res = minimize(lambda x: (float(1.0 + np.exp(-x[0])), np.array([-np.exp(-x[0])])),
                   np.array([0.0]), OptimSettings(grad_tol=0.0))
    assert res.stop_reason == "rel_cost"
    assert res.cost - 1.0 < 1e-8


def test_line_search_failure_is_reported():
    # gradient points the wrong way: no step decreases the function
    res = minimize(lambda x: (float(x @ x), -2 * x), np.ones(2))
    assert res.stop_reason == "line_search_failure"
    assert res.iterations == 0


def test_check_gradient():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([1.0, -1.0])
    f = quadratic(A, b)
    x = np.array([0.3, -0.7])
    assert check_gradient(f, x) <= 1e-9

    def bad(x):
        J, g = f(x)
        g = g.copy()
        g[1] *= 1.1
        return J, g

    assert check_gradient(bad, x) > 1e-2


def test_check_gradient_network(rng):
    a = nw.build_architecture("5Sym", 6, 1)
    ws = nw.init_weights(a, nw.TrainConfig(alpha=1e-2))
    obj = nw.make_objective(ws, a, rng.normal(size=(8, 6)))
    assert check_gradient(obj, nw.flatten(ws) + rng.uniform(-0.3, 0.3, a.n_params)) <= 1e-6


def test_identity_network_fits_linear_data(rng):
    # data on a line through the origin, scaled into tanh's near-linear range
    t = rng.uniform(-0.05, 0.05, size=(40, 1))
    X = t @ np.array([[0.6, 0.8]])
    a = nw.build_architecture("1Hid", 2, 1)
    ws = nw.init_weights(a, nw.TrainConfig(alpha=0.0, seed=1))
    res = minimize(nw.make_objective(ws, a, X), nw.flatten(ws), OptimSettings(grad_tol=1e-12))
    assert res.cost <= 1e-8


def test_dump_history(tmp_path, rng):
    res = minimize(quadratic(spd(rng, 3), np.ones(3)), np.zeros(3))
    res.dump_history(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "iteration,cost,grad_norm"
    assert len(lines) == res.iterations + 2
    assert float(lines[-1].split(",")[1]) == res.cost


@pytest.mark.parametrize("kw", [dict(wolfe_c1=0.9, wolfe_c2=0.5), dict(wolfe_c2=1.0),
                                dict(memory_pairs=0), dict(max_iters=-1)])
def test_settings_validation(kw):
    with pytest.raises(ValueError):
        OptimSettings(**kw)


def test_check_gradient_step():
    with pytest.raises(ValueError):
        check_gradient(lambda x: (0.0, x), np.zeros(1), step=0)
