import numpy as np
import pytest

import lqr_homotopy as lh
from lqr_homotopy.optim import fit_decay_rate


@pytest.fixture(scope="module")
def setup():
    prob, pc, dist, _, _ = lh.reference_instantiation()
    return prob, pc, dist


def test_gradient_gamma_zero_closed_form(setup):
    # one-step cost E[x^2 + R u^2] with u = theta . phi(x):
    # grad = 2 R E[u phi(x)]
    prob, pc, dist = setup
    theta = np.array([0.4, -0.9])
    rep = lh.cost_gradient(prob, pc.policy(theta), dist, 0.0, T=1)
    X0, W = dist.support_points()
    Phi = pc.feature_matrix(X0)[:, 0, :]  # (b, 2)
    u = Phi @ theta
    expected = 2.0 * prob.R[0, 0] * (W * u) @ Phi
    assert np.allclose(rep.grad, expected, atol=1e-12)
    assert rep.horizon_used == 1


def test_gradient_matches_fd_away_from_kinks(setup):
    prob, pc, dist = setup
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 20:
        theta = rng.uniform(-1.5, 1.5, 2)
        try:
            rep = lh.cost_gradient(prob, pc.policy(theta), dist, 0.5, T=12)
        except lh.UnstableRolloutError:
            continue
        if rep.kink_hits > 0:
            continue
        fd = lh.fd_gradient(prob, pc.policy(theta), dist, 0.5, T=12)
        rel = np.max(np.abs(rep.grad - fd)) / max(np.max(np.abs(fd)), 1e-8)
        assert rel < 1e-5
        checked += 1


def test_gradient_vanishes_at_optimum(setup):
    prob, pc, dist = setup
    sol = lh.solve_dare(prob, 0.5)
    th = lh.optimal_theta(pc, sol)
    rep = lh.cost_gradient(prob, pc.policy(th), dist, 0.5, T=200)
    assert np.max(np.abs(rep.grad)) <= 1e-6


def test_gradient_truncation_decay(setup):
    # stationarity defect of the truncated cost shrinks geometrically in T
    prob, pc, dist = setup
    g = 0.9
    sol = lh.solve_dare(prob, g)
    th = lh.optimal_theta(pc, sol) + np.array([0.05, 0.0])
    norms = []
    fixed = lh.cost_gradient(prob, pc.policy(th), dist, g, T=400).grad
    for T in (10, 20, 40):
        rep = lh.cost_gradient(prob, pc.policy(th), dist, g, T=T)
        norms.append(np.max(np.abs(rep.grad - fixed)))
    assert norms[0] > norms[1] > norms[2] or norms[2] < 1e-12


def test_kink_hits_flagged_at_deliberate_collision(setup):
    # theta = (0, 1) drives both atoms exactly onto the small tent apexes
    prob, pc, dist = setup
    rep = lh.cost_gradient(prob, pc.policy([0.0, 1.0]), dist, 0.5, T=5)
    assert rep.kink_hits >= 2
    fd = lh.fd_gradient(prob, pc.policy([0.0, 1.0]), dist, 0.5, T=5)
    # the one-sided derivative disagrees with two-sided differences here
    assert np.max(np.abs(rep.grad - fd)) > 1.0


def test_fd_gradient_on_exactly_quadratic_cost():
    # at gamma=0 the cost is an exact quadratic in theta, so central
    # differences are exact up to roundoff: grad = 2 R E[u phi(x)]
    prob, pc, dist, _, _ = lh.reference_instantiation()
    theta = np.array([0.3, 0.2])
    fd = lh.fd_gradient(prob, pc.policy(theta), dist, 0.0, T=1, h=1e-4)
    X0, W = dist.support_points()
    Phi = pc.feature_matrix(X0)[:, 0, :]
    u = Phi @ theta
    expected = 2.0 * prob.R[0, 0] * (W * u) @ Phi
    assert np.allclose(fd, expected, atol=1e-9)


def test_pg_inner_exits_immediately_at_optimum(setup):
    prob, pc, dist = setup
    sol = lh.solve_dare(prob, 0.5)
    th0 = lh.optimal_theta(pc, sol)
    th, log = lh.pg_inner(prob, pc, th0, dist, 0.5,
                          lh.PgConfig(max_iters=10))
    assert log.tag == "converged"
    assert log.iterations <= 1
    assert np.allclose(th, th0)


def test_pg_inner_accepted_steps_never_increase_cost(setup):
    prob, pc, dist = setup
    th, log = lh.pg_inner(prob, pc, [0.5, -0.5], dist, 0.5,
                          lh.PgConfig(max_iters=300))
    costs = np.array(log.costs)
    assert np.all(np.diff(costs) <= 1e-10)


def test_pg_inner_iteration_cap_tag(setup):
    prob, pc, dist = setup
    th, log = lh.pg_inner(prob, pc, [0.5, -0.5], dist, 0.5,
                          lh.PgConfig(max_iters=3))
    assert log.tag in ("hit_iteration_cap", "stalled")


def test_pg_inner_gamma_zero_converges_to_zero(setup):
    prob, pc, _ = setup
    x0 = lh.preimage_on_descending_spike(pc, 1.5)
    y0 = lh.preimage_on_descending_spike(pc, 1.8)
    dist = lh.make_mu0(0.3, x0, y0, nodes=64)
    th, log = lh.pg_inner(prob, pc, [3.0, -2.0], dist, 0.0,
                          lh.PgConfig(step_size=5e-2, max_iters=100_000))
    assert np.linalg.norm(th) < 1e-3


def test_hessian_gamma_zero_closed_form(setup):
    # at gamma=0 the cost is exactly quadratic: hessian = 2R E[phi phi']
    prob, pc, dist = setup
    H = lh.hessian_at(prob, pc, [0.2, 0.1], dist, 0.0, T=1)
    X0, W = dist.support_points()
    Phi = pc.feature_matrix(X0)[:, 0, :]
    expected = 2.0 * prob.R[0, 0] * (Phi.T * W) @ Phi
    assert np.allclose(H, expected, atol=1e-6)


def test_hessian_positive_definite_at_optimum(setup):
    prob, pc, dist = setup
    sol = lh.solve_dare(prob, 0.5)
    th = lh.optimal_theta(pc, sol)
    H = lh.hessian_at(prob, pc, th, dist, 0.5, T=60)
    assert np.linalg.eigvalsh(H).min() > 0


def test_hessian_series_matches_fd(setup):
    prob, pc, dist = setup
    for g in (0.0, 0.5):
        sol = lh.solve_dare(prob, g)
        th = lh.optimal_theta(pc, sol)
        T = 60
        H_fd = lh.hessian_at(prob, pc, th, dist, g, T)
        H_se = lh.hessian_series(prob, pc, th, dist, g, sol.P, T)
        assert np.max(np.abs(H_fd - H_se)) < 1e-4


def test_train_log_csv_roundtrip(tmp_path, setup):
    prob, pc, dist = setup
    _, log = lh.pg_inner(prob, pc, [0.5, -0.5], dist, 0.5,
                         lh.PgConfig(max_iters=5))
    path = tmp_path / "log.csv"
    log.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iter,gamma,cost,grad_norm,theta_0,theta_1"
    assert len(lines) == log.iterations + 1
    first = lines[1].split(",")
    assert float(first[2]) == pytest.approx(log.costs[0])


def test_fit_decay_rate_recovers_known_rate():
    gaps = 3.0 * np.exp(-0.01 * np.arange(200))
    assert fit_decay_rate(gaps) == pytest.approx(0.01, rel=1e-9)


def test_pg_config_validation():
    with pytest.raises(ValueError):
        lh.PgConfig(step_size=0.0)
    with pytest.raises(ValueError):
        lh.PgConfig(max_iters=0)
    with pytest.raises(ValueError):
        lh.PgConfig(horizon=0)
