import numpy as np
import pytest

import lqr_homotopy as lh
from lqr_homotopy.errors import ConfigError


@pytest.fixture(scope="module")
def trap():
    prob, pc, dist, _, _ = lh.reference_instantiation()
    return prob, pc, dist


def test_schedule_validation():
    with pytest.raises(ConfigError):
        lh.HomotopySchedule((0.5, 0.5))
    with pytest.raises(ConfigError):
        lh.HomotopySchedule((0.2, 0.1))
    with pytest.raises(ConfigError):
        lh.HomotopySchedule((0.0, 1.2))
    with pytest.raises(ConfigError):
        lh.HomotopySchedule((0.0, 0.5), advance_rule="bogus")


def test_arithmetic_schedule_default():
    s = lh.HomotopySchedule.arithmetic()
    assert s.gammas[0] == 0.0
    assert s.gammas[-1] == pytest.approx(0.98)
    assert len(s.gammas) == 50
    steps = np.diff(s.gammas)
    assert np.allclose(steps, 0.02)


def test_single_stage_schedule_is_gamma_zero_descent(trap):
    prob, pc, dist = trap
    sched = lh.HomotopySchedule((0.0,))
    log = lh.run_homotopy(prob, pc, [2.0, -1.0], dist, sched,
                          lh.PgConfig(step_size=5e-2, grad_tol=1e-6))
    assert len(log.stages) == 1
    assert np.linalg.norm(log.final_theta) < 1e-3


def test_homotopy_tracks_oracle_on_trap_problem(trap):
    # A = 0 means theta* = (0, 0) for every gamma; starting there, every
    # stage exits immediately with zero gap
    prob, pc, dist = trap
    sched = lh.HomotopySchedule.arithmetic(gamma_max=0.9)
    log = lh.run_homotopy(prob, pc, [0.0, 0.0], dist, sched, lh.PgConfig())
    assert not log.incomplete
    assert len(log.stages) == len(sched.gammas)
    for s in log.stages:
        assert abs(s.gap) <= 1e-3 * (1.0 + s.oracle_optimal_cost)
    # oracle cost is nondecreasing in gamma
    oc = [s.oracle_optimal_cost for s in log.stages]
    assert all(b >= a - 1e-12 for a, b in zip(oc, oc[1:]))


def test_vanilla_traps_and_homotopy_escapes(trap):
    prob, pc, dist = trap
    gamma = 0.5
    theta_v, vlog = lh.run_vanilla(prob, pc, [0.0, 1.0], dist, gamma,
                                   lh.PgConfig(max_iters=2000))
    assert np.abs(theta_v - np.array([0.0, 1.0])).sum() < 1e-2
    sol = lh.solve_dare(prob, gamma)
    oracle = lh.optimal_cost(prob, sol, dist)
    trapped_cost = lh.discounted_cost(prob, pc.policy(theta_v), dist, gamma)
    assert trapped_cost - oracle > 0.5
    # the oracle optimum is far from the trap in parameter space
    th_star = lh.optimal_theta(pc, sol)
    assert np.abs(th_star - np.array([0.0, 1.0])).sum() > 0.9
    # continuation from the gamma=0 solution reaches the global optimum
    sched = lh.HomotopySchedule((0.0, 0.25, gamma))
    hlog = lh.run_homotopy(prob, pc, [0.0, 0.0], dist, sched, lh.PgConfig())
    assert hlog.final_gap <= 1e-3 * (1.0 + oracle)


def test_vanilla_exits_immediately_at_optimum(trap):
    prob, pc, dist = trap
    sol = lh.solve_dare(prob, 0.5)
    th0 = lh.optimal_theta(pc, sol)
    theta, log = lh.run_vanilla(prob, pc, th0, dist, 0.5, lh.PgConfig())
    assert log.iterations <= 1 and log.tag == "converged"


def test_fixed_grid_rule_spends_stage_budget(trap):
    prob, pc, dist = trap
    sched = lh.HomotopySchedule((0.0, 0.1), advance_rule="fixed_grid")
    log = lh.run_homotopy(prob, pc, [0.3, 0.0], dist, sched,
                          lh.PgConfig(max_iters=25))
    for s in log.stages:
        assert s.tag in ("hit_iteration_cap", "stalled")
        assert s.iterations_used <= 25


def test_gamma_one_requires_stability_check():
    # rho(A) > 1 with zero gain would be unstable, but the optimal gain
    # stabilizes; a gamma=1 endpoint must come after earlier stages
    prob = lh.LqrProblem.scalar(0.5, 1.0, 1.0, 0.1)
    pc = lh.make_counterexample_class(5e-4)
    dist = lh.InitialDistribution(atoms=(([1.0], 1.0),))
    with pytest.raises(ConfigError):
        # no preceding stage: nothing to verify stability with
        lh.run_homotopy(prob, pc, [0.0, 0.0], dist,
                        lh.HomotopySchedule((1.0,)), lh.PgConfig())
    sched = lh.HomotopySchedule((0.0, 0.5, 1.0))
    log = lh.run_homotopy(prob, pc, [0.0, 0.0], dist, sched,
                          lh.PgConfig(step_size=1e-2, max_iters=4000))
    assert log.stages[-1].gamma == 1.0
    assert np.isfinite(log.stages[-1].oracle_optimal_cost)


def test_warm_start_proximity(trap):
    # at stage exit the iterate is near the stage optimum: the gradient
    # bound ||theta - theta*|| <= ||grad|| / lambda_min up to slack
    prob, pc, dist = trap
    sched = lh.HomotopySchedule((0.0, 0.3, 0.6))
    cfg = lh.PgConfig(grad_tol=1e-5)
    log = lh.run_homotopy(prob, pc, [0.0, 0.0], dist, sched, cfg)
    for s in log.stages:
        sol = lh.solve_dare(prob, s.gamma)
        th_star = lh.optimal_theta(pc, sol)
        H = lh.hessian_at(prob, pc, th_star, dist, s.gamma, T=60)
        lam = np.linalg.eigvalsh(H).min()
        bound = 2.0 * cfg.grad_tol / lam + 1e-9
        assert np.linalg.norm(s.theta_at_exit - th_star) <= bound


def test_homotopy_csv_and_summary(tmp_path, trap):
    prob, pc, dist = trap
    sched = lh.HomotopySchedule((0.0, 0.2))
    log = lh.run_homotopy(prob, pc, [0.0, 0.0], dist, sched, lh.PgConfig())
    csv_path = tmp_path / "train.csv"
    json_path = tmp_path / "summary.json"
    log.write_csv(csv_path)
    log.write_summary(json_path)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "stage,iter,gamma,cost,grad_norm,theta_0,theta_1"
    import json

    summary = json.loads(json_path.read_text())
    assert len(summary["stages"]) == 2
    assert summary["stages"][1]["gamma"] == 0.2


def test_propose_gamma_step_full_range_when_optimum_constant(trap):
    # A = 0: theta* is gamma-independent, so the whole range is admissible
    prob, pc, _ = trap
    d = lh.propose_gamma_step(prob, pc, 0.5, trust=1e-6)
    assert d == pytest.approx(0.48)


def test_propose_gamma_step_monotone_in_trust(benchmark_problem):
    pc = lh.make_counterexample_class(5e-4)
    steps = [
        lh.propose_gamma_step(benchmark_problem, pc, 0.5, trust=t,
                              grid_step=0.001)
        for t in (1e-1, 1e-2, 1e-3, 1e-6)
    ]
    assert all(b <= a for a, b in zip(steps, steps[1:]))
    assert steps[0] > steps[-1]
    assert steps[-1] >= 0.0


def test_propose_gamma_step_benchmark_trust(benchmark_problem):
    pc = lh.make_counterexample_class(5e-4)
    for g in (0.0, 0.3, 0.6, 0.9):
        assert lh.propose_gamma_step(benchmark_problem, pc, g,
                                     trust=0.05) >= 0.02
