"""Discount-factor continuation: repeated inner solves along a gamma grid.

The outer loop starts from a small discount factor (where gradient descent
converges globally), solves the inner problem, then increases gamma and
warm-starts the next solve from the previous exit point. The fixed-gamma
baseline is provided for head-to-head comparison.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .optim import PgConfig, TrainLog, pg_inner
from .policies import PolicyClass
from .problem import InitialDistribution, LqrProblem, discounted_cost
from .riccati import optimal_cost, optimal_theta, solve_dare

DEFAULT_GAMMA_STEP = 0.02
DEFAULT_GAMMA_MAX = 0.98

ADVANCE_RULES = ("fixed_grid", "grad_tol_trigger")


@dataclass(frozen=True)
class HomotopySchedule:
    """Strictly increasing discount grid plus the stage-advance rule."""

    gammas: tuple
    advance_rule: str = "grad_tol_trigger"

    def __post_init__(self):
        gammas = tuple(float(g) for g in self.gammas)
        if not gammas:
            raise ConfigError("schedule needs at least one gamma",
                              field="gammas")
        if any(b <= a for a, b in zip(gammas, gammas[1:])):
            raise ConfigError("gammas must be strictly increasing",
                              field="gammas")
        if gammas[0] < 0.0 or gammas[-1] > 1.0:
            raise ConfigError("gammas must lie in [0, 1]", field="gammas")
        if self.advance_rule not in ADVANCE_RULES:
            raise ConfigError(
                f"advance_rule must be one of {ADVANCE_RULES}",
                field="advance_rule",
            )
        object.__setattr__(self, "gammas", gammas)

    @classmethod
    def arithmetic(cls, step: float = DEFAULT_GAMMA_STEP,
                   gamma_max: float = DEFAULT_GAMMA_MAX,
                   advance_rule: str = "grad_tol_trigger",
                   ) -> "HomotopySchedule":
        """Grid 0, step, 2*step, ... up to gamma_max inclusive."""
        n = int(round(gamma_max / step))
        gammas = [k * step for k in range(n + 1)]
        if gammas[-1] < gamma_max - 1e-12:
            gammas.append(gamma_max)
        return cls(tuple(gammas), advance_rule)


@dataclass(frozen=True)
class StageRecord:
    """Exit state of one homotopy stage."""

    gamma: float
    iterations_used: int
    theta_at_exit: np.ndarray
    cost_at_exit: float
    oracle_optimal_cost: float
    gap: float
    tag: str


@dataclass
class HomotopyLog:
    """Per-stage records plus the concatenated inner training logs."""

    stages: list = field(default_factory=list)
    inner_logs: list = field(default_factory=list)
    incomplete: bool = False

    @property
    def final_theta(self) -> np.ndarray:
        return self.stages[-1].theta_at_exit

    @property
    def final_gap(self) -> float:
        return self.stages[-1].gap

    def summary_dict(self) -> dict:
        return {
            "incomplete": self.incomplete,
            "stages": [
                {
                    "gamma": s.gamma,
                    "iterations_used": s.iterations_used,
                    "theta_at_exit": list(np.asarray(s.theta_at_exit)),
                    "cost_at_exit": s.cost_at_exit,
                    "oracle_optimal_cost": s.oracle_optimal_cost,
                    "gap": s.gap,
                    "tag": s.tag,
                }
                for s in self.stages
            ],
        }

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path):
        """Concatenated inner rows with a leading `stage` column."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header_written = False
            for stage_idx, log in enumerate(self.inner_logs):
                if not header_written:
                    w.writerow(["stage"] + log.csv_header())
                    header_written = True
                for row in log.csv_rows():
                    w.writerow([stage_idx] + row)


def _stage_oracle(problem, pclass, dist, gamma, P0=None):
    sol = solve_dare(problem, gamma, P0=P0)
    return sol, optimal_cost(problem, sol, dist)


def closed_loop_stable(problem: LqrProblem, K: np.ndarray) -> bool:
    """Spectral radius of A + BK strictly below 1."""
    eig = np.linalg.eigvals(problem.A + problem.B @ np.asarray(K))
    return bool(np.max(np.abs(eig)) < 1.0)


def run_homotopy(problem: LqrProblem, pclass: PolicyClass, theta0,
                 dist: InitialDistribution, schedule: HomotopySchedule,
                 cfg: PgConfig = PgConfig()) -> HomotopyLog:
    """Warm-started inner solves along the schedule's gamma grid.

    With advance_rule 'grad_tol_trigger' each stage exits once both partial
    derivatives fall below cfg.grad_tol (or the iteration budget runs out);
    'fixed_grid' spends the full per-stage budget regardless of gradient
    size. A gamma = 1 endpoint is solved only after the closed loop at the
    previous stage's oracle gain is verified stable.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    log = HomotopyLog()
    stage_cfg = cfg
    if schedule.advance_rule == "fixed_grid":
        stage_cfg = dataclasses.replace(cfg, grad_tol=0.0)
    P_prev = None
    K_prev = None
    for stage_idx, gamma in enumerate(schedule.gammas):
        if gamma >= 1.0:
            if K_prev is None or not closed_loop_stable(problem, K_prev):
                raise ConfigError(
                    "gamma = 1 endpoint requires a verified stable closed "
                    "loop at the preceding stage's optimal gain",
                    field="gammas",
                )
        try:
            theta, inner = pg_inner(problem, pclass, theta, dist, gamma,
                                    stage_cfg)
        except DivergenceError as exc:
            raise DivergenceError(
                f"homotopy stage {stage_idx} (gamma={gamma}) diverged: {exc}",
                log=log,
            ) from exc
        sol, oracle = _stage_oracle(problem, pclass, dist, gamma, P0=P_prev)
        P_prev, K_prev = sol.P, sol.K_star
        cost_exit = discounted_cost(problem, pclass.policy(theta), dist,
                                    gamma)
        log.stages.append(StageRecord(
            gamma=gamma,
            iterations_used=inner.iterations,
            theta_at_exit=theta.copy(),
            cost_at_exit=cost_exit,
            oracle_optimal_cost=oracle,
            gap=cost_exit - oracle,
            tag=inner.tag,
        ))
        log.inner_logs.append(inner)
    if log.stages and log.stages[-1].tag == "hit_iteration_cap":
        log.incomplete = True
    return log


def run_vanilla(problem: LqrProblem, pclass: PolicyClass, theta0,
                dist: InitialDistribution, gamma: float,
                cfg: PgConfig = PgConfig()) -> tuple[np.ndarray, TrainLog]:
    """Fixed-gamma baseline: a single inner gradient-descent run."""
    return pg_inner(problem, pclass, theta0, dist, gamma, cfg)


def propose_gamma_step(problem: LqrProblem, pclass: PolicyClass,
                       gamma: float, trust: float,
                       grid_step: float = DEFAULT_GAMMA_STEP,
                       gamma_max: float = DEFAULT_GAMMA_MAX) -> float:
    """Largest grid-compatible gamma increment keeping theta* within trust.

    Bisects over multiples of grid_step for the largest delta with
    ||theta*(gamma + delta) - theta*(gamma)|| <= trust. Returns 0.0 when
    even a single grid step moves the optimum further than the trust
    radius. Riccati failures near gamma = 1 cap the search below them.
    """
    if gamma >= 1.0:
        raise ValueError("gamma must be below 1")
    if trust < 0 or grid_step <= 0:
        raise ValueError("trust must be >= 0 and grid_step > 0")
    sol0 = solve_dare(problem, gamma)
    theta_here = optimal_theta(pclass, sol0)
    k_max = int(np.floor((gamma_max - gamma) / grid_step + 1e-12))
    if k_max < 1:
        return 0.0

    def within_trust(k: int) -> bool:
        try:
            sol = solve_dare(problem, gamma + k * grid_step)
        except Exception:
            return False
        theta_k = optimal_theta(pclass, sol)
        return float(np.linalg.norm(theta_k - theta_here)) <= trust

    if not within_trust(1):
        return 0.0
    lo, hi = 1, k_max  # lo always admissible
    if within_trust(k_max):
        return k_max * grid_step
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if within_trust(mid):
            lo = mid
        else:
            hi = mid
    return lo * grid_step
