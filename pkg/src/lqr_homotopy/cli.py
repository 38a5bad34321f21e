"""Command-line front end: JSON experiment configs in, CSV/JSON results out.

Subcommands:
    dare       solve the discounted Riccati equation over a gamma grid
    train      run the continuation loop or the fixed-gamma baseline
    landscape  dense cost grid around a parameter point
    verify     directional local-minimum check at theta = (0, 1)
    gradcheck  exact gradient vs central finite differences

Exit codes: 0 success, 1 malformed config, 2 Riccati solver failure,
3 training divergence, 4 verification found a negative cost change.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .counterexample import (
    landscape_grid,
    make_mu0,
    preimage_on_descending_spike,
    reference_instantiation,
    verify_local_min,
)
from .errors import (
    ConfigError,
    DareConvergenceError,
    DivergenceError,
    UnstableRolloutError,
)
from .homotopy import (
    DEFAULT_GAMMA_MAX,
    DEFAULT_GAMMA_STEP,
    HomotopySchedule,
    run_homotopy,
    run_vanilla,
)
from .optim import PgConfig, cost_gradient, fd_gradient
from .policies import (
    PolicyClass,
    make_counterexample_class,
    make_random_features_class,
)
from .problem import InitialDistribution, LqrProblem, discounted_cost
from .riccati import gamma_sweep, optimal_cost, optimal_theta, solve_dare

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DARE = 2
EXIT_DIVERGED = 3
EXIT_FINDING = 4

MODES = ("homotopy", "vanilla", "dare", "landscape", "verify", "gradcheck")


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"missing required field '{path}{key}'",
                          field=path + key)
    return cfg[key]


def parse_problem(d: dict) -> LqrProblem:
    if "scalar" in d:
        s = d["scalar"]
        return LqrProblem.scalar(
            _require(s, "a", "problem.scalar."),
            _require(s, "b", "problem.scalar."),
            _require(s, "q", "problem.scalar."),
            _require(s, "r", "problem.scalar."),
        )
    for k in ("A", "B", "Q", "R"):
        _require(d, k, "problem.")
    return LqrProblem.from_dict(d)


def parse_policy_class(d: dict, seed: int) -> PolicyClass:
    if "counterexample" in d:
        delta = d["counterexample"].get("delta", 5e-4)
        return make_counterexample_class(delta)
    if "random_features" in d:
        rf = d["random_features"]
        return make_random_features_class(
            _require(rf, "n", "policy_class.random_features."),
            rf.get("seed", seed),
        )
    if "bases" in d:
        return PolicyClass.from_dict(d)
    raise ConfigError(
        "policy_class needs one of: counterexample, random_features, bases",
        field="policy_class",
    )


def parse_dist(d: dict, pclass: PolicyClass) -> InitialDistribution:
    if "mu0" in d:
        m = d["mu0"]
        x0 = preimage_on_descending_spike(pclass, m.get("x0_target", 1.5))
        y0 = preimage_on_descending_spike(pclass, m.get("y0_target", 1.8))
        return make_mu0(m.get("eps", 0.0), x0, y0,
                        nodes=m.get("nodes", 512))
    return InitialDistribution.from_dict(d)


def parse_schedule(cfg: dict) -> HomotopySchedule:
    sched = cfg.get("schedule", {})
    rule = sched.get("advance_rule", "grad_tol_trigger")
    if "gammas" in sched:
        return HomotopySchedule(tuple(sched["gammas"]), rule)
    return HomotopySchedule.arithmetic(
        step=sched.get("step", DEFAULT_GAMMA_STEP),
        gamma_max=sched.get("gamma_max", DEFAULT_GAMMA_MAX),
        advance_rule=rule,
    )


def parse_pg(cfg: dict) -> PgConfig:
    pg = cfg.get("pg", {})
    try:
        return PgConfig(
            step_size=pg.get("step_size", 1e-3),
            grad_tol=pg.get("grad_tol", 1e-4),
            max_iters=pg.get("max_iters", 100_000),
            horizon=pg.get("horizon", "auto"),
        )
    except ValueError as exc:
        raise ConfigError(f"bad pg config: {exc}", field="pg") from exc


class Experiment:
    """Parsed and validated experiment configuration."""

    def __init__(self, cfg: dict, out_dir: str | None = None,
                 seed: int | None = None):
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be an object", field="")
        self.raw = cfg
        self.mode = _require(cfg, "mode", "")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}", field="mode")
        self.seed = int(seed if seed is not None else cfg.get("seed", 0))
        self.out_dir = Path(out_dir or cfg.get("output_dir", "."))
        try:
            self.problem = parse_problem(_require(cfg, "problem", ""))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad problem: {exc}", field="problem") from exc
        self.pclass = None
        self.dist = None
        if "policy_class" in cfg:
            self.pclass = parse_policy_class(cfg["policy_class"], self.seed)
        if "dist" in cfg:
            if self.pclass is None:
                raise ConfigError("dist requires policy_class",
                                  field="dist")
            try:
                self.dist = parse_dist(cfg["dist"], self.pclass)
            except ValueError as exc:
                raise ConfigError(f"bad dist: {exc}", field="dist") from exc

    def require_class_and_dist(self):
        if self.pclass is None:
            raise ConfigError("this mode requires policy_class",
                              field="policy_class")
        if self.dist is None:
            raise ConfigError("this mode requires dist", field="dist")

    def serialized(self) -> dict:
        """Round-trippable canonical form of the parsed config."""
        out = {
            "mode": self.mode,
            "seed": self.seed,
            "output_dir": str(self.out_dir),
            "problem": self.problem.to_dict(),
        }
        if self.pclass is not None:
            out["policy_class"] = self.pclass.to_dict()
        if self.dist is not None:
            out["dist"] = self.dist.to_dict()
        for key in ("gamma", "gammas", "schedule", "pg", "theta0",
                    "landscape", "verify", "gradcheck"):
            if key in self.raw:
                out[key] = self.raw[key]
        return out


def _float_cell(v: float) -> str:
    return repr(float(v))


def cmd_dare(exp: Experiment) -> int:
    gammas = exp.raw.get("gammas")
    if gammas is None:
        sched = parse_schedule(exp.raw)
        gammas = sched.gammas
    try:
        sols = gamma_sweep(exp.problem, gammas)
    except DareConvergenceError as exc:
        print(f"error: Riccati solve failed at gamma={exc.gamma}: {exc}",
              file=sys.stderr)
        return EXIT_DARE
    n, m = exp.problem.n, exp.problem.m
    if exp.dist is not None:
        dist = exp.dist
    else:
        dist = InitialDistribution(
            atoms=tuple((e, 1.0 / n) for e in np.eye(n))
        )
    path = exp.out_dir / "dare.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["gamma"]
        header += [f"P_{i}_{j}" for i in range(n) for j in range(n)]
        header += [f"K_{i}_{j}" for i in range(m) for j in range(n)]
        header += ["residual", "optimal_cost"]
        w.writerow(header)
        for sol in sols:
            row = [_float_cell(sol.gamma)]
            row += [_float_cell(v) for v in sol.P.flat]
            row += [_float_cell(v) for v in sol.K_star.flat]
            row += [_float_cell(sol.residual),
                    _float_cell(optimal_cost(exp.problem, sol, dist))]
            w.writerow(row)
    print(f"wrote {path} ({len(sols)} rows)")
    return EXIT_OK


def cmd_train(exp: Experiment) -> int:
    exp.require_class_and_dist()
    cfg = parse_pg(exp.raw)
    theta0 = np.asarray(
        exp.raw.get("theta0", np.zeros(exp.pclass.d)), dtype=float
    )
    csv_path = exp.out_dir / "train.csv"
    json_path = exp.out_dir / "summary.json"
    try:
        if exp.mode == "homotopy":
            sched = parse_schedule(exp.raw)
            log = run_homotopy(exp.problem, exp.pclass, theta0, exp.dist,
                               sched, cfg)
            log.write_csv(csv_path)
            summary = log.summary_dict()
            summary["final_theta"] = list(log.final_theta)
            summary["final_gap"] = log.final_gap
        else:
            gamma = float(_require(exp.raw, "gamma", ""))
            theta, tlog = run_vanilla(exp.problem, exp.pclass, theta0,
                                      exp.dist, gamma, cfg)
            with open(csv_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["stage"] + tlog.csv_header())
                for row in tlog.csv_rows():
                    w.writerow([0] + row)
            sol = solve_dare(exp.problem, gamma)
            oracle = optimal_cost(exp.problem, sol, exp.dist)
            final_cost = discounted_cost(
                exp.problem, exp.pclass.policy(theta), exp.dist, gamma
            )
            summary = {
                "final_theta": list(theta),
                "final_cost": final_cost,
                "oracle_optimal_cost": oracle,
                "final_gap": final_cost - oracle,
                "tag": tlog.tag,
                "iterations": tlog.iterations,
            }
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except DareConvergenceError as exc:
        print(f"error: Riccati solve failed at gamma={exc.gamma}: {exc}",
              file=sys.stderr)
        return EXIT_DARE
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def cmd_landscape(exp: Experiment) -> int:
    exp.require_class_and_dist()
    ls = exp.raw.get("landscape", {})
    gamma = float(exp.raw.get("gamma", 0.5))
    ax0, ax1, costs = landscape_grid(
        exp.problem, exp.pclass, exp.dist, gamma,
        center=ls.get("center", [0.0, 1.0]),
        half_widths=ls.get("half_widths", [0.05, 0.05]),
        resolution=int(ls.get("resolution", 101)),
        horizon=int(ls.get("horizon", 5)),
    )
    path = exp.out_dir / "landscape.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta0", "theta1", "cost"])
        for i, t0 in enumerate(ax0):
            for j, t1 in enumerate(ax1):
                w.writerow([_float_cell(t0), _float_cell(t1),
                            _float_cell(costs[i, j])])
    print(f"wrote {path} ({costs.size} rows)")
    return EXIT_OK


def cmd_verify(exp: Experiment) -> int:
    exp.require_class_and_dist()
    v = exp.raw.get("verify", {})
    gamma = float(exp.raw.get("gamma", 0.5))
    report = verify_local_min(
        exp.problem, exp.pclass, exp.dist, gamma,
        radius=float(v.get("radius", 1e-4)),
        n_directions=int(v.get("n_directions", 360)),
        horizon=int(v.get("horizon", 5)),
    )
    path = exp.out_dir / "verify.json"
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    print(f"wrote {path} (min_ratio={report.min_ratio:.6g})")
    if not report.all_positive:
        print(
            f"finding: {len(report.negative_samples)} perturbation(s) did "
            f"not increase the cost; see {path}", file=sys.stderr,
        )
        return EXIT_FINDING
    return EXIT_OK


def cmd_gradcheck(exp: Experiment) -> int:
    exp.require_class_and_dist()
    gc = exp.raw.get("gradcheck", {})
    gammas = gc.get("gammas", [0.0, 0.5, 0.9])
    n_points = int(gc.get("n_points", 50))
    scale = float(gc.get("theta_scale", 2.0))
    # short horizon keeps decaying trajectories away from the |x| kink at 0
    T = int(gc.get("horizon", 12))
    h = float(gc.get("h", 1e-6))
    rng = np.random.default_rng(exp.seed)
    path = exp.out_dir / "gradcheck.csv"
    max_err = 0.0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "point", "rel_err", "kink_hits"])
        for gamma in gammas:
            done = 0
            attempts = 0
            while done < n_points:
                attempts += 1
                if attempts > 100 * n_points:
                    raise ConfigError(
                        "could not sample enough kink-free stable points; "
                        "reduce theta_scale or horizon",
                        field="gradcheck",
                    )
                theta = scale * rng.standard_normal(exp.pclass.d)
                policy = exp.pclass.policy(theta)
                try:
                    rep = cost_gradient(exp.problem, policy, exp.dist,
                                        float(gamma), T=T)
                except UnstableRolloutError:
                    continue
                if rep.kink_hits > 0:
                    continue  # kink collision: gradient not trustworthy
                fd = fd_gradient(exp.problem, policy, exp.dist,
                                 float(gamma), T=T, h=h)
                denom = max(float(np.max(np.abs(fd))), 1e-8)
                err = float(np.max(np.abs(rep.grad - fd))) / denom
                max_err = max(max_err, err)
                w.writerow([_float_cell(gamma), done, _float_cell(err),
                            rep.kink_hits])
                done += 1
    summary_path = exp.out_dir / "gradcheck.json"
    with open(summary_path, "w") as fh:
        json.dump({"max_rel_err": max_err, "n_points": n_points,
                   "gammas": list(gammas)}, fh, indent=2)
        fh.write("\n")
    print(f"wrote {path} (max rel err {max_err:.3e})")
    return EXIT_OK


_DISPATCH = {
    "dare": cmd_dare,
    "train": cmd_train,
    "landscape": cmd_landscape,
    "verify": cmd_verify,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lqr-homotopy",
        description="Discounted LQR training and verification experiments",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name in _DISPATCH:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True,
                        help="path to a JSON experiment config")
        sp.add_argument("--out", default=None,
                        help="output directory (default: config output_dir)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        exp = Experiment(cfg, out_dir=args.out, seed=args.seed)
        if args.command == "train":
            if exp.mode not in ("homotopy", "vanilla"):
                raise ConfigError("train requires mode homotopy or vanilla",
                                  field="mode")
        elif exp.mode != args.command:
            raise ConfigError(
                f"config mode '{exp.mode}' does not match command "
                f"'{args.command}'", field="mode",
            )
        exp.out_dir.mkdir(parents=True, exist_ok=True)
        return _DISPATCH[args.command](exp)
    except ConfigError as exc:
        print(f"error: config field '{exc.field}': {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
