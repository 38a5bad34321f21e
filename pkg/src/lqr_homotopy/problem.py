"""Discounted LQR problem definition, rollouts and cost evaluation.

The environment is the deterministic linear system x_{t+1} = A x_t + B u_t
with quadratic stage cost x'Qx + u'Ru, discounted by gamma and averaged
over an initial-state distribution made of point masses plus (in 1-D) an
optional uniform density integrated by Gauss-Legendre quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, UnstableRolloutError

# Rollouts abort once a state norm passes this; unstable policies at large
# gamma otherwise produce non-finite costs silently.
STATE_OVERFLOW_GUARD = 1e9

# Cost magnitude treated as "unstable policy at this gamma".
COST_OVERFLOW_GUARD = 1e12

# Tail tolerance used when choosing a truncation horizon automatically.
TRUNCATION_TOL = 1e-8

_MAX_AUTO_HORIZON = 200_000


def _as_matrix(M, rows, cols, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (rows, cols):
        raise DimensionMismatchError(
            f"{name} has shape {M.shape}, expected ({rows}, {cols})"
        )
    return M


@dataclass(frozen=True)
class LqrProblem:
    """System matrices (A, B) and cost matrices (Q, R).

    Q and R must be symmetric positive definite, (A, B) controllable and
    (A, D) observable for Q = D'D; all of this is checked at construction.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatchError(f"A must be square, got {A.shape}")
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape[0] != n:
            B = B.reshape(n, -1)
        m = B.shape[1]
        Q = _as_matrix(self.Q, n, n, "Q")
        R = _as_matrix(self.R, m, m, "R")
        for name, M in (("Q", Q), ("R", R)):
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise ValueError(f"{name} must be positive definite")
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        if np.linalg.matrix_rank(ctrb) < n:
            raise ValueError("(A, B) is not controllable")
        D = np.linalg.cholesky(Q).T  # Q = D'D
        obsv = np.vstack([D @ np.linalg.matrix_power(A, k) for k in range(n)])
        if np.linalg.matrix_rank(obsv) < n:
            raise ValueError("(A, D) is not observable for Q = D'D")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @classmethod
    def scalar(cls, a: float, b: float, q: float, r: float) -> "LqrProblem":
        return cls(A=[[a]], B=[[b]], Q=[[q]], R=[[r]])

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LqrProblem":
        return cls(A=d["A"], B=d["B"], Q=d["Q"], R=d["R"])


@dataclass(frozen=True)
class InitialDistribution:
    """Mixture of point masses and (for n = 1) a uniform density.

    atoms: list of (state, weight). uniform: optional (lo, hi, weight,
    nodes) integrated with fixed Gauss-Legendre quadrature so repeated
    evaluations are deterministic.
    """

    atoms: tuple = ()
    uniform: tuple | None = None  # (lo, hi, weight, nodes)

    def __post_init__(self):
        atoms = tuple(
            (np.atleast_1d(np.asarray(x, dtype=float)), float(w))
            for x, w in self.atoms
        )
        if any(w < 0 for _, w in atoms):
            raise ValueError("atom weights must be nonnegative")
        total = sum(w for _, w in atoms)
        uniform = self.uniform
        if uniform is not None:
            lo, hi, w, nodes = uniform
            lo, hi, w, nodes = float(lo), float(hi), float(w), int(nodes)
            if hi <= lo or w < 0 or nodes < 1:
                raise ValueError("malformed uniform component")
            if atoms and atoms[0][0].size != 1:
                raise ValueError("uniform component requires n = 1")
            uniform = (lo, hi, w, nodes)
            total += w
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total}, expected 1 within 1e-12")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "uniform", uniform)

    def support_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Initial states and weights (atoms then quadrature nodes).

        The quadrature rule is computed once and cached; callers must not
        mutate the returned arrays.
        """
        cached = getattr(self, "_support_cache", None)
        if cached is not None:
            return cached
        xs, ws = [], []
        for x, w in self.atoms:
            xs.append(x)
            ws.append(w)
        if self.uniform is not None:
            lo, hi, w, nodes = self.uniform
            t, gw = np.polynomial.legendre.leggauss(nodes)
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            for ti, gwi in zip(t, gw):
                xs.append(np.array([mid + half * ti]))
                # gw sums to 2; the density is w / (hi - lo).
                ws.append(w * gwi / 2.0)
        if not xs:
            raise ValueError("distribution has no support points")
        X = np.array(xs, dtype=float)
        W = np.array(ws, dtype=float)
        X.setflags(write=False)
        W.setflags(write=False)
        object.__setattr__(self, "_support_cache", (X, W))
        return X, W

    def with_quadrature_nodes(self, nodes: int) -> "InitialDistribution":
        if self.uniform is None:
            return self
        lo, hi, w, _ = self.uniform
        return InitialDistribution(self.atoms, (lo, hi, w, nodes))

    def to_dict(self) -> dict:
        d = {"atoms": [{"x": list(x), "w": w} for x, w in self.atoms]}
        if self.uniform is not None:
            lo, hi, w, nodes = self.uniform
            d["uniform"] = {"lo": lo, "hi": hi, "w": w, "nodes": nodes}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InitialDistribution":
        atoms = tuple((a["x"], a["w"]) for a in d.get("atoms", []))
        uniform = None
        if d.get("uniform") is not None:
            u = d["uniform"]
            uniform = (u["lo"], u["hi"], u["w"], u.get("nodes", 512))
        return cls(atoms=atoms, uniform=uniform)


@dataclass(frozen=True)
class Trajectory:
    """States x_0..x_T and actions u_0..u_{T-1} of one rollout."""

    states: np.ndarray  # (T+1, n)
    actions: np.ndarray  # (T, m)

    def __post_init__(self):
        if self.states.shape[0] != self.actions.shape[0] + 1:
            raise ValueError("states must be one longer than actions")

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]


def step(problem: LqrProblem, x, u) -> np.ndarray:
    """One dynamics step A x + B u."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (problem.n,):
        raise DimensionMismatchError(
            f"state has shape {x.shape}, expected ({problem.n},)"
        )
    if u.shape != (problem.m,):
        raise DimensionMismatchError(
            f"action has shape {u.shape}, expected ({problem.m},)"
        )
    return problem.A @ x + problem.B @ u


def rollout(problem: LqrProblem, policy, x0, T: int) -> Trajectory:
    """Unroll the closed loop u_t = policy(x_t) for T steps."""
    if T < 1:
        raise ValueError("horizon must be >= 1")
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if x.shape != (problem.n,):
        raise DimensionMismatchError(
            f"x0 has shape {x.shape}, expected ({problem.n},)"
        )
    states = np.empty((T + 1, problem.n))
    actions = np.empty((T, problem.m))
    states[0] = x
    for t in range(T):
        u = policy.eval(states[t])
        actions[t] = u
        nxt = problem.A @ states[t] + problem.B @ u
        if not np.all(np.isfinite(nxt)) or np.linalg.norm(nxt) > STATE_OVERFLOW_GUARD:
            raise UnstableRolloutError(
                f"rollout diverged at step {t + 1}", step=t + 1
            )
        states[t + 1] = nxt
    return Trajectory(states=states, actions=actions)


def default_horizon(problem: LqrProblem, policy, dist: InitialDistribution,
                    gamma: float, tol: float = TRUNCATION_TOL) -> int:
    """Truncation horizon from the geometric tail bound.

    T = ceil(log(tol * (1 - gamma) / Cap) / log gamma) where Cap is a
    per-step cost cap estimated from a short probe rollout; grows without
    bound as gamma -> 1 (capped at a large guard value).
    """
    if gamma <= 0.0:
        return 1
    X0, _ = dist.support_points()
    cap = 1.0
    x = X0.copy()
    n0 = max(float(np.max(np.abs(x))), 1e-12)
    steps = 0
    for _ in range(16):
        u = policy.eval_batch(x)
        stage = np.einsum("bi,ij,bj->b", x, problem.Q, x) + np.einsum(
            "bi,ij,bj->b", u, problem.R, u
        )
        cap = max(cap, float(np.max(stage)))
        x = x @ problem.A.T + u @ problem.B.T
        steps += 1
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > STATE_OVERFLOW_GUARD:
            break
    if gamma >= 1.0:
        # no discount decay; truncate using the closed-loop contraction
        # rate observed over the probe (stage cost decays like rho^2)
        n1 = max(float(np.max(np.abs(x))), 1e-300)
        if not np.all(np.isfinite(x)) or n1 >= n0:
            return _MAX_AUTO_HORIZON
        rho = (n1 / n0) ** (1.0 / steps)
        T = 2 * math.ceil(math.log(tol / cap) / (2.0 * math.log(rho)))
        return int(min(max(T, 32), _MAX_AUTO_HORIZON))
    T = math.ceil(math.log(tol * (1.0 - gamma) / cap) / math.log(gamma))
    return int(min(max(T, 1), _MAX_AUTO_HORIZON))


def _batch_cost(problem, policy, X0, W, gamma, T, early_stop_tol=None):
    """Discounted cost summed over a batch of weighted initial states.

    With early_stop_tol set, stops once the discounted stage cost has been
    below the tolerance for several consecutive steps (the tail is then
    negligible for any non-expansive closed loop).
    """
    x = X0.copy()
    total = 0.0
    disc = 1.0
    quiet = 0
    for t in range(T):
        u = policy.eval_batch(x)
        stage = np.einsum("bi,ij,bj->b", x, problem.Q, x) + np.einsum(
            "bi,ij,bj->b", u, problem.R, u
        )
        total += disc * float(W @ stage)
        if total > COST_OVERFLOW_GUARD or not np.isfinite(total):
            raise UnstableRolloutError(
                f"unstable policy at gamma={gamma}: cost exceeded guard at step {t}",
                step=t,
            )
        if early_stop_tol is not None:
            if disc * float(np.max(stage)) < early_stop_tol:
                quiet += 1
                if quiet >= 5:
                    break
            else:
                quiet = 0
        disc *= gamma
        if disc == 0.0:
            break
        x = x @ problem.A.T + u @ problem.B.T
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > STATE_OVERFLOW_GUARD:
            raise UnstableRolloutError(
                f"unstable policy at gamma={gamma}: state overflow at step {t + 1}",
                step=t + 1,
            )
    return total


def discounted_cost(problem: LqrProblem, policy, dist: InitialDistribution,
                    gamma: float, T: int | None = None) -> float:
    """E_{x0~dist} sum_{t<T} gamma^t (x_t'Qx_t + u_t'Ru_t).

    T=None selects the tail-bounded default horizon (with early stopping
    once discounted stage costs fall below the tail tolerance).
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    X0, W = dist.support_points()
    if X0.shape[1] != problem.n:
        raise DimensionMismatchError(
            f"distribution states have dim {X0.shape[1]}, expected {problem.n}"
        )
    if T is None:
        T = default_horizon(problem, policy, dist, gamma)
        stop = TRUNCATION_TOL * max(1.0 - gamma, 1e-6)
        return _batch_cost(problem, policy, X0, W, gamma, T, early_stop_tol=stop)
    if T < 1:
        raise ValueError("horizon must be >= 1")
    return _batch_cost(problem, policy, X0, W, gamma, T)
