"""A concrete scalar problem on which fixed-discount gradient descent traps.

The system is x' = u (A = 0, B = 1) with Q = 1 and 0 < R < gamma < 1, the
policy class is {x, F(x)} with the spiked piecewise-linear feature F, and
the initial distribution places equal mass on two points x0, y0 chosen on
the descending branch of F's tall spike so that F(x0) = 1.5 and
F(y0) = 1.8, plus an optional small uniform part on (-5, 5). At
theta = (0, 1) the cost has a strict local minimum even though the global
optimum is the linear policy (K*, 0).

This module builds that instantiation, computes the certificate constants
(cone half-width alpha, bisector slope M, the bounds K and K', and the
admissible uniform mass eps_max), and verifies the local minimum
numerically over direction/radius ladders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .policies import (
    F_SLOPE,
    F_SPIKE_HALF_WIDTH,
    F_SPIKE_HEIGHT,
    F_TENT_CENTERS,
    F_TENT_HEIGHT,
    PolicyClass,
    make_counterexample_class,
    make_spike_feature,
    preimage_on_descending_spike,
)
from .problem import InitialDistribution, LqrProblem, discounted_cost

# Canonical instantiation: round numbers satisfying 0 < R < gamma < 1.
REFERENCE_GAMMA = 0.5
REFERENCE_R = 0.25
REFERENCE_DELTA = 5e-4

# The two atoms are the descending-branch preimages of the small tents.
ATOM_TARGETS = (1.5, 1.8)

UNIFORM_SUPPORT = (-5.0, 5.0)
UNIFORM_NODES = 512

# Finite-horizon cost used for landscape/verification, matching the
# episodic evaluation the reference experiments roll out.
EPISODE_HORIZON = 5


@dataclass(frozen=True)
class ConeGeometry:
    """Disjoint-cone certificate around the two atom feature directions.

    The rays (|x0|, F(x0)) and (|y0|, F(y0)) have distinct slopes; M is the
    slope of the bisector between them and alpha the half-width such that
    the cones {|z dtheta_0 + F(z) dtheta_1| <= alpha ||dtheta||_1} for
    z = x0 and z = y0 intersect only at the origin.
    """

    x0: float
    y0: float
    Fx0: float
    Fy0: float
    M: float
    alpha: float

    def __post_init__(self):
        if not (abs(self.x0) / self.Fx0 > self.M > abs(self.y0) / self.Fy0):
            raise ValueError(
                "bisector slope must separate the two ray slopes"
            )
        if self.alpha <= 0:
            raise ValueError("cone half-width must be positive")


@dataclass(frozen=True)
class CounterexampleConstants:
    """Certificate constants for the local-minimum proof chain."""

    K: float
    Kprime: float
    eps_max: float
    delta: float
    L: float
    Lpp: float
    Lp: float


def make_mu0(eps: float, x0: float, y0: float,
             nodes: int = UNIFORM_NODES) -> InitialDistribution:
    """(1-eps)/2 on each atom plus eps uniform mass on (-5, 5)."""
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    atoms = (([x0], (1.0 - eps) / 2.0), ([y0], (1.0 - eps) / 2.0))
    uniform = None
    if eps > 0.0:
        uniform = (UNIFORM_SUPPORT[0], UNIFORM_SUPPORT[1], eps, nodes)
    return InitialDistribution(atoms=atoms, uniform=uniform)


def cone_geometry(x0: float, y0: float, Fx0: float,
                  Fy0: float) -> ConeGeometry:
    """Bisector slope and admissible cone half-width for the two atoms."""
    if x0 >= 0 or y0 >= 0 or Fx0 <= 0 or Fy0 <= 0:
        raise ValueError("expected x0, y0 < 0 and F(x0), F(y0) > 0")
    if abs(abs(x0) / Fx0 - abs(y0) / Fy0) < 1e-12:
        raise ValueError("degenerate geometry: the two rays coincide")
    r = np.hypot(x0, Fx0) / np.hypot(y0, Fy0)
    M = (-r * y0 - x0) / (r * Fy0 + Fx0)
    bound1 = (abs(x0) - M * Fx0) / (1.0 + M)
    bound2 = (M * Fy0 - abs(y0)) / (1.0 + M)
    alpha = 0.49 * min(bound1, bound2)
    return ConeGeometry(x0=x0, y0=y0, Fx0=Fx0, Fy0=Fy0, M=M, alpha=alpha)


def constants(gamma: float, R: float, delta: float,
              geom: ConeGeometry) -> CounterexampleConstants:
    """Certificate constants at the given (gamma, R, delta).

    L bounds the slope of the spike feature; Lpp bounds the second-order
    cost change per unit uniform mass, Lp and Kprime fold in the discount;
    K lower-bounds the atom-driven first-order gain inside a cone, and
    eps_max = K / (24 delta Kprime + K) is the admissible uniform mass.
    """
    if not 0.0 < R < gamma < 1.0:
        raise ValueError("parameters must satisfy 0 < R < gamma < 1")
    w0 = F_SLOPE
    L = (abs(F_SLOPE) + F_SPIKE_HEIGHT) / F_SPIKE_HALF_WIDTH
    denom = 1.0 - gamma * w0**2
    # 25 = 2 * sup|u| * sup-shift on the uniform support (2 * 2.5 * 5).
    Lpp = (1.0 + R) * (L**6 + gamma**4 / denom) * 25.0
    Lp = gamma * Lpp + 25.0 * R
    Kprime = Lp / (1.0 - gamma)
    F = make_spike_feature(delta)
    z2 = float(F.value(np.array([[ATOM_TARGETS[0]]]))[0, 0])
    omega = F_TENT_HEIGHT
    K = 2.0 * abs(z2) * gamma**2 * (1.0 + R * w0**2) * omega * geom.alpha \
        / denom
    eps_max = K / (24.0 * delta * Kprime + K)
    return CounterexampleConstants(K=K, Kprime=Kprime, eps_max=eps_max,
                                   delta=delta, L=L, Lpp=Lpp, Lp=Lp)


def reference_instantiation(gamma: float = REFERENCE_GAMMA,
                            R: float = REFERENCE_R,
                            delta: float = REFERENCE_DELTA,
                            eps: float = 0.0):
    """Problem, policy class, initial distribution, geometry and constants."""
    problem = LqrProblem.scalar(0.0, 1.0, 1.0, R)
    pclass = make_counterexample_class(delta)
    x0 = preimage_on_descending_spike(pclass, ATOM_TARGETS[0])
    y0 = preimage_on_descending_spike(pclass, ATOM_TARGETS[1])
    dist = make_mu0(eps, x0, y0)
    geom = cone_geometry(x0, y0, ATOM_TARGETS[0], ATOM_TARGETS[1])
    consts = constants(gamma, R, delta, geom)
    return problem, pclass, dist, geom, consts


def _l1_directions(n_directions: int, geom: ConeGeometry | None):
    """Unit-l1 perturbation directions: a uniform fan plus cone landmarks.

    Landmarks are, for each atom ray (z, F(z)): both axis directions of the
    cone (where z dtheta_0 + F(z) dtheta_1 = 0) and the boundary directions
    (where |z dtheta_0 + F(z) dtheta_1| = alpha).
    """
    phis = np.linspace(0.0, 2.0 * np.pi, n_directions, endpoint=False)
    dirs = np.stack([np.cos(phis), np.sin(phis)], axis=1)
    dirs /= np.abs(dirs).sum(axis=1, keepdims=True)
    extra = []
    if geom is not None:
        for z, Fz in ((geom.x0, geom.Fx0), (geom.y0, geom.Fy0)):
            axis = np.array([Fz, -z])
            axis /= np.abs(axis).sum()
            extra.extend([axis, -axis])
            # boundary: solve z*s0*t + Fz*s1*(1-t) = +/- alpha on each
            # l1 face dtheta = (s0 t, s1 (1-t)), t in [0, 1]
            for s0 in (1.0, -1.0):
                for s1 in (1.0, -1.0):
                    for rhs in (geom.alpha, -geom.alpha):
                        a = z * s0 - Fz * s1
                        if abs(a) < 1e-15:
                            continue
                        t = (rhs - Fz * s1) / a
                        if 0.0 <= t <= 1.0:
                            extra.append(np.array([s0 * t, s1 * (1.0 - t)]))
    if extra:
        dirs = np.vstack([dirs, np.stack(extra)])
    return dirs


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of the directional local-minimum check at theta = (0, 1)."""

    min_ratio: float
    worst_direction: np.ndarray
    worst_radius: float
    all_positive: bool
    negative_samples: tuple
    bound_first_order: float  # 3K/(4 delta), reported, not asserted
    constants: CounterexampleConstants
    geometry: ConeGeometry

    def to_dict(self) -> dict:
        c, g = self.constants, self.geometry
        return {
            "min_ratio": self.min_ratio,
            "worst_direction": list(np.asarray(self.worst_direction)),
            "worst_radius": self.worst_radius,
            "all_positive": self.all_positive,
            "negative_samples": [
                {"dtheta": list(np.asarray(d)), "delta_cost": dc}
                for d, dc in self.negative_samples
            ],
            "bound_first_order": self.bound_first_order,
            "constants": {
                "K": c.K,
                "Kprime": c.Kprime,
                "eps_max": c.eps_max,
                "alpha": g.alpha,
                "M": g.M,
            },
        }


def verify_local_min(problem: LqrProblem, pclass: PolicyClass,
                     dist: InitialDistribution, gamma: float,
                     radius: float = 1e-4, n_directions: int = 360,
                     n_radii: int = 6,
                     horizon: int = EPISODE_HORIZON,
                     geom: ConeGeometry | None = None,
                     consts: CounterexampleConstants | None = None,
                     ) -> VerificationReport:
    """Check that every sampled perturbation of (0, 1) increases the cost.

    Samples n_directions unit-l1 directions plus the cone axis/boundary
    directions, each at n_radii log-spaced radii below `radius`, and
    reports min over samples of (C(theta + dtheta) - C(theta)) / ||dtheta||_1.
    A negative sample is reported as a finding, never silently dropped.
    """
    if geom is None or consts is None:
        _, _, _, geom_ref, consts_ref = reference_instantiation(
            gamma=gamma, R=float(problem.R[0, 0])
        )
        geom = geom or geom_ref
        consts = consts or consts_ref
    theta_c = np.array([0.0, 1.0])
    base = discounted_cost(problem, pclass.policy(theta_c), dist, gamma,
                           T=horizon)
    dirs = _l1_directions(n_directions, geom)
    radii = np.geomspace(radius, radius * 1e-3, n_radii)
    min_ratio = np.inf
    worst_dir = dirs[0]
    worst_rad = radii[0]
    negatives = []
    for d in dirs:
        for r in radii:
            c = discounted_cost(problem, pclass.policy(theta_c + r * d),
                                dist, gamma, T=horizon)
            dc = c - base
            ratio = dc / r
            if ratio < min_ratio:
                min_ratio = ratio
                worst_dir = d
                worst_rad = r
            if dc <= 0.0:
                negatives.append((r * d, dc))
    return VerificationReport(
        min_ratio=float(min_ratio),
        worst_direction=worst_dir,
        worst_radius=float(worst_rad),
        all_positive=not negatives,
        negative_samples=tuple(negatives),
        bound_first_order=3.0 * consts.K / (4.0 * consts.delta),
        constants=consts,
        geometry=geom,
    )


def landscape_grid(problem: LqrProblem, pclass: PolicyClass,
                   dist: InitialDistribution, gamma: float,
                   center, half_widths, resolution: int,
                   horizon: int = EPISODE_HORIZON):
    """Dense cost grid over a theta box, row-major in (theta0, theta1).

    Returns (theta0_axis, theta1_axis, costs) with
    costs[i, j] = C(theta0_axis[i], theta1_axis[j]).
    """
    if resolution < 3:
        raise ValueError("resolution must be >= 3 per axis")
    center = np.asarray(center, dtype=float)
    hw = np.broadcast_to(np.asarray(half_widths, dtype=float), center.shape)
    ax0 = np.linspace(center[0] - hw[0], center[0] + hw[0], resolution)
    ax1 = np.linspace(center[1] - hw[1], center[1] + hw[1], resolution)
    costs = np.empty((resolution, resolution))
    for i, t0 in enumerate(ax0):
        for j, t1 in enumerate(ax1):
            costs[i, j] = discounted_cost(
                problem, pclass.policy([t0, t1]), dist, gamma, T=horizon
            )
    return ax0, ax1, costs


def uniform_part_bound_check(problem: LqrProblem, pclass: PolicyClass,
                             gamma: float, n_samples: int,
                             radius: float = 1e-4, seed: int = 0,
                             horizon: int = EPISODE_HORIZON) -> dict:
    """Estimate the uniform-part cost sensitivity and compare against K'.

    Samples random small perturbations of (0, 1), measures the average
    cost change under the pure uniform measure on (-5, 5) per unit l1
    perturbation, and reports the estimate next to the certified bound
    Kprime (expected to be extremely loose). A violation is reported as a
    finding in the returned dict, not raised.
    """
    R = float(problem.R[0, 0])
    if not 0.0 < R < gamma:
        raise ValueError("requires 0 < R < gamma")
    _, _, _, geom, consts = reference_instantiation(gamma=gamma, R=R)
    uniform = InitialDistribution(
        atoms=(),
        uniform=(UNIFORM_SUPPORT[0], UNIFORM_SUPPORT[1], 1.0, UNIFORM_NODES),
    )
    theta_c = np.array([0.0, 1.0])
    base = discounted_cost(problem, pclass.policy(theta_c), uniform, gamma,
                           T=horizon)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        d = rng.standard_normal(2)
        d /= np.abs(d).sum()
        c = discounted_cost(problem, pclass.policy(theta_c + radius * d),
                            uniform, gamma, T=horizon)
        worst = max(worst, abs(c - base) / radius)
    return {
        "estimate": worst,
        "Kprime": consts.Kprime,
        "within_bound": worst <= consts.Kprime,
        "eps_max": consts.eps_max,
        "alpha": geom.alpha,
    }
