"""Linear-in-parameters policy classes built from nonlinear basis functions.

A policy is pi_theta(x) = sum_k theta_k f_k(x) where every f_k is globally
Lipschitz. The basis catalog covers linear matrix units, the absolute
value, tent (spike) bumps, ReLU random features, and weighted composites;
the two-feature piecewise-linear control used throughout the local-minimum
study is assembled from these.

At non-differentiable points every basis reports its right-hand derivative
so gradients are deterministic and coincide with the a.e. derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError

# Fixed parameters of the piecewise-linear feature F used by the
# local-minimum construction: F(x) = w0*|x| + sum_i w_i * tent(a_i, d_i).
F_SLOPE = -0.5
F_SPIKE_CENTER = -2.0
F_SPIKE_HALF_WIDTH = 0.1
F_SPIKE_HEIGHT = 3.0
F_TENT_CENTERS = (1.5, 1.8)
F_TENT_HEIGHT = 0.2

_KINK_EPS = 1e-9


class BasisFunction:
    """Feature map R^n -> R^m with a declared global Lipschitz constant."""

    n = 1
    m = 1
    lipschitz = 0.0

    def value(self, X: np.ndarray) -> np.ndarray:
        """(batch, n) -> (batch, m)."""
        raise NotImplementedError

    def jacobian(self, X: np.ndarray) -> np.ndarray:
        """(batch, n) -> (batch, m, n), right-hand derivative at kinks."""
        raise NotImplementedError

    def kink_distance(self, X: np.ndarray) -> np.ndarray:
        """Distance from each state to the nearest non-smooth point."""
        return np.full(X.shape[0], np.inf)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearEntry(BasisFunction):
    """Matrix unit 1_{i,j}: f(x) = e_i * x_j."""

    i: int
    j: int
    n: int = 1
    m: int = 1
    lipschitz = 1.0

    def __post_init__(self):
        if not (0 <= self.i < self.m and 0 <= self.j < self.n):
            raise ValueError("matrix-unit indices out of range")

    def value(self, X):
        out = np.zeros((X.shape[0], self.m))
        out[:, self.i] = X[:, self.j]
        return out

    def jacobian(self, X):
        J = np.zeros((X.shape[0], self.m, self.n))
        J[:, self.i, self.j] = 1.0
        return J

    def to_dict(self):
        return {"kind": "linear_entry", "i": self.i, "j": self.j,
                "n": self.n, "m": self.m}


@dataclass(frozen=True)
class Abs(BasisFunction):
    """f(x) = |x|, 1-D only."""

    lipschitz = 1.0

    def value(self, X):
        return np.abs(X)

    def jacobian(self, X):
        # right-hand derivative: +1 at the origin
        return np.where(X >= 0.0, 1.0, -1.0)[:, :, None]

    def kink_distance(self, X):
        return np.abs(X[:, 0])

    def to_dict(self):
        return {"kind": "abs"}


@dataclass(frozen=True)
class Tent(BasisFunction):
    """Piecewise-linear bump of height 1 on [center - hw, center + hw], 1-D."""

    center: float
    half_width: float

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("tent half-width must be positive")

    @property
    def lipschitz(self):
        return 1.0 / self.half_width

    def value(self, X):
        return np.maximum(0.0, 1.0 - np.abs(X - self.center) / self.half_width)

    def jacobian(self, X):
        x = X[:, 0]
        a, d = self.center, self.half_width
        slope = np.where(
            (x >= a - d) & (x < a), 1.0 / d,
            np.where((x >= a) & (x < a + d), -1.0 / d, 0.0),
        )
        return slope[:, None, None]

    def kink_distance(self, X):
        x = X[:, 0]
        a, d = self.center, self.half_width
        return np.minimum.reduce(
            [np.abs(x - a), np.abs(x - (a - d)), np.abs(x - (a + d))]
        )

    def to_dict(self):
        return {"kind": "tent", "center": self.center,
                "half_width": self.half_width}


@dataclass(frozen=True)
class ReluFeature(BasisFunction):
    """f(x) = max(0, sign * w'x) for a fixed weight vector w."""

    w: tuple
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +/-1")
        object.__setattr__(self, "w", tuple(float(v) for v in self.w))

    @property
    def n(self):
        return len(self.w)

    @property
    def lipschitz(self):
        return float(np.linalg.norm(self.w))

    def value(self, X):
        z = self.sign * (X @ np.asarray(self.w))
        return np.maximum(0.0, z)[:, None]

    def jacobian(self, X):
        z = self.sign * (X @ np.asarray(self.w))
        active = (z >= 0.0).astype(float)  # right-hand derivative at 0
        return (active[:, None] * (self.sign * np.asarray(self.w)))[:, None, :]

    def kink_distance(self, X):
        wn = np.linalg.norm(self.w)
        return np.abs(X @ np.asarray(self.w)) / wn if wn > 0 else np.full(
            X.shape[0], np.inf
        )

    def to_dict(self):
        return {"kind": "relu", "w": list(self.w), "sign": self.sign}


@dataclass(frozen=True)
class Composite(BasisFunction):
    """Fixed weighted sum of sub-bases, itself used as a single feature."""

    weights: tuple
    parts: tuple

    def __post_init__(self):
        if len(self.weights) != len(self.parts):
            raise ValueError("weights and parts must have equal length")
        object.__setattr__(self, "weights",
                           tuple(float(w) for w in self.weights))
        object.__setattr__(self, "parts", tuple(self.parts))
        dims = {(p.n, p.m) for p in self.parts}
        if len(dims) > 1:
            raise DimensionMismatchError("composite parts disagree on (n, m)")

    @property
    def n(self):
        return self.parts[0].n

    @property
    def m(self):
        return self.parts[0].m

    @property
    def lipschitz(self):
        return sum(abs(w) * p.lipschitz for w, p in zip(self.weights, self.parts))

    def value(self, X):
        out = np.zeros((X.shape[0], self.m))
        for w, p in zip(self.weights, self.parts):
            out += w * p.value(X)
        return out

    def jacobian(self, X):
        J = np.zeros((X.shape[0], self.m, self.n))
        for w, p in zip(self.weights, self.parts):
            J += w * p.jacobian(X)
        return J

    def kink_distance(self, X):
        return np.minimum.reduce([p.kink_distance(X) for p in self.parts])

    def to_dict(self):
        return {"kind": "composite", "weights": list(self.weights),
                "parts": [p.to_dict() for p in self.parts]}


def basis_from_dict(d: dict) -> BasisFunction:
    kind = d["kind"]
    if kind == "linear_entry":
        return LinearEntry(d["i"], d["j"], n=d.get("n", 1), m=d.get("m", 1))
    if kind == "abs":
        return Abs()
    if kind == "tent":
        return Tent(d["center"], d["half_width"])
    if kind == "relu":
        return ReluFeature(tuple(d["w"]), d.get("sign", 1))
    if kind == "composite":
        return Composite(tuple(d["weights"]),
                         tuple(basis_from_dict(p) for p in d["parts"]))
    raise ValueError(f"unknown basis kind {kind!r}")


def probe_grid(n: int, count: int, box: float = 5.0) -> np.ndarray:
    """Chebyshev points on axis slices of [-box, box]^n."""
    per_axis = max(2, -(-count // n))
    k = np.arange(per_axis)
    cheb = box * np.cos((2 * k + 1) * np.pi / (2 * per_axis))
    pts = []
    for axis in range(n):
        block = np.zeros((per_axis, n))
        block[:, axis] = cheb
        pts.append(block)
    return np.vstack(pts)


class PolicyClass:
    """Ordered list of basis functions sharing a common (n, m)."""

    def __init__(self, bases, check_independence: bool = True):
        bases = list(bases)
        if not bases:
            raise ValueError("policy class needs at least one basis")
        dims = {(b.n, b.m) for b in bases}
        if len(dims) > 1:
            raise DimensionMismatchError("bases disagree on (n, m)")
        self.bases = bases
        self.n, self.m = dims.pop()
        if self.n > 1 and any(
            isinstance(b, (Abs, Tent)) or
            (isinstance(b, Composite) and
             any(isinstance(p, (Abs, Tent)) for p in b.parts))
            for b in bases
        ):
            raise DimensionMismatchError("Abs/Tent bases are 1-D only")
        if check_independence:
            lam = self.independence_witness()
            if lam <= 1e-10:
                raise ValueError(
                    f"basis functions are not linearly independent on the "
                    f"probe grid (smallest Gram eigenvalue {lam:.3e})"
                )

    @property
    def d(self) -> int:
        return len(self.bases)

    def feature_matrix(self, X: np.ndarray) -> np.ndarray:
        """(batch, n) -> (batch, m, d) stack of basis values."""
        return np.stack([b.value(X) for b in self.bases], axis=-1)

    def feature_jacobians(self, X: np.ndarray) -> np.ndarray:
        """(batch, n) -> (batch, d, m, n)."""
        return np.stack([b.jacobian(X) for b in self.bases], axis=1)

    def kink_distance(self, X: np.ndarray) -> np.ndarray:
        return np.minimum.reduce([b.kink_distance(X) for b in self.bases])

    def independence_witness(self) -> float:
        """Smallest eigenvalue of the feature Gram matrix on the probe grid."""
        X = probe_grid(self.n, 10 * self.d)
        Phi = self.feature_matrix(X)  # (P, m, d)
        flat = Phi.reshape(-1, self.d)
        gram = flat.T @ flat / X.shape[0]
        return float(np.linalg.eigvalsh(gram).min())

    def lipschitz_bound(self, theta) -> float:
        return float(sum(abs(t) * b.lipschitz
                         for t, b in zip(np.asarray(theta), self.bases)))

    def policy(self, theta) -> "Policy":
        return Policy(self, theta)

    def to_dict(self) -> dict:
        return {"bases": [b.to_dict() for b in self.bases]}

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyClass":
        return cls([basis_from_dict(b) for b in d["bases"]])


class Policy:
    """pi_theta(x) = sum_k theta_k f_k(x)."""

    def __init__(self, pclass: PolicyClass, theta):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (pclass.d,):
            raise DimensionMismatchError(
                f"theta has shape {theta.shape}, expected ({pclass.d},)"
            )
        self.pclass = pclass
        self.theta = theta

    def eval(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.pclass.n,):
            raise DimensionMismatchError(
                f"state has shape {x.shape}, expected ({self.pclass.n},)"
            )
        return self.eval_batch(x[None, :])[0]

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        return self.pclass.feature_matrix(X) @ self.theta

    def jacobian_batch(self, X: np.ndarray) -> np.ndarray:
        """(batch, m, n) Jacobian of pi_theta."""
        J = self.pclass.feature_jacobians(X)  # (b, d, m, n)
        return np.einsum("k,bkmn->bmn", self.theta, J)

    def to_dict(self) -> dict:
        d = self.pclass.to_dict()
        d["theta"] = self.theta.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Policy":
        return cls(PolicyClass.from_dict(d), d["theta"])


def features(pclass: PolicyClass, x) -> list:
    """[f_1(x), ..., f_d(x)] as m-vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    Phi = pclass.feature_matrix(x[None, :])[0]  # (m, d)
    return [Phi[:, k].copy() for k in range(pclass.d)]


def make_spike_feature(delta: float) -> Composite:
    """The piecewise-linear 1-D feature F with a tall spike and two small tents."""
    if not 0.0 < delta <= 0.1:
        raise ValueError("delta must lie in (0, 0.1]")
    parts = [Abs(), Tent(F_SPIKE_CENTER, F_SPIKE_HALF_WIDTH)]
    weights = [F_SLOPE, F_SPIKE_HEIGHT]
    for c in F_TENT_CENTERS:
        parts.append(Tent(c, delta))
        weights.append(F_TENT_HEIGHT)
    return Composite(tuple(weights), tuple(parts))


def make_counterexample_class(delta: float) -> PolicyClass:
    """Two-feature class {x, F(x)} whose (0, 1) point is a cost trap."""
    return PolicyClass([LinearEntry(0, 0, n=1, m=1), make_spike_feature(delta)])


def preimage_on_descending_spike(pclass: PolicyClass, target: float) -> float:
    """Solve F(x) = target on the descending branch of the tall spike.

    On [-2, -1.9] the feature reduces to F(x) = -29.5 x - 57, so the branch
    preimage is x = -(57 + target) / 29.5.
    """
    del pclass  # the branch line is fixed by the spike parameters
    lo = F_SLOPE * abs(F_SPIKE_CENTER + F_SPIKE_HALF_WIDTH)  # F(-1.9) = -0.95
    hi = F_SLOPE * abs(F_SPIKE_CENTER) + F_SPIKE_HEIGHT  # F(-2) = 2
    if not lo < target <= hi:
        raise ValueError(f"target {target} outside descending-branch range "
                         f"({lo}, {hi}]")
    return -(57.0 + target) / 29.5


def make_random_features_class(n: int, seed: int) -> PolicyClass:
    """2n paired ReLU features sigma(w_k'x), sigma(-w_k'x), w_k ~ N(0, I)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    bases = []
    for _ in range(n):
        w = tuple(rng.standard_normal(n))
        bases.append(ReluFeature(w, sign=1))
        bases.append(ReluFeature(w, sign=-1))
    return PolicyClass(bases)
