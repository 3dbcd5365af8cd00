"""Truth/forecast models and synthetic observations.

All models share one small interface used by the filters and the harness:

* ``n``, ``ell``: state and noise dimensions
* ``Gamma``: noise coupling (n x ell)
* ``Q``: covariance of the per-step discrete noise ``w`` (the estimation
  target); for SDE models this is the continuous covariance times ``dt``
* ``deterministic(X)``: one integration step without noise; ``X`` is a state
  vector or an (n, k) matrix of column states
* ``propagate(x, z)``: one stochastic step driven by standard normal ``z``
"""
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import InvalidInput
from .linalg import psd_factor


def _mat(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise InvalidInput(f"{name} must be a matrix")
    return a


def _check_cov(c, name):
    if c.shape[0] != c.shape[1] or not np.allclose(c, c.T, atol=1e-12):
        raise InvalidInput(f"{name} must be square and symmetric")
    psd_factor(c)  # raises InvalidCovariance


@dataclass(frozen=True, eq=False)
class LinearModel:
    F: np.ndarray
    Gamma: np.ndarray
    Q_true: np.ndarray
    H: np.ndarray = None
    R_true: np.ndarray = None
    dt: float = 1.0

    def __post_init__(self):
        for name in ("F", "Gamma", "Q_true"):
            object.__setattr__(self, name, _mat(getattr(self, name), name))
        n, ell = self.Gamma.shape
        if self.F.shape != (n, n) or self.Q_true.shape != (ell, ell):
            raise InvalidInput("inconsistent dimensions: F n×n, Gamma n×ℓ, Q ℓ×ℓ")
        _check_cov(self.Q_true, "Q_true")
        if self.H is not None:
            object.__setattr__(self, "H", _mat(self.H, "H"))
            if self.H.shape[1] != n:
                raise InvalidInput("H must be m×n")
        if self.R_true is not None:
            object.__setattr__(self, "R_true", _mat(self.R_true, "R_true"))
            _check_cov(self.R_true, "R_true")

    @property
    def n(self):
        return self.F.shape[0]

    @property
    def ell(self):
        return self.Gamma.shape[1]

    @property
    def Q(self):
        return self.Q_true

    @cached_property
    def noise_factor(self):
        return psd_factor(self.Q_true)

    def deterministic(self, X):
        return self.F @ X

    def propagate(self, x, z):
        return self.F @ x + self.Gamma @ (self.noise_factor @ z)


def step_linear(model, x, w):
    """``F x + Gamma w`` with ``w`` the actual (not standardized) noise."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape[0] != model.n or w.shape[0] != model.ell:
        raise InvalidInput(f"expected x of length {model.n} and w of length {model.ell}")
    return model.F @ x + model.Gamma @ w


@dataclass(frozen=True, eq=False)
class TriadModel:
    """Zonal jet / topographic wave triad with linear damping.

    Integrated with explicit Euler (Euler-Maruyama for the noise term).
    """
    a: float = 1.0
    omega: float = 0.75
    theta: float = 1.0
    d1: float = 0.5
    d2: float = 0.5
    sigma1: float = np.sqrt(0.5)
    sigma2: float = np.sqrt(0.5)
    dt: float = 0.1
    Q_true: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        if self.d1 <= 0 or self.d2 <= 0:
            raise InvalidInput("damping rates d1, d2 must be positive")
        if self.dt <= 0:
            raise InvalidInput("dt must be positive")
        q = _mat(self.Q_true, "Q_true")
        if q.shape != (2, 2):
            raise InvalidInput("Q_true must be 2x2")
        _check_cov(q, "Q_true")
        object.__setattr__(self, "Q_true", q)

    n = 3
    ell = 2

    @cached_property
    def M(self):
        w, th = self.omega, self.theta
        return np.array([[0.0, w, 0.0], [-2.0 * w, 0.0, -th], [0.0, th, 0.0]])

    @cached_property
    def D(self):
        return np.diag([0.0, self.d1, self.d2])

    @cached_property
    def Gamma(self):
        return np.array([[0.0, 0.0], [self.sigma1, 0.0], [0.0, self.sigma2]])

    @property
    def Q(self):
        return self.Q_true * self.dt

    @cached_property
    def noise_factor(self):
        return psd_factor(self.Q_true)

    def drift(self, x):
        u, v1, v2 = x[0], x[1], x[2]
        bxx = np.stack([np.zeros_like(u), self.a * u * v2, -self.a * u * v1])
        return self.M @ x + bxx - self.D @ x

    def deterministic(self, X):
        return X + self.dt * self.drift(X)

    def propagate(self, x, z):
        return self.deterministic(x) + np.sqrt(self.dt) * (self.Gamma @ (self.noise_factor @ z))


def step_triad(model, x, w):
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape[0] != 3 or w.shape[0] != 2:
        raise InvalidInput("triad state is 3-dimensional and its noise 2-dimensional")
    return model.propagate(x, w)


@dataclass(frozen=True, eq=False)
class L96Model:
    n: int = 40
    F_forcing: float = 8.0
    Gamma: np.ndarray = None
    Qhat: np.ndarray = None
    dt: float = 0.05
    stochastic: bool = True

    def __post_init__(self):
        if self.n < 4:
            raise InvalidInput("Lorenz-96 needs n >= 4")
        g = np.eye(self.n) if self.Gamma is None else _mat(self.Gamma, "Gamma")
        if g.shape[0] != self.n:
            raise InvalidInput("Gamma must have n rows")
        q = np.zeros((g.shape[1], g.shape[1])) if self.Qhat is None else _mat(self.Qhat, "Qhat")
        if q.shape != (g.shape[1], g.shape[1]):
            raise InvalidInput("Qhat must be ℓ×ℓ with ℓ = Gamma columns")
        _check_cov(q, "Qhat")
        object.__setattr__(self, "Gamma", g)
        object.__setattr__(self, "Qhat", q)

    @property
    def ell(self):
        return self.Gamma.shape[1]

    @property
    def Q(self):
        return self.Qhat * self.dt

    @cached_property
    def noise_factor(self):
        return psd_factor(self.Qhat)

    def drift(self, x):
        return (np.roll(x, -1, axis=0) - np.roll(x, 2, axis=0)) * np.roll(x, 1, axis=0) - x + self.F_forcing

    def deterministic(self, X):
        h = self.dt
        k1 = self.drift(X)
        k2 = self.drift(X + 0.5 * h * k1)
        k3 = self.drift(X + 0.5 * h * k2)
        k4 = self.drift(X + h * k3)
        return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def propagate(self, x, z):
        x = self.deterministic(x)
        if self.stochastic:
            x = x + np.sqrt(self.dt) * (self.Gamma @ (self.noise_factor @ z))
        return x


def step_l96(model, x, w):
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape[0] != model.n or w.shape[0] != model.ell:
        raise InvalidInput(f"expected vectors of length {model.n}")
    return model.propagate(x, w)


@dataclass(frozen=True, eq=False)
class ObservationScheme:
    H: np.ndarray
    R_true: np.ndarray
    N: int = 1

    def __post_init__(self):
        h = _mat(self.H, "H")
        r = _mat(self.R_true, "R_true")
        if r.shape != (h.shape[0], h.shape[0]):
            raise InvalidInput("R_true must be m×m with m = rows of H")
        if int(self.N) < 1:
            raise InvalidInput("N must be >= 1")
        _check_cov(r, "R_true")
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "R_true", r)
        object.__setattr__(self, "N", int(self.N))

    @property
    def m(self):
        return self.H.shape[0]

    @cached_property
    def noise_factor(self):
        return psd_factor(self.R_true)


@dataclass
class Trajectory:
    truth: np.ndarray  # (steps + 1, n), row 0 is the initial state
    obs: np.ndarray  # (steps // N, m)
    obs_index: np.ndarray  # truth row of each observation

    @property
    def truth_at_obs(self):
        return self.truth[self.obs_index]


def simulate(model, scheme, steps, seed=0, x0=None):
    """Integrate ``steps`` steps of the truth and observe it every N steps.

    Observation k is taken of truth row (k + 1) * N. Truth noise and
    observation noise come from separate streams of ``seed``.
    """
    steps = int(steps)
    if steps < 1:
        raise InvalidInput("steps must be >= 1")
    r_truth = rngmod.stream(seed, rngmod.TRUTH)
    r_obs = rngmod.stream(seed, rngmod.OBSERVATION)
    x = np.zeros(model.n) if x0 is None else np.array(x0, dtype=float)
    truth = np.empty((steps + 1, model.n))
    truth[0] = x
    z = r_truth.standard_normal((steps, model.ell))
    for k in range(steps):
        x = model.propagate(x, z[k])
        truth[k + 1] = x
    idx = np.arange(scheme.N, steps + 1, scheme.N)
    xi = r_obs.standard_normal((len(idx), scheme.m)) @ scheme.noise_factor.T
    obs = truth[idx] @ scheme.H.T + xi
    return Trajectory(truth=truth, obs=obs, obs_index=idx)


def random_covariance(dim, rng, low=0.1, high=1.0):
    """SPD matrix with eigenvalues uniform on [low, high] and a random
    orthogonal eigenbasis (QR of a Gaussian matrix, signs fixed)."""
    g = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    lam = rng.uniform(low, high, size=dim)
    c = (q * lam) @ q.T
    return 0.5 * (c + c.T)


def selection_matrix(n, sites):
    sites = np.asarray(sites, dtype=int)
    H = np.zeros((len(sites), n))
    H[np.arange(len(sites)), sites] = 1.0
    return H


def equally_spaced_sites(n, m):
    if m < 1 or m > n or n % m:
        raise InvalidInput(f"cannot place {m} equally spaced sites on {n}")
    return np.arange(0, n, n // m)


def write_matrix(path, a):
    """Matrix text format: ``rows cols`` header, then one row per line."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path):
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise InvalidInput(f"{path}: missing 'rows cols' header")
    rows, cols = int(tokens[0]), int(tokens[1])
    vals = tokens[2:]
    if len(vals) != rows * cols:
        raise InvalidInput(f"{path}: expected {rows * cols} values, found {len(vals)}")
    return np.array([float(v) for v in vals]).reshape(rows, cols)


# -- the paper's test problems -------------------------------------------------

LINEAR2D_F = np.array([[0.75, -1.74], [0.09, 0.91]])
LINEAR2D_GAMMA = np.array([[1.0, 0.4], [0.1, 1.0]])


def linear2d(obs="full"):
    """2-D linear system with Q = I and R = 0.5 I (full) or R = 0.5 (partial)."""
    model = LinearModel(F=LINEAR2D_F, Gamma=LINEAR2D_GAMMA, Q_true=np.eye(2))
    if obs == "full":
        scheme = ObservationScheme(H=np.eye(2), R_true=0.5 * np.eye(2))
    elif obs == "partial":
        scheme = ObservationScheme(H=[[1.0, 0.0]], R_true=[[0.5]])
    else:
        raise InvalidInput(f"unknown observation pattern {obs!r}")
    return model, scheme


def triad(obs="full"):
    model = TriadModel()
    r = 0.257 * model.dt
    if obs == "full":
        scheme = ObservationScheme(H=np.eye(3), R_true=r * np.eye(3))
    elif obs == "partial":
        scheme = ObservationScheme(H=[[1.0, 0.0, 0.0]], R_true=[[r]])
    else:
        raise InvalidInput(f"unknown observation pattern {obs!r}")
    return model, scheme


def l96_stochastic(seed, N=1, ratio=1.0, m=20, n=40, dt=0.05):
    """Stochastically forced L96 with random Qhat and R, tr(R)/tr(Q) = ratio."""
    g = rngmod.stream(seed, rngmod.COVARIANCE)
    qhat = random_covariance(n, g)
    r = random_covariance(m, g)
    r *= ratio * np.trace(qhat * dt) / np.trace(r)
    model = L96Model(n=n, Qhat=qhat, dt=dt)
    scheme = ObservationScheme(H=selection_matrix(n, equally_spaced_sites(n, m)), R_true=r, N=N)
    return model, scheme
