"""Localized ETKF on a periodic ring with one covariance estimator per local
region and spatially averaged global estimates.

Every site is the center of one cyclic window of 2*radius + 1 sites. The
window runs an ETKF analysis on its restricted ensemble and observations and
the center site keeps its analysis. Each window also feeds its own estimator
with a local record, so it estimates local (q1, q2, r) on the stencil
[I, first off-diagonals] and R = r I. The global values are the averages
over the windows that did not fail.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .covest import CovParameterization, make_estimator, stencil_bases
from .covest.params import circulant
from .errors import InvalidInput, NumericalFailure
from .etkf import LINEARIZE_RTOL, Ensemble, etkf_analysis, linearize
from .linalg import clamp_psd, psd_factor


@dataclass
class LocalizationConfig:
    radius: int = 5
    n_global: int = 40

    def __post_init__(self):
        if self.radius < 0:
            raise InvalidInput("radius must be >= 0")
        if self.n_global < 1:
            raise InvalidInput("n_global must be >= 1")

    @property
    def single_region(self):
        """A window at least as wide as the ring covers it once, in order."""
        return 2 * self.radius + 1 >= self.n_global

    def region_of(self, site):
        if self.single_region:
            return np.arange(self.n_global)
        return (site + np.arange(-self.radius, self.radius + 1)) % self.n_global

    def center_index(self, site):
        return site if self.single_region else self.radius


def local_regions(config):
    """Cyclic windows, one centered on every site (a single full-ring window
    when the radius covers the ring)."""
    if config.single_region:
        return [config.region_of(0)]
    return [config.region_of(i) for i in range(config.n_global)]


@dataclass
class CirculantQParam:
    q1: float
    q2: float

    def matrix(self, n):
        return circulant(n, self.q1, self.q2)

    @classmethod
    def from_local(cls, Q):
        """Frobenius projection of a local matrix onto [I, first off-diagonals]."""
        p = CovParameterization(stencil_bases(len(Q), wrap=False), np.eye(1)[None])
        a = p.project_Q(Q)
        return cls(float(a[0]), float(a[1]) if len(a) > 1 else 0.0)


@dataclass
class ScalarRParam:
    r: float

    def matrix(self, m):
        return self.r * np.eye(m)


@dataclass
class LetkfState:
    ensemble: Ensemble
    q: CirculantQParam
    r: ScalarRParam
    estimators: list
    q0: np.ndarray = None  # Q used until the estimators warm up
    F_prev: list = None  # per region: list of local one-step operators
    cycle: int = 0


@dataclass
class CycleDiagnostics:
    cycle: int
    rmse: float
    q1: float
    q2: float
    r: float
    regions_skipped: list = field(default_factory=list)


def make_local_estimators(config, kind="mbl", L=1, tau=100.0, q0=(0.1, 0.0), r0=1.0, **kw):
    """One estimator per region with the local stencil and scalar R bases."""
    out = []
    for w in local_regions(config):
        k = len(w)
        Qb = stencil_bases(k, wrap=config.single_region) if k > 1 else np.eye(1)[None]
        p = CovParameterization(Qb, np.eye(k)[None], alpha=np.array(q0[: len(Qb)]), beta=np.array([r0]))
        out.append(make_estimator(kind, p, np.eye(k), k, L=L, tau=tau, **kw))
    return out


def letkf_analysis(ens_f, y_obs, config, R_global):
    """Local analyses; returns the global posterior ensemble and per-region
    (record, posterior ensemble) or the exception that made a region fail."""
    X = ens_f.members
    Xa = X.copy()
    out = []
    for site, w in enumerate(local_regions(config)):
        loc = Ensemble(X[w])
        try:
            ens_a, rec = etkf_analysis(loc, y_obs[w], np.eye(len(w)), R_global[np.ix_(w, w)])
        except (NumericalFailure, InvalidInput, np.linalg.LinAlgError) as exc:
            out.append(exc)
            continue
        if config.single_region:
            Xa = ens_a.members
        else:
            Xa[site] = ens_a.members[config.center_index(site)]
        out.append((rec, ens_a))
    return Ensemble(Xa), out


def letkf_forecast(ens_a, f, Q_global, N, rng):
    """Deterministic member forecasts plus fresh N(0, Q) draws per member at
    each sub-step. The draws are added to the perturbations: they are
    centered over the ensemble (and rescaled by sqrt(Ne / (Ne - 1)) so their
    expected sample covariance stays Q), leaving the forecast mean untouched.
    Returns the prior ensemble and, per sub-step, the (pre, post)
    deterministic perturbation pairs for local linearization."""
    X = ens_a.members
    n, Ne = X.shape
    Lq = psd_factor(Q_global)
    pairs = []
    for _ in range(N):
        U_pre = X - X.mean(axis=1, keepdims=True)
        X = f(X)
        pairs.append((U_pre, X - X.mean(axis=1, keepdims=True)))
        W = Lq @ rng.standard_normal((Lq.shape[1], Ne))
        X = X + np.sqrt(Ne / (Ne - 1)) * (W - W.mean(axis=1, keepdims=True))
    return Ensemble(X), pairs


def letkf_cycle(state, y_obs, config, f, N=1, rng=None, truth=None):
    """One analysis-estimation-forecast cycle. Mutates and returns ``state``
    together with the cycle diagnostics."""
    n = config.n_global
    R_global = clamp_psd(state.r.matrix(n))
    ens_a, local = letkf_analysis(state.ensemble, y_obs, config, R_global)
    regions = local_regions(config)
    skipped, q1s, q2s, rs = [], [], [], []
    for i, (w, res) in enumerate(zip(regions, local)):
        est = state.estimators[i]
        if isinstance(res, Exception):
            skipped.append(i)
            continue
        rec = res[0]
        rec.F_prev = None if state.F_prev is None else state.F_prev[i]
        try:
            est.update(rec)
        except (NumericalFailure, InvalidInput, np.linalg.LinAlgError):
            skipped.append(i)
            continue
        a, b = est.param.alpha, est.param.beta
        q1s.append(a[0])
        q2s.append(a[1] if len(a) > 1 else 0.0)
        rs.append(b[0])
    if q1s:
        state.q = CirculantQParam(float(np.mean(q1s)), float(np.mean(q2s)))
        state.r = ScalarRParam(float(np.mean(rs)))
    warm = state.estimators[0].state.L + 1 if hasattr(state.estimators[0].state, "L") else 2
    state.cycle += 1
    Q_used = clamp_psd(state.q.matrix(n)) if state.cycle >= warm else state.q0
    rmse = np.nan if truth is None else float(np.sqrt(np.mean((ens_a.mean - truth) ** 2)))
    diag = CycleDiagnostics(state.cycle, rmse, state.q.q1, state.q.q2, state.r.r, skipped)
    state.ensemble, pairs = letkf_forecast(ens_a, f, Q_used, N, rng)
    state.F_prev = [[linearize(pre[w], post[w], LINEARIZE_RTOL) for pre, post in pairs] for w in regions]
    return state, diag


def write_diagnostics(path, diags):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["cycle", "mrmse", "q1", "q2", "r", "regions_skipped"])
        for d in diags:
            wr.writerow([d.cycle, repr(d.rmse), repr(d.q1), repr(d.q2), repr(d.r), len(d.regions_skipped)])


@dataclass
class LetkfRun:
    """Twin experiment on the deterministic ring model: observe every site
    with R = r_true I at every cycle, estimate (q1, q2, r) on the fly."""

    Ne: int = 20
    cycles: int = 2000
    radius: int = 5
    estimator: str = "mbl"
    L: int = 1
    tau: float = 100.0
    q0: tuple = (0.1, 0.0)
    r0: float = 0.5
    r_true: float = 1.0
    spinup: int = 1000
    seed: int = 0

    def run(self, model, on_cycle=None):
        n = model.n
        cfg = LocalizationConfig(self.radius, n)
        g_truth = rngmod.stream(self.seed, rngmod.TRUTH)
        g_obs = rngmod.stream(self.seed, rngmod.OBSERVATION)
        g_init = rngmod.stream(self.seed, rngmod.ENSEMBLE_INIT)
        g_fc = rngmod.stream(self.seed, rngmod.FORECAST)
        x = model.F_forcing + g_truth.standard_normal(n)
        for _ in range(self.spinup):
            x = model.deterministic(x)
        X0 = x[:, None] + g_init.standard_normal((n, 1)) + g_init.standard_normal((n, self.Ne))
        ests = make_local_estimators(cfg, self.estimator, self.L, self.tau, self.q0, self.r0)
        q = CirculantQParam(*self.q0)
        st = LetkfState(Ensemble(X0), q, ScalarRParam(self.r0), ests, q0=clamp_psd(q.matrix(n)))
        diags = []
        sr = np.sqrt(self.r_true)
        for _ in range(self.cycles):
            y = x + sr * g_obs.standard_normal(n)
            st, d = letkf_cycle(st, y, cfg, model.deterministic, 1, g_fc, truth=x)
            x = model.deterministic(x)
            diags.append(d)
            if on_cycle is not None:
                on_cycle(d)
        return st, diags
