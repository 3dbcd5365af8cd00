"""Ensemble transform Kalman filter for stochastic nonlinear systems.

The analysis is the symmetric-square-root transform; the forecast integrates
each member deterministically and then regenerates the perturbations so that
their sample covariance equals the deterministic spread plus Gamma Q Gamma^T.
Forward and observation operators are linearized from ensemble perturbations
for use by the covariance estimators.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInput, NumericalFailure
from .linalg import effective_rank, pinv, psd_sqrt, sym
from .records import StepRecord


@dataclass
class Ensemble:
    members: np.ndarray  # (n, Ne)
    B: np.ndarray = None  # covariance the ensemble was built to represent, if known

    @property
    def size(self):
        return self.members.shape[1]

    @property
    def mean(self):
        return self.members.mean(axis=1)

    @property
    def perturbations(self):
        return self.members - self.mean[:, None]

    def covariance(self):
        U = self.perturbations
        return U @ U.T / (self.size - 1)


EtkfStepRecord = StepRecord

# Directions whose ensemble spread is below this fraction of the largest are
# treated as unsampled when the filters linearize. A clamped, nearly singular
# R collapses the analysis ensemble along some observed direction; inverting
# that sliver amplifies the nonlinear part of the forecast into F-hat.
LINEARIZE_RTOL = 1e-4


def linearize(U_in, U_out, rtol=1e-10):
    """Least-squares linear map taking perturbations U_in to U_out."""
    return U_out @ pinv(U_in, rtol)


def linearization_rank(U_in, rtol=1e-10):
    return effective_rank(U_in, rtol)


def _observe(h, X):
    if callable(h):
        return np.asarray(h(X), dtype=float)
    return np.asarray(h, dtype=float) @ X


def etkf_analysis(ens_f, y_obs, h, R_used):
    """One ETKF analysis. ``h`` is a matrix or a callable on (n, Ne) arrays.

    Returns the posterior ensemble and a StepRecord with the innovation,
    the linearized observation operator, gain and covariances.
    """
    X = ens_f.members
    if not np.all(np.isfinite(X)):
        raise NumericalFailure("non-finite values in the prior ensemble")
    Ne = X.shape[1]
    xbar = X.mean(axis=1)
    U = X - xbar[:, None]
    Y = _observe(h, X)
    ybar = Y.mean(axis=1)
    V = Y - ybar[:, None]
    H_hat = linearize(U, V, LINEARIZE_RTOL)

    R_used = np.asarray(R_used, dtype=float)
    try:
        cR = sla.cho_factor(R_used)
    except np.linalg.LinAlgError:
        raise InvalidInput("R_used must be positive definite") from None
    RinvV = sla.cho_solve(cR, V)
    J = (Ne - 1) * np.eye(Ne) + V.T @ RinvV
    J = sym(J)
    v = np.asarray(y_obs, dtype=float) - ybar
    d1, E1 = np.linalg.eigh(J)
    w = E1.T @ (RinvV.T @ v)
    xbar_a = xbar + U @ (E1 @ (w / d1))
    T = (E1 * np.sqrt((Ne - 1) / d1)) @ E1.T
    Ua = U @ T

    Py = sym(V @ V.T / (Ne - 1) + R_used)
    Pxy = U @ V.T / (Ne - 1)
    K = np.linalg.solve(Py, Pxy.T).T
    B_f = ens_f.B if ens_f.B is not None else U @ U.T / (Ne - 1)
    B_a = sym(Ua @ Ua.T / (Ne - 1))
    Xa = xbar_a[:, None] + Ua
    if not np.all(np.isfinite(Xa)):
        raise NumericalFailure("non-finite values in the posterior ensemble")
    rec = StepRecord(v=v, H=H_hat, K=K, B_f=B_f, B_a=B_a)
    return Ensemble(Xa, B=B_a), rec


def regenerate(xbar, B, Ne, rng, printed_exponent=False, rtol=1e-10):
    """Draw Ne members with mean ``xbar`` whose sample covariance is B.

    Centered Gaussian draws are whitened so that their own sample
    covariance is the identity on their span, then coloured by sqrt(B).
    With ``printed_exponent`` the whitening uses D^-1 instead of D^-1/2.
    When Ne <= n only the span of the draws can be matched.
    """
    n = xbar.shape[0]
    d = rng.standard_normal((n, Ne))
    d -= d.mean(axis=1, keepdims=True)
    d3, E3 = np.linalg.eigh(d @ d.T / (Ne - 1))
    keep = d3 > rtol * d3.max()
    p = -1.0 if printed_exponent else -0.5
    scale = np.where(keep, np.where(keep, d3, 1.0) ** p, 0.0)
    Ut = psd_sqrt(B) @ ((E3 * scale) @ (E3.T @ d))
    return xbar[:, None] + Ut


def etkf_forecast(ens_a, f, Gamma, Q_used, N, rng, printed_exponent=False):
    """Forecast N steps; returns the prior ensemble and the N linearized
    one-step operators in time order."""
    if N < 1:
        raise InvalidInput("N must be >= 1")
    X = ens_a.members
    Ne = X.shape[1]
    Gamma = np.asarray(Gamma, dtype=float)
    GQG = Gamma @ np.asarray(Q_used, dtype=float) @ Gamma.T
    noisy = bool(np.any(GQG != 0.0))
    F_hats = []
    B = None
    for _ in range(N):
        U_pre = X - X.mean(axis=1, keepdims=True)
        X = f(X)
        xbar = X.mean(axis=1)
        U_df = X - xbar[:, None]
        F_hats.append(linearize(U_pre, U_df, LINEARIZE_RTOL))
        B = sym(U_df @ U_df.T / (Ne - 1) + GQG)
        if noisy:
            X = regenerate(xbar, B, Ne, rng, printed_exponent)
    return Ensemble(X, B=B), F_hats


def init_ensemble(x0, spread, Ne, rng):
    n = len(x0)
    X = np.asarray(x0, dtype=float)[:, None] + spread * rng.standard_normal((n, Ne))
    return Ensemble(X)
