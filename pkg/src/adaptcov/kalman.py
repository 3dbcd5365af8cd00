"""Classical Kalman filter: analysis at observation times, N-step forecasts.

Arrays may carry leading batch axes (independent replicas share F, Gamma, H
but not their states); all products broadcast over them.
"""
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInput, NumericalFailure
from .linalg import sym, tr
from .records import StepRecord


@dataclass
class KalmanState:
    x_f: np.ndarray
    B_f: np.ndarray
    x_a: np.ndarray = None
    B_a: np.ndarray = None
    K: np.ndarray = None
    v: np.ndarray = None

    def record(self, H, F_prev=None):
        return StepRecord(v=self.v, H=H, K=self.K, B_f=self.B_f, B_a=self.B_a, F_prev=F_prev)


def kf_analysis(state, y_obs, H, R_used):
    H = np.asarray(H, dtype=float)
    x_f, B_f = state.x_f, state.B_f
    v = y_obs - (H @ x_f[..., None])[..., 0]
    BHt = B_f @ tr(H)
    S = sym(H @ BHt + R_used)
    try:
        K = tr(np.linalg.solve(S, tr(BHt)))
    except np.linalg.LinAlgError:
        raise NumericalFailure(f"singular innovation covariance (cond {np.linalg.cond(S):.3e})") from None
    if not np.all(np.isfinite(K)):
        raise NumericalFailure(f"non-finite gain (innovation covariance cond {np.linalg.cond(S):.3e})")
    x_a = x_f + (K @ v[..., None])[..., 0]
    n = B_f.shape[-1]
    B_a = sym((np.eye(n) - K @ H) @ B_f)
    return replace(state, x_a=x_a, B_a=B_a, K=K, v=v)


def kf_forecast(state, model, Q_used, N=1):
    """Propagate the posterior N steps; between observations the prior
    propagates into the prior."""
    if N < 1:
        raise InvalidInput("N must be >= 1")
    F, G = model.F, model.Gamma
    GQG = G @ Q_used @ tr(G)
    x, B = state.x_a, state.B_a
    for _ in range(N):
        x = (F @ x[..., None])[..., 0]
        B = sym(F @ B @ F.T + GQG)
    return KalmanState(x_f=x, B_f=B)
