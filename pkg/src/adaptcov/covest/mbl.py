"""Modified Belanger estimator: cumulative lagged-moment least squares
followed by a running-average relaxation of the coefficients."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ..linalg import sym_pinv, tr
from .lagged import PhiState, ingest, lagged_products, relax

RTOL = 1e-10


@dataclass
class MblState(PhiState):
    tau: float = 1000.0
    Hq_sum: np.ndarray = None
    Hr_sum: np.ndarray = None
    Y_sum: np.ndarray = None
    n_sums: int = 0
    rank_deficient: bool = False


def stacked_system(Hq_sum, Hr_sum, Y_sum):
    """Vectorize all lag blocks into the design matrix and data vector."""
    A = np.concatenate([Hq_sum, Hr_sum], axis=-3)  # (*b, L+1, N_p, m, m)
    A = np.moveaxis(A, -3, -1)
    A = A.reshape(*A.shape[:-4], -1, A.shape[-1])
    y = Y_sum.reshape(*Y_sum.shape[:-3], -1)
    return A, y


def solve_normal(A, y, rtol=RTOL):
    """Minimum-norm least squares through the normal equations.

    Returns ``(coef, truncated)``. Large well-conditioned systems go through
    Cholesky; small or batched ones (and any singular case) through an
    eigenvalue pseudo-inverse with relative cutoff ``rtol``.
    """
    At = tr(A)
    G = At @ A
    b = (At @ y[..., None])[..., 0]
    if G.ndim == 2 and G.shape[0] > 32:
        try:
            c, low = sla.cho_factor(G, check_finite=False)
            d = np.abs(np.diag(c))
            if d.min() ** 2 > rtol * d.max() ** 2:
                return sla.cho_solve((c, low), b, check_finite=False), False
        except np.linalg.LinAlgError:
            pass
    Gp, truncated = sym_pinv(G, rtol)
    return (Gp @ b[..., None])[..., 0], truncated


def mbl_update(state, param, Hq, Hr):
    """Accumulate this step's moments and operators, solve, relax.

    Mutates ``state`` and ``param`` (coefficients). Returns (Q, R), the raw
    reconstructed estimates (possibly indefinite).
    """
    Y = lagged_products(state)
    if state.Y_sum is None:
        state.Y_sum, state.Hq_sum, state.Hr_sum = Y.copy(), Hq.copy(), Hr.copy()
    else:
        state.Y_sum += Y
        state.Hq_sum += Hq
        state.Hr_sum += Hr
    state.n_sums += 1
    if state.n_sums >= 2:
        A, y = stacked_system(state.Hq_sum, state.Hr_sum, state.Y_sum)
        lam, truncated = solve_normal(A, y)
        state.rank_deficient = truncated
        nq = param.N_Q
        param.alpha = relax(param.alpha, lam[..., :nq], state.tau)
        param.beta = relax(param.beta, lam[..., nq:], state.tau)
    return param.reconstruct_Q(), param.reconstruct_R()


class ModifiedBelanger:
    """Filter-facing wrapper: feed one StepRecord per analysis time."""

    name = "mbl"

    def __init__(self, param, Gamma, n, L=1, tau=1000.0, batch_shape=()):
        self.param = param
        self.state = MblState.empty(L, n, Gamma, param, batch_shape, tau=float(tau))
        relax(0.0, 0.0, tau)  # validates tau

    def update(self, record):
        ops = ingest(self.state, record, self.param)
        if ops is None:
            return self.Q, self.R
        return mbl_update(self.state, self.param, *ops)

    @property
    def Q(self):
        return self.param.reconstruct_Q()

    @property
    def R(self):
        return self.param.reconstruct_R()

    @property
    def diagnostics(self):
        return {"rank_deficient": self.state.rank_deficient}
