"""Lagged innovation-moment operators shared by the Belanger-type estimators.

For a filter whose gains do not depend on the noise realization, the prior
error obeys Dx_j = U_{j-1} Dx_{j-1} - S_{j-1} xi_{j-1} + (system noise of
cycle j-1), with U = Fc (I - K H), S = Fc K and Fc the product of the one-step
forward operators of the cycle. The lagged innovation moments are then linear
in the covariance coefficients:

    E[v_j v_{j-l}^T] = sum_s alpha_s Hq[l, s] + sum_s beta_s Hr[l, s]

with Hq, Hr built from the recursively propagated Phi tensors below.
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput
from ..linalg import sym, tr


@dataclass
class PhiState:
    L: int
    phiQ: np.ndarray  # (*batch, L+1, N_Q, n, n)
    phiR: np.ndarray  # (*batch, L+1, N_R, n, n)
    GQ: np.ndarray  # (N_Q, n, n): Gamma Q_s Gamma^T
    innovation_buffer: deque = field(default_factory=deque)  # v_j, v_{j-1}, ...
    H_buffer: deque = field(default_factory=deque)  # H_j, H_{j-1}, ...
    U_buffer: deque = field(default_factory=deque)  # U_{j-1}, U_{j-2}, ...
    S_buffer: deque = field(default_factory=deque)  # S_{j-1}, S_{j-2}, ...
    prev_KH: tuple = None
    steps_seen: int = 0

    @classmethod
    def empty(cls, L, n, Gamma, param, batch_shape=(), **extra):
        if L < 0:
            raise InvalidInput("L must be >= 0")
        Gamma = np.asarray(Gamma, dtype=float)
        GQ = Gamma @ param.Q_bases @ Gamma.T
        return cls(
            L=int(L),
            phiQ=np.zeros((*batch_shape, L + 1, param.N_Q, n, n)),
            phiR=np.zeros((*batch_shape, L + 1, param.N_R, n, n)),
            GQ=GQ,
            **extra,
        )

    @property
    def ready(self):
        """True once every lag 0..L has an innovation pair."""
        return self.steps_seen >= self.L + 1


def chain(F_list):
    """F_N ... F_2 F_1 for a time-ordered list."""
    out = F_list[0]
    for F in F_list[1:]:
        out = F @ out
    return out


def cycle_noise(F_list, GQ):
    """Covariance contributions of the system noise added during one cycle,
    carried to its end: sum_k P_k G P_k^T with P_N = I, P_k = F_N ... F_{k+1}.
    ``GQ`` is a stack of G matrices."""
    acc = GQ
    for F in F_list[1:]:
        Fb = F[..., None, :, :]
        acc = Fb @ acc @ tr(Fb) + GQ
    return acc


def propagate_phi(state, U, S, F_chain, param):
    """Advance the Phi tensors by one observation cycle (in place).

    Lag l > 0 is the previous lag l-1 left-multiplied by U; lag 0 is the
    sandwich U Phi U^T plus the fresh noise of the cycle.
    """
    Ub = U[..., None, :, :]
    Ut = tr(Ub)
    q0 = Ub @ state.phiQ[..., 0, :, :, :] @ Ut + cycle_noise(F_chain, state.GQ)
    Sb = S[..., None, :, :]
    r0 = Ub @ state.phiR[..., 0, :, :, :] @ Ut + Sb @ param.R_bases @ tr(Sb)
    Ul = U[..., None, None, :, :]
    state.phiQ = np.concatenate([sym(q0)[..., None, :, :, :], Ul @ state.phiQ[..., :-1, :, :, :]], axis=-4)
    state.phiR = np.concatenate([sym(r0)[..., None, :, :, :], Ul @ state.phiR[..., :-1, :, :, :]], axis=-4)
    return state


def build_h_operators(state, param):
    """Hq[l, s] = H_j PhiQ[l, s] H_{j-l}^T and Hr likewise plus the direct
    observation-noise terms. Only lags with history are filled; the others
    stay zero."""
    H = state.H_buffer
    Hj = H[0][..., None, :, :]
    nl = min(state.L + 1, len(H))
    m = H[0].shape[-2]
    bshape = state.phiQ.shape[:-4]
    Hq = np.zeros((*bshape, state.L + 1, param.N_Q, m, m))
    Hr = np.zeros((*bshape, state.L + 1, param.N_R, m, m))
    C = H[0]
    for l in range(nl):
        Hlt = tr(H[l])[..., None, :, :]
        Hq[..., l, :, :, :] = Hj @ state.phiQ[..., l, :, :, :] @ Hlt
        hr = Hj @ state.phiR[..., l, :, :, :] @ Hlt
        if l == 0:
            hr = hr + param.R_bases
        else:
            # -H_j U_{j-1} ... U_{j-l+1} S_{j-l} R_s
            hr = hr - (C @ state.S_buffer[l - 1])[..., None, :, :] @ param.R_bases
            if l < nl - 1:
                C = C @ state.U_buffer[l - 1]
        Hr[..., l, :, :, :] = hr
    return Hq, Hr


def ingest(state, record, param):
    """Bring the Phi state and the lag buffers up to the current analysis.

    Returns the (Hq, Hr) operators for this step once all lags are available,
    else None.
    """
    if state.prev_KH is not None:
        if record.F_prev is None:
            raise InvalidInput("records after the first must carry F_prev")
        K, H = state.prev_KH
        Fc = chain(record.F_prev)
        n = Fc.shape[-1]
        U = Fc @ (np.eye(n) - K @ H)
        S = Fc @ K
        propagate_phi(state, U, S, record.F_prev, param)
        state.U_buffer.appendleft(U)
        state.S_buffer.appendleft(S)
        while len(state.U_buffer) > state.L:
            state.U_buffer.pop()
            state.S_buffer.pop()
    state.prev_KH = (record.K, record.H)
    state.innovation_buffer.appendleft(record.v)
    state.H_buffer.appendleft(record.H)
    while len(state.H_buffer) > state.L + 1:
        state.H_buffer.pop()
        state.innovation_buffer.pop()
    state.steps_seen += 1
    if not state.ready:
        return None
    return build_h_operators(state, param)


def lagged_products(state):
    """v_j v_{j-l}^T for l = 0..L, stacked on axis -3."""
    v = state.innovation_buffer
    vj = v[0][..., :, None]
    return np.stack([vj @ v[l][..., None, :] for l in range(state.L + 1)], axis=-3)


def relax(old, new, tau):
    """Running average old + (new - old) / tau."""
    if tau < 1:
        raise InvalidInput("tau must be >= 1")
    return old + (new - old) / tau
