"""Original Belanger estimator: a secondary Kalman filter on the coefficient
vector theta = (alpha, beta), observing vec(v_j v_{j-l}^T) through the
lagged-moment operators.

The observation-error covariance of vec(v_j v_{j-l}^T) is approximated by
the Gaussian fourth moment C_j (x) C_{j-l}, with C the filter's predicted
innovation covariance H B_f H^T + R (R at the current estimate); for l = 0
the transpose symmetry doubles it on symmetric matrices. Its inverse is
applied through X -> C_j^-1 X C_{j-l}^-1, so a step costs O(N_p m^3)
instead of an m^2 x m^2 inversion.
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput
from ..linalg import clamp_psd, sym
from .lagged import PhiState, ingest, lagged_products


@dataclass
class OblState(PhiState):
    theta: np.ndarray = None
    P_theta: np.ndarray = None
    C_inv_buffer: deque = field(default_factory=deque)  # C_j^-1, C_{j-1}^-1, ...
    weight: str = "gaussian"  # or "identity"
    regularized: bool = False


def innovation_weight(record, R, state):
    """Inverse of the predicted innovation covariance, regularized by
    eps I (eps = 1e-8 tr(C) / m) when not positive definite."""
    C = sym(record.H @ record.B_f @ record.H.T + R)
    m = C.shape[-1]
    try:
        np.linalg.cholesky(C)
        state.regularized = False
    except np.linalg.LinAlgError:
        eps = 1e-8 * max(np.trace(C), 1e-300) / m
        C = clamp_psd(C, 0.0) + eps * np.eye(m)
        state.regularized = True
    return np.linalg.inv(C)


def secondary_update(theta, P, A, z, WA):
    """One information-consistent KF analysis for a static parameter.

    ``A`` is the (N_p, m, m) stack of design matrices, ``z`` the observed
    m x m matrix and ``WA`` the stack with the inverse observation-error
    weight applied. theta <- theta + (I + P G)^-1 P b, P <- (I + P G)^-1 P.
    """
    G = np.einsum("sab,tab->st", A, WA)
    resid = z - np.tensordot(theta, A, axes=(0, 0))
    b = np.einsum("sab,ab->s", WA, resid)
    M = np.eye(len(theta)) + P @ G
    theta = theta + np.linalg.solve(M, P @ b)
    P = sym(np.linalg.solve(M, P))
    return theta, P


def obl_update(state, param, Hq, Hr):
    """Run the secondary filter once per lag; returns reconstructed (Q, R)."""
    Y = lagged_products(state)
    A_all = np.concatenate([Hq, Hr], axis=-3)
    Ci = state.C_inv_buffer
    theta, P = state.theta, state.P_theta
    for l in range(state.L + 1):
        A = A_all[l]
        if state.weight == "identity":
            WA = A
        else:
            WA = Ci[0] @ A @ Ci[l]
            if l == 0:
                WA = 0.5 * WA
        theta, P = secondary_update(theta, P, A, Y[l], WA)
    state.theta, state.P_theta = theta, P
    param.alpha = theta[: param.N_Q].copy()
    param.beta = theta[param.N_Q:].copy()
    return param.reconstruct_Q(), param.reconstruct_R()


class OriginalBelanger:
    name = "obl"

    def __init__(self, param, Gamma, n, L=1, prior_var=None, weight="gaussian"):
        """``prior_var``: scalar or matrix prior covariance of theta; by
        default diag(theta_0^2), i.e. the initial guess is trusted to within
        its own magnitude."""
        if np.ndim(param.alpha) != 1:
            raise InvalidInput("the secondary-filter estimator runs one replica at a time")
        if weight not in ("gaussian", "identity"):
            raise InvalidInput(f"unknown weight {weight!r}")
        self.param = param
        theta = np.concatenate([param.alpha, param.beta])
        if prior_var is None:
            P = np.diag(np.maximum(theta**2, 1e-12))
        elif np.ndim(prior_var) == 0:
            P = prior_var * np.eye(len(theta))
        else:
            P = np.asarray(prior_var, dtype=float)
        self.state = OblState.empty(L, n, Gamma, param, theta=theta, P_theta=P, weight=weight)

    def update(self, record):
        st = self.state
        st.C_inv_buffer.appendleft(innovation_weight(record, clamp_psd(self.R), st))
        while len(st.C_inv_buffer) > st.L + 1:
            st.C_inv_buffer.pop()
        ops = ingest(st, record, self.param)
        if ops is None:
            return self.Q, self.R
        return obl_update(st, self.param, *ops)

    @property
    def Q(self):
        return self.param.reconstruct_Q()

    @property
    def R(self):
        return self.param.reconstruct_R()

    @property
    def diagnostics(self):
        return {"regularized": self.state.regularized}
