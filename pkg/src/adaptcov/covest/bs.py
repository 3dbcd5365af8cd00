"""Berry-Sauer estimator: separate one-step draws of R (zero-lag) and Q
(one-lag regression), each smoothed by a running average."""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput, Underdetermined
from ..linalg import effective_rank
from .lagged import chain, cycle_noise, relax


@dataclass
class BsState:
    tau: float
    GQ: np.ndarray
    memory: deque = field(default_factory=lambda: deque(maxlen=2))  # newest first
    btilde_per_basis: bool = False


def r_draw(record):
    """v v^T - H B_f H^T."""
    v = np.asarray(record.v)
    return np.outer(v, v) - record.H @ record.B_f @ record.H.T


def q_regression(now, prev, prev2, GQ, btilde_per_basis=False):
    """Design stack and target of the one-lag Frobenius regression for alpha.

    ``now``, ``prev``, ``prev2`` are the records at j+1, j and j-1.
    """
    F1 = chain(now.F_prev)  # cycle j -> j+1
    F0 = chain(prev.F_prev)  # cycle j-1 -> j
    HF = now.H @ F1
    vv = np.outer(prev.v, prev.v)
    carried = F0 @ prev2.B_a @ F0.T
    c = len(GQ) if btilde_per_basis else 1
    target = np.outer(now.v, prev.v) + HF @ prev.K @ vv - c * (HF @ carried @ prev.H.T)
    design = HF @ cycle_noise(prev.F_prev, GQ) @ prev.H.T
    return design, target


def solve_q(design, target, rtol=1e-10):
    ns = len(design)
    A = design.reshape(ns, -1).T
    rank = effective_rank(A, rtol)
    if rank < ns:
        raise Underdetermined(f"one-lag regression has rank {rank} < {ns}", rank=rank, needed=ns)
    return np.linalg.lstsq(A, target.ravel(), rcond=None)[0]


def bs_update(state, record, param):
    """Consume one record; returns (Q, R) reconstructed from the running
    coefficients. The record enters memory before any Underdetermined is
    raised, so the caller may continue with the previous estimates."""
    param.beta = relax(param.beta, param.project_R(r_draw(record)), state.tau)
    mem = state.memory
    ready = len(mem) == 2
    if ready:
        prev, prev2 = mem[0], mem[1]
        if record.F_prev is None or prev.F_prev is None:
            raise InvalidInput("records after the first must carry F_prev")
        design, target = q_regression(record, prev, prev2, state.GQ, state.btilde_per_basis)
    mem.appendleft(record)
    if ready:
        param.alpha = relax(param.alpha, solve_q(design, target), state.tau)
    return param.reconstruct_Q(), param.reconstruct_R()


class BerrySauer:
    name = "bs"

    def __init__(self, param, Gamma, n=None, L=1, tau=2000.0, btilde_per_basis=False):
        relax(0.0, 0.0, tau)
        Gamma = np.asarray(Gamma, dtype=float)
        self.param = param
        self.state = BsState(float(tau), Gamma @ param.Q_bases @ Gamma.T, btilde_per_basis=btilde_per_basis)

    def update(self, record):
        return bs_update(self.state, record, self.param)

    @property
    def Q(self):
        return self.param.reconstruct_Q()

    @property
    def R(self):
        return self.param.reconstruct_R()

    @property
    def diagnostics(self):
        return {}
