"""Linear parameterizations Q = sum alpha_s Q_s, R = sum beta_s R_s."""
import numpy as np

from ..errors import InvalidInput


def _stack(bases, name):
    b = np.asarray(bases, dtype=float)
    if b.ndim != 3 or b.shape[1] != b.shape[2]:
        raise InvalidInput(f"{name} must be a list of square matrices")
    if not np.allclose(b, np.swapaxes(b, 1, 2), atol=1e-12):
        raise InvalidInput(f"{name} must be symmetric")
    flat = b.reshape(len(b), -1)
    if np.linalg.matrix_rank(flat @ flat.T) < len(b):
        raise InvalidInput(f"{name} are linearly dependent (singular Gram matrix)")
    return b


class CovParameterization:
    """Bases for Q and R together with the current coefficient vectors.

    ``alpha`` and ``beta`` may carry leading batch axes.
    """

    def __init__(self, Q_bases, R_bases, alpha=None, beta=None):
        self.Q_bases = _stack(Q_bases, "Q_bases")
        self.R_bases = _stack(R_bases, "R_bases")
        self.alpha = np.zeros(self.N_Q) if alpha is None else np.asarray(alpha, dtype=float)
        self.beta = np.zeros(self.N_R) if beta is None else np.asarray(beta, dtype=float)
        if self.alpha.shape[-1] != self.N_Q or self.beta.shape[-1] != self.N_R:
            raise InvalidInput("coefficient vectors do not match the bases")
        self._pq = np.linalg.pinv(self.Q_bases.reshape(self.N_Q, -1).T)
        self._pr = np.linalg.pinv(self.R_bases.reshape(self.N_R, -1).T)

    @property
    def N_Q(self):
        return len(self.Q_bases)

    @property
    def N_R(self):
        return len(self.R_bases)

    @property
    def N_p(self):
        return self.N_Q + self.N_R

    def reconstruct_Q(self, alpha=None):
        a = self.alpha if alpha is None else np.asarray(alpha, dtype=float)
        return np.tensordot(a, self.Q_bases, axes=([-1], [0]))

    def reconstruct_R(self, beta=None):
        b = self.beta if beta is None else np.asarray(beta, dtype=float)
        return np.tensordot(b, self.R_bases, axes=([-1], [0]))

    def project_Q(self, Q):
        """Frobenius least-squares coefficients of Q in the Q basis."""
        q = np.asarray(Q, dtype=float)
        return q.reshape(*q.shape[:-2], -1) @ self._pq.T

    def project_R(self, R):
        r = np.asarray(R, dtype=float)
        return r.reshape(*r.shape[:-2], -1) @ self._pr.T

    def set_from(self, Q0, R0, batch_shape=()):
        """Initialize coefficients by projecting guesses onto the bases."""
        self.alpha = np.broadcast_to(self.project_Q(Q0), (*batch_shape, self.N_Q)).copy()
        self.beta = np.broadcast_to(self.project_R(R0), (*batch_shape, self.N_R)).copy()
        return self


def diagonal_bases(k):
    out = np.zeros((k, k, k))
    out[np.arange(k), np.arange(k), np.arange(k)] = 1.0
    return out


def symmetric_bases(k):
    """One basis matrix per independent entry of a symmetric k x k matrix."""
    out = []
    for i in range(k):
        for j in range(i, k):
            e = np.zeros((k, k))
            e[i, j] = e[j, i] = 1.0
            out.append(e)
    return np.array(out)


def block_bases(template, block):
    """Symmetric block pattern filled with the template's own blocks.

    With alpha = 1 the bases sum to ``template``.
    """
    t = np.asarray(template, dtype=float)
    n = t.shape[0]
    if n % block:
        raise InvalidInput(f"block size {block} does not divide {n}")
    nb = n // block
    out = []
    for i in range(nb):
        for j in range(i, nb):
            e = np.zeros_like(t)
            si, sj = slice(i * block, (i + 1) * block), slice(j * block, (j + 1) * block)
            e[si, sj] = t[si, sj]
            e[sj, si] = t[sj, si]
            out.append(e)
    return np.array(out)


def stencil_bases(k, wrap):
    """[I, first off-diagonals]; cyclic when ``wrap``."""
    off = np.eye(k, k=1) + np.eye(k, k=-1)
    if wrap and k > 2:
        off[0, -1] = off[-1, 0] = 1.0
    return np.array([np.eye(k), off])


def circulant(n, q1, q2):
    return q1 * np.eye(n) + q2 * stencil_bases(n, wrap=True)[1]
