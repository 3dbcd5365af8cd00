"""Evaluation metrics for covariance estimates and state analyses."""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput


def _diag(a):
    a = np.asarray(a, dtype=float)
    return np.diag(np.atleast_2d(a)) if a.size else np.zeros(0)


def mrrmse(Qt, Rt, Q_true, R_true):
    """Mean relative absolute error of the diagonal entries of Q and R.

    The denominator counts the compared diagonal entries of both matrices;
    an empty matrix (size 0) contributes nothing.
    """
    q, qt = _diag(Qt), _diag(Q_true)
    r, rt = _diag(Rt), _diag(R_true)
    if np.any(qt == 0) or np.any(rt == 0):
        raise InvalidInput("true covariances must have nonzero diagonals")
    k = len(qt) + len(rt)
    if k == 0:
        raise InvalidInput("nothing to compare")
    return float((np.sum(np.abs(q - qt) / qt) + np.sum(np.abs(r - rt) / rt)) / k)


def rmse_mmab(runs, Q_true, R_true, window):
    """Frobenius RMSE and mean of maximum absolute bias over a trailing window.

    ``runs`` is a sequence of (Q_series, R_series), each an array of shape
    (steps, ., .). ``window`` is the number of trailing steps used.
    """
    Q_true = np.atleast_2d(np.asarray(Q_true, dtype=float))
    R_true = np.atleast_2d(np.asarray(R_true, dtype=float))
    sq, mab = [], []
    for Qs, Rs in runs:
        Qs = np.asarray(Qs, dtype=float).reshape(-1, *Q_true.shape)
        Rs = np.asarray(Rs, dtype=float).reshape(-1, *R_true.shape)
        if window < 1 or window > len(Qs) or window > len(Rs):
            raise InvalidInput("window must lie within the series length")
        Qw, Rw = Qs[-window:], Rs[-window:]
        sq.append(np.mean(np.sum((Qw - Q_true) ** 2, axis=(1, 2)) + np.sum((Rw - R_true) ** 2, axis=(1, 2))))
        mab.append(max(np.abs(Qw.mean(0) - Q_true).max(), np.abs(Rw.mean(0) - R_true).max()))
    return float(np.sqrt(np.mean(sq))), float(np.mean(mab))


def error_percentage(estimate, truth):
    truth = np.asarray(truth, dtype=float)
    nt = np.linalg.norm(truth)
    if nt == 0:
        raise InvalidInput("truth has zero norm")
    return float(100.0 * np.linalg.norm(np.asarray(estimate, dtype=float) - truth) / nt)


def state_rmse(analysis, truth):
    """Per-step RMS error over components, and its temporal mean."""
    a = np.atleast_2d(np.asarray(analysis, dtype=float))
    t = np.atleast_2d(np.asarray(truth, dtype=float))
    if a.shape != t.shape:
        raise InvalidInput(f"analysis {a.shape} and truth {t.shape} are not aligned")
    per_step = np.sqrt(np.mean((a - t) ** 2, axis=-1))
    return per_step, float(per_step.mean())


@dataclass
class MetricSeries:
    """Append-only record of estimates and state errors per analysis step."""

    steps: list = field(default_factory=list)
    Q: list = field(default_factory=list)
    R: list = field(default_factory=list)
    state_error: list = field(default_factory=list)

    def append(self, step, Q, R, state_error=np.nan):
        if self.steps and step <= self.steps[-1]:
            raise InvalidInput("steps must increase")
        self.steps.append(int(step))
        self.Q.append(np.array(Q, dtype=float))
        self.R.append(np.array(R, dtype=float))
        self.state_error.append(float(state_error))

    def __len__(self):
        return len(self.steps)

    def arrays(self):
        return np.array(self.steps), np.array(self.Q), np.array(self.R)

    def mrrmse_series(self, Q_true, R_true):
        return np.array([mrrmse(q, r, Q_true, R_true) for q, r in zip(self.Q, self.R)])
