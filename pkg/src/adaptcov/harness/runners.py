"""Filter loops that couple a primary filter (KF or ETKF) with an adaptive
covariance estimator and report the estimates after every analysis."""
from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from ..errors import Underdetermined
from ..etkf import Ensemble, etkf_analysis, etkf_forecast, regenerate
from ..kalman import KalmanState, kf_analysis, kf_forecast
from ..linalg import clamp_psd


@dataclass
class StepResult:
    step: int
    Q: np.ndarray  # raw estimate (may be indefinite)
    R: np.ndarray
    x_a: np.ndarray
    status: str = "ok"


def _warmup(estimator):
    """Number of analyses before an estimator's output is used."""
    if estimator is None:
        return np.inf
    if estimator.name == "bs":
        return 2
    return estimator.state.L + 1


def assimilate(model, scheme, traj, estimator=None, Q0=None, R0=None, filter="kf",
               Ne=16, seed=0, x0=None, B0=None, printed_exponent=False):
    """Run the filter over ``traj`` and yield a StepResult per analysis.

    Before the estimator has seen enough analyses the filter uses the
    guesses ``Q0``/``R0``; afterwards it uses the current estimates with
    eigenvalues clamped at 1e-10.
    """
    n = model.n
    Q_used = np.array(model.Q if Q0 is None else Q0, dtype=float)
    R_used = np.array(scheme.R_true if R0 is None else R0, dtype=float)
    Q_est, R_est = Q_used.copy(), R_used.copy()
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    B0 = np.eye(n) if B0 is None else np.asarray(B0, dtype=float)
    H, N = scheme.H, scheme.N
    warm = _warmup(estimator)
    if filter == "kf":
        kf = KalmanState(x_f=x0, B_f=B0)
        F_cycle = [model.F] * N
    elif filter == "etkf":
        g_init = rngmod.stream(seed, rngmod.ENSEMBLE_INIT)
        g_fc = rngmod.stream(seed, rngmod.FORECAST)
        ens = Ensemble(regenerate(x0, B0, Ne, g_init))
    else:
        raise ValueError(f"unknown filter {filter!r}")
    F_prev = None
    for k, y in enumerate(traj.obs):
        status = "ok"
        if filter == "kf":
            kf = kf_analysis(kf, y, H, R_used)
            rec = kf.record(H, F_prev)
            x_a = kf.x_a
        else:
            ens, rec = etkf_analysis(ens, y, H, R_used)
            rec.F_prev = F_prev
            x_a = ens.mean
        if estimator is not None:
            try:
                Q_est, R_est = estimator.update(rec)
            except Underdetermined as exc:
                status = f"underdetermined(rank={exc.rank},needed={exc.needed})"
                Q_est, R_est = estimator.Q, estimator.R
            if k + 1 >= warm:
                Q_used, R_used = clamp_psd(Q_est), clamp_psd(R_est)
        yield StepResult(k + 1, Q_est, R_est, x_a, status)
        if filter == "kf":
            kf = kf_forecast(kf, model, Q_used, N)
            F_prev = F_cycle
        else:
            ens, F_prev = etkf_forecast(ens, model.deterministic, model.Gamma, Q_used, N, g_fc,
                                        printed_exponent=printed_exponent)


def simulate_replicas(model, scheme, steps, seed, replicas):
    """Observation sequences of independent replicas, shape (replicas, K, m).

    Replica r uses the truth and observation streams of seed ``(seed, r)``.
    """
    from ..models import simulate

    return np.stack([simulate(model, scheme, steps, seed=_replica_seed(seed, r)).obs for r in range(replicas)])


def _replica_seed(seed, r):
    return int(np.random.SeedSequence(entropy=int(seed), spawn_key=(rngmod.REPLICA, r)).generate_state(2, np.uint64)[0])


def assimilate_batch(model, scheme, obs, estimator, Q0, R0):
    """Kalman filter over a batch of replicas in lockstep.

    ``obs`` has shape (B, K, m); the estimator must have been built with
    batch_shape (B,). Yields (step, Q, R) with leading batch axis.
    """
    B = obs.shape[0]
    n = model.n
    Q_used = np.broadcast_to(np.asarray(Q0, dtype=float), (B, *np.shape(Q0))).copy()
    R_used = np.broadcast_to(np.asarray(R0, dtype=float), (B, *np.shape(R0))).copy()
    kf = KalmanState(x_f=np.zeros((B, n)), B_f=np.broadcast_to(np.eye(n), (B, n, n)).copy())
    H, N = scheme.H, scheme.N
    warm = _warmup(estimator)
    F_cycle = [model.F] * N
    F_prev = None
    for k in range(obs.shape[1]):
        kf = kf_analysis(kf, obs[:, k], H, R_used)
        Q_est, R_est = estimator.update(kf.record(H, F_prev))
        if k + 1 >= warm:
            Q_used, R_used = clamp_psd(Q_est), clamp_psd(R_est)
        yield k + 1, Q_est, R_est
        kf = kf_forecast(kf, model, Q_used, N)
        F_prev = F_cycle
