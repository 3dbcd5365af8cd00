"""Per-step cost of the estimator-specific update as a function of the
number of observations m.

Both Belanger variants share the lagged-operator recursion; what differs is
the step that turns operators and innovation products into new parameters:
a stacked least-squares solve (modified) versus a weighted secondary Kalman
update per lag (original). That step is timed on synthetic operators.
"""
import time
from dataclasses import dataclass

import numpy as np

from ..covest import CovParameterization, ModifiedBelanger, OriginalBelanger
from ..covest.mbl import mbl_update
from ..covest.obl import innovation_weight, obl_update
from ..errors import InvalidInput
from ..records import StepRecord


@dataclass
class BenchResult:
    m_list: list
    times: dict  # method -> list of median seconds per step
    slopes: dict  # method -> fitted log-log slope

    def table(self):
        rows = ["m," + ",".join(f"{k}_seconds" for k in self.times)]
        for i, m in enumerate(self.m_list):
            rows.append(f"{m}," + ",".join(repr(self.times[k][i]) for k in self.times))
        return "\n".join(rows) + "\n"


def _random_bases(k, count, rng):
    out = []
    for _ in range(count):
        a = rng.standard_normal((k, k))
        out.append(a + a.T)
    return np.array(out)


def _setup(m, Np, L, rng):
    nq = Np // 2
    param = CovParameterization(_random_bases(m, nq, rng), _random_bases(m, Np - nq, rng),
                                alpha=np.ones(nq), beta=np.ones(Np - nq))
    Hq = rng.standard_normal((L + 1, nq, m, m))
    Hr = rng.standard_normal((L + 1, Np - nq, m, m))
    return param, Hq, Hr


def _prime(est, m, L, rng):
    """Fill lag buffers with synthetic records (H = I, no dynamics)."""
    eye = np.eye(m)
    for _ in range(L + 1):
        v = rng.standard_normal(m)
        rec = StepRecord(v=v, H=eye, K=0.5 * eye, B_f=eye, B_a=0.5 * eye, F_prev=[0.9 * eye])
        if est.state.steps_seen == 0:
            rec.F_prev = None
        est.update(rec)


def bench_complexity(m_list=(10, 20, 40, 80), Np=4, L=1, reps=5, steps=50, seed=0):
    """Median per-step time of the parameter-update stage for each method,
    with a least-squares slope of log(time) against log(m)."""
    if reps < 5:
        raise InvalidInput("reps must be >= 5")
    m_list = [int(m) for m in m_list]
    if sorted(m_list) != m_list or len(set(m_list)) != len(m_list):
        raise InvalidInput("m_list must be strictly ascending")
    rng = np.random.default_rng(seed)
    times = {"mbl": [], "obl": []}
    for m in m_list:
        param, Hq, Hr = _setup(m, Np, L, rng)
        mbl = ModifiedBelanger(param, np.eye(m), m, L=L, tau=1000.0)
        obl = OriginalBelanger(CovParameterization(param.Q_bases, param.R_bases, np.ones(Np // 2),
                                                   np.ones(Np - Np // 2)), np.eye(m), m, L=L)
        _prime(mbl, m, L, rng)
        _prime(obl, m, L, rng)
        rec = StepRecord(v=None, H=np.eye(m), K=None, B_f=np.eye(m), B_a=None)
        R = obl.R

        def obl_step(state, p, Hq, Hr):
            # the weighted update needs fresh inverse innovation covariances
            state.C_inv_buffer.appendleft(innovation_weight(rec, R, state))
            state.C_inv_buffer.pop()
            return obl_update(state, p, Hq, Hr)

        methods = (("mbl", mbl, mbl_update), ("obl", obl, obl_step))
        samples = {name: [] for name, _, _ in methods}
        for rep in range(reps + 1):  # rep 0 warms caches and is discarded
            for name, est, fn in methods:
                t = time.perf_counter()
                for _ in range(steps):
                    fn(est.state, est.param, Hq, Hr)
                if rep:
                    samples[name].append((time.perf_counter() - t) / steps)
        for name in samples:
            times[name].append(float(np.median(samples[name])))
    x = np.log(m_list)
    slopes = {k: float(np.polyfit(x, np.log(v), 1)[0]) for k, v in times.items()}
    return BenchResult(m_list, times, slopes)
