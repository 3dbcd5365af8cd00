"""Build models, filters and estimators from a config; run and persist."""
import csv
import json
import platform
import time
from pathlib import Path

import numpy as np

from .. import __version__
from .. import models as M
from ..covest import CovParameterization, block_bases, diagonal_bases, make_estimator, symmetric_bases
from ..letkf import LetkfRun, write_diagnostics
from ..metrics import mrrmse
from .config import as_dict, dump, expand_sweep
from .runners import assimilate


def build_system(cfg):
    mc = cfg.model
    if mc.kind == "linear2d":
        return M.linear2d(mc.obs)
    if mc.kind == "triad":
        return M.triad(mc.obs)
    if mc.kind == "l96":
        return M.l96_stochastic(cfg.seed, N=mc.N, ratio=mc.ratio, m=mc.m, n=mc.n)
    raise ValueError(f"model {mc.kind!r} has no observation scheme builder")


def build_parameterization(cfg, model, scheme):
    ec = cfg.estimator
    if ec.bases == "block":
        Qb, Rb = block_bases(model.Q, ec.block), symmetric_bases(scheme.m)
    else:
        Qb, Rb = diagonal_bases(model.ell), diagonal_bases(scheme.m)
    p = CovParameterization(Qb, Rb)
    return p.set_from(ec.q0_scale * model.Q, ec.r0_scale * scheme.R_true)


def build_estimator(cfg, model, scheme, param):
    ec = cfg.estimator
    if ec.kind == "none":
        return None
    kw = {}
    if ec.kind == "obl" and ec.prior_var is not None:
        kw["prior_var"] = ec.prior_var
    if ec.kind == "bs":
        kw["btilde_per_basis"] = ec.btilde_per_basis
    return make_estimator(ec.kind, param, model.Gamma, model.n, L=ec.L, tau=ec.tau, **kw)


def _num(x):
    return repr(float(x))


def run(cfg, out_dir=None):
    """Run one experiment; write metrics.csv, summary.json and manifest.json.

    Returns the summary dictionary.
    """
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if cfg.filter.kind == "letkf":
        summary, flags = _run_letkf(cfg, out)
    else:
        summary, flags = _run_filter(cfg, out)
    wall = time.perf_counter() - t0
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest = {
        "config": as_dict(cfg),
        "config_text": dump(cfg),
        "seed": cfg.seed,
        "wall_clock_seconds": wall,
        "flags": flags,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def _run_filter(cfg, out):
    model, scheme = build_system(cfg)
    param = build_parameterization(cfg, model, scheme)
    est = build_estimator(cfg, model, scheme, param)
    Q0, R0 = param.reconstruct_Q(), param.reconstruct_R()
    traj = M.simulate(model, scheme, cfg.steps * scheme.N, seed=cfg.seed)
    Qt, Rt = model.Q, scheme.R_true
    nq, nr = param.N_Q, param.N_R
    header = (["step"] + [f"alpha_{i + 1}" for i in range(nq)] + [f"beta_{i + 1}" for i in range(nr)]
              + ["q_frob_err", "r_frob_err", "mrrmse", "state_rmse", "status"])
    flags = {"underdetermined_steps": 0, "rank_deficient_steps": 0}
    last = None
    truth = traj.truth_at_obs
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in assimilate(model, scheme, traj, est, Q0=Q0, R0=R0, filter=cfg.filter.kind, Ne=cfg.filter.Ne,
                            seed=cfg.seed, printed_exponent=cfg.filter.printed_exponent):
            if r.status != "ok":
                flags["underdetermined_steps"] += 1
            if est is not None and est.diagnostics.get("rank_deficient"):
                flags["rank_deficient_steps"] += 1
            last = r
            if r.step % cfg.trace_every and r.step != cfg.steps:
                continue
            a = param.alpha if est is not None else param.project_Q(r.Q)
            b = param.beta if est is not None else param.project_R(r.R)
            err = np.sqrt(np.mean((r.x_a - truth[r.step - 1]) ** 2))
            wr.writerow([r.step, *map(_num, a), *map(_num, b), _num(np.linalg.norm(r.Q - Qt)),
                         _num(np.linalg.norm(r.R - Rt)), _num(mrrmse(r.Q, r.R, Qt, Rt)), _num(err), r.status])
    flags["underdetermined"] = flags["underdetermined_steps"] > 0
    summary = {
        "name": cfg.name,
        "steps": cfg.steps,
        "alpha": [float(x) for x in param.alpha],
        "beta": [float(x) for x in param.beta],
        "Q": np.asarray(last.Q).tolist(),
        "R": np.asarray(last.R).tolist(),
        "q_frob_err": float(np.linalg.norm(last.Q - Qt)),
        "r_frob_err": float(np.linalg.norm(last.R - Rt)),
        "mrrmse": mrrmse(last.Q, last.R, Qt, Rt),
        "status": last.status,
    }
    return summary, flags


def _run_letkf(cfg, out):
    fc, ec, mc = cfg.filter, cfg.estimator, cfg.model
    model = M.L96Model(n=mc.n, stochastic=False)
    runner = LetkfRun(Ne=fc.Ne, cycles=cfg.steps, radius=fc.radius, estimator=ec.kind, L=ec.L, tau=ec.tau,
                      q0=(ec.q0, 0.0), r0=ec.r0, r_true=mc.r_true, seed=cfg.seed)
    st, diags = runner.run(model)
    write_diagnostics(out / "metrics.csv", diags)
    rm = np.array([d.rmse for d in diags])
    summary = {
        "name": cfg.name,
        "steps": cfg.steps,
        "mrmse": float(rm.mean()),
        "q1": st.q.q1,
        "q2": st.q.q2,
        "r": st.r.r,
    }
    flags = {"regions_skipped": int(sum(len(d.regions_skipped) for d in diags))}
    return summary, flags


def sweep(cfg, out_dir=None):
    """Run every cell of the config's sweep grid into its own subdirectory."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    results = {}
    for name, c in expand_sweep(cfg):
        results[name or "run"] = run(c, out / name if name else out)
    return results


def simulate_to(cfg, out_dir=None):
    """Write the truth trajectory and observations of a config as CSV."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    model, scheme = build_system(cfg)
    traj = M.simulate(model, scheme, cfg.steps * scheme.N, seed=cfg.seed)
    with open(out / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step"] + [f"x_{i + 1}" for i in range(model.n)])
        for k, x in enumerate(traj.truth):
            wr.writerow([k, *map(_num, x)])
    with open(out / "observations.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step"] + [f"y_{i + 1}" for i in range(scheme.m)])
        for k, y in zip(traj.obs_index, traj.obs):
            wr.writerow([int(k), *map(_num, y)])
    return traj
