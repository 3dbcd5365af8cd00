import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from adaptcov import models as M
from adaptcov.covest import (
    BerrySauer,
    CovParameterization,
    ModifiedBelanger,
    OriginalBelanger,
    block_bases,
    diagonal_bases,
    relax,
    stencil_bases,
    symmetric_bases,
)
from adaptcov.covest.bs import r_draw, solve_q
from adaptcov.covest.lagged import PhiState, build_h_operators, cycle_noise, propagate_phi
from adaptcov.covest.mbl import MblState, mbl_update, solve_normal, stacked_system
from adaptcov.covest.obl import secondary_update
from adaptcov.errors import InvalidInput, Underdetermined
from adaptcov.harness.runners import assimilate
from adaptcov.kalman import KalmanState, kf_analysis, kf_forecast
from adaptcov.records import StepRecord


def scalar_param(q=1.0, r=1.0):
    return CovParameterization([[[1.0]]], [[[1.0]]], alpha=[q], beta=[r])


def phi_state(L, n, param, Gamma=None):
    return PhiState.empty(L, n, np.eye(n) if Gamma is None else Gamma, param)


# parameterization ---------------------------------------------------------

def test_dependent_bases_rejected():
    with pytest.raises(InvalidInput, match="dependent"):
        CovParameterization([np.eye(2), 2 * np.eye(2)], [np.eye(1)])


def test_asymmetric_bases_rejected():
    with pytest.raises(InvalidInput, match="symmetric"):
        CovParameterization([[[0.0, 1.0], [0.0, 0.0]]], [np.eye(1)])


def test_basis_counts():
    assert len(symmetric_bases(20)) == 210
    t = M.random_covariance(40, np.random.default_rng(0))
    b = block_bases(t, 4)
    assert len(b) == 55
    assert_allclose(b.sum(axis=0), t, rtol=1e-14)


def test_projection_recovers_coefficients(rng):
    p = CovParameterization(diagonal_bases(3), symmetric_bases(2))
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    assert_allclose(p.project_Q(p.reconstruct_Q(a)), a, atol=1e-13)
    assert_allclose(p.project_R(p.reconstruct_R(b)), b, atol=1e-13)


def test_reconstruction_linear(rng):
    p = CovParameterization(stencil_bases(5, wrap=True), [np.eye(2)])
    a, a2 = rng.standard_normal(2), rng.standard_normal(2)
    assert_array_equal(p.reconstruct_Q(a + a2), p.reconstruct_Q(a) + p.reconstruct_Q(a2))


# propagate_phi / build_h_operators ----------------------------------------

def test_identity_propagation_shifts_lags(rng):
    p = CovParameterization([np.eye(2)], [np.eye(1)])
    st = phi_state(2, 2, p)
    st.phiQ = rng.standard_normal(st.phiQ.shape)
    old = st.phiQ.copy()
    propagate_phi(st, np.eye(2), np.zeros((2, 1)), [np.eye(2)], p)
    assert_array_equal(st.phiQ[1:], old[:-1])


def test_memoryless_lag0_is_fresh_noise(rng):
    G = rng.standard_normal((3, 2))
    Qs = [np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])]
    p = CovParameterization(Qs, [np.eye(1)])
    st = phi_state(1, 3, p, Gamma=G)
    st.phiQ = rng.standard_normal(st.phiQ.shape)
    propagate_phi(st, np.zeros((3, 3)), np.zeros((3, 1)), [np.eye(3)], p)
    for s in range(2):
        assert_allclose(st.phiQ[0, s], G @ Qs[s] @ G.T, atol=1e-14)


def test_lag_shift_is_left_multiplication(rng):
    p = CovParameterization([np.eye(3)], [np.eye(2)])
    st = phi_state(3, 3, p)
    st.phiQ = rng.standard_normal(st.phiQ.shape)
    st.phiR = rng.standard_normal(st.phiR.shape)
    q, r = st.phiQ.copy(), st.phiR.copy()
    U, S = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
    propagate_phi(st, U, S, [rng.standard_normal((3, 3))], p)
    for l in range(1, 4):
        assert_allclose(st.phiQ[l], U @ q[l - 1], rtol=1e-13)
        assert_allclose(st.phiR[l], U @ r[l - 1], rtol=1e-13)


def test_phi_matches_geometric_sum():
    # scalar: Phi^Q_k = sum_{i<k} u^(2i), Phi^R_k = s^2 Phi^Q_k, lag 1 = u Phi_{k-1}
    u, s = 0.6, 0.3
    p = scalar_param()
    st = phi_state(1, 1, p)
    for k in range(1, 6):
        propagate_phi(st, np.array([[u]]), np.array([[s]]), [np.eye(1)], p)
        geo = sum(u ** (2 * i) for i in range(k))
        prev = sum(u ** (2 * i) for i in range(k - 1))
        assert st.phiQ[0, 0, 0, 0] == pytest.approx(geo, rel=1e-14)
        assert st.phiR[0, 0, 0, 0] == pytest.approx(s**2 * geo, rel=1e-14)
        assert st.phiQ[1, 0, 0, 0] == pytest.approx(u * prev, rel=1e-14)


def test_cycle_noise_sums_carried_contributions(rng):
    F1, F2, F3 = rng.standard_normal((3, 2, 2))
    G = np.eye(2)[None]
    expect = F3 @ F2 @ G[0] @ F2.T @ F3.T + F3 @ G[0] @ F3.T + G[0]
    assert_allclose(cycle_noise([F1, F2, F3], G)[0], expect, rtol=1e-13)


def _h_state(L, H, S, U, param):
    st = phi_state(L, H.shape[1], param)
    for _ in range(L + 1):
        st.H_buffer.appendleft(H)
    for _ in range(L):
        st.S_buffer.appendleft(S)
        st.U_buffer.appendleft(U)
    return st


def test_h_r_lag0_is_basis_without_memory():
    p = CovParameterization([np.eye(2)], symmetric_bases(2))
    st = _h_state(0, np.zeros((2, 2)), None, None, p)
    _, Hr = build_h_operators(st, p)
    assert_array_equal(Hr[0], p.R_bases)


def test_h_r_lag1_direct_term():
    p = CovParameterization([np.eye(2)], symmetric_bases(2))
    st = _h_state(1, np.eye(2), np.eye(2), np.eye(2), p)
    _, Hr = build_h_operators(st, p)
    assert_array_equal(Hr[1], -p.R_bases)


# relax ----------------------------------------------------------------------

@pytest.mark.parametrize("old,new,tau,expect", [(3.0, 7.0, 1.0, 7.0), (2.5, 2.5, 40.0, 2.5), (0.0, 1.0, 2.0, 0.5)])
def test_relax_examples(old, new, tau, expect):
    assert relax(old, new, tau) == expect


def test_relax_rejects_small_tau():
    with pytest.raises(InvalidInput):
        relax(0.0, 1.0, 0.5)


# mbl ------------------------------------------------------------------------

def test_normal_equations_match_lstsq(rng):
    Np, m, L = 3, 2, 2
    Hq = rng.standard_normal((L + 1, 2, m, m))
    Hr = rng.standard_normal((L + 1, 1, m, m))
    Y = rng.standard_normal((L + 1, m, m))
    A, y = stacked_system(Hq, Hr, Y)
    assert A.shape == ((L + 1) * m * m, Np)
    coef, truncated = solve_normal(A, y)
    assert not truncated
    assert_allclose(coef, np.linalg.lstsq(A, y, rcond=None)[0], atol=1e-8)


def test_zero_system_gives_zero():
    coef, truncated = solve_normal(np.zeros((8, 3)), np.zeros(8))
    assert_array_equal(coef, np.zeros(3))
    assert truncated


def test_rank_deficient_is_minimum_norm():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    coef, truncated = solve_normal(A, np.array([2.0, 4.0]))
    assert truncated
    assert_allclose(coef, [1.0, 1.0], atol=1e-12)


def test_mbl_tau1_recovers_exact_coefficients(rng):
    m, L = 2, 1
    p = CovParameterization(symmetric_bases(2)[:2], [np.eye(2)])
    truth = np.array([0.7, -0.2, 1.3])
    st = MblState.empty(L, 2, np.eye(2), p, tau=1.0)
    for _ in range(3):
        st.innovation_buffer.appendleft(rng.standard_normal(m))
    while len(st.innovation_buffer) > L + 1:
        st.innovation_buffer.pop()
    for _ in range(2):
        v = rng.standard_normal(m)
        st.innovation_buffer.appendleft(v)
        st.innovation_buffer.pop()
        Y = np.stack([np.outer(v, st.innovation_buffer[l]) for l in range(L + 1)])
        Hq = rng.standard_normal((L + 1, 2, m, m))
        Hr = ((Y - np.einsum("s,lsab->lab", truth[:2], Hq)) / truth[2])[:, None]
        mbl_update(st, p, Hq, Hr)
    assert_allclose(np.concatenate([p.alpha, p.beta]), truth, rtol=1e-10)


def _scalar_system(q=1.0, r=0.5, f=0.9):
    model = M.LinearModel(F=[[f]], Gamma=[[1.0]], Q_true=[[q]])
    return model, M.ObservationScheme(H=[[1.0]], R_true=[[r]])


def test_mbl_waits_for_lags():
    model, scheme = _scalar_system()
    p = scalar_param(0.3, 0.3)
    est = ModifiedBelanger(p, model.Gamma, 1, L=2, tau=1.0)
    traj = M.simulate(model, scheme, 3, seed=0)
    kf = KalmanState(np.zeros(1), np.eye(1))
    F_prev = None
    for k, y in enumerate(traj.obs):
        kf = kf_analysis(kf, y, scheme.H, scheme.R_true)
        est.update(kf.record(scheme.H, F_prev))
        if k < 2:
            assert p.alpha[0] == 0.3 and est.state.n_sums == 0
        kf = kf_forecast(kf, model, model.Q, 1)
        F_prev = [model.F]
    assert est.state.n_sums == 1


# bs -------------------------------------------------------------------------

def test_r_draw_scalar():
    rec = StepRecord(v=np.array([np.sqrt(2.0)]), H=np.eye(1), K=None, B_f=np.eye(1), B_a=None)
    assert r_draw(rec)[0, 0] == pytest.approx(1.0)


def test_r_draw_without_prior_spread(rng):
    v = rng.standard_normal(3)
    rec = StepRecord(v=v, H=np.eye(3), K=None, B_f=np.zeros((3, 3)), B_a=None)
    assert_array_equal(r_draw(rec), np.outer(v, v))


def test_solve_q_underdetermined():
    design = np.zeros((2, 1, 1))
    design[:, 0, 0] = [1.0, 2.0]
    with pytest.raises(Underdetermined) as exc:
        solve_q(design, np.ones((1, 1)))
    assert exc.value.rank == 1 and exc.value.needed == 2


def test_bs_partial_observation_is_underdetermined():
    model, scheme = M.linear2d("partial")
    p = CovParameterization(diagonal_bases(2), diagonal_bases(1)).set_from(model.Q, scheme.R_true)
    est = BerrySauer(p, model.Gamma, tau=100.0)
    traj = M.simulate(model, scheme, 6, seed=0)
    statuses = [r.status for r in assimilate(model, scheme, traj, est)]
    assert statuses[:2] == ["ok", "ok"]
    assert all(s.startswith("underdetermined(rank=1,needed=2)") for s in statuses[2:])


# obl ------------------------------------------------------------------------

def test_secondary_filter_matches_batch_least_squares(rng):
    theta0, P0 = np.array([0.4]), np.array([[2.0]])
    theta, P = theta0, P0
    As, zs = [], []
    for _ in range(20):
        A = rng.standard_normal((1, 2, 2))
        z = rng.standard_normal((2, 2))
        theta, P = secondary_update(theta, P, A, z, A)
        As.append(A[0].ravel())
        zs.append(z.ravel())
    a, z = np.concatenate(As), np.concatenate(zs)
    info = 1 / P0[0, 0] + a @ a
    expect = (theta0[0] / P0[0, 0] + a @ z) / info
    assert theta[0] == pytest.approx(expect, rel=1e-8)
    assert P[0, 0] == pytest.approx(1 / info, rel=1e-8)


def test_hard_prior_freezes_theta(rng):
    theta = np.array([0.3, 1.2])
    A = rng.standard_normal((2, 3, 3))
    out, P = secondary_update(theta, np.zeros((2, 2)), A, rng.standard_normal((3, 3)), A)
    assert_array_equal(out, theta)
    assert_array_equal(P, np.zeros((2, 2)))


def test_obl_rejects_batched_coefficients():
    p = CovParameterization([np.eye(1)], [np.eye(1)], alpha=np.ones((2, 1)), beta=np.ones((2, 1)))
    with pytest.raises(InvalidInput):
        OriginalBelanger(p, np.eye(1), 1)


def test_obl_and_mbl_agree_on_scalar_system():
    q, r = 1.0, 0.5
    model, scheme = _scalar_system(q, r)
    traj = M.simulate(model, scheme, 50000, seed=3)
    mbl = ModifiedBelanger(scalar_param(0.5, 1.0), model.Gamma, 1, L=1, tau=1000.0)
    obl = OriginalBelanger(scalar_param(0.5, 1.0), model.Gamma, 1, L=1)
    kf = KalmanState(np.zeros(1), np.eye(1))
    F_prev = None
    for y in traj.obs:
        kf = kf_analysis(kf, y, scheme.H, scheme.R_true)
        rec = kf.record(scheme.H, F_prev)
        mbl.update(rec)
        obl.update(rec)
        kf = kf_forecast(kf, model, model.Q, 1)
        F_prev = [model.F]
    tm = np.concatenate([mbl.param.alpha, mbl.param.beta])
    to = np.concatenate([obl.param.alpha, obl.param.beta])
    assert np.all(np.abs(tm - to) < 0.1 * np.array([q, r]))
