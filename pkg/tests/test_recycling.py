import numpy as np
import pytest

from shift_recycle import recycling
from shift_recycle.arnoldi import RecycleSpace
from shift_recycle.gmres import SolveParams, gmres_cycle
from shift_recycle.linalg import EigFailed, Operator, largest_principal_angle
from shift_recycle.problems import bidiagonal_b1, make_rhs
from shift_recycle.recycling import (augmented_G, harmonic_ritz_pairs, harmonic_ritz_update,
                                     project_initial, recycled_gmres, rgmres_cycle,
                                     transfer_recycle)

from conftest import complex_positive_real, crandn, positive_real, random_matrix
from oracles import gmres_dr


def _space(A, k, rng):
    return RecycleSpace.from_basis(A, crandn(rng, A.shape[0], k))


def test_project_initial_examples(rng):
    A = random_matrix(20, 1)
    rec = _space(A, 3, rng)
    x = crandn(rng, 20)
    r = crandn(rng, 20)
    r_perp = r - rec.C @ (rec.C.conj().T @ r)
    x0, r0 = project_initial(rec, x, r_perp)
    assert np.allclose(x0, x) and np.allclose(r0, r_perp)
    x0, r0 = project_initial(rec, x, rec.C @ crandn(rng, 3))
    assert np.linalg.norm(r0) <= 1e-14


def test_project_initial_explicit(rng):
    A = random_matrix(20, 2)
    b = crandn(rng, 20)
    rec = _space(A, 4, rng)
    x = crandn(rng, 20)
    x0, r0 = project_initial(rec, x, b - A @ x)
    assert np.linalg.norm(rec.C.conj().T @ r0) <= 1e-10 * np.linalg.norm(r0)
    assert np.linalg.norm(b - A @ x0 - r0) <= 1e-10 * np.linalg.norm(r0)


def test_cycle_without_recycle_matches_gmres(rng):
    A = random_matrix(30, 3)
    b = crandn(rng, 30)
    a = rgmres_cycle(A, None, np.zeros(30), b, 7)
    g = gmres_cycle(A, np.zeros(30), b, 7)
    assert np.allclose(a.x, g.x, atol=1e-14)


def test_cycle_recycle_holding_solution(rng):
    A = random_matrix(25, 4)
    b = crandn(rng, 25)
    rec = RecycleSpace.from_basis(A, np.linalg.solve(A, b)[:, None])
    x0, r0 = project_initial(rec, np.zeros(25), b)
    assert np.linalg.norm(r0) <= 1e-12 * np.linalg.norm(b)
    assert np.linalg.norm(A @ x0 - b) <= 1e-12 * np.linalg.norm(b)


def test_cycle_relations_and_optimality(rng):
    A = random_matrix(40, 5)
    b = crandn(rng, 40)
    rec = _space(A, 4, rng)
    x0, r0 = project_initial(rec, np.zeros(40), b)
    cyc = rgmres_cycle(A, rec, x0, b, 8, r0=r0)
    d = cyc.decomp
    W = np.hstack([rec.C, d.V])
    Vh = np.hstack([rec.U, d.Vm])
    G = augmented_G(d, 4)
    assert np.linalg.norm(A @ Vh - W @ G) <= 1e-10 * np.linalg.norm(A)
    r = b - A @ cyc.x
    assert np.linalg.norm(r - W @ cyc.z_hat) <= 1e-10 * np.linalg.norm(b)
    assert np.linalg.norm((A @ Vh).conj().T @ r) <= 1e-8 * np.linalg.norm(A) * np.linalg.norm(b)
    plain = gmres_cycle(A, np.zeros(40), b, 8)
    assert np.linalg.norm(r) <= np.linalg.norm(b - A @ plain.x)


def test_harmonic_values_on_full_space():
    A = np.diag(np.arange(1.0, 11.0))
    b = np.ones(10)
    cyc = rgmres_cycle(A, None, np.zeros(10), b, 10)
    theta, _ = harmonic_ritz_pairs(cyc.decomp, None)
    assert np.allclose(np.sort(theta.real), np.arange(1, 11), atol=1e-8)
    assert np.allclose(theta.imag, 0, atol=1e-8)


def test_harmonic_residuals_parallel_to_gmres_residual(rng):
    A = random_matrix(40, 6)
    b = crandn(rng, 40)
    cyc = rgmres_cycle(A, None, np.zeros(40), b, 12)
    theta, P = harmonic_ritz_pairs(cyc.decomp, None)
    r = b - A @ cyc.x
    Ut = cyc.decomp.Vm @ P[:, :5]
    Rm = A @ Ut - Ut * theta[:5]
    for col in Rm.T:
        assert largest_principal_angle(col, r) <= 1e-8


def test_update_invariants(rng):
    A = random_matrix(40, 7)
    b = crandn(rng, 40)
    rec = _space(A, 4, rng)
    x0, r0 = project_initial(rec, np.zeros(40), b)
    cyc = rgmres_cycle(A, rec, x0, b, 10, r0=r0)
    new = harmonic_ritz_update(cyc.decomp, rec, 6)
    assert new.k == 6
    assert new.check(A) <= 1e-10
    assert np.linalg.norm(new.C.conj().T @ new.C - np.eye(6)) <= 1e-12


def test_update_keeps_space_on_failure(rng, monkeypatch):
    A = random_matrix(30, 8)
    b = crandn(rng, 30)
    rec = _space(A, 3, rng)
    x0, r0 = project_initial(rec, np.zeros(30), b)
    cyc = rgmres_cycle(A, rec, x0, b, 6, r0=r0)

    def boom(M):
        raise EigFailed('forced')
    monkeypatch.setattr(recycling, 'eig_small', boom)
    assert harmonic_ritz_update(cyc.decomp, rec, 3) is rec


def test_transfer_costs(rng):
    A = Operator(random_matrix(20, 9))
    rec = _space(A, 3, rng)
    before = A.matvecs
    moved = transfer_recycle(A, rec, delta=0.25)
    assert A.matvecs == before
    assert moved.check(A.shifted(0.25)) <= 1e-12
    B = A.with_matrix(random_matrix(20, 10))
    before = A.matvecs
    fresh = transfer_recycle(B, rec)
    assert A.matvecs == before + 3 and fresh.check(B) <= 1e-12
    assert transfer_recycle(A, None) is None


def test_repeated_system_is_not_slower():
    A = bidiagonal_b1(400)
    b = make_rhs(400)
    p = SolveParams(m=30, k=10, tol=1e-8)
    x1, rec, log1 = recycled_gmres(A, b, None, p)
    x2, _, log2 = recycled_gmres(A, b, rec, p)
    assert log1.converged[0] and log2.converged[0]
    assert len(log2.history(0)) <= len(log1.history(0))


def test_b1_paper_setup_converges():
    A = bidiagonal_b1(1000)
    b = make_rhs(1000)
    x, rec, log = recycled_gmres(A, b, None, SolveParams(m=100, k=50, tol=1e-8))
    assert log.converged[0]
    assert np.linalg.norm(b - A @ x) <= 1e-8
    assert rec.check(A) <= 1e-10


def test_no_initial_space_is_gmres_dr():
    A = complex_positive_real(30, 11)
    b = make_rhs(30)
    m, k = 6, 4
    x, _, log = recycled_gmres(A, b, None, SolveParams(m=m, k=k, tol=1e-10, max_cycles=60))
    xo, _, hist, _ = gmres_dr(A, b, m + k, k, 1e-10, 60)
    ours = log.residuals(0)
    common = min(len(ours), len(hist)) - 1
    assert common >= 3
    # explicit and implicit residual norms differ by rounding only
    assert np.allclose(ours[:common], hist[:common], rtol=1e-6, atol=1e-12)
    assert np.linalg.norm(x - xo) <= 1e-8 * np.linalg.norm(xo)


def test_refresh_per_system_keeps_space_within_solve():
    A = bidiagonal_b1(300)
    b = make_rhs(300)
    rec = RecycleSpace.from_basis(A, np.eye(300)[:, :5])
    seen = []
    p = SolveParams(m=20, k=5, refresh='system', tol=1e-8)
    x, new, log = recycled_gmres(A, b, rec, p, callback=lambda info: seen.append(info['recycle']))
    assert all(s is rec for s in seen)
    assert new is not rec and log.converged[0]


@pytest.mark.parametrize('k', [0, 3])
def test_residual_history_monotone(k):
    A = positive_real(60, 12)
    b = make_rhs(60)
    _, _, log = recycled_gmres(A, b, None, SolveParams(m=8, k=k, tol=1e-10))
    assert np.all(np.diff(log.residuals(0)) <= 1e-14)


def test_project_initial_mostly_inside_range(rng):
    A = random_matrix(50, 13)
    rec = _space(A, 5, rng)
    r = rec.C @ crandn(rng, 5) * 1e8 + 1e-3 * crandn(rng, 50)
    _, r0 = project_initial(rec, np.zeros(50), r)
    assert np.linalg.norm(rec.C.conj().T @ r0) <= 1e-12 * np.linalg.norm(r0)
