"""Recycled GMRES (GCRO-DR style) with harmonic Ritz recycle spaces."""
import logging
from typing import NamedTuple

import numpy as np

from .arnoldi import ArnoldiDecomposition, RecycleSpace, _arnoldi, _right_solve
from .gmres import ResidualLog, _residual
from .linalg import EigFailed, RankDeficient, as_operator, eig_small, least_squares, thin_qr

__all__ = ['project_initial', 'RecycledCycle', 'rgmres_cycle', 'augmented_G',
           'harmonic_ritz_pairs', 'harmonic_ritz_update', 'recycled_gmres',
           'restart_point', 'transfer_recycle']

log = logging.getLogger(__name__)


def project_initial(recycle, x_prev, r_prev):
    """Move the residual into ``range(C)^perp`` at no operator cost.

    ``x0 = x + U C^* r`` and ``r0 = r - C C^* r``.
    """
    x_prev = np.asarray(x_prev, dtype=complex)
    r_prev = np.asarray(r_prev, dtype=complex)
    if recycle is None:
        return x_prev, r_prev
    c = recycle.C.conj().T @ r_prev
    x, r = x_prev + recycle.U @ c, r_prev - recycle.C @ c
    # second pass when most of r lay in range(C): cancellation leaves a relative leak
    if np.linalg.norm(r) < 0.5 * np.linalg.norm(r_prev):
        c = recycle.C.conj().T @ r
        x, r = x + recycle.U @ c, r - recycle.C @ c
    return x, r


def restart_point(recycle, x, r_true, cyc, refreshed, tol_abs):
    """Starting data for the next cycle.

    After a harmonic refresh the new ``U`` lies in ``range([C V_{m+1}])``
    only relative to the least-squares residual, so that vector (not the
    explicit one, which differs by rounding) starts the next Krylov space.
    It is replaced by the explicit residual once the two drift apart by
    more than a tenth of ``tol_abs``.

    Returns ``(x, r_start, r_true)`` with both residuals projected.
    """
    r_start = r_true
    if refreshed:
        r_imp = cyc.residual
        if np.linalg.norm(r_true - r_imp) <= 0.1 * tol_abs:
            r_start = r_imp
    if recycle is None:
        return x, r_start, r_true
    c = recycle.C.conj().T @ r_start
    return x + recycle.U @ c, r_start - recycle.C @ c, r_true - recycle.C @ c


def augmented_G(decomp, k):
    """``[[I_k, B], [0, H]]`` so that ``A [U V_m] = [C V_{m+1}] G``."""
    j = decomp.steps
    G = np.zeros((k + j + 1, k + j), complex)
    G[:k, :k] = np.eye(k)
    G[:k, k:] = decomp.B
    G[k:, k:] = decomp.H
    return G


class RecycledCycle(NamedTuple):
    x: np.ndarray
    y_hat: np.ndarray
    z_hat: np.ndarray
    decomp: ArnoldiDecomposition

    @property
    def residual(self):
        """Least-squares residual ``[C V_{m+1}] z_hat`` (its ``C`` part is zero)."""
        j = self.decomp.H.shape[0]
        return self.decomp.V @ self.z_hat[-j:]


def rgmres_cycle(A, recycle, x0, b, m, r0=None, tol_abs=None):
    """One cycle of Recycled GMRES from ``x0`` (whose residual is ``perp C``).

    Minimizes ``||b - A x||`` over ``x0 + range(U) + K_m(PA, r0)``.  The
    first ``k`` rows of the augmented least-squares problem are satisfied
    exactly, so ``y_hat = [-B y; y]`` with ``y`` the GMRES solution for the
    projected Hessenberg matrix and ``z_hat = [0; ||r0|| e1 - H y]``.
    """
    op = as_operator(A)
    x0 = np.asarray(x0, dtype=complex)
    if r0 is None:
        r0 = np.asarray(b, dtype=complex) - op.matvec(x0)
    C = recycle.C if recycle is not None else None
    k = recycle.k if recycle is not None else 0
    decomp = _arnoldi(op, C, r0, m, tol_abs)
    rhs = np.zeros(decomp.H.shape[0], complex)
    rhs[0] = decomp.beta0
    y = least_squares(decomp.H, rhs)
    z = rhs - decomp.H @ y
    y1 = -decomp.B @ y
    x = x0 + decomp.Vm @ y
    if k:
        x = x + recycle.U @ y1
    return RecycledCycle(x, np.concatenate([y1, y]),
                         np.concatenate([np.zeros(k, complex), z]), decomp)


def _gram_blocks(decomp, recycle):
    """``W^* V`` for ``W = [C V_{m+1}]`` and ``V = [U V_m]``."""
    j = decomp.steps
    k = recycle.k if recycle is not None else 0
    WV = np.zeros((k + j + 1, k + j), complex)
    if k:
        WV[:k, :k] = recycle.C.conj().T @ recycle.U
        WV[k:, :k] = decomp.V.conj().T @ recycle.U
    WV[k + np.arange(j), k + np.arange(j)] = 1.0
    return WV


def harmonic_ritz_pairs(decomp, recycle):
    """Harmonic Ritz values and coefficient vectors for ``range([U V_m])``.

    Solves ``G^* G p = theta G^* (W^* V) p`` in the equivalent form
    ``G^+ (W^* V) p = mu p`` with ``mu = 1 / theta``; values are returned
    as ``theta`` sorted by magnitude, smallest first.
    """
    k = recycle.k if recycle is not None else 0
    G = augmented_G(decomp, k)
    WV = _gram_blocks(decomp, recycle)
    Q, R = thin_qr(G)
    M = np.linalg.solve(R, Q.conj().T @ WV)
    mu, P = eig_small(M)
    mu, P = mu[::-1], P[:, ::-1]
    with np.errstate(divide='ignore'):
        theta = np.where(mu != 0, 1 / np.where(mu != 0, mu, 1), np.inf)
    return theta, P


def harmonic_ritz_update(decomp, recycle, k_new):
    """New recycle space from the ``k_new`` smallest harmonic Ritz vectors.

    ``A [U V_m] P = [C V_{m+1}] G P``; a QR factorization ``G P = Q R``
    gives ``C_new = [C V_{m+1}] Q`` and ``U_new = [U V_m] P R^{-1}`` with
    no operator applications.  When the selected vectors are numerically
    dependent the previous space is kept.
    """
    k = recycle.k if recycle is not None else 0
    j = decomp.steps
    k_new = min(k_new, k + j)
    if k_new < 1:
        return recycle
    try:
        theta, P = harmonic_ritz_pairs(decomp, recycle)
        P = P[:, :k_new]
        G = augmented_G(decomp, k)
        Q, R = thin_qr(G @ P)
    except (RankDeficient, EigFailed, np.linalg.LinAlgError) as exc:
        log.warning('harmonic Ritz update failed (%s); keeping previous space', exc)
        return recycle
    Vhat = decomp.Vm if not k else np.hstack([recycle.U, decomp.Vm])
    What = decomp.V if not k else np.hstack([recycle.C, decomp.V])
    # [C V_{m+1}] is orthonormal only up to rounding; restore C^*C = I
    C_new, R2 = thin_qr(What @ Q)
    U_new = _right_solve(Vhat @ _right_solve(P, R), R2)
    return RecycleSpace(U_new, C_new)


def transfer_recycle(A, recycle, delta=None):
    """Recycle space for a new operator.

    With ``delta`` the new operator is the old one plus ``delta*I`` and no
    operator application is needed; otherwise ``C = A U`` is recomputed
    (``k`` applications).
    """
    if recycle is None:
        return None
    if delta is not None:
        return recycle.shifted(delta)
    return RecycleSpace.from_basis(A, recycle.U)


def recycled_gmres(A, b, recycle_in, params, x0=None, log_=None, system=0,
                   shift=0.0, callback=None):
    """Solve ``A x = b`` by Recycled GMRES(m, k).

    ``recycle_in`` must already satisfy ``A U = C`` for this ``A``.  When it
    is ``None`` the first cycle runs ``m + k`` Arnoldi steps so that the
    search space has the same dimension as later cycles; with ``k = 0``
    throughout the method is plain GMRES(m).  ``callback(info)`` is called
    after every cycle with a dict of the cycle data.

    Returns ``(x, recycle, log)``.
    """
    op = as_operator(A)
    b = np.asarray(b, dtype=complex)
    log_ = ResidualLog() if log_ is None else log_
    bnorm = np.linalg.norm(b)
    k = params.k
    recycle = recycle_in if k else None
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    r = _residual(op, b, x)
    x, r = project_initial(recycle, x, r)
    rt = r
    its = 0
    converged = False
    last = None
    for cycle in range(params.max_cycles + 1):
        rel = np.linalg.norm(rt) / bnorm
        log_.record(system, shift, cycle, its, op.matvecs, rel)
        if rel <= params.tol:
            converged = True
            break
        if cycle == params.max_cycles:
            break
        steps = params.m if recycle is not None else params.m + k
        cyc = rgmres_cycle(op, recycle, x, b, steps, r0=r, tol_abs=params.tol * bnorm)
        its += cyc.decomp.steps
        used = recycle
        refreshed = bool(k) and params.refresh == 'cycle'
        if refreshed:
            recycle = harmonic_ritz_update(cyc.decomp, recycle, k)
        last = (cyc, used)
        x = cyc.x
        r = b - op.matvec(x)
        if callback is not None:
            callback(dict(cycle=cycle, cyc=cyc, recycle=used, new_recycle=recycle, x=x, r=r))
        x, r, rt = restart_point(recycle, x, r, cyc, refreshed, params.tol * bnorm)
    if k and params.refresh == 'system' and last is not None:
        recycle = harmonic_ritz_update(last[0].decomp, last[1], k)
    log_.finish(system, shift, converged, rel)
    return x, recycle, log_
