"""One deflation space per shift, all sharing the same image ``C``.

:func:`build_family` turns a basis ``U_tilde`` into ``C`` (orthonormal) and
``U^(sigma_i)`` with ``(A + sigma_i I) U^(sigma_i) = C`` for every shift
while applying the operator to only one block per step.  The remaining
products follow from

    (A + s2 I) U = (A + s1 I) U + (s2 - s1) U,

which also survives right-multiplication by ``R^{-1}``.
"""
import dataclasses
import logging

import numpy as np

from .arnoldi import RecycleSpace, _right_solve
from .gmres import ResidualLog
from .linalg import (RankDeficient, ShiftRecycleError, Singular,
                     as_operator, largest_principal_angle, solve_square, thin_qr)
from .recycling import (augmented_G, harmonic_ritz_update, project_initial,
                        recycled_gmres, rgmres_cycle)

__all__ = ['FamilyBuildFailed', 'ShiftedDeflationFamily', 'implicit_shifted_product',
           'rightmost_order', 'build_family', 'verify_family',
           'multi_deflation_shifted_rgmres']

log = logging.getLogger(__name__)


class FamilyBuildFailed(ShiftRecycleError):
    def __init__(self, step, msg=''):
        super().__init__('family construction failed at step %d %s' % (step, msg))
        self.step = step


class ShiftedDeflationFamily:
    """``C`` plus one ``U^(sigma)`` per shift."""

    def __init__(self, C, shifts, spaces):
        self.C = C
        self.shifts = tuple(shifts)
        self.spaces = list(spaces)

    @property
    def k(self):
        return self.C.shape[1]

    def _index(self, sigma):
        for i, s in enumerate(self.shifts):
            if s == sigma:
                return i
        raise KeyError('shift %r is not part of this family' % (sigma,))

    def space(self, sigma):
        return self.spaces[self._index(sigma)]

    def recycle(self, sigma):
        """Recycle space valid for ``A + sigma I``."""
        return RecycleSpace(self.space(sigma), self.C)


def implicit_shifted_product(U_hat, U_tilde, sigma1, sigma2):
    """``(A + sigma2 I) U_tilde`` from ``U_hat = (A + sigma1 I) U_tilde``.

    The same identity holds after scaling: pass ``U_hat = C`` and
    ``U_tilde R^{-1}`` to get ``(A + sigma2 I) U_tilde R^{-1}`` where
    ``(A + sigma1 I) U_tilde = C R``.
    """
    if sigma1 == sigma2:
        return U_hat
    return U_hat + (sigma2 - sigma1) * U_tilde


def rightmost_order(shifts):
    """Indices of ``shifts`` with the rightmost one (largest real part, ties
    by imaginary part) moved to the end."""
    shifts = [complex(s) for s in shifts]
    last = max(range(len(shifts)), key=lambda i: (shifts[i].real, shifts[i].imag))
    return [i for i in range(len(shifts)) if i != last] + [last]


def build_family(A, shifts, U_tilde, trace=None):
    """Deflation spaces for every shift from one basis ``U_tilde``.

    With ``s + 1`` shifts, ``s`` block products with ``U^(sigma_{s+1})``
    (the rightmost shift, kept orthonormal by QR) drive the construction;
    every other space is advanced by the shift identity.  At step ``t``
    the space of shift ``i`` gains the factor ``A + sigma_{i+t} I``
    (indices cyclic), so after ``s`` steps it holds every factor except
    its own.  A last block product and QR give ``C``.  Exactly
    ``(s + 1) k`` operator applications are made.

    If ``trace`` is a list, ``(step, R, spaces)`` is appended after every
    step with ``spaces`` in the order of ``shifts``.
    """
    op = as_operator(A)
    shifts = list(shifts)
    if len(set(complex(s) for s in shifts)) != len(shifts):
        raise ValueError('shifts must be distinct')
    U_tilde = np.asarray(U_tilde, dtype=complex)
    order = rightmost_order(shifts)
    sig = [complex(shifts[i]) for i in order]
    s = len(sig) - 1
    U = [U_tilde.copy() for _ in range(s + 1)]

    for t in range(1, s + 1):
        try:
            Q, R = thin_qr(op.shifted(sig[t - 1]).matmat(U[s]))
        except RankDeficient as exc:
            raise FamilyBuildFailed(t, str(exc)) from exc
        new = [None] * (s + 1)
        new[s] = Q
        prev = Q
        for i in range(s):
            target = sig[(i + t) % (s + 1)]
            new[i] = implicit_shifted_product(prev, _right_solve(U[i], R), sig[i], target)
            prev = new[i]
        U = new
        if trace is not None:
            trace.append((t, R, _unpermute(U, order)))

    try:
        C, R = thin_qr(op.shifted(sig[s]).matmat(U[s]))
    except RankDeficient as exc:
        raise FamilyBuildFailed(s + 1, str(exc)) from exc
    spaces = _unpermute([_right_solve(Ui, R) for Ui in U], order)
    if trace is not None:
        trace.append((s + 1, R, spaces))
    return ShiftedDeflationFamily(C, shifts, spaces)


def _unpermute(items, order):
    out = [None] * len(order)
    for pos, i in enumerate(order):
        out[i] = items[pos]
    return out


def verify_family(A, family):
    """Largest principal angle between ``range(C)`` and
    ``range((A + sigma I) U^(sigma))`` for each shift."""
    op = as_operator(A)
    return [largest_principal_angle(family.C, op.shifted(s).matmat(U))
            for s, U in zip(family.shifts, family.spaces)]


def multi_deflation_shifted_rgmres(A, b, shifts, family, params, log_=None,
                                   callback=None):
    """Shifted Recycled GMRES with one deflation space per shift.

    The base system is solved by Recycled GMRES with the family's ``U^(0)``
    and ``C`` kept fixed.  Each shifted iterate is drawn from
    ``U^(sigma) + K_m(PA, r0)``; since ``(A + sigma I) [U^(sigma) V_m] =
    [C V_{m+1}] [[I, B], [0, H^(sigma)]]`` holds exactly, residual
    collinearity is enforced by a square augmented solve per shift.
    Stalled or unconverged shifts are finished by Recycled GMRES with
    their own deflation space.

    Returns ``(xs, recycle, log)``; ``recycle`` is the harmonic Ritz space
    of the last base cycle, suitable as ``U_tilde`` for the next family.
    """
    op = as_operator(A)
    b = np.asarray(b, dtype=complex)
    log_ = ResidualLog() if log_ is None else log_
    bnorm = np.linalg.norm(b)
    shifts = [s for s in shifts if s != 0]
    base = family.recycle(0)
    k = base.k
    rec = {s: family.recycle(s) for s in shifts}

    x, r = project_initial(base, np.zeros_like(b), b)
    xs = [rec[s].U @ (family.C.conj().T @ b) for s in shifts]
    beta = np.ones(len(shifts), complex)
    stalled = [False] * len(shifts)
    its = 0
    last = None
    base_done = False
    for cycle in range(params.max_cycles + 1):
        rnorm = np.linalg.norm(r)
        rel = rnorm / bnorm
        log_.record(0, 0.0, cycle, its, op.matvecs, rel)
        rels = np.abs(beta) * rel
        for i, s in enumerate(shifts):
            if not stalled[i]:
                log_.record(i + 1, s, cycle, its, op.matvecs, rels[i])
        base_done = rel <= params.tol
        pending = [i for i in range(len(shifts)) if not stalled[i] and rels[i] > params.tol]
        if (base_done and not pending) or cycle == params.max_cycles or rnorm == 0:
            break
        worst = max([1.0] + [abs(beta[i]) for i in pending])
        cyc = rgmres_cycle(op, base, x, b, params.m, r0=r, tol_abs=params.tol * bnorm / worst)
        its += cyc.decomp.steps
        G = augmented_G(cyc.decomp, k)
        j = cyc.decomp.steps
        rhs0 = np.zeros(k + j + 1, complex)
        rhs0[k] = cyc.decomp.beta0
        for i, s in enumerate(shifts):
            if stalled[i]:
                continue
            Gs = G.copy()
            Gs[k + np.arange(j), k + np.arange(j)] += s
            try:
                sol = solve_square(np.column_stack([Gs, cyc.z_hat]), beta[i] * rhs0)
            except Singular:
                log.info('shift %s stalled at cycle %d', s, cycle)
                stalled[i] = True
                continue
            y, beta[i] = sol[:-1], sol[-1]
            xs[i] = xs[i] + rec[s].U @ y[:k] + cyc.decomp.Vm @ y[k:]
        last = cyc
        x = cyc.x
        r = b - op.matvec(x)
        if callback is not None:
            callback(dict(cycle=cycle, x=x, r=r, xs=dict(zip(shifts, xs)),
                          beta=dict(zip(shifts, beta))))
        x, r = project_initial(base, x, r)

    log_.finish(0, 0.0, base_done, rel)
    out = {0.0: x}
    fallback = dataclasses.replace(params, k=k)
    for i, s in enumerate(shifts):
        sop = op.shifted(s)
        ri = b - sop.matvec(xs[i])
        rel_i = np.linalg.norm(ri) / bnorm
        if rel_i > params.tol:
            xs[i], _, _ = recycled_gmres(sop, b, rec[s], fallback, x0=xs[i], log_=log_,
                                         system=i + 1, shift=s)
        else:
            log_.finish(i + 1, s, True, rel_i)
        out[s] = xs[i]
    recycle = harmonic_ritz_update(last.decomp, base, k) if last is not None else base
    return out, recycle, log_
