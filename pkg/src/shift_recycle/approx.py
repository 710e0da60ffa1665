"""Shifted Recycled GMRES with a single recycle space.

Without a deflation space per shift an exactly collinear shifted residual
generally does not exist.  Dropping the term ``sigma E F y_{1:k}`` gives a
square augmented system whose solution still improves every shifted
approximation.  Each shifted residual is tracked as

    r^(sigma) = beta * r + w

with ``r`` the current base residual and ``w`` the accumulated defect, so
its norm is available every cycle without touching the operator.  Once
the base system converges the remaining systems are solved recursively,
one new base at a time.
"""
import dataclasses
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .arnoldi import RecycleSpace
from .gmres import ResidualLog, _residual
from .linalg import RankDeficient, Singular, as_operator, solve_square
from .recycling import (augmented_G, harmonic_ritz_update, project_initial,
                        recycled_gmres, restart_point, rgmres_cycle)

__all__ = ['ShiftState', 'UDecomposition', 'decompose_U', 'perturbed_projection',
           'build_G_tilde', 'approx_collinear_solve', 'update_shift_state',
           'residual_bound', 'solve_family_recursive']

log = logging.getLogger(__name__)


@dataclass
class ShiftState:
    """One shifted system while another one drives the Krylov space.

    ``sigma`` is relative to the current base operator; ``system`` and
    ``label`` identify the system in the original family.
    """
    sigma: complex
    x: np.ndarray
    w: np.ndarray
    beta: complex = 1.0
    active: bool = True
    last_resid_norm: float = np.inf
    system: int = 0
    label: complex = 0.0

    def residual(self, r_base):
        return self.beta * r_base + self.w


class UDecomposition(NamedTuple):
    """``U = C Y + V_{m+1} Z + EF`` with ``EF`` orthogonal to ``[C V_{m+1}]``."""
    Y: np.ndarray
    Z: np.ndarray
    EF: np.ndarray

    @property
    def k(self):
        return self.Y.shape[0]


def decompose_U(recycle, decomp):
    V = decomp.V
    if recycle is None:
        n = V.shape[0]
        return UDecomposition(np.zeros((0, 0), complex), np.zeros((V.shape[1], 0), complex),
                              np.zeros((n, 0), complex))
    U, C = recycle.U, recycle.C
    Y = C.conj().T @ U
    Z = V.conj().T @ U
    return UDecomposition(Y, Z, U - C @ Y - V @ Z)


def perturbed_projection(recycle, state, r_base):
    """Apply ``x <- x + U C^* r^(sigma)`` and carry the defect along.

    ``r_base`` must already be orthogonal to ``range(C)``.  The new
    residual is the orthogonal projection of the old one minus
    ``sigma U C^* r^(sigma)``, hence ``w <- (I - C C^*) w - sigma U C^* r^(sigma)``.
    """
    if recycle is None:
        return state
    c = recycle.C.conj().T @ state.residual(r_base)
    w = state.w - recycle.C @ (recycle.C.conj().T @ state.w) - state.sigma * (recycle.U @ c)
    return dataclasses.replace(state, x=state.x + recycle.U @ c, w=w)


def build_G_tilde(decomp, udec, sigma):
    """``[[I + sigma Y, B], [sigma Z, H + sigma [I; 0]]]``.

    ``(A + sigma I) [U V_m] = [C V_{m+1}] G_tilde + sigma [EF 0]``.
    """
    k = udec.k
    j = decomp.steps
    G = augmented_G(decomp, k)
    if k:
        G[:k, :k] += sigma * udec.Y
        G[k:, :k] = sigma * udec.Z
    G[k + np.arange(j), k + np.arange(j)] += sigma
    return G


def approx_collinear_solve(G_tilde, z_hat, beta0, r0_norm, k):
    """Solve ``[G_tilde z_hat][y; beta] = beta0 ||r0|| e_{k+1}``.

    Raises :class:`Singular` when the augmented matrix is singular.
    """
    M = np.column_stack([G_tilde, z_hat])
    rhs = np.zeros(M.shape[0], complex)
    rhs[k] = beta0 * r0_norm
    sol = solve_square(M, rhs)
    return sol[:-1], sol[-1]


def update_shift_state(state, recycle, decomp, udec, y_tilde, beta_tilde, base_resid):
    """Advance one shifted system after a base cycle.

    The new residual is ``beta_tilde r_m - sigma EF y_{1:k} + w``.  When
    its norm is not below the previous one the update is discarded and the
    state is deactivated.
    """
    k = udec.k
    w = state.w
    if k:
        w = w - state.sigma * (udec.EF @ y_tilde[:k])
    nrm = float(np.linalg.norm(beta_tilde * base_resid + w))
    if nrm >= state.last_resid_norm:
        return dataclasses.replace(state, active=False)
    x = state.x + decomp.Vm @ y_tilde[k:]
    if k:
        x = x + recycle.U @ y_tilde[:k]
    return dataclasses.replace(state, x=x, w=w, beta=beta_tilde, last_resid_norm=nrm)


def residual_bound(state, y_tilde, udec, base_resid_norm, beta_tilde):
    """``|beta| ||r_m|| + |sigma| ||EF|| ||y_{1:k}|| + ||w||`` with the
    defect ``w`` taken at entry to the cycle."""
    bound = abs(beta_tilde) * base_resid_norm + float(np.linalg.norm(state.w))
    if udec.k and state.sigma != 0:
        bound += (abs(state.sigma) * np.linalg.norm(udec.EF, 2)
                  * np.linalg.norm(y_tilde[:udec.k]))
    return float(bound)


def _init_states(op, b, r, recycle, states):
    """Express every shifted residual relative to the base residual ``r``."""
    rr = np.vdot(r, r).real
    out = []
    for st in states:
        rs = _residual(op.shifted(st.sigma), b, st.x)
        beta = np.vdot(r, rs) / rr if rr > 0 else 0.0
        st = dataclasses.replace(st, beta=beta, w=rs - beta * r, active=True)
        # may raise the residual when |sigma| ||U|| is large; cheaper overall than skipping it
        st = perturbed_projection(recycle, st, r)
        out.append(dataclasses.replace(st, last_resid_norm=float(np.linalg.norm(st.residual(r)))))
    return out


def _solve_level(op, b, recycle, params, states, x0, base_id, base_label, log_, callback,
                 level):
    bnorm = np.linalg.norm(b)
    k = params.k
    recycle = recycle if k else None
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    x, r = project_initial(recycle, x, _residual(op, b, x))
    rt = r
    states = _init_states(op, b, r, recycle, states)
    its = 0
    converged = False
    last = None
    for cycle in range(params.max_cycles + 1):
        rel = np.linalg.norm(rt) / bnorm
        log_.record(base_id, base_label, cycle, its, op.matvecs, rel)
        for st in states:
            log_.record(st.system, st.label, cycle, its, op.matvecs,
                        np.linalg.norm(st.residual(r)) / bnorm)
        if rel <= params.tol:
            converged = True
            break
        if cycle == params.max_cycles:
            break
        steps = params.m if recycle is not None else params.m + k
        cyc = rgmres_cycle(op, recycle, x, b, steps, r0=r, tol_abs=params.tol * bnorm)
        its += cyc.decomp.steps
        used = recycle
        x = cyc.x
        r_true = b - op.matvec(x)
        # shifted residuals are tracked against the least-squares residual
        r_m = cyc.residual
        udec = decompose_U(used, cyc.decomp)
        info = dict(level=level, cycle=cycle, base=base_label, recycle=used, udec=udec, x=x, r=r_m,
                    previous=list(states), y={}, beta={}, bound={})
        new_states = []
        for st in states:
            if st.active:
                G = build_G_tilde(cyc.decomp, udec, st.sigma)
                try:
                    y, bt = approx_collinear_solve(G, cyc.z_hat, st.beta, cyc.decomp.beta0,
                                                   udec.k)
                except Singular:
                    log.info('shift %s skipped at cycle %d', st.label, cycle)
                else:
                    info['y'][st.system] = y
                    info['beta'][st.system] = bt
                    info['bound'][st.system] = residual_bound(
                        st, y, udec, np.linalg.norm(r_m), bt)
                    upd = update_shift_state(st, used, cyc.decomp, udec, y, bt, r_m)
                    if upd.active:
                        new_states.append(upd)
                        continue
                    st = upd
            # not updated this cycle: re-express relative to r_m
            if st.active:
                st = dataclasses.replace(st, w=st.w + st.beta * (r - r_m))
            else:
                st = dataclasses.replace(st, w=st.residual(r), beta=0.0)
            new_states.append(st)
        states = new_states
        refreshed = bool(k) and params.refresh == 'cycle'
        if refreshed:
            recycle = harmonic_ritz_update(cyc.decomp, used, k)
        last = (cyc, used)
        info['states'] = states
        if callback is not None:
            callback(info)
        x, r_new, rt = restart_point(recycle, x, r_true, cyc, refreshed, params.tol * bnorm)
        states = [dataclasses.replace(st, w=st.w + st.beta * (r_m - r_new)) for st in states]
        r = r_new
    if k and params.refresh == 'system' and last is not None:
        recycle = harmonic_ritz_update(last[0].decomp, last[1], k)
    log_.finish(base_id, base_label, converged, rel)
    return x, recycle, states


def _shift_recycle(op, recycle, delta):
    """Recycle space for ``op + delta I``; rebuilt explicitly if the cheap
    transfer is numerically rank deficient."""
    if recycle is None:
        return None
    try:
        return recycle.shifted(delta)
    except RankDeficient:
        try:
            return RecycleSpace.from_basis(op.shifted(delta), recycle.U)
        except RankDeficient:
            return None


def solve_family_recursive(A, b, shifts, recycle_in, params, log_=None, callback=None):
    """Solve ``(A + sigma I) x = b`` for ``sigma = 0`` and every shift.

    The base system is solved by Recycled GMRES; after every cycle each
    shifted approximation receives the approximate collinearity update
    until its residual stops decreasing.  Shifted systems still above
    ``tol`` when the base converges are solved by the same method with
    the smallest remaining shift (in modulus) as the new base, the recycle
    space moved over for free; the last remaining system is solved by
    Recycled GMRES alone.  Systems are numbered ``1..L`` in the order of
    ``shifts``; ``0`` is the base.

    With no recycle space and per-cycle harmonic refresh the first cycle
    has ``m + k`` steps and the scheme becomes exactly collinear, which
    is shifted GMRES-DR.

    Returns ``(xs, recycle, log)`` with ``xs`` keyed by shift.
    """
    op = as_operator(A)
    b = np.asarray(b, dtype=complex)
    log_ = ResidualLog() if log_ is None else log_
    bnorm = np.linalg.norm(b)
    labels = [s for s in shifts if s != 0]
    if len(set(complex(s) for s in labels)) != len(labels):
        raise ValueError('shifts must be distinct')
    order = sorted(range(len(labels)), key=lambda i: abs(labels[i]))
    zero = np.zeros_like(b)
    states = [ShiftState(sigma=complex(labels[i]), x=zero, w=zero, system=i + 1,
                         label=labels[i]) for i in order]
    recycle = recycle_in if params.k else None
    xs = {}
    base_id, base_label, x0, offset = 0, 0.0, None, 0.0
    level = 0
    while True:
        x, recycle, states = _solve_level(op, b, recycle, params, states, x0, base_id,
                                          base_label, log_, callback, level)
        xs[base_label] = x
        pending = []
        for st in states:
            rel = np.linalg.norm(b - op.shifted(st.sigma).matvec(st.x)) / bnorm
            if rel <= params.tol:
                xs[st.label] = st.x
                log_.finish(st.system, st.label, True, rel)
            else:
                pending.append(st)
        if not pending:
            break
        nxt, rest = pending[0], pending[1:]
        delta = nxt.sigma
        recycle = _shift_recycle(op, recycle, delta)
        op = op.shifted(delta)
        offset += delta
        if not rest:
            xs[nxt.label], recycle, _ = recycled_gmres(
                op, b, recycle, params, x0=nxt.x, log_=log_, system=nxt.system,
                shift=nxt.label)
            break
        states = [dataclasses.replace(st, sigma=st.sigma - delta) for st in rest]
        base_id, base_label, x0 = nxt.system, nxt.label, nxt.x
        level += 1
    # recycle space for the original operator
    if recycle is not None and offset != 0:
        recycle = _shift_recycle(op, recycle, -offset)
    return {s: xs[s] for s in [0.0] + labels}, recycle, log_
