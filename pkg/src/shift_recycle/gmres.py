"""Restarted GMRES(m) and restarted GMRES for shifted systems.

The shifted solver keeps every shifted residual a scalar multiple of the
base residual, so one Krylov basis per cycle serves the whole family.
"""
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .arnoldi import ArnoldiDecomposition, _arnoldi, shifted_hessenberg
from .linalg import Singular, as_operator, least_squares, solve_square

__all__ = ['SolveParams', 'LogEntry', 'ResidualLog', 'GmresCycle',
           'gmres_cycle', 'restarted_gmres', 'shifted_gmres_cycle',
           'shifted_gmres']

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveParams:
    """Cycle length ``m``, relative tolerance and cycle budget.

    ``k`` is the recycle dimension used by the recycling solvers and
    ignored elsewhere.  ``refresh`` selects when the recycle space is
    rebuilt from harmonic Ritz vectors: after every cycle (``'cycle'``) or
    only once the system has been solved (``'system'``).
    """
    m: int = 30
    tol: float = 1e-8
    max_cycles: int = 500
    k: int = 0
    refresh: str = 'cycle'

    def __post_init__(self):
        if self.m < 1:
            raise ValueError('m must be >= 1')
        if not self.tol > 0:
            raise ValueError('tol must be positive')
        if self.k < 0:
            raise ValueError('k must be >= 0')
        if self.refresh not in ('cycle', 'system'):
            raise ValueError("refresh must be 'cycle' or 'system'")


class LogEntry(NamedTuple):
    system: int
    shift: complex
    cycle: int
    iterations: int
    matvecs: int
    residual: float


@dataclass
class ResidualLog:
    """Per-system convergence history.

    ``residual`` in every entry is the relative norm ``||r|| / ||b||``; for
    shifted systems it is the value the solver tracks at the end of each
    cycle.  ``converged`` and ``final`` are keyed by system id.
    """
    entries: list = field(default_factory=list)
    converged: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)
    shifts: dict = field(default_factory=dict)

    def record(self, system, shift, cycle, iterations, matvecs, residual):
        self.shifts[system] = shift
        self.entries.append(LogEntry(system, complex(shift), cycle, iterations,
                                     matvecs, float(residual)))

    def finish(self, system, shift, converged, residual):
        self.shifts[system] = shift
        self.converged[system] = bool(converged)
        self.final[system] = float(residual)

    def history(self, system):
        return [e for e in self.entries if e.system == system]

    def residuals(self, system):
        return np.array([e.residual for e in self.history(system)])

    @property
    def all_converged(self):
        return bool(self.converged) and all(self.converged.values())


class GmresCycle(NamedTuple):
    x: np.ndarray
    z: np.ndarray
    decomp: ArnoldiDecomposition
    y: np.ndarray


def _lsq(decomp):
    """Solve ``min ||beta0 e1 - H y||`` and return ``(y, z)``."""
    rhs = np.zeros(decomp.H.shape[0], complex)
    rhs[0] = decomp.beta0
    y = least_squares(decomp.H, rhs)
    return y, rhs - decomp.H @ y


def gmres_cycle(A, x0, b, m, r0=None, tol_abs=None):
    """One GMRES(m) cycle from ``x0``.

    Returns the new iterate, the least-squares residual
    ``z = ||r0|| e1 - H y`` (so that ``r_m = V_{m+1} z``), the Arnoldi data
    and the coefficient vector ``y``.
    """
    op = as_operator(A)
    x0 = np.asarray(x0, dtype=complex)
    if r0 is None:
        r0 = np.asarray(b, dtype=complex) - op.matvec(x0)
    decomp = _arnoldi(op, None, r0, m, tol_abs)
    y, z = _lsq(decomp)
    return GmresCycle(x0 + decomp.Vm @ y, z, decomp, y)


def _residual(op, b, x):
    if not np.any(x):
        return np.array(b, dtype=complex)
    return b - op.matvec(x)


def restarted_gmres(A, b, params, x0=None, log_=None, system=0, shift=0.0):
    """GMRES(m) restarted until ``||b - A x|| <= tol ||b||``.

    The residual is recomputed from scratch at the start of every cycle.
    Returns ``(x, log)``; non-convergence is reported in the log.
    """
    op = as_operator(A)
    b = np.asarray(b, dtype=complex)
    log_ = ResidualLog() if log_ is None else log_
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    its = 0
    converged = False
    r = _residual(op, b, x)
    for cycle in range(params.max_cycles + 1):
        rel = np.linalg.norm(r) / bnorm
        log_.record(system, shift, cycle, its, op.matvecs, rel)
        if rel <= params.tol:
            converged = True
            break
        if cycle == params.max_cycles:
            break
        cyc = gmres_cycle(op, x, b, params.m, r0=r, tol_abs=params.tol * bnorm)
        its += cyc.decomp.steps
        x = cyc.x
        r = b - op.matvec(x)
    log_.finish(system, shift, converged, rel)
    return x, log_


def shifted_gmres_cycle(decomp, shifts, beta_prev, y_base):
    """Collinear updates for every shift after one base GMRES cycle.

    For each shift solves ``[H^(sigma) z][y; beta] = beta_prev ||r0|| e1``.
    Returns a list with ``(y_sigma, beta)`` per shift, or ``None`` where the
    augmented matrix is singular (the residual polynomial vanishes at
    ``-sigma``).
    """
    rhs0 = np.zeros(decomp.H.shape[0], complex)
    rhs0[0] = decomp.beta0
    z = rhs0 - decomp.H @ y_base
    out = []
    for sigma, bp in zip(shifts, beta_prev):
        M = np.column_stack([shifted_hessenberg(decomp.H, sigma), z])
        try:
            sol = solve_square(M, bp * rhs0)
        except Singular:
            out.append(None)
            continue
        out.append((sol[:-1], sol[-1]))
    return out


def shifted_gmres(A, b, shifts, params, log_=None):
    """Restarted GMRES for ``(A + sigma I) x = b`` over all ``shifts``.

    All initial guesses are zero so the starting residuals coincide.  A
    shift whose collinear update does not exist is marked stalled, keeps
    its last iterate and is finished by plain restarted GMRES once the
    other systems are done; so is any shift that has not reached ``tol``
    when the base system stops.

    Returns ``(xs, log)`` with ``xs`` a dict keyed by shift (``0`` is the
    base system).
    """
    op = as_operator(A)
    b = np.asarray(b, dtype=complex)
    log_ = ResidualLog() if log_ is None else log_
    bnorm = np.linalg.norm(b)
    shifts = [s for s in shifts if s != 0]
    x = np.zeros_like(b)
    xs = [np.zeros_like(b) for _ in shifts]
    beta = np.ones(len(shifts), complex)
    stalled = [False] * len(shifts)
    r = b.copy()
    its = 0
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
        cyc = gmres_cycle(op, x, b, params.m, r0=r, tol_abs=params.tol * bnorm / worst)
        its += cyc.decomp.steps
        active = [i for i in range(len(shifts)) if not stalled[i]]
        upd = shifted_gmres_cycle(cyc.decomp, [shifts[i] for i in active],
                                  [beta[i] for i in active], cyc.y)
        for i, res in zip(active, upd):
            if res is None:
                log.info('shift %s stalled at cycle %d', shifts[i], cycle)
                stalled[i] = True
                continue
            ys, beta[i] = res
            xs[i] = xs[i] + cyc.decomp.Vm @ ys
        x = cyc.x
        r = b - op.matvec(x)

    log_.finish(0, 0.0, base_done, rel)
    out = {0.0: x}
    for i, s in enumerate(shifts):
        sop = op.shifted(s)
        ri = b - sop.matvec(xs[i])
        rel_i = np.linalg.norm(ri) / bnorm
        if rel_i > params.tol:
            xs[i], _ = restarted_gmres(sop, b, params, x0=xs[i], log_=log_,
                                       system=i + 1, shift=s)
        else:
            log_.finish(i + 1, s, True, rel_i)
        out[s] = xs[i]
    return out, log_
