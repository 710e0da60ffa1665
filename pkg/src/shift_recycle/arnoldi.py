"""Arnoldi process for the projected operator ``(I - C C^*) A``."""
import numpy as np

import scipy.linalg

from .linalg import DimensionMismatch, as_operator, largest_principal_angle, thin_qr

__all__ = ['RecycleSpace', 'ArnoldiDecomposition', 'build_deflated_arnoldi',
           'shifted_hessenberg', 'check_shift_invariance']

BREAKDOWN_TOL = 1e-14
ORTH_TOL = 1e-10
_REORTH = 1 / np.sqrt(2)


class RecycleSpace:
    """Pair ``(U, C)`` with ``A U = C`` and orthonormal ``C``.

    Build one from a plain basis with :meth:`from_basis`; the constructor
    only checks orthonormality of ``C`` since verifying ``A U = C`` costs
    ``k`` operator applications (use :meth:`check` for that).
    """

    def __init__(self, U, C):
        U = np.asarray(U, dtype=complex)
        C = np.asarray(C, dtype=complex)
        if U.ndim != 2 or U.shape != C.shape:
            raise DimensionMismatch('U and C must both be n x k, got %s and %s'
                                    % (U.shape, C.shape))
        if U.shape[1] < 1:
            raise DimensionMismatch('a recycle space needs k >= 1')
        err = np.linalg.norm(C.conj().T @ C - np.eye(C.shape[1]))
        if err > ORTH_TOL:
            raise ValueError('C is not orthonormal: ||C^*C - I||_F = %.2e' % err)
        self.U = U
        self.C = C

    @property
    def k(self):
        return self.U.shape[1]

    @property
    def n(self):
        return self.U.shape[0]

    @classmethod
    def from_basis(cls, A, U_tilde):
        """Scale ``U_tilde`` so that ``A U`` is orthonormal (``k`` matvecs)."""
        A = as_operator(A)
        U_tilde = np.asarray(U_tilde, dtype=complex)
        Q, R = thin_qr(A.matmat(U_tilde))
        return cls(_right_solve(U_tilde, R), Q)

    def shifted(self, delta):
        """Recycle space for ``A + delta*I`` without touching the operator.

        ``(A + delta I) U = C + delta U``, so one small QR of that sum gives
        the new pair.
        """
        if delta == 0:
            return self
        Q, R = thin_qr(self.C + delta * self.U)
        return RecycleSpace(_right_solve(self.U, R), Q)

    def check(self, A):
        """Return ``||A U - C||_F / max(1, ||C||_F)`` (costs ``k`` matvecs)."""
        A = as_operator(A)
        return float(np.linalg.norm(A.matmat(self.U) - self.C)
                     / max(1.0, np.linalg.norm(self.C)))


def _right_solve(X, R):
    """``X R^{-1}`` for upper-triangular ``R``."""
    return scipy.linalg.solve_triangular(R, X.T, trans='T', lower=False).T


class ArnoldiDecomposition:
    """Output of one deflated Arnoldi run.

    Attributes
    ----------
    V : (n, j+1) orthonormal basis of the projected Krylov space
    H : (j+1, j) upper Hessenberg matrix
    B : (k, j) coefficients ``C^* A V_j``
    beta0 : norm of the starting vector
    breakdown : True when an invariant subspace was found at step ``j``;
        the last column of ``V`` is then any unit vector completing the
        basis (zero if the basis already fills the space)
    """

    def __init__(self, V, H, B, beta0, breakdown=False):
        self.V = V
        self.H = H
        self.B = B
        self.beta0 = float(beta0)
        self.breakdown = bool(breakdown)

    @property
    def steps(self):
        return self.H.shape[1]

    @property
    def Vm(self):
        return self.V[:, :self.steps]


def _orthonormal_completion(basis_blocks, n):
    """A unit vector orthogonal to every column of ``basis_blocks``, or zero
    when they already span the whole space."""
    Q = np.hstack([b for b in basis_blocks if b.shape[1]])
    if Q.shape[1] >= n:
        return np.zeros(n, complex)
    for i in range(n):
        w = np.zeros(n, complex)
        w[(i * 7919) % n] = 1.0
        for _ in range(2):
            w -= Q @ (Q.conj().T @ w)
        nrm = np.linalg.norm(w)
        if nrm > 0.5:
            return w / nrm
    raise DimensionMismatch('no room for an extra basis vector')


def build_deflated_arnoldi(A, recycle, r0, m, tol_abs=None):
    """Run ``m`` steps of Arnoldi on ``(I - C C^*) A`` starting from ``r0``.

    Each new vector is orthogonalized by modified Gram-Schmidt against the
    columns of ``C`` and then against the previous basis vectors; a second
    pass is made when the norm drops by more than ``1/sqrt(2)``.

    ``tol_abs`` stops the process early once the GMRES residual estimate
    ``min ||beta0 e1 - H y||`` falls to or below it.  A breakdown (tiny
    subdiagonal entry) truncates the decomposition and sets ``breakdown``.
    """
    C = recycle.C if recycle is not None else None
    return _arnoldi(as_operator(A), C, r0, m, tol_abs)


def _arnoldi(op, C, r0, m, tol_abs=None):
    if m < 1:
        raise ValueError('m must be >= 1')
    r0 = np.asarray(r0, dtype=complex)
    n = r0.shape[0]
    if C is None:
        C = np.zeros((n, 0), complex)
    k = C.shape[1]
    beta0 = np.linalg.norm(r0)
    if beta0 == 0:
        raise ValueError('starting vector is zero')
    if k:
        leak = np.linalg.norm(C.conj().T @ r0)
        if leak > 1e-8 * beta0:
            raise ValueError('starting vector is not orthogonal to C '
                             '(||C^* r0|| / ||r0|| = %.2e)' % (leak / beta0))
    m = min(m, n - k)
    V = np.zeros((n, m + 1), complex)
    H = np.zeros((m + 1, m), complex)
    B = np.zeros((k, m), complex)
    V[:, 0] = r0 / beta0

    # Givens rotations for the running residual estimate
    cs = np.zeros(m)
    sn = np.zeros(m, complex)
    g = np.zeros(m + 1, complex)
    g[0] = beta0

    breakdown = False
    j = 0
    for j in range(m):
        w = op.matvec(V[:, j])
        before = wnorm = np.linalg.norm(w)
        for _ in range(2):
            for i in range(k):
                c = np.vdot(C[:, i], w)
                B[i, j] += c
                w -= c * C[:, i]
            for i in range(j + 1):
                h = np.vdot(V[:, i], w)
                H[i, j] += h
                w -= h * V[:, i]
            after = np.linalg.norm(w)
            if after > _REORTH * before:
                break
            before = after
        H[j + 1, j] = after
        if after <= BREAKDOWN_TOL * wnorm:
            H[j + 1, j] = 0.0
            V[:, j + 1] = _orthonormal_completion([C, V[:, :j + 1]], n)
            breakdown = True
        else:
            V[:, j + 1] = w / after

        # apply previous rotations to the new column, then form a new one
        col = H[:j + 2, j].copy()
        for i in range(j):
            t = cs[i] * col[i] + sn[i] * col[i + 1]
            col[i + 1] = -np.conj(sn[i]) * col[i] + cs[i] * col[i + 1]
            col[i] = t
        a, b = col[j], col[j + 1]
        denom = np.hypot(abs(a), abs(b))
        if denom == 0:
            cs[j], sn[j] = 1.0, 0.0
        elif a == 0:
            cs[j], sn[j] = 0.0, np.conj(b) / abs(b)
        else:
            cs[j] = abs(a) / denom
            sn[j] = (a / abs(a)) * np.conj(b) / denom
        g[j + 1] = -np.conj(sn[j]) * g[j]
        g[j] = cs[j] * g[j]

        if breakdown:
            break
        if tol_abs is not None and abs(g[j + 1]) <= tol_abs:
            break

    steps = j + 1
    return ArnoldiDecomposition(V[:, :steps + 1].copy(), H[:steps + 1, :steps].copy(),
                                B[:, :steps].copy(), beta0, breakdown)


def shifted_hessenberg(H, sigma):
    """``H + sigma [I; 0]`` for an ``(m+1) x m`` Hessenberg ``H``."""
    H = np.array(H, dtype=complex)
    m = H.shape[1]
    if H.shape[0] != m + 1:
        raise DimensionMismatch('expected an (m+1) x m matrix, got %s' % (H.shape,))
    H[np.arange(m), np.arange(m)] += sigma
    return H


def check_shift_invariance(A, C, v, m, sigma):
    """Largest principal angle between ``K_m(PA, v)`` and ``K_m(P(A + sigma I), v)``."""
    op = as_operator(A)
    n = op.n
    C = np.zeros((n, 0), complex) if C is None else np.asarray(C, dtype=complex)
    v = np.asarray(v, dtype=complex)
    d0 = _raw_krylov_basis(op, C, v, m)
    d1 = _raw_krylov_basis(op.shifted(sigma), C, v, m)
    return largest_principal_angle(d0, d1)


def _raw_krylov_basis(op, C, v, m):
    """Orthonormal basis of ``span{v, PAv, ..., (PA)^{m-1} v}``.

    Unlike :func:`_arnoldi` the start vector may have a component in
    ``range(C)``; the basis is built by explicit projection so the converse
    direction of the shift-invariance property can be observed.
    """
    n = v.shape[0]
    Q = np.zeros((n, m), complex)
    Q[:, 0] = v / np.linalg.norm(v)
    cols = 1
    for j in range(1, m):
        w = op.matvec(Q[:, j - 1])
        if C.shape[1]:
            w = w - C @ (C.conj().T @ w)
        wnorm = np.linalg.norm(w)
        for _ in range(2):
            w -= Q[:, :cols] @ (Q[:, :cols].conj().T @ w)
        nrm = np.linalg.norm(w)
        if nrm <= BREAKDOWN_TOL * wnorm:
            break
        Q[:, cols] = w / nrm
        cols += 1
    return Q[:, :cols]
