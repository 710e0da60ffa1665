"""Dense and sparse kernels shared by every solver in the package.

All arrays are promoted to ``complex128`` on entry.  Sparse operators are
``scipy.sparse`` CSR matrices wrapped in :class:`Operator`, which counts
every operator application.
"""
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

__all__ = [
    'ShiftRecycleError', 'RankDeficient', 'Singular', 'EigFailed',
    'DimensionMismatch', 'QRFactors', 'Operator', 'as_operator', 'to_csr',
    'matvec', 'thin_qr', 'solve_upper_triangular', 'solve_square',
    'least_squares', 'largest_principal_angle', 'eig_small',
]

RANK_TOL = 1e-14
EIG_MAX_ORDER = 512


class ShiftRecycleError(Exception):
    """Base class for errors raised by this package."""


class RankDeficient(ShiftRecycleError):
    pass


class Singular(ShiftRecycleError):
    pass


class EigFailed(ShiftRecycleError):
    pass


class DimensionMismatch(ShiftRecycleError, ValueError):
    pass


def _cplx(a):
    return np.asarray(a, dtype=np.complex128)


def to_csr(A):
    """Return ``A`` as a complex CSR matrix with sorted, summed indices."""
    if isinstance(A, Operator):
        A = A.matrix
    A = scipy.sparse.csr_matrix(A, dtype=np.complex128)
    A.sum_duplicates()
    A.sort_indices()
    return A


class Operator:
    """Counted application of ``A + shift*I``.

    Shifted views made with :meth:`shifted` share the counter of the
    operator they came from, so one counter sees every application of the
    underlying sparse matrix.  A block product with ``k`` columns counts
    ``k`` applications.
    """

    def __init__(self, matrix, shift=0.0, counter=None):
        self.matrix = to_csr(matrix)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionMismatch('operator must be square, got %s'
                                    % (self.matrix.shape,))
        self.shift = complex(shift)
        self._counter = counter if counter is not None else [0]

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def matvecs(self):
        return self._counter[0]

    def reset(self):
        self._counter[0] = 0

    def shifted(self, sigma):
        return Operator(self.matrix, self.shift + sigma, self._counter)

    def with_matrix(self, matrix):
        """Operator for a different matrix that keeps this counter."""
        return Operator(matrix, self.shift, self._counter)

    def matvec(self, v):
        v = _cplx(v)
        if v.shape != (self.n,):
            raise DimensionMismatch('vector of shape %s for operator of order %d'
                                    % (v.shape, self.n))
        self._counter[0] += 1
        out = self.matrix @ v
        if self.shift != 0:
            out += self.shift * v
        return out

    def matmat(self, V):
        V = _cplx(V)
        if V.ndim != 2 or V.shape[0] != self.n:
            raise DimensionMismatch('block of shape %s for operator of order %d'
                                    % (V.shape, self.n))
        self._counter[0] += V.shape[1]
        out = np.asarray(self.matrix @ V)
        if self.shift != 0:
            out += self.shift * V
        return out

    def __matmul__(self, other):
        other = np.asarray(other)
        return self.matvec(other) if other.ndim == 1 else self.matmat(other)

    def toarray(self):
        out = self.matrix.toarray()
        out[np.diag_indices(self.n)] += self.shift
        return out

    def norm_estimate(self):
        """Frobenius norm of ``A + shift*I``; cheap scale for tolerances."""
        d = self.matrix.diagonal()
        off = scipy.sparse.linalg.norm(self.matrix) ** 2 - np.sum(np.abs(d) ** 2)
        return float(np.sqrt(max(off, 0.0) + np.sum(np.abs(d + self.shift) ** 2)))


def as_operator(A):
    if isinstance(A, Operator):
        return A
    return Operator(A)


def matvec(A, v):
    """Exact sparse product ``A @ v`` (row order, index order summation)."""
    A = to_csr(A) if not isinstance(A, Operator) else A
    v = _cplx(v)
    if isinstance(A, Operator):
        return A.matvec(v)
    if v.shape != (A.shape[1],):
        raise DimensionMismatch('cannot multiply %s matrix by vector of shape %s'
                                % (A.shape, v.shape))
    return A @ v


class QRFactors:
    __slots__ = ('Q', 'R')

    def __init__(self, Q, R):
        self.Q = Q
        self.R = R

    def __iter__(self):
        yield self.Q
        yield self.R


def thin_qr(M):
    """Householder thin QR with a real, non-negative diagonal in ``R``.

    Raises :class:`RankDeficient` when a diagonal entry of ``R`` falls
    below ``1e-14 * ||M||_F``.
    """
    M = _cplx(M)
    if M.ndim != 2:
        raise DimensionMismatch('thin_qr expects a matrix')
    n, k = M.shape
    if n < k:
        raise DimensionMismatch('thin_qr needs rows >= cols, got %dx%d' % (n, k))
    if k == 0:
        return QRFactors(np.zeros((n, 0), complex), np.zeros((0, 0), complex))
    Q, R = scipy.linalg.qr(M, mode='economic', check_finite=True)
    d = np.diag(R)
    mag = np.abs(d)
    phase = np.where(mag > 0, d / np.where(mag > 0, mag, 1.0), 1.0)
    Q = Q * phase
    R = np.triu(phase.conj()[:, None] * R)
    R[np.diag_indices(k)] = mag
    scale = np.linalg.norm(M)
    if scale == 0 or mag.min() < RANK_TOL * scale:
        raise RankDeficient('rank deficiency in QR: min |R_ii| = %.3e, ||M||_F = %.3e'
                            % (mag.min(), scale))
    return QRFactors(Q, R)


def solve_upper_triangular(R, b):
    R = _cplx(R)
    b = _cplx(b)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DimensionMismatch('R must be square')
    if R.shape[0] != b.shape[0]:
        raise DimensionMismatch('R is %dx%d but b has %d rows' % (*R.shape, b.shape[0]))
    if R.shape[0] == 0:
        return b.copy()
    if np.any(np.diag(R) == 0):
        raise Singular('zero on the diagonal of a triangular factor')
    return scipy.linalg.solve_triangular(R, b, lower=False, check_finite=False)


def solve_square(M, b):
    """Solve ``M x = b`` by LU with partial pivoting.

    A pivot smaller than ``1e-14 * ||M||_F`` raises :class:`Singular`; the
    shifted solvers rely on that signal to detect stalled shifts.
    """
    M = _cplx(M)
    b = _cplx(b)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch('M must be square, got %s' % (M.shape,))
    if M.shape[0] != b.shape[0]:
        raise DimensionMismatch('M has %d rows but b has %d' % (M.shape[0], b.shape[0]))
    if M.shape[0] == 0:
        return b.copy()
    scale = np.linalg.norm(M)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    if scale == 0 or np.abs(np.diag(lu)).min() < RANK_TOL * scale:
        raise Singular('numerically singular matrix (min pivot %.3e, ||M||_F %.3e)'
                       % (np.abs(np.diag(lu)).min(), scale))
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def least_squares(M, b):
    """Minimize ``||M x - b||`` through :func:`thin_qr`."""
    M = _cplx(M)
    b = _cplx(b)
    if M.shape[0] != b.shape[0]:
        raise DimensionMismatch('M has %d rows but b has %d' % (M.shape[0], b.shape[0]))
    Q, R = thin_qr(M)
    return solve_upper_triangular(R, Q.conj().T @ b)


def _orth(X):
    X = _cplx(X)
    if X.ndim == 1:
        X = X[:, None]
    return thin_qr(X).Q


def largest_principal_angle(X, Y):
    """Largest principal angle (radians) between ``range(X)`` and ``range(Y)``.

    Cosines come from the singular values of ``Qx^* Qy``.  When the angle is
    small the cosine loses all accuracy, so the sine of the same angle is
    taken from ``(I - Qx Qx^*) Qy`` instead.
    """
    Qx, Qy = _orth(X), _orth(Y)
    if Qx.shape[0] != Qy.shape[0]:
        raise DimensionMismatch('subspaces live in different dimensions')
    if Qx.shape[1] < Qy.shape[1]:
        Qx, Qy = Qy, Qx
    cosines = np.linalg.svd(Qx.conj().T @ Qy, compute_uv=False)
    cmin = min(float(cosines.min()), 1.0)
    if cmin ** 2 < 0.5:
        return float(np.arccos(max(cmin, 0.0)))
    resid = Qy - Qx @ (Qx.conj().T @ Qy)
    smax = float(np.linalg.svd(resid, compute_uv=False).max())
    return float(np.arcsin(min(smax, 1.0)))


def eig_small(M, max_order=EIG_MAX_ORDER):
    """Dense eigenpairs sorted by ``|lambda|`` ascending, unit-norm vectors."""
    M = _cplx(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch('eig_small needs a square matrix')
    if M.shape[0] > max_order:
        raise DimensionMismatch('order %d exceeds cap %d' % (M.shape[0], max_order))
    if not np.all(np.isfinite(M)):
        raise EigFailed('non-finite entries')
    try:
        vals, vecs = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise EigFailed(str(exc)) from exc
    order = np.argsort(np.abs(vals), kind='stable')
    vecs = vecs[:, order]
    norms = np.linalg.norm(vecs, axis=0)
    norms[norms == 0] = 1.0
    return vals[order], vecs / norms
