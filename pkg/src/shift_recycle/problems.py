"""Test problems and Matrix Market input/output."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .linalg import ShiftRecycleError, to_csr

__all__ = ['ParseError', 'Unsupported', 'bidiagonal_b1', 'perturb_bidiagonal',
           'bidiagonal_sequence', 'load_matrix_market', 'save_matrix_market',
           'qcd_assemble', 'make_rhs', 'ProblemSpec']


class ParseError(ShiftRecycleError, ValueError):
    def __init__(self, line, msg):
        super().__init__('line %d: %s' % (line, msg))
        self.line = line


class Unsupported(ShiftRecycleError, ValueError):
    pass


def bidiagonal_b1(n):
    """Upper bidiagonal matrix with diagonal ``(0.1, 1, 2, ..., n-1)`` and
    ones on the superdiagonal."""
    if n < 2:
        raise ValueError('n must be >= 2')
    d = np.arange(n, dtype=float)
    d[0] = 0.1
    return scipy.sparse.diags([d, np.ones(n - 1)], [0, 1], format='csr', dtype=complex)


def perturb_bidiagonal(B, seed):
    """``B + E`` where ``E`` has the sparsity pattern of ``B``, uniform
    random entries in ``(0, 1)`` and ``||E||_F = 1``.

    Entries come from ``numpy.random.default_rng(seed)`` (PCG64), drawn in
    CSR storage order.
    """
    B = to_csr(B)
    rng = np.random.default_rng(seed)
    vals = rng.random(B.nnz)
    while not vals.any():
        vals = rng.random(B.nnz)
    vals /= np.linalg.norm(vals)
    E = B.copy()
    E.data = vals.astype(complex)
    return to_csr(B + E)


def bidiagonal_sequence(n, length, seed):
    """``B1`` followed by ``length - 1`` independent perturbations of it.

    Each perturbation draws from its own child of ``SeedSequence(seed)``.
    """
    B = bidiagonal_b1(n)
    children = np.random.SeedSequence(seed).spawn(max(length - 1, 0))
    return [B] + [perturb_bidiagonal(B, np.random.default_rng(c)) for c in children]


_FIELDS = ('real', 'complex', 'integer')
_SYMMETRIES = ('general', 'symmetric', 'hermitian', 'skew-symmetric')


def load_matrix_market(path):
    """Read a coordinate-format Matrix Market file into complex CSR.

    Duplicate entries are summed and symmetric storage is expanded.
    """
    with open(path, 'r') as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(1, 'empty file')
    head = lines[0].split()
    if len(head) != 5 or head[0] != '%%MatrixMarket' or head[1].lower() != 'matrix':
        raise ParseError(1, 'bad banner %r' % lines[0])
    fmt, fld, sym = (h.lower() for h in head[2:])
    if fmt != 'coordinate':
        raise Unsupported('only coordinate format is supported, got %r' % fmt)
    if fld == 'pattern':
        raise Unsupported('pattern matrices carry no values')
    if fld not in _FIELDS:
        raise ParseError(1, 'unknown field %r' % fld)
    if sym not in _SYMMETRIES:
        raise ParseError(1, 'unknown symmetry %r' % sym)

    i = 1
    while i < len(lines) and (not lines[i].strip() or lines[i].lstrip().startswith('%')):
        i += 1
    if i == len(lines):
        raise ParseError(i, 'missing size line')
    try:
        nrows, ncols, nnz = (int(t) for t in lines[i].split())
    except ValueError:
        raise ParseError(i + 1, 'bad size line %r' % lines[i]) from None
    width = 4 if fld == 'complex' else 3
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=complex)
    count = 0
    for lineno in range(i + 1, len(lines)):
        text = lines[lineno].strip()
        if not text or text.startswith('%'):
            continue
        parts = text.split()
        if len(parts) != width:
            raise ParseError(lineno + 1, 'expected %d fields, got %d' % (width, len(parts)))
        if count == nnz:
            raise ParseError(lineno + 1, 'more entries than declared (%d)' % nnz)
        try:
            r, c = int(parts[0]), int(parts[1])
            v = float(parts[2]) if width == 3 else complex(float(parts[2]), float(parts[3]))
        except ValueError:
            raise ParseError(lineno + 1, 'cannot parse %r' % text) from None
        if not (1 <= r <= nrows and 1 <= c <= ncols):
            raise ParseError(lineno + 1, 'index (%d, %d) out of range' % (r, c))
        rows[count], cols[count], vals[count] = r - 1, c - 1, v
        count += 1
    if count != nnz:
        raise ParseError(len(lines), 'expected %d entries, found %d' % (nnz, count))

    if sym != 'general':
        off = rows != cols
        if sym == 'symmetric':
            mirrored = vals[off]
        elif sym == 'hermitian':
            mirrored = vals[off].conj()
        else:
            mirrored = -vals[off]
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, mirrored]))
    M = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
    return to_csr(M)


def save_matrix_market(path, A):
    """Write ``A`` as a general coordinate file; values in ``%.17g`` so a
    round trip is exact.  Real matrices are written with the real field."""
    A = scipy.sparse.coo_matrix(A)
    is_complex = np.iscomplexobj(A.data) and np.any(A.data.imag != 0)
    order = np.lexsort((A.row, A.col))
    with open(path, 'w') as fh:
        fh.write('%%%%MatrixMarket matrix coordinate %s general\n'
                 % ('complex' if is_complex else 'real'))
        fh.write('%d %d %d\n' % (A.shape[0], A.shape[1], A.nnz))
        for idx in order:
            v = complex(A.data[idx])
            if is_complex:
                fh.write('%d %d %.17g %.17g\n' % (A.row[idx] + 1, A.col[idx] + 1, v.real, v.imag))
            else:
                fh.write('%d %d %.17g\n' % (A.row[idx] + 1, A.col[idx] + 1, v.real))


def qcd_assemble(D, kappa):
    """``I - kappa D``.  For ``0 < kappa < kappa_c`` the result is positive
    real; that range is the caller's business."""
    D = to_csr(D)
    return to_csr(scipy.sparse.identity(D.shape[0], dtype=complex, format='csr') - kappa * D)


def make_rhs(n, kind='ones', seed=0):
    """Right-hand side of unit norm: all ones, ``e_1`` or seeded Gaussian."""
    if kind == 'ones':
        b = np.ones(n, complex)
    elif kind == 'unit':
        b = np.zeros(n, complex)
        b[0] = 1.0
    elif kind == 'seeded-random':
        b = np.random.default_rng(seed).standard_normal(n).astype(complex)
    else:
        raise ValueError('unknown rhs kind %r' % kind)
    return b / np.linalg.norm(b)


@dataclass
class ProblemSpec:
    """A sequence of matrices, a shift family and a right-hand side.

    ``kind`` is ``'bidiagonal'``, ``'matrix-market'`` or ``'qcd-assembled'``.
    For ``'matrix-market'`` every path in ``paths`` is one system of the
    sequence; ``'qcd-assembled'`` applies ``I - kappa D`` to each of them.
    """
    kind: str = 'bidiagonal'
    n: int = 1000
    shifts: tuple = ()
    rhs: str = 'ones'
    seed: int = 0
    sequence: int = 1
    paths: tuple = ()
    kappa: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.shifts = tuple(self.shifts)
        if len(set(complex(s) for s in self.shifts)) != len(self.shifts):
            raise ValueError('shifts must be distinct')
        if self.kind not in ('bidiagonal', 'matrix-market', 'qcd-assembled'):
            raise ValueError('unknown problem kind %r' % self.kind)
        if self.kind == 'bidiagonal' and self.n < 2:
            raise ValueError('n must be >= 2')
        if self.kind != 'bidiagonal' and not self.paths:
            raise ValueError('%s problems need at least one matrix path' % self.kind)
        if self.sequence < 1:
            raise ValueError('sequence must be >= 1')

    def matrices(self):
        if 'm' not in self._cache:
            if self.kind == 'bidiagonal':
                mats = bidiagonal_sequence(self.n, self.sequence, self.seed)
            else:
                mats = [load_matrix_market(p) for p in self.paths]
                if self.kind == 'qcd-assembled':
                    mats = [qcd_assemble(D, self.kappa) for D in mats]
                for M in mats:
                    if M.shape[0] != M.shape[1] or M.shape != mats[0].shape:
                        raise ValueError('all matrices must be square and of equal size')
            self._cache['m'] = mats
        return self._cache['m']

    def rhs_vector(self):
        return make_rhs(self.matrices()[0].shape[0], self.rhs, self.seed)

