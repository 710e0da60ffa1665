import numpy as np
import pytest
import scipy.sparse
from hypothesis import given, settings, strategies as st

from shift_recycle.problems import (ParseError, ProblemSpec, Unsupported, bidiagonal_b1,
                                    bidiagonal_sequence, load_matrix_market, make_rhs,
                                    perturb_bidiagonal, qcd_assemble, save_matrix_market)


def _write(tmp_path, text, name='m.mtx'):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_b1_small():
    B = bidiagonal_b1(3).toarray()
    assert np.array_equal(np.diag(B), [0.1, 1, 2])
    assert np.array_equal(np.diag(B, 1), [1, 1])
    assert np.count_nonzero(B) == 5


def test_b1_full_size():
    B = bidiagonal_b1(1000)
    d = B.diagonal()
    assert d[0] == 0.1 and d[1] == 1 and d[-1] == 999
    assert np.all(B.diagonal(1) == 1) and B.nnz == 1999
    # triangular: the spectrum is the diagonal, all positive
    assert np.all(d.real > 0)


def test_b1_rejects_tiny():
    with pytest.raises(ValueError):
        bidiagonal_b1(1)


def test_perturbation_norm_and_pattern():
    B = bidiagonal_b1(200)
    P = perturb_bidiagonal(B, 5)
    E = (P - B).toarray()
    assert abs(np.linalg.norm(E) - 1) <= 1e-12
    assert set(zip(*P.nonzero())) == set(zip(*B.nonzero()))


def test_perturbation_deterministic():
    B = bidiagonal_b1(50)
    a, b = perturb_bidiagonal(B, 9), perturb_bidiagonal(B, 9)
    assert a.data.tobytes() == b.data.tobytes()
    assert not np.array_equal(a.data, perturb_bidiagonal(B, 10).data)


def test_sequence():
    seq = bidiagonal_sequence(100, 4, 0)
    assert len(seq) == 4 and (seq[0] != bidiagonal_b1(100)).nnz == 0
    again = bidiagonal_sequence(100, 4, 0)
    assert all(a.data.tobytes() == b.data.tobytes() for a, b in zip(seq, again))
    assert len({m.data.tobytes() for m in seq}) == 4


def test_identity_file(tmp_path):
    p = _write(tmp_path, '%%MatrixMarket matrix coordinate real general\n'
                         '% comment\n2 2 2\n1 1 1.0\n2 2 1.0\n')
    assert np.array_equal(load_matrix_market(p).toarray(), np.eye(2))


def test_duplicates_summed(tmp_path):
    p = _write(tmp_path, '%%MatrixMarket matrix coordinate real general\n'
                         '2 2 3\n1 1 1.5\n1 1 2.0\n2 1 -1\n')
    assert np.array_equal(load_matrix_market(p).toarray(), [[3.5, 0], [-1, 0]])


@pytest.mark.parametrize('sym,entries,off', [('symmetric', '1 1 3 0\n2 1 2 1', 2 + 1j),
                                              ('hermitian', '1 1 3 0\n2 1 2 1', 2 - 1j),
                                              ('skew-symmetric', '2 1 2 1', -2 - 1j)])
def test_symmetric_storage_expanded(tmp_path, sym, entries, off):
    nnz = entries.count('\n') + 1
    p = _write(tmp_path, '%%%%MatrixMarket matrix coordinate complex %s\n2 2 %d\n%s\n'
               % (sym, nnz, entries))
    M = load_matrix_market(p).toarray()
    assert M[1, 0] == 2 + 1j and M[0, 1] == off


def test_pattern_unsupported(tmp_path):
    p = _write(tmp_path, '%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 1\n')
    with pytest.raises(Unsupported):
        load_matrix_market(p)


@pytest.mark.parametrize('text,line', [
    ('%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 x 1.0\n', 4),
    ('%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n', 3),
    ('%%MatrixMarket matrix coordinate real general\n2 two 1\n', 2),
    ('%%NotMatrixMarket\n', 1),
    ('%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1\n', 3),
])
def test_parse_errors_carry_line(tmp_path, text, line):
    with pytest.raises(ParseError) as exc:
        load_matrix_market(_write(tmp_path, text))
    assert exc.value.line == line


def test_round_trip_exact(tmp_path):
    M = perturb_bidiagonal(bidiagonal_b1(30), 1) * (1 + 1j / 3)
    p = tmp_path / 'c.mtx'
    save_matrix_market(p, M)
    back = load_matrix_market(p)
    assert (back != M).nnz == 0 and back.data.tobytes() == M.data.tobytes()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12), real=st.booleans())
def test_round_trip_property(tmp_path_factory, seed, n, real):
    rng = np.random.default_rng(seed)
    M = scipy.sparse.random(n, n, density=0.4, random_state=rng).tocsr()
    if not real:
        M = M * (1 - 2.5j)
    p = tmp_path_factory.mktemp('rt') / 'm.mtx'
    save_matrix_market(p, M)
    assert np.array_equal(load_matrix_market(p).toarray(), M.toarray())


def test_qcd_assemble():
    D = scipy.sparse.random(20, 20, density=0.2, random_state=1)
    assert np.array_equal(qcd_assemble(D, 0).toarray(), np.eye(20))
    assert np.allclose(qcd_assemble(scipy.sparse.identity(5), 0.5).toarray(), 0.5 * np.eye(5))
    A = qcd_assemble(D, 0.1)
    assert np.allclose(A.toarray(), np.eye(20) - 0.1 * D.toarray())


def test_rhs_kinds():
    assert np.allclose(make_rhs(4), 0.5)
    assert np.array_equal(make_rhs(3, 'unit'), [1, 0, 0])
    r = make_rhs(10, 'seeded-random', 3)
    assert np.linalg.norm(r) == pytest.approx(1) and np.array_equal(
        r, make_rhs(10, 'seeded-random', 3))
    with pytest.raises(ValueError):
        make_rhs(3, 'zeros')


def test_problem_spec(tmp_path):
    spec = ProblemSpec(n=50, shifts=(0.01, 0.1), sequence=3, seed=2)
    assert len(spec.matrices()) == 3 and spec.matrices() is spec.matrices()
    assert spec.rhs_vector().shape == (50,)
    with pytest.raises(ValueError):
        ProblemSpec(shifts=(1, 1.0))
    with pytest.raises(ValueError):
        ProblemSpec(kind='matrix-market')
    p = tmp_path / 'd.mtx'
    save_matrix_market(p, scipy.sparse.identity(4))
    qcd = ProblemSpec(kind='qcd-assembled', paths=(str(p),), kappa=0.25,
                      shifts=(0.001, 0.002, 0.003, -0.6, -0.5))
    assert np.allclose(qcd.matrices()[0].toarray(), 0.75 * np.eye(4))
    assert len(qcd.shifts) == 5
