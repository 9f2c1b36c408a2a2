import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diskqed import operators as ops
from diskqed.operators import HilbertLayout


def dense_a(n_max):
    a = np.zeros((n_max + 1, n_max + 1))
    for n in range(1, n_max + 1):
        a[n - 1, n] = np.sqrt(n)
    return a


def dense_lindblad_rhs(h, cs, rho):
    out = -1j * (h @ rho - rho @ h)
    for c in cs:
        cd = c.conj().T
        out += c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
    return out


def dense_kron_generator(h, cs):
    # column-stacking Kronecker oracle, converted to row-major at the end
    d = h.shape[0]
    eye = np.eye(d)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for c in cs:
        cdc = c.conj().T @ c
        gen += np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    perm = np.arange(d * d).reshape(d, d).T.ravel()
    return gen[np.ix_(perm, perm)]


def random_hermitian(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return m + m.conj().T


def random_system(rng, layout):
    d = layout.dim
    h = random_hermitian(rng, d)
    cs = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(2)]
    return h, cs


class TestLadder:
    def test_single_photon(self):
        a = ops.annihilation(1).toarray()
        assert np.allclose(a @ [0, 1], [1, 0])
        assert np.allclose(a @ [1, 0], [0, 0])

    @pytest.mark.parametrize("n_max", [1, 2, 3, 4])
    def test_against_dense(self, n_max):
        a = ops.annihilation(n_max).toarray()
        assert np.array_equal(a, dense_a(n_max))
        assert np.allclose(np.diag(a.conj().T @ a), np.arange(n_max + 1))
        assert np.allclose(np.linalg.eigvalsh(ops.number(n_max).toarray()), np.arange(n_max + 1))

    @pytest.mark.parametrize("n_max", [1, 3, 8])
    def test_truncated_commutator(self, n_max):
        a = ops.annihilation(n_max).toarray()
        comm = np.diag(a @ a.conj().T - a.conj().T @ a)
        assert np.allclose(comm[:-1], 1.0)
        assert comm[-1] == pytest.approx(-n_max)

    def test_sigma(self):
        s = ops.lowering_sigma().toarray()
        assert np.array_equal(s, [[0, 1], [0, 0]])

    def test_rejects_zero_cutoff(self):
        with pytest.raises(ValueError):
            ops.annihilation(0)


class TestLayout:
    def test_dimension(self):
        assert HilbertLayout(8).dim == 162
        assert HilbertLayout(2).dims == (3, 3, 2)

    def test_row_major_index(self):
        lay = HilbertLayout(2)
        assert lay.index(0, 0, 1) == 1
        assert lay.index(0, 1, 0) == 2
        assert lay.index(1, 0, 0) == 6
        assert tuple(lay.quantum_numbers()[lay.index(2, 1, 1)]) == (2, 1, 1)

    def test_bad_slot(self):
        with pytest.raises(ValueError):
            HilbertLayout(2).slot_index("pump")
        with pytest.raises(ValueError):
            HilbertLayout(2).slot_index(3)


class TestEmbed:
    def test_identity(self):
        lay = HilbertLayout(2)
        for slot, n in zip(ops.SLOTS, lay.dims):
            e = ops.embed(np.eye(n), slot, lay)
            assert np.array_equal(e.toarray(), np.eye(lay.dim))

    def test_disjoint_slots_commute(self):
        m = ops.ModeOperators.for_layout(HilbertLayout(3))
        comm = m.a_cw @ m.a_ccw - m.a_ccw @ m.a_cw
        assert comm.count_nonzero() == 0

    def test_dense_kron_oracle(self):
        lay = HilbertLayout(2)
        a = dense_a(2)
        full = np.kron(np.kron(a, np.eye(3)), np.eye(2))
        m = ops.ModeOperators.for_layout(lay)
        prod = (m.a_cw @ ops.dagger(m.a_cw)).toarray()
        assert np.array_equal(prod, full @ full.T)
        sig = np.kron(np.eye(9), [[0, 1], [0, 0]])
        assert np.array_equal(m.sigma.toarray(), sig)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ops.embed(np.eye(2), "cw", HilbertLayout(2))


class TestLindblad:
    def test_photon_decay_rate(self):
        kappa = 0.7
        a = ops.annihilation(2)
        L = ops.lindblad_superoperator(np.zeros((3, 3)), [np.sqrt(2 * kappa) * a])
        rho = np.diag([0.0, 1.0, 0.0]).astype(complex)
        drho = ops.apply_superoperator(L, rho)
        assert np.trace(ops.number(2).toarray() @ drho).real == pytest.approx(-2 * kappa)

    def test_pure_rotation(self):
        rng = np.random.default_rng(1)
        n = ops.number(3).toarray()
        L = ops.lindblad_superoperator(0.3 * n)
        rho = random_hermitian(rng, 4)
        assert np.allclose(ops.apply_superoperator(L, rho), -1j * 0.3 * (n @ rho - rho @ n))
        gen = L.toarray()
        assert np.allclose(gen, -gen.conj().T)

    def test_random_dense_oracle(self):
        rng = np.random.default_rng(7)
        d = 8
        h = random_hermitian(rng, d)
        cs = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(3)]
        L = ops.lindblad_superoperator(h, cs)
        for _ in range(5):
            rho = random_hermitian(rng, d)
            assert np.allclose(ops.apply_superoperator(L, rho), dense_lindblad_rhs(h, cs, rho), atol=1e-12)

    @pytest.mark.parametrize("n_max", [1, 2])
    def test_kron_oracle_entrywise(self, n_max):
        rng = np.random.default_rng(n_max)
        h, cs = random_system(rng, HilbertLayout(n_max))
        L = ops.lindblad_superoperator(h, cs).toarray()
        assert np.allclose(L, dense_kron_generator(h, cs), atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_trace_and_hermiticity_preserved(self, seed):
        rng = np.random.default_rng(seed)
        lay = HilbertLayout(1)
        h, cs = random_system(rng, lay)
        L = ops.lindblad_superoperator(h, cs)
        rho = random_hermitian(rng, lay.dim)
        out = ops.apply_superoperator(L, rho)
        scale = np.abs(out).sum()
        assert abs(np.trace(out)) <= 1e-12 * scale
        assert np.linalg.norm(out - out.conj().T) <= 1e-12 * np.linalg.norm(out)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ops.lindblad_superoperator(np.eye(3), [np.eye(2)])


class TestCanonical:
    def test_prunes_and_sorts(self):
        m = ops.canonical(np.array([[1.0, 1e-17], [0.0, 2.0]]))
        assert m.nnz == 2
        assert m.has_sorted_indices

    def test_coo_round_trip(self):
        m = ops.ModeOperators.for_layout(HilbertLayout(2))
        op = m.a_cw + 0.5j * ops.dagger(m.sigma)
        buf = io.StringIO()
        ops.dump_coo(op, buf)
        text = buf.getvalue()
        back = ops.load_coo(io.StringIO(text), op.shape[0])
        assert (back != op).nnz == 0
        buf2 = io.StringIO()
        ops.dump_coo(back, buf2)
        assert buf2.getvalue() == text
