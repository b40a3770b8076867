import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from rabistark.qspace import (
    DensityMatrix,
    DimensionError,
    HilbertSpace,
    QOperator,
    StateVector,
    TruncationWarning,
    basis_state,
    displacement_op,
    embed,
    ladder_ops,
    mode_identity,
    qubit_ops,
)


@pytest.fixture
def space():
    return HilbertSpace(6)


def test_space_dimensions(space):
    assert space.n_fock == 7
    assert space.dim == 14
    assert space.index("e", 0) == 0
    assert space.index("g", 0) == 7
    assert space.index("g", 6) == 13


@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_space_rejects_bad_cutoff(bad):
    with pytest.raises(ValueError):
        HilbertSpace(bad)


def test_index_rejects_out_of_range(space):
    with pytest.raises(ValueError):
        space.index("e", 7)
    with pytest.raises(ValueError):
        space.index("plus", 0)


def test_ladder_action(space):
    a, ad, num = ladder_ops(space)
    for n in range(1, space.n_fock):
        ket = np.zeros(space.n_fock)
        ket[n] = 1
        out = a.data @ ket
        assert out[n - 1] == pytest.approx(np.sqrt(n), abs=1e-12)
        assert np.count_nonzero(np.abs(out) > 1e-14) == 1
    assert np.allclose((ad @ a).data, num.data, atol=1e-12)


def test_canonical_commutator_below_cutoff(space):
    a, ad, _ = ladder_ops(space)
    comm = a.commutator(ad).data
    expected = np.eye(space.n_fock)
    # truncation only spoils the last diagonal entry
    expected[-1, -1] = -space.n_max
    assert np.allclose(comm, expected, atol=1e-12)


def test_pauli_algebra():
    sx, sy, sz, sp, sm = qubit_ops()
    eye = np.eye(2)
    for s in (sx, sy, sz):
        assert np.allclose(s @ s, eye, atol=1e-12)
    assert np.allclose(sx @ sy, 1j * sz, atol=1e-12)
    assert np.allclose(sp, (sx + 1j * sy) / 2, atol=1e-12)
    assert np.allclose(sm, sp.conj().T, atol=1e-12)
    # sigma_+ raises |g> = (0, 1) to |e> = (1, 0)
    assert np.allclose(sp @ np.array([0, 1]), [1, 0])


def test_qubit_ops_are_read_only():
    sx = qubit_ops()[0]
    with pytest.raises(ValueError):
        sx[0, 0] = 5


def test_embed_is_kron(space):
    a, _, _ = ladder_ops(space)
    sz = qubit_ops()[2]
    op = embed(sz, a)
    assert op.data.shape == (space.dim, space.dim)
    assert np.allclose(op.data, np.kron(sz, a.data))


def test_embed_rejects_composite_operand(space):
    full = QOperator(space, np.eye(space.dim))
    with pytest.raises(DimensionError):
        embed(np.eye(2), full)


def test_operator_is_immutable(space):
    op = QOperator(space, np.eye(space.dim))
    with pytest.raises(ValueError):
        op.data[0, 0] = 2.0


def test_mixing_spaces_raises():
    a1 = ladder_ops(HilbertSpace(3))[0]
    a2 = ladder_ops(HilbertSpace(4))[0]
    with pytest.raises(DimensionError):
        a1 + a2
    with pytest.raises(DimensionError):
        QOperator(HilbertSpace(3), np.eye(5))


def test_operator_arithmetic(space):
    a, ad, num = ladder_ops(space)
    x = a + ad
    assert x.is_hermitian()
    assert (2 * num - num).data.tolist() == num.data.tolist()
    assert np.allclose((-a).data, -a.data)
    assert np.allclose(a.dag().data, ad.data)
    psi = basis_state(space, "g", 2)
    H = embed(np.eye(2), num)
    assert H.matrix_element(psi, psi) == pytest.approx(2.0)
    assert np.allclose(H @ psi, 2 * psi.amplitudes)


def test_state_normalisation(space):
    with pytest.raises(ValueError):
        StateVector(space, np.ones(space.dim))
    with pytest.raises(DimensionError):
        StateVector(space, np.ones(3) / np.sqrt(3))


def test_basis_states(space):
    psi = basis_state(space, "e", 3)
    assert psi.amplitudes[space.index("e", 3)] == 1
    plus = basis_state(space, "plus", 2)
    assert abs(plus.amplitudes[space.index("e", 2)]) ** 2 == pytest.approx(0.5)
    minus = basis_state(space, "minus", 2)
    assert np.vdot(plus.amplitudes, minus.amplitudes) == pytest.approx(0, abs=1e-15)
    with pytest.raises(ValueError):
        basis_state(space, "x", 0)
    with pytest.raises(ValueError):
        basis_state(space, "e", 7)


def test_density_invariants(space):
    rho = basis_state(space, "g", 1).to_density()
    assert np.trace(rho.entries).real == pytest.approx(1.0)
    bad = np.array(rho.entries)
    bad[0, 1] = 0.1
    with pytest.raises(ValueError, match="Hermitian"):
        DensityMatrix(space, bad)
    with pytest.raises(ValueError, match="trace"):
        DensityMatrix(space, 2 * rho.entries)
    neg = np.diag(np.r_[1.2, -0.2, np.zeros(space.dim - 2)])
    with pytest.raises(ValueError, match="eigenvalue"):
        DensityMatrix(space, neg)


def _expm_displacement(n_fock, z, pad=60):
    big = n_fock + pad
    a = np.diag(np.sqrt(np.arange(1, big)), 1)
    return expm(z * a.T - np.conj(z) * a)[:n_fock, :n_fock]


@pytest.mark.parametrize("z", [0.1j, 0.3 + 0.2j, -0.7, 1.2 - 0.5j])
def test_displacement_matches_expm_oracle(z):
    space = HilbertSpace(15)
    D = displacement_op(space, z, padding=5, budget=1.0).data
    assert np.allclose(D, _expm_displacement(space.n_fock, z), atol=1e-12)


def test_displacement_zero_is_identity(space):
    assert np.array_equal(displacement_op(space, 0).data, np.eye(space.n_fock))


def test_displacement_interior_unitary():
    space = HilbertSpace(20)
    D = displacement_op(space, 0.1j).data
    inner = D[:, :15]
    assert np.allclose(inner.conj().T @ inner, np.eye(15), atol=1e-10)


def test_displacement_truncation_warning():
    with pytest.warns(TruncationWarning):
        displacement_op(HilbertSpace(6), 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        displacement_op(HilbertSpace(20), 0.1j)


def test_displacement_rejects_nonfinite(space):
    with pytest.raises(ValueError):
        displacement_op(space, complex(np.inf, 0))


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_displacement_inverse(re, im):
    space = HilbertSpace(25)
    z = complex(re, im)
    prod = displacement_op(space, z, budget=1.0).data @ displacement_op(space, -z, budget=1.0).data
    assert np.allclose(prod[:12, :12], np.eye(12), atol=1e-9)


def test_mode_identity(space):
    assert np.array_equal(mode_identity(space).data, np.eye(space.n_fock))


def test_displacement_subnormal_amplitude():
    D = displacement_op(HilbertSpace(4), complex(0.0, 5e-324)).data
    assert np.all(np.isfinite(D))
    assert np.allclose(D, np.eye(5), atol=1e-300)
