import numpy as np
import pytest
from numpy.testing import assert_allclose

from nvspin import spinops


def test_spin_half_sz():
    _, _, sz, _ = spinops.spin_matrices(1)
    assert_allclose(sz, np.diag([0.5, -0.5]), atol=1e-15)


def test_spin_one_sz_and_s2():
    _, _, sz, s2 = spinops.spin_matrices(2)
    assert_allclose(sz, np.diag([1.0, 0.0, -1.0]), atol=1e-15)
    assert_allclose(s2, 2.0 * np.eye(3), atol=1e-15)


@pytest.mark.parametrize("two_s", [1, 2, 3, 4])
def test_commutation_relations(two_s):
    sx, sy, sz, _ = spinops.spin_matrices(two_s)
    assert_allclose(sx @ sy - sy @ sx, 1j * sz, atol=1e-12)
    assert_allclose(sy @ sz - sz @ sy, 1j * sx, atol=1e-12)
    assert_allclose(sz @ sx - sx @ sz, 1j * sy, atol=1e-12)


@pytest.mark.parametrize("two_s", [1, 2, 3])
def test_hermiticity(two_s):
    for op in spinops.spin_matrices(two_s):
        assert np.max(np.abs(op - op.conj().T)) < 1e-12


def test_spin_quantum_validation():
    with pytest.raises(ValueError):
        spinops.spin_matrices(-1)
    with pytest.raises(ValueError):
        spinops.spin_matrices(1.5)
    assert spinops.dimension(2) == 3


def test_embed_sz_slot0():
    _, _, sz, _ = spinops.spin_matrices(2)
    full = spinops.embed(sz, 0, [3, 2])
    assert_allclose(full, np.diag([1, 1, 0, 0, -1, -1]).astype(complex), atol=1e-15)


def test_embed_identity():
    full = spinops.embed(np.eye(2), 1, [3, 2])
    assert_allclose(full, np.eye(6), atol=1e-15)


def test_embed_disjoint_slots_commute():
    _, _, sz, _ = spinops.spin_matrices(2)
    _, _, iz, _ = spinops.spin_matrices(1)
    a = spinops.embed(sz, 0, [3, 2])
    b = spinops.embed(iz, 1, [3, 2])
    assert_allclose(a @ b - b @ a, np.zeros((6, 6)), atol=1e-15)


def test_embed_dimension_mismatch_message():
    with pytest.raises(ValueError, match=r"\[3, 2\]"):
        spinops.embed(np.eye(2), 0, [3, 2])
    with pytest.raises(ValueError):
        spinops.embed(np.eye(2), 5, [3, 2])


def test_embed_preserves_spectrum_with_multiplicity():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    a = (a + a.conj().T) / 2
    dims = [2, 3, 2]
    full = spinops.embed(a, 1, dims)
    assert np.max(np.abs(full - full.conj().T)) < 1e-12
    base = np.sort(np.linalg.eigvalsh(a))
    expect = np.sort(np.repeat(base, 4))  # other dims multiply to 4
    assert_allclose(np.sort(np.linalg.eigvalsh(full)), expect, atol=1e-10)


def test_product_basis_order():
    basis = spinops.product_basis([2, 1])
    assert basis[0] == (1.0, 0.5)
    assert basis[1] == (1.0, -0.5)
    assert basis[-1] == (-1.0, -0.5)
    assert len(basis) == 6
