import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_density, random_hermitian
from proctensor.linalg import (
    IN,
    OUT,
    Leg,
    LegLayout,
    LayoutError,
    eig_hermitian,
    expm,
    kron,
    partial_trace,
    permute_legs,
    trace_norm,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def two_qubits():
    return LegLayout.from_spec([(1, OUT, 2), (2, IN, 2)])


def test_kron_examples():
    assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))
    assert np.array_equal(kron(SZ, SZ), np.diag([1, -1, -1, 1]))
    ket00 = np.array([1, 0, 0, 0])
    assert np.array_equal(kron(SX, SX) @ ket00, np.array([0, 0, 0, 1]))


def test_kron_rejects_non_square():
    with pytest.raises(LayoutError):
        kron(np.ones((2, 3)))


def test_layout_rejects_duplicates_and_bad_roles():
    with pytest.raises(LayoutError):
        LegLayout.from_spec([(1, IN, 2), (1, IN, 2)])
    with pytest.raises(LayoutError):
        Leg(1, "sideways", 2)
    with pytest.raises(LayoutError):
        two_qubits().check_operator(np.eye(3))


def test_layout_bookkeeping():
    lay = LegLayout.from_spec([(2, IN, 3), (1, OUT, 2), (1, IN, 2)])
    assert lay.dim == 12
    assert lay.in_dim == 6 and lay.out_dim == 2
    assert lay.chronological().labels == ((1, IN), (1, OUT), (2, IN))
    assert lay.without([(1, OUT)]).labels == ((2, IN), (1, IN))


def test_partial_trace_bell_marginal():
    phi = np.zeros(4)
    phi[[0, 3]] = 1 / np.sqrt(2)
    bell = np.outer(phi, phi)
    for leg in two_qubits().labels:
        m, lay = partial_trace(bell, two_qubits(), [leg])
        assert np.allclose(m, np.eye(2) / 2)
        assert len(lay) == 1


def test_partial_trace_all_legs_and_products():
    rng = np.random.default_rng(0)
    a, b = random_density(rng, 2), 3 * random_density(rng, 2)
    m, lay = partial_trace(np.kron(a, b), two_qubits(), [(2, IN)])
    assert np.allclose(m, 3 * a)
    full, lay = partial_trace(np.kron(a, b), two_qubits(), two_qubits().labels)
    assert full.shape == (1, 1) and np.isclose(full[0, 0], 3)
    with pytest.raises(LayoutError):
        partial_trace(np.kron(a, b), two_qubits(), [(7, IN)])


@given(st.integers(0, 2**32 - 1))
def test_partial_trace_linear_and_trace_preserving(seed):
    rng = np.random.default_rng(seed)
    lay = LegLayout.from_spec([(1, OUT, 2), (2, IN, 3), (2, OUT, 2)])
    x, y = random_hermitian(rng, 12), random_hermitian(rng, 12)
    c = rng.normal()
    traced = [(2, IN)]
    px, _ = partial_trace(x, lay, traced)
    py, _ = partial_trace(y, lay, traced)
    pxy, _ = partial_trace(x + c * y, lay, traced)
    assert np.allclose(pxy, px + c * py, atol=1e-12)
    assert np.isclose(np.trace(px), np.trace(x), atol=1e-12)


def test_permute_legs_swap_and_involution():
    rng = np.random.default_rng(1)
    a, b = random_density(rng, 2), random_density(rng, 3)
    lay = LegLayout.from_spec([(1, OUT, 2), (2, IN, 3)])
    m, new = permute_legs(np.kron(a, b), lay, [(2, IN), (1, OUT)])
    assert np.allclose(m, np.kron(b, a))
    back, lay2 = permute_legs(m, new, [(1, OUT), (2, IN)])
    assert np.max(np.abs(back - np.kron(a, b))) <= 1e-14
    same, _ = permute_legs(np.kron(a, b), lay, lay.labels)
    assert np.array_equal(same, np.kron(a, b))
    with pytest.raises(LayoutError):
        permute_legs(np.kron(a, b), lay, [(1, OUT), (1, OUT)])


def test_eig_hermitian_examples():
    vals, _ = eig_hermitian(SZ)
    assert np.allclose(vals, [1, -1])
    vals, _ = eig_hermitian(np.eye(2) / 2)
    assert np.allclose(vals, [0.5, 0.5])
    vals, vecs = eig_hermitian(SX)
    assert np.allclose(vals, [1, -1])
    plus = np.array([1, 1]) / np.sqrt(2)
    assert np.isclose(abs(vecs[:, 0].conj() @ plus), 1)
    with pytest.raises(ValueError):
        eig_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))


@pytest.mark.parametrize("d", [2, 7, 64, 1024])
def test_eig_hermitian_reconstruction(d):
    m = random_hermitian(np.random.default_rng(d), d)
    vals, vecs = eig_hermitian(m)
    assert np.all(np.diff(vals) <= 0)
    assert np.max(np.abs(vecs @ np.diag(vals) @ vecs.conj().T - m)) <= 1e-10 * max(1, np.abs(m).max())
    assert np.max(np.abs(vecs.conj().T @ vecs - np.eye(d))) <= 1e-10


def test_expm_examples():
    assert np.max(np.abs(expm(np.zeros((3, 3))) - np.eye(3))) <= 1e-14
    assert np.allclose(expm(1j * np.pi * SX / 2), 1j * SX, atol=1e-12)
    assert np.allclose(expm(np.diag([0.3, -2.0])), np.diag(np.exp([0.3, -2.0])))


@given(st.integers(0, 2**32 - 1))
def test_expm_commuting_sum(seed):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, 4)
    _, v = np.linalg.eigh(h)
    a = v @ np.diag(rng.normal(size=4)) @ v.conj().T
    b = v @ np.diag(rng.normal(size=4) * 1j) @ v.conj().T
    assert np.allclose(expm(a + b), expm(a) @ expm(b), atol=1e-10)


def test_trace_norm_examples():
    assert np.isclose(trace_norm(np.eye(2)), 2)
    rho = random_density(np.random.default_rng(3), 3)
    assert trace_norm(rho - rho) == 0
    assert np.isclose(trace_norm(SZ), 2)
    assert np.isclose(trace_norm(np.array([[0, 1], [0, 0]])), 1)
