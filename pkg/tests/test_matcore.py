import numpy as np
import pytest

from qtsector.matcore import (
    DimensionError,
    NotPSDError,
    clip_to_state,
    eig_hermitian,
    hermitize,
    psd_power,
    support_basis,
    support_projector,
    trace_norm,
)
from .conftest import random_state


def test_hermitize_basic():
    m = np.array([[1.0, 2 + 1j], [0.0, 3.0]])
    h = hermitize(m)
    assert np.allclose(h, h.conj().T)
    assert np.allclose(h, [[1.0, 1 + 0.5j], [1 - 0.5j, 3.0]])


def test_hermitize_rejects_nonsquare():
    with pytest.raises(DimensionError):
        hermitize(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        hermitize(np.array([[np.nan, 0], [0, 1]]))


def test_eig_hermitian_descending_orthonormal():
    rng = np.random.default_rng(0)
    for _ in range(20):
        h = hermitize(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
        w, v = eig_hermitian(h)
        assert np.all(np.diff(w) <= 1e-12)
        assert np.allclose(v.conj().T @ v, np.eye(4), atol=1e-12)
        assert np.allclose((v * w) @ v.conj().T, h, atol=1e-10)


def test_eig_hermitian_phase_convention_reproducible():
    rng = np.random.default_rng(1)
    h = hermitize(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    w1, v1 = eig_hermitian(h)
    w2, v2 = eig_hermitian(h.copy())
    assert np.array_equal(w1, w2) and np.array_equal(v1, v2)
    # first sizeable component of each eigenvector is real positive
    for j in range(3):
        col = v1[:, j]
        lead = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
        assert abs(lead.imag) < 1e-12 and lead.real > 0


def test_support_projector_known():
    h = np.diag([2.0, 0.0, 1e-12])
    p = support_projector(h)
    assert np.allclose(p, np.diag([1.0, 0.0, 0.0]), atol=1e-12)
    b = support_basis(h)
    assert b.shape == (3, 1)
    with pytest.raises(NotPSDError):
        support_projector(np.diag([1.0, -1e-3]))


def test_psd_power_penrose():
    # [DERIVED] diag oracle: 0 stays 0 under negative powers (Penrose).
    e = np.diag([4.0, 0.25, 0.0])
    assert np.allclose(psd_power(e, 0.5), np.diag([2.0, 0.5, 0.0]), atol=1e-12)
    assert np.allclose(psd_power(e, -0.5), np.diag([0.5, 2.0, 0.0]), atol=1e-12)
    # E^{1/2} E^{-1/2} equals the support projector
    assert np.allclose(psd_power(e, 0.5) @ psd_power(e, -0.5),
                       support_projector(e), atol=1e-12)


def test_psd_power_projector_inverse_half():
    # [DERIVED] a projector is its own inverse square root on its support.
    e1 = np.diag([1.0, 0.0])
    assert np.allclose(psd_power(e1, -0.5), e1, atol=1e-14)


def test_trace_norm():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert np.isclose(trace_norm(m), np.linalg.svd(m, compute_uv=False).sum())
    rho = random_state(rng, 4)
    assert np.isclose(trace_norm(rho), 1.0, atol=1e-12)


def test_clip_to_state():
    rho = np.diag([0.7, 0.4, -1e-11])
    out = clip_to_state(rho)
    w = np.linalg.eigvalsh(out)
    assert w[0] >= 0 and np.isclose(np.trace(out).real, 1.0)
    with pytest.raises(NotPSDError):
        clip_to_state(np.zeros((2, 2)))
