import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geosic import spectral
from geosic.errors import ContractError

from oracles import brute_convolution, dense_epdiff_rhs


def rand_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_multiplier_bounds():
    op = spectral.SobolevOperator()
    lam = op.multiplier((16, 16))
    assert lam.min() >= 1.0
    assert lam[8, 8] == 1.0
    assert np.array_equal(spectral.SobolevOperator(alpha=0).multiplier((16, 16)), np.ones((16, 16)))


def test_multiplier_value():
    op = spectral.SobolevOperator(alpha=3, power=3, full_shape=(64, 64))
    lam = op.multiplier((16, 16))
    # k = (kx=1, ky=0)
    expect = (3 * (2 - 2 * np.cos(2 * np.pi / 64)) + 1) ** 3
    assert np.isclose(lam[8, 9], expect, rtol=1e-15)


def test_L_K_inverse_pair(rng):
    op = spectral.SobolevOperator()
    v = spectral.random_velocity(rng, (16, 16))
    back = spectral.apply_K(op, spectral.apply_L(op, v))
    assert np.abs(back - v).max() <= 1e-12 * np.abs(v).max()
    dc = np.zeros((2, 16, 16), complex)
    dc[:, 8, 8] = 1 + 2j
    assert np.array_equal(spectral.apply_L(op, dc), dc)


def test_hermitian_projection_properties(rng):
    c = rand_complex(rng, (2, 8, 7))
    p = spectral.hermitian_project(c)
    assert spectral.is_hermitian(p)
    assert np.allclose(spectral.hermitian_project(p), p, rtol=0, atol=1e-15)
    # self-adjoint
    d = rand_complex(rng, (2, 8, 7))
    assert np.isclose(spectral.inner(p, d), spectral.inner(c, spectral.hermitian_project(d)))
    # unpaired Nyquist row of an even box is zero
    assert np.all(p[:, 0, :] == 0)


def test_unit_coefficient_is_cosine():
    c = np.zeros((16, 16), complex)
    c[8, 9] = 0.5
    c[8, 7] = 0.5
    field = spectral.to_spatial(c, (64, 64))
    x = np.arange(64)
    assert np.allclose(field, np.cos(2 * np.pi * x / 64)[None, :], rtol=0, atol=1e-13)


def test_zero_coefficients_zero_field():
    assert np.array_equal(spectral.to_spatial(np.zeros((2, 16, 16), complex), (64, 64)), np.zeros((2, 64, 64)))


@pytest.mark.parametrize("trunc,full", [((16, 16), (64, 64)), ((8, 8), (32, 32)), ((5, 7), (12, 20))])
def test_roundtrip_and_realness(rng, trunc, full):
    v = spectral.random_velocity(rng, trunc)
    field = spectral.to_spatial(v, full)
    back = spectral.from_spatial(field, trunc)
    assert np.abs(back - v).max() <= 1e-12 * np.abs(v).max()
    # the matrix transform agrees with a full complex inverse FFT, whose imaginary part is negligible
    ref = np.fft.ifft2(spectral.pad(v, full)) * full[0] * full[1]
    assert np.abs(ref.imag).max() < 1e-10 * np.abs(ref.real).max()
    assert np.allclose(field, ref.real, rtol=0, atol=1e-12)


def test_pad_truncate(rng):
    c = rand_complex(rng, (3, 8, 8))
    assert np.array_equal(spectral.truncate(spectral.pad(c, (20, 20)), (8, 8)), c)
    with pytest.raises(ContractError):
        spectral.pad(c, (6, 20))


def test_truncation_larger_than_grid():
    with pytest.raises(ContractError):
        spectral.to_spatial(np.zeros((2, 20, 20), complex), (16, 16))


def test_product_identity_element(rng):
    a = rand_complex(rng, (8, 8))
    delta = np.zeros((8, 8), complex)
    delta[4, 4] = 1.0
    assert np.allclose(spectral.spectral_product(a, delta), a, rtol=0, atol=1e-13)
    assert np.allclose(spectral.spectral_product(delta, a), a, rtol=0, atol=1e-13)


@pytest.mark.parametrize("t", [(5, 5), (8, 8), (3, 6), (7, 4)])
@pytest.mark.parametrize("kind", ["convolution", "correlation"])
def test_product_matches_brute_force(rng, t, kind):
    a, b = rand_complex(rng, t), rand_complex(rng, t)
    ref = brute_convolution(a, b, kind)
    out = spectral.spectral_product(a, b, kind)
    assert np.abs(out - ref).max() <= 1e-10 * np.abs(ref).max()


def test_correlation_preserves_hermitian(rng):
    a = spectral.hermitian_project(rand_complex(rng, (7, 7)))
    out = spectral.spectral_product(a, a, "correlation")
    assert spectral.is_hermitian(out, rtol=1e-12)


def test_product_errors(rng):
    with pytest.raises(ContractError):
        spectral.spectral_product(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ContractError):
        spectral.spectral_product(np.zeros((4, 4)), np.zeros((4, 4)), kind="bogus")


def test_epdiff_zero_and_hermitian(rng):
    op = spectral.SobolevOperator()
    assert np.array_equal(spectral.spectral_gradient_terms(np.zeros((2, 16, 16), complex), op),
                          np.zeros((2, 16, 16), complex))
    v = spectral.random_velocity(rng, (16, 16))
    assert spectral.is_hermitian(spectral.spectral_gradient_terms(v, op), rtol=1e-12)


@pytest.mark.parametrize("trunc", [(8, 8), (16, 16), (7, 9)])
def test_epdiff_matches_dense_oracle(rng, trunc):
    op = spectral.SobolevOperator(full_shape=(64, 64))
    v = spectral.random_velocity(rng, trunc)
    out = spectral.spectral_gradient_terms(v, op)
    ref = dense_epdiff_rhs(v, (64, 64))
    assert np.abs(out - ref).max() <= 1e-3 * np.abs(ref).max()


def test_epdiff_vjp_matches_directional_derivative(rng):
    op = spectral.SobolevOperator(full_shape=(32, 32))
    rhs = spectral.EPDiff(op, (8, 8))
    v = spectral.random_velocity(rng, (8, 8))
    dv = spectral.random_velocity(rng, (8, 8))
    gbar = spectral.random_velocity(rng, (8, 8))
    h = 1e-6
    fd = (spectral.inner(gbar, rhs(v + h * dv)) - spectral.inner(gbar, rhs(v - h * dv))) / (2 * h)
    an = spectral.inner(rhs.vjp(v, gbar), dv)
    assert abs(fd - an) <= 1e-6 * abs(an)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2**31 - 1))
def test_roundtrip_any_box(th, tw, seed):
    rng = np.random.default_rng(seed)
    v = spectral.random_velocity(rng, (th, tw))
    full = (2 * th + 3, 2 * tw + 1)
    back = spectral.from_spatial(spectral.to_spatial(v, full), (th, tw))
    assert np.abs(back - v).max() <= 1e-12 * max(np.abs(v).max(), 1e-300)
