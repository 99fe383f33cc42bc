"""Spectral machinery: DFT contracts against hand values and numpy's FFT,
kernel products, and the equivariance of the temporal convolution layer."""
import numpy as np
import pytest

from egno import tensor as T
from egno.fourier import (ComplexSpectrum, FeatureMask, dft_truncate,
                          fourier_kernel_apply, idft_pad, init_fourier_kernel,
                          max_modes, temporal_conv_forward)
from egno.geometry import random_rotation


def _spec_of(arr_re, arr_im):
    return ComplexSpectrum(T.constant(arr_re), T.constant(arr_im))


def test_constant_signal_is_pure_dc():
    spec = dft_truncate(T.constant(np.ones((4, 1))), 2)
    assert np.allclose(spec.re.data[:, 0], [4.0, 0.0], atol=1e-12)
    assert np.allclose(spec.im.data[:, 0], [0.0, 0.0], atol=1e-12)


def test_hand_evaluated_alternating_signal():
    # X_1 of [0, 1, 0, -1] is -2i by direct evaluation of the DFT sum
    spec = dft_truncate(T.constant(np.array([[0.0], [1.0], [0.0], [-1.0]])), 2)
    assert abs(spec.re.data[0, 0]) < 1e-12 and abs(spec.im.data[0, 0]) < 1e-12
    assert abs(spec.re.data[1, 0]) < 1e-12
    assert abs(spec.im.data[1, 0] - (-2.0)) < 1e-12


@pytest.mark.parametrize("p", list(range(2, 17)))
def test_full_mode_round_trip(p):
    rng = np.random.default_rng(p)
    seq = rng.normal(size=(p, 3))
    back = idft_pad(dft_truncate(T.constant(seq), max_modes(p)), p)
    assert np.max(np.abs(back.data - seq)) < 1e-10


@pytest.mark.parametrize("p", [3, 5, 8, 12])
def test_forward_transform_matches_numpy_rfft(p):
    rng = np.random.default_rng(100 + p)
    seq = rng.normal(size=(p, 4))
    modes = max_modes(p)
    spec = dft_truncate(T.constant(seq), modes)
    ref = np.fft.rfft(seq, axis=0)
    assert np.max(np.abs(spec.re.data - ref.real)) < 1e-10
    assert np.max(np.abs(spec.im.data - ref.imag)) < 1e-10


@pytest.mark.parametrize("p", [4, 7, 10])
def test_inverse_matches_numpy_irfft(p):
    rng = np.random.default_rng(200 + p)
    modes = max_modes(p)
    re = rng.normal(size=(modes, 2))
    im = rng.normal(size=(modes, 2))
    out = idft_pad(_spec_of(re, im), p)
    ref = np.fft.irfft(re + 1j * im, n=p, axis=0)
    assert np.max(np.abs(out.data - ref)) < 1e-10


def test_dc_only_spectrum_inverts_to_constant():
    p, c = 6, 2.5
    re = np.zeros((1, 1)); re[0, 0] = p * c
    out = idft_pad(_spec_of(re, np.zeros((1, 1))), p)
    assert np.allclose(out.data, c, atol=1e-12)


def test_zero_spectrum_inverts_to_zero():
    out = idft_pad(_spec_of(np.zeros((2, 3)), np.zeros((2, 3))), 5)
    assert np.array_equal(out.data, np.zeros((5, 3)))


def test_inverse_is_linear():
    rng = np.random.default_rng(8)
    p, modes = 7, 3
    s1_re, s1_im = rng.normal(size=(modes, 2)), rng.normal(size=(modes, 2))
    s2_re, s2_im = rng.normal(size=(modes, 2)), rng.normal(size=(modes, 2))
    a = 2.75
    combined = idft_pad(_spec_of(a * s1_re + s2_re, a * s1_im + s2_im), p)
    separate = a * idft_pad(_spec_of(s1_re, s1_im), p).data + idft_pad(_spec_of(s2_re, s2_im), p).data
    assert np.max(np.abs(combined.data - separate)) < 1e-12


def test_mode_range_validation():
    with pytest.raises(ValueError):
        dft_truncate(T.constant(np.ones((4, 1))), 4)  # max is 3 for P=4
    with pytest.raises(ValueError):
        idft_pad(_spec_of(np.zeros((4, 1)), np.zeros((4, 1))), 4)
    with pytest.raises(ValueError):
        idft_pad(_spec_of(np.zeros((1, 1)), np.zeros((1, 1))), 0)


def test_identity_kernel_is_passthrough():
    rng = np.random.default_rng(11)
    modes, width = 3, 4
    spec = _spec_of(rng.normal(size=(modes, width)), rng.normal(size=(modes, width)))
    eye = np.broadcast_to(np.eye(width), (modes, width, width)).copy()
    w = _spec_of(eye, np.zeros_like(eye))
    out = fourier_kernel_apply(spec, w)
    assert np.max(np.abs(out.re.data - spec.re.data)) < 1e-12
    assert np.max(np.abs(out.im.data - spec.im.data)) < 1e-12


def test_zero_kernel_zeroes_spectrum():
    rng = np.random.default_rng(12)
    spec = _spec_of(rng.normal(size=(2, 2, 3)), rng.normal(size=(2, 2, 3)))
    zero = _spec_of(np.zeros((2, 3, 3)), np.zeros((2, 3, 3)))
    out = fourier_kernel_apply(spec, zero)
    assert np.array_equal(out.re.data, np.zeros_like(out.re.data))
    assert np.array_equal(out.im.data, np.zeros_like(out.im.data))


def test_kernel_scaling_is_linear():
    rng = np.random.default_rng(13)
    spec = _spec_of(rng.normal(size=(2, 4)), rng.normal(size=(2, 4)))
    w_re, w_im = rng.normal(size=(2, 4, 4)), rng.normal(size=(2, 4, 4))
    base = fourier_kernel_apply(spec, _spec_of(w_re, w_im))
    scaled = fourier_kernel_apply(spec, _spec_of(3.0 * w_re, 3.0 * w_im))
    assert np.max(np.abs(scaled.re.data - 3.0 * base.re.data)) < 1e-12
    assert np.max(np.abs(scaled.im.data - 3.0 * base.im.data)) < 1e-12


def test_kernel_against_direct_complex_product():
    rng = np.random.default_rng(14)
    modes, width = 3, 5
    s = rng.normal(size=(modes, width)) + 1j * rng.normal(size=(modes, width))
    w = rng.normal(size=(modes, width, width)) + 1j * rng.normal(size=(modes, width, width))
    out = fourier_kernel_apply(_spec_of(s.real, s.imag), _spec_of(w.real, w.imag))
    ref = np.einsum("ijl,il->ij", w, s)
    assert np.max(np.abs(out.re.data - ref.real)) < 1e-12
    assert np.max(np.abs(out.im.data - ref.imag)) < 1e-12


def _conv_inputs(rng, p=5, n=4, k=6):
    return (T.constant(rng.normal(size=(p, n, k))),
            rng.normal(size=(p, n, 3)), rng.normal(size=(p, n, 3)))


def test_zero_kernel_conv_is_residual_only():
    rng = np.random.default_rng(20)
    mask = FeatureMask()
    kern = init_fourier_kernel(rng, 2, 6, mask, zero_update=True)
    h, x, v = _conv_inputs(rng)
    ho, xo, vo = temporal_conv_forward(h, T.constant(x), T.constant(v), kern, mask)
    assert np.array_equal(xo.data, x)
    assert np.array_equal(vo.data, v)
    assert np.array_equal(ho.data, h.data)  # h + silu(0) == h exactly


def test_conv_rotation_and_translation_equivariance():
    rng = np.random.default_rng(21)
    mask = FeatureMask()
    worst_rot, worst_h = 0.0, 0.0
    for trial in range(25):
        kern = init_fourier_kernel(np.random.default_rng(trial), 2, 6, mask)
        h, x, v = _conv_inputs(np.random.default_rng(500 + trial))
        rot = random_rotation(trial).R
        mu = np.random.default_rng(900 + trial).normal(size=3)
        ho, xo, vo = temporal_conv_forward(h, T.constant(x), T.constant(v), kern, mask)
        ht, xt, vt = temporal_conv_forward(h, T.constant(x @ rot.T + mu),
                                           T.constant(v @ rot.T), kern, mask)
        worst_rot = max(worst_rot,
                        np.max(np.abs(xt.data - (xo.data @ rot.T + mu))),
                        np.max(np.abs(vt.data - vo.data @ rot.T)))
        worst_h = max(worst_h, np.max(np.abs(ht.data - ho.data)))
    assert worst_rot < 1e-9
    assert worst_h < 1e-9


def test_mask_h_only_passes_directional_through():
    rng = np.random.default_rng(22)
    mask = FeatureMask(include_h=True, include_x=False, include_v=False)
    kern = init_fourier_kernel(rng, 2, 6, mask)
    h, x, v = _conv_inputs(rng)
    ho, xo, vo = temporal_conv_forward(h, T.constant(x), T.constant(v), kern, mask)
    assert np.array_equal(xo.data, x)
    assert np.array_equal(vo.data, v)
    assert not np.array_equal(ho.data, h.data)


def test_spectral_truncation_is_projection():
    rng = np.random.default_rng(23)
    p, modes = 6, 2
    seq = rng.normal(size=(p, 3))
    once = idft_pad(dft_truncate(T.constant(seq), modes), p).data
    twice = idft_pad(dft_truncate(T.constant(once), modes), p).data
    assert np.max(np.abs(twice - once)) < 1e-13


def test_spatial_axis_permutation_commutes():
    rng = np.random.default_rng(24)
    mask = FeatureMask()
    kern = init_fourier_kernel(rng, 2, 6, mask)
    h, x, v = _conv_inputs(rng)
    perm = [2, 0, 1]
    ho, xo, vo = temporal_conv_forward(h, T.constant(x), T.constant(v), kern, mask)
    hp, xp, vp = temporal_conv_forward(h, T.constant(x[..., perm]),
                                       T.constant(v[..., perm]), kern, mask)
    assert np.max(np.abs(xp.data - xo.data[..., perm])) < 1e-12
    assert np.max(np.abs(vp.data - vo.data[..., perm])) < 1e-12


def test_single_step_sequence_rejected():
    rng = np.random.default_rng(25)
    mask = FeatureMask()
    kern = init_fourier_kernel(rng, 1, 6, mask)
    with pytest.raises(ValueError, match=">= 2"):
        temporal_conv_forward(T.constant(rng.normal(size=(1, 4, 6))),
                              T.constant(rng.normal(size=(1, 4, 3))),
                              T.constant(rng.normal(size=(1, 4, 3))), kern, mask)


def test_gated_nonlinearity_keeps_equivariance():
    rng = np.random.default_rng(26)
    mask = FeatureMask()
    kern = init_fourier_kernel(rng, 2, 6, mask)
    h, x, v = _conv_inputs(rng)
    rot = random_rotation(3).R
    ho, xo, vo = temporal_conv_forward(h, T.constant(x), T.constant(v), kern, mask,
                                       gated_z=True)
    ht, xt, vt = temporal_conv_forward(h, T.constant(x @ rot.T), T.constant(v @ rot.T),
                                       kern, mask, gated_z=True)
    assert np.max(np.abs(xt.data - xo.data @ rot.T)) < 1e-9
    assert np.max(np.abs(vt.data - vo.data @ rot.T)) < 1e-9


def test_conv_gradients_flow_to_kernel():
    rng = np.random.default_rng(27)
    mask = FeatureMask()
    kern = init_fourier_kernel(rng, 2, 4, mask)
    h, x, v = _conv_inputs(rng, k=4)

    def loss():
        ho, xo, vo = temporal_conv_forward(h, T.constant(x), T.constant(v), kern, mask)
        return T.add(T.tmean(T.square(xo)), T.tmean(T.square(ho)))

    err = T.grad_check_params(loss, kern.named_parameters("kern"), eps=1e-5)
    assert err < 1e-6
