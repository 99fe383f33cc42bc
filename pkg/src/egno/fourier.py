"""Equivariant temporal convolution parameterized in Fourier space.

The discrete Fourier transform along the time axis is expressed as matrix
products with fixed cosine/sine bases, so gradients flow through the plain
matmul op. Convention: unnormalized forward transform, 1/P on the inverse.
Complex spectra are kept as paired real tensors. Directional features are
laid out with the 3 spatial coordinates *before* the channel axis, so the
per-mode kernel contraction is a batched matmul that never mixes
coordinates: each complex kernel entry multiplies whole 3-vectors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "ComplexSpectrum",
    "FourierKernel",
    "FeatureMask",
    "max_modes",
    "dft_truncate",
    "idft_pad",
    "fourier_kernel_apply",
    "init_fourier_kernel",
    "temporal_conv_forward",
]


@dataclass
class ComplexSpectrum:
    """Paired real/imaginary tensors; the mode axis leads."""

    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise T.ShapeMismatchError(
                f"ComplexSpectrum: re shape {self.re.shape} != im shape {self.im.shape}")

    @property
    def modes(self) -> int:
        return self.re.shape[0]


@dataclass
class FeatureMask:
    """Which channels the spectral update touches; the residual always runs."""

    include_h: bool = True
    include_x: bool = True
    include_v: bool = True

    @property
    def n_directional(self) -> int:
        return int(self.include_x) + int(self.include_v)


@dataclass
class FourierKernel:
    """Learnable block-diagonal spectral weights.

    m_h mixes the k invariant channels per mode; m_z mixes the directional
    channels (positions/velocities) per mode with complex scalars acting on
    3-vectors. Either block may be absent when masked out.
    """

    modes: int
    m_h: ComplexSpectrum | None
    m_z: ComplexSpectrum | None

    def named_parameters(self, prefix: str = "kernel") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.m_h is not None:
            out[f"{prefix}.m_h.re"] = self.m_h.re
            out[f"{prefix}.m_h.im"] = self.m_h.im
        if self.m_z is not None:
            out[f"{prefix}.m_z.re"] = self.m_z.re
            out[f"{prefix}.m_z.im"] = self.m_z.im
        return out


def max_modes(p: int) -> int:
    """Number of independent one-sided modes of a length-p real signal."""
    return p // 2 + 1


def init_fourier_kernel(rng: np.random.Generator, modes: int, hidden: int,
                        mask: FeatureMask, zero_update: bool = False) -> FourierKernel:
    """Gaussian spectral weights scaled by 1/(modes*width), per active block."""

    def block(width: int) -> ComplexSpectrum:
        scale = 0.0 if zero_update else 1.0 / (modes * width)
        re = rng.normal(size=(modes, width, width)) * scale
        im = rng.normal(size=(modes, width, width)) * scale
        return ComplexSpectrum(T.parameter(re), T.parameter(im))

    m_h = block(hidden) if mask.include_h else None
    m_z = block(mask.n_directional) if mask.n_directional else None
    return FourierKernel(modes=modes, m_h=m_h, m_z=m_z)


# ----------------------------------------------------------------------------
# DFT as constant matrices
# ----------------------------------------------------------------------------

def _forward_basis(p: int, modes: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(modes)[:, None]
    n = np.arange(p)[None, :]
    ang = 2.0 * np.pi * k * n / p
    return np.cos(ang), -np.sin(ang)


def _inverse_basis(p: int) -> tuple[np.ndarray, np.ndarray]:
    full = max_modes(p)
    k = np.arange(full)[None, :]
    n = np.arange(p)[:, None]
    ang = 2.0 * np.pi * k * n / p
    w = np.full(full, 2.0)
    w[0] = 1.0
    if p % 2 == 0:
        w[-1] = 1.0
    return (w / p) * np.cos(ang), -(w / p) * np.sin(ang)


def dft_truncate(seq: Tensor, modes: int) -> ComplexSpectrum:
    """One-sided real-input DFT along the leading time axis, keeping the
    lowest `modes` frequencies. Forward transform is unnormalized:
    X_k = sum_n x_n exp(-2 pi i k n / P). Any sequence length is supported.
    """
    p = seq.shape[0]
    if not 1 <= modes <= max_modes(p):
        raise ValueError(f"modes {modes} out of range [1, {max_modes(p)}] for length {p}")
    cos_b, sin_b = _forward_basis(p, modes)
    flat = T.reshape(seq, (p, -1))
    re = T.reshape(T.matmul(T.constant(cos_b), flat), (modes,) + seq.shape[1:])
    im = T.reshape(T.matmul(T.constant(sin_b), flat), (modes,) + seq.shape[1:])
    return ComplexSpectrum(re, im)


def idft_pad(spec: ComplexSpectrum, p: int) -> Tensor:
    """Inverse one-sided real DFT at length p, zero-padding missing modes.

    Applies the 1/P normalization; the imaginary parts of the DC and (for
    even p) Nyquist modes have no real-signal counterpart and are dropped.
    """
    if p < 1:
        raise ValueError(f"sequence length must be >= 1, got {p}")
    modes = spec.modes
    full = max_modes(p)
    if modes > full:
        raise ValueError(f"spectrum has {modes} modes, more than {full} for length {p}")
    cos_b, sin_b = _inverse_basis(p)
    cos_b, sin_b = cos_b[:, :modes], sin_b[:, :modes]
    tail = spec.re.shape[1:]
    re_flat = T.reshape(spec.re, (modes, -1))
    im_flat = T.reshape(spec.im, (modes, -1))
    out = T.add(T.matmul(T.constant(cos_b), re_flat), T.matmul(T.constant(sin_b), im_flat))
    return T.reshape(out, (p,) + tail)


def fourier_kernel_apply(spec: ComplexSpectrum, weights: ComplexSpectrum) -> ComplexSpectrum:
    """Per-mode complex channel mixing: out[i, ..., j] = sum_l W[i, j, l] S[i, ..., l].

    The channel axis is last; all other trailing axes of the spectrum are
    batch-like, which is what keeps 3-vector coordinates unmixed.
    """
    if spec.re.shape[-1] != weights.re.shape[-1] or spec.modes != weights.modes:
        raise T.ShapeMismatchError(
            f"kernel of shape {weights.re.shape} cannot act on spectrum of shape {spec.re.shape}")
    i = spec.modes
    tail = spec.re.shape[1:]
    width = tail[-1]
    # contract with W^T per mode so the sum runs over the last spectrum axis
    wre = _transpose_modes(weights.re)
    wim = _transpose_modes(weights.im)
    sre = T.reshape(spec.re, (i, -1, width))
    sim = T.reshape(spec.im, (i, -1, width))
    out_re = T.sub(T.matmul(sre, wre), T.matmul(sim, wim))
    out_im = T.add(T.matmul(sre, wim), T.matmul(sim, wre))
    out_width = weights.re.shape[1]
    out_shape = (i,) + tail[:-1] + (out_width,)
    return ComplexSpectrum(T.reshape(out_re, out_shape), T.reshape(out_im, out_shape))


def _transpose_modes(w: Tensor) -> Tensor:
    """Swap the two channel axes of (modes, j, l) weights via gather."""
    i, j, l = w.shape
    flat = T.reshape(w, (i * j * l,))
    idx = (np.arange(i)[:, None, None] * (j * l)
           + np.arange(j)[None, None, :] * l
           + np.arange(l)[None, :, None]).reshape(-1)
    return T.reshape(T.take(flat, idx, axis=0), (i, l, j))


# ----------------------------------------------------------------------------
# the temporal convolution layer
# ----------------------------------------------------------------------------

def temporal_conv_forward(h_seq: Tensor, x_seq: Tensor, v_seq: Tensor,
                          kernel: FourierKernel, mask: FeatureMask,
                          gated_z: bool = False) -> tuple[Tensor, Tensor, Tensor]:
    """Residual spectral convolution along the time axis.

    Inputs are (P, N, k) and (P, N, 3), or (P, B, N, k) / (P, B, N, 3) with
    an extra batch axis; the node axis is always second to last and is
    treated like batch. Positions are centered per time step before the
    spectral update and restored afterwards, which upgrades rotation
    equivariance to full SE(3). The h update passes SiLU; the directional
    update is identity unless `gated_z` turns on the norm gate.
    """
    p = h_seq.shape[0]
    if p < 2:
        raise ValueError(f"need a temporal axis of length >= 2, got {p}")
    if x_seq.shape[0] != p or v_seq.shape[0] != p:
        raise T.ShapeMismatchError(
            f"sequence lengths differ: h {h_seq.shape}, x {x_seq.shape}, v {v_seq.shape}")
    if kernel.modes > max_modes(p):
        raise ValueError(f"kernel keeps {kernel.modes} modes, more than {max_modes(p)} for P={p}")
    n_nodes = x_seq.shape[-2]

    h_out = h_seq
    if mask.include_h and kernel.m_h is not None:
        spec = dft_truncate(h_seq, kernel.modes)
        spec = fourier_kernel_apply(spec, kernel.m_h)
        h_out = T.add(h_seq, T.silu(idft_pad(spec, p)))

    x_out, v_out = x_seq, v_seq
    if mask.n_directional and kernel.m_z is not None:
        com = None
        parts = []
        if mask.include_x:
            com = T.tmean(x_seq, axis=-2, keepdims=True)
            centered = T.sub(x_seq, T.expand(com, n_nodes, axis=-2))
            parts.append(_as_channel(centered))
        if mask.include_v:
            parts.append(_as_channel(v_seq))
        z = T.concat(parts, axis=-1)  # (P, ..., 3, m)
        spec = dft_truncate(z, kernel.modes)
        spec = fourier_kernel_apply(spec, kernel.m_z)
        update = idft_pad(spec, p)
        if gated_z:
            gate = T.silu(T.l2_norm(update, axis=-2, keepdims=True))
            update = T.mul(update, T.expand(gate, 3, axis=-2))
        channel = 0
        if mask.include_x:
            x_out = T.add(x_seq, _channel(update, channel))
            channel += 1
        if mask.include_v:
            v_out = T.add(v_seq, _channel(update, channel))

    return h_out, x_out, v_out


def _as_channel(t: Tensor) -> Tensor:
    return T.reshape(t, t.shape + (1,))


def _channel(z: Tensor, c: int) -> Tensor:
    sliced = T.take(T.reshape(z, (-1, z.shape[-1])), np.array([c]), axis=1)
    return T.reshape(sliced, z.shape[:-1])
