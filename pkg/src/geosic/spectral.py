"""Bandlimited velocity fields stored as truncated Fourier coefficients.

Coefficient layout
------------------
A spectral field with truncation ``(th, tw)`` is a complex array of shape
``(..., th, tw)`` in *centered* order: index ``i`` holds frequency
``i - th // 2`` (likewise for columns). A velocity has a component axis in
front, ``(..., 2, th, tw)``, x-component first.

Only frequencies with ``|k| <= (t - 1) // 2`` on each axis are active. For an
even truncation the most negative row/column has no conjugate partner inside
the box and is held at zero, so every stored field reconstructs to a real
spatial field.

Normalization
-------------
Coefficients are Fourier-series coefficients::

    v(x, y) = sum_k c[k] * exp(2*pi*i*(kx*x/W + ky*y/H))

so ``to_spatial`` is ``H*W * ifft2`` and ``from_spatial`` is ``fft2 / (H*W)``.
Under this convention the coefficients of a pointwise product are the
discrete convolution of the coefficients, and the unit impulse at k = 0 is
the identity element of :func:`spectral_product` with scale exactly 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .errors import ContractError


def frequencies(t):
    """Integer frequencies of a centered axis of length ``t``."""
    return np.arange(t) - t // 2


def active_mask(th, tw):
    fy = np.abs(frequencies(th))[:, None] <= (th - 1) // 2
    fx = np.abs(frequencies(tw))[None, :] <= (tw - 1) // 2
    return fy & fx


def _check_trunc(trunc, full):
    th, tw = trunc
    h, w = full
    if th > h or tw > w or th < 1 or tw < 1:
        raise ContractError(f"truncation {th}x{tw} does not fit the {h}x{w} grid")


def hermitian_project(c):
    """Orthogonal projection onto fields with c[-k] = conj(c[k]) (real fields).

    Unpaired slots are zeroed. The projection is self-adjoint under the real
    inner product ``Re sum(conj(a) * b)``.
    """
    c = np.asarray(c)
    th, tw = c.shape[-2:]
    mask = active_mask(th, tw)
    # frequency -k sits at index (t - 1 - i) for odd t and (t - i) mod t for even t
    iy = (-frequencies(th)) + th // 2
    ix = (-frequencies(tw)) + tw // 2
    iy = np.where((iy >= 0) & (iy < th), iy, 0)
    ix = np.where((ix >= 0) & (ix < tw), ix, 0)
    flipped = np.conj(c[..., iy[:, None], ix[None, :]])
    return 0.5 * (c + flipped) * mask


def is_hermitian(c, rtol=1e-12):
    c = np.asarray(c)
    scale = max(np.abs(c).max(initial=0.0), 1e-300)
    return np.abs(c - hermitian_project(c)).max(initial=0.0) <= rtol * scale


# ---------------------------------------------------------------------------
# padding / truncation between a centered box and DFT-ordered full spectra

def _dft_index(t, n):
    return frequencies(t) % n


def pad(c, full):
    """Embed centered coefficients into a DFT-ordered spectrum of shape ``full``."""
    c = np.asarray(c)
    th, tw = c.shape[-2:]
    _check_trunc((th, tw), full)
    out = np.zeros(c.shape[:-2] + tuple(full), dtype=complex)
    out[..., _dft_index(th, full[0])[:, None], _dft_index(tw, full[1])[None, :]] = c
    return out


def truncate(spectrum, trunc):
    """Extract the centered ``trunc`` box from a DFT-ordered spectrum."""
    spectrum = np.asarray(spectrum)
    full = spectrum.shape[-2:]
    _check_trunc(trunc, full)
    th, tw = trunc
    return spectrum[..., _dft_index(th, full[0])[:, None], _dft_index(tw, full[1])[None, :]]


class BandTransform:
    """Exact DFT between the active band of a ``(th, tw)`` box and an ``(h, w)`` grid.

    Only the active frequencies are ever nonzero, so instead of a full FFT the
    transform is evaluated as two dense real matrix products per direction
    (rows of cos/sin samples), which is cheaper than an FFT when the band is
    small relative to the grid and keeps the work inside BLAS.
    """

    def __init__(self, th, tw, h, w):
        _check_trunc((th, tw), (h, w))
        self.trunc = (th, tw)
        self.full = (h, w)
        kmy, kmx = (th - 1) // 2, (tw - 1) // 2
        ky = np.arange(-kmy, kmy + 1)
        kx = np.arange(0, kmx + 1)
        # the active band is a contiguous block of the centered box
        self.iy = slice(th // 2 - kmy, th // 2 + kmy + 1)
        self.ix_pos = slice(tw // 2, tw // 2 + kmx + 1)
        self.ix_neg = slice(tw // 2 - kmx, tw // 2)
        self.ny, self.nx = len(ky), len(kx)
        ty = 2 * np.pi * np.outer(np.arange(h), ky) / h        # (h, ny)
        tx = 2 * np.pi * np.outer(kx, np.arange(w)) / w        # (nx, w)
        cy, sy = np.cos(ty), np.sin(ty)
        cx, sx = np.cos(tx), np.sin(tx)
        weight = np.where(kx == 0, 1.0, 2.0)[:, None]
        self.synth_y = np.block([[cy, -sy], [sy, cy]])                  # (2h, 2ny)
        self.synth_x = np.vstack([weight * cx, -weight * sx])           # (2nx, w)
        self.anal_x = np.hstack([cx.T, -sx.T])                          # (w, 2nx)
        self.anal_y = np.block([[cy.T, sy.T], [-sy.T, cy.T]])           # (2ny, 2h)

    def synthesize(self, c):
        """Real field of Hermitian coefficients ``c`` (only kx >= 0 entries are read)."""
        th, tw = self.trunc
        h, w = self.full
        lead = c.shape[:-2]
        n = int(np.prod(lead, dtype=int))
        pos = c.reshape(n, th, tw)[:, self.iy, self.ix_pos]                 # (n, ny, nx)
        x = np.concatenate([pos.real, pos.imag], axis=1)                    # (n, 2ny, nx)
        x = x.transpose(1, 0, 2).reshape(2 * self.ny, n * self.nx)
        d = self.synth_y @ x                                                # (2h, n*nx)
        d = d.reshape(2, h, n, self.nx).transpose(2, 1, 0, 3).reshape(n * h, 2 * self.nx)
        return (d @ self.synth_x).reshape(lead + (h, w))

    def analyze(self, field):
        """Unnormalized forward DFT of a real field, restricted to the active band."""
        th, tw = self.trunc
        h, w = self.full
        lead = field.shape[:-2]
        n = int(np.prod(lead, dtype=int))
        p = np.reshape(field, (n * h, w)) @ self.anal_x                      # (n*h, 2nx)
        p = p.reshape(n, h, 2, self.nx).transpose(2, 1, 0, 3).reshape(2 * h, n * self.nx)
        q = (self.anal_y @ p).reshape(2, self.ny, n, self.nx)
        pos = (q[0] + 1j * q[1]).transpose(1, 0, 2)                         # (n, ny, nx)
        out = np.zeros((n, th, tw), dtype=complex)
        out[:, self.iy, self.ix_pos] = pos
        out[:, self.iy, self.ix_neg] = np.conj(pos[:, ::-1, :0:-1])
        return out.reshape(lead + (th, tw))


@lru_cache(maxsize=64)
def band_transform(th, tw, h, w):
    return BandTransform(th, tw, h, w)


def synthesize(c, full, project=True):
    """Real spatial field of (the Hermitian part of) centered coefficients.

    Equals ``Re(H*W * ifft2(pad(c)))``. Pass ``project=False`` only when ``c``
    is already Hermitian.
    """
    c = np.asarray(c)
    if project:
        c = hermitian_project(c)
    th, tw = c.shape[-2:]
    return band_transform(th, tw, *full).synthesize(c)


def analyze(field, trunc):
    """Adjoint of :func:`synthesize`: masked, truncated unnormalized DFT of a real field."""
    field = np.asarray(field, dtype=float)
    h, w = field.shape[-2:]
    return band_transform(*trunc, h, w).analyze(field)


def to_spatial(c, full):
    """Spatial vector/scalar field on an ``full = (H, W)`` grid."""
    return synthesize(c, full)


def from_spatial(field, trunc):
    """Low-pass coefficients of a real field; inverse of :func:`to_spatial` on bandlimited input."""
    h, w = np.shape(field)[-2:]
    return analyze(field, trunc) / (h * w)


def padded_size(t):
    """Anti-aliasing grid size for products of two ``t``-truncated fields."""
    return sfft.next_fast_len(2 * t - 1)


def spectral_product(a, b, kind="convolution", padded=None):
    """Truncated product of two centered coefficient arrays.

    ``convolution``: ``out[k] = sum_q a[q] * b[k - q]`` (coefficients of the
    pointwise product ``a(x) b(x)``). ``correlation``: ``out[k] = sum_q
    conj(a[q]) * b[k + q]`` (coefficients of ``conj(a(x)) b(x)``). Both are
    evaluated on a zero-padded grid of at least ``2t - 1`` per axis, so no
    aliased frequency lands inside the retained box. Works for arbitrary
    (non-Hermitian) inputs.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape[-2:] != b.shape[-2:]:
        raise ContractError(f"truncation mismatch {a.shape[-2:]} vs {b.shape[-2:]}")
    th, tw = a.shape[-2:]
    ph, pw = padded or (padded_size(th), padded_size(tw))
    if ph < 2 * th - 1 or pw < 2 * tw - 1:
        raise ContractError(f"padded grid {ph}x{pw} too small for truncation {th}x{tw}")
    scale = ph * pw
    fa = sfft.ifft2(pad(a, (ph, pw)), axes=(-2, -1)) * scale
    fb = sfft.ifft2(pad(b, (ph, pw)), axes=(-2, -1)) * scale
    if kind == "convolution":
        prod = fa * fb
    elif kind == "correlation":
        prod = np.conj(fa) * fb
    else:
        raise ContractError(f"unknown product kind {kind!r}")
    return truncate(sfft.fft2(prod, axes=(-2, -1)) / scale, (th, tw))


@dataclass(frozen=True)
class SobolevOperator:
    """L = (-alpha * Laplacian + Id)^power with the discrete 5-point Laplacian."""

    alpha: float = 3.0
    power: int = 3
    full_shape: tuple = (64, 64)

    def __post_init__(self):
        if self.alpha < 0 or self.power < 1:
            raise ContractError(f"invalid Sobolev operator alpha={self.alpha}, power={self.power}")
        object.__setattr__(self, "full_shape", tuple(int(n) for n in self.full_shape))

    def multiplier(self, trunc):
        """Lambda(k) on the centered truncation box, always >= 1."""
        h, w = self.full_shape
        _check_trunc(trunc, (h, w))
        ky = frequencies(trunc[0])[:, None]
        kx = frequencies(trunc[1])[None, :]
        lap = (2 - 2 * np.cos(2 * np.pi * kx / w)) + (2 - 2 * np.cos(2 * np.pi * ky / h))
        return (self.alpha * lap + 1.0) ** self.power


def apply_L(op, v):
    return v * op.multiplier(np.shape(v)[-2:])


def apply_K(op, m):
    return m / op.multiplier(np.shape(m)[-2:])


def derivative_multipliers(trunc, full):
    """Central-difference multipliers ``i*sin(2*pi*k/N)`` for d/dx and d/dy."""
    h, w = full
    ky = frequencies(trunc[0])[:, None]
    kx = frequencies(trunc[1])[None, :]
    dx = np.broadcast_to(1j * np.sin(2 * np.pi * kx / w), trunc)
    dy = np.broadcast_to(1j * np.sin(2 * np.pi * ky / h), trunc)
    return np.stack([dx, dy])


def inner(a, b):
    """Real inner product summed over component and frequency axes (batch kept)."""
    return np.real(np.conj(a) * b).sum(axis=(-3, -2, -1))


class EPDiff:
    """Right-hand side of the bandlimited EPDiff equation and its vector-Jacobian product.

    For a velocity ``v`` with momentum ``m = L v`` the right-hand side is::

        dv/dt = -K[ (Dv)^T m + div(m (x) v) ]

    component-wise ``((Dv)^T m)_i = sum_j d_i v_j * m_j`` and
    ``div(m (x) v)_i = sum_j d_j (m_i v_j)``. Each product is formed on a
    zero-padded real grid and truncated back to the active box.
    """

    def __init__(self, op, trunc):
        self.op = op
        self.trunc = tuple(trunc)
        _check_trunc(self.trunc, op.full_shape)
        self.lam = op.multiplier(self.trunc)
        self.d = derivative_multipliers(self.trunc, op.full_shape)
        self.mask = active_mask(*self.trunc)
        self.padded = (padded_size(self.trunc[0]), padded_size(self.trunc[1]))
        self.scale = float(self.padded[0] * self.padded[1])

    def fields(self, v):
        """Spatial samples on the padded grid: velocity, momentum and velocity Jacobian.

        ``G[..., i, j, :, :]`` holds ``d_i v_j``. ``v`` must be Hermitian.
        """
        m = v * self.lam
        grads = self.d[:, None] * v[..., None, :, :, :]
        stacked = np.concatenate([v, m, grads.reshape(v.shape[:-3] + (4,) + self.trunc)], axis=-3)
        f = synthesize(stacked, self.padded, project=False)
        V = f[..., 0:2, :, :]
        M = f[..., 2:4, :, :]
        G = f[..., 4:8, :, :].reshape(f.shape[:-3] + (2, 2) + self.padded)
        return V, M, G

    def __call__(self, v, fields=None):
        V, M, G = fields if fields is not None else self.fields(v)
        W = G[..., :, 0, :, :] * M[..., 0:1, :, :] + G[..., :, 1, :, :] * M[..., 1:2, :, :]
        Q = M[..., :, None, :, :] * V[..., None, :, :, :]          # Q_ij = m_i v_j
        prods = np.concatenate([W, Q.reshape(Q.shape[:-4] + (4,) + self.padded)], axis=-3)
        spec = analyze(prods, self.trunc) / self.scale
        A = spec[..., 0:2, :, :]
        P = spec[..., 2:6, :, :].reshape(spec.shape[:-3] + (2, 2) + self.trunc)
        B = self.d[0] * P[..., :, 0, :, :] + self.d[1] * P[..., :, 1, :, :]
        return -(A + B) / self.lam

    def vjp(self, v, gbar, fields=None):
        """Cotangent of ``v`` given the cotangent ``gbar`` of ``self(v)``."""
        V, M, G = fields if fields is not None else self.fields(v)
        y = -hermitian_project(gbar) / self.lam
        qy = np.conj(self.d)[None, :] * y[..., :, None, :, :]          # conj(d_j) y_i
        cot = synthesize(np.concatenate([y, qy.reshape(y.shape[:-3] + (4,) + self.trunc)], axis=-3),
                         self.padded, project=False) / self.scale
        Wbar = cot[..., 0:2, :, :]
        Qbar = cot[..., 2:6, :, :].reshape(cot.shape[:-3] + (2, 2) + self.padded)
        Gbar = Wbar[..., :, None, :, :] * M[..., None, :, :, :]
        Mbar = (Wbar[..., 0:1, :, :] * G[..., 0, :, :, :] + Wbar[..., 1:2, :, :] * G[..., 1, :, :, :]
                + Qbar[..., :, 0, :, :] * V[..., 0:1, :, :] + Qbar[..., :, 1, :, :] * V[..., 1:2, :, :])
        Vbar = Qbar[..., 0, :, :, :] * M[..., 0:1, :, :] + Qbar[..., 1, :, :, :] * M[..., 1:2, :, :]
        back = analyze(np.concatenate([Vbar, Mbar, Gbar.reshape(Gbar.shape[:-4] + (4,) + self.padded)],
                                      axis=-3), self.trunc)
        gb = back[..., 4:8, :, :].reshape(back.shape[:-3] + (2, 2) + self.trunc)
        dc = np.conj(self.d)
        return (back[..., 0:2, :, :] + self.lam * back[..., 2:4, :, :]
                + dc[0] * gb[..., 0, :, :, :] + dc[1] * gb[..., 1, :, :, :])


def spectral_gradient_terms(v, op):
    """EPDiff right-hand side dv/dt for a (batch of) spectral velocities."""
    v = hermitian_project(np.asarray(v, dtype=complex))
    return EPDiff(op, v.shape[-2:])(v)


def random_velocity(rng, trunc, scale=1.0, decay=1.5, batch=()):
    """Random Hermitian-symmetric velocity with power-law spectral decay."""
    th, tw = trunc
    shape = tuple(batch) + (2, th, tw)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k2 = frequencies(th)[:, None] ** 2 + frequencies(tw)[None, :] ** 2
    c = c / (1.0 + k2) ** (decay / 2)
    return scale * hermitian_project(c)
