"""Regular 2D grids: bilinear warping, its adjoint, and finite differences.

Conventions used throughout the package:

* a scalar image is a float array of shape ``(H, W)`` (row = y, column = x),
  optionally with leading batch axes;
* a vector field (velocity or displacement) has shape ``(..., 2, H, W)``
  with channel 0 the x-component and channel 1 the y-component, in pixels;
* a deformation is stored as its displacement ``u`` so that
  ``phi_inv(x) = x + u(x)``.

Sampling outside the domain clamps to the nearest edge pixel.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ContractError


def identity_displacement(shape):
    """Zero displacement field for an ``(H, W)`` domain."""
    h, w = shape
    return np.zeros((2, h, w))


def _check_field(image, u):
    if u.shape[-3] != 2 or u.shape[-2:] != image.shape[-2:]:
        raise ContractError(
            f"displacement shape {u.shape} does not match image shape {image.shape}")


def _bilinear_setup(u):
    """Clamped sample positions, integer corners and fractional weights."""
    h, w = u.shape[-2:]
    ys, xs = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    px = xs + u[..., 0, :, :]
    py = ys + u[..., 1, :, :]
    # derivative of the clamp: zero where the sample point left the domain
    inside_x = (px > 0) & (px < w - 1)
    inside_y = (py > 0) & (py < h - 1)
    px = np.clip(px, 0, w - 1)
    py = np.clip(py, 0, h - 1)
    x0 = np.minimum(np.floor(px).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(py).astype(np.intp), max(h - 2, 0))
    fx = px - x0
    fy = py - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return x0, x1, y0, y1, fx, fy, inside_x, inside_y


def _gather(image, yi, xi):
    h, w = image.shape[-2:]
    flat = np.broadcast_to(image, yi.shape[:-2] + (h, w)).reshape(yi.shape[:-2] + (h * w,))
    idx = (yi * w + xi).reshape(yi.shape[:-2] + (h * w,))
    return np.take_along_axis(flat, idx, axis=-1).reshape(yi.shape)


def warp(image, u):
    """Bilinear sample of ``image`` at ``x + u(x)`` (clamp-to-edge)."""
    image = np.asarray(image, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_field(image, u)
    x0, x1, y0, y1, fx, fy, _, _ = _bilinear_setup(u)
    i00 = _gather(image, y0, x0)
    i01 = _gather(image, y0, x1)
    i10 = _gather(image, y1, x0)
    i11 = _gather(image, y1, x1)
    return ((1 - fy) * ((1 - fx) * i00 + fx * i01)
            + fy * ((1 - fx) * i10 + fx * i11))


def warp_with_gradient(image, u):
    """Warp and also return d(warped)/du as an array shaped like ``u``."""
    image = np.asarray(image, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_field(image, u)
    x0, x1, y0, y1, fx, fy, inside_x, inside_y = _bilinear_setup(u)
    i00 = _gather(image, y0, x0)
    i01 = _gather(image, y0, x1)
    i10 = _gather(image, y1, x0)
    i11 = _gather(image, y1, x1)
    top = (1 - fx) * i00 + fx * i01
    bottom = (1 - fx) * i10 + fx * i11
    out = (1 - fy) * top + fy * bottom
    dx = ((1 - fy) * (i01 - i00) + fy * (i11 - i10)) * inside_x
    dy = (bottom - top) * inside_y
    return out, np.stack([dx, dy], axis=-3)


def splat(residual, u):
    """Adjoint of :func:`warp` with respect to the image argument.

    Each residual value is scattered to the four source pixels of its sample
    point with the same bilinear weights the warp used. ``residual`` may carry
    leading batch axes matching ``u``; the result keeps them.
    """
    residual = np.asarray(residual, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_field(residual, u)
    h, w = residual.shape[-2:]
    x0, x1, y0, y1, fx, fy, _, _ = _bilinear_setup(u)
    batch = np.broadcast_shapes(residual.shape[:-2], u.shape[:-3])
    nb = int(np.prod(batch, dtype=int))
    r = np.broadcast_to(residual, batch + (h, w)).reshape(nb, h * w)
    offset = (np.arange(nb) * (h * w))[:, None]
    out = np.zeros(nb * h * w)
    for yi, xi, wt in ((y0, x0, (1 - fy) * (1 - fx)), (y0, x1, (1 - fy) * fx),
                       (y1, x0, fy * (1 - fx)), (y1, x1, fy * fx)):
        idx = np.broadcast_to(yi * w + xi, batch + (h, w)).reshape(nb, h * w) + offset
        wts = np.broadcast_to(wt, batch + (h, w)).reshape(nb, h * w)
        out += np.bincount(idx.ravel(), weights=(wts * r).ravel(), minlength=nb * h * w)
    return out.reshape(batch + (h, w))


@lru_cache(maxsize=32)
def diff_matrix(n):
    """(n, n) matrix of :func:`diff`: central rows inside, one-sided first and last rows."""
    if n < 2:
        raise ContractError(f"finite differences need at least 2 samples, got {n}")
    d = np.zeros((n, n))
    i = np.arange(1, n - 1)
    d[i, i + 1] = 0.5
    d[i, i - 1] = -0.5
    d[0, :2] = (-1.0, 1.0)
    d[-1, -2:] = (-1.0, 1.0)
    d.flags.writeable = False
    return d


def _apply_along(mat, f, axis):
    # small dense products keep the stencil inside BLAS, which beats strided slicing here
    if axis in (-1, f.ndim - 1):
        return f @ mat.T
    if axis in (-2, f.ndim - 2):
        return np.matmul(mat, f)
    return np.moveaxis(np.moveaxis(f, axis, -1) @ mat.T, -1, axis)


def diff(f, axis):
    """Central differences in the interior, one-sided at the boundary (spacing 1)."""
    f = np.asarray(f, dtype=float)
    return _apply_along(diff_matrix(f.shape[axis]), f, axis)


def diff_adjoint(g, axis):
    """Transpose of :func:`diff` along ``axis``."""
    g = np.asarray(g, dtype=float)
    return _apply_along(diff_matrix(g.shape[axis]).T, g, axis)


def jacobian(u):
    """Jacobian of a displacement field: ``J[..., i, j, :, :] = d u_i / d x_j``."""
    u = np.asarray(u, dtype=float)
    return np.stack([np.stack([diff(u[..., i, :, :], -1), diff(u[..., i, :, :], -2)], axis=-3)
                     for i in range(2)], axis=-4)


def jacobian_determinant(u):
    """det(I + Du) of the map ``x -> x + u(x)``."""
    u = np.asarray(u, dtype=float)
    if u.shape[-3] != 2 or min(u.shape[-2:]) < 3:
        raise ContractError(f"displacement must be (..., 2, H>=3, W>=3), got {u.shape}")
    J = jacobian(u)
    return ((1 + J[..., 0, 0, :, :]) * (1 + J[..., 1, 1, :, :])
            - J[..., 0, 1, :, :] * J[..., 1, 0, :, :])


def compose(u_outer, u_inner):
    """Displacement of ``(x + u_outer) o (x + u_inner)``."""
    return u_inner + np.stack([warp(u_outer[..., 0, :, :], u_inner),
                               warp(u_outer[..., 1, :, :], u_inner)], axis=-3)


def block_average(image, block):
    """Downsample by averaging non-overlapping ``block x block`` tiles."""
    image = np.asarray(image, dtype=float)
    h, w = image.shape[-2:]
    if h % block or w % block:
        raise ContractError(f"image {h}x{w} not divisible into {block}x{block} blocks")
    return image.reshape(image.shape[:-2] + (h // block, block, w // block, block)).mean(axis=(-3, -1))


def block_average_adjoint(coarse, block):
    coarse = np.asarray(coarse, dtype=float)
    return np.repeat(np.repeat(coarse, block, axis=-2), block, axis=-1) / (block * block)
