"""Independent reference implementations used only by the tests.

They share no helpers with the package: loops, numpy.fft on the full grid,
and periodic central differences via np.roll.
"""
import numpy as np


def centered_freqs(t):
    return [i - t // 2 for i in range(t)]


def brute_convolution(a, b, kind="convolution"):
    th, tw = a.shape
    fy, fx = centered_freqs(th), centered_freqs(tw)
    index = {(ky, kx): (i, j) for i, ky in enumerate(fy) for j, kx in enumerate(fx)}
    out = np.zeros_like(a, dtype=complex)
    for (ky, kx), (i, j) in index.items():
        acc = 0j
        for (qy, qx), (p, q) in index.items():
            if kind == "convolution":
                other = index.get((ky - qy, kx - qx))
                if other is not None:
                    acc += a[p, q] * b[other]
            else:
                other = index.get((ky + qy, kx + qx))
                if other is not None:
                    acc += np.conj(a[p, q]) * b[other]
        out[i, j] = acc
    return out


def full_spectrum(c, shape):
    """Place centered coefficients into a DFT-ordered array (loop form)."""
    h, w = shape
    th, tw = c.shape[-2:]
    out = np.zeros(c.shape[:-2] + (h, w), dtype=complex)
    for i, ky in enumerate(centered_freqs(th)):
        for j, kx in enumerate(centered_freqs(tw)):
            out[..., ky % h, kx % w] = c[..., i, j]
    return out


def crop_spectrum(s, trunc):
    h, w = s.shape[-2:]
    th, tw = trunc
    out = np.zeros(s.shape[:-2] + (th, tw), dtype=complex)
    for i, ky in enumerate(centered_freqs(th)):
        for j, kx in enumerate(centered_freqs(tw)):
            out[..., i, j] = s[..., ky % h, kx % w]
    return out


def spatial(c, shape):
    h, w = shape
    return np.fft.ifft2(full_spectrum(c, shape)) * (h * w)


def band(field, trunc):
    h, w = field.shape[-2:]
    return crop_spectrum(np.fft.fft2(field) / (h * w), trunc)


def sobolev(shape, alpha=3.0, power=3):
    h, w = shape
    ky = np.fft.fftfreq(h) * h
    kx = np.fft.fftfreq(w) * w
    lap = (2 - 2 * np.cos(2 * np.pi * kx[None, :] / w)) + (2 - 2 * np.cos(2 * np.pi * ky[:, None] / h))
    return (alpha * lap + 1) ** power


def cdiff(f, axis):
    return 0.5 * (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis))


def dense_epdiff_rhs(c, shape, alpha=3.0, power=3):
    """-K[(Dv)^T m + div(m v^T)] evaluated on the full grid, then band-limited."""
    lam = sobolev(shape, alpha, power)
    v = [np.real(spatial(c[i], shape)) for i in range(2)]
    m = [np.real(np.fft.ifft2(np.fft.fft2(v[i]) * lam)) for i in range(2)]
    d = [lambda f: cdiff(f, 1), lambda f: cdiff(f, 0)]          # x then y
    rhs = []
    for i in range(2):
        term = sum(d[i](v[j]) * m[j] for j in range(2)) + sum(d[j](m[i] * v[j]) for j in range(2))
        rhs.append(-np.real(np.fft.ifft2(np.fft.fft2(term) / lam)))
    trunc = c.shape[-2:]
    out = np.stack([band(r, trunc) for r in rhs])
    # keep only the frequencies the band-limited model represents
    th, tw = trunc
    fy = np.abs(np.array(centered_freqs(th)))[:, None] <= (th - 1) // 2
    fx = np.abs(np.array(centered_freqs(tw)))[None, :] <= (tw - 1) // 2
    return out * (fy & fx)


def bilinear(image, px, py):
    """Pointwise bilinear sample with edge clamping (scalar loop)."""
    h, w = image.shape
    px = min(max(px, 0.0), w - 1.0)
    py = min(max(py, 0.0), h - 1.0)
    x0 = min(int(np.floor(px)), w - 2)
    y0 = min(int(np.floor(py)), h - 2)
    fx, fy = px - x0, py - y0
    return ((1 - fy) * ((1 - fx) * image[y0, x0] + fx * image[y0, x0 + 1])
            + fy * ((1 - fx) * image[y0 + 1, x0] + fx * image[y0 + 1, x0 + 1]))


def straight_line_energy(atlas, target, c, steps=10, sigma=0.02, alpha=3.0, power=3):
    """Matching energy by the plainest possible route (full-grid FFTs and loops)."""
    shape = atlas.shape
    h, w = shape
    lam_full = sobolev(shape, alpha, power)
    th, tw = c.shape[-2:]
    lam = crop_spectrum(np.broadcast_to(lam_full, (h, w)).astype(complex), (th, tw)).real
    # Hermitian part of the input, active band only
    fy = np.abs(np.array(centered_freqs(th)))[:, None] <= (th - 1) // 2
    fx = np.abs(np.array(centered_freqs(tw)))[None, :] <= (tw - 1) // 2
    cc = band(np.real(spatial(c, shape)), (th, tw)) * (fy & fx)
    v = cc.copy()
    u = np.zeros((2, h, w))
    dt = 1.0 / steps
    for _ in range(steps):
        V = np.stack([np.real(spatial(v[i], shape)) for i in range(2)])
        grad = lambda f, ax: np.gradient(f, axis=ax)          # central inside, one-sided at edges
        adv = np.stack([V[i] + grad(u[i], 1) * V[0] + grad(u[i], 0) * V[1] for i in range(2)])
        # rhs with the padded-free dense oracle, band-limited
        v = v + dt * dense_epdiff_rhs(v, shape, alpha, power)
        u = u - dt * adv
    warped = np.empty(shape)
    for yy in range(h):
        for xx in range(w):
            warped[yy, xx] = bilinear(atlas, xx + u[0, yy, xx], yy + u[1, yy, xx])
    data = ((warped - target) ** 2).sum() / sigma ** 2
    reg = (lam * np.abs(cc) ** 2).sum()
    return data + reg
