"""Procedural labeled shape datasets rendered from signed distance functions.

Each sample is the canonical shape seen through a random affine map composed
with a smooth bandlimited warp, plus clipped Gaussian pixel noise. Sample
``i`` of a dataset depends only on ``(seed, i)``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ContractError

log = logging.getLogger(__name__)

SHAPES = ("circle", "square", "triangle", "cross", "annulus")
MARGIN = 4.0


@dataclass(frozen=True)
class ShapeSpec:
    name: str
    canvas: tuple = (64, 64)
    size: float = 16.0          # outer radius / half-extent in pixels
    fill: float = 1.0
    softness: float = 0.7       # Gaussian edge blur sigma in pixels; 0 gives a hard edge
    background: float = 0.0     # intensity outside the shape

    def __post_init__(self):
        if self.name not in SHAPES:
            raise ContractError(f"unknown shape {self.name!r}; expected one of {SHAPES}")
        object.__setattr__(self, "canvas", tuple(int(n) for n in self.canvas))
        h, w = self.canvas
        if self.size <= 0 or self.softness < 0:
            raise ContractError(f"invalid size/softness for {self.name}")
        if self.size + MARGIN > min(h, w) / 2:
            raise ContractError(
                f"{self.name} of size {self.size} leaves less than {MARGIN} px margin on a {h}x{w} canvas")


@dataclass(frozen=True)
class PerturbationSpec:
    rotation: float = 0.0        # max |angle| in degrees
    translation: float = 0.0     # max shift in pixels (sampled in a disk)
    log_scale: float = 0.0       # max |log(scale)|
    warp_amplitude: float = 0.0  # max displacement of the smooth warp in pixels
    warp_cutoff: int = 3         # highest spatial frequency (cycles per canvas) of the warp
    noise: float = 0.0           # Gaussian pixel noise std (result clipped to [0, 1])

    def __post_init__(self):
        if min(self.rotation, self.translation, self.log_scale, self.warp_amplitude, self.noise) < 0:
            raise ContractError("perturbation ranges must be non-negative")
        if self.warp_cutoff < 1:
            raise ContractError("warp_cutoff must be >= 1")
        # crude bound on |Dw|: amplitude * 2*pi*cutoff / canvas_size must stay below 1 on 64 px
        if self.warp_amplitude * self.warp_cutoff * 2 * np.pi / 64.0 >= 0.9:
            raise ContractError(
                f"warp_amplitude={self.warp_amplitude} with warp_cutoff={self.warp_cutoff} "
                "can fold the grid (Jacobian not positive)")


@dataclass
class LabeledDataset:
    images: np.ndarray             # (N, H, W)
    labels: np.ndarray             # (N,) int class ids
    split: np.ndarray              # (N,) of "train" / "val" / "test"
    class_names: list = field(default_factory=list)

    def indices(self, name):
        return np.flatnonzero(self.split == name)

    def subset(self, name):
        idx = self.indices(name)
        return self.images[idx], self.labels[idx]

    @property
    def n_classes(self):
        return len(self.class_names)


# ---------------------------------------------------------------------------
# signed distances (negative inside), coordinates relative to the shape center

def _sd_circle(x, y, r):
    return np.sqrt(x * x + y * y) - r


def _sd_box(x, y, a, b):
    dx = np.abs(x) - a
    dy = np.abs(y) - b
    outside = np.sqrt(np.maximum(dx, 0.0) ** 2 + np.maximum(dy, 0.0) ** 2)
    return outside + np.minimum(np.maximum(dx, dy), 0.0)


def _sd_triangle(x, y, r):
    """Equilateral triangle with circumradius ``r``, centroid at the origin, apex up (-y)."""
    k = np.sqrt(3.0)
    half = r * k / 2.0
    px = np.abs(x) - half
    py = -y + half / k
    flip = px + k * py > 0
    px, py = (np.where(flip, (px - k * py) / 2.0, px), np.where(flip, (-k * px - py) / 2.0, py))
    px = px - np.clip(px, -2.0 * half, 0.0)
    return -np.sqrt(px * px + py * py) * np.sign(py)


def _sd_cross(x, y, a):
    arm = 0.38 * a
    return np.minimum(_sd_box(x, y, a, arm), _sd_box(x, y, arm, a))


def _coverage(sd, spec):
    if spec.softness == 0:
        return (sd < 0).astype(float)
    return ndtr(-sd / spec.softness)


def render_at(spec, x, y):
    """Intensity of the shape evaluated at canvas coordinates ``(x, y)``."""
    h, w = spec.canvas
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    px, py = x - cx, y - cy
    r = spec.size
    if spec.name == "circle":
        cov = _coverage(_sd_circle(px, py, r), spec)
    elif spec.name == "square":
        a = r / np.sqrt(2.0) * 1.1
        cov = _coverage(_sd_box(px, py, a, a), spec)
    elif spec.name == "triangle":
        cov = _coverage(_sd_triangle(px, py, r), spec)
    elif spec.name == "cross":
        cov = _coverage(_sd_cross(px, py, r), spec)
    else:  # annulus = outer disk minus inner disk
        cov = _coverage(_sd_circle(px, py, r), spec) - _coverage(_sd_circle(px, py, 0.55 * r), spec)
    return spec.background + (spec.fill - spec.background) * cov


def canonical(spec):
    """Unperturbed render of ``spec``."""
    h, w = spec.canvas
    y, x = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    return render_at(spec, x, y)


def smooth_warp(rng, shape, amplitude, cutoff):
    """Random displacement field with frequencies up to ``cutoff`` and max-norm ``amplitude``."""
    h, w = shape
    out = np.zeros((2, h, w))
    if amplitude == 0:
        return out
    y, x = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    for comp in range(2):
        for ky in range(-cutoff, cutoff + 1):
            for kx in range(0, cutoff + 1):
                if kx == 0 and ky <= 0:
                    continue
                a, b = rng.standard_normal(2) / (1.0 + kx * kx + ky * ky)
                phase = 2 * np.pi * (kx * x + ky * y)
                out[comp] += a * np.cos(phase) + b * np.sin(phase)
    peak = np.abs(out).max()
    return out * (amplitude / peak) if peak > 0 else out


def _sample_map(spec, perturb, rng, sign=1.0):
    """Source coordinates in the canonical frame for every output pixel.

    ``sign=-1`` mirrors the drawn rotation, translation and warp (antithetic draw).
    """
    h, w = spec.canvas
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    theta = np.deg2rad(rng.uniform(-perturb.rotation, perturb.rotation))
    scale = np.exp(rng.uniform(-perturb.log_scale, perturb.log_scale))
    rad = perturb.translation * np.sqrt(rng.uniform())
    ang = rng.uniform(0, 2 * np.pi)
    tx, ty = rad * np.cos(ang), rad * np.sin(ang)
    warp = smooth_warp(rng, (h, w), perturb.warp_amplitude, perturb.warp_cutoff)
    theta, tx, ty, warp = sign * theta, sign * tx, sign * ty, sign * warp
    y, x = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    # smooth warp on the output grid, then the inverse of (rotate, scale, translate)
    qx = x + warp[0] - cx - tx
    qy = y + warp[1] - cy - ty
    c, s = np.cos(theta), np.sin(theta)
    sx = (c * qx + s * qy) / scale + cx
    sy = (-s * qx + c * qy) / scale + cy
    return sx, sy, warp


def _warp_jacobian_min(warp):
    from .grid import jacobian_determinant
    return jacobian_determinant(warp).min()


def sample(specs, perturb, seed, index, max_attempts=20, mirror=False):
    """Render sample ``index``; returns ``(image, label)``.

    With ``mirror`` the geometric perturbation is the negation of the one drawn
    for ``index`` (the noise is unchanged), so a sample and its mirror average
    out to the canonical pose.
    """
    label = index % len(specs)
    spec = specs[label]
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, index, attempt])
        sx, sy, warp = _sample_map(spec, perturb, rng, -1.0 if mirror else 1.0)
        if perturb.warp_amplitude == 0 or _warp_jacobian_min(warp) > 0:
            break
        log.info("sample %d: synthetic warp folded, regenerating (attempt %d)", index, attempt + 1)
    else:
        raise ContractError(f"could not draw a positive-Jacobian warp for sample {index}")
    image = render_at(spec, sx, sy)
    if perturb.noise > 0:
        image = np.clip(image + perturb.noise * rng.standard_normal(image.shape), 0.0, 1.0)
    return image, label


def make_split(labels, seed, split=(0.7, 0.15, 0.15)):
    """Stratified train/val/test tags; ``split`` holds fractions or absolute counts."""
    labels = np.asarray(labels)
    n = len(labels)
    split = tuple(split)
    if all(isinstance(s, (int, np.integer)) for s in split) and sum(split) == n:
        fracs = np.array(split, dtype=float) / n
    else:
        fracs = np.array(split, dtype=float)
        if not np.isclose(fracs.sum(), 1.0):
            raise ContractError(f"split fractions {split} do not sum to 1")
    tags = np.empty(n, dtype="<U5")
    rng = np.random.default_rng([seed, 0x5A17])
    targets = np.round(np.cumsum(fracs) * n).astype(int)
    # deal class members round-robin so every split is stratified
    order = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)])
    interleaved = order[np.argsort(np.concatenate(
        [np.arange(np.sum(labels == c)) for c in np.unique(labels)]), kind="stable")]
    tags[interleaved[:targets[0]]] = "train"
    tags[interleaved[targets[0]:targets[1]]] = "val"
    tags[interleaved[targets[1]:]] = "test"
    return tags


def generate(specs, perturb, n, seed, split=(0.7, 0.15, 0.15)):
    """Labeled dataset of ``n`` samples cycling through ``specs`` (label = index mod len)."""
    if n < 1:
        raise ContractError("n must be >= 1")
    specs = [s if isinstance(s, ShapeSpec) else ShapeSpec(**s) for s in specs]
    images = np.empty((n,) + specs[0].canvas)
    labels = np.empty(n, dtype=int)
    for i in range(n):
        images[i], labels[i] = sample(specs, perturb, seed, i)
    tags = make_split(labels, seed, split)
    return LabeledDataset(images, labels, tags, [s.name for s in specs])


def manifest(specs, perturb, n, seed, split):
    return {
        "specs": [asdict(s) for s in specs],
        "perturbation": asdict(perturb),
        "n": n,
        "seed": seed,
        "split": list(split),
    }
