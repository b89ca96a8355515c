"""Atlas building by alternating descent over initial velocities and the template.

Velocity updates use the Sobolev-preconditioned direction ``-K grad`` (the
gradient in the metric the regularizer defines), with a per-image step that
grows after each accepted step and is halved on rejection. The atlas update
is a Jacobi-preconditioned gradient step: the gradient divided by the splat
mass each atlas pixel receives.
"""
from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from . import grid, io
from .errors import ContractError, DivergenceError
from .geodesic import Energy, ShootingConfig, energy_gradient, geodesic_energy, integrate_epdiff
from .spectral import apply_K, hermitian_project, synthesize

MAX_HALVINGS = 10
GROWTH = 1.5


@dataclass(frozen=True)
class AtlasConfig:
    outer_iters: int = 50
    v_steps: int = 5
    atlas_steps: int = 1
    v_step: float = 1.0        # first velocity step, as max spatial change in pixels
    atlas_step: float = 1.0    # multiplier on the Jacobi-preconditioned atlas gradient
    trunc: tuple = (16, 16)
    tol: float = 1e-6
    patience: int = 3
    shooting: ShootingConfig = field(default_factory=ShootingConfig)

    def __post_init__(self):
        object.__setattr__(self, "trunc", tuple(int(t) for t in self.trunc))
        if min(self.outer_iters, self.v_steps, self.atlas_steps) < 1:
            raise ContractError("outer_iters, v_steps and atlas_steps must be >= 1")
        if not (self.v_step > 0 and self.atlas_step > 0):
            raise ContractError("step sizes must be positive")


@dataclass
class AtlasModel:
    class_id: int
    atlas: np.ndarray                 # (H, W)
    velocities: np.ndarray            # (N, 2, th, tw) complex
    energy_history: list = field(default_factory=list)   # Energy of the total per outer iteration

    def save(self, path):
        os.makedirs(os.path.join(path, "velocities"), exist_ok=True)
        io.write_gsf(self.atlas, os.path.join(path, "atlas.gsf"))
        for n, v in enumerate(self.velocities):
            io.write_gsf(velocity_to_real(v), os.path.join(path, "velocities", f"{n:03d}.gsf"))
        with open(os.path.join(path, "energy.csv"), "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["iteration", "data_term", "reg_term", "total"])
            for it, e in enumerate(self.energy_history):
                out.writerow([it, repr(float(e.data)), repr(float(e.reg)), repr(float(e.total))])
        with open(os.path.join(path, "class_id"), "w") as fh:
            fh.write(f"{self.class_id}\n")

    @classmethod
    def load(cls, path):
        atlas = io.read_gsf(os.path.join(path, "atlas.gsf")).astype(float)
        vdir = os.path.join(path, "velocities")
        names = sorted(os.listdir(vdir))
        velocities = np.stack([velocity_from_real(io.read_gsf(os.path.join(vdir, n))) for n in names])
        history = []
        with open(os.path.join(path, "energy.csv")) as fh:
            for row in csv.DictReader(fh):
                history.append(Energy(float(row["total"]), float(row["data_term"]), float(row["reg_term"])))
        with open(os.path.join(path, "class_id")) as fh:
            class_id = int(fh.read())
        return cls(class_id, atlas, velocities, history)


def velocity_to_real(v):
    """(2, th, tw) complex -> (2, 2, th, tw) real (component, re/im, ky, kx)."""
    return np.stack([v.real, v.imag], axis=-3)


def velocity_from_real(r):
    r = np.asarray(r, dtype=float)
    return r[..., 0, :, :] + 1j * r[..., 1, :, :]


# ---------------------------------------------------------------------------
# velocity descent

def _forward(atlas, targets, v, cfg):
    """Energies and final deformations for a batch of velocities."""
    traj = integrate_epdiff(v, cfg)
    resid = grid.warp(atlas, traj.deformation) - targets
    data = (resid ** 2).sum(axis=(-2, -1)) / cfg.sigma ** 2
    reg = geodesic_energy(v, cfg.operator)
    return data + reg, data, reg, traj.deformation


def _trial(atlas, targets, v, cfg, fallback):
    """Energies and stored trajectories of trial velocities.

    If the batch diverges, images are retried one at a time; those that still
    diverge get infinite energy and keep the ``fallback`` trajectory entries.
    """
    def run(a, t, vv):
        with np.errstate(over="ignore", invalid="ignore"):
            traj = integrate_epdiff(vv, cfg, keep_states=True)
            data = ((grid.warp(a, traj.deformation) - t) ** 2).sum(axis=(-2, -1)) / cfg.sigma ** 2
        return data + geodesic_energy(vv, cfg.operator), traj

    try:
        return run(atlas, targets, v)
    except DivergenceError:
        total = np.full(len(v), np.inf)
        traj = fallback()
        for i in range(len(v)):
            try:
                t, ti = run(atlas, targets[i:i + 1], v[i:i + 1])
            except DivergenceError:
                continue
            total[i] = t[0]
            traj.put([i], ti)
        return total, traj


class VelocityDescent:
    """Batched preconditioned gradient descent on per-image initial velocities.

    Holds the per-image step lengths so that descent can be resumed across
    outer iterations (and rounds) without restarting the step-size search,
    and the stored forward pass of the current velocities, so each gradient
    only costs a backward sweep.
    """

    def __init__(self, cfg, v0, eta=None, step=1.0):
        self.cfg = cfg
        self.v = hermitian_project(np.array(v0, dtype=complex))
        self.eta = np.full(len(self.v), np.nan) if eta is None else np.array(eta, dtype=float)
        self.step = step
        self.traj = None

    @property
    def trajectory(self):
        if self.traj is None:
            self.traj = integrate_epdiff(self.v, self.cfg, keep_states=True)
        return self.traj

    def run(self, atlas, targets, steps):
        """``steps`` descent steps; returns the per-step energy trace ``(steps + 1, N)``."""
        cfg = self.cfg
        n = len(self.v)
        trace = np.empty((steps + 1, n))
        energy = None
        for it in range(steps):
            g, _, e = energy_gradient(atlas, targets, self.v, cfg, trajectory=self.trajectory)
            energy = e.total.copy()
            if it == 0:
                trace[0] = energy
            direction = -apply_K(cfg.operator, g)
            spatial = np.abs(synthesize(direction, cfg.shape, project=False)).max(axis=(-3, -2, -1))
            live = spatial > 0
            fresh = live & ~np.isfinite(self.eta)
            self.eta[fresh] = self.step / spatial[fresh]
            todo = np.flatnonzero(live)
            eta = self.eta.copy()
            for _ in range(MAX_HALVINGS + 1):
                if len(todo) == 0:
                    break
                trial = self.v[todo] + eta[todo, None, None, None] * direction[todo]
                total, traj = _trial(atlas, targets[todo], trial, cfg,
                                     lambda: self.trajectory.take(todo))
                ok = total < energy[todo]
                idx = todo[ok]
                self.v[idx] = trial[ok]
                self.traj.put(idx, traj.take(ok))
                energy[idx] = total[ok]
                self.eta[idx] = eta[idx] * GROWTH
                todo = todo[~ok]
                eta[todo] *= 0.5
            # no decrease even at the smallest step: stay put, retry from that step next time
            self.eta[todo] = eta[todo]
            if not np.isfinite(energy).all():
                raise DivergenceError("energy is not finite even at the smallest step", step=it)
            trace[it + 1] = energy
        if steps == 0:
            trace[0] = _forward(atlas, targets, self.v, cfg)[0]
        return trace


def register(atlas, target, init=None, steps=10, step_size=1.0, cfg=None, trunc=(16, 16)):
    """Register ``atlas`` to ``target`` (or a batch of targets).

    Returns ``(v0, trace)``; ``trace[s]`` is the matching energy after ``s`` steps.
    """
    cfg = cfg or ShootingConfig()
    target = np.asarray(target, dtype=float)
    single = target.ndim == 2
    targets = target[None] if single else target
    if init is None:
        init = np.zeros((len(targets), 2) + tuple(trunc), dtype=complex)
    init = np.asarray(init, dtype=complex)
    if init.ndim == 3:
        init = np.broadcast_to(init, (len(targets),) + init.shape)
    opt = VelocityDescent(cfg, init, step=step_size)
    trace = opt.run(np.asarray(atlas, dtype=float), targets, steps)
    if single:
        return opt.v[0], trace[:, 0]
    return opt.v, trace


# ---------------------------------------------------------------------------
# atlas building

def canonical_order(images):
    """Permutation sorting images by a content hash (ties broken by bytes)."""
    keys = [hashlib.sha256(np.ascontiguousarray(im, dtype=float).tobytes()).digest() for im in images]
    return np.array(sorted(range(len(images)), key=lambda i: keys[i]), dtype=int)


def _atlas_step(atlas, targets, u, reg, cfg, step):
    """One Jacobi-preconditioned descent step on the atlas with backtracking."""
    inv_var = 1.0 / cfg.sigma ** 2
    resid = grid.warp(atlas, u) - targets
    data = (resid ** 2).sum() * inv_var
    grad = grid.splat(2.0 * inv_var * resid, u).sum(axis=0)
    mass = grid.splat(np.ones_like(targets), u).sum(axis=0)
    precond = 1.0 / (2.0 * inv_var * (mass + 1.0 / len(targets)))
    direction = -precond * grad
    eta = step
    for _ in range(MAX_HALVINGS + 1):
        trial = atlas + eta * direction
        trial_data = ((grid.warp(trial, u) - targets) ** 2).sum() * inv_var
        if trial_data < data:
            return trial, trial_data
        eta *= 0.5
    return atlas, data


def build_atlas(images, config=None, init_atlas=None, init_velocities=None, class_id=0):
    """Alternate velocity and atlas descent for the images of one class.

    ``init_velocities`` (one per image, same order) warm-starts a continuation.
    The result does not depend on the order of ``images``: work is done in a
    content-hash order and the velocities are returned in input order.
    """
    config = config or AtlasConfig()
    cfg = config.shooting
    images = np.asarray(images, dtype=float)
    if images.ndim != 3 or len(images) == 0:
        raise ContractError("build_atlas needs a non-empty (N, H, W) stack of images")
    if images.shape[-2:] != tuple(cfg.shape):
        raise ContractError(f"images {images.shape[-2:]} do not match grid {cfg.shape}")
    order = canonical_order(images)
    targets = images[order]
    atlas = targets.mean(axis=0) if init_atlas is None else np.array(init_atlas, dtype=float)
    if init_velocities is None:
        v0 = np.zeros((len(targets), 2) + config.trunc, dtype=complex)
    else:
        v0 = np.asarray(init_velocities, dtype=complex)[order]
    opt = VelocityDescent(cfg, v0, step=config.v_step)

    history = []
    stall = 0
    for it in range(config.outer_iters):
        opt.run(atlas, targets, config.v_steps)
        u = opt.trajectory.deformation
        reg_sum = geodesic_energy(opt.v, cfg.operator).sum()
        for _ in range(config.atlas_steps):
            atlas, data_sum = _atlas_step(atlas, targets, u, reg_sum, cfg, config.atlas_step)
        e = Energy(data_sum + reg_sum, data_sum, reg_sum)
        if not np.isfinite(e.total):
            raise DivergenceError("atlas energy is not finite", step=it)
        if history:
            prev = history[-1].total
            stall = stall + 1 if (prev - e.total) <= config.tol * abs(prev) else 0
        history.append(e)
        if stall >= config.patience:
            break

    velocities = np.empty_like(opt.v)
    velocities[order] = opt.v
    return AtlasModel(class_id, atlas, velocities, history)


# ---------------------------------------------------------------------------
# quality

def sharpness(image, patch_size=5, n_patches=4000, seed=0):
    """Mean over random patches of (sample std / mean); patches with |mean| < 1e-8 are redrawn."""
    image = np.asarray(image, dtype=float)
    h, w = image.shape
    if patch_size < 2 or patch_size > min(h, w):
        raise ContractError(f"patch size {patch_size} does not fit a {h}x{w} image")
    windows = np.lib.stride_tricks.sliding_window_view(image, (patch_size, patch_size))
    means = windows.mean(axis=(-2, -1))
    sds = windows.std(axis=(-2, -1), ddof=1)
    valid = np.abs(means) >= 1e-8
    if not valid.any():
        raise ContractError("every patch has a (near) zero mean")
    rng = np.random.default_rng(seed)
    ny, nx = means.shape
    picked = []
    count = 0
    while count < n_patches:
        ys = rng.integers(0, ny, size=n_patches)
        xs = rng.integers(0, nx, size=n_patches)
        keep = valid[ys, xs]
        ratios = sds[ys[keep], xs[keep]] / means[ys[keep], xs[keep]]
        picked.append(ratios[:n_patches - count])
        count += len(picked[-1])
    return float(np.concatenate(picked).mean())
