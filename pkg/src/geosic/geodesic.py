"""Geodesic shooting in the bandlimited velocity space and exact discrete gradients.

The forward model for an initial spectral velocity ``v0`` is

1. explicit Euler on the EPDiff equation, ``v[s+1] = v[s] + dt * rhs(v[s])``;
2. explicit Euler on the inverse-map transport, with ``phi_inv = id + u``,
   ``u[s+1] = u[s] - dt * (V[s] + Du[s] . V[s])`` where ``V[s]`` is the
   spatial velocity and ``Du`` uses :func:`geosic.grid.diff`;
3. bilinear warp of the atlas by ``u[T]``.

:func:`energy_gradient` differentiates exactly this discrete chain in reverse
mode, so its output is the gradient of the number :func:`matching_energy`
returns, not a discretization of a continuous adjoint.

All functions accept a leading batch axis on ``v0`` and ``target``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import grid
from .errors import ContractError, DivergenceError
from .spectral import EPDiff, SobolevOperator, analyze, hermitian_project, synthesize


@dataclass(frozen=True)
class ShootingConfig:
    time_steps: int = 10
    sigma: float = 0.02
    operator: SobolevOperator = field(default_factory=SobolevOperator)

    def __post_init__(self):
        if self.time_steps < 1:
            raise ContractError(f"time_steps must be >= 1, got {self.time_steps}")
        if not self.sigma > 0:
            raise ContractError(f"sigma must be positive, got {self.sigma}")

    @property
    def dt(self):
        return 1.0 / self.time_steps

    @property
    def shape(self):
        return self.operator.full_shape


@dataclass
class GeodesicTrajectory:
    velocities: list          # spectral velocities at s = 0..T
    deformation: np.ndarray   # displacement u of phi_inv at t = 1
    states: list = None       # per-step (u, spatial v, padded fields), kept for the adjoint

    def take(self, idx):
        """Sub-trajectory of the batch entries ``idx``."""
        return _map_trajectory(self, lambda a: a[idx])

    def put(self, idx, other):
        """Overwrite batch entries ``idx`` with those of ``other`` (in place)."""
        def assign(dst, src):
            dst[idx] = src
            return dst
        _zip_trajectory(self, other, assign)


def _map_trajectory(traj, fn):
    states = None
    if traj.states is not None:
        states = [(fn(u), fn(V), tuple(fn(f) for f in fields)) for u, V, fields in traj.states]
    return GeodesicTrajectory([fn(v) for v in traj.velocities], fn(traj.deformation), states)


def _zip_trajectory(dst, src, fn):
    for a, b in zip(dst.velocities, src.velocities):
        fn(a, b)
    fn(dst.deformation, src.deformation)
    if dst.states is not None:
        for (u, V, fields), (u2, V2, fields2) in zip(dst.states, src.states):
            fn(u, u2)
            fn(V, V2)
            for f, f2 in zip(fields, fields2):
                fn(f, f2)


class Energy(NamedTuple):
    total: np.ndarray
    data: np.ndarray
    reg: np.ndarray


def _transport_rhs(u, V):
    """V + Du . V, i.e. the bracket in du/dt = -(V + Du V)."""
    return V + grid.diff(u, -1) * V[..., 0:1, :, :] + grid.diff(u, -2) * V[..., 1:2, :, :]


def integrate_epdiff(v0, cfg, keep_states=False):
    """Shoot the geodesic from ``v0``; returns velocities and the final ``phi_inv``."""
    v = hermitian_project(np.asarray(v0, dtype=complex))
    h, w = cfg.shape
    rhs = EPDiff(cfg.operator, v.shape[-2:])
    dt = cfg.dt
    u = np.zeros(v.shape[:-3] + (2, h, w))
    velocities = [v]
    states = [] if keep_states else None
    for s in range(cfg.time_steps):
        V = synthesize(v, (h, w), project=False)
        fields = rhs.fields(v)
        if keep_states:
            states.append((u, V, fields))
        u_next = u - dt * _transport_rhs(u, V)
        v = v + dt * rhs(v, fields)
        if not (np.isfinite(u_next).all() and np.isfinite(v).all()):
            raise DivergenceError("non-finite state in geodesic shooting", step=s)
        u = u_next
        velocities.append(v)
    return GeodesicTrajectory(velocities, u, states)


def forward_flow(trajectory, cfg):
    """Displacement ``w`` of the forward map ``phi = id + w`` along a trajectory.

    Euler steps of d(phi)/dt = v(phi) with the velocity sampled at the moving point.
    """
    h, w = cfg.shape
    dt = cfg.dt
    disp = np.zeros(trajectory.deformation.shape)
    for s in range(cfg.time_steps):
        V = synthesize(trajectory.velocities[s], (h, w), project=False)
        sampled = np.stack([grid.warp(V[..., 0, :, :], disp), grid.warp(V[..., 1, :, :], disp)], axis=-3)
        disp = disp + dt * sampled
        if not np.isfinite(disp).all():
            raise DivergenceError("non-finite state in forward flow", step=s)
    return disp


def geodesic_energy(v, op):
    """(L v, v) per batch element."""
    lam = op.multiplier(np.shape(v)[-2:])
    return (lam * np.abs(v) ** 2).sum(axis=(-3, -2, -1))


def _check_images(atlas, target, cfg):
    atlas = np.asarray(atlas, dtype=float)
    target = np.asarray(target, dtype=float)
    if atlas.shape[-2:] != tuple(cfg.shape) or target.shape[-2:] != tuple(cfg.shape):
        raise ContractError(
            f"image shapes {atlas.shape}, {target.shape} do not match grid {cfg.shape}")
    return atlas, target


def matching_energy(atlas, target, v0, cfg):
    """(1/sigma^2) * SSD(atlas o phi_inv, target) + (L v0, v0); returns an :class:`Energy`."""
    atlas, target = _check_images(atlas, target, cfg)
    v0 = hermitian_project(np.asarray(v0, dtype=complex))
    traj = integrate_epdiff(v0, cfg)
    warped = grid.warp(atlas, traj.deformation)
    data = ((warped - target) ** 2).sum(axis=(-2, -1)) / cfg.sigma ** 2
    reg = geodesic_energy(v0, cfg.operator)
    return Energy(data + reg, data, reg)


def energy_gradient(atlas, target, v0, cfg, trajectory=None):
    """Exact gradient of :func:`matching_energy` w.r.t. ``v0`` and the atlas.

    Returns ``(grad_v0, grad_atlas, energy)``. ``grad_v0`` uses the convention
    ``dE/dRe + 1j * dE/dIm`` and is projected onto Hermitian-symmetric fields.
    With a batch of targets and a single ``(H, W)`` atlas, ``grad_atlas`` keeps
    the batch axis (one term per image); sum it for the total.

    ``trajectory`` may pass a stored forward pass of ``v0`` (from
    ``integrate_epdiff(v0, cfg, keep_states=True)``) to skip recomputing it.
    """
    atlas, target = _check_images(atlas, target, cfg)
    v0 = hermitian_project(np.asarray(v0, dtype=complex))
    dt = cfg.dt
    traj = trajectory if trajectory is not None else integrate_epdiff(v0, cfg, keep_states=True)
    if traj.states is None:
        raise ContractError("the trajectory was integrated without keep_states")
    warped, dwarp = grid.warp_with_gradient(atlas, traj.deformation)
    residual = warped - target
    inv_var = 1.0 / cfg.sigma ** 2
    data = (residual ** 2).sum(axis=(-2, -1)) * inv_var
    lam = cfg.operator.multiplier(v0.shape[-2:])
    reg = (lam * np.abs(v0) ** 2).sum(axis=(-3, -2, -1))

    rbar = 2.0 * inv_var * residual
    grad_atlas = grid.splat(rbar, traj.deformation)
    ubar = rbar[..., None, :, :] * dwarp
    rhs = EPDiff(cfg.operator, v0.shape[-2:])
    trunc = v0.shape[-2:]
    vbar = np.zeros_like(v0)
    for s in range(cfg.time_steps - 1, -1, -1):
        u_s, V, fields = traj.states[s]
        a = -dt * ubar
        dxu = grid.diff(u_s, -1)
        dyu = grid.diff(u_s, -2)
        Vbar = a + np.stack([(a * dxu).sum(axis=-3), (a * dyu).sum(axis=-3)], axis=-3)
        ubar = (ubar + grid.diff_adjoint(a * V[..., 0:1, :, :], -1)
                + grid.diff_adjoint(a * V[..., 1:2, :, :], -2))
        if s < cfg.time_steps - 1:
            vbar = vbar + dt * rhs.vjp(traj.velocities[s], vbar, fields)
        vbar = vbar + analyze(Vbar, trunc)
    grad_v0 = hermitian_project(vbar + 2.0 * lam * v0)
    return grad_v0, grad_atlas, Energy(data + reg, data, reg)
