"""JSON run configuration: nested dataclasses with strict key checking."""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field

from .atlas import AtlasConfig
from .classify.analysis import EPSILONS
from .classify.joint import JointConfig
from .errors import ContractError
from .synth import SHAPES, PerturbationSpec, ShapeSpec


@dataclass(frozen=True)
class DataConfig:
    shapes: tuple = SHAPES
    canvas: tuple = (64, 64)
    size: float = 16.0
    fill: float = 1.0
    background: float = 0.0
    softness: float = 0.7
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    n: int = 700
    split: tuple = (0.7, 0.15, 0.15)

    def specs(self):
        return [ShapeSpec(name, self.canvas, self.size, self.fill, self.softness, self.background)
                for name in self.shapes]


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    joint: JointConfig = field(default_factory=JointConfig)
    epsilons: tuple = EPSILONS
    saliency_images: int = 5


def _build(cls, raw, where):
    if not isinstance(raw, dict):
        raise ContractError(f"{where or 'config'}: expected an object, got {type(raw).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ContractError(f"{where or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        path = f"{where}.{key}" if where else key
        typ = hints[key]
        if dataclasses.is_dataclass(typ):
            kwargs[key] = _build(typ, value, path)
        elif typ is tuple:
            if not isinstance(value, (list, tuple)):
                raise ContractError(f"{path}: expected a list")
            kwargs[key] = tuple(value)
        elif typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            kwargs[key] = float(value)
        elif typ is int and isinstance(value, int) and not isinstance(value, bool):
            kwargs[key] = value
        elif typ is str and isinstance(value, str):
            kwargs[key] = value
        else:
            raise ContractError(f"{path}: invalid value {value!r}")
    try:
        return cls(**kwargs)
    except ContractError as exc:
        raise ContractError(f"{where or 'config'}: {exc}") from None
    except TypeError as exc:
        raise ContractError(f"{where or 'config'}: {exc}") from None


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def load_config(raw):
    """RunConfig from a dict (as parsed from JSON). Shape names are checked eagerly."""
    cfg = _build(RunConfig, raw, "")
    for i, name in enumerate(cfg.data.shapes):
        if name not in SHAPES:
            raise ContractError(f"data.shapes[{i}]: unknown shape {name!r}; expected one of {SHAPES}")
    cfg.data.specs()
    return cfg


def read_config(path):
    if path is None:
        return RunConfig()
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path}: invalid JSON ({exc})") from None
    return load_config(raw)


def to_dict(cfg):
    return _plain(cfg)


def dumps(cfg):
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"


def with_trunc_grid(cfg):
    """Keep the operator grid in step with the data canvas."""
    shooting = cfg.joint.atlas.shooting
    if tuple(shooting.operator.full_shape) == tuple(cfg.data.canvas):
        return cfg
    op = dataclasses.replace(shooting.operator, full_shape=tuple(cfg.data.canvas))
    atlas = dataclasses.replace(cfg.joint.atlas, shooting=dataclasses.replace(shooting, operator=op))
    return dataclasses.replace(cfg, joint=dataclasses.replace(cfg.joint, atlas=atlas))


__all__ = ["AtlasConfig", "DataConfig", "RunConfig", "load_config", "read_config", "to_dict", "dumps",
           "with_trunc_grid"]
