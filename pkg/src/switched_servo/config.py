"""Scenario configuration: a typed YAML schema with exhaustive validation.

Every file is a nested mapping of known sections and known keys; anything
unrecognized is rejected with the full key path, because a silently
ignored typo in a gain or a threshold is worse than a hard error.  All
angles in files are degrees; everything internal is radians.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import dmp as dmp_mod
from .camera import Intrinsics, Marker
from .errors import ConfigError
from .geometry import Pose, UnitQuaternion, quat_exp
from .ibvs import IbvsGains
from .sim import EnvelopeSettings, Scenario
from .switchctl import SwitchConfig

CONFIG_VERSION = 1

WORLD_FRAME = "world"
CAMERA_FRAME = "camera"


@dataclass(frozen=True)
class DemoSpec:
    """Synthetic demonstration settings for training (min-jerk, start to goal)."""

    duration: float = 2.5
    rate: float = 100.0


@dataclass(frozen=True)
class CheckParams:
    """Inputs for the dwell-time formula reported by the check command."""

    mu: float
    beta_lo: float
    eps: float


@dataclass(frozen=True)
class SimParams:
    dt: float = 1.0 / 30.0
    duration: float = 20.0
    mode: str = "switched"
    edot_strategy: str = "model"
    convergence_ep: float = 0.02
    epsilon2: float = 1.0


@dataclass(frozen=True)
class Config:
    """One fully validated scenario file."""

    path: Path | None
    intrinsics: Intrinsics
    marker: Marker
    goal_pose: Pose
    start_pose: Pose
    xi0: tuple
    dmp_gains: dmp_mod.DmpGains
    n_basis_p: int
    n_basis_o: int
    model_path: Path | None
    demo: DemoSpec
    ibvs_gains: IbvsGains
    switch_cfg: SwitchConfig
    sim: SimParams
    occlusions: tuple
    envelopes: EnvelopeSettings
    check: CheckParams | None
    epsilon1: float = field(default=0.01)


def _require_mapping(node, where: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(node).__name__}")
    return node


def _reject_unknown(node: dict, allowed, where: str) -> None:
    unknown = sorted(set(node) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key '{unknown[0]}'")


def _num(node: dict, key: str, where: str, default=None) -> float:
    if key not in node:
        if default is None:
            raise ConfigError(f"{where}.{key}: required")
        return float(default)
    v = node[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def _int(node: dict, key: str, where: str, default=None) -> int:
    if key not in node:
        if default is None:
            raise ConfigError(f"{where}.{key}: required")
        return int(default)
    v = node[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
    return v


def _bool(node: dict, key: str, where: str, default: bool) -> bool:
    v = node.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{where}.{key}: expected true/false, got {v!r}")
    return v


def _str(node: dict, key: str, where: str, default: str, choices=None) -> str:
    v = node.get(key, default)
    if not isinstance(v, str):
        raise ConfigError(f"{where}.{key}: expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(f"{where}.{key}: must be one of {sorted(choices)}, got {v!r}")
    return v


def _vec(node: dict, key: str, where: str, n: int, default=None):
    if key not in node:
        if default is None:
            raise ConfigError(f"{where}.{key}: required")
        return tuple(float(x) for x in default)
    v = node[key]
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ConfigError(f"{where}.{key}: expected a list of {n} numbers")
    out = []
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{where}.{key}: expected numbers, got {x!r}")
        out.append(float(x))
    return tuple(out)


def _orientation(node: dict, key: str, where: str) -> UnitQuaternion:
    """A list of axis-angle rotation vectors in degrees, composed in order."""
    if key not in node:
        raise ConfigError(f"{where}.{key}: required")
    v = node[key]
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(f"{where}.{key}: expected a non-empty list of [rx, ry, rz] degree triples")
    q = UnitQuaternion.identity()
    for i, rot in enumerate(v):
        if not isinstance(rot, (list, tuple)) or len(rot) != 3:
            raise ConfigError(f"{where}.{key}[{i}]: expected an [rx, ry, rz] degree triple")
        q = q.multiply(quat_exp(np.deg2rad([float(x) for x in rot])))
    return q


def _pose(node: dict, where: str) -> Pose:
    _reject_unknown(node, {"position", "orientation_deg", "xi0"}, where)
    return Pose(
        _orientation(node, "orientation_deg", where),
        _vec(node, "position", where, 3),
        WORLD_FRAME,
        CAMERA_FRAME,
    )


_SECTIONS = {
    "version",
    "camera",
    "marker",
    "goal",
    "start",
    "dmp",
    "demo",
    "ibvs",
    "switching",
    "sim",
    "occlusions",
    "envelopes",
    "check",
}


def parse_config(raw: dict, path: Path | None = None) -> Config:
    """Validate a parsed YAML mapping and build the typed configuration."""
    doc = _require_mapping(raw, "config")
    _reject_unknown(doc, _SECTIONS, "config")
    version = _int(doc, "version", "config", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config.version: unsupported version {version}")

    cam = _require_mapping(doc.get("camera", {}), "camera")
    _reject_unknown(cam, {"fx", "fy", "cx", "cy", "width", "height"}, "camera")
    intrinsics = Intrinsics(
        _num(cam, "fx", "camera"),
        _num(cam, "fy", "camera"),
        _num(cam, "cx", "camera"),
        _num(cam, "cy", "camera"),
        _int(cam, "width", "camera"),
        _int(cam, "height", "camera"),
    )

    mk = _require_mapping(doc.get("marker", {}), "marker")
    _reject_unknown(mk, {"size", "center"}, "marker")
    marker = Marker.square(_num(mk, "size", "marker"), _vec(mk, "center", "marker", 3, (0.0, 0.0, 0.0)))

    goal_pose = _pose(_require_mapping(doc.get("goal", {}), "goal"), "goal")
    start_node = _require_mapping(doc.get("start", {}), "start")
    start_pose = _pose(start_node, "start")
    xi0 = _vec(start_node, "xi0", "start", 6, (0.0,) * 6)

    dm = _require_mapping(doc.get("dmp", {}), "dmp")
    _reject_unknown(
        dm,
        {
            "alpha_v",
            "beta_v",
            "alpha_omega",
            "beta_omega",
            "alpha_zp",
            "alpha_zo",
            "tau",
            "n_basis_p",
            "n_basis_o",
            "model",
        },
        "dmp",
    )
    dmp_gains = dmp_mod.DmpGains(
        _num(dm, "alpha_v", "dmp"),
        _num(dm, "beta_v", "dmp"),
        _num(dm, "alpha_omega", "dmp"),
        _num(dm, "beta_omega", "dmp"),
        _num(dm, "alpha_zp", "dmp", 1.0),
        _num(dm, "alpha_zo", "dmp", 1.0),
        _num(dm, "tau", "dmp"),
    )
    n_basis_p = _int(dm, "n_basis_p", "dmp", 25)
    n_basis_o = _int(dm, "n_basis_o", "dmp", 25)
    model_path = None
    if "model" in dm:
        name = _str(dm, "model", "dmp", "")
        base = path.parent if path is not None else Path(".")
        model_path = (base / name).resolve()

    demo_node = _require_mapping(doc.get("demo", {}), "demo")
    _reject_unknown(demo_node, {"duration", "rate"}, "demo")
    demo = DemoSpec(_num(demo_node, "duration", "demo", 2.5), _num(demo_node, "rate", "demo", 100.0))

    ib = _require_mapping(doc.get("ibvs", {}), "ibvs")
    _reject_unknown(ib, {"k_p", "k_v", "epsilon1"}, "ibvs")
    epsilon1 = _num(ib, "epsilon1", "ibvs", 0.01)
    ibvs_gains = IbvsGains(_num(ib, "k_p", "ibvs"), _num(ib, "k_v", "ibvs"), epsilon1)

    sw = _require_mapping(doc.get("switching", {}), "switching")
    _reject_unknown(sw, {"iota_lo", "iota_hi", "tau_a", "n0", "nbar", "compensate"}, "switching")
    switch_cfg = SwitchConfig(
        _num(sw, "iota_lo", "switching"),
        _num(sw, "iota_hi", "switching"),
        _num(sw, "tau_a", "switching"),
        _int(sw, "n0", "switching", 1),
        _int(sw, "nbar", "switching", 4),
        _bool(sw, "compensate", "switching", True),
    )

    sm = _require_mapping(doc.get("sim", {}), "sim")
    _reject_unknown(
        sm, {"rate", "dt", "duration", "mode", "edot_strategy", "convergence_ep", "epsilon2"}, "sim"
    )
    if "rate" in sm and "dt" in sm:
        raise ConfigError("sim: give either 'rate' or 'dt', not both")
    if "dt" in sm:
        dt = _num(sm, "dt", "sim")
    else:
        # rate in Hz keeps the file human-readable and dt = 1/rate exact in binary
        dt = 1.0 / _num(sm, "rate", "sim", 30.0)
    sim = SimParams(
        dt,
        _num(sm, "duration", "sim", 20.0),
        _str(sm, "mode", "sim", "switched", {"switched", "dmp_only", "coast"}),
        _str(sm, "edot_strategy", "sim", "model", {"model", "difference"}),
        _num(sm, "convergence_ep", "sim", 0.02),
        _num(sm, "epsilon2", "sim", 1.0),
    )

    occ_node = doc.get("occlusions", [])
    if not isinstance(occ_node, (list, tuple)):
        raise ConfigError("occlusions: expected a list of [start, end] second pairs")
    occlusions = []
    for i, win in enumerate(occ_node):
        pair = _vec({"w": win}, "w", f"occlusions[{i}]", 2)
        if pair[0] >= pair[1]:
            raise ConfigError(f"occlusions[{i}]: start must precede end")
        occlusions.append(pair)

    env_node = _require_mapping(doc.get("envelopes", {}), "envelopes")
    _reject_unknown(env_node, {"rate_d", "rate_v", "rel_tol", "floor_scale"}, "envelopes")
    envelopes = EnvelopeSettings(
        _num(env_node, "rate_d", "envelopes") if "rate_d" in env_node else None,
        _num(env_node, "rate_v", "envelopes") if "rate_v" in env_node else None,
        _num(env_node, "rel_tol", "envelopes", 0.05),
        _num(env_node, "floor_scale", "envelopes", 4.0),
    )

    check = None
    if "check" in doc:
        ck = _require_mapping(doc["check"], "check")
        _reject_unknown(ck, {"mu", "beta_lo", "eps"}, "check")
        check = CheckParams(_num(ck, "mu", "check"), _num(ck, "beta_lo", "check"), _num(ck, "eps", "check"))

    return Config(
        path=path,
        intrinsics=intrinsics,
        marker=marker,
        goal_pose=goal_pose,
        start_pose=start_pose,
        xi0=xi0,
        dmp_gains=dmp_gains,
        n_basis_p=n_basis_p,
        n_basis_o=n_basis_o,
        model_path=model_path,
        demo=demo,
        ibvs_gains=ibvs_gains,
        switch_cfg=switch_cfg,
        sim=sim,
        occlusions=tuple(occlusions),
        envelopes=envelopes,
        check=check,
        epsilon1=epsilon1,
    )


def resolve_config_path(name: str) -> Path:
    """Filesystem path as given, else a bundled scenario by stem or file name."""
    p = Path(name)
    if p.exists():
        return p
    pkg_dir = resources.files("switched_servo") / "scenarios"
    for candidate in (name, f"{name}.yaml"):
        bundled = pkg_dir / candidate
        if bundled.is_file():
            return Path(str(bundled))
    raise ConfigError(f"config not found: {name}")


def load_config(name: str) -> Config:
    path = resolve_config_path(name)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    return parse_config(raw if raw is not None else {}, path)


def config_sha256(name: str) -> str:
    return hashlib.sha256(resolve_config_path(name).read_bytes()).hexdigest()


def load_model_for(config: Config) -> dmp_mod.DmpModel:
    if config.model_path is None:
        raise ConfigError("dmp.model: required for this command (train one first)")
    if not config.model_path.is_file():
        raise ConfigError(f"dmp.model: file not found: {config.model_path}")
    return dmp_mod.load_model(config.model_path)


def to_scenario(config: Config, model: dmp_mod.DmpModel | None = None) -> Scenario:
    """Assemble the immutable run description; loads the model when not given."""
    if model is None:
        model = load_model_for(config)
    return Scenario(
        marker=config.marker,
        intrinsics=config.intrinsics,
        goal_pose=config.goal_pose,
        start_pose=config.start_pose,
        model=model,
        ibvs_gains=config.ibvs_gains,
        switch_cfg=config.switch_cfg,
        dt=config.sim.dt,
        duration=config.sim.duration,
        occlusions=config.occlusions,
        xi0=config.xi0,
        edot_strategy=config.sim.edot_strategy,
        mode=config.sim.mode,
        epsilon1=config.epsilon1,
        epsilon2=config.sim.epsilon2,
        convergence_ep=config.sim.convergence_ep,
        envelopes=config.envelopes,
    )
