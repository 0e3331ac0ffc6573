"""Layered run configuration.

A main file points at sub-files through `include:`; included trees are
deep-merged in order and the including file's own keys win.  The hash
of the fully resolved tree stamps every artifact a run produces, so two
reports are comparable exactly when their hashes match.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .bench import BenchmarkSpec
from .env import EnvConfig
from .errors import ConfigurationError
from .geometry import Capsule
from .imitation import ImitationConfig
from .kinematics import RobotModel
from .learn import CEMConfig


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_tree(path) -> dict:
    """Resolve one file and its includes into a plain dict."""
    return _load_tree(Path(path), ())


def _load_tree(path: Path, stack: tuple) -> dict:
    path = path.resolve()
    if path in stack:
        chain = " -> ".join(str(p) for p in stack + (path,))
        raise ConfigurationError(f"include cycle: {chain}")
    try:
        doc = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigurationError(f"bad config syntax in {path}: {e}")
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config root must be a mapping: {path}")
    includes = doc.pop("include", [])
    if isinstance(includes, str):
        includes = [includes]
    tree = {}
    for inc in includes:
        sub = _load_tree(_find_include(inc, path.parent), stack + (path,))
        tree = _deep_merge(tree, sub)
    return _deep_merge(tree, doc)


def _find_include(name: str, rel_to: Path) -> Path:
    p = Path(name)
    if not p.is_absolute():
        cand = rel_to / p
        if cand.exists():
            return cand
        builtin = builtin_config_dir() / p
        if builtin.exists():
            return builtin
        return cand  # let the loader report the missing relative path
    return p


def builtin_config_dir() -> Path:
    return Path(resources.files("shieldbench")) / "configs"


def tree_hash(tree: dict) -> str:
    """Digest of the resolved tree, key order ignored."""
    canon = json.dumps(tree, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# -- builders -------------------------------------------------------------------


def _need(tree: dict, key: str, where: str) -> dict:
    if key not in tree:
        raise ConfigurationError(f"missing {key!r} section in {where}")
    return tree[key]


def robot_from_tree(tree: dict) -> RobotModel:
    r = _need(tree, "robot", "config")
    try:
        dh = np.asarray(r["dh"], dtype=np.float64)
        caps = tuple(Capsule(c["a"], c["b"], float(c["radius"]))
                     for c in r["capsules"])
        ee = np.asarray(r.get("ee_frame", np.eye(4).tolist()), dtype=np.float64)
        return RobotModel(
            dh=dh,
            joint_limits=np.asarray(r["joint_limits"], dtype=np.float64),
            vel_limits=np.asarray(r["vel_limits"], dtype=np.float64),
            acc_limits=np.asarray(r["acc_limits"], dtype=np.float64),
            link_capsules=caps,
            ee_frame=ee,
            gripper_grasp_radius=float(r.get("gripper_grasp_radius", 0.08)),
            name=str(r.get("name", "robot")),
            exempt_self_pairs=tuple(tuple(p) for p in r.get("exempt_self_pairs", ())),
        )
    except KeyError as e:
        raise ConfigurationError(f"robot section is missing field {e}")


_ENV_KEYS = ("task", "n_default_clips", "action_mode", "eps_obs", "obs_delay",
             "reward_delay", "k_max", "m_resample", "seed", "human_driver",
             "eps_meas", "shield_mode")


def env_from_tree(tree: dict) -> EnvConfig:
    model = robot_from_tree(tree)
    e = dict(tree.get("env", {}))
    home_q = e.pop("home_q", None)
    if home_q is not None:
        home_q = np.asarray(home_q, dtype=np.float64)
    obs_bodies = e.pop("obs_bodies", None)
    unknown = set(e) - set(_ENV_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown env keys: {sorted(unknown)}")
    kw = {k: e[k] for k in _ENV_KEYS if k in e}
    if obs_bodies is not None:
        kw["obs_bodies"] = tuple(obs_bodies)
    return EnvConfig(model=model, home_q=home_q, **kw)


def benchmark_from_tree(tree: dict) -> BenchmarkSpec:
    env = env_from_tree(tree)
    b = dict(tree.get("benchmark", {}))
    cem = CEMConfig(**tree.get("cem", {}))
    imit = None
    if "imitation" in tree:
        imit = ImitationConfig(**tree["imitation"])
    spec = BenchmarkSpec(
        env=env,
        method=b.get("method", "none"),
        seeds=tuple(b.get("seeds", (0, 1, 2))),
        cem=cem,
        eval_every=int(b.get("eval_every", 10)),
        eval_episodes=int(b.get("eval_episodes", 100)),
        imitation=imit,
        dataset_episodes=int(b.get("dataset_episodes", 10)),
        dataset_seed=int(b.get("dataset_seed", 9000)),
        r_expert_mean=b.get("r_expert_mean"),
        name=b.get("name", ""),
    )
    spec.tree_hash = tree_hash(tree)
    return spec


def validate_tree(tree: dict) -> dict:
    """Build everything buildable; return a summary of what resolved."""
    out = {"hash": tree_hash(tree)}
    model = robot_from_tree(tree)
    out["robot"] = model.name
    out["joints"] = model.n_joints
    env = env_from_tree(tree)
    out["task"] = env.task
    out["env_fingerprint"] = env.fingerprint()
    if "benchmark" in tree or "cem" in tree:
        spec = benchmark_from_tree(tree)
        out["benchmark"] = spec.name
        out["method"] = spec.method
        out["seeds"] = list(spec.seeds)
    return out
