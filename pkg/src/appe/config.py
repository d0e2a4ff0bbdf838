"""Run configuration files: JSON with a fixed set of keys, unknown keys rejected."""
from __future__ import annotations

import json
import numbers
from pathlib import Path

from .adversary import AttackSpec, attack_from_dict
from .engine import MUTATIONS, OracleSettings, ProtocolConfig
from .errors import InvalidArgumentError
from .subprotocols import RoleAssignment

SCHEMA_VERSION = 1

TOP_KEYS = {
    "schema_version",
    "n",
    "alice",
    "participants",
    "thetas",
    "L",
    "k",
    "delta_threshold",
    "vote_rounds",
    "m_min",
    "correct_bias",
    "enforce_vote",
    "oracle",
    "attack",
    "seed",
    "mutation",
    "out_dir",
}
REQUIRED = ("n", "alice", "participants", "thetas", "L", "k")
ORACLE_KEYS = {"sv_copies", "sv_epsilon", "sv_reject_policy", "leak_fraction"}


def _int(d: dict, key: str, where: str = "config") -> int:
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, numbers.Integral):
        raise InvalidArgumentError(f"{where}.{key} must be an integer, got {v!r}")
    return int(v)


def _num(d: dict, key: str, where: str = "config") -> float:
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, numbers.Real):
        raise InvalidArgumentError(f"{where}.{key} must be a number, got {v!r}")
    return float(v)


def _bool(d: dict, key: str) -> bool:
    if not isinstance(d[key], bool):
        raise InvalidArgumentError(f"config.{key} must be true or false")
    return d[key]


def load_config_dict(raw: dict) -> tuple[ProtocolConfig, AttackSpec, dict]:
    """Validate a parsed config; returns ``(protocol config, attack, normalised dict)``."""
    if not isinstance(raw, dict):
        raise InvalidArgumentError("config must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise InvalidArgumentError(f"unknown config keys {sorted(unknown)}")
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise InvalidArgumentError(f"missing config keys {missing}")
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise InvalidArgumentError(f"unsupported schema_version {raw['schema_version']!r}")

    n, alice = _int(raw, "n"), _int(raw, "alice")
    parts = raw["participants"]
    if not isinstance(parts, list) or any(isinstance(p, bool) or not isinstance(p, int) for p in parts):
        raise InvalidArgumentError("config.participants must be a list of agent indices")
    thetas = raw["thetas"]
    if not isinstance(thetas, list) or any(isinstance(t, bool) or not isinstance(t, numbers.Real) for t in thetas):
        raise InvalidArgumentError("config.thetas must be a list of numbers")
    L, k = _int(raw, "L"), _int(raw, "k")
    if k > L:
        raise InvalidArgumentError(f"k={k} exceeds L={L}")

    oracle_raw = raw.get("oracle", {}) or {}
    if not isinstance(oracle_raw, dict):
        raise InvalidArgumentError("config.oracle must be an object")
    bad = set(oracle_raw) - ORACLE_KEYS
    if bad:
        raise InvalidArgumentError(f"unknown oracle keys {sorted(bad)}")
    oracle = OracleSettings(
        sv_copies=_int(oracle_raw, "sv_copies", "oracle") if "sv_copies" in oracle_raw else 2,
        sv_epsilon=_num(oracle_raw, "sv_epsilon", "oracle") if "sv_epsilon" in oracle_raw else 0.0,
        sv_reject_policy=str(oracle_raw.get("sv_reject_policy", "discard")),
        leak_fraction=_num(oracle_raw, "leak_fraction", "oracle") if "leak_fraction" in oracle_raw else 0.0,
    )

    m_min = raw.get("m_min", 3)
    if isinstance(m_min, list):
        m_min = tuple(m_min)
    elif isinstance(m_min, bool) or not isinstance(m_min, int):
        raise InvalidArgumentError("config.m_min must be an integer or a list of integers")
    vote_rounds = raw.get("vote_rounds")
    if vote_rounds is not None:
        vote_rounds = _int(raw, "vote_rounds")
    mutation = raw.get("mutation")
    if mutation is not None and mutation not in MUTATIONS:
        raise InvalidArgumentError(f"unknown mutation {mutation!r}")

    roles = RoleAssignment.from_set(n, alice, parts)
    cfg = ProtocolConfig(
        roles,
        tuple(thetas),
        L,
        k,
        delta_threshold=_num(raw, "delta_threshold") if "delta_threshold" in raw else 0.5,
        vote_rounds=vote_rounds,
        m_min=m_min,
        correct_bias=_bool(raw, "correct_bias") if "correct_bias" in raw else False,
        oracle=oracle,
        seed=_int(raw, "seed") if "seed" in raw else 0,
        mutation=mutation,
        enforce_vote=_bool(raw, "enforce_vote") if "enforce_vote" in raw else True,
    )
    attack_raw = raw.get("attack")
    if attack_raw is not None and not isinstance(attack_raw, dict):
        raise InvalidArgumentError("config.attack must be an object")
    attack = attack_from_dict(attack_raw, n, alice)
    return cfg, attack, normalised(cfg, attack_raw)


def normalised(cfg: ProtocolConfig, attack_raw: dict | None) -> dict:
    """Config echoed into reports, with defaults filled in."""
    return {
        "schema_version": SCHEMA_VERSION,
        "n": cfg.n,
        "alice": cfg.roles.alice,
        "participants": sorted(cfg.roles.participant_set),
        "thetas": list(cfg.thetas),
        "L": cfg.L,
        "k": cfg.k,
        "delta_threshold": cfg.delta_threshold,
        "vote_rounds": cfg.s,
        "m_min": list(cfg.m_min),
        "correct_bias": cfg.correct_bias,
        "enforce_vote": cfg.enforce_vote,
        "oracle": {
            "sv_copies": cfg.oracle.sv_copies,
            "sv_epsilon": cfg.oracle.sv_epsilon,
            "sv_reject_policy": cfg.oracle.sv_reject_policy,
            "leak_fraction": cfg.oracle.leak_fraction,
        },
        "attack": attack_raw or {},
        "seed": cfg.seed,
        "mutation": cfg.mutation,
    }


def read_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"config {path} is not valid JSON: {exc}") from None
