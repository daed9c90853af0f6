"""Scenario files: JSON schema, defaults and referential checks."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import jsonschema

from ..core_types import CosClass, NodeProfile, NodeRole, ResourceVector
from ..economics import INFLATION_CAP
from ..governance import FACTOR_GROUPS

CLASS_LABELS = [c.label for c in CosClass]
BEHAVIORS = ["crash", "silence", "equivocate", "corrupt_sig", "drop_rate"]

_resources = {
    "type": "object",
    "properties": {k: {"type": "number", "minimum": 0} for k in ("compute", "storage", "bandwidth")},
    "additionalProperties": False,
}
_class_map = {
    "type": "object",
    "propertyNames": {"enum": CLASS_LABELS},
    "additionalProperties": {"type": "number"},
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["topology", "workload"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "duration": {"type": "integer", "minimum": 0},
        "epoch_ticks": {"type": "integer", "minimum": 1},
        "drain_epochs": {"type": "integer", "minimum": 0},
        "topology": {
            "type": "object",
            "required": ["nodes"],
            "additionalProperties": False,
            "properties": {
                "nodes": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["id", "role"],
                        "additionalProperties": False,
                        "properties": {
                            "id": {"type": "string", "minLength": 1},
                            "role": {"enum": ["top_control", "local_control", "execution"]},
                            "group": {"type": "integer", "minimum": 0},
                            "speed": {"type": "number", "exclusiveMinimum": 0},
                            "capacity": _resources,
                            "cost_rate": {"type": "number", "minimum": 0},
                            "trust": {"type": "number", "minimum": 0, "maximum": 1},
                            "privacy_capable": {"type": "boolean"},
                        },
                    },
                },
                "substrate_capacity": _resources,
                "virtual_dlts": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id", "reservation"],
                        "additionalProperties": False,
                        "properties": {
                            "id": {"type": "string"},
                            "owner": {"type": "string"},
                            "reservation": _resources,
                        },
                    },
                },
                "control_floor": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "min_speed": {"type": "number", "minimum": 0},
                        "min_trust": {"type": "number", "minimum": 0, "maximum": 1},
                    },
                },
                "health_threshold": {"type": "integer", "minimum": 1},
            },
        },
        "clients": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "trust": {"type": "number", "minimum": 0, "maximum": 1},
                    "control": {"type": "boolean"},
                },
            },
        },
        "scheduler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "weights": _class_map,
                "capacities": _class_map,
                "trust_threshold": {"type": "number", "minimum": 0, "maximum": 1},
                "batch_budget": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "consensus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["classical", "multisig"]},
                "view_timeout": {"type": "integer", "minimum": 1},
                "latency": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "base": {"type": "integer", "minimum": 1},
                        "jitter": {"enum": ["none", "uniform", "exponential"]},
                        "lo": {"type": "integer", "minimum": 0},
                        "hi": {"type": "integer", "minimum": 0},
                        "mean": {"type": "number", "minimum": 0},
                    },
                },
            },
        },
        "allocation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "solver": {"enum": ["greedy", "exhaustive", "qlearn"]},
                "class_values": _class_map,
                "lambda": {"type": "number", "minimum": 0},
                "consensus_a": {"type": "number", "minimum": 0},
                "consensus_b": {"type": "number", "minimum": 0},
                "control_overhead": _resources,
                "control_capacity": _resources,
                "max_committee_size": {"type": "integer", "minimum": 1},
                "gamma_de": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "throughput_targets": _class_map,
                "rl_episodes": {"type": "integer", "minimum": 0},
            },
        },
        "governance": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "election_every": {"type": "integer", "minimum": 1},
                "delegates": {"type": "integer", "minimum": 1},
                "lock_period": {"type": "integer", "minimum": 1},
                "candidates": {"type": "array", "items": {"type": "string"}},
                "amendments": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id", "polls_epoch", "vote1_epoch", "test_epochs", "vote2_epoch"],
                        "additionalProperties": False,
                        "properties": {
                            "id": {"type": "string"},
                            "label": {"type": "string"},
                            "polls_epoch": {"type": "integer", "minimum": 0},
                            "polls": {
                                "type": "object",
                                "propertyNames": {"enum": list(FACTOR_GROUPS)},
                                "additionalProperties": {"type": "boolean"},
                            },
                            "vote1_epoch": {"type": "integer", "minimum": 0},
                            "vote1": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
                            "test_epochs": {"type": "integer", "minimum": 0},
                            "vote2_epoch": {"type": "integer", "minimum": 0},
                            "vote2": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
                            "inflation_rate": {"type": "number", "minimum": 0},
                        },
                    },
                },
            },
        },
        "economics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "genesis_balances": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
                "inflation_rate": {"type": "number", "minimum": 0},
                "epochs_per_year": {"type": "integer", "minimum": 1},
                "reward_share": {"type": "number", "minimum": 0, "maximum": 1},
                "collateral": {"type": "integer", "minimum": 0},
                "slash_beta": {"type": "number", "minimum": 0, "maximum": 1},
                "stake_rate": {"type": "number", "minimum": 0},
            },
        },
        "workload": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["class", "submitter", "rate"],
                "additionalProperties": False,
                "properties": {
                    "class": {"enum": CLASS_LABELS},
                    "submitter": {"type": "string"},
                    "process": {"enum": ["deterministic", "poisson"]},
                    "rate": {"type": "number", "minimum": 0},
                    "group": {"type": "integer", "minimum": 0},
                    "scope": {"enum": ["local", "global"]},
                    "demand": _resources,
                    "demand_jitter": {"type": "number", "minimum": 0, "maximum": 1},
                    "max_latency": {"type": "number", "exclusiveMinimum": 0},
                    "max_cost": {"type": "number", "minimum": 0},
                    "privacy": {"enum": [0, 1]},
                    "high_security": {"type": "boolean"},
                    "payload_size": {"type": "integer", "minimum": 1},
                    "reserved_bits": {"type": "integer", "minimum": 0, "maximum": 31},
                    "start_epoch": {"type": "integer", "minimum": 0},
                    "stop_epoch": {"type": "integer", "minimum": 0},
                },
            },
        },
        "faults": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["node", "behavior"],
                "additionalProperties": False,
                "properties": {
                    "node": {"type": "string"},
                    "behavior": {"enum": BEHAVIORS},
                    "from_epoch": {"type": "integer", "minimum": 0},
                    "to_epoch": {"type": "integer", "minimum": 0},
                    "p": {"type": "number", "minimum": 0, "maximum": 1},
                },
            },
        },
    },
}

DEFAULTS: dict[str, Any] = {
    "name": "unnamed",
    "seed": 0,
    "duration": 10,
    "epoch_ticks": 100,
    "drain_epochs": 0,
    "clients": [],
    "scheduler": {"weights": {}, "capacities": {}, "trust_threshold": 0.5, "batch_budget": 4},
    "consensus": {"mode": "multisig", "view_timeout": 20, "latency": {"base": 1, "jitter": "none"}},
    "allocation": {
        "solver": "greedy",
        "class_values": {},
        "lambda": 1.0,
        "consensus_a": 2.0,
        "consensus_b": 1.0,
        "control_overhead": {"compute": 0.1, "storage": 0.1, "bandwidth": 0.1},
        "control_capacity": {"compute": 100.0, "storage": 100.0, "bandwidth": 100.0},
        "max_committee_size": 3,
        "gamma_de": 0.0,
        "throughput_targets": {},
        "rl_episodes": 500,
    },
    "governance": {"election_every": 10, "delegates": 5, "lock_period": 1, "amendments": []},
    "economics": {
        "genesis_balances": {},
        "inflation_rate": 0.04,
        "epochs_per_year": 12,
        "reward_share": 1.0,
        "collateral": 1000,
        "slash_beta": 0.5,
        "stake_rate": 10.0,
    },
    "faults": [],
}

NODE_DEFAULTS = {
    "speed": 2.0,
    "capacity": {"compute": 20.0, "storage": 20.0, "bandwidth": 20.0},
    "cost_rate": 0.1,
    "trust": 0.9,
    "privacy_capable": False,
}

WORKLOAD_DEFAULTS = {
    "process": "deterministic",
    "group": 0,
    "scope": "local",
    "demand": {"compute": 2.0, "storage": 1.0, "bandwidth": 1.0},
    "demand_jitter": 0.0,
    "max_latency": 1000.0,
    "privacy": 0,
    "high_security": False,
    "payload_size": 1,
    "reserved_bits": 0,
    "start_epoch": 0,
}


class ParseError(ValueError):
    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class ValidationError(ValueError):
    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("genesis_balances",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class Scenario:
    raw: dict
    source: str = "<memory>"

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def duration(self) -> int:
        return self.raw["duration"]

    def with_overrides(self, seed: Optional[int] = None, consensus: Optional[str] = None,
                       solver: Optional[str] = None) -> Scenario:
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = seed
        if consensus is not None:
            raw["consensus"]["mode"] = consensus
        if solver is not None:
            raw["allocation"]["solver"] = solver
        return Scenario(raw, self.source)

    def profiles(self) -> dict[str, NodeProfile]:
        out = {}
        for n in self.raw["topology"]["nodes"]:
            role = {
                "top_control": lambda g: NodeRole.top_control(),
                "local_control": NodeRole.local_control,
                "execution": NodeRole.execution,
            }[n["role"]](n.get("group", 0))
            out[n["id"]] = NodeProfile(
                id=n["id"],
                speed=float(n["speed"]),
                capacity=ResourceVector.from_obj(n["capacity"]),
                cost_rate=float(n["cost_rate"]),
                trust=float(n["trust"]),
                privacy_capable=bool(n["privacy_capable"]),
                role=role,
            )
        return out


def _referential_checks(raw: dict) -> None:
    nodes = raw["topology"]["nodes"]
    ids = [n["id"] for n in nodes]
    for i, nid in enumerate(ids):
        if nid in ids[:i]:
            raise ValidationError(f"duplicate node id {nid!r}", _path(["topology", "nodes", i, "id"]))
    clients = [c["id"] for c in raw["clients"]]
    for i, cid in enumerate(clients):
        if cid in ids or cid in clients[:i]:
            raise ValidationError(f"duplicate id {cid!r}", _path(["clients", i, "id"]))
    if not any(n["role"] == "top_control" for n in nodes):
        raise ValidationError("at least one top_control node is required", "$.topology.nodes")
    groups_exec = {n.get("group", 0) for n in nodes if n["role"] == "execution"}
    groups_ctrl = {n.get("group", 0) for n in nodes if n["role"] == "local_control"}
    for g in sorted(groups_exec - groups_ctrl):
        raise ValidationError(f"group {g} has executors but no local_control node", "$.topology.nodes")
    for g in sorted(groups_ctrl - groups_exec):
        raise ValidationError(f"group {g} has control nodes but no executors", "$.topology.nodes")
    known = set(ids) | set(clients)
    for i, w in enumerate(raw["workload"]):
        if w["submitter"] not in known:
            raise ValidationError(f"workload submitter {w['submitter']!r} is not a defined node or client",
                                  _path(["workload", i, "submitter"]))
        if w["scope"] == "local" and w["group"] not in groups_exec:
            raise ValidationError(f"workload targets undefined group {w['group']}",
                                  _path(["workload", i, "group"]))
        if "stop_epoch" in w and w["stop_epoch"] < w["start_epoch"]:
            raise ValidationError("stop_epoch precedes start_epoch", _path(["workload", i, "stop_epoch"]))
    for i, f in enumerate(raw["faults"]):
        if f["node"] not in ids:
            raise ValidationError(f"fault references undefined node {f['node']!r}", _path(["faults", i, "node"]))
        if f.get("to_epoch", f.get("from_epoch", 0)) < f.get("from_epoch", 0):
            raise ValidationError("fault window ends before it starts", _path(["faults", i]))
    gov = raw["governance"]
    for i, c in enumerate(gov.get("candidates", [])):
        if c not in ids:
            raise ValidationError(f"candidate {c!r} is not a defined node", _path(["governance", "candidates", i]))
        if next(n for n in nodes if n["id"] == c)["role"] != "top_control":
            raise ValidationError(f"candidate {c!r} is not a top_control node", _path(["governance", "candidates", i]))
    for i, a in enumerate(gov["amendments"]):
        loc = ["governance", "amendments", i]
        if not a["polls_epoch"] < a["vote1_epoch"] <= a["vote2_epoch"] - a["test_epochs"]:
            raise ValidationError("amendment schedule must satisfy polls < vote1 <= vote2 - test_epochs", _path(loc))
        if "inflation_rate" in a and a["inflation_rate"] > float(INFLATION_CAP):
            raise ValidationError("amendment inflation rate exceeds the 4% cap", _path(loc + ["inflation_rate"]))
    econ = raw["economics"]
    if econ["inflation_rate"] > float(INFLATION_CAP):
        raise ValidationError("inflation rate exceeds the 4% cap", "$.economics.inflation_rate")
    for holder in econ["genesis_balances"]:
        if holder not in known:
            raise ValidationError(f"genesis balance for undefined account {holder!r}",
                                  "$.economics.genesis_balances")


def validate_raw(data: Any) -> dict:
    """Schema check, defaults, then id references. Returns the filled-in document."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ValidationError(e.message, _path(e.absolute_path))
    raw = _merge(DEFAULTS, data)
    raw["topology"]["nodes"] = [_merge(NODE_DEFAULTS, n) for n in raw["topology"]["nodes"]]
    raw["topology"].setdefault("virtual_dlts", [])
    raw["topology"].setdefault("health_threshold", 3)
    raw["workload"] = [_merge(WORKLOAD_DEFAULTS, w) for w in raw["workload"]]
    _referential_checks(raw)
    return raw


def parse_scenario(text: str, source: str = "<memory>") -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, f"{source}:{e.lineno}:{e.colno}") from None
    return Scenario(validate_raw(data), source)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ParseError(str(e), str(path)) from None
    return parse_scenario(text, str(path))


def bundled_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "scenarios"


def bundled_scenarios() -> list[Path]:
    return sorted(bundled_dir().glob("*.json"))
