"""JSON schemas for the files the command line reads and writes."""

from __future__ import annotations

from typing import Any

import jsonschema

from vinfpool.errors import SchemaError

_NAME = {"type": "string", "minLength": 1}
_NONNEG = {"type": "number", "minimum": 0}
_PROB_OPEN = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_PMF = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1}
_HOSTS = {"type": "object", "additionalProperties": {"type": "array", "items": _NAME}}

TOPOLOGY = {
    "type": "object",
    "required": ["nodes"],
    "properties": {
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "compute"],
                "properties": {"id": _NAME, "compute": _NONNEG, "rack": {"type": "string"}},
                "additionalProperties": False,
            },
        },
        "links": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b", "bandwidth"],
                "properties": {"a": _NAME, "b": _NAME, "bandwidth": _NONNEG},
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

VINF = {
    "type": "object",
    "required": ["nodes"],
    "properties": {
        "name": {"type": "string"},
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "compute"],
                "properties": {"id": _NAME, "compute": _NONNEG, "critical": {"type": "boolean"}},
                "additionalProperties": False,
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b", "bandwidth"],
                "properties": {"a": _NAME, "b": _NAME, "bandwidth": {"type": "number", "exclusiveMinimum": 0}},
                "additionalProperties": False,
            },
        },
        "reliability": _PROB_OPEN,
        "p": _PROB_OPEN,
        "failure": _PMF,
        "backups": {"type": "integer", "minimum": 0},
        "backup_names": {"type": "array", "items": _NAME},
        "pinned": {"type": "object", "additionalProperties": _NAME},
        "excluded": _HOSTS,
        "preferred": _HOSTS,
        "rack_separation": {"type": "boolean"},
    },
    "additionalProperties": False,
}

_MEMBER = {
    "type": "object",
    "required": ["id", "n", "k", "p", "r"],
    "properties": {
        "id": _NAME,
        "n": {"type": "integer", "minimum": 0},
        "k": {"type": "integer", "minimum": 0},
        "p": _PROB_OPEN,
        "r": _PROB_OPEN,
        "f": _PMF,
    },
    "additionalProperties": False,
}

POOL_STATE = {
    "type": "object",
    "required": ["anchor", "members"],
    "properties": {
        "anchor": _MEMBER,
        "members": {"type": "array", "items": _MEMBER},
        "slots": {"type": "array", "items": {"type": ["string", "null"]}},
    },
    "additionalProperties": False,
}

_ARC = {
    "type": "object",
    "required": ["from", "to", "value"],
    "properties": {"from": {"type": "string"}, "to": {"type": "string"}, "value": _NONNEG},
    "additionalProperties": False,
}

SOLUTION = {
    "type": "object",
    "required": ["mapping", "objective", "relaxed_objective", "flows", "overlap", "compute", "bandwidth"],
    "properties": {
        "mapping": {"type": "object", "additionalProperties": _NAME},
        "objective": {"type": "number"},
        "relaxed_objective": {"type": "number"},
        "flows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["commodity", "arcs"],
                "properties": {
                    "commodity": {"type": "array", "items": {"type": "string"}, "minItems": 3},
                    "arcs": {"type": "array", "items": _ARC},
                },
                "additionalProperties": False,
            },
        },
        "overlap": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["neighbor", "arcs"],
                "properties": {"neighbor": _NAME, "arcs": {"type": "array", "items": _ARC}},
                "additionalProperties": False,
            },
        },
        "compute": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["node", "primary", "redundant"],
                "properties": {"node": _NAME, "primary": _NONNEG, "redundant": _NONNEG},
                "additionalProperties": False,
            },
        },
        "bandwidth": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b", "primary", "redundant"],
                "properties": {"a": _NAME, "b": _NAME, "primary": _NONNEG, "redundant": _NONNEG},
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

DISTRIBUTION = {
    "type": "object",
    "required": ["model", "n", "probs"],
    "properties": {
        "model": {"type": "string"},
        "n": {"type": "integer", "minimum": 0},
        "probs": _PMF,
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

SCHEMAS = {
    "topology": TOPOLOGY,
    "vinf": VINF,
    "pool": POOL_STATE,
    "solution": SOLUTION,
    "distribution": DISTRIBUTION,
}


def check(instance: Any, schema: str) -> None:
    """Raise SchemaError unless ``instance`` validates against the named schema."""
    try:
        jsonschema.validate(instance, SCHEMAS[schema])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{schema} schema: {where}: {exc.message}") from None
