"""Published document schemas and their compiled validators."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from ..errors import SchemaViolation

SCHEMA_NAMES = (
    "clip_header",
    "frame_record",
    "ground_truth",
    "scenario",
    "config",
    "topology",
    "control",
)


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    if name not in SCHEMA_NAMES:
        raise KeyError(f"unknown schema {name!r}")
    ref = resources.files("hazardsim.schemas").joinpath(f"{name}.schema.json")
    return json.loads(ref.read_text(encoding="utf-8"))


@lru_cache(maxsize=None)
def _validator(name: str) -> jsonschema.Draft202012Validator:
    return jsonschema.Draft202012Validator(load_schema(name))


def validate_document(name: str, document: object, context: str = "") -> None:
    """Validate a parsed document against a published schema.

    Raises SchemaViolation carrying the first error's JSON path.
    """
    error = jsonschema.exceptions.best_match(_validator(name).iter_errors(document))
    if error is not None:
        where = "/".join(str(p) for p in error.absolute_path) or "<root>"
        prefix = f"{context}: " if context else ""
        raise SchemaViolation(f"{prefix}{name} schema: {error.message} (at {where})")
