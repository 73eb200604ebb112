"""Tree and result documents (JSON), bulk tables (CSV), atomic writes."""

from __future__ import annotations

import contextlib
import csv
import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from wmm.errors import TreeValidationError
from wmm.tree import BranchEvidence, NodeSpec, TreeSpec, validate_tree, warn_internal_counts

TREE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["root", "nodes", "edges"],
    "properties": {
        "root": {"type": "string"},
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id"],
                "properties": {
                    "id": {"type": "string"},
                    "label": {"type": "string"},
                    "count": {"type": ["integer", "null"], "minimum": 0},
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["parent", "child"],
                "properties": {
                    "parent": {"type": "string"},
                    "child": {"type": "string"},
                    "evidence": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["x", "n", "source"],
                            "properties": {
                                "x": {"type": "integer", "minimum": 0},
                                "n": {"type": "integer", "minimum": 1},
                                "source": {"type": "string"},
                                "alt": {"type": "string"},
                            },
                        },
                    },
                },
            },
        },
    },
}

RESULT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["point_estimate", "interval", "weights", "scheme", "runs", "seed",
                 "combination_count", "warnings"],
    "properties": {
        "point_estimate": {"type": "number", "exclusiveMinimum": 0},
        "log_estimate": {"type": "number"},
        "interval": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "interval_mass": {"type": "number"},
        "weights": {"type": "object", "additionalProperties": {"type": "number"}},
        "combination_weights": {"type": "array", "items": {"type": "number"}},
        "scheme": {"enum": ["ind", "dir"]},
        "runs": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "combination_count": {"type": "integer", "minimum": 1},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "version": {"type": "string"},
    },
}


class DocumentError(ValueError):
    """Schema violation; ``path`` is the JSON path of the offending key."""

    def __init__(self, message, path="$"):
        self.path = path
        super().__init__(f"{path}: {message}")


def _check_schema(doc, schema):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise DocumentError(err.message, err.json_path)


def parse_tree_document(doc: dict, warn: bool = True) -> tuple[TreeSpec, list[BranchEvidence]]:
    _check_schema(doc, TREE_SCHEMA)
    nodes = [NodeSpec(n["id"], n.get("label", ""), n.get("count")) for n in doc["nodes"]]
    edges, evidence = [], []
    for e in doc["edges"]:
        edge = (e["parent"], e["child"])
        edges.append(edge)
        for ev in e.get("evidence", []):
            evidence.append(BranchEvidence(edge, ev["x"], ev["n"], ev["source"], ev.get("alt", "0")))
    spec = TreeSpec(tuple(nodes), tuple(edges), doc["root"])
    report = validate_tree(spec, evidence)
    if not report.ok:
        raise TreeValidationError(report.violations)
    if warn:
        warn_internal_counts(spec)
    return spec, evidence


def load_tree(path, warn: bool = True) -> tuple[TreeSpec, list[BranchEvidence]]:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DocumentError(f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return parse_tree_document(doc, warn=warn)


def tree_document(spec: TreeSpec, evidence) -> dict:
    by_edge = {}
    for ev in evidence:
        item = {"x": int(ev.successes), "n": int(ev.sample_size), "source": ev.source_id}
        if ev.alternative_id != "0":
            item["alt"] = ev.alternative_id
        by_edge.setdefault(ev.edge, []).append(item)
    nodes = []
    for n in spec.nodes:
        item = {"id": n.id}
        if n.label:
            item["label"] = n.label
        if n.observed_count is not None:
            item["count"] = int(n.observed_count)
        nodes.append(item)
    edges = []
    for p, c in spec.edges:
        item = {"parent": p, "child": c}
        if (p, c) in by_edge:
            item["evidence"] = by_edge[(p, c)]
        edges.append(item)
    return {"root": spec.root, "nodes": nodes, "edges": edges}


def fixture_path(name: str) -> Path:
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files("wmm") / "data" / name))


def load_fixture(name: str, warn: bool = True):
    return load_tree(fixture_path(name), warn=warn)


@dataclass
class ResultDocument:
    point_estimate: float
    interval: list
    weights: dict
    scheme: str
    runs: int
    seed: int
    combination_count: int
    warnings: list = field(default_factory=list)
    log_estimate: Optional[float] = None
    interval_mass: Optional[float] = None
    combination_weights: Optional[list] = None
    version: Optional[str] = None

    @classmethod
    def from_result(cls, result, scheme, runs, seed, version=None) -> "ResultDocument":
        cw = result.combination_weights
        return cls(
            point_estimate=float(result.point_estimate),
            interval=[float(result.interval[0]), float(result.interval[1])],
            weights=result.weights.as_dict(),
            scheme=str(getattr(scheme, "value", scheme)),
            runs=int(runs),
            seed=int(seed),
            combination_count=int(result.combination_count),
            warnings=list(result.warnings),
            log_estimate=float(result.log_estimate),
            interval_mass=float(result.interval_mass),
            combination_weights=None if cw is None else [float(x) for x in cw],
            version=version,
        )

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ResultDocument":
        _check_schema(doc, RESULT_SCHEMA)
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "ResultDocument":
        return cls.from_dict(json.loads(text))


@contextlib.contextmanager
def atomic_open(path, mode="w", encoding="utf-8", newline=None):
    """Write to a temporary sibling file and rename it over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, encoding=encoding, newline=newline) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str):
    with atomic_open(path) as fh:
        fh.write(text)


def write_csv_atomic(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    write_text_atomic(path, buf.getvalue())
