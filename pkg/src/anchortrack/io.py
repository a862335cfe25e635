"""JSONL record formats shared by the command-line tools.

Every line is one JSON object carrying a ``schema`` tag such as
``"anchortrack.gt_frame/1"``.  The first line of each file is a header
record with the effective configuration that produced it.  Output is
canonical (sorted keys, compact separators, shortest round-trip floats) so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .geometry import Anchor3D, EgoPose
from .instance_bank import Instance
from .simulator import GroundTruthFrame, GroundTruthLog, ScenarioConfig

SCHEMA_PREFIX = "anchortrack"
SCHEMA_VERSIONS = {
    "header": 1,
    "gt_frame": 1,
    "model_output": 1,
    "track_frame": 1,
    "tracker_state": 1,
    "metrics": 1,
    "noise_groups": 1,
    "attn_check": 1,
}


class SchemaError(ValueError):
    """A record that does not match its schema; ``line`` is 1-based when known."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


def schema_tag(kind: str) -> str:
    return f"{SCHEMA_PREFIX}.{kind}/{SCHEMA_VERSIONS[kind]}"


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    # repr-based float formatting is the shortest string that round-trips exactly
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False, default=_default)


def record(schema_kind: str, /, **fields) -> dict:
    return {"schema": schema_tag(schema_kind), **fields}


def write_jsonl(path, records: Iterable[dict]) -> None:
    # serialise everything first so a failing record never leaves a truncated file
    text = "".join(dumps(rec) + "\n" for rec in records)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_json(path, obj) -> None:
    text = dumps(obj) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON ({exc.msg})", str(path), exc.lineno) from exc


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)``; blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", str(path), n) from exc
            if not isinstance(obj, dict):
                raise SchemaError("expected a JSON object", str(path), n)
            yield n, obj


def check_schema(obj: dict, kind: str, path=None, line=None) -> None:
    tag = obj.get("schema")
    if tag != schema_tag(kind):
        raise SchemaError(f"expected schema {schema_tag(kind)!r}, got {tag!r}", path, line)


def read_records(path, header_kind: str, body_kind: str) -> tuple[dict, list[tuple[int, dict]]]:
    """Split a file into its header and body records, checking both schemas."""
    header = None
    body = []
    for n, obj in iter_jsonl(path):
        if header is None:
            check_schema(obj, "header", str(path), n)
            if obj.get("kind") != header_kind:
                raise SchemaError(f"expected a {header_kind!r} file, got {obj.get('kind')!r}", str(path), n)
            header = obj
            continue
        check_schema(obj, body_kind, str(path), n)
        body.append((n, obj))
    if header is None:
        raise SchemaError("empty file", str(path))
    return header, body


def header(kind: str, config: dict) -> dict:
    return record("header", kind=kind, config=config)


def _parse(fn, path, line):
    try:
        return fn()
    except SchemaError:
        raise
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        raise SchemaError(str(exc), path, line) from exc


# ground truth ----------------------------------------------------------------

def gt_records(log: GroundTruthLog) -> Iterator[dict]:
    yield header("gt", {"scenario": log.config.to_dict()})
    for frame in log.frames:
        yield record(
            "gt_frame",
            index=frame.index,
            pose=frame.pose.to_dict(),
            objects=[{"id": oid, "anchor": a.to_dict()} for oid, a in frame.objects],
        )


def read_gt(path) -> GroundTruthLog:
    hdr, body = read_records(path, "gt", "gt_frame")
    path = str(path)
    cfg = _parse(lambda: ScenarioConfig.from_dict(hdr["config"]["scenario"]), path, 1)
    frames = []
    for n, obj in body:
        def build(obj=obj):
            objects = tuple((int(o["id"]), Anchor3D.from_dict(o["anchor"])) for o in obj["objects"])
            return GroundTruthFrame(int(obj["index"]), EgoPose.from_dict(obj["pose"]), objects)
        frames.append(_parse(build, path, n))
    _check_increasing([f.index for f in frames], [n for n, _ in body], path)
    return GroundTruthLog(cfg, tuple(frames))


def _check_increasing(indices, lines, path):
    for k in range(1, len(indices)):
        if indices[k] <= indices[k - 1]:
            raise SchemaError(f"frame index {indices[k]} does not follow {indices[k - 1]}", path, lines[k])


# model outputs -----------------------------------------------------------------

def model_output_record(index: int, pose: EgoPose, num_temporal: int, outputs) -> dict:
    return record(
        "model_output",
        index=index,
        pose=pose.to_dict(),
        num_temporal=num_temporal,
        outputs=[[float(c), a.as_array().tolist()] for c, a in outputs],
    )


def read_model_outputs(path) -> tuple[dict, list[tuple[int, EgoPose, int, list]]]:
    hdr, body = read_records(path, "model_output", "model_output")
    path = str(path)
    frames = []
    for n, obj in body:
        def build(obj=obj):
            outs = [(float(c), Anchor3D.from_array(a)) for c, a in obj["outputs"]]
            return int(obj["index"]), EgoPose.from_dict(obj["pose"]), int(obj["num_temporal"]), outs
        frames.append(_parse(build, path, n))
    _check_increasing([f[0] for f in frames], [n for n, _ in body], path)
    return hdr, frames


# tracks ------------------------------------------------------------------------

def instance_to_list(inst: Instance) -> list:
    return [inst.id, inst.confidence, inst.anchor.as_array().tolist()]


def instance_from_list(v) -> Instance:
    track_id, c, a = v
    return Instance(float(c), Anchor3D.from_array(a), None if track_id is None else int(track_id))


def track_record(index: int, pose: EgoPose, results, updated_temporal=None) -> dict:
    fields = {
        "index": index,
        "pose": pose.to_dict(),
        "results": [instance_to_list(i) for i in results],
    }
    if updated_temporal is not None:
        fields["updated_temporal"] = [instance_to_list(i) for i in updated_temporal]
    return record("track_frame", **fields)


def read_tracks(path) -> tuple[dict, list[tuple[int, list[Instance]]]]:
    hdr, body = read_records(path, "tracks", "track_frame")
    path = str(path)
    frames = []
    for n, obj in body:
        def build(obj=obj):
            results = [instance_from_list(v) for v in obj["results"]]
            if any(r.id is None for r in results):
                raise ValueError("track result without an id")
            return int(obj["index"]), results
        frames.append(_parse(build, path, n))
    _check_increasing([f[0] for f in frames], [n for n, _ in body], path)
    return hdr, frames


def read_boxes(path) -> list[Anchor3D]:
    """One anchor per line, either bare or wrapped as ``{"anchor": {...}}``."""
    out = []
    for n, obj in iter_jsonl(path):
        rec = obj.get("anchor", obj)
        out.append(_parse(lambda rec=rec: Anchor3D.from_dict(rec), str(path), n))
    return out
