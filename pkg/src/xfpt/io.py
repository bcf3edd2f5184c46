"""Config parsing and CSV/JSON artifact writers.

Every artifact starts with a provenance header (resolved config, seed, tool
version).  CSV files carry it as a single ``# {json}`` comment line; JSON files
under a top-level ``"header"`` key.  Floats go out with 17 significant digits
by default so values survive a round trip.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import numpy as np

from .fpt import FptDistribution
from .graphs import (
    BetheSpec,
    CometSpec,
    HeadGraph,
    InvalidModelError,
    LeakyLoopSpec,
    build_clique_head,
    ensure_valid,
)

MODEL_KINDS = ("comet", "leaky-loop", "bethe")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``key.path=value`` overrides; values are parsed as JSON when possible."""
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        path, raw = item.split("=", 1)
        keys = path.lstrip("-").split(".")
        if not all(keys):
            raise ConfigError(f"bad override path {path!r}")
        node = cfg
        for k in keys[:-1]:
            nxt = node.setdefault(k, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {path!r} descends into a non-object")
            node = nxt
        node[keys[-1]] = _parse_value(raw)
    return cfg


def head_from_config(block: dict) -> HeadGraph:
    if "clique" in block:
        return build_clique_head(int(block["clique"]), int(block.get("start", 0)), int(block.get("exit", int(block["clique"]) - 1)))
    try:
        edges = frozenset(tuple(sorted((int(a), int(b)))) for a, b in block["edges"])
        loops = tuple(sorted((int(k), float(w)) for k, w in block.get("loops", {}).items()))
        return HeadGraph(
            node_count=int(block["nodes"]),
            edges=edges,
            start=int(block["start"]),
            exit=int(block["exit"]),
            loops=loops,
        )
    except KeyError as exc:
        raise ConfigError(f"head block missing field {exc}") from exc


def model_from_config(block: dict):
    """Build a model from ``{"model": kind, ...fields}``; raises on invalid input."""
    if not isinstance(block, dict) or "model" not in block:
        raise ConfigError('model block must be an object with a "model" field')
    kind = block["model"]
    try:
        if kind == "leaky-loop":
            spec = LeakyLoopSpec(float(block["s"]), float(block.get("mu", 1.0)), int(block["d"]))
        elif kind == "bethe":
            spec = BetheSpec(int(block["z"]), int(block["d"]))
        elif kind == "comet":
            if "heads" in block:
                raise ConfigError("only a single head is supported")
            head = head_from_config(block["head"])
            mu = float(block.get("mu", 1.0))
            if "L" in block:
                L = int(block["L"])
            elif "d" in block:
                L = int(block["d"]) - CometSpec(head, 0, mu).d_head
            else:
                raise ConfigError('comet needs "L" or "d"')
            spec = CometSpec(head, L, mu)
        else:
            raise ConfigError(f"unknown model {kind!r}; expected one of {MODEL_KINDS}")
    except KeyError as exc:
        raise ConfigError(f"{kind} model missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (ConfigError, InvalidModelError)):
            raise
        raise ConfigError(f"{kind} model: {exc}") from exc
    ensure_valid(spec)
    return spec


def model_to_config(spec) -> dict:
    if isinstance(spec, LeakyLoopSpec):
        return {"model": "leaky-loop", "s": spec.stay, "mu": spec.survival, "d": spec.distance}
    if isinstance(spec, BetheSpec):
        return {"model": "bethe", "z": spec.z, "d": spec.distance}
    if isinstance(spec, CometSpec):
        h = spec.head
        return {
            "model": "comet",
            "head": {
                "nodes": h.node_count,
                "edges": sorted([list(e) for e in h.edges]),
                "start": h.start,
                "exit": h.exit,
                "loops": {str(v): w for v, w in h.loops},
            },
            "L": spec.tail_hops,
            "mu": spec.survival,
        }
    raise TypeError(f"unsupported model {type(spec).__name__}")


# ----------------------------------------------------------------- writers


def fmt(x, precision: int = 17) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, f".{precision}g")


def jsonable(obj):
    """Recursively convert numpy values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj, header: dict | None = None) -> Path:
    path = Path(path)
    body = dict(obj)
    if header is not None:
        body = {"header": header, **body}
    path.write_text(dumps(body))
    return path


def write_csv(path, columns, rows, header: dict | None = None, precision: int = 17) -> Path:
    path = Path(path)
    lines = []
    if header is not None:
        lines.append("# " + json.dumps(jsonable(header), sort_keys=True, allow_nan=False))
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt(v, precision) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[dict | None, list[str], np.ndarray]:
    """Inverse of :func:`write_csv`: (header, column names, float matrix)."""
    header = None
    lines = Path(path).read_text().splitlines()
    if lines and lines[0].startswith("# "):
        header = json.loads(lines[0][2:])
        lines = lines[1:]
    cols = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]) if len(lines) > 1 else np.empty((0, len(cols)))
    return header, cols, data


def distribution_rows(dist: FptDistribution):
    t, S = dist.survival_table()
    p = np.zeros(len(t))
    p[dist.d :] = dist.masses
    return list(zip(t.tolist(), p.tolist(), S.tolist()))


def write_distribution(path, dist: FptDistribution, header: dict | None = None, precision: int = 17) -> Path:
    meta = {
        "d": dist.d,
        "K": dist.K,
        "defect": dist.defect,
        "residual_bound": dist.residual_bound,
    }
    if header is not None:
        meta = {**header, "distribution": meta}
    return write_csv(path, ["t", "p", "S"], distribution_rows(dist), meta, precision)
