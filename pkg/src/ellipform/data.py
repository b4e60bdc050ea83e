"""Grouped landmark data: named samples of K x D specimen matrices,
plus loaders/writers for the JSON and CSV dataset formats."""

import json
import os
from dataclasses import dataclass

import numpy as np


@dataclass
class LandmarkSample:
    """A named group of specimens, each a K x D landmark matrix."""

    name: str
    specimens: list
    K: int
    D: int

    def __post_init__(self):
        if len(self.specimens) < 2:
            raise ValueError(f"group {self.name!r} needs at least 2 specimens")
        specs = []
        for idx, x in enumerate(self.specimens):
            arr = np.asarray(x, dtype=float)
            if arr.shape != (self.K, self.D):
                raise ValueError(
                    f"group {self.name!r} specimen {idx} has shape {arr.shape}, "
                    f"expected ({self.K}, {self.D})")
            specs.append(arr)
        if self.K <= self.D:
            raise ValueError(
                f"group {self.name!r} needs more landmarks than coordinates "
                f"(K={self.K} vs D={self.D})")
        self.specimens = specs

    @classmethod
    def from_specimens(cls, name, specimens):
        """Build a group, reading K and D off the first specimen."""
        specimens = list(specimens)
        if not specimens:
            raise ValueError(f"group {name!r} has no specimens")
        first = np.asarray(specimens[0], dtype=float)
        if first.ndim != 2:
            raise ValueError(f"group {name!r} specimens must be 2-d matrices")
        return cls(name, specimens, K=first.shape[0], D=first.shape[1])

    @property
    def n(self):
        return len(self.specimens)

    def stacked(self):
        return np.stack(self.specimens)


def _infer_format(path, format):
    if format is not None:
        if format not in ("json", "csv"):
            raise ValueError(f"unknown dataset format {format!r}")
        return format
    ext = os.path.splitext(path)[1].lower().lstrip(".")
    if ext in ("json", "csv"):
        return ext
    raise ValueError(
        f"cannot infer the dataset format from {path!r}; pass 'json' or 'csv'")


def _specimens_from_json(gi, g):
    for key in ("name", "landmarks", "dims", "specimens"):
        if key not in g:
            raise ValueError(f"group entry {gi} is missing the {key!r} field")
    name, k, d = g["name"], int(g["landmarks"]), int(g["dims"])
    specs = []
    for si, s in enumerate(g["specimens"]):
        try:
            arr = np.asarray(s, dtype=float)
        except (TypeError, ValueError):
            raise ValueError(
                f"group {name!r} specimen {si} is not a numeric matrix")
        if arr.shape != (k, d):
            raise ValueError(
                f"group {name!r} specimen {si} has shape {arr.shape}, "
                f"expected ({k}, {d})")
        if not np.isfinite(arr).all():
            raise ValueError(
                f"group {name!r} specimen {si} has non-finite coordinates")
        specs.append(arr)
    return LandmarkSample(name, specs, K=k, D=d)


def _load_json(path):
    with open(path) as fh:
        text = fh.read()
    try:
        blob = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})")
    if not isinstance(blob, dict) or not isinstance(blob.get("groups"), list):
        raise ValueError(f"{path}: expected an object with a 'groups' list")
    groups = [_specimens_from_json(gi, g) for gi, g in enumerate(blob["groups"])]
    names = [g.name for g in groups]
    if len(set(names)) != len(names):
        raise ValueError(f"{path}: duplicate group names")
    return groups


def _load_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if header[:3] != ["group", "specimen", "landmark"] or len(header) < 4:
        raise ValueError(
            f"{path}: line 1 must be a 'group,specimen,landmark,x1,...' header")
    d = len(header) - 3
    # rows keyed by (group, specimen id) in first-appearance order
    table = {}
    group_order = []
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = [c.strip() for c in raw.split(",")]
        if len(parts) != 3 + d:
            raise ValueError(
                f"{path}: line {ln} has {len(parts) - 3} coordinate columns, "
                f"expected {d}")
        gname, sid, lm_text = parts[0], parts[1], parts[2]
        try:
            lm = int(lm_text)
        except ValueError:
            raise ValueError(f"{path}: line {ln} has landmark {lm_text!r}, "
                             "expected an integer")
        try:
            coords = [float(c) for c in parts[3:]]
        except ValueError:
            raise ValueError(
                f"{path}: line {ln} has a non-numeric coordinate")
        if not all(np.isfinite(coords)):
            raise ValueError(f"{path}: line {ln} has non-finite coordinates")
        if gname not in table:
            table[gname] = {}
            group_order.append(gname)
        spec_rows = table[gname].setdefault(sid, {})
        if lm in spec_rows:
            raise ValueError(
                f"{path}: line {ln} repeats landmark {lm} of group "
                f"{gname!r} specimen {sid!r}")
        spec_rows[lm] = coords
    groups = []
    for gname in group_order:
        specimens = []
        k = None
        for sid, rows in table[gname].items():
            if k is None:
                k = len(rows)
            if sorted(rows) != list(range(1, k + 1)):
                raise ValueError(
                    f"{path}: group {gname!r} specimen {sid!r} has landmark "
                    f"rows {sorted(rows)}, expected 1..{k}")
            specimens.append(np.array([rows[lm] for lm in range(1, k + 1)]))
        groups.append(LandmarkSample(gname, specimens, K=k, D=d))
    return groups


def load_dataset(path, format=None):
    """Read grouped landmark data from a JSON or CSV file.

    format: 'json' or 'csv'; inferred from the file extension when omitted.
    Errors name the offending group/specimen (JSON) or line (CSV).
    """
    format = _infer_format(path, format)
    if not os.path.exists(path):
        raise ValueError(f"no such dataset file: {path}")
    if format == "json":
        return _load_json(path)
    return _load_csv(path)


def save_dataset(groups, path, format=None):
    """Write grouped landmark data; coordinates survive a round trip bit-exactly."""
    format = _infer_format(path, format)
    groups = list(groups)
    if not groups:
        raise ValueError("no groups to write")
    if format == "json":
        blob = {"groups": [
            {"name": g.name, "landmarks": g.K, "dims": g.D,
             "specimens": [[[float(v) for v in row] for row in x]
                           for x in g.specimens]}
            for g in groups]}
        text = json.dumps(blob, sort_keys=True, separators=(",", ":")) + "\n"
    else:
        dims = {g.D for g in groups}
        if len(dims) != 1:
            raise ValueError("CSV needs every group to share the coordinate "
                             "dimension")
        d = dims.pop()
        for g in groups:
            if any(ch in g.name for ch in ",\n\r"):
                raise ValueError(
                    f"group name {g.name!r} cannot be stored in CSV")
        lines = ["group,specimen,landmark," +
                 ",".join(f"x{j}" for j in range(1, d + 1))]
        for g in groups:
            for si, x in enumerate(g.specimens, start=1):
                for li in range(g.K):
                    coords = ",".join(repr(float(v)) for v in x[li])
                    lines.append(f"{g.name},{si},{li + 1},{coords}")
        text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
