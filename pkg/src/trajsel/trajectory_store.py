"""On-disk persistence for runs, feature matrices and performance tables.

Run files (``.trj``) and model bundles share one binary container::

    magic (4 bytes) | format version (uint16) | header length (uint32)
    | UTF-8 JSON header | raw little-endian array payload

The JSON header lists every array with dtype, shape and byte offset.
Tables are CSV with a JSON sidecar (columns, units, content hash); floats
are written with ``repr`` so they parse back bit-identically.
"""

import csv
import hashlib
import io
import json
import math
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .bench_suite import ProblemId, Suite
from .featvec import parse_validity_hex, validity_mask_hex
from .optimizers.portfolio import AlgorithmId
from .runlog import RunLog
from .ts_features import CmaStateSeries

__all__ = [
    "ChecksumError",
    "FeatureMatrix",
    "PERFORMANCE_COLUMNS",
    "PerformanceTable",
    "RunKey",
    "RunNotFound",
    "SCHEMA_VERSION",
    "SchemaVersionError",
    "TrajectoryStore",
    "read_container",
    "write_container",
]

SCHEMA_VERSION = 1
PERFORMANCE_COLUMNS = ("suite", "fid", "iid", "dim", "run", "seed", "algorithm", "a2_budget", "precision")
KEY_COLUMNS = ("suite", "fid", "iid", "dim", "run", "seed")


class SchemaVersionError(RuntimeError):
    """Stored artifact was written with an incompatible schema version."""


class RunNotFound(KeyError):
    pass


class ChecksumError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# binary container


def write_container(path, magic, header, arrays):
    """Atomically write ``header`` (JSON-able) and named numpy ``arrays``."""
    header = dict(header)
    header["schema_version"] = SCHEMA_VERSION
    specs, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        b = a.tobytes()
        specs.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset})
        blobs.append(b)
        offset += len(b)
    header["arrays"] = specs
    hb = json.dumps(header, sort_keys=True, allow_nan=True).encode("utf-8")
    data = magic + struct.pack("<HI", SCHEMA_VERSION, len(hb)) + hb + b"".join(blobs)
    _atomic_write(path, data)
    return data


def read_container(path, magic):
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_container(data, magic)


def parse_container(data, magic):
    if data[:4] != magic:
        raise ValueError(f"not a {magic!r} container")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"container schema version {version}, this build reads {SCHEMA_VERSION}; "
            "re-run the producing command or migrate the dataset"
        )
    header = json.loads(data[10 : 10 + hlen].decode("utf-8"))
    base = 10 + hlen
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        n = int(np.prod(spec["shape"])) * dt.itemsize
        start = base + spec["offset"]
        arrays[spec["name"]] = np.frombuffer(data[start : start + n], dtype=dt).reshape(spec["shape"]).copy()
    return header, arrays


def _atomic_write(path, data):
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data if isinstance(data, bytes) else data.encode("utf-8"))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_bytes(b):
    return hashlib.sha256(b).hexdigest()


def sha256_file(path):
    with open(path, "rb") as fh:
        return sha256_bytes(fh.read())


# --------------------------------------------------------------------------
# keys


@dataclass(frozen=True, order=True)
class RunKey:
    suite: str
    function_id: str
    instance_id: int
    dimension: int
    run_index: int
    seed: int

    @classmethod
    def of(cls, pid, run_index, seed):
        return cls(Suite(pid.suite).value, str(pid.function_id), int(pid.instance_id),
                   int(pid.dimension), int(run_index), int(seed))

    @property
    def problem_id(self):
        fid = int(self.function_id) if self.suite == Suite.TRAIN.value else self.function_id
        return ProblemId(Suite(self.suite), fid, self.instance_id, self.dimension)

    @property
    def group_instance(self):
        return (self.suite, self.function_id, self.instance_id)

    @property
    def group_function(self):
        return (self.suite, self.function_id)

    def sort_key(self):
        fid = self.function_id
        return (self.suite, (0, int(fid), "") if fid.isdigit() else (1, 0, fid),
                self.instance_id, self.dimension, self.run_index)

    def as_row(self):
        return [self.suite, self.function_id, str(self.instance_id), str(self.dimension),
                str(self.run_index), str(self.seed)]

    @classmethod
    def from_row(cls, row):
        suite, fid, iid, dim, run, seed = row[:6]
        return cls(suite, fid, int(iid), int(dim), int(run), int(seed))

    def __str__(self):
        return f"{self.suite}:{self.function_id}:{self.instance_id}:{self.dimension}#{self.run_index}"


def _fmt(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


# --------------------------------------------------------------------------
# performance table


@dataclass
class PerformanceTable:
    """Precision per (run, A2 budget, algorithm); ``values`` has shape (runs, budgets, 6)."""

    keys: list
    budgets: tuple
    values: np.ndarray

    def __post_init__(self):
        self.budgets = tuple(int(b) for b in self.budgets)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.keys), len(self.budgets), len(AlgorithmId))
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("duplicate run keys in performance table")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("precisions must be finite and non-negative")

    def __len__(self):
        return len(self.keys)

    def at_budget(self, budget):
        return self.values[:, self.budgets.index(int(budget)), :]

    def subset(self, keys):
        idx = {k: i for i, k in enumerate(self.keys)}
        sel = [idx[k] for k in keys]
        return PerformanceTable(list(keys), self.budgets, self.values[sel])

    def rows(self):
        for i, k in enumerate(self.keys):
            for bi, b in enumerate(self.budgets):
                for a in AlgorithmId:
                    yield k, a, b, float(self.values[i, bi, a])

    @classmethod
    def from_rows(cls, rows):
        rows = list(rows)
        keys = sorted({r[0] for r in rows}, key=RunKey.sort_key)
        budgets = sorted({int(r[2]) for r in rows})
        kidx = {k: i for i, k in enumerate(keys)}
        vals = np.full((len(keys), len(budgets), len(AlgorithmId)), np.nan)
        seen = set()
        for k, a, b, p in rows:
            cell = (k, int(a), int(b))
            if cell in seen:
                raise ValueError(f"duplicate performance row for {k} {AlgorithmId(a).name} {b}")
            seen.add(cell)
            vals[kidx[k], budgets.index(int(b)), int(a)] = p
        if np.isnan(vals).any():
            raise ValueError("incomplete performance table")
        return cls(keys, budgets, vals)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PERFORMANCE_COLUMNS)
        for k, a, b, p in self.rows():
            w.writerow(k.as_row() + [a.name, str(b), _fmt(p)])
        return buf.getvalue()

    def write(self, path):
        text = self.to_csv()
        _atomic_write(path, text)
        _write_sidecar(path, list(PERFORMANCE_COLUMNS), text,
                       units={"precision": "f(best) - f_opt, clamped at 0", "a2_budget": "evaluations"})
        return path

    @classmethod
    def read(cls, path):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            if tuple(header) != PERFORMANCE_COLUMNS:
                raise ValueError(f"unexpected performance columns {header}")
            rows = [(RunKey.from_row(row), AlgorithmId[row[6]], int(row[7]), float(row[8])) for row in r]
        if not rows:
            return cls([], (), np.empty((0, 0, len(AlgorithmId))))
        return cls.from_rows(rows)


def _write_sidecar(path, columns, text, units=None, extra=None):
    meta = {
        "schema_version": SCHEMA_VERSION,
        "columns": columns,
        "units": units or {},
        "sha256": sha256_bytes(text.encode("utf-8")),
    }
    meta.update(extra or {})
    _atomic_write(path + ".json", json.dumps(meta, indent=1, sort_keys=True))


# --------------------------------------------------------------------------
# feature matrix


@dataclass
class FeatureMatrix:
    keys: list
    names: tuple
    values: np.ndarray  # (runs, features), NaN where invalid
    catalog_version: str = ""

    def __post_init__(self):
        self.names = tuple(self.names)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.keys), len(self.names))

    def __len__(self):
        return len(self.keys)

    @property
    def valid(self):
        return np.isfinite(self.values)

    def subset(self, keys):
        idx = {k: i for i, k in enumerate(self.keys)}
        return FeatureMatrix(list(keys), self.names, self.values[[idx[k] for k in keys]], self.catalog_version)

    def columns(self, names):
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(self.keys, tuple(names), self.values[:, idx], self.catalog_version)

    def hstack(self, other):
        if self.keys != other.keys:
            other = other.subset(self.keys)
        return FeatureMatrix(self.keys, self.names + other.names,
                             np.hstack([self.values, other.values]),
                             "+".join(v for v in (self.catalog_version, other.catalog_version) if v))

    @classmethod
    def from_vectors(cls, keys, vectors, catalog_version=""):
        names = vectors[0].names if vectors else ()
        for v in vectors:
            if v.names != names:
                raise ValueError("feature vectors disagree on names")
        vals = np.array([v.values for v in vectors]) if vectors else np.empty((0, len(names)))
        return cls(list(keys), names, vals, catalog_version)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(KEY_COLUMNS) + list(self.names) + ["validity"])
        for k, row in zip(self.keys, self.values):
            w.writerow(k.as_row() + [_fmt(v) for v in row] + [validity_mask_hex(np.isfinite(row))])
        return buf.getvalue()

    def write(self, path):
        text = self.to_csv()
        _atomic_write(path, text)
        _write_sidecar(path, list(KEY_COLUMNS) + list(self.names) + ["validity"], text,
                       extra={"catalog_version": self.catalog_version})
        return path

    @classmethod
    def read(cls, path):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            names = tuple(header[len(KEY_COLUMNS) : -1])
            keys, vals = [], []
            for row in r:
                keys.append(RunKey.from_row(row))
                v = np.array([float(x) for x in row[len(KEY_COLUMNS) : -1]])
                valid = parse_validity_hex(row[-1], len(names))
                if not np.array_equal(valid, np.isfinite(v)):
                    raise ValueError(f"validity mask disagrees with values for {keys[-1]}")
                vals.append(v)
        version = ""
        if os.path.exists(path + ".json"):
            with open(path + ".json") as fh:
                version = json.load(fh).get("catalog_version", "")
        return cls(keys, names, np.array(vals).reshape(len(keys), len(names)), version)


# --------------------------------------------------------------------------
# run store


RUN_MAGIC = b"TRJ1"


@dataclass
class RunRecord:
    key: RunKey
    log: RunLog
    series: CmaStateSeries
    split_precision: float
    precisions: dict = field(default_factory=dict)  # (AlgorithmId, budget) -> precision
    meta: dict = field(default_factory=dict)


class TrajectoryStore:
    """One suite of one scenario: ``<scenario_dir>/<suite>/<fid>/<iid>/<run>.trj`` plus a manifest."""

    def __init__(self, scenario_dir, suite):
        self.root = os.path.join(scenario_dir, suite)
        self.suite = suite
        self.manifest_path = os.path.join(self.root, "manifest.json")
        self._manifest = None

    # -- manifest -----------------------------------------------------------

    @property
    def manifest(self):
        if self._manifest is None:
            if os.path.exists(self.manifest_path):
                with open(self.manifest_path) as fh:
                    m = json.load(fh)
                if m.get("schema_version") != SCHEMA_VERSION:
                    raise SchemaVersionError(
                        f"manifest schema {m.get('schema_version')} != {SCHEMA_VERSION}"
                    )
                self._manifest = m
            else:
                self._manifest = {"schema_version": SCHEMA_VERSION, "sealed": False, "entries": {}}
        return self._manifest

    def commit(self, entries=(), sealed=None):
        """Single-writer manifest update with ``(relpath, entry)`` pairs."""
        m = self.manifest
        entries = list(entries)
        for rel, entry in entries:
            m["entries"][rel] = entry
        if entries and sealed is None:
            sealed = False
        if sealed is not None:
            m["sealed"] = bool(sealed)
        _atomic_write(self.manifest_path, json.dumps(m, indent=0, sort_keys=True))

    def keys(self, suite=None, dimension=None):
        out = []
        for e in self.manifest["entries"].values():
            k = RunKey(**e["key"])
            if (suite is None or k.suite == suite) and (dimension is None or k.dimension == dimension):
                out.append(k)
        return sorted(out, key=RunKey.sort_key)

    def __contains__(self, key):
        return key.suite == self.suite and self.relpath(key) in self.manifest["entries"]

    @property
    def sealed(self):
        return bool(self.manifest.get("sealed"))

    # -- runs ---------------------------------------------------------------

    def relpath(self, key):
        if key.suite != self.suite:
            raise ValueError(f"run {key} does not belong to suite {self.suite}")
        return os.path.join(key.function_id, str(key.instance_id), f"{key.run_index}.trj")

    def encode_run(self, rec):
        perf = {f"{AlgorithmId(a).name}@{b}": p for (a, b), p in sorted(rec.precisions.items())}
        header = {
            "key": asdict(rec.key),
            "split_index": rec.log.split_index,
            "split_precision": rec.split_precision,
            "performance": perf,
            "meta": rec.meta,
        }
        arrays = {"X": rec.log.X, "f": rec.log.f, "psi": rec.series.rows,
                  "psi_repaired": rec.series.repaired.astype(np.uint8)}
        return header, arrays

    def write_run(self, rec):
        """Write one run file; returns the manifest entry (idempotent for equal content)."""
        rel = self.relpath(rec.key)
        path = os.path.join(self.root, rel)
        header, arrays = self.encode_run(rec)
        data = write_container(path, RUN_MAGIC, header, arrays)
        return rel, {"key": asdict(rec.key), "sha256": sha256_bytes(data)}

    def read_run(self, key, verify=True):
        rel = self.relpath(key)
        entry = self.manifest["entries"].get(rel)
        path = os.path.join(self.root, rel)
        if entry is None or not os.path.exists(path):
            raise RunNotFound(str(key))
        with open(path, "rb") as fh:
            data = fh.read()
        if verify and sha256_bytes(data) != entry["sha256"]:
            raise ChecksumError(f"checksum mismatch for {path}")
        return decode_run(data)

    # -- tables -------------------------------------------------------------

    def export_performance_table(self, path, budgets, suite=None, dimension=None):
        """Write the performance CSV; incomplete runs go to ``quarantine.json``."""
        rows, quarantine = [], []
        for key in self.keys(suite, dimension):
            rec = self.read_run(key)
            missing = [(a.name, b) for a in AlgorithmId for b in budgets if (a, b) not in rec.precisions]
            if missing:
                quarantine.append({"key": str(key), "missing": missing})
                continue
            rows += [(key, a, b, rec.precisions[(a, b)]) for b in budgets for a in AlgorithmId]
        table = PerformanceTable.from_rows(rows) if rows else PerformanceTable([], tuple(budgets), np.empty((0, len(budgets), 6)))
        table.write(path)
        qpath = os.path.join(os.path.dirname(path), "quarantine.json")
        _atomic_write(qpath, json.dumps(quarantine, indent=1))
        return table, quarantine


def decode_run(data):
    header, arrays = parse_container(data, RUN_MAGIC)
    key = RunKey(**header["key"])
    log = RunLog(key.problem_id, key.seed, split_index=header["split_index"])
    log.xs = [row.copy() for row in arrays["X"]]
    log.fs = arrays["f"].tolist()
    series = CmaStateSeries(arrays["psi"], arrays["psi_repaired"].astype(bool))
    precisions = {}
    for k, v in header["performance"].items():
        name, b = k.split("@")
        precisions[(AlgorithmId[name], int(b))] = v
    return RunRecord(key, log, series, header["split_precision"], precisions, header.get("meta", {}))
