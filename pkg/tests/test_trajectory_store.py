import json
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trajsel.bench_suite import make_problem
from trajsel.featvec import FeatureVector
from trajsel.optimizers import AlgorithmId, collect_portfolio_runs
from trajsel.trajectory_store import (
    PERFORMANCE_COLUMNS,
    ChecksumError,
    FeatureMatrix,
    PerformanceTable,
    RunKey,
    RunNotFound,
    RunRecord,
    SchemaVersionError,
    TrajectoryStore,
    read_container,
    write_container,
)


@pytest.fixture(scope="module")
def records():
    p = make_problem("train:8:0:5")
    res = collect_portfolio_runs(p, n_runs=2, a2_budgets=[100, 350])
    return [RunRecord(RunKey.of(p.id, r.run_index, r.seed), r.a1_log, r.series,
                      r.split_precision, r.precisions) for r in res]


def test_run_roundtrip(tmp_path, records):
    store = TrajectoryStore(tmp_path, "train")
    store.commit([store.write_run(r) for r in records])
    for r in records:
        back = store.read_run(r.key)
        assert back.log == r.log
        assert back.series == r.series
        assert back.precisions == r.precisions
        assert back.split_precision == r.split_precision
    path = tmp_path / "train" / "8" / "0" / "0.trj"
    assert path.exists()


def test_unknown_key(tmp_path, records):
    store = TrajectoryStore(tmp_path, "train")
    with pytest.raises(RunNotFound):
        store.read_run(records[0].key)


def test_idempotent_writes(tmp_path, records):
    store = TrajectoryStore(tmp_path, "train")
    for _ in range(3):
        store.commit([store.write_run(r) for r in records])
    files = [f for _, _, fs in os.walk(tmp_path) for f in fs if f.endswith(".trj")]
    assert len(files) == len(store.manifest["entries"]) == len(records)


def test_checksum_validated(tmp_path, records):
    store = TrajectoryStore(tmp_path, "train")
    store.commit([store.write_run(records[0])])
    path = tmp_path / "train" / store.relpath(records[0].key)
    data = bytearray(path.read_bytes())
    data[-1] ^= 1
    path.write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        store.read_run(records[0].key)


def test_schema_version_mismatch(tmp_path):
    path = tmp_path / "x.bin"
    write_container(path, b"TEST", {"a": 1}, {"v": np.arange(3.0)})
    data = bytearray(path.read_bytes())
    data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(SchemaVersionError):
        read_container(path, b"TEST")


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=30))
def test_container_float_exact(vals):
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "c.bin")
        write_container(path, b"TEST", {"vals": vals}, {"v": np.array(vals)})
        h, a = read_container(path, b"TEST")
    assert np.array_equal(a["v"], np.array(vals))
    assert h["vals"] == vals


def _keys(n):
    return [RunKey("train", str(1 + i % 3), i // 3, 5, 0, 1000 + i) for i in range(n)]


@given(st.lists(st.floats(0, 1e300, allow_nan=False), min_size=36, max_size=36))
def test_performance_csv_bit_exact(vals):
    import tempfile

    table = PerformanceTable(_keys(3), (100, 350), np.array(vals).reshape(3, 2, 6))
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "performance.csv")
        table.write(path)
        back = PerformanceTable.read(path)
        meta = json.load(open(path + ".json"))
    assert back.keys == table.keys and np.array_equal(back.values, table.values)
    assert meta["columns"] == list(PERFORMANCE_COLUMNS)


def test_performance_rows_unique():
    keys = _keys(1)
    rows = [(keys[0], a, 100, 1.0) for a in AlgorithmId] + [(keys[0], AlgorithmId.DE, 100, 2.0)]
    with pytest.raises(ValueError):
        PerformanceTable.from_rows(rows)
    with pytest.raises(ValueError):
        PerformanceTable(keys, (100,), np.full((1, 1, 6), -1.0))


def test_export_and_quarantine(tmp_path, records):
    store = TrajectoryStore(tmp_path, "train")
    broken = RunRecord(RunKey("train", "8", 0, 5, 7, 99), records[0].log, records[0].series, 1.0,
                       {(AlgorithmId.DE, 100): 0.5})
    store.commit([store.write_run(r) for r in records + [broken]])
    table, quarantine = store.export_performance_table(str(tmp_path / "performance.csv"), [100, 350])
    assert len(table) == 2 and len(quarantine) == 1
    lines = (tmp_path / "performance.csv").read_text().splitlines()
    assert lines[0] == ",".join(PERFORMANCE_COLUMNS)
    assert len(lines) == 1 + 2 * 6 * 2


def test_empty_export_header_only(tmp_path):
    store = TrajectoryStore(tmp_path, "train")
    store.export_performance_table(str(tmp_path / "p.csv"), [100])
    assert (tmp_path / "p.csv").read_text() == ",".join(PERFORMANCE_COLUMNS) + "\n"


def test_feature_matrix_roundtrip(tmp_path):
    keys = _keys(4)
    vecs = [FeatureVector(("a", "b", "c"), np.array([0.1 * i, np.nan if i == 2 else 1 / 3, -i]))
            for i in range(4)]
    fm = FeatureMatrix.from_vectors(keys, vecs, "v1")
    fm.write(str(tmp_path / "f.csv"))
    back = FeatureMatrix.read(str(tmp_path / "f.csv"))
    assert back.keys == keys and back.names == ("a", "b", "c")
    assert np.array_equal(back.values, fm.values, equal_nan=True)
    assert back.catalog_version == "v1"


def test_enumerate_large_manifest_fast(tmp_path):
    import time

    store = TrajectoryStore(tmp_path, "train")
    entries = [(f"{f}/{i}/{r}.trj", {"key": RunKey("train", str(f), i, 5, r, r).__dict__, "sha256": "0"})
               for f in range(1, 25) for i in range(10) for r in range(100)]
    store.commit(entries)
    t = time.perf_counter()
    keys = TrajectoryStore(tmp_path, "train").keys()
    assert len(keys) == 24000 and time.perf_counter() - t < 5.0
