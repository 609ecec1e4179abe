import json

import numpy as np
import pytest

from dateline.data import (
    DataError,
    Dataset,
    ObjectCatalog,
    Preference,
    dump_catalog,
    dump_preferences,
    load_dataset,
    one_hot_catalog,
    save_dataset,
    validate_dataset,
)


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def files(tmp_path):
    cat = write_jsonl(tmp_path / "cat.jsonl", [
        {"id": f"o{i}", "features": [float(i), 1.0]} for i in range(1, 4)
    ])
    prefs = write_jsonl(tmp_path / "prefs.jsonl", [{"worker": "a", "ranking": ["o2", "o1"]}])
    return cat, prefs


def test_minimal_load(files):
    d = load_dataset(*files)
    assert len(d.catalog) == 3 and d.W == 1 and d.K == 2


def test_unknown_object_named(files):
    cat, prefs = files
    write_jsonl(prefs, [{"worker": "a", "ranking": ["o2", "o9"]}])
    with pytest.raises(DataError, match="o9"):
        load_dataset(cat, prefs)


def test_K_is_max_length():
    cat = one_hot_catalog(6)
    d = Dataset(cat, [Preference("a", ["o0", "o1", "o2"]),
                      Preference("b", ["o0", "o1", "o2", "o3", "o4"])])
    assert d.K == 5
    assert Dataset(cat, d.preferences[:1]).K == 3


def test_validate_reports_rules():
    cat = one_hot_catalog(3)
    assert validate_dataset(Dataset(cat, [Preference("a", ["o0", "o1"])])) == []
    dup = validate_dataset(Dataset(cat, [Preference("a", ["o1", "o1"])]))
    assert [v.rule for v in dup] == ["duplicate"]
    short = validate_dataset(Dataset(cat, [Preference("a", ["o1"])]))
    assert [v.rule for v in short] == ["length"] and short[0].index == 0


def test_parse_error_has_line_number(files):
    cat, prefs = files
    lines = [json.dumps({"worker": "a", "ranking": ["o1", "o2"]})] * 6 + ["{not json"]
    prefs.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(DataError, match=r":7:"):
        load_dataset(cat, prefs)


@pytest.mark.parametrize("rows, msg", [
    ([{"worker": "a", "ranking": ["o1"]}], "below 2"),
    ([{"worker": "a", "ranking": ["o1", "o1"]}], "twice"),
    ([{"ranking": ["o1", "o2"]}], "worker"),
])
def test_bad_preferences(files, rows, msg):
    cat, prefs = files
    write_jsonl(prefs, rows)
    with pytest.raises(DataError, match=msg):
        load_dataset(cat, prefs)


def test_catalog_invariants():
    with pytest.raises(DataError):
        ObjectCatalog(["a", "a"], [[1.0], [2.0]])
    with pytest.raises(DataError):
        ObjectCatalog(["a"], [[1.0]])
    with pytest.raises(DataError):
        ObjectCatalog(["a", "b"], [[1.0], [np.nan]])


def test_round_trip_is_bit_exact(files, tmp_path):
    cat, prefs = files
    write_jsonl(cat, [{"id": "x", "features": [0.1, 1e-300]}, {"id": "y", "features": [1 / 3, -2.5]}])
    write_jsonl(prefs, [{"worker": "a", "ranking": ["y", "x"]}, {"worker": "b", "ranking": ["x", "y"]}])
    d = load_dataset(cat, prefs)
    c2, p2 = tmp_path / "c2.jsonl", tmp_path / "p2.jsonl"
    save_dataset(d, c2, p2)
    assert c2.read_bytes() == cat.read_bytes()
    assert p2.read_bytes() == prefs.read_bytes()
    d2 = load_dataset(c2, p2)
    assert d2.catalog == d.catalog and d2.preferences == d.preferences


def test_duplicates_accepted_as_independent():
    cat = one_hot_catalog(3)
    p = Preference("a", ["o0", "o1"])
    d = Dataset(cat, [p, p])
    assert validate_dataset(d) == [] and d.n_per_worker() == {"a": 2}


def test_packed_layout():
    cat = one_hot_catalog(4)
    d = Dataset(cat, [Preference("b", ["o3", "o0"]), Preference("a", ["o1", "o2", "o0"])])
    items, offsets, widx = d.packed()
    assert items.tolist() == [3, 0, 1, 2, 0]
    assert offsets.tolist() == [0, 2, 5]
    assert widx.tolist() == [0, 1] and d.workers == ["b", "a"]
