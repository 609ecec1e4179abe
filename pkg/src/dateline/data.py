"""Objects, workers, preferences and the JSON Lines formats they live in.

Object ids are opaque strings. Internally every object gets a dense index
``0..L-1`` in catalog order, so score vectors and Laplacians are plain arrays.

Catalog file, one object per line::

    {"id": "o1", "features": [0.5, -1.0]}

Preferences file, one ranking per line, best object first::

    {"worker": "alice", "ranking": ["o3", "o1", "o2"]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or invalid input data. ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Violation:
    index: int
    rule: str
    message: str

    def __str__(self):
        return f"preference {self.index}: [{self.rule}] {self.message}"


@dataclass(frozen=True)
class Preference:
    worker_id: str
    ranking: tuple

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple(self.ranking))

    def __len__(self):
        return len(self.ranking)


class ObjectCatalog:
    """Ordered objects with fixed-dimension feature vectors."""

    def __init__(self, ids: Sequence[str], features):
        ids = [str(i) for i in ids]
        feats = np.array(features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != len(ids):
            raise DataError(
                f"expected a ({len(ids)}, m) feature matrix, got shape {feats.shape}"
            )
        if feats.shape[1] < 1:
            raise DataError("feature dimension must be at least 1")
        if len(ids) < 2:
            raise DataError(f"catalog needs at least 2 objects, got {len(ids)}")
        if not np.all(np.isfinite(feats)):
            raise DataError("features must be finite")
        index = {}
        for pos, oid in enumerate(ids):
            if oid in index:
                raise DataError(f"duplicate object id {oid!r}")
            index[oid] = pos
        feats.setflags(write=False)
        self.ids = tuple(ids)
        self.features = feats
        self.index = index

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, ObjectCatalog)
            and self.ids == other.ids
            and np.array_equal(self.features, other.features)
        )

    def __repr__(self):
        return f"ObjectCatalog(L={len(self)}, m={self.dim})"


def one_hot_catalog(n_objects: int, prefix: str = "o") -> ObjectCatalog:
    """Catalog whose features are the identity matrix.

    A linear score model on these features has one free log-score per object,
    which is the classic object-parameter Plackett-Luce model.
    """
    ids = [f"{prefix}{i}" for i in range(n_objects)]
    return ObjectCatalog(ids, np.eye(n_objects))


@dataclass
class Dataset:
    """A catalog plus preferences, grouped by worker in first-seen order.

    The dataset is not validated on construction so that
    :func:`validate_dataset` can report every problem; :func:`load_dataset`
    and :meth:`packed` refuse invalid data.
    """

    catalog: ObjectCatalog
    preferences: list
    _packed: tuple | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def workers(self) -> list:
        seen = {}
        for p in self.preferences:
            seen.setdefault(p.worker_id, None)
        return list(seen)

    @property
    def W(self) -> int:
        return len(self.workers)

    @property
    def K(self) -> int:
        return max((len(p) for p in self.preferences), default=0)

    def n_per_worker(self) -> dict:
        counts = {w: 0 for w in self.workers}
        for p in self.preferences:
            counts[p.worker_id] += 1
        return counts

    def by_worker(self) -> dict:
        groups = {w: [] for w in self.workers}
        for p in self.preferences:
            groups[p.worker_id].append(p)
        return groups

    def rankings_idx(self) -> list:
        """Rankings as tuples of dense object indices."""
        idx = self.catalog.index
        try:
            return [tuple(idx[o] for o in p.ranking) for p in self.preferences]
        except KeyError as exc:
            raise DataError(f"unknown object id {exc.args[0]!r}") from None

    def packed(self):
        """Flat arrays for the kernels: ``(items, offsets, worker_index)``.

        ``items[offsets[n]:offsets[n+1]]`` is ranking ``n`` as object indices
        and ``worker_index[n]`` its position in :attr:`workers`.
        """
        if self._packed is None:
            problems = validate_dataset(self)
            if problems:
                raise DataError(str(problems[0]))
            ranks = self.rankings_idx()
            lengths = np.array([len(r) for r in ranks], dtype=np.int64)
            offsets = np.zeros(len(ranks) + 1, dtype=np.int64)
            np.cumsum(lengths, out=offsets[1:])
            items = np.fromiter(
                (i for r in ranks for i in r), dtype=np.int64, count=int(offsets[-1])
            )
            wpos = {w: n for n, w in enumerate(self.workers)}
            widx = np.array([wpos[p.worker_id] for p in self.preferences], dtype=np.int64)
            for a in (items, offsets, widx):
                a.setflags(write=False)
            self._packed = (items, offsets, widx)
        return self._packed


def validate_dataset(d: Dataset) -> list:
    """Every invariant violation in ``d``; empty iff the dataset is valid."""
    out = []
    L = len(d.catalog)
    for n, p in enumerate(d.preferences):
        k = len(p.ranking)
        if k < 2:
            out.append(Violation(n, "length", f"ranking length {k} is below 2"))
        elif k > L:
            out.append(Violation(n, "length", f"ranking length {k} exceeds catalog size {L}"))
        seen = set()
        for oid in p.ranking:
            if oid in seen:
                out.append(Violation(n, "duplicate", f"object {oid!r} appears twice"))
            seen.add(oid)
            if oid not in d.catalog.index:
                out.append(Violation(n, "unknown-object", f"unknown object id {oid!r}"))
    if not d.preferences:
        out.append(Violation(-1, "empty", "dataset has no preferences"))
    return out


def _read_jsonl(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read file: {exc.strerror}", path) from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid JSON ({exc.msg})", path, lineno) from None
        if not isinstance(rec, dict):
            raise DataError("expected a JSON object", path, lineno)
        yield lineno, rec


def load_catalog(path) -> ObjectCatalog:
    ids, feats = [], []
    dim = None
    for lineno, rec in _read_jsonl(path):
        oid, f = rec.get("id"), rec.get("features")
        if not isinstance(oid, str):
            raise DataError("missing string field 'id'", path, lineno)
        if not isinstance(f, list) or not f:
            raise DataError("'features' must be a non-empty list", path, lineno)
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in f):
            raise DataError("'features' must contain numbers", path, lineno)
        if not all(math.isfinite(x) for x in f):
            raise DataError("'features' must be finite", path, lineno)
        if dim is None:
            dim = len(f)
        elif len(f) != dim:
            raise DataError(f"feature dimension {len(f)} differs from {dim}", path, lineno)
        if oid in ids:
            raise DataError(f"duplicate object id {oid!r}", path, lineno)
        ids.append(oid)
        feats.append([float(x) for x in f])
    if len(ids) < 2:
        raise DataError(f"catalog needs at least 2 objects, got {len(ids)}", path)
    return ObjectCatalog(ids, feats)


def load_preferences(path, catalog: ObjectCatalog) -> list:
    prefs = []
    for lineno, rec in _read_jsonl(path):
        worker, ranking = rec.get("worker"), rec.get("ranking")
        if not isinstance(worker, str):
            raise DataError("missing string field 'worker'", path, lineno)
        if not isinstance(ranking, list) or not all(isinstance(o, str) for o in ranking):
            raise DataError("'ranking' must be a list of object ids", path, lineno)
        if len(ranking) < 2:
            raise DataError(f"ranking length {len(ranking)} is below 2", path, lineno)
        if len(set(ranking)) != len(ranking):
            dup = next(o for o in ranking if ranking.count(o) > 1)
            raise DataError(f"object {dup!r} appears twice in ranking", path, lineno)
        for oid in ranking:
            if oid not in catalog.index:
                raise DataError(f"unknown object id {oid!r}", path, lineno)
        prefs.append(Preference(worker, ranking))
    if not prefs:
        raise DataError("no preferences found", path)
    return prefs


def load_dataset(catalog_path, preferences_path) -> Dataset:
    """Read and validate a catalog/preferences pair of JSON Lines files."""
    catalog = load_catalog(catalog_path)
    d = Dataset(catalog, load_preferences(preferences_path, catalog))
    problems = validate_dataset(d)
    if problems:
        raise DataError(str(problems[0]), preferences_path)
    return d


def dump_catalog(catalog: ObjectCatalog) -> str:
    return "".join(
        json.dumps({"id": oid, "features": [float(x) for x in row]}) + "\n"
        for oid, row in zip(catalog.ids, catalog.features)
    )


def dump_preferences(prefs: Iterable[Preference]) -> str:
    return "".join(
        json.dumps({"worker": p.worker_id, "ranking": list(p.ranking)}) + "\n" for p in prefs
    )


def save_dataset(d: Dataset, catalog_path, preferences_path):
    Path(catalog_path).write_text(dump_catalog(d.catalog), encoding="utf-8")
    Path(preferences_path).write_text(dump_preferences(d.preferences), encoding="utf-8")


def dataset_from_indices(catalog: ObjectCatalog, rankings, workers) -> Dataset:
    """Build a dataset from index rankings and a parallel list of worker ids."""
    ids = catalog.ids
    prefs = [Preference(w, [ids[i] for i in r]) for r, w in zip(rankings, workers)]
    return Dataset(catalog, prefs)
