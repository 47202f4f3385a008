"""Exact cosine-similarity vector store.

Brute-force scoring over contiguous float64 matrices, one per namespace. No
approximation anywhere: search results are the exact top-k by dot product
(vectors are unit-norm, so dot product is cosine), ties broken by ascending
id. Persistence is a one-line JSON header followed by newline-delimited JSON
records, diff-able and safe to check into fixtures.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import DimensionMismatch, FormatVersionMismatch, IoFailure, NotFound
from .gateway import EmbeddingVector

FORMAT_VERSION = 1

NAMESPACES = ("episode", "trace", "thread", "fact")

MetadataFilter = Callable[[dict], bool]


@dataclass(frozen=True)
class VectorRecord:
    id: str
    namespace: str
    vector: EmbeddingVector
    payload: str
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SearchHit:
    id: str
    score: float
    payload: str
    metadata: dict


class _Namespace:
    def __init__(self):
        self.ids: list[str] = []
        self.row_of: dict[str, int] = {}
        self.vectors: list[np.ndarray] = []
        self.payloads: list[str] = []
        self.metadata: list[dict] = []
        self._matrix: Optional[np.ndarray] = None

    def put(self, record: VectorRecord) -> None:
        row = self.row_of.get(record.id)
        if row is None:
            self.row_of[record.id] = len(self.ids)
            self.ids.append(record.id)
            self.vectors.append(record.vector.values)
            self.payloads.append(record.payload)
            self.metadata.append(dict(record.metadata))
        else:
            self.vectors[row] = record.vector.values
            self.payloads[row] = record.payload
            self.metadata[row] = dict(record.metadata)
        self._matrix = None

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.vstack(self.vectors) if self.vectors else np.zeros((0, 0))
        return self._matrix

    def __len__(self) -> int:
        return len(self.ids)


class VectorStore:
    """Namespaced exact-cosine store; thread-safe for many readers, one writer."""

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self._spaces: dict[str, _Namespace] = {}
        self._write_lock = threading.Lock()

    def _space(self, namespace: str) -> _Namespace:
        if namespace not in self._spaces:
            self._spaces[namespace] = _Namespace()
        return self._spaces[namespace]

    def count(self, namespace: Optional[str] = None) -> int:
        if namespace is not None:
            return len(self._spaces.get(namespace, _Namespace()))
        return sum(len(s) for s in self._spaces.values())

    def upsert(self, records: Iterable[VectorRecord]) -> int:
        records = list(records)
        for record in records:
            if record.vector.dimension != self.dimension:
                raise DimensionMismatch(
                    f"record {record.id!r} has dimension {record.vector.dimension}, store uses {self.dimension}"
                )
        with self._write_lock:
            for record in records:
                self._space(record.namespace).put(record)
        return len(records)

    def search(
        self,
        query: EmbeddingVector,
        namespace: str,
        k: int,
        where: Optional[MetadataFilter] = None,
    ) -> list[SearchHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if query.dimension != self.dimension:
            raise DimensionMismatch(f"query dimension {query.dimension}, store uses {self.dimension}")
        space = self._spaces.get(namespace)
        if space is None or len(space) == 0:
            return []
        scores = space.matrix() @ query.values
        rows = range(len(space.ids))
        if where is not None:
            rows = [r for r in rows if where(space.metadata[r])]
        ranked = sorted(rows, key=lambda r: (-scores[r], space.ids[r]))[:k]
        return [
            SearchHit(space.ids[r], float(scores[r]), space.payloads[r], dict(space.metadata[r]))
            for r in ranked
        ]

    def fetch(self, namespace: str, ids: list[str]) -> list[VectorRecord]:
        space = self._spaces.get(namespace)
        found: list[VectorRecord] = []
        missing: list[str] = []
        for id_ in ids:
            row = space.row_of.get(id_) if space is not None else None
            if row is None:
                missing.append(id_)
            else:
                found.append(
                    VectorRecord(
                        id_,
                        namespace,
                        EmbeddingVector(space.vectors[row]),
                        space.payloads[row],
                        dict(space.metadata[row]),
                    )
                )
        if missing:
            raise NotFound(missing, records=found)
        return found

    def ids(self, namespace: str) -> list[str]:
        space = self._spaces.get(namespace)
        return list(space.ids) if space else []

    # -- persistence -------------------------------------------------------

    def persist(self, path: str | Path) -> None:
        path = Path(path)
        with self._write_lock:
            lines = [json.dumps({"format_version": FORMAT_VERSION, "dimension": self.dimension})]
            for namespace in sorted(self._spaces):
                space = self._spaces[namespace]
                for row, id_ in enumerate(space.ids):
                    lines.append(
                        json.dumps(
                            {
                                "namespace": namespace,
                                "id": id_,
                                "vector": space.vectors[row].tolist(),
                                "payload": space.payloads[row],
                                "metadata": space.metadata[row],
                            },
                            ensure_ascii=False,
                        )
                    )
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write store to {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "VectorStore":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read store from {path}: {exc}") from exc
        lines = text.splitlines()
        if not lines:
            raise IoFailure(f"store file {path} is empty")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise IoFailure(f"bad store header in {path}: {exc}") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise FormatVersionMismatch(
                f"store {path} has format_version {header.get('format_version')}, expected {FORMAT_VERSION}"
            )
        store = cls(int(header["dimension"]))
        for i, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                record = VectorRecord(
                    id=str(raw["id"]),
                    namespace=str(raw["namespace"]),
                    vector=EmbeddingVector(np.asarray(raw["vector"], dtype=np.float64)),
                    payload=str(raw["payload"]),
                    metadata=dict(raw.get("metadata", {})),
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise IoFailure(f"bad store record at {path}:{i}: {exc}") from exc
            store.upsert([record])
        return store
