"""Per-content feature state and training-batch construction.

Each content carries two kinds of features: contextual ones that roll with the
time window (log-compressed request count in the previous window, age in
hours) and static
semantic ones from the catalog (type/area/language one-hot, director/performer
hashed, length/score/comment-count numeric). Numeric fields are min-max
normalized into [0, 1] with running extrema; categorical slices are already
0/1.

Closing a window emits one training sample per recently-active content: the
features as they were known at the window start paired with the request count
revealed during the window. The same construction at the next window start is
used for serving, so the train and serve distributions coincide.
"""

from __future__ import annotations

import hashlib
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .trace import Catalog, ContentMeta, Request

# Hash-bucket counts for the high-cardinality categoricals.
DIRECTOR_BUCKETS = 64
PERFORMER_BUCKETS = 128

# Numeric slot layout: the two contextual slots first, then static numerics.
NUMERIC_FIELDS = ("prev_count", "age_hours", "length", "score", "comment_count")


def _bucket(token: str, n: int) -> int:
    # CRC32 is stable across processes and platforms, unlike hash().
    return zlib.crc32(token.encode("utf-8")) % n


class WindowSkewError(RuntimeError):
    """A request was observed whose timestamp is outside the current window."""


@dataclass
class FeatureSchema:
    """Frozen layout of the encoded feature vector."""

    type_vocab: dict[str, int]
    area_vocab: dict[str, int]
    language_vocab: dict[str, int]

    def __post_init__(self):
        n = len(NUMERIC_FIELDS)
        self.type_off = n
        self.area_off = self.type_off + len(self.type_vocab) + 1  # +1 for "other"
        self.language_off = self.area_off + len(self.area_vocab) + 1
        self.director_off = self.language_off + len(self.language_vocab) + 1
        self.performer_off = self.director_off + DIRECTOR_BUCKETS
        self.dim = self.performer_off + PERFORMER_BUCKETS

    @classmethod
    def from_catalog(cls, catalog: Catalog) -> "FeatureSchema":
        def vocab(values):
            return {v: i for i, v in enumerate(sorted(set(values)))}

        return cls(
            type_vocab=vocab(m.type for m in catalog.contents),
            area_vocab=vocab(m.area for m in catalog.contents),
            language_vocab=vocab(m.language for m in catalog.contents),
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for vocab in (self.type_vocab, self.area_vocab, self.language_vocab):
            h.update(repr(sorted(vocab.items())).encode())
        h.update(f"{DIRECTOR_BUCKETS},{PERFORMER_BUCKETS},{NUMERIC_FIELDS}".encode())
        return h.hexdigest()[:16]

    def describe(self) -> str:
        """Human-readable layout dump (written as a sidecar for reproducibility)."""
        lines = [f"dim {self.dim}", f"fingerprint {self.fingerprint()}"]
        for i, name in enumerate(NUMERIC_FIELDS):
            lines.append(f"[{i}] numeric {name}")
        for name, off, vocab in (
            ("type", self.type_off, self.type_vocab),
            ("area", self.area_off, self.area_vocab),
            ("language", self.language_off, self.language_vocab),
        ):
            lines.append(f"[{off}:{off + len(vocab) + 1}] one-hot {name} (+other)")
        lines.append(f"[{self.director_off}:{self.performer_off}] crc32-hash director")
        lines.append(f"[{self.performer_off}:{self.dim}] crc32-hash performer")
        return "\n".join(lines) + "\n"


def encode_semantic(meta: ContentMeta, schema: FeatureSchema) -> np.ndarray:
    """Encode catalog metadata into the raw feature layout (contextual slots zero).

    Out-of-vocabulary type/area/language values land on the reserved "other"
    position; director/performer are hashed; numeric fields are raw (they get
    min-max mapped later).
    """
    v = np.zeros(schema.dim)
    v[NUMERIC_FIELDS.index("length")] = meta.length
    v[NUMERIC_FIELDS.index("score")] = meta.score
    v[NUMERIC_FIELDS.index("comment_count")] = meta.comment_count
    for value, off, vocab in (
        (meta.type, schema.type_off, schema.type_vocab),
        (meta.area, schema.area_off, schema.area_vocab),
        (meta.language, schema.language_off, schema.language_vocab),
    ):
        v[off + vocab.get(value, len(vocab))] = 1.0
    v[schema.director_off + _bucket(meta.director, DIRECTOR_BUCKETS)] = 1.0
    v[schema.performer_off + _bucket(meta.performer, PERFORMER_BUCKETS)] = 1.0
    return v


@dataclass
class TrainingBatch:
    x: np.ndarray  # m x d, entries in [0, 1]
    y: np.ndarray  # m, non-negative revealed request counts
    ids: list[str]


@dataclass
class _Record:
    cur: int
    prev: int
    last_seen_window: int
    publish_time: float
    semantic: np.ndarray


@dataclass
class FeatureDatabase:
    """Single-writer per-content counters plus encoded semantic vectors.

    ``observe_request`` and ``close_window`` must be externally serialized.
    """

    catalog: Catalog
    phi_hours: float
    batch_size: int = 128
    history_windows: int = 168  # eligibility horizon: 7*24/phi windows at phi=1h
    shuffle_seed: int = 0
    schema: FeatureSchema = None

    def __post_init__(self):
        if self.schema is None:
            self.schema = FeatureSchema.from_catalog(self.catalog)
        self.window = 0
        self.records: dict[str, _Record] = {}
        self._pending = 0
        n = len(NUMERIC_FIELDS)
        self._min = np.full(n, np.inf)
        self._max = np.full(n, -np.inf)

    @property
    def window_seconds(self) -> float:
        return self.phi_hours * 3600.0

    def observe_request(self, request: Request):
        w = int(request.timestamp // self.window_seconds)
        if w != self.window:
            raise WindowSkewError(
                f"request at t={request.timestamp} belongs to window {w}, "
                f"current window is {self.window} (missed close_window?)"
            )
        rec = self.records.get(request.content_id)
        if rec is None:
            meta = self.catalog.contents[request.meta_ref]
            rec = _Record(
                cur=0,
                prev=0,
                last_seen_window=w,
                publish_time=meta.publish_time,
                semantic=encode_semantic(meta, self.schema),
            )
            self.records[request.content_id] = rec
        rec.cur += 1
        rec.last_seen_window = w
        self._pending += 1

    def pending_observations(self) -> int:
        return self._pending

    def _raw_row(self, rec: _Record, prev_count: int, ref_time: float) -> np.ndarray:
        row = rec.semantic.copy()
        # log-compress the count before min-max: the running max is set by the
        # hottest content, and a linear map would crush the resolution of the
        # mid-tail counts that decide evictions at realistic request volumes
        row[0] = math.log1p(prev_count)
        row[1] = (ref_time - rec.publish_time) / 3600.0
        return row

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        """Min-max map the numeric slots into [0,1], updating running extrema first.

        A degenerate range (max == min) maps to 0. One-hot/hash slices pass
        through unchanged.
        """
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        n = len(NUMERIC_FIELDS)
        self._min = np.minimum(self._min, raw[:, :n].min(axis=0))
        self._max = np.maximum(self._max, raw[:, :n].max(axis=0))
        out = raw.copy()
        span = self._max - self._min
        safe = np.where(span > 0, span, 1.0)
        out[:, :n] = np.where(span > 0, (raw[:, :n] - self._min) / safe, 0.0)
        return out

    def _eligible(self):
        horizon = self.window - self.history_windows
        return [
            (cid, rec)
            for cid, rec in self.records.items()
            if rec.last_seen_window >= horizon
        ]

    def close_window(self) -> list[TrainingBatch]:
        """Roll the window and emit shuffled batches of (features, revealed count).

        Features are the ones known at the start of the window being closed:
        previous-window count and age at the window end, plus static semantics.
        The revealed popularity y is the count accumulated in the closed window.
        """
        window_end = (self.window + 1) * self.window_seconds
        eligible = self._eligible()
        batches: list[TrainingBatch] = []
        if eligible:
            ids = [cid for cid, _ in eligible]
            raw = np.stack(
                [self._raw_row(rec, rec.prev, window_end) for _, rec in eligible]
            )
            y = np.array([rec.cur for _, rec in eligible], dtype=float)
            x = self.normalize(raw)
            rng = np.random.Generator(np.random.PCG64((self.shuffle_seed, self.window)))
            order = rng.permutation(len(ids))
            m = self.batch_size
            for start in range(0, len(ids), m):
                sel = order[start : start + m]
                batches.append(
                    TrainingBatch(x=x[sel], y=y[sel], ids=[ids[i] for i in sel])
                )
        for rec in self.records.values():
            rec.prev = rec.cur
            rec.cur = 0
        self.window += 1
        self._pending = 0
        return batches

    def serving_features(self) -> tuple[list[str], np.ndarray]:
        """Feature matrix for the current window start, for refreshing estimates.

        Uses the just-rotated previous-window counts and the age at the current
        window start — the same construction close_window trains on.
        """
        ref_time = self.window * self.window_seconds
        eligible = self._eligible()
        if not eligible:
            return [], np.zeros((0, self.schema.dim))
        ids = [cid for cid, _ in eligible]
        raw = np.stack([self._raw_row(rec, rec.prev, ref_time) for _, rec in eligible])
        return ids, self.normalize(raw)
