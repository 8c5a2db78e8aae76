"""Request traces: file ingestion, synthetic Zipf workload generation, warm-up splits.

Trace file format (line-oriented UTF-8, whitespace-separated):

    C <content_id> <publish_time> <type> <area> <language> <length> <score> <comment_count> <director> <performer>
    R <content_id> <timestamp>

Catalog rows (``C``) come first, one per content; request rows (``R``) follow,
sorted by non-decreasing timestamp. Categorical fields are arbitrary tokens
without whitespace. Contents are unit-sized; the format carries no size field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TraceError(ValueError):
    """Malformed trace input; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class ContentMeta:
    content_id: str
    publish_time: float  # seconds relative to trace epoch (may be negative)
    type: str
    area: str
    language: str
    length: float  # seconds
    score: float
    comment_count: int
    director: str
    performer: str


@dataclass(frozen=True)
class Request:
    content_id: str
    timestamp: float  # seconds since trace epoch, non-negative
    meta_ref: int  # index into Catalog.contents


@dataclass
class Catalog:
    contents: list[ContentMeta] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict)

    def add(self, meta: ContentMeta):
        if meta.content_id in self.index:
            raise TraceError(f"duplicate content_id {meta.content_id!r}")
        self.index[meta.content_id] = len(self.contents)
        self.contents.append(meta)

    def __len__(self):
        return len(self.contents)

    def __getitem__(self, content_id: str) -> ContentMeta:
        return self.contents[self.index[content_id]]


@dataclass(frozen=True)
class SyntheticTraceConfig:
    n_contents: int = 10_000
    n_requests: int = 100_000
    zipf_alpha: float = 0.8
    reshuffle_period: float = 0.0  # simulated hours between rank re-permutations; 0 = stationary
    mean_interarrival: float = 3.0  # seconds
    rng_seed: int = 0

    def validate(self):
        if self.zipf_alpha <= 0:
            raise ValueError("zipf_alpha must be > 0")
        if self.n_contents < 1:
            raise ValueError("n_contents must be >= 1")
        if self.n_requests < 1:
            raise ValueError("n_requests must be >= 1")
        if self.mean_interarrival <= 0:
            raise ValueError("mean_interarrival must be > 0")
        if self.reshuffle_period < 0:
            raise ValueError("reshuffle_period must be >= 0")


def zipf_pmf(n: int, alpha: float) -> np.ndarray:
    """Probability of rank i (0-based) under p_i proportional to (i+1)^-alpha."""
    w = np.arange(1, n + 1, dtype=float) ** -alpha
    return w / w.sum()


# Categorical pools for synthetic catalog metadata. Weights are arbitrary but
# fixed so generated traces exercise uneven vocabularies.
_TYPES = ["movie", "series", "variety", "anime", "documentary", "sports", "news", "music"]
_AREAS = ["cn", "us", "kr", "jp", "eu", "other"]
_LANGS = ["mandarin", "english", "korean", "japanese", "cantonese"]


def _synthetic_catalog(rng: np.random.Generator, n_contents: int) -> Catalog:
    catalog = Catalog()
    width = len(str(max(n_contents - 1, 1)))
    for i in range(n_contents):
        meta = ContentMeta(
            content_id=f"v{i:0{width}d}",
            # published up to 30 days before the trace epoch
            publish_time=-float(rng.uniform(0.0, 30 * 86400)),
            type=_TYPES[rng.integers(len(_TYPES))],
            area=_AREAS[rng.integers(len(_AREAS))],
            language=_LANGS[rng.integers(len(_LANGS))],
            length=float(rng.uniform(60.0, 7200.0)),
            score=float(np.round(rng.uniform(1.0, 10.0), 1)),
            comment_count=int(rng.geometric(0.001)),
            director=f"dir{rng.integers(500):03d}",
            performer=f"act{rng.integers(2000):04d}",
        )
        catalog.add(meta)
    return catalog


def generate_zipf_trace(config: SyntheticTraceConfig) -> tuple[Catalog, list[Request]]:
    """Generate a synthetic trace; bit-identical output for identical configs.

    Request ids are drawn i.i.d. within each reshuffle period from a Zipf law
    over a per-period random permutation of the catalog; inter-arrival gaps are
    exponential with the configured mean (Poisson arrivals). The first request
    defines the trace epoch t = 0.
    """
    config.validate()
    rng = np.random.Generator(np.random.PCG64(config.rng_seed))
    catalog = _synthetic_catalog(rng, config.n_contents)

    gaps = rng.exponential(config.mean_interarrival, size=config.n_requests)
    timestamps = np.cumsum(gaps)
    timestamps -= timestamps[0]

    pmf = zipf_pmf(config.n_contents, config.zipf_alpha)
    if config.reshuffle_period > 0:
        period_of = np.floor(timestamps / (config.reshuffle_period * 3600.0)).astype(int)
    else:
        period_of = np.zeros(config.n_requests, dtype=int)

    ranks = rng.choice(config.n_contents, size=config.n_requests, p=pmf)
    content_idx = np.empty(config.n_requests, dtype=int)
    for period in np.unique(period_of):
        perm = rng.permutation(config.n_contents)
        mask = period_of == period
        content_idx[mask] = perm[ranks[mask]]

    requests = [
        Request(
            content_id=catalog.contents[ci].content_id,
            timestamp=float(t),
            meta_ref=int(ci),
        )
        for ci, t in zip(content_idx, timestamps)
    ]
    return catalog, requests


def parse_trace(stream, timestamp_slack: float = 0.0) -> tuple[Catalog, list[Request]]:
    """Parse the line-oriented trace format from an iterable of text lines.

    Raises TraceError (with line number) on malformed rows, on catalog
    duplicates, on request ids missing from the catalog, and on timestamp
    regressions larger than ``timestamp_slack`` seconds.
    """
    catalog = Catalog()
    requests: list[Request] = []
    last_t = None
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        tag = fields[0]
        if tag == "C":
            if len(fields) != 11:
                raise TraceError(f"catalog row needs 10 fields, got {len(fields) - 1}", lineno)
            if requests:
                raise TraceError("catalog row after first request row", lineno)
            try:
                meta = ContentMeta(
                    content_id=fields[1],
                    publish_time=float(fields[2]),
                    type=fields[3],
                    area=fields[4],
                    language=fields[5],
                    length=float(fields[6]),
                    score=float(fields[7]),
                    comment_count=int(fields[8]),
                    director=fields[9],
                    performer=fields[10],
                )
            except ValueError as e:
                raise TraceError(f"bad catalog field: {e}", lineno) from e
            if meta.content_id in catalog.index:
                raise TraceError(f"duplicate content_id {meta.content_id!r}", lineno)
            if meta.length < 0:
                raise TraceError("length must be non-negative", lineno)
            catalog.add(meta)
        elif tag == "R":
            if len(fields) != 3:
                raise TraceError(f"request row needs 2 fields, got {len(fields) - 1}", lineno)
            cid = fields[1]
            if cid not in catalog.index:
                raise TraceError(f"unknown content_id {cid!r}", lineno)
            try:
                t = float(fields[2])
            except ValueError as e:
                raise TraceError(f"bad timestamp: {e}", lineno) from e
            if t < 0:
                raise TraceError("negative timestamp", lineno)
            if last_t is not None and t < last_t - timestamp_slack:
                raise TraceError(
                    f"timestamp regression: {t} after {last_t}", lineno
                )
            last_t = max(t, last_t) if last_t is not None else t
            requests.append(Request(content_id=cid, timestamp=t, meta_ref=catalog.index[cid]))
        else:
            raise TraceError(f"unknown row tag {tag!r}", lineno)
    requests.sort(key=lambda r: r.timestamp)
    return catalog, requests


def write_trace(catalog: Catalog, requests: list[Request], stream):
    """Write the canonical text form; parse(write(...)) round-trips bit-exactly."""
    for m in catalog.contents:
        stream.write(
            f"C {m.content_id} {m.publish_time!r} {m.type} {m.area} {m.language} "
            f"{m.length!r} {m.score!r} {m.comment_count} {m.director} {m.performer}\n"
        )
    for r in requests:
        stream.write(f"R {r.content_id} {r.timestamp!r}\n")


def split_trace(requests: list[Request], warmup_hours: float) -> tuple[list[Request], list[Request]]:
    """Split at t = warmup_hours * 3600; warm-up side is the half-open [0, cutoff)."""
    if warmup_hours < 0:
        raise ValueError("warmup_hours must be >= 0")
    cutoff = warmup_hours * 3600.0
    k = 0
    while k < len(requests) and requests[k].timestamp < cutoff:
        k += 1
    return requests[:k], requests[k:]
