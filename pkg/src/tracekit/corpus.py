"""Image corpus store: manifest ingest, content-hash dedup, splits, contamination.

Records are persisted as JSONL (one object per line, UTF-8) under a corpus
directory. Only paths/URIs and metadata are stored, never pixels. The store is
single-writer append; readers may run concurrently with readers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

AUTH_VALUES = ("fake", "real")
RECORDS_FILE = "records.jsonl"


class CorpusError(Exception):
    pass


class CorpusNotFound(CorpusError):
    pass


@dataclass(frozen=True)
class ImageRecord:
    """One corpus image: content hash, source tag, authenticity label, generator tag."""

    id: str
    path: str
    hash: str  # sha256 hex digest of raw bytes
    auth: str  # "fake" | "real"
    generator: str | None
    source: str

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "path": self.path, "hash": self.hash, "auth": self.auth,
             "generator": self.generator, "source": self.source},
            ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRecord":
        return cls(id=d["id"], path=d["path"], hash=d["hash"], auth=d["auth"],
                   generator=d.get("generator"), source=d["source"])


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    auth: str
    generator: str | None = None
    source: str = ""
    hash: str | None = None  # optional precomputed digest (remote URIs, dry runs)


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    name: str = "corpus"
    seed: int = 0

    def validate(self) -> None:
        if not self.entries:
            raise CorpusError("manifest has no entries")
        for e in self.entries:
            if e.auth not in AUTH_VALUES:
                raise CorpusError(f"invalid auth {e.auth!r} for {e.path!r}; expected one of {AUTH_VALUES}")


@dataclass
class CorpusSummary:
    n_fake: int = 0
    n_real: int = 0
    n_deduped: int = 0
    errors: list[dict] = field(default_factory=list)


@dataclass(frozen=True)
class ContaminationReport:
    overlapping_hashes: tuple[str, ...]

    @property
    def count(self) -> int:
        return len(self.overlapping_hashes)


def content_hash(path: str | Path) -> str:
    """sha256 of raw bytes; deterministic for identical bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_manifest(path: str | Path, name: str | None = None, seed: int = 0) -> CorpusManifest:
    """Read a manifest from CSV (header: path,auth[,generator,source,hash]) or JSONL."""
    path = Path(path)
    entries: list[ManifestEntry] = []
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                entries.append(ManifestEntry(
                    path=row["path"], auth=row["auth"].strip(),
                    generator=row.get("generator") or None,
                    source=row.get("source") or "", hash=row.get("hash") or None))
    else:
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                entries.append(ManifestEntry(
                    path=d["path"], auth=d["auth"], generator=d.get("generator"),
                    source=d.get("source", ""), hash=d.get("hash")))
    return CorpusManifest(entries=entries, name=name or path.stem, seed=seed)


class Corpus:
    """A directory-backed set of ImageRecords, deduplicated by content hash."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._by_hash: dict[str, ImageRecord] = {}
        self._by_id: dict[str, ImageRecord] = {}
        self._load()

    @classmethod
    def open(cls, root: str | Path) -> "Corpus":
        root = Path(root)
        if not (root / RECORDS_FILE).exists():
            raise CorpusNotFound(f"no corpus at {root}")
        return cls(root)

    def _load(self) -> None:
        rec_path = self.root / RECORDS_FILE
        if not rec_path.exists():
            return
        with open(rec_path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = ImageRecord.from_dict(json.loads(line))
                    self._by_hash[rec.hash] = rec
                    self._by_id[rec.id] = rec

    def __len__(self) -> int:
        return len(self._by_hash)

    def records(self) -> list[ImageRecord]:
        """All records, ordered by id (stable across processes)."""
        return sorted(self._by_hash.values(), key=lambda r: r.id)

    def hashes(self) -> set[str]:
        return set(self._by_hash)

    def get(self, image_id: str) -> ImageRecord | None:
        return self._by_id.get(image_id)

    def ingest(self, manifest: CorpusManifest, workers: int = 8) -> CorpusSummary:
        """Add one record per unique content hash; first ingest wins, later
        duplicates are only counted. Per-entry read errors are collected and
        ingest continues."""
        manifest.validate()
        summary = CorpusSummary()

        def resolve(entry: ManifestEntry) -> tuple[ManifestEntry, str | None, str | None]:
            if entry.hash:
                return entry, entry.hash.lower(), None
            try:
                return entry, content_hash(entry.path), None
            except OSError as exc:
                return entry, None, str(exc)

        # Hashing is parallel; the append below is serialized in this thread.
        with ThreadPoolExecutor(max_workers=workers) as pool:
            resolved = list(pool.map(resolve, manifest.entries))

        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / RECORDS_FILE, "a", encoding="utf-8") as out:
            for entry, digest, err in resolved:
                if err is not None:
                    summary.errors.append({"path": entry.path, "error": err})
                    continue
                if digest in self._by_hash:
                    summary.n_deduped += 1
                    continue
                # hash-prefix id; extend on (rare) prefix collision
                length = 12
                while f"img-{digest[:length]}" in self._by_id and length < len(digest):
                    length += 4
                rec = ImageRecord(
                    id=f"img-{digest[:length]}", path=entry.path, hash=digest,
                    auth=entry.auth, generator=entry.generator, source=entry.source)
                self._by_hash[digest] = rec
                self._by_id[rec.id] = rec
                out.write(rec.to_json() + "\n")
                if rec.auth == "fake":
                    summary.n_fake += 1
                else:
                    summary.n_real += 1
        return summary

    def split(self, ratios: list[float], seed: int) -> list[list[ImageRecord]]:
        return split_records(self.records(), ratios, seed)


def check_contamination(a: Corpus, b: Corpus) -> ContaminationReport:
    """Exactly the set of content hashes present in both corpora."""
    return ContaminationReport(overlapping_hashes=tuple(sorted(a.hashes() & b.hashes())))


def split_records(records: list[ImageRecord], ratios: list[float], seed: int) -> list[list[ImageRecord]]:
    """Deterministic stratified partition.

    Partitions are disjoint and exhaustive; per-class (auth) proportions are
    preserved within one item per split. Deterministic under (records, ratios,
    seed).
    """
    if any(r <= 0 for r in ratios):
        raise CorpusError("split ratios must be > 0")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must sum to 1, got {sum(ratios)}")

    parts: list[list[ImageRecord]] = [[] for _ in ratios]
    for auth in AUTH_VALUES:
        cls = sorted((r for r in records if r.auth == auth), key=lambda r: r.id)
        rng = random.Random(f"{seed}:{auth}")
        rng.shuffle(cls)
        # Cumulative rounding keeps every class within +-1 item of exact share.
        bounds = [0] + [round(sum(ratios[: i + 1]) * len(cls)) for i in range(len(ratios))]
        bounds[-1] = len(cls)
        for i in range(len(ratios)):
            parts[i].extend(cls[bounds[i]:bounds[i + 1]])
    for part in parts:
        part.sort(key=lambda r: r.id)
    return parts


def write_split(parts: list[list[ImageRecord]], out_root: str | Path) -> list[Path]:
    """Persist each partition as its own corpus directory."""
    out_root = Path(out_root)
    dirs = []
    for i, part in enumerate(parts):
        d = out_root / f"split_{i}"
        d.mkdir(parents=True, exist_ok=True)
        with open(d / RECORDS_FILE, "w", encoding="utf-8") as f:
            for rec in part:
                f.write(rec.to_json() + "\n")
        dirs.append(d)
    return dirs
