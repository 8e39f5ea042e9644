"""Data model, ingestion, persistence, and embedding cache for coding projects.

A project lives in one directory: a JSON manifest (codebook, assignments,
audit state, resolution log), a JSON-lines response file, and a binary
embedding cache (one file per embedding model, little-endian float32 vectors
keyed by content hash). Response text is preserved byte-exact from import;
nothing is case-folded, stripped, or tokenized.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import (
    ConflictError,
    ConfigurationError,
    IntegrityError,
    ParseError,
    StaleRevisionError,
    ValidationError,
)

SCHEMA_VERSION = 1
_CACHE_MAGIC = b"EMBC"
_CACHE_VERSION = 1


def content_hash(instruction: str | None, text: str) -> str:
    """sha256 over the UTF-8 bytes of instruction prefix + text.

    The instruction participates so that changing the prefix invalidates
    cached vectors.
    """
    prefix = instruction or ""
    return hashlib.sha256((prefix + text).encode("utf-8")).hexdigest()


@dataclass
class Response:
    id: str
    text: str
    human_code: str | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "code": self.human_code,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Response":
        return cls(
            id=str(doc["id"]),
            text=str(doc["text"]),
            human_code=doc.get("code"),
            metadata={str(k): str(v) for k, v in (doc.get("metadata") or {}).items()},
        )


@dataclass
class Category:
    id: str
    name: str
    definition: str = ""
    exemplar_ids: list[str] = field(default_factory=list)
    is_other: bool = False

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "definition": self.definition,
            "exemplar_ids": list(self.exemplar_ids),
            "is_other": self.is_other,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Category":
        return cls(
            id=str(doc["id"]),
            name=str(doc.get("name", doc["id"])),
            definition=str(doc.get("definition", "")),
            exemplar_ids=[str(x) for x in doc.get("exemplar_ids", [])],
            is_other=bool(doc.get("is_other", False)),
        )


@dataclass
class Codebook:
    categories: list[Category]
    model_binding: str | None = None

    def __post_init__(self) -> None:
        ids = [c.id for c in self.categories]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate category ids in codebook: {ids}")
        others = [c.id for c in self.categories if c.is_other]
        if len(others) > 1:
            raise ConfigurationError(f"at most one is_other category allowed, got {others}")

    @property
    def category_ids(self) -> list[str]:
        return [c.id for c in self.categories]

    @property
    def other_id(self) -> str | None:
        for c in self.categories:
            if c.is_other:
                return c.id
        return None

    def category(self, category_id: str) -> Category:
        for c in self.categories:
            if c.id == category_id:
                return c
        raise ValidationError(f"unknown category id {category_id!r}")

    def to_json(self) -> dict:
        return {
            "categories": [c.to_json() for c in self.categories],
            "model_binding": self.model_binding,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Codebook":
        return cls(
            categories=[Category.from_json(c) for c in doc.get("categories", [])],
            model_binding=doc.get("model_binding"),
        )


@dataclass
class Project:
    id: str
    responses: list[Response] = field(default_factory=list)
    codebook: Codebook | None = None
    assignments: dict[str, object] = field(default_factory=dict)  # rid -> classifier.Assignment
    audit_state: object | None = None  # audit.AuditReport
    resolutions: list[object] = field(default_factory=list)  # audit.Resolution log
    embed_run: dict | None = None  # model_id / instruction of the last embed
    revision: int = 0

    def response_index(self) -> dict[str, Response]:
        return {r.id: r for r in self.responses}

    def bump(self) -> None:
        self.revision += 1

    def require_codebook(self) -> Codebook:
        if self.codebook is None:
            raise ConfigurationError(f"project {self.id!r} has no codebook")
        return self.codebook


@dataclass(frozen=True)
class EmbeddingRecord:
    content_hash: str
    model_id: str
    dim: int
    vector: np.ndarray  # float32, length dim
    normalized: bool


# ---------------------------------------------------------------------------
# Ingestion


@dataclass(frozen=True)
class ImportMapping:
    """Column-to-field map for tabular import.

    id_column None requests synthetic ids: zero-padded 1-based row indices.
    """

    text_column: str = "text"
    id_column: str | None = "id"
    code_column: str | None = None
    metadata_columns: tuple[str, ...] = ()


def _rows_from_csv(stream: IO[str]) -> Iterable[tuple[int, dict]]:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise ParseError("CSV input is empty; a header row is required")
    for row_index, row in enumerate(reader, start=1):
        if None in row:
            raise ParseError(f"row {row_index}: more fields than header columns")
        if any(v is None for v in row.values()):
            raise ParseError(f"row {row_index}: fewer fields than header columns")
        yield row_index, row


def _rows_from_jsonl(stream: IO[str]) -> Iterable[tuple[int, dict]]:
    for row_index, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {row_index}: invalid JSON ({exc.msg})") from exc
        if not isinstance(doc, dict):
            raise ParseError(f"line {row_index}: expected a JSON object")
        yield row_index, doc


def import_responses(
    source: str | Path | IO[str],
    fmt: str = "csv",
    mapping: ImportMapping | None = None,
) -> list[Response]:
    """Parse a CSV (RFC 4180, UTF-8, header row) or JSON-lines stream into
    responses, in source order and with text untouched.

    Empty-text rows are rejected with their row index; duplicate ids raise a
    conflict listing every offender.
    """
    mapping = mapping or ImportMapping()
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return import_responses(fh, fmt=fmt, mapping=mapping)

    if fmt == "csv":
        rows = list(_rows_from_csv(source))
    elif fmt == "jsonl":
        rows = list(_rows_from_jsonl(source))
    else:
        raise ValidationError(f"unknown import format {fmt!r} (expected csv or jsonl)")

    pad = len(str(len(rows))) if rows else 1
    responses: list[Response] = []
    for seq, (row_index, row) in enumerate(rows, start=1):
        if mapping.text_column not in row:
            raise ParseError(f"row {row_index}: missing text column {mapping.text_column!r}")
        text = row[mapping.text_column]
        if not isinstance(text, str):
            raise ParseError(f"row {row_index}: text column must be a string")
        if text == "":
            raise ValidationError(f"row {row_index}: empty response text")

        if mapping.id_column is None:
            rid = str(seq).zfill(pad)
        else:
            if mapping.id_column not in row:
                raise ParseError(f"row {row_index}: missing id column {mapping.id_column!r}")
            rid = str(row[mapping.id_column])

        code = None
        if mapping.code_column is not None and row.get(mapping.code_column) not in (None, ""):
            code = str(row[mapping.code_column])

        metadata: dict[str, str] = {}
        if fmt == "jsonl" and isinstance(row.get("metadata"), dict):
            metadata.update({str(k): str(v) for k, v in row["metadata"].items()})
        for col in mapping.metadata_columns:
            if col in row and row[col] is not None:
                metadata[col] = str(row[col])

        responses.append(Response(id=rid, text=text, human_code=code, metadata=metadata))

    seen: dict[str, int] = {}
    for r in responses:
        seen[r.id] = seen.get(r.id, 0) + 1
    duplicates = sorted(rid for rid, n in seen.items() if n > 1)
    if duplicates:
        raise ConflictError(f"duplicate response ids: {duplicates}")
    return responses


def filter_coded(project: Project, drop_categories: set[str]) -> Project:
    """Read-only view of the project without responses whose human code falls
    in drop_categories. The underlying project is untouched."""
    codebook = project.require_codebook()
    known = set(codebook.category_ids)
    unknown = sorted(set(drop_categories) - known)
    if unknown:
        raise ValidationError(f"unknown category ids in drop set: {unknown}")
    kept = [r for r in project.responses if r.human_code not in drop_categories]
    kept_ids = {r.id for r in kept}
    return Project(
        id=project.id,
        responses=kept,
        codebook=project.codebook,
        assignments={rid: a for rid, a in project.assignments.items() if rid in kept_ids},
        audit_state=project.audit_state,
        resolutions=list(project.resolutions),
        embed_run=project.embed_run,
        revision=project.revision,
    )


# ---------------------------------------------------------------------------
# Embedding cache

_HEADER_FMT = "<4sHH"  # magic, version, model_id byte length
_DIM_FLAG_FMT = "<IB"  # dim, normalized flag
_HASH_BYTES = 32


class EmbeddingStore:
    """Append-only binary vector cache, one file per embedding model.

    File layout: magic, version, model id, dim, normalized flag, then records
    of sha256 digest + dim little-endian float32s. Appends keyed by hash are
    safe to repeat; on duplicate keys the last record wins.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._index: dict[str, dict[str, EmbeddingRecord]] = {}
        self._meta: dict[str, tuple[int, bool]] = {}  # model_id -> (dim, normalized)

    def _model_path(self, model_id: str) -> Path:
        safe = "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in model_id)
        suffix = hashlib.sha256(model_id.encode("utf-8")).hexdigest()[:8]
        return self.root / f"{safe}-{suffix}.emb"

    def _load(self, model_id: str) -> dict[str, EmbeddingRecord]:
        if model_id in self._index:
            return self._index[model_id]
        index: dict[str, EmbeddingRecord] = {}
        path = self._model_path(model_id)
        if path.exists():
            raw = path.read_bytes()
            head_size = struct.calcsize(_HEADER_FMT)
            if len(raw) < head_size:
                raise IntegrityError(f"cache file {path.name} too short for header")
            magic, version, mid_len = struct.unpack_from(_HEADER_FMT, raw, 0)
            if magic != _CACHE_MAGIC:
                raise IntegrityError(f"cache file {path.name} has bad magic {magic!r}")
            if version != _CACHE_VERSION:
                raise IntegrityError(f"cache file {path.name} has unknown version {version}")
            offset = head_size
            stored_model = raw[offset : offset + mid_len].decode("utf-8")
            if stored_model != model_id:
                raise IntegrityError(
                    f"cache file {path.name} belongs to model {stored_model!r}, not {model_id!r}"
                )
            offset += mid_len
            dim, normalized_flag = struct.unpack_from(_DIM_FLAG_FMT, raw, offset)
            offset += struct.calcsize(_DIM_FLAG_FMT)
            record_size = _HASH_BYTES + 4 * dim
            body = raw[offset:]
            if len(body) % record_size != 0:
                bad_ordinal = len(body) // record_size
                raise IntegrityError(
                    f"cache file {path.name}: record {bad_ordinal} truncated "
                    f"(dim {dim} expects {record_size}-byte records)"
                )
            normalized = bool(normalized_flag)
            self._meta[model_id] = (int(dim), normalized)
            for start in range(0, len(body), record_size):
                digest = body[start : start + _HASH_BYTES].hex()
                vec = np.frombuffer(
                    body, dtype="<f4", count=dim, offset=start + _HASH_BYTES
                ).copy()
                index[digest] = EmbeddingRecord(
                    content_hash=digest,
                    model_id=model_id,
                    dim=int(dim),
                    vector=vec,
                    normalized=normalized,
                )
        self._index[model_id] = index
        return index

    def established_dim(self, model_id: str) -> int | None:
        self._load(model_id)
        meta = self._meta.get(model_id)
        return meta[0] if meta else None

    def get(self, model_id: str, digest: str) -> EmbeddingRecord | None:
        return self._load(model_id).get(digest)

    def put_many(self, records: Iterable[EmbeddingRecord]) -> int:
        """Append records grouped by model; returns the number written."""
        by_model: dict[str, list[EmbeddingRecord]] = {}
        for rec in records:
            by_model.setdefault(rec.model_id, []).append(rec)
        written = 0
        for model_id, recs in by_model.items():
            index = self._load(model_id)
            meta = self._meta.get(model_id)
            path = self._model_path(model_id)
            first = recs[0]
            if meta is None:
                meta = (first.dim, first.normalized)
                self._meta[model_id] = meta
                mid = model_id.encode("utf-8")
                header = struct.pack(_HEADER_FMT, _CACHE_MAGIC, _CACHE_VERSION, len(mid))
                header += mid + struct.pack(_DIM_FLAG_FMT, first.dim, int(first.normalized))
                path.write_bytes(header)
            dim = meta[0]
            with open(path, "ab") as fh:
                for rec in recs:
                    if rec.dim != dim or rec.vector.shape != (dim,):
                        raise IntegrityError(
                            f"record {rec.content_hash[:12]} has dim {rec.dim}, "
                            f"model {model_id!r} is established at dim {dim}"
                        )
                    fh.write(bytes.fromhex(rec.content_hash))
                    fh.write(np.asarray(rec.vector, dtype="<f4").tobytes())
                    index[rec.content_hash] = rec
                    written += 1
        return written


def cache_get_or_pending(
    store: EmbeddingStore,
    model_id: str,
    instruction: str | None,
    texts: list[str],
) -> tuple[list[EmbeddingRecord], list[int]]:
    """Split texts into cache hits and miss indices (both in input order).

    A hit requires an exact match on model_id and the content hash of
    instruction + text.
    """
    if not model_id:
        raise ValidationError("model_id must be non-empty")
    hits: list[EmbeddingRecord] = []
    misses: list[int] = []
    for i, text in enumerate(texts):
        rec = store.get(model_id, content_hash(instruction, text))
        if rec is None:
            misses.append(i)
        else:
            hits.append(rec)
    return hits, misses


# ---------------------------------------------------------------------------
# Project persistence

_MANIFEST = "manifest.json"
_RESPONSES = "responses.jsonl"


def project_cache(project_dir: str | Path) -> EmbeddingStore:
    return EmbeddingStore(Path(project_dir) / "cache")


def save_project(project: Project, project_dir: str | Path) -> None:
    """Write manifest + responses; the embedding cache is managed separately
    by EmbeddingStore appends."""
    from .audit import AuditReport, Resolution  # deferred: avoids import cycle

    root = Path(project_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema": SCHEMA_VERSION,
        "id": project.id,
        "revision": project.revision,
        "codebook": project.codebook.to_json() if project.codebook else None,
        "assignments": {
            rid: a.to_json() for rid, a in sorted(project.assignments.items())
        },
        "audit": project.audit_state.to_json() if project.audit_state else None,
        "resolutions": [r.to_json() for r in project.resolutions],
        "embed_run": project.embed_run,
    }
    lines = "".join(
        json.dumps(r.to_json(), sort_keys=True, ensure_ascii=False) + "\n"
        for r in project.responses
    )
    (root / _RESPONSES).write_text(lines, encoding="utf-8")
    (root / _MANIFEST).write_text(
        json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def load_project(project_dir: str | Path) -> Project:
    from .audit import AuditReport, Resolution  # deferred: avoids import cycle
    from .classifier import Assignment

    root = Path(project_dir)
    manifest_path = root / _MANIFEST
    if not manifest_path.exists():
        raise ValidationError(f"no project manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("schema") != SCHEMA_VERSION:
        raise IntegrityError(
            f"unsupported project schema {manifest.get('schema')!r} in {manifest_path}"
        )
    responses: list[Response] = []
    responses_path = root / _RESPONSES
    if responses_path.exists():
        with open(responses_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    responses.append(Response.from_json(json.loads(line)))
    return Project(
        id=manifest["id"],
        responses=responses,
        codebook=Codebook.from_json(manifest["codebook"]) if manifest.get("codebook") else None,
        assignments={
            rid: Assignment.from_json(doc)
            for rid, doc in (manifest.get("assignments") or {}).items()
        },
        audit_state=(
            AuditReport.from_json(manifest["audit"]) if manifest.get("audit") else None
        ),
        resolutions=[Resolution.from_json(doc) for doc in manifest.get("resolutions", [])],
        embed_run=manifest.get("embed_run"),
        revision=int(manifest.get("revision", 0)),
    )


def export_responses(project: Project, fmt: str = "csv") -> str:
    """Render responses (with human code and any assigned category) as CSV or
    JSON-lines text."""
    if fmt == "jsonl":
        lines = []
        for r in project.responses:
            doc = r.to_json()
            assignment = project.assignments.get(r.id)
            if assignment is not None:
                doc["predicted"] = assignment.category_id
            lines.append(json.dumps(doc, sort_keys=True, ensure_ascii=False))
        return "\n".join(lines) + ("\n" if lines else "")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "text", "code", "predicted"])
        for r in project.responses:
            assignment = project.assignments.get(r.id)
            writer.writerow(
                [r.id, r.text, r.human_code or "", assignment.category_id if assignment else ""]
            )
        return buf.getvalue()
    raise ValidationError(f"unknown export format {fmt!r} (expected csv or jsonl)")


def check_revision(project: Project, expected_revision: int | None) -> None:
    """Optimistic-concurrency guard used by mutating endpoints."""
    if expected_revision is not None and expected_revision != project.revision:
        raise StaleRevisionError(
            f"project {project.id!r} is at revision {project.revision}, "
            f"mutation expected {expected_revision}"
        )
