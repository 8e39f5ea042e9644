"""Embedding providers: a deterministic mock and a remote HTTP client.

The remote provider speaks the de-facto embeddings REST shape
(POST {endpoint}/embeddings with {"model": ..., "input": [...]}) used by most
open-source embedding servers. All vectors are canonicalized on receipt:
normalized in float64 and stored as little-endian float32, so a warm cache
replays bit-identical vectors.
"""
from __future__ import annotations

import hashlib
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import httpx
import numpy as np

from .corpus import (
    EmbeddingRecord,
    EmbeddingStore,
    Project,
    cache_get_or_pending,
    content_hash,
)
from .errors import (
    ComparabilityError,
    ConfigurationError,
    DegenerateVectorError,
    IntegrityError,
    TransportError,
    ValidationError,
)

INSTRUCTION_PRESETS: dict[str, str] = {
    "none": "",
    "classification": "classification: ",
    "sts": "Instruct: Retrieve semantically similar text \n Query: ",
}


@dataclass(frozen=True)
class AnchorSpec:
    """Placement rule for one mock-embedded text: a weighted sum of keyed
    anchor directions plus jitter times a text-keyed noise direction."""

    components: tuple[tuple[str, float], ...]
    jitter: float

    @classmethod
    def coerce(cls, value) -> "AnchorSpec":
        if isinstance(value, AnchorSpec):
            return value
        if isinstance(value, Mapping):
            return cls(
                components=tuple((str(k), float(w)) for k, w in value["components"]),
                jitter=float(value["jitter"]),
            )
        key, jitter = value  # (anchor key, jitter) shorthand
        return cls(components=((str(key), 1.0),), jitter=float(jitter))

    def to_json(self):
        if len(self.components) == 1 and self.components[0][1] == 1.0:
            return [self.components[0][0], self.jitter]
        return {"components": [[k, w] for k, w in self.components], "jitter": self.jitter}


def instruction_prefix(preset: str) -> str:
    if preset not in INSTRUCTION_PRESETS:
        raise ValidationError(
            f"unknown instruction preset {preset!r} (expected one of {sorted(INSTRUCTION_PRESETS)})"
        )
    return INSTRUCTION_PRESETS[preset]


@dataclass(frozen=True)
class ProviderConfig:
    kind: str  # "mock" or "remote_http"
    model_id: str
    endpoint: str | None = None  # remote only
    dim: int | None = None  # mock only; discovered for remote
    instruction: str = ""  # resolved prefix applied to every text
    batch_size: int = 64
    max_concurrent_requests: int = 4
    max_retries: int = 3
    base_backoff: float = 0.5  # seconds
    timeout: float = 60.0
    api_key_env: str | None = None
    seed: int = 0  # mock only
    # mock only: text -> AnchorSpec (or (key, jitter) shorthand); plants clusters
    anchors: Mapping[str, "AnchorSpec | tuple[str, float]"] | None = field(
        default=None, hash=False
    )

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "remote_http"):
            raise ConfigurationError(f"unknown provider kind {self.kind!r}")
        if not self.model_id:
            raise ConfigurationError("model_id must be non-empty")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_concurrent_requests < 1:
            raise ConfigurationError(
                f"max_concurrent_requests must be >= 1, got {self.max_concurrent_requests}"
            )
        if self.kind == "remote_http" and not self.endpoint:
            raise ConfigurationError("remote_http provider requires an endpoint")
        if self.kind == "mock" and (self.dim is None or self.dim < 2):
            raise ConfigurationError("mock provider requires dim >= 2")

    @classmethod
    def from_json(cls, doc: Mapping) -> "ProviderConfig":
        instruction = doc.get("instruction")
        if instruction is None and "instruction_preset" in doc:
            instruction = instruction_prefix(doc["instruction_preset"])
        anchors_raw = doc.get("anchors")
        anchors = (
            {t: AnchorSpec.coerce(v) for t, v in anchors_raw.items()} if anchors_raw else None
        )
        return cls(
            kind=doc.get("kind", "mock"),
            model_id=doc["model_id"],
            endpoint=doc.get("endpoint"),
            dim=doc.get("dim"),
            instruction=instruction or "",
            batch_size=int(doc.get("batch_size", 64)),
            max_concurrent_requests=int(doc.get("max_concurrent_requests", 4)),
            max_retries=int(doc.get("max_retries", 3)),
            base_backoff=float(doc.get("base_backoff", 0.5)),
            timeout=float(doc.get("timeout", 60.0)),
            api_key_env=doc.get("api_key_env"),
            seed=int(doc.get("seed", 0)),
            anchors=anchors,
        )


def canonical_vector(raw) -> np.ndarray:
    """Normalize in float64, then store as float32. This is the one dtype
    boundary in the system; everything downstream upcasts for arithmetic."""
    v = np.asarray(raw, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise DegenerateVectorError("provider returned a zero vector")
    return (v / n).astype("<f4")


def _keyed_normals(material: bytes, seed: int, dim: int) -> np.ndarray:
    digest = hashlib.sha256(material).digest()
    key = int.from_bytes(digest[:8], "little") ^ (seed & 0xFFFFFFFFFFFFFFFF)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.standard_normal(dim)


def anchor_direction(key: str, seed: int, dim: int) -> np.ndarray:
    base = _keyed_normals(b"anchor:" + key.encode("utf-8"), seed, dim)
    return base / np.linalg.norm(base)


def mock_embed(
    text: str,
    dim: int,
    seed: int = 0,
    anchors: Mapping[str, "AnchorSpec | tuple[str, float]"] | None = None,
) -> np.ndarray:
    """Deterministic stand-in embedding: a pure function of (text bytes, dim,
    seed) and, when the text appears in the anchor table, of its anchor spec.

    Anchored texts land at sum(w_k * unit(dir_k)) + jitter * unit(noise), so
    tests can plant tight clusters, scattered clouds, or deliberately
    overlapping categories.
    """
    if dim < 2:
        raise ValidationError(f"mock embedding dim must be >= 2, got {dim}")
    noise = _keyed_normals(text.encode("utf-8"), seed, dim)
    noise /= np.linalg.norm(noise)
    if anchors and text in anchors:
        spec = AnchorSpec.coerce(anchors[text])
        base = np.zeros(dim)
        for key, weight in spec.components:
            base = base + weight * anchor_direction(key, seed, dim)
        raw = base + spec.jitter * noise
    else:
        raw = noise
    return canonical_vector(raw)


class MockProvider:
    """In-process provider; pure and safe for unrestricted parallel use."""

    def __init__(self, config: ProviderConfig):
        self.config = config
        self.model_id = config.model_id
        self.dim = int(config.dim or 0)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [
            mock_embed(t, self.dim, seed=self.config.seed, anchors=self.config.anchors)
            for t in texts
        ]


class RemoteProvider:
    """HTTP client with bounded retries and exponential backoff on 429/5xx."""

    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.model_id = config.model_id
        headers = {}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if not key:
                raise ConfigurationError(
                    f"API key environment variable {config.api_key_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(
            base_url=config.endpoint.rstrip("/"),
            headers=headers,
            timeout=config.timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        payload = {"model": self.config.model_id, "input": list(texts)}
        attempts = self.config.max_retries + 1
        for attempt in range(attempts):
            try:
                resp = self._client.post("/embeddings", json=payload)
            except httpx.HTTPError as exc:
                if attempt + 1 < attempts:
                    self._sleep(attempt)
                    continue
                raise TransportError(
                    f"embedding request failed after {attempts} attempts: {exc}"
                ) from exc
            if resp.status_code == 429 or resp.status_code >= 500:
                if attempt + 1 < attempts:
                    self._sleep(attempt)
                    continue
                raise TransportError(
                    f"provider returned {resp.status_code} after {attempts} attempts"
                )
            if resp.status_code != 200:
                raise TransportError(f"provider returned {resp.status_code}: {resp.text[:200]}")
            return self._parse(resp.json(), len(texts))
        raise TransportError(f"embedding request failed after {attempts} attempts")

    def _sleep(self, attempt: int) -> None:
        backoff = self.config.base_backoff * (2**attempt)
        time.sleep(backoff * (0.5 + random.random() / 2.0))

    @staticmethod
    def _parse(doc: dict, expected: int) -> list[np.ndarray]:
        data = doc.get("data")
        if not isinstance(data, list) or len(data) != expected:
            raise IntegrityError(
                f"provider response has {0 if not isinstance(data, list) else len(data)} "
                f"vectors, expected {expected}"
            )
        ordered = sorted(data, key=lambda item: item.get("index", 0))
        return [np.asarray(item["embedding"], dtype=np.float64) for item in ordered]


def _build_provider(config: ProviderConfig, transport: httpx.BaseTransport | None):
    if config.kind == "mock":
        return MockProvider(config)
    return RemoteProvider(config, transport=transport)


def embed_batch(
    config: ProviderConfig,
    texts: Sequence[str],
    cache: EmbeddingStore | None = None,
    transport: httpx.BaseTransport | None = None,
) -> np.ndarray:
    """Embed texts (instruction prefix applied) through the configured
    provider, reusing cached vectors and writing new ones back.

    Output row i corresponds to texts[i]; every row is unit-norm float32.
    Up to max_concurrent_requests provider calls run in flight; results are
    reassembled in input order.
    """
    texts = list(texts)
    for i, t in enumerate(texts):
        if not isinstance(t, str) or t == "":
            raise ValidationError(f"text at index {i} is empty")

    hashes = [content_hash(config.instruction, t) for t in texts]
    vectors: dict[int, np.ndarray] = {}
    miss_indices = list(range(len(texts)))
    if cache is not None:
        hits, miss_indices = cache_get_or_pending(cache, config.model_id, config.instruction, texts)
        hit_iter = iter(hits)
        miss_set = set(miss_indices)
        for i in range(len(texts)):
            if i not in miss_set:
                vectors[i] = next(hit_iter).vector

    if miss_indices:
        provider = _build_provider(config, transport)
        try:
            prefixed = [config.instruction + texts[i] for i in miss_indices]
            batches = [
                (start, prefixed[start : start + config.batch_size])
                for start in range(0, len(prefixed), config.batch_size)
            ]

            def run(batch: tuple[int, list[str]]) -> tuple[int, list[np.ndarray]]:
                start, chunk = batch
                return start, provider.embed(chunk)

            if config.max_concurrent_requests > 1 and len(batches) > 1:
                with ThreadPoolExecutor(max_workers=config.max_concurrent_requests) as pool:
                    results = list(pool.map(run, batches))
            else:
                results = [run(b) for b in batches]

            dim: int | None = None
            new_records: list[EmbeddingRecord] = []
            for start, raw_vectors in results:
                for offset, raw in enumerate(raw_vectors):
                    vec = canonical_vector(raw)
                    if dim is None:
                        dim = vec.shape[0]
                    elif vec.shape[0] != dim:
                        raise IntegrityError(
                            f"dimension drift within batch: {vec.shape[0]} vs {dim}"
                        )
                    i = miss_indices[start + offset]
                    vectors[i] = vec
                    new_records.append(
                        EmbeddingRecord(
                            content_hash=hashes[i],
                            model_id=config.model_id,
                            dim=vec.shape[0],
                            vector=vec,
                            normalized=True,
                        )
                    )
            if cache is not None and new_records:
                cache.put_many(new_records)
        finally:
            if isinstance(provider, RemoteProvider):
                provider.close()

    out = np.stack([vectors[i] for i in range(len(texts))]) if texts else np.zeros((0, 0), "<f4")
    dims = {v.shape[0] for v in vectors.values()}
    if len(dims) > 1:
        raise IntegrityError(f"mixed vector dimensions in result: {sorted(dims)}")
    return out


@dataclass
class EmbeddedSet:
    """Vectors for a list of responses, tied to one embedding model."""

    model_id: str
    ids: list[str]
    vectors: np.ndarray  # N x dim float32, unit rows

    def __post_init__(self) -> None:
        if len(self.ids) != self.vectors.shape[0]:
            raise ValidationError(
                f"{len(self.ids)} ids but {self.vectors.shape[0]} vector rows"
            )

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1]) if self.vectors.size else 0

    def as_mapping(self) -> dict[str, np.ndarray]:
        return {rid: self.vectors[i] for i, rid in enumerate(self.ids)}

    def require_same_model(self, other_model_id: str) -> None:
        if self.model_id != other_model_id:
            raise ComparabilityError(
                f"cannot mix embeddings from {self.model_id!r} with {other_model_id!r}"
            )


def embed_project(
    project: Project,
    config: ProviderConfig,
    store: EmbeddingStore | None,
    transport: httpx.BaseTransport | None = None,
) -> EmbeddedSet:
    """Embed every response in the project (through the cache when given)."""
    texts = [r.text for r in project.responses]
    vectors = embed_batch(config, texts, cache=store, transport=transport)
    return EmbeddedSet(
        model_id=config.model_id,
        ids=[r.id for r in project.responses],
        vectors=vectors,
    )


def load_project_embeddings(
    project: Project,
    store: EmbeddingStore,
    model_id: str,
    instruction: str,
) -> EmbeddedSet:
    """Resolve all response vectors from the cache; fails listing every
    response id that has not been embedded yet."""
    missing: list[str] = []
    rows: list[np.ndarray] = []
    for r in project.responses:
        rec = store.get(model_id, content_hash(instruction, r.text))
        if rec is None:
            missing.append(r.id)
        else:
            rows.append(rec.vector)
    if missing:
        raise ValidationError(
            f"{len(missing)} responses have no cached embedding under model "
            f"{model_id!r}: {missing[:20]}"
        )
    vectors = np.stack(rows) if rows else np.zeros((0, 0), "<f4")
    return EmbeddedSet(model_id=model_id, ids=[r.id for r in project.responses], vectors=vectors)
