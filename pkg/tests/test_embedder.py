"""Tests for the embedding providers, caching, and instruction handling."""
from __future__ import annotations

import json
import math

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedcode import embedder
from embedcode.corpus import EmbeddingStore, Project, Response, content_hash
from embedcode.embedder import (
    INSTRUCTION_PRESETS,
    AnchorSpec,
    EmbeddedSet,
    ProviderConfig,
    embed_batch,
    embed_project,
    instruction_prefix,
    load_project_embeddings,
    mock_embed,
)
from embedcode.errors import (
    ComparabilityError,
    ConfigurationError,
    IntegrityError,
    TransportError,
    ValidationError,
)


def test_instruction_presets_exact_strings():
    assert INSTRUCTION_PRESETS["none"] == ""
    assert INSTRUCTION_PRESETS["classification"] == "classification: "
    assert (
        INSTRUCTION_PRESETS["sts"]
        == "Instruct: Retrieve semantically similar text \n Query: "
    )


def test_instruction_prefix_unknown():
    with pytest.raises(ValidationError):
        instruction_prefix("zzz")


def test_mock_embed_pure():
    a = mock_embed("abc", 8, 0)
    b = mock_embed("abc", 8, 0)
    assert np.array_equal(a, b)


def test_mock_embed_text_sensitivity():
    assert not np.array_equal(mock_embed("abc", 8, 0), mock_embed("abd", 8, 0))


def test_mock_embed_seed_sensitivity():
    assert not np.array_equal(mock_embed("abc", 8, 0), mock_embed("abc", 8, 1))


@given(st.text(min_size=1, max_size=20), st.integers(2, 64), st.integers(0, 2**31))
def test_mock_embed_unit_norm(text, dim, seed):
    v = mock_embed(text, dim, seed)
    assert v.dtype == np.float32
    assert abs(float(np.linalg.norm(v.astype(np.float64))) - 1.0) < 1e-6


def test_mock_embed_dim_floor():
    with pytest.raises(ValidationError):
        mock_embed("x", 1, 0)


def test_mock_embed_anchor_pulls_texts_together():
    anchors = {"a": ("cluster", 0.05), "b": ("cluster", 0.05)}
    va = mock_embed("a", 16, 0, anchors)
    vb = mock_embed("b", 16, 0, anchors)
    vc = mock_embed("c", 16, 0, anchors)
    assert float(va @ vb) > 0.99
    assert float(va @ vc) < 0.8


def test_anchor_spec_composite_components():
    spec = AnchorSpec.coerce({"components": [["x", 0.8], ["y", 0.5]], "jitter": 0.1})
    assert spec.components == (("x", 0.8), ("y", 0.5))
    # shorthand round-trip
    short = AnchorSpec.coerce(("x", 0.3))
    assert short.to_json() == ["x", 0.3]


def _mock_config(dim=8, **kw) -> ProviderConfig:
    return ProviderConfig(kind="mock", model_id="mock-1", dim=dim, **kw)


def test_embed_batch_mock_shapes_and_norms():
    out = embed_batch(_mock_config(), [f"text {i}" for i in range(5)])
    assert out.shape == (5, 8)
    norms = np.linalg.norm(out.astype(np.float64), axis=1)
    assert np.all(np.abs(norms - 1.0) < 1e-6)


def test_embed_batch_identical_text_identical_vectors():
    out = embed_batch(_mock_config(), ["same", "same"])
    assert np.array_equal(out[0], out[1])


def test_embed_batch_rejects_empty_text():
    with pytest.raises(ValidationError, match="index 1"):
        embed_batch(_mock_config(), ["ok", ""])


@settings(deadline=None, max_examples=20)
@given(st.permutations(list(range(6))))
def test_embed_batch_order_preservation(perm):
    texts = [f"t{i}" for i in range(6)]
    base = embed_batch(_mock_config(), texts)
    shuffled = [texts[i] for i in perm]
    out = embed_batch(_mock_config(), shuffled)
    for row, i in enumerate(perm):
        assert np.array_equal(out[row], base[i])


def test_embed_batch_cache_transparency(tmp_path):
    config = _mock_config()
    texts = [f"text {i}" for i in range(7)]
    cold_store = EmbeddingStore(tmp_path / "a")
    cold = embed_batch(config, texts, cache=cold_store)
    warm = embed_batch(config, texts, cache=cold_store)
    assert np.array_equal(cold, warm)  # bit-identical on a warm cache
    # and identical to an uncached run
    assert np.array_equal(cold, embed_batch(config, texts))


def test_embed_batch_cache_only_misses_touch_provider(tmp_path):
    store = EmbeddingStore(tmp_path)
    config = _mock_config()
    embed_batch(config, ["a", "b"], cache=store)
    hits, misses = embedder.cache_get_or_pending(store, config.model_id, "", ["a", "b", "c"])
    assert len(hits) == 2 and misses == [2]


def _transport(dim=4, counter=None, fail_first=0, status=500):
    state = {"left": fail_first}

    def handler(request: httpx.Request) -> httpx.Response:
        if counter is not None:
            counter.append(request)
        if state["left"] > 0:
            state["left"] -= 1
            return httpx.Response(status, json={"error": "busy"})
        payload = json.loads(request.content.decode("utf-8"))
        data = [
            {"index": i, "embedding": (np.arange(dim) + 1.0 + len(t)).tolist()}
            for i, t in enumerate(payload["input"])
        ]
        return httpx.Response(200, json={"data": data})

    return httpx.MockTransport(handler)


def _remote_config(**kw) -> ProviderConfig:
    defaults = dict(
        kind="remote_http",
        model_id="remote-1",
        endpoint="http://embeddings.test",
        batch_size=64,
        max_retries=2,
        base_backoff=0.0,
    )
    defaults.update(kw)
    return ProviderConfig(**defaults)


def test_remote_request_count_cold_cache():
    requests: list = []
    texts = [f"response {i}" for i in range(2899)]
    out = embed_batch(_remote_config(), texts, transport=_transport(counter=requests))
    assert out.shape == (2899, 4)
    assert len(requests) == math.ceil(2899 / 64) == 46


def test_remote_retries_on_429_then_succeeds():
    requests: list = []
    out = embed_batch(
        _remote_config(),
        ["a"],
        transport=_transport(counter=requests, fail_first=2, status=429),
    )
    assert out.shape == (1, 4)
    assert len(requests) == 3


def test_remote_transport_error_after_retries():
    with pytest.raises(TransportError, match="3 attempts"):
        embed_batch(_remote_config(), ["a"], transport=_transport(fail_first=99))


def test_remote_missing_api_key_env(monkeypatch):
    monkeypatch.delenv("EMBED_KEY", raising=False)
    with pytest.raises(ConfigurationError, match="EMBED_KEY"):
        embed_batch(_remote_config(api_key_env="EMBED_KEY"), ["a"], transport=_transport())


def test_remote_api_key_header(monkeypatch):
    monkeypatch.setenv("EMBED_KEY", "sekrit")
    requests: list = []
    embed_batch(
        _remote_config(api_key_env="EMBED_KEY"), ["a"], transport=_transport(counter=requests)
    )
    assert requests[0].headers["Authorization"] == "Bearer sekrit"


def test_remote_dimension_drift_rejected():
    def handler(request: httpx.Request) -> httpx.Response:
        payload = json.loads(request.content.decode("utf-8"))
        data = [
            {"index": i, "embedding": [1.0] * (3 if i == 0 else 4)}
            for i in range(len(payload["input"]))
        ]
        return httpx.Response(200, json={"data": data})

    with pytest.raises(IntegrityError, match="drift"):
        embed_batch(_remote_config(), ["a", "b"], transport=httpx.MockTransport(handler))


def test_remote_unordered_response_reassembled():
    def handler(request: httpx.Request) -> httpx.Response:
        payload = json.loads(request.content.decode("utf-8"))
        data = [
            {"index": i, "embedding": [float(i + 1), 1.0]}
            for i in range(len(payload["input"]))
        ]
        return httpx.Response(200, json={"data": list(reversed(data))})

    out = embed_batch(_remote_config(), ["a", "b", "c"], transport=httpx.MockTransport(handler))
    # index i carries leading component i+1 before normalization, so the
    # normalized leading component must increase with input position
    assert out[2, 0] > out[1, 0] > out[0, 0] > 0


def test_embedded_set_comparability_guard():
    es = EmbeddedSet(model_id="m1", ids=["a"], vectors=np.ones((1, 4), "<f4"))
    with pytest.raises(ComparabilityError):
        es.require_same_model("m2")


def test_embed_project_and_reload(tmp_path):
    project = Project(
        id="p", responses=[Response(id="1", text="aa"), Response(id="2", text="bb")]
    )
    store = EmbeddingStore(tmp_path)
    config = _mock_config()
    embedded = embed_project(project, config, store)
    assert embedded.ids == ["1", "2"]
    again = load_project_embeddings(project, store, config.model_id, "")
    assert np.array_equal(embedded.vectors, again.vectors)


def test_load_project_embeddings_lists_missing(tmp_path):
    project = Project(id="p", responses=[Response(id="1", text="aa")])
    store = EmbeddingStore(tmp_path)
    with pytest.raises(ValidationError, match=r"\['1'\]"):
        load_project_embeddings(project, store, "mock-1", "")


def test_provider_config_validation():
    with pytest.raises(ConfigurationError):
        ProviderConfig(kind="nope", model_id="x")
    with pytest.raises(ConfigurationError):
        ProviderConfig(kind="mock", model_id="x", dim=1)
    with pytest.raises(ConfigurationError):
        ProviderConfig(kind="remote_http", model_id="x")  # endpoint required
    with pytest.raises(ConfigurationError):
        ProviderConfig(kind="mock", model_id="x", dim=4, batch_size=0)


def test_provider_config_from_json_presets():
    config = ProviderConfig.from_json(
        {"kind": "mock", "model_id": "m", "dim": 4, "instruction_preset": "classification"}
    )
    assert config.instruction == "classification: "
