"""Project-directory operations shared by the CLI and the HTTP service.

Each flow loads the project from its directory, performs one logical
mutation (bumping the revision exactly once), and saves. Derived artifacts
(adapter matrices, projections) live beside the manifest; re-running a flow
with identical inputs produces identical bytes.
"""
from __future__ import annotations

import dataclasses
import io
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import adapter as adapter_mod
from . import audit as audit_mod
from . import classifier, projection
from .corpus import (
    Codebook,
    ImportMapping,
    Project,
    content_hash,
    import_responses,
    load_project,
    project_cache,
    save_project,
)
from .embedder import (
    EmbeddedSet,
    ProviderConfig,
    cache_get_or_pending,
    embed_project,
    instruction_prefix,
    load_project_embeddings,
)
from .errors import ConfigurationError, ConflictError, ValidationError

ADAPTED_SUFFIX = "#adapted"
_ADAPTER_BASENAME = "adapter"
_PROJECTION_FILE = "projection.json"


def init_project(project_dir: str | Path, project_id: str | None = None) -> Project:
    root = Path(project_dir)
    if (root / "manifest.json").exists():
        raise ConflictError(f"project already exists at {root}")
    project = Project(id=project_id or root.name)
    save_project(project, root)
    return project


def _load_or_init(project_dir: str | Path, project_id: str | None = None) -> Project:
    root = Path(project_dir)
    if (root / "manifest.json").exists():
        return load_project(root)
    return Project(id=project_id or root.name)


def do_import(
    project_dir: str | Path,
    source: str | Path,
    fmt: str = "csv",
    mapping: ImportMapping | None = None,
    text: str | None = None,
) -> dict:
    """Append responses from a file path (or raw text) to the project."""
    project = _load_or_init(project_dir)
    if text is not None:
        incoming = import_responses(io.StringIO(text), fmt=fmt, mapping=mapping)
    else:
        incoming = import_responses(source, fmt=fmt, mapping=mapping)
    existing = {r.id for r in project.responses}
    clashes = sorted(r.id for r in incoming if r.id in existing)
    if clashes:
        raise ConflictError(f"imported ids already present in project: {clashes[:20]}")
    project.responses.extend(incoming)
    project.bump()
    save_project(project, project_dir)
    return {"project": project.id, "imported": len(incoming), "revision": project.revision}


def do_set_codebook(project_dir: str | Path, codebook_doc: Mapping) -> dict:
    project = load_project(project_dir)
    codebook = Codebook.from_json(codebook_doc)
    known = {r.id for r in project.responses}
    for cat in codebook.categories:
        missing = [rid for rid in cat.exemplar_ids if rid not in known]
        if missing:
            raise ValidationError(
                f"category {cat.id!r} references unknown exemplar responses: {missing[:10]}"
            )
    project.codebook = codebook
    project.bump()
    save_project(project, project_dir)
    return {
        "project": project.id,
        "categories": codebook.category_ids,
        "revision": project.revision,
    }


def do_embed(
    project_dir: str | Path,
    provider: ProviderConfig,
    instruction_preset: str | None = None,
    transport=None,
) -> dict:
    """Embed every response with the cache; records the run in the manifest."""
    project = load_project(project_dir)
    if not project.responses:
        raise ValidationError(f"project {project.id!r} has no responses to embed")
    if instruction_preset is not None:
        provider = dataclasses.replace(
            provider, instruction=instruction_prefix(instruction_preset)
        )
    store = project_cache(project_dir)
    texts = [r.text for r in project.responses]
    _, misses = cache_get_or_pending(store, provider.model_id, provider.instruction, texts)
    embedded = embed_project(project, provider, store, transport=transport)
    project.embed_run = {
        "model_id": provider.model_id,
        "instruction": provider.instruction,
        "instruction_preset": instruction_preset,
        "dim": embedded.dim,
    }
    project.bump()
    save_project(project, project_dir)
    return {
        "project": project.id,
        "embedded": len(texts),
        "cache_hits": len(texts) - len(misses),
        "model_id": provider.model_id,
        "dim": embedded.dim,
        "revision": project.revision,
    }


def _require_embeddings(project: Project, project_dir: str | Path) -> EmbeddedSet:
    if not project.embed_run:
        raise ConfigurationError(
            f"project {project.id!r} has no embeddings yet; run embed first"
        )
    store = project_cache(project_dir)
    return load_project_embeddings(
        project, store, project.embed_run["model_id"], project.embed_run.get("instruction", "")
    )


def _exemplar_hashes(project: Project) -> dict[str, str]:
    instruction = (project.embed_run or {}).get("instruction", "")
    return {r.id: content_hash(instruction, r.text) for r in project.responses}


def do_classify(
    project_dir: str | Path, mode: str = "selective", temperature: float = 1.0
) -> dict:
    project = load_project(project_dir)
    codebook = project.require_codebook()
    embedded = _require_embeddings(project, project_dir)
    centroids = classifier.build_centroids(
        codebook, embedded.as_mapping(), embedded.model_id, hashes=_exemplar_hashes(project)
    )
    assignments = classifier.classify_all(centroids, project, embedded, mode, temperature)
    project.assignments = {a.response_id: a for a in assignments}
    project.bump()
    save_project(project, project_dir)
    return {
        "project": project.id,
        "classified": len(assignments),
        "mode": mode,
        "temperature": temperature,
        "revision": project.revision,
    }


def do_evaluate(project_dir: str | Path, drop_other: bool = False):
    """Score stored assignments against human codes; read-only."""
    project = load_project(project_dir)
    codebook = project.require_codebook()
    drop = {codebook.other_id} if drop_other and codebook.other_id else set()
    return classifier.evaluate_assignments(project, drop_categories=drop)


def do_resample(
    project_dir: str | Path,
    k: int,
    n_runs: int,
    seed: int = 0,
    drop_other: bool = False,
    temperature: float = 1.0,
) -> classifier.ResamplingEvaluation:
    """Resampling evaluation; exhaustive mode when the residual is dropped."""
    project = load_project(project_dir)
    codebook = project.require_codebook()
    embedded = _require_embeddings(project, project_dir)
    mode = "exhaustive" if drop_other and codebook.other_id else "selective"
    k_map = {c.id: k for c in codebook.categories}
    return classifier.resample_evaluate(
        project, embedded, k_map, n_runs=n_runs, seed=seed, mode=mode, temperature=temperature
    )


def do_audit(
    project_dir: str | Path, threshold: float = 0.15, code_source: str = "human"
) -> audit_mod.AuditReport:
    project = load_project(project_dir)
    embedded = _require_embeddings(project, project_dir)
    report = audit_mod.run_audit(project, embedded, threshold, code_source)
    project.audit_state = report
    project.bump()
    save_project(project, project_dir)
    return report


def do_resolutions(
    project_dir: str | Path,
    resolutions: Sequence[audit_mod.Resolution],
    expected_revision: int | None = None,
) -> dict:
    project = load_project(project_dir)
    audit_mod.apply_resolutions(project, resolutions, expected_revision=expected_revision)
    save_project(project, project_dir)
    out = {
        "project": project.id,
        "applied": len(resolutions),
        "revision": project.revision,
    }
    if project.audit_state is not None:
        out["summary"] = audit_mod.audit_summary(
            project, project.audit_state, project.resolutions
        ).to_json()
    return out


def adapter_path(project_dir: str | Path) -> Path:
    return Path(project_dir) / _ADAPTER_BASENAME


def do_adapter_train(
    project_dir: str | Path, hyperparams: adapter_mod.AdapterHyperparams | None = None
) -> dict:
    """Train the linear adapter on the codebook's exemplar vectors (all
    ordered pairs, same-category label 1) and store it beside the manifest."""
    project = load_project(project_dir)
    codebook = project.require_codebook()
    embedded = _require_embeddings(project, project_dir)
    if embedded.model_id.endswith(ADAPTED_SUFFIX):
        raise ConfigurationError("project embeddings are already adapted; re-embed first")
    vector_of = embedded.as_mapping()

    labeled: list[tuple[int, str]] = []
    rows: list[np.ndarray] = []
    for cat in codebook.categories:
        for rid in cat.exemplar_ids:
            if rid not in vector_of:
                raise ValidationError(f"exemplar {rid!r} has no embedding")
            labeled.append((len(rows), cat.id))
            rows.append(vector_of[rid])
    pairs = adapter_mod.generate_pairs(labeled)
    trained = adapter_mod.train(
        np.stack(rows), pairs, hyperparams, model_id=embedded.model_id
    )
    adapter_mod.save_adapter(trained, adapter_path(project_dir))
    return {
        "project": project.id,
        "model_id": trained.model_id,
        "pair_count": trained.training_manifest["pair_count"],
        "positive_pairs": trained.training_manifest["positive_pairs"],
        "final_loss": trained.training_manifest["final_loss"],
        "adapter": str(adapter_path(project_dir).with_suffix(".bin")),
    }


def do_adapter_apply(project_dir: str | Path) -> dict:
    """Push every cached response vector through the adapter and switch the
    project onto the adapted model id."""
    project = load_project(project_dir)
    embedded = _require_embeddings(project, project_dir)
    trained = adapter_mod.load_adapter(adapter_path(project_dir))
    if trained.model_id != embedded.model_id:
        raise ConfigurationError(
            f"adapter was trained for model {trained.model_id!r}, project embeddings "
            f"are {embedded.model_id!r}"
        )
    adapted_model = embedded.model_id + ADAPTED_SUFFIX
    adapted = adapter_mod.apply_adapter(trained, embedded.vectors)

    from .corpus import EmbeddingRecord  # local: keeps module deps one-way

    store = project_cache(project_dir)
    instruction = (project.embed_run or {}).get("instruction", "")
    records = [
        EmbeddingRecord(
            content_hash=content_hash(instruction, r.text),
            model_id=adapted_model,
            dim=adapted.shape[1],
            vector=adapted[i],
            normalized=True,
        )
        for i, r in enumerate(project.responses)
    ]
    store.put_many(records)
    project.embed_run = {**project.embed_run, "model_id": adapted_model}
    if project.codebook is not None and project.codebook.model_binding:
        project.codebook.model_binding = adapted_model
    project.bump()
    save_project(project, project_dir)
    return {
        "project": project.id,
        "model_id": adapted_model,
        "vectors": len(records),
        "revision": project.revision,
    }


def do_projection(
    project_dir: str | Path,
    method: str = "pca",
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 42,
) -> dict:
    """Compute and store a 2-D projection of the current embeddings.

    Purely derived artifact: does not touch the manifest or revision.
    """
    project = load_project(project_dir)
    embedded = _require_embeddings(project, project_dir)
    if method == "pca":
        proj = projection.pca_2d(embedded.vectors)
    elif method == "tsne":
        proj = projection.tsne_2d(
            embedded.vectors, perplexity=perplexity, iterations=iterations, seed=seed
        )
    else:
        raise ValidationError(f"unknown projection method {method!r} (expected pca or tsne)")

    codes = [r.human_code for r in project.responses]
    records = projection.projection_records(proj, embedded.ids, codes)
    for rec in records:
        assignment = project.assignments.get(rec["id"])
        rec["predicted"] = assignment.category_id if assignment else None
    doc = {
        "method": proj.method,
        "model_id": embedded.model_id,
        "seed": proj.seed,
        "params": proj.params,
        "points": records,
    }
    out_path = Path(project_dir) / _PROJECTION_FILE
    out_path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return {
        "project": project.id,
        "method": method,
        "points": len(records),
        "params": proj.params,
        "file": str(out_path),
    }


def load_projection_doc(project_dir: str | Path) -> dict | None:
    path = Path(project_dir) / _PROJECTION_FILE
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))
