"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line and enforcing its runtime budget.

Run with `pytest tests/test_acceptance.py -s` to see the criterion lines.
"""
from __future__ import annotations

import io
import json
import time
from contextlib import contextmanager, redirect_stderr, redirect_stdout
from pathlib import Path

import numpy as np
import pytest

from embedcode import adapter as adapter_mod
from embedcode import classifier, metrics, synthetic, vecmath
from embedcode import audit as audit_mod
from embedcode.audit import Resolution, apply_resolutions, run_audit
from embedcode.classifier import build_centroids, classify_all, resample_evaluate
from embedcode.corpus import Codebook, Project, filter_coded
from embedcode.embedder import EmbeddedSet, embed_project
from embedcode.projection import tsne_2d

from oracles import naive_metrics_from_matrix, naive_near_pairs

GOLDEN = Path(__file__).parent / "golden"


@contextmanager
def criterion(name: str, budget_seconds: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    elapsed = time.perf_counter() - start
    if elapsed > budget_seconds:
        print(f"[FAIL] {name} (exceeded {budget_seconds}s budget: {elapsed:.1f}s)")
        raise AssertionError(f"{name}: runtime {elapsed:.1f}s > {budget_seconds}s")
    print(f"[PASS] {name} ({elapsed:.1f}s)")


@pytest.fixture(scope="module")
def synthetic_setup():
    corpus = synthetic.build_synthetic_corpus()
    project = Project(id="syn", responses=corpus.responses, codebook=corpus.codebook)
    embedded = embed_project(project, corpus.provider, store=None)
    return corpus, project, embedded


def _kappa(project, codebook, embedded_set, vec_map, mode, drop_other):
    view = filter_coded(project, {"O"}) if drop_other else project
    unbound = Codebook(categories=codebook.categories)
    centroids = build_centroids(unbound, vec_map, embedded_set.model_id)
    ids = [r.id for r in view.responses]
    sub = EmbeddedSet(
        model_id=embedded_set.model_id,
        ids=ids,
        vectors=np.stack([vec_map[i] for i in ids]),
    )
    assignments = classify_all(centroids, view, sub, mode=mode)
    cats = [c for c in codebook.category_ids if not (drop_other and c == "O")]
    truth = [r.human_code for r in view.responses]
    predicted = [a.category_id for a in assignments]
    return metrics.score(truth, predicted, cats).kappa


def test_metric_oracle_equivalence():
    with criterion(
        "metric oracle equivalence (1,000 random K in 2..5 matrices, 1e-9)", 10.0
    ):
        rng = np.random.default_rng(20240901)
        for _ in range(1000):
            k = int(rng.integers(2, 6))
            counts = rng.integers(0, 40, size=(k, k))
            if counts.sum() == 0:
                counts[0, 0] = 1
            cats = [f"c{i}" for i in range(k)]
            cm = metrics.ConfusionMatrix(categories=cats, counts=np.asarray(counts))
            want = naive_metrics_from_matrix(counts.tolist(), cats)
            per_class, micro, macro, weighted = metrics.f1_scores(cm)
            assert abs(metrics.cohens_kappa(cm) - want["kappa"]) < 1e-9
            assert abs(metrics.multiclass_mcc(cm) - want["mcc"]) < 1e-9
            assert abs(micro - want["f1_micro"]) < 1e-9
            assert abs(macro - want["f1_macro"]) < 1e-9
            assert abs(weighted - want["f1_weighted"]) < 1e-9
            for cat in cats:
                assert abs(per_class[cat] - want["per_class_f1"][cat]) < 1e-9
        # hand cases
        hand = metrics.ConfusionMatrix(
            categories=["a", "b"], counts=np.array([[20, 5], [10, 15]])
        )
        assert metrics.cohens_kappa(hand) == pytest.approx(0.4, abs=1e-12)
        assert metrics.multiclass_mcc(hand) == pytest.approx(0.4082, abs=1e-3)


def test_pair_generation_law():
    with criterion("pair-generation law (93 texts -> 8,649 pairs, 2,331 positives)", 1.0):
        sizes = {"L": 28, "P": 15, "S": 19, "O": 31}
        labeled = []
        i = 0
        for cat, size in sizes.items():
            for _ in range(size):
                labeled.append((i, cat))
                i += 1
        pairs = adapter_mod.generate_pairs(labeled)
        assert len(pairs) == 8649
        assert sum(p.label for p in pairs) == 2331


def test_adapter_gradient_check(synthetic_setup):
    with criterion("adapter gradient check (>=50 probes, rel err < 1e-4)", 30.0):
        corpus, project, embedded = synthetic_setup
        vec_map = embedded.as_mapping()
        labeled, rows = [], []
        for cat in corpus.codebook.categories:
            for rid in cat.exemplar_ids[:6]:
                labeled.append((len(rows), cat.id))
                rows.append(vec_map[rid])
        pairs = adapter_mod.generate_pairs(labeled)
        X = np.stack(rows)
        err_identity = adapter_mod.gradient_check(X, pairs, probe_count=50)
        assert err_identity < 1e-4
        trained = adapter_mod.train(
            X, pairs, adapter_mod.AdapterHyperparams(learning_rate=0.05, epochs=5)
        )
        err_trained = adapter_mod.gradient_check(X, pairs, probe_count=50, W=trained.W)
        assert err_trained < 1e-4


def test_directional_fine_tuning(synthetic_setup):
    with criterion(
        "directional fine-tuning (sel' > sel; exh > sel before and after)", 120.0
    ):
        corpus, project, embedded = synthetic_setup
        vec_map = embedded.as_mapping()
        codebook = corpus.codebook

        sel_before = _kappa(project, codebook, embedded, vec_map, "selective", False)
        exh_before = _kappa(project, codebook, embedded, vec_map, "exhaustive", True)

        labeled, rows = [], []
        for cat in codebook.categories:
            for rid in cat.exemplar_ids:
                labeled.append((len(rows), cat.id))
                rows.append(vec_map[rid])
        pairs = adapter_mod.generate_pairs(labeled)
        trained = adapter_mod.train(
            np.stack(rows),
            pairs,
            adapter_mod.AdapterHyperparams(learning_rate=0.05, epochs=100, l2_anchor=0.01),
            model_id=embedded.model_id,
        )
        adapted_vectors = adapter_mod.apply_adapter(trained, embedded.vectors)
        adapted_map = dict(zip(embedded.ids, adapted_vectors))
        adapted = EmbeddedSet(
            model_id=embedded.model_id, ids=embedded.ids, vectors=adapted_vectors
        )

        sel_after = _kappa(project, codebook, adapted, adapted_map, "selective", False)
        exh_after = _kappa(project, codebook, adapted, adapted_map, "exhaustive", True)

        assert sel_after > sel_before, (sel_before, sel_after)
        assert exh_before > sel_before, (sel_before, exh_before)
        assert exh_after > sel_after, (sel_after, exh_after)


def test_audit_equivalence_and_fixpoint(synthetic_setup):
    with criterion("audit blocked == naive (N<=200) and re-audit fixpoint", 30.0):
        rng = np.random.default_rng(7)
        for n in (50, 137, 200):
            vectors = rng.standard_normal((n, 8)).astype(np.float32)
            unit = (
                vectors.astype(np.float64)
                / np.linalg.norm(vectors.astype(np.float64), axis=1)[:, None]
            ).astype("<f4")
            got = sorted(vecmath.near_pairs(unit, 0.3, block_size=16))
            want = sorted(naive_near_pairs(unit, 0.3))
            assert got and got == want  # exact equality, distances included

        corpus, project, embedded = synthetic_setup
        work = Project(
            id="syn",
            responses=[type(r)(id=r.id, text=r.text, human_code=r.human_code)
                       for r in project.responses],
            codebook=project.codebook,
        )
        report = run_audit(work, embedded, threshold=0.15)
        assert report.flags, "synthetic corpus must produce audit flags"
        resolutions = []
        for component in report.conflict_components:
            target = work.response_index()[component[0]].human_code
            for rid in component[1:]:
                resolutions.append(
                    Resolution(rid, work.response_index()[rid].human_code, target)
                )
        apply_resolutions(work, resolutions)
        again = run_audit(work, embedded, threshold=0.15)
        flagged_after = {f.response_id for f in again.flags}
        for component in report.conflict_components:
            assert flagged_after.isdisjoint(component)


def test_resampling_determinism_and_degeneracy(synthetic_setup):
    with criterion("resampling determinism and degeneracy (std = 0, bit-identical)", 60.0):
        corpus, project, embedded = synthetic_setup
        single = resample_evaluate(
            project, embedded, {"L": 5, "P": 5, "S": 5, "O": 5}, n_runs=1, seed=3
        )
        assert all(v == 0.0 for v in single.std.values())

        full_pool = {c.id: len(c.exemplar_ids) for c in corpus.codebook.categories}
        saturated = resample_evaluate(project, embedded, full_pool, n_runs=5, seed=3)
        assert all(v == 0.0 for v in saturated.std.values())

        k = {"L": 5, "P": 5, "S": 5, "O": 5}
        a = resample_evaluate(project, embedded, k, n_runs=10, seed=11)
        b = resample_evaluate(project, embedded, k, n_runs=10, seed=11)
        assert a.to_json() == b.to_json()


def test_tsne_sanity():
    with criterion("t-SNE sanity (cluster neighbors, KL monotone final 100)", 60.0):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((10, 8)) * 0.05
        b = rng.standard_normal((10, 8)) * 0.05
        b[:, 0] += 40.0
        X = np.vstack([a, b])
        proj = tsne_2d(X, perplexity=5.0, iterations=1000, seed=7)
        labels = [0] * 10 + [1] * 10
        Y = proj.points
        for i in range(20):
            dists = np.linalg.norm(Y - Y[i], axis=1)
            dists[i] = np.inf
            assert labels[int(np.argmin(dists))] == labels[i]
        trail = proj.params["kl_final_window"]
        assert len(trail) == 100
        for prev, cur in zip(trail, trail[1:]):
            assert cur <= prev + 1e-6


def test_end_to_end_determinism(tmp_path):
    with criterion(
        "end-to-end determinism (golden bytes, CLI x2 and CLI vs service)", 120.0
    ):
        from fastapi.testclient import TestClient

        from embedcode.cli import main
        from embedcode.service import create_app

        corpus = synthetic.build_synthetic_corpus()
        paths = synthetic.write_corpus_files(corpus, tmp_path / "data")
        golden_metrics = GOLDEN.joinpath("metrics_report.json").read_text()
        golden_audit = GOLDEN.joinpath("audit_report.json").read_text()

        def cli_run(run_dir: Path) -> tuple[str, str]:
            project_dir = run_dir / "syn"
            for step in (
                ("import", "--input", str(paths["corpus"]), "--format", "csv",
                 "--project", str(project_dir), "--code-column", "code"),
                ("codebook", "set", "--project", str(project_dir),
                 "--file", str(paths["codebook"])),
                ("embed", "--project", str(project_dir), "--provider", str(paths["provider"])),
                ("classify", "--project", str(project_dir), "--mode", "selective"),
            ):
                out, err = io.StringIO(), io.StringIO()
                with redirect_stdout(out), redirect_stderr(err):
                    assert main(list(step)) == 0, err.getvalue()
            out = io.StringIO()
            with redirect_stdout(out):
                assert main(["evaluate", "--project", str(project_dir)]) == 0
            metrics_text = out.getvalue()
            out = io.StringIO()
            with redirect_stdout(out):
                assert main(
                    ["audit", "--project", str(project_dir), "--threshold", "0.15"]
                ) == 0
            return metrics_text, out.getvalue()

        m1, a1 = cli_run(tmp_path / "run1")
        m2, a2 = cli_run(tmp_path / "run2")
        assert m1 == m2 == golden_metrics
        assert a1 == a2 == golden_audit

        app = create_app(tmp_path / "store", provider_config=corpus.provider)
        with TestClient(app) as client:
            client.post("/api/v1/projects", json={"name": "syn"})
            client.post(
                "/api/v1/projects/syn/responses?format=csv&code_column=code",
                content=corpus.texts_csv().encode("utf-8"),
            )
            client.put("/api/v1/projects/syn/codebook", json=corpus.codebook.to_json())
            job = client.post("/api/v1/projects/syn/embed", json={}).json()
            deadline = time.time() + 60
            while time.time() < deadline:
                doc = client.get(f"/api/v1/jobs/{job['id']}").json()
                if doc["state"] in ("done", "failed"):
                    break
                time.sleep(0.02)
            assert doc["state"] == "done", doc
            client.post("/api/v1/projects/syn/classify", json={"mode": "selective"})
            assert client.get("/api/v1/projects/syn/metrics").text == golden_metrics
            job = client.post("/api/v1/projects/syn/audit", json={"threshold": 0.15}).json()
            deadline = time.time() + 60
            while time.time() < deadline:
                doc = client.get(f"/api/v1/jobs/{job['id']}").json()
                if doc["state"] in ("done", "failed"):
                    break
                time.sleep(0.02)
            assert doc["state"] == "done", doc
            assert client.get("/api/v1/projects/syn/audit").text == golden_audit
