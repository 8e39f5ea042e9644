#!/usr/bin/env python3
"""End-to-end coding pipeline: import, embed, classify, evaluate, audit,
adapter train/apply, re-evaluate, and project to 2-D.

With no arguments this runs on the bundled synthetic corpus. To reproduce on
real data, point --input at a CSV export (columns id,text,code), --codebook
at a codebook JSON, and --provider at a remote provider config; agreement
numbers then depend on the embedding model you serve.
"""
from __future__ import annotations

import argparse
import json
import tempfile
from pathlib import Path

from embedcode import flows, synthetic
from embedcode.corpus import ImportMapping
from embedcode.embedder import ProviderConfig


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--input", default=None, help="responses CSV (id,text,code)")
    parser.add_argument("--codebook", default=None, help="codebook JSON")
    parser.add_argument("--provider", default=None, help="provider config JSON")
    parser.add_argument("--workdir", default=None, help="project directory (default: temp)")
    parser.add_argument("--adapter-lr", type=float, default=0.05)
    parser.add_argument("--adapter-epochs", type=int, default=100)
    parser.add_argument("--adapter-l2", type=float, default=0.01)
    parser.add_argument("--tsne", action="store_true", help="t-SNE instead of PCA")
    args = parser.parse_args()

    workdir = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="embedcode-"))
    project_dir = workdir / "project"

    if args.input is None:
        corpus = synthetic.build_synthetic_corpus()
        paths = synthetic.write_corpus_files(corpus, workdir / "data")
        input_path, codebook_path = paths["corpus"], paths["codebook"]
        provider = corpus.provider
        print(f"using bundled synthetic corpus ({len(corpus.responses)} responses)")
    else:
        if not (args.codebook and args.provider):
            parser.error("--input requires --codebook and --provider")
        input_path, codebook_path = Path(args.input), Path(args.codebook)
        provider = ProviderConfig.from_json(
            json.loads(Path(args.provider).read_text(encoding="utf-8"))
        )

    print(f"project directory: {project_dir}")
    mapping = ImportMapping(code_column="code")
    print("import  :", flows.do_import(project_dir, input_path, fmt="csv", mapping=mapping))
    codebook_doc = json.loads(Path(codebook_path).read_text(encoding="utf-8"))
    print("codebook:", flows.do_set_codebook(project_dir, codebook_doc))
    print("embed   :", flows.do_embed(project_dir, provider))
    print("classify:", flows.do_classify(project_dir, mode="selective"))

    selective = flows.do_evaluate(project_dir)
    print(f"selective  kappa={selective.kappa:.4f} mcc={selective.mcc:.4f} "
          f"f1w={selective.f1_weighted:.4f} n={selective.n_scored}")

    flows.do_classify(project_dir, mode="exhaustive")
    exhaustive = flows.do_evaluate(project_dir, drop_other=True)
    print(f"exhaustive kappa={exhaustive.kappa:.4f} mcc={exhaustive.mcc:.4f} "
          f"f1w={exhaustive.f1_weighted:.4f} n={exhaustive.n_scored}")

    report = flows.do_audit(project_dir, threshold=0.15, code_source="human")
    print(f"audit    : {len(report.flags)} flags in "
          f"{len(report.conflict_components)} components at threshold {report.threshold}")

    from embedcode.adapter import AdapterHyperparams

    hp = AdapterHyperparams(
        learning_rate=args.adapter_lr, epochs=args.adapter_epochs, l2_anchor=args.adapter_l2
    )
    print("adapter :", flows.do_adapter_train(project_dir, hp))
    print("apply   :", flows.do_adapter_apply(project_dir))
    flows.do_classify(project_dir, mode="selective")
    tuned = flows.do_evaluate(project_dir)
    print(f"selective after adapter: kappa={tuned.kappa:.4f} "
          f"(was {selective.kappa:.4f}, change {tuned.kappa - selective.kappa:+.4f})")

    method = "tsne" if args.tsne else "pca"
    print("project :", flows.do_projection(project_dir, method=method, seed=42))


if __name__ == "__main__":
    main()
