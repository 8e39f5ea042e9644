"""Command-line front door mirroring the coding workflow: import, embed,
codebook, classify, evaluate, audit, adapter, project(ion), serve.

All commands print JSON to stdout; failures print a machine-parseable JSON
error to stderr and exit 2 (validation), 3 (provider/transport), or
4 (integrity/conflict).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import adapter as adapter_mod
from . import audit as audit_mod
from . import flows
from . import metrics as metrics_mod
from .audit import resolutions_from_csv
from .corpus import ImportMapping, load_project
from .embedder import INSTRUCTION_PRESETS, ProviderConfig
from .errors import EngineError, ValidationError


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True, indent=2))


def _load_provider(path: str) -> ProviderConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"provider config not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"provider config {path} is not valid JSON: {exc.msg}")
    return ProviderConfig.from_json(doc)


def _parse_resample(spec: str) -> dict:
    out = {"k": None, "runs": 20, "seed": 0}
    for part in spec.split(","):
        if not part:
            continue
        if "=" not in part:
            raise ValidationError(f"bad --resample component {part!r} (expected key=value)")
        key, value = part.split("=", 1)
        if key not in out:
            raise ValidationError(f"unknown --resample key {key!r} (expected k, runs, seed)")
        out[key] = int(value)
    if out["k"] is None:
        raise ValidationError("--resample requires k=<exemplars per category>")
    return out


def _metrics_table(report: metrics_mod.MetricsReport) -> str:
    lines = [
        f"{'n_scored':<14}{report.n_scored}",
        f"{'kappa':<14}{report.kappa:.4f}",
        f"{'mcc':<14}{report.mcc:.4f}",
        f"{'f1_micro':<14}{report.f1_micro:.4f}",
        f"{'f1_macro':<14}{report.f1_macro:.4f}",
        f"{'f1_weighted':<14}{report.f1_weighted:.4f}",
    ]
    for cat, f1 in report.per_class_f1.items():
        lines.append(f"{'f1[' + cat + ']':<14}{f1:.4f}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedcode",
        description="Few-shot deductive coding of survey responses with text embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="import responses from CSV or JSON-lines")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--project", required=True)
    p.add_argument("--id-column", default="id")
    p.add_argument("--text-column", default="text")
    p.add_argument("--code-column", default=None)
    p.add_argument("--metadata-columns", default="")
    p.add_argument(
        "--synthesize-ids", action="store_true", help="ignore id column, number rows 1..N"
    )

    p = sub.add_parser("codebook", help="codebook operations")
    p.add_argument("action", choices=("set",))
    p.add_argument("--project", required=True)
    p.add_argument("--file", required=True)

    p = sub.add_parser("embed", help="embed all responses through the cache")
    p.add_argument("--project", required=True)
    p.add_argument("--provider", required=True, help="provider config JSON")
    p.add_argument("--instruction", choices=sorted(INSTRUCTION_PRESETS), default=None)

    p = sub.add_parser("classify", help="assign categories by nearest centroid")
    p.add_argument("--project", required=True)
    p.add_argument("--mode", choices=("selective", "exhaustive"), default="selective")
    p.add_argument("--temperature", type=float, default=1.0)

    p = sub.add_parser("evaluate", help="score assignments against human codes")
    p.add_argument("--project", required=True)
    p.add_argument("--resample", default=None, help="k=...,runs=...,seed=...")
    p.add_argument("--drop-other", action="store_true")
    p.add_argument("--format", choices=("json", "table"), default="json")

    p = sub.add_parser("audit", help="flag near-duplicates with conflicting codes")
    p.add_argument("action", nargs="?", choices=("resolve",), default=None)
    p.add_argument("--project", required=True)
    p.add_argument("--threshold", type=float, default=0.15)
    p.add_argument("--code-source", choices=("human", "predicted"), default="human")
    p.add_argument("--file", default=None, help="resolutions CSV (resolve)")
    p.add_argument("--expect-revision", type=int, default=None)
    p.add_argument("--csv-out", default=None, help="also write the reviewer CSV here")

    p = sub.add_parser("adapter", help="train or apply the linear adapter")
    p.add_argument("action", choices=("train", "apply"))
    p.add_argument("--project", required=True)
    p.add_argument("--hyperparams", default=None, help="hyperparameter JSON file")

    p = sub.add_parser("project", help="2-D projection of the embedded corpus")
    p.add_argument("--project", required=True)
    p.add_argument("--method", choices=("pca", "tsne"), default="pca")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--addr", default="127.0.0.1:8765")
    p.add_argument("--store", required=True)
    p.add_argument("--provider", default=None)
    p.add_argument("--ui-dir", default=None)

    return parser


def _run(args: argparse.Namespace) -> int:
    if args.command == "import":
        if not Path(args.input).exists():
            raise ValidationError(f"input file not found: {args.input}")
        metadata = tuple(c for c in args.metadata_columns.split(",") if c)
        mapping = ImportMapping(
            text_column=args.text_column,
            id_column=None if args.synthesize_ids else args.id_column,
            code_column=args.code_column,
            metadata_columns=metadata,
        )
        _emit(flows.do_import(args.project, args.input, fmt=args.format, mapping=mapping))

    elif args.command == "codebook":
        doc = json.loads(Path(args.file).read_text(encoding="utf-8"))
        _emit(flows.do_set_codebook(args.project, doc))

    elif args.command == "embed":
        provider = _load_provider(args.provider)
        _emit(flows.do_embed(args.project, provider, instruction_preset=args.instruction))

    elif args.command == "classify":
        _emit(flows.do_classify(args.project, mode=args.mode, temperature=args.temperature))

    elif args.command == "evaluate":
        if args.resample:
            spec = _parse_resample(args.resample)
            evaluation = flows.do_resample(
                args.project,
                k=spec["k"],
                n_runs=spec["runs"],
                seed=spec["seed"],
                drop_other=args.drop_other,
            )
            print(json.dumps(evaluation.to_json(), sort_keys=True, indent=2))
        else:
            report = flows.do_evaluate(args.project, drop_other=args.drop_other)
            if args.format == "table":
                print(_metrics_table(report))
            else:
                sys.stdout.write(metrics_mod.report_json(report))

    elif args.command == "audit":
        if args.action == "resolve":
            if not args.file:
                raise ValidationError("audit resolve requires --file")
            project = load_project(args.project)
            resolutions = resolutions_from_csv(
                project, Path(args.file).read_text(encoding="utf-8")
            )
            _emit(
                flows.do_resolutions(
                    args.project, resolutions, expected_revision=args.expect_revision
                )
            )
        else:
            report = flows.do_audit(
                args.project, threshold=args.threshold, code_source=args.code_source
            )
            if args.csv_out:
                project = load_project(args.project)
                Path(args.csv_out).write_text(
                    audit_mod.audit_csv(project, report), encoding="utf-8"
                )
            sys.stdout.write(audit_mod.report_json(report))

    elif args.command == "adapter":
        if args.action == "train":
            hp = None
            if args.hyperparams:
                hp = adapter_mod.AdapterHyperparams.from_json(
                    json.loads(Path(args.hyperparams).read_text(encoding="utf-8"))
                )
            _emit(flows.do_adapter_train(args.project, hp))
        else:
            _emit(flows.do_adapter_apply(args.project))

    elif args.command == "project":
        _emit(
            flows.do_projection(
                args.project,
                method=args.method,
                perplexity=args.perplexity,
                iterations=args.iterations,
                seed=args.seed,
            )
        )

    elif args.command == "serve":
        from .service import serve  # deferred: uvicorn import is heavy

        provider = _load_provider(args.provider) if args.provider else None
        serve(args.addr, args.store, provider_config=provider, ui_dir=args.ui_dir)

    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except EngineError as exc:
        sys.stderr.write(
            json.dumps({"code": exc.code, "message": str(exc)}, sort_keys=True) + "\n"
        )
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - last-resort CLI boundary
        sys.stderr.write(
            json.dumps({"code": "internal", "message": f"{type(exc).__name__}: {exc}"}) + "\n"
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
