"""Bundled synthetic corpus: ~300 responses, four categories, mock embeddings.

The construction plants the structure the engine is meant to exercise:

- three primary categories in tight anchor clusters, separable but with
  enough jitter for occasional confusion;
- a residual category that leans weakly toward the dominant primary and
  scatters widely, carrying a weak latent marker direction that contrastive
  adaptation can amplify (so training measurably improves selective-mode
  agreement);
- a "vague" sub-population of the dominant category that shares a fainter
  trace of that marker, producing the two-way leakage a residual code shows
  in practice;
- six near-duplicate text pairs carrying conflicting codes (audit fodder);
- one deliberately mislabeled exemplar plus a designated replacement, so a
  workbench swap measurably raises agreement.

Everything is a pure function of the seed.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Category, Codebook, Response
from .embedder import AnchorSpec, ProviderConfig

MODEL_ID = "mock-synthetic-v1"
DIM = 32
DEFAULT_SEED = 42

_PRIMARY_JITTER = 1.2
_VAGUE_SPEC = ((("cat:L", 0.5), ("mark:O", 0.22)), 2.0)
_OTHER_SPEC = ((("cat:L", 0.3), ("mark:O", 0.5)), 2.2)
_DUP_JITTER = 0.004

_COUNTS = {"L": 95, "L_vague": 25, "P": 60, "S": 50, "O": 65}

_PHRASES = {
    "L": [
        "air currents in the room shifted between trials",
        "the release mechanism stuck slightly on some runs",
        "ball not placed at the exact same spot each time",
        "friction in the track varied with temperature",
        "measurement device only reads to two decimal places",
        "human reaction time when starting the stopwatch",
        "table vibrations from people walking nearby",
        "the sensor was not perfectly calibrated",
    ],
    "L_vague": [
        "something in the setup was probably off",
        "equipment issues of some kind",
        "imperfections in how it was done",
        "the conditions were not quite controlled",
        "errors from the apparatus maybe",
    ],
    "P": [
        "quantum uncertainty in the particle position",
        "inherent randomness predicted by the wave function",
        "thermal motion of molecules is fundamentally random",
        "the measurement collapses the state probabilistically",
        "statistical mechanics predicts a spread of outcomes",
    ],
    "S": [
        "small samples naturally show spread around the mean",
        "random sampling error produces the distribution",
        "the histogram looks normal because of averaging",
        "more trials would narrow the distribution",
        "variance is expected in any repeated measurement",
    ],
    "O": [
        "i am not sure what causes it",
        "maybe the experimenter made mistakes",
        "it depends on the situation",
        "no idea honestly",
        "could be many different things",
        "the spread just happens",
    ],
}

_MISLABELED_TEXT = "something about the apparatus i guess"

_DUP_TEXTS = [
    ("distance between the slit and the screen", "the distance between the slit and the screen"),
    ("wind speed changed during the throw", "the wind speed changed during the throw"),
    ("timer resolution is limited", "the timer resolution is limited"),
    ("randomness of particle motion", "the randomness of particle motion"),
    ("sample size is small", "the sample size is small"),
    ("detector alignment drifted", "the detector alignment drifted"),
]
_DUP_CODES = [("L", "P"), ("L", "S"), ("L", "O"), ("P", "S"), ("P", "O"), ("S", "O")]


@dataclass
class SyntheticCorpus:
    responses: list[Response]
    codebook: Codebook
    provider: ProviderConfig
    notes: dict

    def texts_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "text", "code"])
        for r in self.responses:
            writer.writerow([r.id, r.text, r.human_code or ""])
        return buf.getvalue()


def _text(family: str, n: int) -> str:
    phrases = _PHRASES[family]
    return f"{phrases[n % len(phrases)]} (case {n:03d})"


def build_synthetic_corpus(seed: int = DEFAULT_SEED, dim: int = DIM) -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    rows: list[tuple[str, str, AnchorSpec, str]] = []  # (text, code, anchor, kind)

    for n in range(_COUNTS["L"]):
        rows.append((_text("L", n), "L", AnchorSpec((("cat:L", 1.0),), _PRIMARY_JITTER), "tight"))
    for n in range(_COUNTS["L_vague"]):
        rows.append((_text("L_vague", n), "L", AnchorSpec(*_VAGUE_SPEC), "vague"))
    for n in range(_COUNTS["P"]):
        rows.append((_text("P", n), "P", AnchorSpec((("cat:P", 1.0),), _PRIMARY_JITTER), "tight"))
    for n in range(_COUNTS["S"]):
        rows.append((_text("S", n), "S", AnchorSpec((("cat:S", 1.0),), _PRIMARY_JITTER), "tight"))
    for n in range(_COUNTS["O"]):
        rows.append((_text("O", n), "O", AnchorSpec(*_OTHER_SPEC), "other"))
    rows.append((_MISLABELED_TEXT, "L", AnchorSpec(*_OTHER_SPEC), "mislabeled"))
    for k, ((text_a, text_b), (code_a, code_b)) in enumerate(zip(_DUP_TEXTS, _DUP_CODES)):
        spec = AnchorSpec(((f"dup:{k}", 1.0),), _DUP_JITTER)
        rows.append((text_a, code_a, spec, "dup"))
        rows.append((text_b, code_b, spec, "dup"))

    order = rng.permutation(len(rows))
    pad = len(str(len(rows)))
    responses: list[Response] = []
    anchors: dict[str, AnchorSpec] = {}
    kind_of: dict[str, str] = {}
    for position, row_idx in enumerate(order, start=1):
        text, code, anchor, kind = rows[row_idx]
        rid = f"r{position:0{pad}d}"
        responses.append(Response(id=rid, text=text, human_code=code))
        anchors[text] = anchor
        kind_of[rid] = kind

    # exemplar pools: clear-cut members only (tight primaries, regular others)
    pools: dict[str, list[str]] = {"L": [], "P": [], "S": [], "O": []}
    for r in responses:
        if kind_of[r.id] in ("tight", "other"):
            pools[r.human_code].append(r.id)

    def pick(code: str, k: int) -> list[str]:
        pool = pools[code]
        chosen = rng.choice(len(pool), size=k, replace=False)
        return sorted(pool[i] for i in chosen)

    mislabeled_id = next(r.id for r in responses if kind_of[r.id] == "mislabeled")
    exemplars_l = sorted(pick("L", 19) + [mislabeled_id])
    replacement_id = next(
        rid for rid in sorted(pools["L"]) if rid not in exemplars_l
    )

    codebook = Codebook(
        categories=[
            Category(
                id="L",
                name="Limitations",
                definition="imperfections of the real apparatus and procedure",
                exemplar_ids=exemplars_l,
            ),
            Category(
                id="P",
                name="Principles",
                definition="variability inherent in the underlying theory",
                exemplar_ids=pick("P", 7),
            ),
            Category(
                id="S",
                name="Statistics",
                definition="purely statistical or data-driven reasoning",
                exemplar_ids=pick("S", 10),
            ),
            Category(
                id="O",
                name="Other",
                definition="responses that fit none of the primary categories",
                exemplar_ids=pick("O", 22),
                is_other=True,
            ),
        ],
        model_binding=MODEL_ID,
    )

    provider = ProviderConfig(
        kind="mock",
        model_id=MODEL_ID,
        dim=dim,
        seed=seed,
        anchors=anchors,
    )
    notes = {
        "seed": seed,
        "dim": dim,
        "mislabeled_exemplar": mislabeled_id,
        "replacement_exemplar": replacement_id,
        "duplicate_pair_count": len(_DUP_TEXTS),
        "counts": {c: sum(1 for r in responses if r.human_code == c) for c in "LPSO"},
        "total": len(responses),
    }
    return SyntheticCorpus(responses=responses, codebook=codebook, provider=provider, notes=notes)


def provider_json(provider: ProviderConfig) -> dict:
    doc = {
        "kind": provider.kind,
        "model_id": provider.model_id,
        "dim": provider.dim,
        "seed": provider.seed,
        "batch_size": provider.batch_size,
    }
    if provider.anchors:
        doc["anchors"] = {
            t: AnchorSpec.coerce(spec).to_json() for t, spec in provider.anchors.items()
        }
    return doc


def write_corpus_files(corpus: SyntheticCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Write corpus.csv, codebook.json, provider.json, and notes.json."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": root / "corpus.csv",
        "codebook": root / "codebook.json",
        "provider": root / "provider.json",
        "notes": root / "notes.json",
    }
    paths["corpus"].write_text(corpus.texts_csv(), encoding="utf-8")
    paths["codebook"].write_text(
        json.dumps(corpus.codebook.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    paths["provider"].write_text(
        json.dumps(provider_json(corpus.provider), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    paths["notes"].write_text(
        json.dumps(corpus.notes, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return paths
