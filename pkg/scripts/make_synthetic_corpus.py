#!/usr/bin/env python3
"""Write the bundled synthetic corpus (responses, codebook, mock provider
config, construction notes) to a directory."""
from __future__ import annotations

import argparse
from pathlib import Path

from embedcode import synthetic


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/synthetic", help="output directory")
    parser.add_argument("--seed", type=int, default=synthetic.DEFAULT_SEED)
    parser.add_argument("--dim", type=int, default=synthetic.DIM)
    args = parser.parse_args()

    corpus = synthetic.build_synthetic_corpus(seed=args.seed, dim=args.dim)
    paths = synthetic.write_corpus_files(corpus, Path(args.out))
    print(f"wrote {len(corpus.responses)} responses")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    print(f"counts: {corpus.notes['counts']}")


if __name__ == "__main__":
    main()
