"""Command-line entry for the exporter."""

from __future__ import annotations

import argparse
import sys

from .export import export_cate_estimates, export_predictions
from .sources import FetchError, load_source, synthetic_causal
from .zoo import DEFAULT_BAND


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="reconcile-export",
        description="Train model zoos / CATE meta-learners and export prediction CSVs.",
    )
    p.add_argument("--mode", choices=("predictions", "cate"), default="predictions")
    p.add_argument("--dataset", default="synthetic",
                   help="adult | compas | communities | german | folk_income | "
                        "folk_mobility | folk_travel | synthetic | synthetic_reg | "
                        "synthetic_rct (cate mode)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--band", default=None, metavar="LO,HI",
                   help=f"meta-rule CV score band (default {DEFAULT_BAND})")
    p.add_argument("--max-leaf-nodes", type=int, default=100,
                   help="subgroup tree size for cate mode")
    args = p.parse_args(argv)

    try:
        if args.mode == "cate":
            if args.dataset in ("synthetic", "synthetic_rct"):
                source = synthetic_causal(seed=args.seed)
            else:
                raise FetchError(
                    f"causal dataset {args.dataset!r} requires network access "
                    "(twins / national study fetchers are not bundled)"
                )
            manifest = export_cate_estimates(
                source, args.seed, args.out, max_leaf_nodes=args.max_leaf_nodes
            )
        else:
            band = DEFAULT_BAND
            if args.band:
                lo, hi = (float(x) for x in args.band.split(","))
                band = (lo, hi)
            source = load_source(args.dataset, seed=args.seed)
            manifest = export_predictions(source, args.seed, args.out, band=band)
    except FetchError as exc:
        print(f"fetch error: {exc}", file=sys.stderr)
        return 2
    print(f"exported {manifest.dataset} -> {manifest.files['manifest']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
