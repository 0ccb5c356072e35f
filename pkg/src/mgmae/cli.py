"""Command line entry point: ``mgmae {run,baseline,sweep-filters,plot-latent,eval}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .errors import StageError

log = logging.getLogger("mgmae")


def _config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--task", choices=["geoquery", "translation"])
    p.add_argument("--seed", type=int)
    p.add_argument("--num-seeds", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", default="runs/latest", help="output directory")


def _build_config(args) -> harness.ExperimentConfig:
    overrides = harness.parse_overrides(args.set)
    for key in ("task", "seed", "num_seeds", "epochs", "num_filters"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return harness.load_config(args.config, overrides)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mgmae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="autoencoder + GMM + filters, evaluated on the dev split")
    _config_args(run)
    run.add_argument("--num-filters", type=int)

    base = sub.add_parser("baseline", help="ordinary encoder-decoder")
    _config_args(base)

    sweep = sub.add_parser("sweep-filters", help="silhouette and metrics for a range of filter counts")
    _config_args(sweep)
    sweep.add_argument("--k", default="2,3,4,5,6", help="comma-separated filter counts")

    plot = sub.add_parser("plot-latent", help="2-D PCA scatter of checkpointed representations")
    plot.add_argument("checkpoint")
    plot.add_argument("out", help="output path stem; .csv and .svg are written")
    plot.add_argument("--k", type=int, help="mixture to colour by (sweep checkpoints)")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on its dev split")
    ev.add_argument("checkpoint")
    ev.add_argument("--config", help="config file overriding the checkpoint's")
    ev.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ev.add_argument("--decode-mode", choices=["hard", "soft"])
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            print(harness.cmd_run(_build_config(args), args.out).text())
        elif args.command == "baseline":
            print(harness.cmd_baseline(_build_config(args), args.out).text())
        elif args.command == "sweep-filters":
            ks = [int(k) for k in args.k.split(",") if k.strip()]
            print(harness.cmd_sweep_filters(_build_config(args), args.out, ks).text())
        elif args.command == "plot-latent":
            csv_path, svg_path = harness.export_latent_scatter(args.checkpoint, args.out, args.k)
            print(f"wrote {csv_path} and {svg_path}")
        elif args.command == "eval":
            config = None
            if args.config or args.set:
                config = harness.load_config(args.config, harness.parse_overrides(args.set))
            result = harness.cmd_eval(args.checkpoint, config, args.decode_mode)
            print(json.dumps({("denotation_proxy (exact-match proxy)" if k == "denotation_proxy" else k): v
                              for k, v in result.items()}, indent=2))
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
