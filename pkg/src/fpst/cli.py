"""Command-line entry point: ``fpst reconstruct | nodeclf | curvature-hist``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .train import ConfigError, RunConfig, curvature_hist, train_node_classification, train_reconstruction


def _neg(value: str):
    return value if value in ("all", "auto") else int(value)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--edges", required=True)
    p.add_argument("--features")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--curv-lr", type=float, help="0 pins all curvatures")
    p.add_argument("--kappa-init", type=float, default=0.0)
    p.add_argument("--mode", choices=("linearized", "dense"), default="linearized")
    p.add_argument("--act", default="relu")
    p.add_argument("--no-layernorm", action="store_true")
    p.add_argument("--eigvecs", type=int, default=16)
    p.add_argument("--eval-interval", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-record-time", action="store_true", help="write 0 in wall_ms so reruns are byte-identical")
    p.add_argument("--out", required=True)
    p.add_argument("-q", "--quiet", action="store_true")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fpst", description="Product-stereographic graph Transformer experiments")
    sub = ap.add_subparsers(dest="task", required=True)

    rec = sub.add_parser("reconstruct", help="graph reconstruction, reports mAP")
    _common(rec)
    rec.add_argument("--neg", type=_neg, default="auto", help="'all', 'auto' or K sampled negatives")

    clf = sub.add_parser("nodeclf", help="node classification, reports accuracy and micro-F1")
    _common(clf)
    clf.add_argument("--labels", required=True)
    g = clf.add_mutually_exclusive_group()
    g.add_argument("--splits")
    g.add_argument("--synth-split", choices=("citation", "622"))
    clf.add_argument("--dropout", type=float, default=0.0)
    clf.add_argument("--weight-decay", type=float, default=0.0)
    clf.add_argument("--hops", type=int, default=0)
    clf.add_argument("--patience", type=int, default=200)
    clf.add_argument("--classes", type=int, dest="n_classes")

    hist = sub.add_parser("curvature-hist", help="sampled graph sectional curvatures")
    hist.add_argument("--edges", required=True)
    hist.add_argument("--samples-per-node", type=int, default=10)
    hist.add_argument("--seed", type=int, default=0)
    hist.add_argument("--out", required=True)
    return ap


def _config(a: argparse.Namespace) -> RunConfig:
    fields = set(RunConfig.__dataclass_fields__)
    kw = {k: v for k, v in vars(a).items() if k in fields}
    kw["layernorm"] = not a.no_layernorm
    kw["record_time"] = not a.no_record_time
    return RunConfig(**kw)


def main(argv: list[str] | None = None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if a.task == "curvature-hist":
            if a.samples_per_node < 1:
                raise ConfigError("--samples-per-node must be >= 1")
            vals, mean = curvature_hist(io.load_edge_list(a.edges), a.samples_per_node, a.seed)
            lines = [repr(v) for v in vals] + [f"mean,{mean!r}"]
            Path(a.out).write_text("\n".join(lines) + "\n")
            print(f"{len(vals)} samples, mean {mean:.4f}")
            return 0
        cfg = _config(a)
        show = None if a.quiet else (lambda row: print(",".join(str(v) for v in row), flush=True))
        if a.task == "reconstruct":
            res = train_reconstruction(cfg, on_row=show)
        else:
            res = train_node_classification(cfg, on_row=show)
        print(json.dumps(res.final))
        return 0
    except (ValueError, OSError) as e:  # ConfigError, FormatError and DomainError included
        print(f"fpst: error: {' '.join(str(e).split())}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
