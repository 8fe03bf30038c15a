"""``flownovel`` command line.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .config import MODELS, resolve
from .errors import ContractError, DataError, DecompositionError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v]


def _names(s: str) -> list[str]:
    return [v.strip() for v in s.split(",") if v.strip()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--tau-normal", dest="tau_normal", type=float)
    common.add_argument("--tau-abnormal", dest="tau_abnormal", type=_floats, help="comma-separated")
    common.add_argument("--T", dest="T", type=int)
    common.add_argument("--n", dest="n", type=int)
    common.add_argument("--n-abnormal", dest="n_abnormal", type=int)
    common.add_argument("--csv-normal", dest="csv_normal")
    common.add_argument("--csv-abnormal", dest="csv_abnormal", type=_names)
    common.add_argument("--stride", type=int)
    common.add_argument("--window", type=int)
    common.add_argument("--epochs", type=int, help="epochs for the selected flow model")
    common.add_argument("--lr", dest="learning_rate", type=float)
    common.add_argument("--weight-decay", dest="weight_decay", type=float)
    common.add_argument("--batch-size", dest="batch_size", type=int)
    common.add_argument("--maf-layers", dest="maf_layers", type=int)
    common.add_argument("--maf-hidden", dest="maf_hidden", type=_ints)
    common.add_argument("--cnf-hidden", dest="cnf_hidden", type=_ints)
    common.add_argument("--solver", dest="solver_method", choices=["rk4_fixed", "dopri5_adaptive"])
    common.add_argument("--solver-steps", dest="solver_steps", type=int)
    common.add_argument("--min-pts", dest="min_pts", type=int)
    common.add_argument("--metric", choices=["chebyshev", "euclidean"])
    common.add_argument("--target-fpr", dest="target_fpr", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="flownovel", description="Flow-based novelty detection for time series.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    gen = sub.add_parser("gen", parents=[common], help="generate synthetic normal/abnormal CSVs")
    gen.add_argument("--easy-tau", dest="easy_tau", type=float)
    gen.add_argument("--n-easy", dest="n_easy", type=int, default=200)
    sub.add_parser("preprocess", parents=[common], help="split, subsample, window, standardize")
    tr = sub.add_parser("train", parents=[common], help="train a flow or fit LOF")
    tr.add_argument("--model", required=True)
    ev = sub.add_parser("eval", parents=[common], help="score test sets, write ROC/summary")
    ev.add_argument("--models", type=_names, default=list(MODELS))
    sa = sub.add_parser("sample", parents=[common], help="generate samples from a trained flow")
    sa.add_argument("--model", required=True)
    sa.add_argument("--n-samples", dest="n_samples", type=int)
    rs = sub.add_parser("reproduce-synthetic", parents=[common],
                        help="gen -> preprocess -> train -> eval -> sample")
    rs.add_argument("--models", type=_names, default=list(MODELS))
    rs.add_argument("--easy-tau", dest="easy_tau", type=float, default=10.0)
    rs.add_argument("--n-easy", dest="n_easy", type=int, default=200)
    return p


_CONFIG_KEYS = ("out_dir", "seed", "tau_normal", "tau_abnormal", "T", "n", "n_abnormal", "csv_normal",
                "csv_abnormal", "stride", "window", "learning_rate", "weight_decay", "batch_size",
                "maf_layers", "maf_hidden", "cnf_hidden", "solver_method", "solver_steps", "min_pts",
                "metric", "target_fpr", "n_samples")


def _config(args):
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    model = getattr(args, "model", None)
    if model is not None:
        overrides["model"] = model
    if args.epochs is not None:
        targets = [model] if model in ("maf", "cnf") else ["maf", "cnf"]
        for m in targets:
            overrides[f"{m}_epochs"] = args.epochs
    return resolve(args.config, overrides)


def _check_models(names):
    bad = [m for m in names if m not in MODELS]
    if bad:
        raise ContractError(f"unknown model(s) {bad}; choose from {', '.join(MODELS)}")


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "gen":
            for p in pipeline.cmd_gen(cfg, args.easy_tau, args.n_easy):
                print(p)
        elif args.command == "preprocess":
            pp = pipeline.cmd_preprocess(cfg)
            print(f"train {pp.train.data.shape}, test {pp.test.data.shape}, "
                  f"{len(pp.others)} abnormal set(s)")
        elif args.command == "train":
            _, report = pipeline.cmd_train(cfg)
            if report is not None:
                print(f"{cfg.model}: epoch0 NLL/dim {report.train_nll[0] / report.dim:.4f} -> "
                      f"final {report.train_nll[-1] / report.dim:.4f} (val best epoch {report.best_epoch})")
            else:
                print(f"{cfg.model}: fitted")
        elif args.command == "eval":
            _check_models(args.models)
            ev = pipeline.cmd_eval(cfg, args.models)
            for r in ev.results:
                print(f"{r.model:4s} {r.set_name:18s} AUC {r.curve.auc:.4f}")
        elif args.command == "sample":
            _, rows = pipeline.cmd_sample(cfg)
            print(json.dumps({"max_abs_dev_target": max(r["abs_dev_target"] for r in rows[:31])}))
        elif args.command == "reproduce-synthetic":
            _check_models(args.models)
            rep = pipeline.reproduce_synthetic(cfg, args.models, args.easy_tau, args.n_easy)
            for r in rep.evaluation.results:
                print(f"{r.model:4s} {r.set_name:18s} AUC {r.curve.auc:.4f}  "
                      f"TPR@FPR0 {r.separation.tpr:.3f}")
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DecompositionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
