"""End-to-end experiment steps shared by the CLI, scripts and acceptance tests.

Directory layout under ``cfg.out_dir``::

    config.json
    data/raw/        normal.csv, abnormal_tau<τ>.csv, easy_tau<τ>.csv (+ .json sidecars)
    data/processed/  train.csv, test_normal.csv, <same names as raw>, normalizer.json
    models/          <model>.json, <model>_train.csv
    eval/            scores_/roc_/histogram_<model>_<set>.csv, summary.json
    sample/          generated_<model>.csv, acf_compare_<model>.csv
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datagen, evaluate, persist
from .cnf import CnfModel, SolverConfig
from .config import ExperimentConfig
from .datagen import AutocorrSpec, PreprocessConfig, TimeSeriesBatch
from .errors import ContractError, DataError
from .lof import LofModel, lof_fit
from .made import build_made
from .maf import MafStack
from .training import TrainConfig, TrainReport, train

log = logging.getLogger(__name__)


def _dirs(cfg: ExperimentConfig) -> dict[str, Path]:
    root = Path(cfg.out_dir)
    return {k: root / v for k, v in {
        "root": "", "raw": "data/raw", "processed": "data/processed",
        "models": "models", "eval": "eval", "sample": "sample"}.items()}


def _tau_name(prefix: str, tau: float) -> str:
    return f"{prefix}_tau{tau:g}"


# -- data ---------------------------------------------------------------------
def generate(cfg: ExperimentConfig, easy_tau: float | None = None, n_easy: int = 200):
    """Normal set plus renormalized abnormal sets, one per decay time."""
    normal = datagen.generate_synthetic(AutocorrSpec(cfg.tau_normal), cfg.T, cfg.n, cfg.seed, "normal")
    normal.name = "normal"
    sets = [(tau, cfg.n_abnormal, "abnormal") for tau in cfg.tau_abnormal]
    if easy_tau is not None:
        sets.append((easy_tau, n_easy, "easy"))
    abnormal = []
    for i, (tau, n, prefix) in enumerate(sets):
        raw = datagen.generate_synthetic(AutocorrSpec(tau), cfg.T, n, cfg.seed + 1000 + i, "abnormal")
        b = datagen.renormalize_abnormal(raw, normal, cfg.renorm_mode)
        b.name = _tau_name(prefix, tau)
        abnormal.append(b)
    return normal, abnormal


def cmd_gen(cfg: ExperimentConfig, easy_tau: float | None = None, n_easy: int = 200) -> list[Path]:
    d = _dirs(cfg)
    normal, abnormal = generate(cfg, easy_tau, n_easy)
    return [datagen.save_csv(b, d["raw"] / f"{b.name}.csv") for b in [normal, *abnormal]]


def _load_raw(cfg: ExperimentConfig):
    if cfg.csv_normal:
        normal = datagen.load_csv(cfg.csv_normal)
        normal.label = "normal"
        abnormal = [datagen.load_csv(p) for p in cfg.csv_abnormal]
        for b in abnormal:
            b.label = "abnormal"
        return normal, abnormal
    raw = _dirs(cfg)["raw"]
    if not (raw / "normal.csv").exists():
        raise DataError(f"no raw data in {raw}; run `gen` first or pass --csv-normal")
    normal = datagen.load_csv(raw / "normal.csv")
    abnormal = [datagen.load_csv(p) for p in sorted(raw.glob("*.csv")) if p.name != "normal.csv"]
    return normal, abnormal


def run_preprocess(cfg: ExperimentConfig, normal: TimeSeriesBatch, abnormal: list[TimeSeriesBatch]):
    return datagen.preprocess(normal, abnormal, PreprocessConfig(cfg.train_fraction, cfg.stride,
                                                                 cfg.window, cfg.seed))


def cmd_preprocess(cfg: ExperimentConfig) -> datagen.Preprocessed:
    d = _dirs(cfg)
    normal, abnormal = _load_raw(cfg)
    pp = run_preprocess(cfg, normal, abnormal)
    out = d["processed"]
    datagen.save_csv(pp.train, out / "train.csv")
    datagen.save_csv(pp.test, out / "test_normal.csv")
    for b in pp.others:
        datagen.save_csv(b, out / f"{b.name}.csv")
    evaluate.write_json({k: np.asarray(v).tolist() for k, v in pp.normalizer.items()},
                        out / "normalizer.json")
    return pp


def load_processed(cfg: ExperimentConfig):
    p = _dirs(cfg)["processed"]
    if not (p / "train.csv").exists():
        raise DataError(f"no preprocessed data in {p}; run `preprocess` first")
    train_b = datagen.load_csv(p / "train.csv")
    test_b = datagen.load_csv(p / "test_normal.csv")
    test_b.label = "normal"
    others = [datagen.load_csv(q) for q in sorted(p.glob("*.csv"))
              if q.name not in ("train.csv", "test_normal.csv")]
    for b in others:
        b.label = "abnormal"
    return train_b, test_b, others


# -- models ---------------------------------------------------------------------
def build_model(cfg: ExperimentConfig, name: str, D: int):
    if name == "maf":
        layers = [build_made(D, cfg.maf_hidden, 2, seed=cfg.seed * 7919 + k, skip=cfg.made_skip)
                  for k in range(cfg.maf_layers)]
        return MafStack(layers, D, cfg.maf_flip, cfg.maf_log_scale_bound)
    if name == "cnf":
        drift = build_made(D, cfg.cnf_hidden, 2 if cfg.cnf_diagonal else 1, conditional_dim=1,
                           seed=cfg.seed * 7919 + 101, zero_last=True, skip=cfg.made_skip)
        solver = SolverConfig(cfg.solver_method, cfg.solver_steps, cfg.rtol, cfg.atol, cfg.max_steps)
        return CnfModel(drift, D, cfg.cnf_diagonal, solver=solver)
    raise ContractError(f"unknown flow model {name!r}")


def train_config(cfg: ExperimentConfig, name: str) -> TrainConfig:
    return TrainConfig(cfg.epochs_for(name), cfg.batch_size, cfg.learning_rate, cfg.weight_decay,
                       cfg.val_fraction, cfg.seed, cfg.restore_best)


def fit_model(cfg: ExperimentConfig, name: str, train_batch: TimeSeriesBatch):
    """Train a flow or fit LOF; returns ``(model, report or None)``."""
    if name == "lof":
        model = lof_fit(train_batch.data, cfg.min_pts, cfg.metric)
        model.normalizer = train_batch.normalizer
        return model, None
    model = build_model(cfg, name, train_batch.T)
    if isinstance(model, CnfModel):
        # gradients flow through the fixed-step solver; the adaptive one is for scoring only
        scoring_solver = model.solver
        model.solver = SolverConfig("rk4_fixed", cfg.solver_steps)
    report = train(model, train_batch, train_config(cfg, name))
    if isinstance(model, CnfModel):
        model.solver = scoring_solver
    model.normalizer = train_batch.normalizer
    return model, report


def write_report(report: TrainReport, path: Path) -> None:
    rows = report.to_rows()
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def cmd_train(cfg: ExperimentConfig):
    d = _dirs(cfg)
    train_b, _, _ = load_processed(cfg)
    model, report = fit_model(cfg, cfg.model, train_b)
    persist.save_model(model, d["models"] / f"{cfg.model}.json")
    if report is not None:
        write_report(report, d["models"] / f"{cfg.model}_train.csv")
    return model, report


# -- evaluation -------------------------------------------------------------------
@dataclass
class EvalRun:
    results: list[evaluate.EvalResult] = field(default_factory=list)

    def get(self, model: str, set_name: str) -> evaluate.EvalResult:
        for r in self.results:
            if r.model == model and r.set_name == set_name:
                return r
        raise KeyError((model, set_name))

    def auc(self, model: str, set_name: str) -> float:
        return self.get(model, set_name).curve.auc


def evaluate_models(cfg: ExperimentConfig, models: dict, test: TimeSeriesBatch,
                    abnormal_sets: list[TimeSeriesBatch], out: Path | None = None) -> EvalRun:
    run = EvalRun()
    for name, model in models.items():
        normal_scores = evaluate.score_batch(model, test)
        for b in abnormal_sets:
            res = evaluate.evaluate_pair(name, b.name, normal_scores, evaluate.score_batch(model, b),
                                         cfg.target_fpr)
            run.results.append(res)
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                tag = f"{name}_{b.name}"
                evaluate.write_scores(res.scores, out / f"scores_{tag}.csv")
                evaluate.write_roc(res.curve, out / f"roc_{tag}.csv")
                evaluate.write_histogram(evaluate.histogram(res.scores, cfg.hist_bins),
                                         out / f"histogram_{tag}.csv")
    if out is not None:
        evaluate.write_json({"created": time.strftime("%Y-%m-%dT%H:%M:%S"),
                             "results": [r.summary() for r in run.results]}, out / "summary.json")
    return run


def cmd_eval(cfg: ExperimentConfig, model_names: list[str]) -> EvalRun:
    d = _dirs(cfg)
    _, test_b, others = load_processed(cfg)
    models = {}
    for name in model_names:
        path = d["models"] / f"{name}.json"
        if not path.exists():
            raise DataError(f"model file {path} not found; run `train --model {name}` first")
        models[name] = persist.load_model(path)
    return evaluate_models(cfg, models, test_b, others, d["eval"])


# -- sampling -------------------------------------------------------------------
def acf_comparison(cfg: ExperimentConfig, generated: np.ndarray, data: np.ndarray) -> list[dict]:
    gen_acf = evaluate.autocorrelation(generated)
    data_acf = evaluate.autocorrelation(data)
    spec = AutocorrSpec(cfg.tau_normal)
    return [{"lag": k, "delta_t": k * cfg.stride, "target": float(spec(k * cfg.stride)),
             "data_acf": float(data_acf[k]), "generated_acf": float(gen_acf[k]),
             "abs_dev_target": float(abs(gen_acf[k] - spec(k * cfg.stride)))}
            for k in range(len(gen_acf))]


def cmd_sample(cfg: ExperimentConfig):
    d = _dirs(cfg)
    if cfg.model == "lof":
        raise ContractError("LOF is not a generative model; sample needs maf or cnf")
    path = d["models"] / f"{cfg.model}.json"
    if not path.exists():
        raise DataError(f"model file {path} not found")
    model = persist.load_model(path)
    generated = model.sample(cfg.n_samples, cfg.seed)
    train_b, _, _ = load_processed(cfg)
    rows = write_samples(cfg, cfg.model, generated, train_b.data)
    return generated, rows


def write_samples(cfg: ExperimentConfig, name: str, generated: np.ndarray, data: np.ndarray) -> list[dict]:
    out = _dirs(cfg)["sample"]
    out.mkdir(parents=True, exist_ok=True)
    rows = acf_comparison(cfg, generated, data)
    np.savetxt(out / f"generated_{name}.csv", generated, delimiter=",", fmt="%.17g")
    with open(out / f"acf_compare_{name}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return rows


# -- full reproduction ------------------------------------------------------------
@dataclass
class Reproduction:
    preprocessed: datagen.Preprocessed
    models: dict
    reports: dict
    evaluation: EvalRun
    samples: dict


def reproduce_synthetic(cfg: ExperimentConfig, models=("maf", "cnf", "lof"),
                        easy_tau: float | None = 10.0, n_easy: int = 200,
                        write: bool = True) -> Reproduction:
    """gen -> preprocess -> train flows / fit LOF -> eval -> sample, in one call."""
    d = _dirs(cfg)
    if write:
        d["root"].mkdir(parents=True, exist_ok=True)
        cfg.save(d["root"] / "config.json")
        cmd_gen(cfg, easy_tau, n_easy)
        pp = cmd_preprocess(cfg)
    else:
        normal, abnormal = generate(cfg, easy_tau, n_easy)
        pp = run_preprocess(cfg, normal, abnormal)
    fitted, reports, samples = {}, {}, {}
    for name in models:
        log.info("fitting %s", name)
        fitted[name], reports[name] = fit_model(cfg, name, pp.train)
        if write:
            persist.save_model(fitted[name], d["models"] / f"{name}.json")
            if reports[name] is not None:
                write_report(reports[name], d["models"] / f"{name}_train.csv")
    run = evaluate_models(cfg, fitted, pp.test, pp.others, d["eval"] if write else None)
    for name, model in fitted.items():
        if isinstance(model, LofModel):
            continue
        samples[name] = model.sample(cfg.n_samples, cfg.seed)
        if write:
            write_samples(cfg, name, samples[name], pp.train.data)
    return Reproduction(pp, fitted, reports, run, samples)
