"""End-to-end experiment: recordings -> windows -> split -> models -> report."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import derive_seed
from .dataset import DEFAULT_TRAIN_FRACTION, Dataset, SplitPlan, Standardizer, build_dataset, inventory_from_table, plan_split
from .errors import InvalidConfig
from .features import MOMENTS, WindowingConfig, WindowTable, crop_table
from .forest import ForestConfig, ForestModel, predict_proba_forest, train_forest
from .metrics import ScoreDistribution, evaluate_moments, fuse_mean, score_distributions, variation_row
from .mlp import MlpConfig, MlpModel, predict_proba_mlp, train_mlp
from .signals import crop_around_trigger
from .svm import SvmConfig, SvmModel, predict_proba_svm, train_svm
from .trigger import TriggerRule, annotate_trigger

log = logging.getLogger(__name__)

CLASSIFIERS = ("ann", "rf", "svml", "svmrbf", "fusion")
ROW_NAMES = {"ann": "ANN", "rf": "RF", "svml": "SVML", "svmrbf": "SVMrbf", "fusion": "RF+SVML"}
MODEL_TYPES = {"ann": MlpModel, "rf": ForestModel, "svml": SvmModel, "svmrbf": SvmModel}
REPORT_FORMAT = "overtake.moment_report/1"


def parse_classifiers(spec) -> tuple[str, ...]:
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    names = []
    for item in items:
        key = item.strip().lower().replace("+", "").replace("-", "")
        key = {"rfsvml": "fusion", "svmlinear": "svml"}.get(key, key)
        if key not in CLASSIFIERS:
            raise InvalidConfig(f"unknown classifier {item!r}; choose from {','.join(CLASSIFIERS)}")
        if key not in names:
            names.append(key)
    if not names:
        raise InvalidConfig("classifier selection is empty")
    return tuple(k for k in CLASSIFIERS if k in names)


def recordings_to_windows(recordings, rule: TriggerRule = TriggerRule(),
                          windowing: WindowingConfig = WindowingConfig()) -> WindowTable:
    tables = []
    for rec in recordings:
        if rec.trigger_index is None:
            rec = annotate_trigger(rec, rule)
        tables.append(crop_table(crop_around_trigger(rec), windowing))
    return WindowTable.concat(tables)


@dataclass
class ExperimentResult:
    plan: SplitPlan
    dataset: Dataset
    models: dict
    scores: dict  # row key -> test scores
    reports: dict
    curves: dict
    sweeps: dict
    distributions: dict
    selection: tuple
    seed: int
    converged: dict = field(default_factory=dict)

    @property
    def all_converged(self) -> bool:
        return all(self.converged.values())


def _needed_models(selection) -> list[str]:
    need = [k for k in selection if k != "fusion"]
    if "fusion" in selection:
        need += [k for k in ("rf", "svml") if k not in need]
    return [k for k in CLASSIFIERS if k in need]


def train_model(key: str, ds: Dataset, seed: int):
    X, y = ds.train.features, ds.train.labels
    Z = ds.standardizer.apply(X) if ds.standardizer is not None else X
    s = derive_seed(seed, key)
    if key == "ann":
        return train_mlp(Z, y, MlpConfig(seed=s))
    if key == "rf":
        return train_forest(X, y, ForestConfig(seed=s))
    if key == "svml":
        return train_svm(Z, y, SvmConfig(kernel="linear", seed=s))
    if key == "svmrbf":
        return train_svm(Z, y, SvmConfig(kernel="rbf", seed=s))
    raise InvalidConfig(key)


def score_model(key: str, model, ds: Dataset, X) -> np.ndarray:
    if key == "rf":
        return predict_proba_forest(model, X)
    Z = ds.standardizer.apply(X)
    return predict_proba_mlp(model, Z) if key == "ann" else predict_proba_svm(model, Z)


def model_converged(model) -> bool:
    return bool(getattr(model, "converged", True))


def run_experiment(windows: WindowTable, seed: int = 0, selection=CLASSIFIERS,
                   fraction: float = DEFAULT_TRAIN_FRACTION, models: dict | None = None,
                   moments=MOMENTS) -> ExperimentResult:
    """Split, train (or reuse ``models``), score the test windows and evaluate."""
    selection = parse_classifiers(selection)
    plan = plan_split(inventory_from_table(windows), fraction, derive_seed(seed, "split"))
    ds = build_dataset(plan, windows)
    fitted = dict(models or {})
    for key in _needed_models(selection):
        if key not in fitted:
            log.info("training %s on %d windows", ROW_NAMES[key], len(ds.train))
            fitted[key] = train_model(key, ds, seed)
    scores = {k: score_model(k, fitted[k], ds, ds.test.features) for k in _needed_models(selection)}
    if "fusion" in selection:
        scores["fusion"] = fuse_mean(scores["rf"], scores["svml"])
    reports, curves, sweeps, dists = {}, {}, {}, {}
    for key in selection:
        reports[key], curves[key], sweeps[key] = evaluate_moments(
            scores[key], ds.test.labels, ds.test.offsets, moments)
        dists[key] = score_distributions(scores[key], ds.test.labels, ds.test.offsets)
    converged = {k: model_converged(fitted[k]) for k in _needed_models(selection)}
    return ExperimentResult(plan, ds, fitted, scores, reports, curves, sweeps, dists,
                            selection, seed, converged)


def report_document(res: ExperimentResult) -> dict:
    moments = list(next(iter(res.reports.values())).moments)
    rows = {ROW_NAMES[k]: {m: mm.to_dict() for m, mm in res.reports[k].moments.items()}
            for k in res.selection}
    doc = {
        "format": REPORT_FORMAT,
        "seed": res.seed,
        "moments": moments,
        "samples": {"train": len(res.dataset.train), "test": len(res.dataset.test),
                    "test_files": len(res.plan.test_files())},
        "converged": {ROW_NAMES[k]: v for k, v in res.converged.items()},
        "classifiers": rows,
    }
    if {"fusion", "rf", "svml"} <= set(res.selection):
        doc["variation"] = variation_row(res.reports["fusion"], res.reports["rf"], res.reports["svml"])
    return doc


def report_json(res: ExperimentResult) -> str:
    return json.dumps(report_document(res), indent=1) + "\n"


def write_results(res: ExperimentResult, out_dir) -> Path:
    out = Path(out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "pr_curves").mkdir(exist_ok=True)
    (out / "f1_sweeps").mkdir(exist_ok=True)
    (out / "split_plan.json").write_text(res.plan.to_json())
    if res.dataset.standardizer is not None:
        (out / "models" / "standardizer.json").write_text(
            json.dumps(res.dataset.standardizer.to_dict()) + "\n")
    for key, model in res.models.items():
        (out / "models" / f"{key}.json").write_text(model.to_json() + "\n")
    for key in res.selection:
        for m in res.curves[key]:
            tag = m.replace("-", "m")
            (out / "pr_curves" / f"{key}_{tag}.csv").write_text(res.curves[key][m].to_csv())
            (out / "f1_sweeps" / f"{key}_{tag}.csv").write_text(res.sweeps[key][m].to_csv())
    parts = [res.distributions[k].to_csv(ROW_NAMES[k]) for k in res.selection]
    body = parts[0] + "".join(p.split("\n", 1)[1] for p in parts[1:])
    (out / "boxplot_data.csv").write_text(body)
    path = out / "moment_report.json"
    path.write_text(report_json(res))
    return path


def load_models(out_dir, keys) -> dict:
    models = {}
    for key in keys:
        path = Path(out_dir) / "models" / f"{key}.json"
        if path.exists():
            models[key] = MODEL_TYPES[key].from_json(path.read_text())
    return models


def load_standardizer(out_dir) -> Standardizer | None:
    path = Path(out_dir) / "models" / "standardizer.json"
    return Standardizer.from_dict(json.loads(path.read_text())) if path.exists() else None


def distributions_by_row(res: ExperimentResult) -> dict[str, ScoreDistribution]:
    return {ROW_NAMES[k]: res.distributions[k] for k in res.selection}
