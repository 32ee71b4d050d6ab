"""End-to-end orchestration: load data, train all families, evaluate, emit.

The CLI is a thin shell over these functions so tests (and the acceptance
suite) can drive the same code paths in process.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import data, explain, metrics, models, uncertainty
from .errors import GradecastError

TAU_GRID_DEFAULT = tuple(round(0.001 * x ** 2, 6) for x in range(0, 26))


@dataclass
class LoadedData:
    records: list
    catalog: list                      # [(target, priors), ...]
    features: Optional[data.FeatureSource]
    term_map: Optional[dict]

    def dataset_for(self, target, priors):
        return data.build_course_dataset(self.records, target, priors,
                                         features=self.features)


def load_data_dir(data_dir):
    """Read the grades/catalog(/features/term-map) files from one directory."""
    term_map_path = os.path.join(data_dir, "term_map.json")
    term_map = data.load_term_map(term_map_path) if os.path.exists(term_map_path) else None
    records = data.ingest_records(os.path.join(data_dir, "grades.csv"),
                                  term_map=term_map)
    catalog = data.load_catalog(os.path.join(data_dir, "catalog.json"))
    students_csv = os.path.join(data_dir, "features_students.csv")
    courses_csv = os.path.join(data_dir, "features_courses.csv")
    features = None
    if os.path.exists(students_csv) and os.path.exists(courses_csv):
        features = data.FeatureSource.from_csv(students_csv, courses_csv)
    return LoadedData(records=records, catalog=catalog, features=features,
                      term_map=term_map)


def _train_families(loaded, target, priors, grid, course_seed, run_seed,
                    families, test_term_spec, min_train, global_fits):
    """Train every requested family for one target course."""
    ds = loaded.dataset_for(target, priors)
    test_term = data.resolve_test_term(ds, test_term_spec)
    train, val, test = data.temporal_split(ds, test_term)
    out = {}
    notes = {"target": target, "test_term": test_term,
             "n_train": len(train), "n_validation": len(val),
             "n_test": len(test), "excluded": ds.report.excluded_no_priors}

    train_records = [r for r in loaded.records if r.term < test_term - 1]
    layout = ds.feature_layout

    if len(train) < min_train:
        # Too little data for a course-specific model: bias-only fallback.
        notes["fallback_bias_only"] = True
        out["BO"] = models.fit_bias_only(train_records, target, priors,
                                         lam=grid.bias_lambda,
                                         feature_layout=layout)
        return out, notes, (train, val, test)

    for family in families:
        if family == "BO":
            out["BO"] = models.fit_bias_only(train_records, target, priors,
                                             lam=grid.bias_lambda,
                                             feature_layout=layout)
        elif family == "MF":
            # Global fits are shared across courses (run-level seed).
            out["MF"] = models.select_mf(train_records, target, priors, val,
                                         grid.mf_ranks, grid.mf_lambdas,
                                         seed=run_seed, feature_layout=layout,
                                         cache=global_fits)
        elif family == "CS_MF":
            out["CS_MF"] = models.select_cs_mf(train, val, grid.mf_ranks,
                                               grid.mf_lambdas, seed=course_seed)
        elif family in ("CSR_PC", "CSR_CF", "CSR_HY"):
            mode = family.split("_")[1]
            if mode in ("CF", "HY") and loaded.features is None:
                notes.setdefault("skipped", []).append(
                    {"family": family, "reason": "content features not provided"})
                continue
            out[family] = models.select_csr(train, val, mode, grid.csr_lambdas)
        elif family == "MLP":
            out["MLP"] = models.fit_course_model(
                "MLP", train, val, grid.mlp, seed=course_seed,
                max_iters=grid.max_iters, batch_size=grid.batch_size)
        elif family == "LSTM":
            out["LSTM"] = models.fit_course_model(
                "LSTM", train, val, grid.lstm, seed=course_seed,
                max_iters=grid.max_iters, batch_size=grid.batch_size)
        else:
            raise GradecastError(f"unknown family {family!r}")
    return out, notes, (train, val, test)


def train_registry(loaded, registry_dir, grid, seed, families=models.FAMILIES,
                   test_term_spec="last", min_train=models.DEFAULT_MIN_TRAIN,
                   jobs=1):
    """Train all families for every catalog target and persist artifacts."""
    global_fits = {}
    summary = {"seed": seed, "families": list(families), "courses": []}

    def run_one(idx_entry):
        idx, (target, priors) = idx_entry
        course_seed = int(np.random.SeedSequence((seed, idx)).generate_state(1)[0])
        return _train_families(loaded, target, priors, grid, course_seed, seed,
                               families, test_term_spec, min_train, global_fits)

    entries = list(enumerate(loaded.catalog))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, entries))
    else:
        results = [run_one(e) for e in entries]

    for (target, _), (arts, notes, _) in zip(loaded.catalog, results):
        for family, art in arts.items():
            models.save_artifact(art, models.registry_path(registry_dir,
                                                           target, family))
        summary["courses"].append(notes)
    with open(os.path.join(registry_dir, "training_summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return summary


def evaluate_registry(loaded, registry_dir, test_term_spec="last",
                      inclusive=False):
    """Per-course and pooled MetricReports for every artifact on disk."""
    registry = models.load_registry(registry_dir)
    per_course = {}
    pooled = {}
    pooled_labels = {}
    for target, priors in loaded.catalog:
        if target not in registry:
            continue
        ds = loaded.dataset_for(target, priors)
        test_term = data.resolve_test_term(ds, test_term_spec)
        _, _, test = data.temporal_split(ds, test_term)
        labels = test.labels()
        per_course[target] = {}
        for family, art in sorted(registry[target].items()):
            preds = models.predict_dataset(art, test)
            per_course[target][family] = metrics.metric_report(
                preds, labels, inclusive=inclusive)
            pooled.setdefault(family, []).extend(preds)
            pooled_labels.setdefault(family, []).extend(labels)
    pooled_reports = {fam: metrics.metric_report(np.array(p),
                                                 np.array(pooled_labels[fam]),
                                                 inclusive=inclusive)
                      for fam, p in pooled.items()}
    return per_course, pooled_reports


def calibrate_registry(loaded, registry_dir, family="MLP", n_samples=100,
                       seed=0, tau_grid=TAU_GRID_DEFAULT, test_term_spec="last"):
    """Tune tau on pooled validation; emit calibration/E@k/risk curves on test."""
    registry = models.load_registry(registry_dir)
    val_dists, val_labels, test_dists, test_labels = [], [], [], []
    for ci, (target, priors) in enumerate(loaded.catalog):
        art = registry.get(target, {}).get(family)
        if art is None:
            continue
        ds = loaded.dataset_for(target, priors)
        test_term = data.resolve_test_term(ds, test_term_spec)
        _, val, test = data.temporal_split(ds, test_term)
        val_dists += uncertainty.predict_mc_dataset(
            art, val, n_samples=n_samples, tau_inv=0.0, seed=seed + 2 * ci)
        val_labels += list(val.labels())
        test_dists += uncertainty.predict_mc_dataset(
            art, test, n_samples=n_samples, tau_inv=0.0, seed=seed + 2 * ci + 1)
        test_labels += list(test.labels())
    if not val_dists or not test_dists:
        raise GradecastError(f"no {family} artifacts to calibrate")
    val_labels = np.array(val_labels)
    test_labels = np.array(test_labels)
    tau = uncertainty.tune_tau(val_dists, val_labels, tau_grid)
    adjusted = [d.with_tau(tau) for d in test_dists]
    result = {
        "family": family,
        "tau_inv": tau,
        "n_validation": len(val_labels),
        "n_test": len(test_labels),
        "calibration": uncertainty.calibration_curve(adjusted, test_labels),
        "error_at_k": uncertainty.error_at_k_curve(adjusted, test_labels),
        "risk_confidence": uncertainty.risk_confidence_curves(adjusted,
                                                              test_labels),
    }
    return result, adjusted, test_labels


def explain_course(loaded, registry_dir, target, family="MLP",
                   student=None, top_k=5, test_term_spec="last"):
    """Per-student reports and the collective table for one course model."""
    registry = models.load_registry(registry_dir)
    art = registry.get(target, {}).get(family)
    if art is None:
        raise GradecastError(f"no {family} artifact for {target}")
    priors = dict(loaded.catalog)[target]
    ds = loaded.dataset_for(target, priors)
    collective = explain.influence_collective_table(art, ds)
    report = None
    if student is not None:
        matches = [ex for ex in ds.examples if ex.student_id == student]
        if not matches:
            raise GradecastError(f"student {student!r} has no {target} enrollment")
        report = explain.influence_student(art, matches[-1], top_k=top_k)
    return report, explain.top_influential(collective, k=max(top_k, len(collective)))
