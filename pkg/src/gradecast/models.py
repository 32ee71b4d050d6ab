"""The seven model families: BO, MF, CS_MF, CSR_PC/CF/HY, MLP and LSTM.

All families share one artifact container and one predict_point contract.
Deep models train with Adam on minibatches (one iteration = one Adam step
on a batch); every 50 iterations a snapshot is evaluated on the validation
split and the best snapshot wins. Grid search returns the best grid point,
ties broken by smaller parameter count then earlier snapshot.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels, nn
from .data import CourseExample, TermStep, encode_grade_slot
from .errors import (EncodingMismatch, GradecastError, MissingFeatures,
                     UnsupportedFamily)
from .grades import clip_grade

FAMILIES = ("BO", "MF", "CS_MF", "CSR_PC", "CSR_CF", "CSR_HY", "MLP", "LSTM")
DEEP_FAMILIES = ("MLP", "LSTM")
SNAPSHOT_EVERY = 50
DEFAULT_MIN_TRAIN = 30
LSTM_CLIP_NORM = 5.0

# Real-valued content-feature columns that get train-set standardization
# (one-hot blocks are left untouched).
_STANDARDIZED_FIELDS = {"academic_level", "prior_gpa", "course_level", "credits"}


@dataclass
class ModelArtifact:
    family: str
    target_course: str
    prior_courses: tuple
    params: dict                      # name -> np.ndarray (scalars as 0-d)
    hyperparams: dict
    dropout: float = 0.0
    feature_layout: Optional[tuple] = None
    feature_stats: Optional[dict] = None   # {"mean": arr, "std": arr}
    training: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)  # JSON-able side tables

    def parameter_count(self):
        return int(sum(np.asarray(v).size for v in self.params.values()))


# ---------------------------------------------------------------------------
# serialization (self-describing JSON, bit-exact round trip)

ARTIFACT_FORMAT = "gradecast-artifact-v1"


def artifact_to_dict(art):
    return {
        "format": ARTIFACT_FORMAT,
        "family": art.family,
        "target_course": art.target_course,
        "prior_courses": list(art.prior_courses),
        "hyperparameters": art.hyperparams,
        "dropout": art.dropout,
        "feature_layout": list(art.feature_layout) if art.feature_layout else None,
        "feature_stats": ({"mean": list(map(float, art.feature_stats["mean"])),
                           "std": list(map(float, art.feature_stats["std"]))}
                          if art.feature_stats else None),
        "training": art.training,
        "parameters": {k: {"shape": list(np.asarray(v).shape),
                           "data": [float(x) for x in np.asarray(v, dtype=np.float64).reshape(-1)]}
                       for k, v in art.params.items()},
        "extra": art.extra,
    }


def artifact_from_dict(doc):
    if doc.get("format") != ARTIFACT_FORMAT:
        raise GradecastError(f"unrecognized artifact format {doc.get('format')!r}")
    params = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
              for k, v in doc["parameters"].items()}
    stats = doc.get("feature_stats")
    if stats is not None:
        stats = {"mean": np.array(stats["mean"]), "std": np.array(stats["std"])}
    layout = doc.get("feature_layout")
    return ModelArtifact(
        family=doc["family"], target_course=doc["target_course"],
        prior_courses=tuple(doc["prior_courses"]), params=params,
        hyperparams=doc["hyperparameters"], dropout=float(doc["dropout"]),
        feature_layout=tuple(layout) if layout else None,
        feature_stats=stats, training=doc.get("training", {}),
        extra=doc.get("extra", {}))


def save_artifact(art, path):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(artifact_to_dict(art), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_artifact(path):
    with open(path, "r", encoding="utf-8") as fh:
        return artifact_from_dict(json.load(fh))


def registry_path(registry_dir, course, family):
    return os.path.join(registry_dir, course, f"{family}.json")


def load_registry(registry_dir):
    """models/<course>/<FAMILY>.json -> {course: {family: artifact}}."""
    registry = {}
    if not os.path.isdir(registry_dir):
        return registry
    for course in sorted(os.listdir(registry_dir)):
        cdir = os.path.join(registry_dir, course)
        if not os.path.isdir(cdir):
            continue
        for fname in sorted(os.listdir(cdir)):
            if fname.endswith(".json"):
                art = load_artifact(os.path.join(cdir, fname))
                registry.setdefault(course, {})[art.family] = art
    return registry


# ---------------------------------------------------------------------------
# hyperparameter grids


@dataclass
class HyperGrid:
    mlp: list
    lstm: list
    mf_ranks: list
    mf_lambdas: list
    csr_lambdas: list
    bias_lambda: float
    max_iters: int
    batch_size: int
    note: str = ""

    @classmethod
    def preset(cls, name):
        if name == "desk":
            return cls(
                mlp=[{"layers": L, "units": u, "dropout": p}
                     for L in (2, 3) for u in (8, 16, 32) for p in (0.1, 0.2)],
                lstm=[{"hidden": hdim, "stack": s, "dropout": p}
                      for hdim in (16, 32) for s in (1, 2) for p in (0.1, 0.2)],
                mf_ranks=[4, 8], mf_lambdas=[0.02, 0.1],
                csr_lambdas=[0.1, 1.0, 10.0], bias_lambda=1.0,
                max_iters=2000, batch_size=32,
                note="desk-scale subsample of the full ranges")
        if name == "paper":
            return cls(
                mlp=[{"layers": L, "units": u, "dropout": p}
                     for L in range(2, 11) for u in (2, 5, 10, 20, 30, 40, 50)
                     for p in (0.1, 0.2, 0.3)],
                lstm=[{"hidden": hdim, "stack": s, "dropout": p}
                      for hdim in (10, 25, 50, 75, 100) for s in (1, 2, 3, 4, 5)
                      for p in (0.1, 0.2, 0.3)],
                mf_ranks=[4, 8, 16], mf_lambdas=[0.02, 0.1, 0.5],
                csr_lambdas=[0.01, 0.1, 1.0, 10.0, 100.0], bias_lambda=1.0,
                max_iters=4000, batch_size=32,
                note="full ranges (layers 2-10, neurons 2-50, hidden 10-100, stack 1-5)")
        if name == "smoke":
            return cls(
                mlp=[{"layers": 2, "units": 16, "dropout": 0.1}],
                lstm=[{"hidden": 16, "stack": 1, "dropout": 0.1}],
                mf_ranks=[4], mf_lambdas=[0.05],
                csr_lambdas=[1.0], bias_lambda=1.0,
                max_iters=300, batch_size=32,
                note="single-point grid for fast end-to-end runs")
        raise GradecastError(f"unknown grid preset {name!r}")


# ---------------------------------------------------------------------------
# bias-only and matrix factorization (global on grade records)


def _fit_bias_terms(records, lam, sweeps=100, tol=1e-10):
    """Alternating ridge for b0 + b_s + b_c on (student, course, grade) data."""
    by_student, by_course = {}, {}
    for r in records:
        by_student.setdefault(r.student_id, []).append(r)
        by_course.setdefault(r.course_id, []).append(r)
    b_s = {s: 0.0 for s in by_student}
    b_c = {c: 0.0 for c in by_course}
    b0 = float(np.mean([r.grade for r in records])) if records else 0.0
    for _ in range(sweeps):
        prev = b0
        b0 = float(np.mean([r.grade - b_s[r.student_id] - b_c[r.course_id]
                            for r in records]))
        for s, recs in by_student.items():
            b_s[s] = sum(r.grade - b0 - b_c[r.course_id] for r in recs) / (len(recs) + lam)
        for c, recs in by_course.items():
            b_c[c] = sum(r.grade - b0 - b_s[r.student_id] for r in recs) / (len(recs) + lam)
        if abs(b0 - prev) < tol:
            break
    return b0, b_s, b_c


def fit_bias_only(records, target, priors, lam=1.0, feature_layout=None):
    """Global-bias baseline specialized to one target course."""
    b0, b_s, b_c = _fit_bias_terms(records, lam)
    return ModelArtifact(
        family="BO", target_course=target, prior_courses=tuple(priors),
        params={"b0": np.asarray(b0), "b_course": np.asarray(b_c.get(target, 0.0))},
        hyperparams={"lambda": lam},
        feature_layout=feature_layout,
        extra={"student_bias": {s: float(v) for s, v in sorted(b_s.items())}},
        training={"n_records": len(records)})


def _fit_mf_terms(records, rank, lam, lr=0.02, epochs=60, seed=0):
    students = sorted({r.student_id for r in records})
    courses = sorted({r.course_id for r in records})
    s_idx = {s: i for i, s in enumerate(students)}
    c_idx = {c: i for i, c in enumerate(courses)}
    rng = np.random.default_rng(np.random.SeedSequence((seed, 77)))
    b0 = float(np.mean([r.grade for r in records]))
    bs = np.zeros(len(students))
    bc = np.zeros(len(courses))
    P = rng.normal(0.0, 0.1, size=(len(students), rank))
    Q = rng.normal(0.0, 0.1, size=(len(courses), rank))
    triples = np.array([(s_idx[r.student_id], c_idx[r.course_id], r.grade)
                        for r in records])
    n = len(triples)
    for _ in range(epochs):
        order = rng.permutation(n)
        for j in order:
            si, ci, g = int(triples[j, 0]), int(triples[j, 1]), triples[j, 2]
            e = g - (b0 + bs[si] + bc[ci] + P[si] @ Q[ci])
            bs[si] += lr * (e - lam * bs[si])
            bc[ci] += lr * (e - lam * bc[ci])
            p_old = P[si].copy()
            P[si] += lr * (e * Q[ci] - lam * P[si])
            Q[ci] += lr * (e * p_old - lam * Q[ci])
    return b0, dict(zip(students, bs)), dict(zip(courses, bc)), \
        {s: P[s_idx[s]] for s in students}, {c: Q[c_idx[c]] for c in courses}


def specialize_mf(terms, target, priors, rank, lam, lr, epochs, seed,
                  n_records, feature_layout=None):
    """Per-course artifact view over one global MF fit."""
    b0, bs, bc, P, Q = terms
    has_course = target in Q
    return ModelArtifact(
        family="MF", target_course=target, prior_courses=tuple(priors),
        params={"b0": np.asarray(b0),
                "b_course": np.asarray(bc.get(target, 0.0)),
                "q": (Q[target] if has_course else np.zeros(rank))},
        hyperparams={"rank": rank, "lambda": lam, "lr": lr, "epochs": epochs,
                     "course_seen": has_course},
        feature_layout=feature_layout,
        extra={"student_bias": {s: float(v) for s, v in sorted(bs.items())},
               "student_latent": {s: [float(x) for x in P[s]] for s in sorted(P)}},
        training={"n_records": n_records, "seed": seed})


def fit_mf(records, target, priors, rank, lam, lr=0.02, epochs=30, seed=0,
           feature_layout=None):
    """Biased matrix factorization on the global grade matrix."""
    if rank < 1:
        raise GradecastError("MF rank must be >= 1")
    terms = _fit_mf_terms(records, rank, lam, lr=lr, epochs=epochs, seed=seed)
    return specialize_mf(terms, target, priors, rank, lam, lr, epochs, seed,
                         len(records), feature_layout=feature_layout)


def fit_cs_mf(train_ds, rank, lam, lr=0.02, epochs=120, seed=0):
    """Per-course matrix factorization over (students x priors+target).

    Prediction folds a new student's latent vector in from the prior-grade
    residuals, so the model stays a function of the prior grades only.
    """
    priors = list(train_ds.prior_courses)
    cols = priors + [train_ds.target_course]
    col_idx = {c: i for i, c in enumerate(cols)}
    entries = []
    for si, ex in enumerate(train_ds.examples):
        for course, grade in sorted(ex.taken.items()):
            entries.append((si, col_idx[course], grade))
        entries.append((si, col_idx[train_ds.target_course], ex.label))
    n_rows = len(train_ds.examples)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 55)))
    b0 = float(np.mean([e[2] for e in entries]))
    brow = np.zeros(n_rows)
    bcol = np.zeros(len(cols))
    P = rng.normal(0.0, 0.1, size=(n_rows, rank))
    Q = rng.normal(0.0, 0.1, size=(len(cols), rank))
    arr = np.array(entries)
    for _ in range(epochs):
        order = rng.permutation(len(arr))
        for j in order:
            si, ci, g = int(arr[j, 0]), int(arr[j, 1]), arr[j, 2]
            e = g - (b0 + brow[si] + bcol[ci] + P[si] @ Q[ci])
            brow[si] += lr * (e - lam * brow[si])
            bcol[ci] += lr * (e - lam * bcol[ci])
            p_old = P[si].copy()
            P[si] += lr * (e * Q[ci] - lam * P[si])
            Q[ci] += lr * (e * p_old - lam * Q[ci])
    return ModelArtifact(
        family="CS_MF", target_course=train_ds.target_course,
        prior_courses=tuple(priors),
        params={"b0": np.asarray(b0), "b_cols": bcol, "Q": Q},
        hyperparams={"rank": rank, "lambda": lam, "lr": lr, "epochs": epochs},
        feature_layout=train_ds.feature_layout,
        training={"n_examples": n_rows, "seed": seed})


def _cs_mf_fold_in(art, taken):
    """Estimate (row bias, latent) from a student's observed prior grades."""
    rank = int(art.hyperparams["rank"])
    lam = float(art.hyperparams["lambda"])
    b0 = float(art.params["b0"])
    bcol = art.params["b_cols"]
    Q = art.params["Q"]
    col_idx = {c: i for i, c in enumerate(list(art.prior_courses) + [art.target_course])}
    rows, resid = [], []
    for course, grade in sorted(taken.items()):
        ci = col_idx[course]
        rows.append(np.concatenate(([1.0], Q[ci])))
        resid.append(grade - b0 - bcol[ci])
    M = np.array(rows)
    r = np.array(resid)
    A = M.T @ M + lam * np.eye(rank + 1)
    beta = np.linalg.solve(A, M.T @ r)
    return beta[0], beta[1:]


# ---------------------------------------------------------------------------
# course-specific ridge regression


def _standardize_stats(features, layout):
    F = np.stack(features)
    mean = F.mean(axis=0)
    std = F.std(axis=0)
    keep = np.array([name.split("=")[0] in _STANDARDIZED_FIELDS for name in layout])
    mean = np.where(keep, mean, 0.0)
    std = np.where(keep & (std > 0), std, 1.0)
    return {"mean": mean, "std": std}


def _apply_stats(f, stats):
    return (f - stats["mean"]) / stats["std"]


def csr_input(art_or_mode, example, stats=None, layout=None):
    """Design-vector for a CSR artifact (or raw mode string) and example."""
    if isinstance(art_or_mode, ModelArtifact):
        mode = art_or_mode.hyperparams["mode"]
        stats = art_or_mode.feature_stats
    else:
        mode = art_or_mode
    if mode == "PC":
        return example.static
    if example.features is None:
        raise MissingFeatures(f"CSR_{mode} requires content features")
    feats = _apply_stats(example.features, stats) if stats else example.features
    if mode == "CF":
        return feats
    if mode == "HY":
        return np.concatenate([example.static, feats])
    raise GradecastError(f"unknown CSR mode {mode!r}")


def fit_csr(train_ds, mode, lam):
    """Closed-form ridge (normal equations); the intercept is unregularized."""
    if mode in ("CF", "HY") and (train_ds.feature_layout is None
                                 or any(ex.features is None for ex in train_ds.examples)):
        raise MissingFeatures(f"CSR_{mode} requires content features")
    stats = None
    if mode in ("CF", "HY"):
        stats = _standardize_stats([ex.features for ex in train_ds.examples],
                                   train_ds.feature_layout)
    X = np.stack([csr_input(mode, ex, stats=stats) for ex in train_ds.examples])
    y = train_ds.labels()
    Xa = np.concatenate([np.ones((X.shape[0], 1)), X], axis=1)
    D = np.eye(Xa.shape[1])
    D[0, 0] = 0.0
    w = np.linalg.solve(Xa.T @ Xa + lam * D, Xa.T @ y)
    return ModelArtifact(
        family=f"CSR_{mode}", target_course=train_ds.target_course,
        prior_courses=train_ds.prior_courses,
        params={"w": w},
        hyperparams={"mode": mode, "lambda": lam},
        feature_layout=train_ds.feature_layout, feature_stats=stats,
        training={"n_examples": len(train_ds.examples)})


# ---------------------------------------------------------------------------
# deep course models (grid search + snapshots)


def _mlp_val_mae(params, X, y):
    drop = np.ones((params["bh"].shape[0] + 1, params["W0"].shape[0]))
    preds = np.empty(len(y))
    for i in range(len(y)):
        out, _, _ = kernels.mlp_fwd(params["W0"], params["b0"], params["Wh"],
                                    params["bh"], params["wo"],
                                    float(params["bo"]), X[i], drop)
        preds[i] = clip_grade(out)
    return float(np.mean(np.abs(preds - y)))


def _lstm_val_mae(params, seqs, y):
    S = params["B"].shape[0]
    h = params["Wh0"].shape[1]
    d = params["Wx0"].shape[1]
    preds = np.empty(len(y))
    for i, X in enumerate(seqs):
        drop = nn.lstm_masks(0.0, X.shape[0], d, S, h)
        out = kernels.lstm_fwd(params["Wx0"], params["Wh0"], params["Wxd"],
                               params["Whd"], params["B"], params["wo"],
                               float(params["bo"]), X, *drop)
        preds[i] = clip_grade(out[0])
    return float(np.mean(np.abs(preds - y)))


def _train_deep_point(family, point, train_inputs, train_labels, val_inputs,
                      val_labels, seed, grid_index, max_iters, batch_size, lr):
    """Train one grid point; return (best val mae, snapshot iter, params, curve)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, grid_index)))
    n = len(train_labels)
    rate = float(point["dropout"])
    if family == "MLP":
        d = train_inputs.shape[1]
        params = nn.init_mlp_params(d, point["units"], point["layers"], rng)
        L, h = point["layers"], point["units"]
    else:
        d = train_inputs[0].shape[1]
        params = nn.init_lstm_params(d, point["hidden"], point["stack"], rng)
        S, h = point["stack"], point["hidden"]
    adam = nn.adam_init(params, lr)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    has_val = len(val_labels) > 0

    def evaluate(p):
        if family == "MLP":
            return (_mlp_val_mae(p, val_inputs, val_labels) if has_val
                    else _mlp_val_mae(p, train_inputs, train_labels))
        return (_lstm_val_mae(p, val_inputs, val_labels) if has_val
                else _lstm_val_mae(p, train_inputs, train_labels))

    best = None  # (mae, iter, params copy)
    curve = []
    order = rng.permutation(n)
    pos = 0
    batch = min(batch_size, n)
    for it in range(1, max_iters + 1):
        for g in grads.values():
            g[...] = 0.0
        for _ in range(batch):
            if pos >= n:
                order = rng.permutation(n)
                pos = 0
            i = order[pos]
            pos += 1
            if family == "MLP":
                masks = nn.mlp_masks(rate, L, h, rng if rate > 0 else None)
                out, Z, A = kernels.mlp_fwd(params["W0"], params["b0"],
                                            params["Wh"], params["bh"],
                                            params["wo"], float(params["bo"]),
                                            train_inputs[i], masks)
                dy = 2.0 * (out - train_labels[i]) / batch
                g = kernels.mlp_bwd(params["W0"], params["Wh"], params["wo"],
                                    train_inputs[i], Z, A, masks, dy)
                for key, val in zip(("W0", "b0", "Wh", "bh", "wo", "bo"), g):
                    grads[key] += val
            else:
                X = train_inputs[i]
                masks = nn.lstm_masks(rate, X.shape[0], d, S, h,
                                      rng if rate > 0 else None)
                out = kernels.lstm_fwd(params["Wx0"], params["Wh0"],
                                       params["Wxd"], params["Whd"],
                                       params["B"], params["wo"],
                                       float(params["bo"]), X, *masks)
                dy = 2.0 * (out[0] - train_labels[i]) / batch
                g = kernels.lstm_bwd(params["Wx0"], params["Wh0"],
                                     params["Wxd"], params["Whd"],
                                     params["wo"], *out[1:], *masks, dy)
                for key, val in zip(("Wx0", "Wh0", "Wxd", "Whd", "B", "wo", "bo"), g):
                    grads[key] += val
        if family == "LSTM":
            nn.clip_global_norm(grads, LSTM_CLIP_NORM)
        nn.adam_step(params, grads, adam)
        if it % SNAPSHOT_EVERY == 0 or it == max_iters:
            mae_now = evaluate(params)
            curve.append((it, mae_now))
            if best is None or mae_now < best[0]:
                best = (mae_now, it, {k: v.copy() for k, v in params.items()})
    if best is None:  # max_iters < snapshot cadence never evaluated
        mae_now = evaluate(params)
        best = (mae_now, max_iters, {k: v.copy() for k, v in params.items()})
        curve.append((max_iters, mae_now))
    return best[0], best[1], best[2], curve, has_val


def fit_course_model(family, train_ds, val_ds, grid_points, seed,
                     max_iters=2000, batch_size=32, lr=nn.ADAM_LR):
    """Grid search over deep configurations with validation snapshotting."""
    if family not in DEEP_FAMILIES:
        raise UnsupportedFamily(f"fit_course_model handles MLP/LSTM, not {family}")
    labels = train_ds.labels()
    val_labels = val_ds.labels() if len(val_ds) else np.empty(0)
    if family == "MLP":
        train_inputs = np.stack([ex.static for ex in train_ds.examples])
        val_inputs = (np.stack([ex.static for ex in val_ds.examples])
                      if len(val_ds) else np.empty((0, len(train_ds.prior_courses))))
    else:
        train_inputs = [ex.sequence_matrix() for ex in train_ds.examples]
        val_inputs = [ex.sequence_matrix() for ex in val_ds.examples]

    results = []
    for gi, point in enumerate(grid_points):
        best_mae, snap_it, params, curve, used_val = _train_deep_point(
            family, point, train_inputs, labels, val_inputs, val_labels,
            seed, gi, max_iters, batch_size, lr)
        count = int(sum(v.size for v in params.values()))
        results.append({"index": gi, "point": point, "validation_mae": best_mae,
                        "snapshot_iteration": snap_it, "parameter_count": count,
                        "params": params, "snapshots": curve,
                        "validation_empty": not used_val})
    chosen = min(results, key=lambda r: (r["validation_mae"], r["parameter_count"],
                                         r["snapshot_iteration"], r["index"]))
    training = {
        "seed": seed, "iterations": max_iters, "batch_size": batch_size,
        "snapshot_every": SNAPSHOT_EVERY,
        "validation_examples": int(len(val_ds)),
        "chosen_index": chosen["index"],
        "chosen_validation_mae": chosen["validation_mae"],
        "chosen_snapshot_iteration": chosen["snapshot_iteration"],
        "snapshots": [[int(i), float(m)] for i, m in chosen["snapshots"]],
        "grid": [{"point": r["point"], "validation_mae": r["validation_mae"],
                  "snapshot_iteration": r["snapshot_iteration"],
                  "parameter_count": r["parameter_count"]} for r in results],
    }
    return ModelArtifact(
        family=family, target_course=train_ds.target_course,
        prior_courses=train_ds.prior_courses, params=chosen["params"],
        hyperparams=dict(chosen["point"]),
        dropout=float(chosen["point"]["dropout"]),
        feature_layout=train_ds.feature_layout, training=training)


# ---------------------------------------------------------------------------
# uniform predict interface


def _check_encoding(art, example):
    if tuple(example.prior_courses) != tuple(art.prior_courses):
        raise EncodingMismatch(
            f"example priors {example.prior_courses} != artifact priors "
            f"{art.prior_courses}")


def predict_raw(art, example, _skip_check=False):
    """Deterministic (dropout-off) unclipped prediction."""
    if not _skip_check:
        _check_encoding(art, example)
    fam = art.family
    if fam == "BO":
        return float(art.params["b0"]) + float(art.params["b_course"]) \
            + art.extra["student_bias"].get(example.student_id, 0.0)
    if fam == "MF":
        base = float(art.params["b0"]) + float(art.params["b_course"])
        bs = art.extra["student_bias"].get(example.student_id)
        latent = art.extra["student_latent"].get(example.student_id)
        if bs is not None:
            base += bs
        if latent is not None and art.hyperparams.get("course_seen", True):
            base += float(np.dot(latent, art.params["q"]))
        return base
    if fam == "CS_MF":
        if not example.taken:
            return float(art.params["b0"]) + float(art.params["b_cols"][-1])
        b_s, p_s = _cs_mf_fold_in(art, example.taken)
        q_t = art.params["Q"][-1]
        return float(art.params["b0"]) + b_s + float(art.params["b_cols"][-1]) \
            + float(p_s @ q_t)
    if fam.startswith("CSR_"):
        x = csr_input(art, example)
        w = art.params["w"]
        return float(w[0] + w[1:] @ x)
    if fam == "MLP":
        p = art.params
        drop = np.ones((p["bh"].shape[0] + 1, p["W0"].shape[0]))
        out, _, _ = kernels.mlp_fwd(p["W0"], p["b0"], p["Wh"], p["bh"],
                                    p["wo"], float(p["bo"]), example.static, drop)
        return float(out)
    if fam == "LSTM":
        p = art.params
        X = example.sequence_matrix()
        masks = nn.lstm_masks(0.0, X.shape[0], p["Wx0"].shape[1],
                              p["B"].shape[0], p["Wh0"].shape[1])
        out = kernels.lstm_fwd(p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"], p["B"],
                               p["wo"], float(p["bo"]), X, *masks)
        return float(out[0])
    raise UnsupportedFamily(f"unknown family {fam!r}")


def predict_point(art, example):
    """Deterministic prediction clipped onto the grade scale."""
    return clip_grade(predict_raw(art, example))


def predict_dataset(art, ds):
    return np.array([predict_point(art, ex) for ex in ds.examples])


# ---------------------------------------------------------------------------
# baseline selection on validation


def select_csr(train_ds, val_ds, mode, lambdas):
    """Fit a CSR model per ridge penalty; keep the best validation MAE."""
    best = None
    for lam in lambdas:
        art = fit_csr(train_ds, mode, lam)
        score = (float(np.mean(np.abs(predict_dataset(art, val_ds) - val_ds.labels())))
                 if len(val_ds) else 0.0)
        if best is None or score < best[0]:
            best = (score, art)
    best[1].training["validation_mae"] = best[0]
    return best[1]


def select_mf(records, target, priors, val_ds, ranks, lambdas, seed,
              feature_layout=None, cache=None, lr=0.02, epochs=30):
    """MF hyper-selection; `cache` shares global fits across target courses."""
    best = None
    for rank in ranks:
        for lam in lambdas:
            key = ("mf", rank, lam, len(records), seed)
            terms = cache.get(key) if cache is not None else None
            if terms is None:
                terms = _fit_mf_terms(records, rank, lam, lr=lr, epochs=epochs,
                                      seed=seed)
                if cache is not None:
                    cache[key] = terms
            art = specialize_mf(terms, target, priors, rank, lam, lr, epochs,
                                seed, len(records), feature_layout=feature_layout)
            score = (float(np.mean(np.abs(predict_dataset(art, val_ds) - val_ds.labels())))
                     if len(val_ds) else 0.0)
            if best is None or score < best[0]:
                best = (score, art)
    best[1].training["validation_mae"] = best[0]
    return best[1]


def select_cs_mf(train_ds, val_ds, ranks, lambdas, seed):
    best = None
    for rank in ranks:
        for lam in lambdas:
            art = fit_cs_mf(train_ds, rank, lam, seed=seed)
            score = (float(np.mean(np.abs(predict_dataset(art, val_ds) - val_ds.labels())))
                     if len(val_ds) else 0.0)
            if best is None or score < best[0]:
                best = (score, art)
    best[1].training["validation_mae"] = best[0]
    return best[1]


def make_example(transcript, priors, target, features=None, taken_raw=None):
    """Build a one-off CourseExample from (course, term, grade) triples.

    Used by the service and CLI predict/explain paths so ad-hoc transcripts
    share the dataset encoding exactly.
    """
    prior_index = {c: i for i, c in enumerate(priors)}
    rows = [(c, int(t), float(g)) for c, t, g in transcript if c in prior_index]
    static = np.zeros(len(priors))
    taken = {}
    last_term = {}
    for c, t, g in sorted(rows, key=lambda r: r[1]):
        if c not in last_term or t >= last_term[c]:
            static[prior_index[c]] = encode_grade_slot(g)
            taken[c] = g
            last_term[c] = t
    steps = []
    for term in sorted({t for _, t, _ in rows}):
        vec = np.zeros(len(priors))
        for c, t, g in rows:
            if t == term:
                vec[prior_index[c]] = encode_grade_slot(g)
        steps.append(TermStep(term, vec))
    label_term = (max(t for _, t, _ in rows) + 1) if rows else 0
    return CourseExample(student_id="(adhoc)", label=float("nan"),
                         label_term=label_term, static=static,
                         steps=tuple(steps), features=features,
                         prior_courses=tuple(priors), taken=taken)
