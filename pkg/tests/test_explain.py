"""Counterfactual influence: per-student, collective and ranking."""

import numpy as np
import pytest

from gradecast import data, explain, models
from gradecast.data import GradeRecord
from gradecast.errors import OutOfRange


def _linear_artifact(weights, intercept=0.2, priors=None):
    priors = priors or tuple(f"p{i}" for i in range(len(weights)))
    return models.ModelArtifact(
        family="CSR_PC", target_course="tgt", prior_courses=tuple(priors),
        params={"w": np.concatenate([[intercept], weights])},
        hyperparams={"mode": "PC", "lambda": 0.0})


def _example(grades, priors=None):
    priors = priors or [f"p{i}" for i in range(len(grades))]
    transcript = [(p, i, g) for i, (p, g) in enumerate(zip(priors, grades))
                  if g is not None]
    return models.make_example(transcript, list(priors), "tgt")


def test_influence_linear_oracle():
    w = np.array([0.4, 0.3, 0.2])
    art = _linear_artifact(w)
    ex = _example([3.0, 2.0, 1.5])
    report = explain.influence_student(art, ex)
    got = {e.prior: e.influence for e in report.entries}
    for i, p in enumerate(art.prior_courses):
        assert got[p] == pytest.approx(w[i] * (4.0 - ex.taken[p]), abs=1e-9)


def test_influence_already_at_four_is_zero():
    art = _linear_artifact(np.array([0.5, 0.5]))
    ex = _example([4.0, 2.0])
    report = explain.influence_student(art, ex)
    got = {e.prior: e.influence for e in report.entries}
    assert got["p0"] == 0.0
    assert got["p1"] > 0.0


def test_identity_counterfactual_zero_for_every_family():
    rng = np.random.default_rng(1)
    records, priors = [], ["a", "b", "c"]
    for s in range(60):
        sid = f"s{s:03d}"
        for i, p in enumerate(priors):
            records.append(GradeRecord(sid, p, i, float(rng.uniform(1, 4))))
        records.append(GradeRecord(sid, "tgt", 4 + s % 3,
                                   float(rng.uniform(1, 4))))
    ds = data.build_course_dataset(records, "tgt", priors)
    train, val, _ = data.temporal_split(ds, max(ds.label_terms()))
    arts = [
        models.fit_csr(train, "PC", 1.0),
        models.fit_cs_mf(train, 2, 0.1, seed=0),
        models.fit_course_model("MLP", train, val,
                                [{"layers": 2, "units": 8, "dropout": 0.1}],
                                seed=0, max_iters=60),
        models.fit_course_model("LSTM", train, val,
                                [{"hidden": 4, "stack": 1, "dropout": 0.1}],
                                seed=0, max_iters=60),
    ]
    ex = train.examples[0]
    for art in arts:
        base = models.predict_raw(art, ex)
        for p, g in ex.taken.items():
            cf = explain.counterfactual_example(ex, p, g)
            assert models.predict_raw(art, cf) == pytest.approx(base, abs=1e-12), art.family


def test_untaken_courses_never_reported():
    art = _linear_artifact(np.array([0.4, 0.3, 0.2]))
    ex = _example([3.0, None, 1.5])
    report = explain.influence_student(art, ex)
    assert {e.prior for e in report.entries} == {"p0", "p2"}


def test_entries_sorted_descending_with_top_k():
    art = _linear_artifact(np.array([0.1, 0.5, 0.3]))
    ex = _example([2.0, 2.0, 2.0])
    report = explain.influence_student(art, ex, top_k=2)
    assert [e.prior for e in report.entries] == ["p1", "p2"]
    infl = [e.influence for e in report.entries]
    assert infl == sorted(infl, reverse=True)


def test_student_with_no_priors_rejected():
    art = _linear_artifact(np.array([0.5]))
    ex = _example([None])
    with pytest.raises(OutOfRange):
        explain.influence_student(art, ex)


def test_influence_sign_matches_weight_sign():
    art = _linear_artifact(np.array([0.4, -0.2]))
    ex = _example([2.0, 2.0])
    got = {e.prior: e.influence for e in explain.influence_student(art, ex).entries}
    assert got["p0"] > 0
    assert got["p1"] < 0


def test_collective_linear_oracle():
    w = np.array([0.4, 0.25])
    art = _linear_artifact(w)
    records = []
    grades = [(3.5, 1.0), (3.8, 2.0), (2.0, 3.9)]
    for s, (g0, g1) in enumerate(grades):
        sid = f"s{s}"
        records.append(GradeRecord(sid, "p0", 0, g0))
        records.append(GradeRecord(sid, "p1", 1, g1))
        records.append(GradeRecord(sid, "tgt", 3, 2.0))
    ds = data.build_course_dataset(records, "tgt", ["p0", "p1"])
    for j, p in enumerate(["p0", "p1"]):
        entry = explain.influence_collective(art, ds, p)
        expected = sum(w[j] * min(1.0, 4.0 - g[j]) for g in grades)
        assert entry.influence == pytest.approx(expected, abs=1e-9)
        assert entry.n_students == 3


def test_collective_capped_at_four():
    art = _linear_artifact(np.array([0.5]))
    records = [GradeRecord("s1", "p0", 0, 4.0), GradeRecord("s1", "tgt", 2, 3.0)]
    ds = data.build_course_dataset(records, "tgt", ["p0"])
    entry = explain.influence_collective(art, ds, "p0")
    assert entry.influence == 0.0


def test_collective_additivity():
    # table entry equals the sum of single-student +1.0 influences
    art = _linear_artifact(np.array([0.3, 0.2]))
    rng = np.random.default_rng(3)
    records = []
    for s in range(20):
        sid = f"s{s:02d}"
        records.append(GradeRecord(sid, "p0", 0, float(rng.uniform(1, 4))))
        records.append(GradeRecord(sid, "p1", 1, float(rng.uniform(1, 4))))
        records.append(GradeRecord(sid, "tgt", 3, 2.5))
    ds = data.build_course_dataset(records, "tgt", ["p0", "p1"])
    table = {e.prior: e for e in explain.influence_collective_table(art, ds)}
    for p in ("p0", "p1"):
        manual = 0.0
        for ex in ds.examples:
            base = models.predict_raw(art, ex)
            cf = explain.counterfactual_example(
                ex, p, min(4.0, ex.taken[p] + 1.0))
            manual += models.predict_raw(art, cf) - base
        assert table[p].influence == pytest.approx(manual, abs=1e-12)


def test_top_influential_ranking():
    table = [explain.CollectiveInfluence("b", 1.0, 5),
             explain.CollectiveInfluence("a", 3.0, 5),
             explain.CollectiveInfluence("c", 3.0, 5),
             explain.CollectiveInfluence("d", 0.5, 5)]
    top = explain.top_influential(table, 3)
    assert [e.prior for e in top] == ["a", "c", "b"]  # tie broken by id
    assert explain.top_influential(table, 1)[0].prior == "a"
    # permuting rows leaves the output unchanged
    top2 = explain.top_influential(list(reversed(table)), 3)
    assert [e.prior for e in top2] == ["a", "c", "b"]
    # k beyond table size returns everything
    assert len(explain.top_influential(table, 99)) == 4


def test_f_counterfactual_becomes_four_not_four_point_one():
    art = _linear_artifact(np.array([1.0]))
    records = [GradeRecord("s1", "p0", 0, 0.0), GradeRecord("s1", "tgt", 2, 1.0)]
    ds = data.build_course_dataset(records, "tgt", ["p0"])
    ex = ds.examples[0]
    assert ex.static[0] == 0.1  # F encoding on the observed grade
    report = explain.influence_student(art, ex)
    # counterfactual input is exactly 4.0: influence = w * (4.0 - 0.1)
    assert report.entries[0].influence == pytest.approx(1.0 * (4.0 - 0.1), abs=1e-12)


def test_report_serialization_shape():
    art = _linear_artifact(np.array([0.4, 0.3]))
    ex = _example([3.0, 2.0])
    d = explain.influence_student(art, ex, top_k=5).as_dict()
    assert set(d) >= {"student", "target", "base", "entries"}
    for e in d["entries"]:
        assert set(e) == {"prior", "grade", "counterfactual",
                          "counterfactual_clipped", "influence"}
