"""Counterfactual influence of prior courses on a target-course prediction.

Per-student influence raises one prior grade to 4.0; collective influence
raises it by +1.0 (capped at 4.0) and sums over students. Both difference
the raw (unclipped, dropout-off) model outputs so boundary clipping cannot
zero out genuine influence; clipped values are carried for display only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CourseExample, TermStep, encode_grade_slot
from .errors import OutOfRange
from .grades import clip_grade
from .models import predict_raw

FULL_GRADE = 4.0
COLLECTIVE_INCREMENT = 1.0


@dataclass
class InfluenceEntry:
    prior: str
    grade: float                # student's actual grade in the prior
    counterfactual: float       # raw model output under the counterfactual
    influence: float            # counterfactual - base (raw difference)

    def as_dict(self):
        return {"prior": self.prior, "grade": self.grade,
                "counterfactual": self.counterfactual,
                "counterfactual_clipped": clip_grade(self.counterfactual),
                "influence": self.influence}


@dataclass
class InfluenceReport:
    student_id: str
    target_course: str
    base: float                 # raw base prediction
    entries: list
    true_grade: float = float("nan")
    normalized: bool = False

    def as_dict(self):
        d = {"student": self.student_id, "target": self.target_course,
             "base": self.base, "base_clipped": clip_grade(self.base),
             "entries": [e.as_dict() for e in self.entries]}
        if not np.isnan(self.true_grade):
            d["true_grade"] = self.true_grade
        if self.normalized:
            d["normalized"] = True
        return d


@dataclass
class CollectiveInfluence:
    prior: str
    influence: float
    n_students: int


def counterfactual_example(example, course, new_grade):
    """Copy of an example with one prior course's grade replaced.

    The replacement applies to the static slot, every term step in which
    the course was taken, and the raw taken map. new_grade is an observed
    hypothetical grade, so the F-encoding convention applies to it.
    """
    slot = example.prior_courses.index(course)
    encoded = encode_grade_slot(new_grade)
    static = example.static.copy()
    static[slot] = encoded
    steps = []
    for step in example.steps:
        if step.vector[slot] != 0.0:
            vec = step.vector.copy()
            vec[slot] = encoded
            steps.append(TermStep(step.term, vec))
        else:
            steps.append(step)
    taken = dict(example.taken)
    taken[course] = new_grade
    return CourseExample(student_id=example.student_id, label=example.label,
                         label_term=example.label_term, static=static,
                         steps=tuple(steps), features=example.features,
                         prior_courses=example.prior_courses, taken=taken)


def influence_student(art, example, top_k=None, normalize=False):
    """Influence of each taken prior when its grade is raised to 4.0."""
    if not example.taken:
        raise OutOfRange("student took none of the prior courses")
    base = predict_raw(art, example)
    entries = []
    for course in example.prior_courses:
        if course not in example.taken:
            continue
        cf = counterfactual_example(example, course, FULL_GRADE)
        cf_raw = predict_raw(art, cf)
        entries.append(InfluenceEntry(prior=course,
                                      grade=example.taken[course],
                                      counterfactual=cf_raw,
                                      influence=cf_raw - base))
    entries.sort(key=lambda e: (-e.influence, e.prior))
    if normalize and entries:
        top = max(abs(e.influence) for e in entries)
        if top > 0:
            entries = [InfluenceEntry(e.prior, e.grade, e.counterfactual,
                                      e.influence / top) for e in entries]
    if top_k is not None:
        entries = entries[:top_k]
    return InfluenceReport(student_id=example.student_id,
                           target_course=art.target_course,
                           base=base, entries=entries,
                           true_grade=example.label,
                           normalized=normalize)


def influence_collective(art, ds, prior):
    """Summed +1.0-counterfactual influence of one prior over the cohort."""
    total = 0.0
    n = 0
    for ex in ds.examples:
        if prior not in ex.taken:
            continue
        base = predict_raw(art, ex)
        bumped = min(FULL_GRADE, ex.taken[prior] + COLLECTIVE_INCREMENT)
        cf = counterfactual_example(ex, prior, bumped)
        total += predict_raw(art, cf) - base
        n += 1
    return CollectiveInfluence(prior=prior, influence=total, n_students=n)


def influence_collective_table(art, ds):
    """Collective influence for every prior course, base predictions cached."""
    bases = [predict_raw(art, ex) for ex in ds.examples]
    table = []
    for prior in art.prior_courses:
        total = 0.0
        n = 0
        for ex, base in zip(ds.examples, bases):
            if prior not in ex.taken:
                continue
            bumped = min(FULL_GRADE, ex.taken[prior] + COLLECTIVE_INCREMENT)
            cf = counterfactual_example(ex, prior, bumped)
            total += predict_raw(art, cf) - base
            n += 1
        if n > 0:
            table.append(CollectiveInfluence(prior=prior, influence=total,
                                             n_students=n))
    return table


def top_influential(table, k=5):
    """k largest collective influences, descending; ties by course id."""
    if not table:
        raise OutOfRange("empty collective influence table")
    ranked = sorted(table, key=lambda e: (-e.influence, e.prior))
    return ranked[:k]


def collective_to_csv_rows(table):
    return [(e.prior, e.influence, e.n_students) for e in table]
