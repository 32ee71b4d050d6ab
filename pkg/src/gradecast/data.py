"""Transcript ingestion, per-course dataset construction and temporal splits.

Encodings follow the knowledge-state convention: a course not taken is 0.0,
an earned F (0.0) is encoded as 0.1 so the model can tell the two apart.
The same convention is used for the static last-attempt vector fed to the
MLP/ridge models and for the per-term multi-hot sequence fed to the LSTM.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (DuplicateRecord, InsufficientHistory, InvalidGrade,
                     InvalidPriorSet, ParseError)
from .grades import letter_to_numeric

F_ENCODING = 0.1  # observed F; distinguishes it from "not taken" (0.0)


@dataclass(frozen=True)
class GradeRecord:
    student_id: str
    course_id: str
    term: int
    grade: float


@dataclass(frozen=True)
class TermStep:
    term: int
    vector: np.ndarray  # (|priors|,) multi-hot encoded grades


@dataclass
class CourseExample:
    student_id: str
    label: float
    label_term: int
    static: np.ndarray              # (|priors|,) last-attempt encoded grades
    steps: tuple                    # TermStep ascending by term
    features: Optional[np.ndarray]  # content features, None when unavailable
    prior_courses: tuple            # shared tuple from the parent dataset
    taken: dict = field(default_factory=dict)  # prior -> raw last-attempt grade

    def sequence_matrix(self):
        return np.stack([s.vector for s in self.steps])


@dataclass
class BuildReport:
    n_examples: int = 0
    excluded_no_priors: int = 0
    missing_feature_rows: int = 0


@dataclass
class CourseDataset:
    target_course: str
    prior_courses: tuple
    examples: list
    feature_layout: Optional[tuple]
    report: BuildReport

    def __len__(self):
        return len(self.examples)

    def labels(self):
        return np.array([ex.label for ex in self.examples])

    def label_terms(self):
        return sorted({ex.label_term for ex in self.examples})


def encode_grade_slot(grade):
    """Encoding of an observed grade in a feature slot (F becomes 0.1)."""
    return F_ENCODING if grade == 0.0 else grade


def _parse_grade(token, line_no):
    token = token.strip()
    try:
        value = float(token)
    except ValueError:
        try:
            return letter_to_numeric(token)
        except InvalidGrade:
            raise InvalidGrade(f"line {line_no}: unrecognized grade {token!r}") from None
    if not (0.0 <= value <= 4.0):
        raise InvalidGrade(f"line {line_no}: grade {value} outside [0, 4]")
    return value


def _open_source(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    return source


GRADES_HEADER = ["student_id", "course_id", "term", "grade"]


def ingest_records(source, term_map=None):
    """Parse the grades CSV into validated GradeRecords.

    Terms may be integers or labels resolved through term_map. Duplicate
    (student, course, term) rows and out-of-range grades are rejected.
    """
    fh = _open_source(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty grades file", line=1) from None
        if [c.strip() for c in header] != GRADES_HEADER:
            raise ParseError(f"expected header {','.join(GRADES_HEADER)}", line=1)
        records = []
        seen = set()
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=line_no)
            student, course, term_tok, grade_tok = (c.strip() for c in row)
            if not student or not course:
                raise ParseError("empty student or course id", line=line_no)
            try:
                term = int(term_tok)
            except ValueError:
                if term_map is not None and term_tok in term_map:
                    term = int(term_map[term_tok])
                else:
                    raise ParseError(f"unresolvable term {term_tok!r}", line=line_no) from None
            if term < 0:
                raise ParseError(f"negative term {term}", line=line_no)
            grade = _parse_grade(grade_tok, line_no)
            key = (student, course, term)
            if key in seen:
                raise DuplicateRecord(
                    f"line {line_no}: duplicate record for {student}/{course}/term {term}")
            seen.add(key)
            records.append(GradeRecord(student, course, term, grade))
        return records
    finally:
        if fh is not source:
            fh.close()


def load_catalog(path):
    """Catalog JSON: [{"target_course": ..., "priors": [...]}, ...]."""
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    out = []
    for e in entries:
        out.append((e["target_course"], list(e["priors"])))
    return out


def load_term_map(path):
    with open(path, "r", encoding="utf-8") as fh:
        return {k: int(v) for k, v in json.load(fh).items()}


# ---------------------------------------------------------------------------
# content features


class FeatureSource:
    """Per-(student, term) and per-course content features with a fixed layout."""

    def __init__(self, student_rows, course_rows):
        # student_rows: (student_id, term, academic_level, prior_gpa, major)
        # course_rows: (course_id, level, discipline, credits)
        self.student = {(s, t): (lvl, gpa, major)
                        for s, t, lvl, gpa, major in student_rows}
        self.course = {c: (lvl, disc, cred) for c, lvl, disc, cred in course_rows}
        self.majors = sorted({r[4] for r in student_rows})
        self.disciplines = sorted({r[2] for r in course_rows})
        self.layout = tuple(
            ["academic_level", "prior_gpa"]
            + [f"major={m}" for m in self.majors]
            + ["course_level", "credits"]
            + [f"discipline={d}" for d in self.disciplines])

    @classmethod
    def from_csv(cls, student_path, course_path):
        student_rows = []
        with open(student_path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for i, row in enumerate(reader, start=2):
                try:
                    student_rows.append((row["student_id"], int(row["term"]),
                                         float(row["academic_level"]),
                                         float(row["prior_gpa"]), row["major"]))
                except (KeyError, ValueError) as exc:
                    raise ParseError(f"bad student feature row: {exc}", line=i) from None
        course_rows = []
        with open(course_path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for i, row in enumerate(reader, start=2):
                try:
                    course_rows.append((row["course_id"], float(row["level"]),
                                        row["discipline"], float(row["credits"])))
                except (KeyError, ValueError) as exc:
                    raise ParseError(f"bad course feature row: {exc}", line=i) from None
        return cls(student_rows, course_rows)

    def vector(self, student_id, term, course_id):
        """Feature vector for a (student, term, course); returns (vec, found)."""
        vec = np.zeros(len(self.layout))
        found = True
        srow = self.student.get((student_id, term))
        if srow is None:
            found = False
        else:
            lvl, gpa, major = srow
            vec[0] = lvl
            vec[1] = gpa
            if major in self.majors:
                vec[2 + self.majors.index(major)] = 1.0
        base = 2 + len(self.majors)
        crow = self.course.get(course_id)
        if crow is None:
            found = False
        else:
            clvl, disc, cred = crow
            vec[base] = clvl
            vec[base + 1] = cred
            if disc in self.disciplines:
                vec[base + 2 + self.disciplines.index(disc)] = 1.0
        return vec, found


# ---------------------------------------------------------------------------
# dataset construction


def build_course_dataset(records, target, priors, features=None):
    """One example per (student, term) enrollment in the target course.

    The term sequence covers every earlier term in which the student took
    any prior course; students with no prior history are excluded and
    counted in the build report.
    """
    priors = list(priors)
    if not priors:
        raise InvalidPriorSet(f"empty prior set for {target}")
    if target in priors:
        raise InvalidPriorSet(f"target {target} appears in its own prior set")
    prior_index = {c: i for i, c in enumerate(priors)}
    priors_tuple = tuple(priors)

    by_student_priors = {}
    labels = []
    for rec in records:
        if rec.course_id == target:
            labels.append(rec)
        elif rec.course_id in prior_index:
            by_student_priors.setdefault(rec.student_id, []).append(rec)

    report = BuildReport()
    layout = features.layout if features is not None else None
    examples = []
    for rec in sorted(labels, key=lambda r: (r.term, r.student_id)):
        history = [r for r in by_student_priors.get(rec.student_id, ())
                   if r.term < rec.term]
        if not history:
            report.excluded_no_priors += 1
            continue
        static = np.zeros(len(priors))
        taken = {}
        last_term = {}
        for r in sorted(history, key=lambda r: r.term):
            slot = prior_index[r.course_id]
            if r.course_id not in last_term or r.term >= last_term[r.course_id]:
                static[slot] = encode_grade_slot(r.grade)
                taken[r.course_id] = r.grade
                last_term[r.course_id] = r.term
        steps = []
        for term in sorted({r.term for r in history}):
            vec = np.zeros(len(priors))
            for r in history:
                if r.term == term:
                    vec[prior_index[r.course_id]] = encode_grade_slot(r.grade)
            steps.append(TermStep(term, vec))
        fvec = None
        if features is not None:
            fvec, found = features.vector(rec.student_id, rec.term, target)
            if not found:
                report.missing_feature_rows += 1
        examples.append(CourseExample(
            student_id=rec.student_id, label=rec.grade, label_term=rec.term,
            static=static, steps=tuple(steps), features=fvec,
            prior_courses=priors_tuple, taken=taken))
    report.n_examples = len(examples)
    return CourseDataset(target, priors_tuple, examples, layout, report)


def encode_static(example):
    """Static last-attempt grade vector for an example (copy)."""
    return example.static.copy()


def temporal_split(ds, test_term):
    """Split by label term: test = T, validation = T-1, train < T-1."""
    train, val, test = [], [], []
    for ex in ds.examples:
        if ex.label_term == test_term:
            test.append(ex)
        elif ex.label_term == test_term - 1:
            val.append(ex)
        elif ex.label_term < test_term - 1:
            train.append(ex)
    if not train:
        raise InsufficientHistory(
            f"no training examples before term {test_term - 1} for {ds.target_course}")

    def sub(examples):
        return CourseDataset(ds.target_course, ds.prior_courses, examples,
                             ds.feature_layout, BuildReport(n_examples=len(examples)))

    return sub(train), sub(val), sub(test)


def resolve_test_term(ds, spec):
    """Resolve a --term argument ("last" or an integer) against a dataset."""
    terms = ds.label_terms()
    if spec in (None, "last"):
        return terms[-1]
    term = int(spec)
    if term not in terms:
        raise InsufficientHistory(
            f"term {term} has no {ds.target_course} enrollments (have {terms})")
    return term
