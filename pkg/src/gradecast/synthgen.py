"""Synthetic transcript generator with planted prerequisite structure.

Stands in for real registrar data in tests and benchmarks: grades follow

    g(s, c) = mu + ability_s - difficulty_c
              + sum_p w[p->c] * dev(s, p)                  (taken priors only)
              + gamma_c * (g1 - 1)(g2 - 1) * d1 * d2 / 4      (two heaviest)
              + noise
    dev(s, p) = (g(s, p) - mu) * d(s, p)
    d(s, p)   = recency_decay ** (terms since p was taken)

The pairwise interaction is centered near zero for typical grades (so
taking the pair is not itself a grade shift) while its gradient in each
pair grade stays positive above an F.

plus, when trend_coef is nonzero, a trajectory term

    trend_coef * sum_p (g(s,p) - mu) * (t_p - mean t_P) / |P|

which rewards improvement over the student's own timeline. Grades are
clipped to [0, 4] and (optionally) snapped onto the letter grid. With
recency_decay < 1 the timing of a prior course matters: knowledge fades,
which only sequence models can pick up from the encoding. The exact
generative parameters are exposed as an OracleModel whose noise-free
predictor lower-bounds the achievable error.

Noise can be made heteroscedastic via noise_gpa_slope: the per-grade noise
scale is noise_sigma * (1 + slope * (prior GPA - mu)), floored at 25% of
noise_sigma. A nonzero slope plants a confidence structure that
uncertainty evaluation can be checked against.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import GradeRecord
from .errors import InvalidSpec
from .grades import clip_grade, snap_to_grid

_MAJORS = ("ENG", "SCI", "ART")


def _interaction_term(gamma, pair, prior_grades, decay_factor):
    """Pairwise synergy of the two heaviest priors.

    Zero when either grade is 1.0 and roughly zero-mean over takers, so the
    indicator "took both pair courses" carries no grade shift of its own.
    """
    if pair is None or pair[0] not in prior_grades or pair[1] not in prior_grades:
        return 0.0
    g1, g2 = prior_grades[pair[0]], prior_grades[pair[1]]
    return gamma * (g1 - 1.0) * (g2 - 1.0) \
        * decay_factor(pair[0]) * decay_factor(pair[1]) / 4.0


def _trend_term(coef, mu, edges, prior_grades, prior_terms):
    """Trajectory signal: later-taken priors count positive, earlier negative.

    Identity-independent by construction (depends on when priors were taken
    relative to the student's own mean prior term), so a static last-attempt
    encoding cannot express it.
    """
    if coef == 0.0 or prior_terms is None:
        return 0.0
    taken = [(p, w) for p, w in edges if p in prior_grades and p in prior_terms]
    if len(taken) < 2:
        return 0.0
    tbar = np.mean([prior_terms[p] for p, _ in taken])
    acc = 0.0
    for p, _ in taken:
        acc += (prior_grades[p] - mu) * (prior_terms[p] - tbar)
    return coef * acc / len(taken)


@dataclass(frozen=True)
class CourseDef:
    course_id: str
    level: int
    credits: int
    discipline: str


@dataclass
class GeneratorSpec:
    seed: int
    n_students: int
    courses: list                      # CourseDef, pool + targets
    edges: dict                        # target -> [(prior, weight), ...]
    targets: list
    terms: int
    courses_per_term: int = 3
    mu: float = 2.9
    ability_sigma: float = 0.7
    difficulty_sigma: float = 0.35
    pool_difficulty_sigma: Optional[float] = None  # None: same as targets
    noise_sigma: float = 0.3
    gamma: float = 0.4
    recency_decay: float = 1.0
    trend_coef: float = 0.0
    noise_gpa_slope: float = 0.0
    risk_gap: float = 0.0
    risk_gap_threshold: float = 2.2
    target_take_prob: float = 0.55
    min_priors_to_enroll: int = 2
    snap: bool = True
    difficulty: Optional[dict] = None  # filled during generate() if absent

    def as_dict(self):
        return {
            "seed": self.seed, "n_students": self.n_students,
            "courses": [[c.course_id, c.level, c.credits, c.discipline]
                        for c in self.courses],
            "edges": {t: [[p, w] for p, w in ps] for t, ps in self.edges.items()},
            "targets": list(self.targets), "terms": self.terms,
            "courses_per_term": self.courses_per_term, "mu": self.mu,
            "ability_sigma": self.ability_sigma,
            "difficulty_sigma": self.difficulty_sigma,
            "pool_difficulty_sigma": self.pool_difficulty_sigma,
            "noise_sigma": self.noise_sigma, "gamma": self.gamma,
            "recency_decay": self.recency_decay,
            "trend_coef": self.trend_coef,
            "noise_gpa_slope": self.noise_gpa_slope,
            "risk_gap": self.risk_gap,
            "risk_gap_threshold": self.risk_gap_threshold,
            "target_take_prob": self.target_take_prob,
            "min_priors_to_enroll": self.min_priors_to_enroll,
            "snap": self.snap,
        }


@dataclass
class OracleModel:
    """Exact generative parameters; the Bayes point predictor."""
    mu: float
    gamma: float
    ability: dict                      # student -> ability (0.0 if unseen)
    difficulty: dict
    edges: dict                        # target -> [(prior, weight), ...]
    interaction_pair: dict             # target -> (p1, p2) or None
    snap: bool
    recency_decay: float = 1.0
    trend_coef: float = 0.0
    risk_gap: float = 0.0
    risk_gap_threshold: float = 2.2

    def predict(self, prior_grades, course, student_id=None,
                prior_terms=None, at_term=None):
        """Noise-free generative mean given observed prior grades, clipped.

        When the generator uses recency decay, pass prior_terms (course ->
        term taken) and at_term so deviations can be aged; without timing
        the grades are treated as fresh.
        """
        a = self.ability.get(student_id, 0.0)
        g = self.mu + a - self.difficulty.get(course, 0.0)

        def decay_factor(prior):
            if (self.recency_decay != 1.0 and prior_terms is not None
                    and at_term is not None and prior in prior_terms):
                return self.recency_decay ** (at_term - prior_terms[prior])
            return 1.0

        def dev(prior):
            return (prior_grades[prior] - self.mu) * decay_factor(prior)

        for prior, w in self.edges.get(course, ()):
            if prior in prior_grades:
                g += w * dev(prior)
        g += _interaction_term(self.gamma, self.interaction_pair.get(course),
                               prior_grades, decay_factor)
        g += _trend_term(self.trend_coef, self.mu, self.edges.get(course, ()),
                         prior_grades, prior_terms)
        if self.risk_gap > 0.0 and g < self.risk_gap_threshold:
            g -= self.risk_gap
        return clip_grade(g)

    def predict_example(self, example, course=None):
        """Oracle prediction for a dataset example (uses its term layout)."""
        course = course or getattr(example, "target_course", None)
        prior_terms = {}
        for step in example.steps:
            for slot, value in enumerate(step.vector):
                if value != 0.0:
                    prior_terms[example.prior_courses[slot]] = step.term
        return self.predict(example.taken, course,
                            student_id=example.student_id,
                            prior_terms=prior_terms, at_term=example.label_term)

    def planted_top_prior(self, course):
        """The heaviest-weight prior of a target (the planted prerequisite)."""
        edges = self.edges[course]
        return max(edges, key=lambda e: e[1])[0]

    def as_dict(self):
        return {
            "mu": self.mu, "gamma": self.gamma,
            "recency_decay": self.recency_decay,
            "trend_coef": self.trend_coef,
            "risk_gap": self.risk_gap,
            "risk_gap_threshold": self.risk_gap_threshold,
            "ability": {k: float(v) for k, v in sorted(self.ability.items())},
            "difficulty": {k: float(v) for k, v in sorted(self.difficulty.items())},
            "edges": {t: [[p, float(w)] for p, w in ps]
                      for t, ps in self.edges.items()},
            "interaction_pair": {t: (list(p) if p else None)
                                 for t, p in self.interaction_pair.items()},
            "snap": self.snap,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(mu=doc["mu"], gamma=doc["gamma"], ability=doc["ability"],
                   difficulty=doc["difficulty"],
                   edges={t: [(p, w) for p, w in ps]
                          for t, ps in doc["edges"].items()},
                   interaction_pair={t: (tuple(p) if p else None)
                                     for t, p in doc["interaction_pair"].items()},
                   snap=doc["snap"],
                   recency_decay=doc.get("recency_decay", 1.0),
                   trend_coef=doc.get("trend_coef", 0.0),
                   risk_gap=doc.get("risk_gap", 0.0),
                   risk_gap_threshold=doc.get("risk_gap_threshold", 2.2))


def oracle_predict(oracle, prior_grades, course, student_id=None):
    return oracle.predict(prior_grades, course, student_id=student_id)


def _validate_dag(courses, edges):
    ids = {c.course_id for c in courses}
    indeg = {c: 0 for c in ids}
    children = {c: [] for c in ids}
    for target, priors in edges.items():
        if target not in ids:
            raise InvalidSpec(f"edge target {target} not in catalog")
        wsum = 0.0
        for prior, w in priors:
            if prior not in ids:
                raise InvalidSpec(f"edge source {prior} not in catalog")
            children[prior].append(target)
            indeg[target] += 1
            wsum += w
        if wsum > 1.0 + 1e-9:
            raise InvalidSpec(f"weights into {target} sum to {wsum:.3f} > 1")
    # Kahn topological order; leftovers indicate a cycle.
    queue = sorted(c for c, d in indeg.items() if d == 0)
    seen = 0
    indeg = dict(indeg)
    while queue:
        node = queue.pop(0)
        seen += 1
        for child in children[node]:
            indeg[child] -= 1
            if indeg[child] == 0:
                queue.append(child)
    if seen != len(ids):
        raise InvalidSpec("prerequisite graph contains a cycle")


def generate(spec):
    """Simulate transcripts. Returns (records, student_rows, course_rows, oracle)."""
    _validate_dag(spec.courses, spec.edges)
    rng = np.random.default_rng(spec.seed)
    course_ids = [c.course_id for c in spec.courses]
    pool = [c for c in course_ids if c not in set(spec.targets)]
    ability = {}
    if spec.difficulty:
        difficulty = dict(spec.difficulty)
    else:
        # Near-uniform pool difficulty keeps counterfactual credit comparable
        # across prior courses; targets may still vary freely.
        pool_sigma = (spec.pool_difficulty_sigma
                      if spec.pool_difficulty_sigma is not None
                      else spec.difficulty_sigma)
        target_set = set(spec.targets)
        difficulty = {c: float(rng.normal(
            0.0, spec.difficulty_sigma if c in target_set else pool_sigma))
            for c in course_ids}
    interaction_pair = {}
    for target, priors in spec.edges.items():
        if len(priors) >= 2 and spec.gamma != 0.0:
            top2 = sorted(priors, key=lambda e: -e[1])[:2]
            interaction_pair[target] = (top2[0][0], top2[1][0])
        else:
            interaction_pair[target] = None

    records = []
    student_rows = []
    width = len(str(max(spec.n_students - 1, 1)))
    for si in range(spec.n_students):
        sid = f"s{si:0{width}d}"
        ability[sid] = float(rng.normal(0.0, spec.ability_sigma))
        major = _MAJORS[rng.integers(0, len(_MAJORS))]
        # Which targets this student will attempt, and when.
        planned = {}
        for target in spec.targets:
            if rng.random() < spec.target_take_prob:
                planned[target] = int(rng.integers(3, spec.terms))
        untaken_pool = list(pool)
        grades = {}
        grade_terms = {}
        terms_enrolled = 0
        for term in range(spec.terms):
            enroll = []
            for target, when in sorted(planned.items()):
                if when <= term and target not in grades:
                    priors_taken = sum(1 for p, _ in spec.edges.get(target, ())
                                       if p in grades)
                    need = min(spec.min_priors_to_enroll,
                               len(spec.edges.get(target, ())))
                    if priors_taken >= need:
                        enroll.append(target)
            n_fill = max(0, spec.courses_per_term - len(enroll))
            if untaken_pool and n_fill > 0:
                pick = rng.choice(len(untaken_pool),
                                  size=min(n_fill, len(untaken_pool)),
                                  replace=False)
                for j in sorted(pick, reverse=True):
                    enroll.append(untaken_pool.pop(int(j)))
            if not enroll:
                continue
            # Features describe the student entering this term.
            prior_grades_all = list(grades.values())
            gpa = float(np.mean(prior_grades_all)) if prior_grades_all else 0.0
            student_rows.append((sid, term, terms_enrolled, round(gpa, 4), major))
            terms_enrolled += 1
            for course in sorted(enroll):
                g = spec.mu + ability[sid] - difficulty[course]

                def decay_factor(prior):
                    return spec.recency_decay ** (term - grade_terms[prior])

                def dev(prior):
                    return (grades[prior] - spec.mu) * decay_factor(prior)

                for prior, w in spec.edges.get(course, ()):
                    if prior in grades:
                        g += w * dev(prior)
                g += _interaction_term(spec.gamma, interaction_pair.get(course),
                                       grades, decay_factor)
                g += _trend_term(spec.trend_coef, spec.mu,
                                 spec.edges.get(course, ()), grades, grade_terms)
                scale = 1.0
                if spec.noise_gpa_slope != 0.0 and prior_grades_all:
                    scale = max(0.25, 1.0 + spec.noise_gpa_slope * (gpa - spec.mu))
                g += float(rng.normal(0.0, spec.noise_sigma * scale))
                if spec.risk_gap > 0.0 and g < spec.risk_gap_threshold:
                    g -= spec.risk_gap
                g = snap_to_grid(g) if spec.snap else clip_grade(g)
                grades[course] = g
                grade_terms[course] = term
                records.append(GradeRecord(sid, course, term, g))

    course_rows = [(c.course_id, c.level, c.discipline, c.credits)
                   for c in spec.courses]
    oracle = OracleModel(mu=spec.mu, gamma=spec.gamma, ability=ability,
                         difficulty=difficulty, edges=dict(spec.edges),
                         interaction_pair=interaction_pair, snap=spec.snap,
                         recency_decay=spec.recency_decay,
                         trend_coef=spec.trend_coef,
                         risk_gap=spec.risk_gap,
                         risk_gap_threshold=spec.risk_gap_threshold)
    return records, student_rows, course_rows, oracle


# ---------------------------------------------------------------------------
# named benchmark specs


def bench_small(seed=42, **overrides):
    """Default acceptance benchmark: 2000 students, 25 courses, 10 terms.

    Planted structure: per-target prerequisite weights with a dominant
    heaviest edge, a pairwise interaction between the two heaviest priors,
    recency decay and a trajectory trend (temporal signals a static
    encoding cannot represent), and mild GPA-linked noise scaling.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 999)))
    pool = [CourseDef(f"P-{i:03d}", level=100 + 100 * (i % 3), credits=int(3 + (i % 2)),
                      discipline=_MAJORS[i % len(_MAJORS)]) for i in range(20)]
    targets = [CourseDef(f"T-{i:03d}", level=300, credits=3,
                         discipline=_MAJORS[i % len(_MAJORS)]) for i in range(5)]
    edges = {}
    for t in targets:
        k = int(rng.integers(4, 9))
        chosen = rng.choice(len(pool), size=k, replace=False)
        # One dominant planted prerequisite (fixed 0.4) with a decisive
        # margin over the rest, which share the remaining mass unevenly.
        rest = rng.uniform(0.5, 0.9, size=k - 1)
        rest = rest / rest.sum() * 0.45
        weights = np.concatenate([[0.4], np.sort(rest)[::-1]])
        edges[t.course_id] = [(pool[int(c)].course_id, float(w))
                              for c, w in zip(chosen, weights)]
    spec = GeneratorSpec(
        seed=seed, n_students=2000, courses=pool + targets, edges=edges,
        targets=[t.course_id for t in targets], terms=10,
        courses_per_term=3, mu=2.45, gamma=0.4, noise_sigma=0.3,
        ability_sigma=0.5, recency_decay=0.85, trend_coef=0.3,
        noise_gpa_slope=1.2, risk_gap=0.5, risk_gap_threshold=2.2,
        pool_difficulty_sigma=0.08)
    for key, val in overrides.items():
        setattr(spec, key, val)
    return spec


def named_spec(name, seed=42, **overrides):
    if name == "bench-small":
        return bench_small(seed=seed, **overrides)
    raise InvalidSpec(f"unknown generator spec {name!r}")


# ---------------------------------------------------------------------------
# file emission (formats the dataset module ingests)


def emit(spec, out_dir):
    """Generate and write grades/catalog/features/term-map/oracle files."""
    records, student_rows, course_rows, oracle = generate(spec)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "grades.csv"), "w", encoding="utf-8",
              newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["student_id", "course_id", "term", "grade"])
        for r in records:
            w.writerow([r.student_id, r.course_id, r.term, repr(r.grade)])
    with open(os.path.join(out_dir, "catalog.json"), "w", encoding="utf-8") as fh:
        json.dump([{"target_course": t,
                    "priors": [p for p, _ in spec.edges[t]]}
                   for t in spec.targets], fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "term_map.json"), "w", encoding="utf-8") as fh:
        json.dump({f"T{i:02d}": i for i in range(spec.terms)}, fh, indent=1,
                  sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "features_students.csv"), "w",
              encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["student_id", "term", "academic_level", "prior_gpa", "major"])
        for row in student_rows:
            w.writerow(row)
    with open(os.path.join(out_dir, "features_courses.csv"), "w",
              encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["course_id", "level", "discipline", "credits"])
        for row in course_rows:
            w.writerow(row)
    with open(os.path.join(out_dir, "oracle.json"), "w", encoding="utf-8") as fh:
        json.dump(oracle.as_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "generator_config.json"), "w",
              encoding="utf-8") as fh:
        json.dump(spec.as_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return records, student_rows, course_rows, oracle
