"""Synthetic enrollment data with a hidden prerequisite graph.

Students enroll every Fall and Spring from their entry semester on. Course
choice favours the home department, level-appropriate courses, and courses
whose planted prerequisites were already passed. A course is passed at the
B threshold with probability ``p_prepared`` when every planted prerequisite
was passed earlier and ``p_unprepared`` otherwise.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import (GRADUATE, LOWER, UPPER, Course, EnrollmentDataset, EnrollmentRecord, Grade, Semester,
                     Term, write_enrollment_csv)
from .inference import PrereqPair, write_prereq_pairs

DEPARTMENTS = ("Computer Science", "Statistics", "Mathematics", "Physics", "Economics", "Chemistry",
               "Biology", "History")
MAJORS = ("Computer Science", "Statistics", "Mathematics", "Physics", "Economics", "Chemistry",
          "Biology", "History", "Data Science", "Applied Mathematics", "Cognitive Science", "Astrophysics")
ABOVE_LETTERS = ("A", "A-", "B+", "B")
BELOW_LETTERS = ("B-", "C+", "C", "C-", "D", "F")


@dataclass(frozen=True)
class SynthConfig:
    n_courses: int = 60
    n_departments: int = 3
    n_majors: int = 6
    n_students: int = 2000
    n_semesters: int = 8
    seed: int = 0
    n_edges: int = 20
    dag_edges: tuple | None = None  # explicit ((prereq_index, target_index), ...) over generated courses
    p_prepared: float = 0.85
    p_unprepared: float = 0.35
    pnp_fraction: float = 0.1
    courses_per_semester: int = 4
    first_semester: Semester = Semester(2013, Term.FALL)

    def validate(self) -> None:
        if self.n_departments < 1 or self.n_departments > len(DEPARTMENTS):
            raise ValueError(f"n_departments must be in 1..{len(DEPARTMENTS)}")
        if self.n_majors < 1 or self.n_majors > len(MAJORS):
            raise ValueError(f"n_majors must be in 1..{len(MAJORS)}")
        if self.n_courses < 3 * self.n_departments:
            raise ValueError("need at least three courses per department")
        if not 1 <= self.courses_per_semester <= self.n_courses:
            raise ValueError("courses_per_semester must be between 1 and n_courses")
        if self.n_semesters < 2 or self.n_students < 1:
            raise ValueError("need at least two semesters and one student")
        if not (0.0 <= self.p_unprepared <= self.p_prepared <= 1.0):
            raise ValueError("need 0 <= p_unprepared <= p_prepared <= 1")
        if not 0.0 <= self.pnp_fraction <= 1.0:
            raise ValueError("pnp_fraction must be in [0, 1]")

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "SynthConfig":
        """Build from flat ``key=value`` strings (unknown keys rejected)."""
        kwargs = {}
        fields = cls.__dataclass_fields__
        for key, raw in values.items():
            if key not in fields or key == "dag_edges":
                raise ValueError(f"unknown synth setting {key!r}")
            default = fields[key].default
            if isinstance(default, Semester):
                kwargs[key] = Semester.parse(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)


@dataclass(frozen=True)
class SynthDataset:
    dataset: EnrollmentDataset
    dag: tuple  # PrereqPair, the hidden answer key
    courses: tuple
    config: SynthConfig

    def enrollments_csv(self) -> str:
        buf = io.StringIO()
        write_enrollment_csv(self.dataset, buf)
        return buf.getvalue()

    def prereq_csv(self) -> str:
        buf = io.StringIO()
        write_prereq_pairs(self.dag, buf)
        return buf.getvalue()

    def semesters(self) -> list:
        return regular_semesters(self.config.first_semester, self.config.n_semesters)

    def targets(self) -> list:
        return sorted({p.target for p in self.dag}, key=lambda c: c.key)


def regular_semesters(first: Semester, count: int) -> list:
    out = [first]
    while len(out) < count:
        out.append(out[-1].next_regular())
    return out


def make_catalog(config: SynthConfig, rng: np.random.Generator) -> list[Course]:
    """Courses per department split roughly 40/40/20 over lower/upper/graduate."""
    courses = []
    per = np.full(config.n_departments, config.n_courses // config.n_departments)
    per[: config.n_courses % config.n_departments] += 1
    for dept, count in zip(DEPARTMENTS[: config.n_departments], per):
        n_grad = max(1, int(round(0.2 * count)))
        n_lower = (count - n_grad + 1) // 2
        n_upper = count - n_grad - n_lower
        for lo, hi, cnt in ((1, 100, n_lower), (100, 200, n_upper), (200, 300, n_grad)):
            for num in sorted(rng.choice(np.arange(lo, hi), size=cnt, replace=False)):
                courses.append(Course(dept, int(num), subject=dept))
    return sorted(courses, key=lambda c: c.key)


def plant_dag(courses: Sequence[Course], n_edges: int, rng: np.random.Generator,
              cross_department: float = 0.5, max_prereqs: int = 2) -> list[tuple[int, int]]:
    """Random prerequisite edges into upper-division and graduate targets.

    Four in five edges come from the level just below the target, the rest
    from the same level with a smaller number, so the graph is acyclic and
    never points down a level.
    """
    order = {i: (c.level, c.number, c.department) for i, c in enumerate(courses)}
    upper = [i for i, c in enumerate(courses) if c.level == UPPER]
    grad = [i for i, c in enumerate(courses) if c.level == GRADUATE]
    edges: set = set()
    indegree = np.zeros(len(courses), dtype=int)
    attempts = 0
    while len(edges) < n_edges and attempts < 200 * max(n_edges, 1):
        attempts += 1
        pick = grad if (grad and rng.random() < 0.2) or not upper else upper
        t = int(rng.choice(pick))
        if indegree[t] >= max_prereqs:
            continue
        same_dept = rng.random() >= cross_department
        below = rng.random() < 0.8
        pool = [i for i in range(len(courses))
                if order[i] < order[t]
                and (courses[i].level == courses[t].level - 1 if below else courses[i].level == courses[t].level)
                and (courses[i].department == courses[t].department) == same_dept]
        if not pool:
            continue
        p = int(rng.choice(pool))
        if (p, t) in edges:
            continue
        edges.add((p, t))
        indegree[t] += 1
    if len(edges) < n_edges:
        raise ValueError(f"could only plant {len(edges)} of {n_edges} prerequisite edges")
    return sorted(edges)


def _check_dag(courses: Sequence[Course], edges) -> None:
    n = len(courses)
    adj = {i: [] for i in range(n)}
    for p, t in edges:
        if not (0 <= p < n and 0 <= t < n) or p == t:
            raise ValueError(f"bad edge {(p, t)}")
        if courses[p].level > courses[t].level:
            raise ValueError(f"edge {courses[p]} -> {courses[t]} points to a lower level")
        adj[p].append(t)
    state = [0] * n
    for root in range(n):
        if state[root]:
            continue
        stack = [(root, iter(adj[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state[nxt] == 1:
                raise ValueError("prerequisite graph has a cycle")
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(adj[nxt])))


def _level_weight(level: int, year: int) -> float:
    if level == LOWER:
        return 1.0 if year < 2 else 0.3
    if level == UPPER:
        return 0.15 if year < 1 else 1.0
    return 0.02 if year < 2 else 0.3


def generate(config: SynthConfig = SynthConfig()) -> SynthDataset:
    config.validate()
    rng = np.random.default_rng(config.seed)
    courses = make_catalog(config, rng)
    n = len(courses)
    if config.dag_edges is None:
        edges = plant_dag(courses, config.n_edges, rng)
    else:
        edges = sorted({(int(p), int(t)) for p, t in config.dag_edges})
    _check_dag(courses, edges)
    prereqs = [[] for _ in range(n)]
    for p, t in edges:
        prereqs[t].append(p)

    depts = DEPARTMENTS[: config.n_departments]
    majors = MAJORS[: config.n_majors]
    major_dept = {m: depts[j % len(depts)] for j, m in enumerate(majors)}
    course_dept = np.array([depts.index(c.department) for c in courses])
    level = np.array([c.level for c in courses])
    has_prereq = np.array([bool(p) for p in prereqs])
    calendar = regular_semesters(config.first_semester, config.n_semesters)

    records = []
    for s in range(config.n_students):
        sid = f"x{100000 + s:06d}"
        entry = int(rng.integers(0, max(1, config.n_semesters // 2)))
        declared = {majors[int(rng.integers(len(majors)))]}
        if rng.random() < 0.1:
            declared.add(majors[int(rng.integers(len(majors)))])
        home = {depts.index(major_dept[m]) for m in declared}
        own = np.isin(course_dept, list(home))
        taken = np.zeros(n, dtype=bool)
        passed = np.zeros(n, dtype=bool)
        for step, semester in enumerate(calendar[entry:]):
            year = step // 2
            ready = np.array([all(passed[p] for p in prereqs[i]) for i in range(n)])
            w = np.array([_level_weight(lv, year) for lv in level])
            w *= np.where(own, 4.0, 1.0)
            w *= np.where(has_prereq & ready, 3.0, 1.0)
            w[taken] = 0.0
            available = int(np.count_nonzero(w))
            if available == 0:
                break
            load = int(np.clip(rng.poisson(config.courses_per_semester - 1) + 1, 1, 6))
            load = min(load, available)
            chosen = np.sort(rng.choice(n, size=load, replace=False, p=w / w.sum()))
            outcomes = []
            for i in chosen:
                p_ok = config.p_prepared if ready[i] else config.p_unprepared
                ok = rng.random() < p_ok
                if rng.random() < config.pnp_fraction:
                    grade = Grade.parse("P" if ok else "NP")
                else:
                    pool = ABOVE_LETTERS if ok else BELOW_LETTERS
                    grade = Grade.parse(pool[int(rng.integers(len(pool)))])
                outcomes.append((i, ok))
                records.append(EnrollmentRecord(sid, semester, frozenset(declared), courses[i], grade))
            for i, ok in outcomes:
                taken[i] = True
                passed[i] = ok
    dag = tuple(PrereqPair(courses[p], courses[t]) for p, t in edges)
    return SynthDataset(EnrollmentDataset.from_records(records), dag, tuple(courses), config)


def planted_recall(recommendations: Mapping, dag: Sequence[PrereqPair]) -> float:
    """Fraction of planted edges whose prerequisite is among the target's recommendations."""
    if not dag:
        raise ValueError("empty prerequisite graph")
    hits = 0
    for pair in dag:
        recs = recommendations.get(pair.target, ())
        got = {getattr(r, "course", r) for r in recs}
        hits += pair.prerequisite in got
    return hits / len(dag)


def random_recall_baseline(candidates: Mapping, dag: Sequence[PrereqPair], top_k: int = 10,
                           trials: int = 2000, seed: int = 0) -> float:
    """Monte Carlo recall of a uniformly random top-k drawn from each target's
    candidate list (``candidates[target]`` is a sequence of courses)."""
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(trials):
        recs = {}
        for target, pool in candidates.items():
            pool = list(pool)
            k = min(top_k, len(pool))
            recs[target] = [pool[j] for j in rng.choice(len(pool), size=k, replace=False)] if k else []
        total += planted_recall(recs, dag)
    return total / trials
