"""Prerequisite inference and goal-based preparation-course recommendation.

Both procedures probe a trained grade model with a single semester in which
exactly one candidate course is taken at the goal grade, while the target
course is flagged as next-semester co-enrollment, and rank candidates by the
predicted chance of reaching the goal in the target.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .domain import Course, EnrollmentDataset, Semester, SemesterRecords, Vocabulary
from .encode import EncodedSequence, Threshold, build_model_input, encode_semester
from .net import HiddenState, Model, forward_batch, group_softmax, lstm_step, make_batch, output_logits

TOP_K = 10
PREREQ_COLUMNS = ("prerequisite_dept", "prerequisite_num", "target_dept", "target_num")


@dataclass(frozen=True)
class PrereqPair:
    prerequisite: Course
    target: Course


def read_prereq_pairs(source) -> list[PrereqPair]:
    if isinstance(source, (bytes, bytearray)):
        fh = io.StringIO(bytes(source).decode("utf-8"))
    elif isinstance(source, str) and "\n" not in source:
        fh = open(source, encoding="utf-8", newline="")
    else:
        fh = source
    try:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != PREREQ_COLUMNS:
            raise ValueError(f"prerequisite CSV needs columns {','.join(PREREQ_COLUMNS)}")
        return [PrereqPair(Course.from_fields(r["prerequisite_dept"], r["prerequisite_num"]),
                           Course.from_fields(r["target_dept"], r["target_num"])) for r in reader]
    finally:
        if fh is not source:
            fh.close()


def write_prereq_pairs(pairs: Iterable[PrereqPair], dest) -> None:
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(PREREQ_COLUMNS)
    for p in pairs:
        w.writerow([p.prerequisite.department, p.prerequisite.catalog_number,
                    p.target.department, p.target.catalog_number])


class Mode(enum.Enum):
    PREREQ_INFERENCE = "prereq"
    GOAL_REC = "goal"


@dataclass(frozen=True)
class CandidateFilterContext:
    prereq_pairs: tuple
    target: Course
    threshold: Threshold = Threshold.B
    availability: frozenset | None = None
    student_history: frozenset = frozenset()


@dataclass(frozen=True)
class RankedRecommendation:
    course: Course
    probability: float


def candidate_departments(target: Course, pairs: Iterable[PrereqPair]) -> set:
    """The target's department plus every department hosting a listed
    prerequisite of some other course in the target's department."""
    depts = {target.department}
    for p in pairs:
        if p.target.department == target.department and p.target != target:
            depts.add(p.prerequisite.department)
    return depts


def filter_candidates(vocab: Vocabulary, ctx: CandidateFilterContext, mode: Mode = Mode.PREREQ_INFERENCE,
                      predicted_ok: np.ndarray | None = None) -> list[int]:
    """Indices of courses that survive the filters for ``mode``, ascending."""
    target_idx = vocab.index(ctx.target)
    depts = candidate_departments(ctx.target, ctx.prereq_pairs)
    level = ctx.target.level
    keep = [i for i, c in enumerate(vocab.courses) if c.department in depts and c.level <= level]
    if mode is Mode.GOAL_REC:
        if ctx.availability is None or predicted_ok is None:
            raise ValueError("goal recommendation needs availability and predicted_ok")
        keep = [i for i in keep
                if vocab.courses[i] in ctx.availability
                and vocab.courses[i] not in ctx.student_history
                and i != target_idx
                and predicted_ok[i]]
    return keep


def goal_positions(vocab: Vocabulary, model: Model, goal: Threshold) -> tuple[int, tuple]:
    """(probe slot, letter slots that count as reaching ``goal``)."""
    if vocab.binarized:
        if goal is not model.threshold:
            raise ValueError(f"model is binarized at threshold {model.threshold.name}, not {goal.name}")
        return 0, (0,)
    # full letter scale: categories are ordered best first
    ok = tuple(j for j, letter in enumerate(vocab.letter_categories)
               if letter in "ABCDF" and 4.0 - "ABCDF".index(letter) >= goal.cut_points)
    return ok[-1], ok


def probe_vector(model: Model, course_index: int, position: int = 0) -> np.ndarray:
    g = np.zeros(model.dims.out_dim)
    g[course_index * model.dims.width + position] = 1.0
    return g


def success_probability(model: Model, state_prev: HiddenState, probe_grade_vector, target: int,
                        threshold: Threshold | None = None, majors=None, success_slots=(0,)) -> float:
    """Probability of reaching the goal grade in course ``target`` after one
    step with ``probe_grade_vector`` as this semester's grades."""
    if threshold is not None and model.dims.m == 2 and threshold is not model.threshold:
        raise ValueError(f"model is binarized at threshold {model.threshold.name}, not {threshold.name}")
    n = model.dims.n
    c_next = np.zeros(n)
    c_next[target] = 1.0
    if majors is None:
        majors = np.zeros(model.dims.k)
    x, side = build_model_input(model.kind, probe_grade_vector, c_next, majors)
    state = lstm_step(model, x, state_prev)
    logits = output_logits(model, state.h, side)
    letter, _ = group_softmax(logits, target, model.dims.m)
    return float(sum(letter[j] for j in success_slots))


def rank(vocab: Vocabulary, scored: Iterable[tuple[int, float]], top_k: int = TOP_K) -> list[RankedRecommendation]:
    ordered = sorted(scored, key=lambda ip: (-ip[1], ip[0]))
    return [RankedRecommendation(vocab.courses[i], p) for i, p in ordered[:top_k]]


def infer_prereqs(model: Model, target: Course, vocab: Vocabulary, ctx: CandidateFilterContext | None = None,
                  candidates: Sequence[int] | None = None, top_k: int = TOP_K) -> list[RankedRecommendation]:
    """Population-level prerequisite guesses for ``target`` from a zero state.

    ``candidates`` overrides the department/level filters.
    """
    t = vocab.index(target)
    if candidates is None:
        if ctx is None:
            ctx = CandidateFilterContext((), target, model.threshold)
        candidates = filter_candidates(vocab, ctx, Mode.PREREQ_INFERENCE)
    position, slots = goal_positions(vocab, model, ctx.threshold if ctx else model.threshold)
    state0 = HiddenState.zeros(model.dims.d)
    scored = [(i, success_probability(model, state0, probe_vector(model, i, position), t,
                                      success_slots=slots)) for i in candidates]
    return rank(vocab, scored, top_k)


def encode_history(model: Model, history: Sequence[SemesterRecords], vocab: Vocabulary) -> EncodedSequence:
    """Inputs for replaying ``history``; the co-enrollment fed with the last
    semester is zero because the next semester is what we are choosing."""
    sems = [encode_semester(s.records, s.majors, vocab, model.threshold) for s in history]
    T = len(sems)
    c_next = np.zeros((T, vocab.n))
    for t in range(T - 1):
        c_next[t] = sems[t + 1].courses
    return EncodedSequence(
        "history",
        np.stack([s.grades for s in sems]),
        c_next,
        np.stack([s.majors for s in sems]),
        np.zeros((T, model.dims.out_dim)),
        np.zeros((T, vocab.n), dtype=np.int8),
    )


def replay_history(model: Model, history: Sequence[SemesterRecords], vocab: Vocabulary
                   ) -> tuple[HiddenState, np.ndarray]:
    """Final LSTM state after ``history`` and the grade logits it predicts for
    the following semester."""
    if not history:
        raise ValueError("empty student history")
    seq = encode_history(model, history, vocab)
    batch = make_batch(model.kind, [seq])
    cache = forward_batch(model, batch.x, batch.side_in)
    state = HiddenState(cache.h[-1, 0].copy(), cache.C[-1, 0].copy())
    return state, cache.logits[-1, 0]


def predicted_ok_mask(model: Model, logits: np.ndarray, success_slots=(0,)) -> np.ndarray:
    """Courses whose most likely letter category reaches the goal."""
    m = model.dims.m
    slots = logits.reshape(model.dims.n, m + 2)[:, :m]
    return np.isin(np.argmax(slots, axis=1), success_slots)


def recommend(model: Model, history: Sequence[SemesterRecords], target: Course, goal: Threshold,
              ctx: CandidateFilterContext, vocab: Vocabulary, top_k: int = TOP_K) -> list[RankedRecommendation]:
    """Rank preparation courses for next semester given a personal history."""
    if not history:
        raise ValueError("empty student history")
    t = vocab.index(target)
    taken = {r.course for s in history for r in s.records}
    if target in taken:
        raise ValueError(f"target {target} already in the student's history")
    position, slots = goal_positions(vocab, model, goal)
    state, next_logits = replay_history(model, history, vocab)
    ok = predicted_ok_mask(model, next_logits, slots)
    if ctx.student_history != frozenset(taken):
        ctx = CandidateFilterContext(ctx.prereq_pairs, ctx.target, goal, ctx.availability, frozenset(taken))
    candidates = filter_candidates(vocab, ctx, Mode.GOAL_REC, ok)
    majors = encode_semester((), history[-1].majors, vocab, model.threshold).majors
    scored = [(i, success_probability(model, state, probe_vector(model, i, position), t,
                                      majors=majors, success_slots=slots)) for i in candidates]
    return rank(vocab, scored, top_k)


def course_availability(dataset: EnrollmentDataset, semester: Semester) -> frozenset:
    """Courses with at least one enrollment in any semester of the same term."""
    return frozenset(r.course for s in dataset.students for sem in s.semesters
                     if sem.semester.term == semester.term for r in sem.records)
