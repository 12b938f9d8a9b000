"""Grade-prediction, prerequisite-recovery and goal-match metrics (percent)."""
from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .domain import Course, EnrollmentDataset, Semester, Vocabulary
from .encode import EncodedSequence, MaskGroup, Threshold
from .inference import (TOP_K, CandidateFilterContext, PrereqPair, course_availability, infer_prereqs,
                        recommend)
from .net import Model, predict_batch


@dataclass(frozen=True)
class GradeMetrics:
    letter_accuracy: float
    letter_fscore: float | None
    pnp_accuracy: float
    n_letter: int = 0
    n_pnp: int = 0

    def records(self, prefix: str = "") -> list[tuple[str, float]]:
        out = [(prefix + "letter_accuracy", self.letter_accuracy)]
        if self.letter_fscore is not None:
            out.append((prefix + "letter_fscore", self.letter_fscore))
        out.append((prefix + "pnp_accuracy", self.pnp_accuracy))
        return out


@dataclass(frozen=True)
class PrereqMetrics:
    pair_accuracy: float
    target_accuracy: float
    n_pairs: int = 0
    n_targets: int = 0


@dataclass(frozen=True)
class GoalMetrics:
    pos_rate: float
    neg_rate: float
    n_pos: int = 0
    n_neg: int = 0


def fscore(tp: int, fp: int, fn: int) -> float:
    """F1 in percent; 0 when there are no true positives."""
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 100.0 * 2 * precision * recall / (precision + recall)


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else float("nan")


def _labeled(seqs: Sequence[EncodedSequence], m: int):
    """Per labeled entry: (letter truth categories, P/NP truth indices) plus selectors."""
    for s in seqs:
        slots = s.labels.reshape(len(s), -1, m + 2)
        yield s, slots, s.masks == MaskGroup.LETTER, s.masks == MaskGroup.PASS_NO_PASS


def grade_prediction_metrics(model: Model, seqs: Sequence[EncodedSequence], positive=(0,)) -> GradeMetrics:
    """Letter accuracy/F-score (positive = reaching the threshold) and P/NP accuracy."""
    m = model.dims.m
    probs = predict_batch(model, list(seqs))
    tp = fp = fn = tn = 0
    pnp_ok = pnp_n = 0
    for p, (s, truth, is_letter, is_pnp) in zip(probs, _labeled(seqs, m)):
        pred = p.reshape(truth.shape)
        if is_letter.any():
            y = np.isin(np.argmax(truth[..., :m][is_letter], -1), positive)
            yhat = np.isin(np.argmax(pred[..., :m][is_letter], -1), positive)
            tp += int(np.sum(y & yhat))
            fp += int(np.sum(~y & yhat))
            fn += int(np.sum(y & ~yhat))
            tn += int(np.sum(~y & ~yhat))
        if is_pnp.any():
            y = np.argmax(truth[..., m:][is_pnp], -1)
            yhat = np.argmax(pred[..., m:][is_pnp], -1)
            pnp_ok += int(np.sum(y == yhat))
            pnp_n += int(is_pnp.sum())
    n_letter = tp + fp + fn + tn
    if n_letter + pnp_n == 0:
        raise ValueError("no labeled entries to evaluate")
    return GradeMetrics(_pct(tp + tn, n_letter), fscore(tp, fp, fn), _pct(pnp_ok, pnp_n), n_letter, pnp_n)


def _label_counts(seqs: Sequence[EncodedSequence], m: int):
    letter = np.zeros(m, dtype=int)
    pnp = np.zeros(2, dtype=int)
    for s, truth, is_letter, is_pnp in _labeled(seqs, m):
        letter += truth[..., :m][is_letter].sum(0).astype(int)
        pnp += truth[..., m:][is_pnp].sum(0).astype(int)
    return letter, pnp


def majority_baseline(seqs: Sequence[EncodedSequence], train: Sequence[EncodedSequence] | None = None,
                      m: int = 2) -> GradeMetrics:
    """Predict the majority class of ``train`` (default: ``seqs`` itself) everywhere."""
    if not seqs:
        raise ValueError("empty split")
    ref_letter, ref_pnp = _label_counts(train if train is not None else seqs, m)
    letter, pnp = _label_counts(seqs, m)
    return GradeMetrics(_pct(int(letter[np.argmax(ref_letter)]), int(letter.sum())), None,
                        _pct(int(pnp[np.argmax(ref_pnp)]), int(pnp.sum())),
                        int(letter.sum()), int(pnp.sum()))


def prereq_accuracy(model: Model, pairs: Sequence[PrereqPair], vocab: Vocabulary,
                    registrar: Sequence[PrereqPair] | None = None, top_k: int = TOP_K,
                    threshold: Threshold | None = None) -> tuple[PrereqMetrics, dict]:
    """Recovery of listed prerequisites among each target's top-k inferred courses.

    Returns the metrics and the per-target recommendation lists.
    """
    registrar = tuple(pairs if registrar is None else registrar)
    threshold = threshold or model.threshold
    by_target = defaultdict(set)
    for p in pairs:
        by_target[p.target].add(p.prerequisite)
    recs = {}
    for target in sorted(by_target, key=lambda c: c.key):
        ctx = CandidateFilterContext(registrar, target, threshold)
        recs[target] = infer_prereqs(model, target, vocab, ctx, top_k=top_k)
    hit_pairs = 0
    hit_targets = 0
    for target, prereqs in by_target.items():
        got = {r.course for r in recs[target]}
        found = len(prereqs & got)
        hit_pairs += found
        hit_targets += found > 0
    n_pairs = sum(len(v) for v in by_target.values())
    return (PrereqMetrics(_pct(hit_pairs, n_pairs), _pct(hit_targets, len(by_target)), n_pairs, len(by_target)),
            recs)


@dataclass
class GoalReport:
    summary: GoalMetrics
    per_course: dict = field(default_factory=dict)  # Course -> GoalMetrics | None


def goal_cohort(dataset: EnrollmentDataset, target: Course, target_semester: Semester,
                rec_semester: Semester) -> list:
    """Students graded with a letter in ``target`` in ``target_semester`` who have
    at least two earlier semesters, history before ``rec_semester``, nothing
    between ``rec_semester`` and ``target_semester``, and no earlier attempt."""
    out = []
    for s in dataset.students:
        at = s.at(target_semester)
        if at is None:
            continue
        rec = next((r for r in at.records if r.course == target), None)
        if rec is None or not rec.grade.is_letter:
            continue
        earlier = [x for x in s.semesters if x.semester < target_semester]
        if len(earlier) < 2:
            continue
        if any(rec_semester < x.semester < target_semester for x in earlier):
            continue
        history = [x for x in earlier if x.semester < rec_semester]
        if not history or any(r.course == target for x in history for r in x.records):
            continue
        out.append((s, rec.grade, tuple(history)))
    return out


def goal_match_rates(model: Model, dataset: EnrollmentDataset, vocab: Vocabulary, targets: Iterable[Course],
                     target_semester: Semester, rec_semester: Semester, goal: Threshold,
                     prereq_pairs: Sequence[PrereqPair], top_k: int = TOP_K, workers: int = 1) -> GoalReport:
    """Share of students whose real ``rec_semester`` enrollments intersect the
    top-k recommendations, split by whether they reached ``goal`` in the target."""
    targets = list(targets)
    availability = course_availability(dataset, rec_semester)
    pairs = tuple(prereq_pairs)
    jobs = []
    for target in targets:
        for student, grade, history in goal_cohort(dataset, target, target_semester, rec_semester):
            jobs.append((target, student, grade, history))

    def run(job):
        target, student, grade, history = job
        ctx = CandidateFilterContext(pairs, target, goal, availability)
        recs = recommend(model, history, target, goal, ctx, vocab, top_k)
        actual = student.at(rec_semester)
        taken = {r.course for r in actual.records} if actual is not None else set()
        return target, grade.points >= goal.cut_points, any(r.course in taken for r in recs)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    counts = defaultdict(lambda: [0, 0, 0, 0])  # pos hits, pos n, neg hits, neg n
    for target, pos, hit in results:
        c = counts[target]
        if pos:
            c[0] += hit
            c[1] += 1
        else:
            c[2] += hit
            c[3] += 1
    report = GoalReport(GoalMetrics(float("nan"), float("nan")))
    tot = [0, 0, 0, 0]
    for target in targets:
        c = counts.get(target)
        if c is None:
            report.per_course[target] = None
            continue
        report.per_course[target] = GoalMetrics(_pct(c[0], c[1]), _pct(c[2], c[3]), c[1], c[3])
        tot = [a + b for a, b in zip(tot, c)]
    report.summary = GoalMetrics(_pct(tot[0], tot[1]), _pct(tot[2], tot[3]), tot[1], tot[3])
    return report
