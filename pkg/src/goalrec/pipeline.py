"""Glue shared by the command line and the synthetic experiments."""
from __future__ import annotations

from dataclasses import dataclass

from .domain import (EnrollmentDataset, Semester, Split, Vocabulary, build_vocabulary, parse_enrollment_csv,
                     restrict_to_vocabulary, temporal_split)
from .encode import ModelKind, Threshold, encode_examples
from .evaluate import GoalMetrics, GradeMetrics, goal_match_rates, grade_prediction_metrics, majority_baseline, \
    prereq_accuracy
from .inference import CandidateFilterContext, filter_candidates
from .optim import TrainConfig, TrainResult, train
from .synth import SynthConfig, generate, planted_recall, random_recall_baseline

SYNTH_SPLIT = "2015:Fall,2016:Spring,2017:Spring"
SYNTH_TARGET_SEMESTER = Semester.parse("Fall 2016")
SYNTH_REC_SEMESTER = Semester.parse("Spring 2016")


def parse_split(text: str) -> tuple[Semester, Semester, Semester]:
    """``"2015:Fall,2016:Spring,2017:Spring"`` -> (train end, validation, test)."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"split needs three comma-separated semesters, got {text!r}")
    return tuple(Semester.parse(p) for p in parts)


@dataclass
class Prepared:
    dataset: EnrollmentDataset
    vocab: Vocabulary
    split: Split
    train: list
    val: list
    test: list


def load_dataset(source, min_enrollments: int = 20, vocab: Vocabulary | None = None
                 ) -> tuple[EnrollmentDataset, Vocabulary]:
    """Parse enrollments and restrict them to ``vocab`` (built from the data if absent)."""
    dataset = parse_enrollment_csv(source)
    if vocab is None:
        vocab = build_vocabulary(dataset, min_enrollments)
    return restrict_to_vocabulary(dataset, vocab), vocab


def prepare(dataset: EnrollmentDataset, vocab: Vocabulary, split: str, threshold: Threshold) -> Prepared:
    sp = temporal_split(dataset, *parse_split(split))
    tr, va, te = (encode_examples(x, vocab, threshold) for x in (sp.train, sp.val, sp.test))
    return Prepared(dataset, vocab, sp, tr, va, te)


def candidate_pools(vocab: Vocabulary, pairs, threshold: Threshold) -> dict:
    """Filtered candidate courses per target of ``pairs``."""
    pools = {}
    for target in sorted({p.target for p in pairs}, key=lambda c: c.key):
        ctx = CandidateFilterContext(tuple(pairs), target, threshold)
        pools[target] = [vocab.courses[i] for i in filter_candidates(vocab, ctx)]
    return pools


@dataclass
class SyntheticRun:
    seed: int
    grades: GradeMetrics
    baseline: GradeMetrics
    recall: float
    random_recall: float
    goal: GoalMetrics
    result: TrainResult


def run_synthetic(seed: int = 0, kind: ModelKind = ModelKind.MODEL2, threshold: Threshold = Threshold.B,
                  synth: SynthConfig | None = None, config: TrainConfig | None = None, workers: int = 1,
                  baseline_trials: int = 2000) -> SyntheticRun:
    """Generate, train, and score one seed of the planted-graph experiment."""
    synth = synth or SynthConfig(seed=seed)
    config = config or TrainConfig(seed=seed)
    data = generate(synth)
    dataset, vocab = load_dataset(data.enrollments_csv().encode("utf-8"))
    prep = prepare(dataset, vocab, SYNTH_SPLIT, threshold)
    result = train(kind, prep.train, prep.val, config, vocab.n, vocab.m, vocab.k, threshold)
    model = result.model
    dag = [p for p in data.dag if p.target in vocab.course_index and p.prerequisite in vocab.course_index]
    _, recs = prereq_accuracy(model, dag, vocab)
    pools = candidate_pools(vocab, dag, threshold)
    goal = goal_match_rates(model, dataset, vocab, sorted({p.target for p in dag}, key=lambda c: c.key),
                            SYNTH_TARGET_SEMESTER, SYNTH_REC_SEMESTER, threshold, dag, workers=workers)
    return SyntheticRun(seed, grade_prediction_metrics(model, prep.test), majority_baseline(prep.test, prep.train),
                        planted_recall(recs, dag), random_recall_baseline(pools, dag, trials=baseline_trials, seed=seed),
                        goal.summary, result)

