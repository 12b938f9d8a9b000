import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import goalrec.evaluate as ev
from goalrec.domain import Course, EnrollmentDataset, EnrollmentRecord, Grade, Semester, Term, Vocabulary
from goalrec.encode import EncodedSequence, MaskGroup, ModelKind, Threshold
from goalrec.evaluate import (fscore, goal_cohort, goal_match_rates, grade_prediction_metrics, majority_baseline,
                              prereq_accuracy)
from goalrec.inference import PrereqPair, RankedRecommendation
from goalrec.net import init_params

ABOVE, BELOW, PASS, NOPASS = ([1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1])


def _seq(slot_rows):
    """One step whose label slots are ``slot_rows`` (None = not enrolled)."""
    n = len(slot_rows)
    labels = np.zeros((1, 4 * n))
    masks = np.zeros((1, n), dtype=np.int8)
    for i, row in enumerate(slot_rows):
        if row is None:
            continue
        labels[0, 4 * i:4 * i + 4] = row
        masks[0, i] = MaskGroup.LETTER if row[0] or row[1] else MaskGroup.PASS_NO_PASS
    return EncodedSequence("s", np.zeros((1, 4 * n)), np.zeros((1, n)), np.zeros((1, 1)), labels, masks)


def _fake_predictions(monkeypatch, preds):
    monkeypatch.setattr(ev, "predict_batch", lambda model, seqs: [np.asarray(p, float)[None] for p in preds])


MODEL = init_params(ModelKind.MODEL1, 4, 2, 1, d=2)


def test_perfect_predictor(monkeypatch):
    seq = _seq([ABOVE, BELOW, PASS, NOPASS])
    _fake_predictions(monkeypatch, [seq.labels[0]])
    m = grade_prediction_metrics(MODEL, [seq])
    assert (m.letter_accuracy, m.letter_fscore, m.pnp_accuracy) == (100.0, 100.0, 100.0)


def test_balanced_confusion(monkeypatch):
    seq = _seq([ABOVE, ABOVE, BELOW, BELOW])
    _fake_predictions(monkeypatch, [ABOVE + BELOW + ABOVE + BELOW])
    m = grade_prediction_metrics(MODEL, [seq])
    assert m.letter_accuracy == 50.0 and m.letter_fscore == 50.0
    assert np.isnan(m.pnp_accuracy) and m.n_letter == 4


def test_no_labels_is_an_error(monkeypatch):
    seq = _seq([None] * 4)
    _fake_predictions(monkeypatch, [np.zeros(16)])
    with pytest.raises(ValueError):
        grade_prediction_metrics(MODEL, [seq])


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_fscore_range(tp, fp, fn):
    f = fscore(tp, fp, fn)
    assert 0.0 <= f <= 100.0
    if tp == 0:
        assert f == 0.0


def test_majority_baseline_counts():
    assert majority_baseline([_seq([ABOVE, ABOVE, ABOVE, BELOW])]).letter_accuracy == 75.0
    assert majority_baseline([_seq([BELOW, BELOW, None, PASS])]).letter_accuracy == 100.0
    # the majority class comes from the reference split when given
    train = [_seq([BELOW, BELOW, BELOW, None])]
    assert majority_baseline([_seq([ABOVE, ABOVE, ABOVE, BELOW])], train).letter_accuracy == 25.0
    with pytest.raises(ValueError):
        majority_baseline([])


def _vocab():
    return Vocabulary(tuple(Course("Math", j) for j in (1, 2, 3, 150, 151)), ("Math",))


def _fake_infer(monkeypatch, ranking):
    def fake(model, target, vocab, ctx=None, candidates=None, top_k=10):
        return [RankedRecommendation(c, 0.5) for c in ranking[target]][:top_k]
    monkeypatch.setattr(ev, "infer_prereqs", fake)


def test_prereq_single_pair_hit(monkeypatch):
    v = _vocab()
    pair = PrereqPair(v.courses[0], v.courses[3])
    _fake_infer(monkeypatch, {v.courses[3]: [v.courses[0], v.courses[1]]})
    m, _ = prereq_accuracy(MODEL, [pair], v)
    assert (m.pair_accuracy, m.target_accuracy) == (100.0, 100.0)


def test_prereq_partial_recovery(monkeypatch):
    v = _vocab()
    pairs = [PrereqPair(v.courses[0], v.courses[3]), PrereqPair(v.courses[1], v.courses[3])]
    _fake_infer(monkeypatch, {v.courses[3]: [v.courses[0], v.courses[2]]})
    m, _ = prereq_accuracy(MODEL, pairs, v)
    assert (m.pair_accuracy, m.target_accuracy, m.n_pairs, m.n_targets) == (50.0, 100.0, 2, 1)


@given(st.lists(st.booleans(), min_size=1, max_size=2))
def test_single_prereq_targets_agree(hits):
    v = _vocab()
    targets = v.courses[3:3 + len(hits)]
    pairs = [PrereqPair(v.courses[0], t) for t in targets]
    ranking = {t: [v.courses[0] if h else v.courses[1]] for t, h in zip(targets, hits)}
    mp = pytest.MonkeyPatch()
    try:
        _fake_infer(mp, ranking)
        m, _ = prereq_accuracy(MODEL, pairs, v)
    finally:
        mp.undo()
    assert m.target_accuracy >= m.pair_accuracy


# goal-based match rates

SEMS = [Semester(2014, Term.FALL), Semester(2015, Term.SPRING), Semester(2015, Term.FALL),
        Semester(2016, Term.SPRING), Semester(2016, Term.FALL)]
REC, TGT = SEMS[3], SEMS[4]


def _dataset(rows):
    return EnrollmentDataset.from_records(
        EnrollmentRecord(sid, sem, frozenset({"Math"}), Course("Math", num), Grade.parse(g))
        for sid, sem, num, g in rows)


def _student(sid, target_grade, rec_courses, history=((SEMS[1], 1, "A"), (SEMS[2], 2, "B"))):
    rows = [(sid, s, n, g) for s, n, g in history]
    rows += [(sid, REC, n, "A") for n in rec_courses]
    rows.append((sid, TGT, 150, target_grade))
    return rows


def test_cohort_rules():
    rows = _student("ok", "A", [3])
    rows += _student("short", "A", [3], history=())
    rows += _student("pnp", "P", [3])
    rows += [("retake", SEMS[1], 150, "C")] + _student("retake", "A", [3], history=((SEMS[2], 2, "B"),))
    rows += _student("gap", "A", [], history=((SEMS[1], 1, "A"), (SEMS[2], 2, "B")))
    rows += [("gap", Semester(2016, Term.SUMMER), 3, "A")]
    ds = _dataset(rows)
    assert [s.student_id for s, _, _ in goal_cohort(ds, Course("Math", 150), TGT, REC)] == ["ok"]


def test_hit_and_miss(monkeypatch):
    ds = _dataset(_student("pos", "A", [1, 2, 3]) + _student("neg", "C", [151]))
    v = Vocabulary(tuple(Course("Math", j) for j in (1, 2, 3, 150, 151)), ("Math",))
    monkeypatch.setattr(ev, "recommend", lambda *a, **k: [RankedRecommendation(Course("Math", 3), 0.9)])
    report = goal_match_rates(MODEL, ds, v, [Course("Math", 150), Course("Math", 151)], TGT, REC, Threshold.B, [])
    s = report.summary
    assert (s.pos_rate, s.neg_rate, s.n_pos, s.n_neg) == (100.0, 0.0, 1, 1)
    assert report.per_course[Course("Math", 151)] is None
    threaded = goal_match_rates(MODEL, ds, v, [Course("Math", 150)], TGT, REC, Threshold.B, [], workers=2)
    assert threaded.summary == s
