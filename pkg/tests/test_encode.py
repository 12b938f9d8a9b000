import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goalrec.domain import (FULL_LETTERS, Course, EnrollmentRecord, Grade, SemesterRecords, Semester,
                            SequenceExample, Term, Vocabulary)
from goalrec.encode import (BinaryGrade, MaskGroup, ModelKind, Threshold, binarize_grade, build_model_input,
                            decode_grades, encode_semester, encode_sequence, input_dims, slot_position)

FALL = Semester(2014, Term.FALL)


def rec(course, grade, sem=FALL, majors=("Computer Science",)):
    return EnrollmentRecord("s", sem, frozenset(majors), course, Grade.parse(grade))


def test_binarize_examples():
    assert binarize_grade(Grade.parse("A"), Threshold.B) is BinaryGrade.ABOVE_OR_EQUAL
    assert binarize_grade(Grade.parse("B-"), Threshold.B) is BinaryGrade.BELOW
    assert binarize_grade(Grade.parse("B"), Threshold.B) is BinaryGrade.ABOVE_OR_EQUAL
    assert binarize_grade(Grade.parse("A-"), Threshold.A) is BinaryGrade.BELOW
    assert binarize_grade(Grade.parse("P"), Threshold.A) is BinaryGrade.PASS
    assert binarize_grade(Grade.parse("NP"), Threshold.B) is BinaryGrade.NO_PASS


def test_threshold_parse():
    assert Threshold.parse("a") is Threshold.A and Threshold.B.cut_points == 3.0
    with pytest.raises(ValueError):
        Threshold.parse("C")


def test_hand_layout(tiny_vocab):
    c = tiny_vocab.courses
    sem = encode_semester([rec(c[1], "A"), rec(c[2], "P")], {"Statistics"}, tiny_vocab, Threshold.B)
    assert sem.grades.tolist() == [0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0]
    assert sem.courses.tolist() == [0, 1, 1]
    assert sem.mask.tolist() == [MaskGroup.NONE, MaskGroup.LETTER, MaskGroup.PASS_NO_PASS]
    assert sem.majors.tolist() == [0, 1]


def test_empty_semester(tiny_vocab):
    sem = encode_semester([], (), tiny_vocab, Threshold.B)
    assert not sem.grades.any() and not sem.courses.any() and (sem.mask == MaskGroup.NONE).all()


def test_unknown_course(tiny_vocab):
    with pytest.raises(KeyError):
        encode_semester([rec(Course("Law", 1), "A")], (), tiny_vocab, Threshold.B)


def test_full_letter_slots():
    v = Vocabulary((Course("Math", 1),), ("Math",), FULL_LETTERS)
    assert [slot_position(Grade.parse(g), v, Threshold.B) for g in ("A-", "B+", "D", "F", "P", "NP")] == \
        [0, 1, 3, 4, 5, 6]


@pytest.mark.parametrize("kind,rec_len,side_len", [(ModelKind.MODEL1, 12, 0), (ModelKind.MODEL2, 15, 0),
                                                   (ModelKind.MODEL3, 16, 3)])
def test_input_lengths(kind, rec_len, side_len):
    assert input_dims(kind, 3, 2, 4) == (rec_len, side_len)
    x, side = build_model_input(kind, np.zeros(12), np.zeros(3), np.zeros(4))
    assert x.shape == (rec_len,)
    assert (side is None) == (side_len == 0)


@given(st.integers(1, 12), st.integers(2, 5), st.integers(1, 6))
def test_input_lengths_random(n, m, k):
    g, c, mj = np.zeros((m + 2) * n), np.zeros(n), np.zeros(k)
    assert build_model_input(ModelKind.MODEL1, g, c, mj)[0].size == (m + 2) * n
    assert build_model_input(ModelKind.MODEL2, g, c, mj)[0].size == (m + 2) * n + n
    x, side = build_model_input(ModelKind.MODEL3, g, c, mj)
    assert (x.size, side.size) == ((m + 2) * n + k, n)


def test_mismatched_inputs():
    with pytest.raises(ValueError):
        build_model_input(ModelKind.MODEL2, np.zeros((2, 12)), np.zeros((3, 3)), np.zeros((2, 4)))


grade_tokens = st.sampled_from(["A", "A-", "B+", "B", "B-", "C", "D+", "F", "P", "NP"])


@given(st.dictionaries(st.integers(0, 2), grade_tokens), st.sampled_from(list(Threshold)))
def test_encode_decode_round_trip(assign, threshold):
    courses = (Course("Computer Science", 61), Course("Computer Science", 189), Course("Statistics", 134))
    vocab = Vocabulary(courses, ("Computer Science",))
    records = [rec(courses[i], g) for i, g in assign.items()]
    sem = encode_semester(records, (), vocab, threshold)
    expected = {(courses[i], slot_position(Grade.parse(g), vocab, threshold)) for i, g in assign.items()}
    assert decode_grades(sem.grades, vocab) == expected
    slots = sem.grades.reshape(3, 4)
    assert (slots.sum(1) <= 1).all()
    for i in range(3):
        group = MaskGroup(sem.mask[i])
        if group is MaskGroup.NONE:
            assert not slots[i].any()
        elif group is MaskGroup.LETTER:
            assert slots[i, :2].sum() == 1
        else:
            assert slots[i, 2:].sum() == 1


def test_sequence_alignment(tiny_vocab):
    c = tiny_vocab.courses
    sems = [Semester(2014, Term.SPRING), Semester(2014, Term.FALL), Semester(2015, Term.SPRING)]
    grades = [[(c[0], "A")], [(c[1], "C")], [(c[2], "P"), (c[0], "B")]]
    srs = tuple(SemesterRecords(s, tuple(rec(cc, g, s) for cc, g in gs), frozenset({"Computer Science"}))
                for s, gs in zip(sems, grades))
    seq = encode_sequence(SequenceExample("s", srs, label_start=1), tiny_vocab, Threshold.B)
    assert len(seq) == 2
    assert seq.next_courses.tolist() == [[0, 1, 0], [1, 0, 1]]
    assert seq.labels[0].tolist() == [0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0]
    assert seq.masks[1].tolist() == [MaskGroup.LETTER, MaskGroup.NONE, MaskGroup.PASS_NO_PASS]
    assert seq.majors[:, 0].tolist() == [1, 1]

    tail = encode_sequence(SequenceExample("s", srs, label_start=2), tiny_vocab, Threshold.B)
    assert not tail.labels[0].any() and (tail.masks[0] == 0).all()
    np.testing.assert_array_equal(tail.labels[1], seq.labels[1])
