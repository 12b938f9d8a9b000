"""Semester records to model tensors.

Per-course slot layout in a grade vector (``m`` letter categories)::

    [letter_0 .. letter_{m-1}, pass, no_pass]

With the default binarized vocabulary ``letter_0`` is "above or equal to the
threshold" and ``letter_1`` is "below".
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import FULL_LETTERS, Grade, SequenceExample, Vocabulary


class Threshold(enum.Enum):
    A = 4.0
    B = 3.0

    @property
    def cut_points(self) -> float:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "Threshold":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"threshold must be A or B, got {text!r}") from None


class BinaryGrade(enum.Enum):
    ABOVE_OR_EQUAL = "above"
    BELOW = "below"
    PASS = "pass"
    NO_PASS = "no_pass"


class MaskGroup(enum.IntEnum):
    NONE = 0
    LETTER = 1
    PASS_NO_PASS = 2


class ModelKind(enum.IntEnum):
    MODEL1 = 1
    MODEL2 = 2
    MODEL3 = 3


ABOVE = 0  # letter slot of "above or equal to threshold" in a binarized vocabulary


def binarize_grade(grade: Grade, threshold: Threshold) -> BinaryGrade:
    if grade.is_letter:
        return BinaryGrade.ABOVE_OR_EQUAL if grade.points >= threshold.cut_points else BinaryGrade.BELOW
    return BinaryGrade.PASS if grade.passed else BinaryGrade.NO_PASS


def slot_position(grade: Grade, vocab: Vocabulary, threshold: Threshold) -> int:
    """Offset of ``grade`` within a course slot of length m+2."""
    m = vocab.m
    if not grade.is_letter:
        return m if grade.passed else m + 1
    if vocab.binarized:
        return ABOVE if grade.points >= threshold.cut_points else 1
    if vocab.letter_categories == FULL_LETTERS:
        return FULL_LETTERS.index(grade.letter)
    return vocab.letter_categories.index(grade.token)


@dataclass(frozen=True)
class EncodedSemester:
    grades: np.ndarray       # (m+2)*n
    courses: np.ndarray      # n
    majors: np.ndarray       # k
    mask: np.ndarray         # n, MaskGroup values


def encode_semester(records: Sequence, majors, vocab: Vocabulary, threshold: Threshold) -> EncodedSemester:
    n, m, w = vocab.n, vocab.m, vocab.m + 2
    g = np.zeros(w * n)
    c = np.zeros(n)
    mv = np.zeros(vocab.k)
    mask = np.zeros(n, dtype=np.int8)
    for r in records:
        i = vocab.index(r.course)
        g[i * w + slot_position(r.grade, vocab, threshold)] = 1.0
        c[i] = 1.0
        mask[i] = MaskGroup.LETTER if r.grade.is_letter else MaskGroup.PASS_NO_PASS
    for name in majors:
        j = vocab.major_index.get(name)
        if j is not None:
            mv[j] = 1.0
    return EncodedSemester(g, c, mv, mask)


def decode_grades(g: np.ndarray, vocab: Vocabulary) -> set:
    """Inverse of the grade part of :func:`encode_semester`: ``{(course, slot)}``."""
    w = vocab.m + 2
    slots = np.asarray(g).reshape(vocab.n, w)
    out = set()
    for i, j in zip(*np.nonzero(slots)):
        out.add((vocab.courses[i], int(j)))
    return out


def input_dims(kind: ModelKind, n: int, m: int, k: int) -> tuple[int, int]:
    """(recurrent input length, side input length) for a model topology."""
    g = (m + 2) * n
    kind = ModelKind(kind)
    if kind == ModelKind.MODEL1:
        return g, 0
    if kind == ModelKind.MODEL2:
        return g + n, 0
    return g + k, n


def build_model_input(kind: ModelKind, g_t, c_next, m_t) -> tuple[np.ndarray, np.ndarray | None]:
    """Route g_t, c_{t+1} and m_t to the recurrent and side inputs.

    Works on single vectors or on batches stacked along the first axis.
    """
    g_t = np.asarray(g_t, dtype=float)
    kind = ModelKind(kind)
    if kind == ModelKind.MODEL1:
        return g_t, None
    if kind == ModelKind.MODEL2:
        c_next = np.asarray(c_next, dtype=float)
        if c_next.shape[:-1] != g_t.shape[:-1] or g_t.shape[-1] % c_next.shape[-1]:
            raise ValueError("g_t and c_next dimensions do not match")
        return np.concatenate([g_t, c_next], axis=-1), None
    c_next = np.asarray(c_next, dtype=float)
    m_t = np.asarray(m_t, dtype=float)
    if c_next.shape[:-1] != g_t.shape[:-1] or m_t.shape[:-1] != g_t.shape[:-1] \
            or g_t.shape[-1] % c_next.shape[-1]:
        raise ValueError("g_t, c_next and m_t dimensions do not match")
    return np.concatenate([g_t, m_t], axis=-1), c_next


@dataclass(frozen=True)
class EncodedSequence:
    """Time-major tensors for one student; step t predicts semester t+1.

    ``labels[t]``/``masks[t]`` describe semester t+1 and are zeroed for
    semesters that are input-only.
    """

    student_id: str
    grades: np.ndarray     # (T, (m+2)n)  g_t
    next_courses: np.ndarray  # (T, n)    c_{t+1}
    majors: np.ndarray     # (T, k)       m_t
    labels: np.ndarray     # (T, (m+2)n)  g_{t+1}
    masks: np.ndarray      # (T, n)

    def __len__(self) -> int:
        return self.grades.shape[0]


def encode_sequence(example: SequenceExample, vocab: Vocabulary, threshold: Threshold) -> EncodedSequence:
    sems = [encode_semester(s.records, s.majors, vocab, threshold) for s in example.semesters]
    if len(sems) < 2:
        raise ValueError("a sequence needs at least two semesters")
    steps = len(sems) - 1
    labels = np.stack([sems[t + 1].grades for t in range(steps)])
    masks = np.stack([sems[t + 1].mask for t in range(steps)])
    for t in range(steps):
        if t + 1 < example.label_start:
            labels[t] = 0.0
            masks[t] = MaskGroup.NONE
    return EncodedSequence(
        example.student_id,
        np.stack([s.grades for s in sems[:-1]]),
        np.stack([s.courses for s in sems[1:]]),
        np.stack([s.majors for s in sems[:-1]]),
        labels,
        masks,
    )


def encode_examples(examples, vocab: Vocabulary, threshold: Threshold) -> list[EncodedSequence]:
    return [encode_sequence(e, vocab, threshold) for e in examples]
