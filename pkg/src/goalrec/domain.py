"""Enrollment records, vocabularies and temporal splits.

The CSV layout mirrors a registrar export: one row per (student, semester,
course) enrollment with the columns

    Semester Year, STU ID, Major, Dept, Course Num, Grade

``Major`` may hold several majors separated by ``;``.
"""
from __future__ import annotations

import csv
import enum
import io
import os
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

CSV_COLUMNS = ("Semester Year", "STU ID", "Major", "Dept", "Course Num", "Grade")

LOWER, UPPER, GRADUATE = 0, 1, 2
LEVEL_NAMES = {LOWER: "lower", UPPER: "upper", GRADUATE: "graduate"}


class EnrollmentParseError(ValueError):
    """Raised for malformed enrollment input; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownGradeError(EnrollmentParseError):
    def __init__(self, token: str, line: int | None = None):
        self.token = token
        super().__init__(f"unknown grade token {token!r}", line)


class DuplicateEnrollmentError(EnrollmentParseError):
    pass


class EmptyVocabularyError(ValueError):
    pass


class Term(enum.IntEnum):
    SPRING = 0
    SUMMER = 1
    FALL = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "Term":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown term {text!r}") from None


@dataclass(frozen=True, order=True)
class Semester:
    year: int
    term: Term

    def __str__(self) -> str:
        return f"{self.term.label} {self.year}"

    @classmethod
    def parse(cls, text: str) -> "Semester":
        """Accept ``"Spring 2014"`` or ``"2014:Spring"``."""
        text = text.strip()
        if ":" in text:
            year, term = text.split(":", 1)
        else:
            parts = text.split()
            if len(parts) != 2:
                raise ValueError(f"bad semester {text!r}")
            term, year = parts
        try:
            return cls(int(year), Term.parse(term))
        except ValueError:
            raise ValueError(f"bad semester {text!r}") from None

    def next_regular(self) -> "Semester":
        """The following Spring or Fall, skipping Summer."""
        if self.term == Term.FALL:
            return Semester(self.year + 1, Term.SPRING)
        return Semester(self.year, Term.FALL)


_COURSE_NUM = re.compile(r"^([A-Za-z]*)(\d+)([A-Za-z]*)$")


def level_of(number: int) -> int:
    if number < 100:
        return LOWER
    if number <= 199:
        return UPPER
    return GRADUATE


@dataclass(frozen=True)
class Course:
    """A catalog course. ``number`` is the integer part of the catalog number;
    letter prefixes/suffixes such as ``3A`` or ``C100`` are kept in
    ``prefix``/``suffix`` so the course still round-trips."""

    department: str
    number: int
    suffix: str = ""
    prefix: str = ""
    subject: str = field(default="", compare=False)

    @property
    def id(self) -> str:
        return f"{self.department} {self.catalog_number}"

    @property
    def catalog_number(self) -> str:
        return f"{self.prefix}{self.number}{self.suffix}"

    @property
    def level(self) -> int:
        return level_of(self.number)

    @property
    def key(self) -> tuple:
        return (self.department, self.number, self.prefix, self.suffix)

    def __str__(self) -> str:
        return self.id

    @classmethod
    def from_fields(cls, department: str, number: str) -> "Course":
        department = department.strip()
        m = _COURSE_NUM.match(number.strip())
        if not department or m is None:
            raise ValueError(f"bad course {department!r} {number!r}")
        prefix, digits, suffix = m.groups()
        return cls(department, int(digits), suffix, prefix, department)

    @classmethod
    def parse(cls, text: str) -> "Course":
        """Parse ``"Computer Science 189"`` (the last token is the number)."""
        dept, _, num = text.strip().rpartition(" ")
        return cls.from_fields(dept, num)


class GradeKind(enum.Enum):
    LETTER = "letter"
    PASS_NO_PASS = "pnp"


LETTER_POINTS = {"A": 4.0, "B": 3.0, "C": 2.0, "D": 1.0, "F": 0.0}
PASS_TOKENS = {"P": True, "PASS": True, "NP": False, "NO PASS": False, "NOPASS": False}


@dataclass(frozen=True)
class Grade:
    kind: GradeKind
    token: str
    points: float | None = None
    passed: bool | None = None

    def __post_init__(self):
        if (self.kind is GradeKind.LETTER) != (self.points is not None):
            raise ValueError("letter grades carry points and nothing else")
        if (self.kind is GradeKind.PASS_NO_PASS) != (self.passed is not None):
            raise ValueError("pass/no-pass grades carry passed and nothing else")

    @property
    def is_letter(self) -> bool:
        return self.kind is GradeKind.LETTER

    @property
    def letter(self) -> str:
        """Base letter without modifier, e.g. ``B`` for ``B-``."""
        return self.token[0]

    @classmethod
    def parse(cls, token: str) -> "Grade":
        raw = token.strip()
        up = raw.upper()
        if up in PASS_TOKENS:
            return cls(GradeKind.PASS_NO_PASS, up if up in ("P", "NP") else ("P" if PASS_TOKENS[up] else "NP"),
                       passed=PASS_TOKENS[up])
        if up and up[0] in LETTER_POINTS and len(up) <= 2:
            base = LETTER_POINTS[up[0]]
            mod = up[1:]
            if mod == "" or (mod in "+-" and up[0] != "F"):
                if mod == "+":
                    base = min(base + 0.3, 4.0)
                elif mod == "-":
                    base -= 0.3
                return cls(GradeKind.LETTER, up, points=round(base, 1))
        raise UnknownGradeError(raw)


@dataclass(frozen=True)
class EnrollmentRecord:
    student_id: str
    semester: Semester
    majors: frozenset
    course: Course
    grade: Grade


@dataclass(frozen=True)
class SemesterRecords:
    semester: Semester
    records: tuple
    majors: frozenset

    @property
    def courses(self) -> list:
        return [r.course for r in self.records]


@dataclass(frozen=True)
class StudentSequence:
    student_id: str
    semesters: tuple  # of SemesterRecords, strictly increasing

    def __len__(self) -> int:
        return len(self.semesters)

    def before(self, semester: Semester) -> "StudentSequence":
        return StudentSequence(self.student_id, tuple(s for s in self.semesters if s.semester < semester))

    def at(self, semester: Semester) -> SemesterRecords | None:
        for s in self.semesters:
            if s.semester == semester:
                return s
        return None


@dataclass(frozen=True)
class EnrollmentDataset:
    students: tuple  # of StudentSequence, sorted by student id

    @property
    def records(self) -> list:
        return [r for s in self.students for sem in s.semesters for r in sem.records]

    def __len__(self) -> int:
        return len(self.students)

    def student(self, student_id: str) -> StudentSequence:
        for s in self.students:
            if s.student_id == student_id:
                return s
        raise KeyError(student_id)

    def semesters(self) -> list:
        return sorted({sem.semester for s in self.students for sem in s.semesters})

    @classmethod
    def from_records(cls, records: Iterable[EnrollmentRecord]) -> "EnrollmentDataset":
        by_student = defaultdict(lambda: defaultdict(list))
        seen = set()
        for r in records:
            key = (r.student_id, r.semester, r.course)
            if key in seen:
                raise DuplicateEnrollmentError(
                    f"duplicate enrollment {r.student_id} {r.semester} {r.course}")
            seen.add(key)
            by_student[r.student_id][r.semester].append(r)
        students = []
        for sid in sorted(by_student):
            sems = []
            for sem in sorted(by_student[sid]):
                recs = tuple(sorted(by_student[sid][sem], key=lambda r: r.course.key))
                majors = frozenset().union(*(r.majors for r in recs))
                sems.append(SemesterRecords(sem, recs, majors))
            students.append(StudentSequence(sid, tuple(sems)))
        return cls(tuple(students))


def _open_text(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_enrollment_csv(source) -> EnrollmentDataset:
    """Read an enrollment CSV from a path, bytes, or a binary/text stream."""
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EnrollmentParseError("missing header row", 1) from None
        header = [h.strip().lstrip("﻿") for h in header]
        if tuple(header) != CSV_COLUMNS:
            raise EnrollmentParseError(f"expected header {','.join(CSV_COLUMNS)}", 1)
        records = []
        seen = set()
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_COLUMNS):
                raise EnrollmentParseError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", line)
            sem_s, sid, majors_s, dept, num, grade_s = row
            try:
                semester = Semester.parse(sem_s)
                course = Course.from_fields(dept, num)
            except ValueError as exc:
                raise EnrollmentParseError(str(exc), line) from None
            try:
                grade = Grade.parse(grade_s)
            except UnknownGradeError as exc:
                raise UnknownGradeError(exc.token, line) from None
            sid = sid.strip()
            if not sid:
                raise EnrollmentParseError("empty student id", line)
            majors = frozenset(m.strip() for m in majors_s.split(";") if m.strip())
            key = (sid, semester, course)
            if key in seen:
                raise DuplicateEnrollmentError(f"duplicate enrollment {sid} {semester} {course}", line)
            seen.add(key)
            records.append(EnrollmentRecord(sid, semester, majors, course, grade))
    finally:
        if fh is not source:
            fh.close()
    return EnrollmentDataset.from_records(records)


def write_enrollment_csv(dataset: EnrollmentDataset | Sequence[EnrollmentRecord], dest: IO[str]) -> None:
    records = dataset.records if isinstance(dataset, EnrollmentDataset) else dataset
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([str(r.semester), r.student_id, ";".join(sorted(r.majors)),
                    r.course.department, r.course.catalog_number, r.grade.token])


BINARY_LETTERS = ("above", "below")
FULL_LETTERS = ("A", "B", "C", "D", "F")


@dataclass(frozen=True)
class Vocabulary:
    courses: tuple
    majors: tuple
    letter_categories: tuple = BINARY_LETTERS
    course_index: dict = field(init=False, repr=False, compare=False)
    major_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.courses or not self.majors or not self.letter_categories:
            raise EmptyVocabularyError("empty vocabulary")
        object.__setattr__(self, "course_index", {c: i for i, c in enumerate(self.courses)})
        object.__setattr__(self, "major_index", {m: i for i, m in enumerate(self.majors)})
        if len(self.course_index) != len(self.courses):
            raise ValueError("duplicate course in vocabulary")

    @property
    def n(self) -> int:
        return len(self.courses)

    @property
    def k(self) -> int:
        return len(self.majors)

    @property
    def m(self) -> int:
        return len(self.letter_categories)

    @property
    def binarized(self) -> bool:
        return self.letter_categories == BINARY_LETTERS

    def index(self, course: Course) -> int:
        try:
            return self.course_index[course]
        except KeyError:
            raise KeyError(f"course {course} not in vocabulary") from None

    def find(self, text: str) -> Course:
        """Look a course up by its display id, e.g. ``"CS 189"``."""
        parsed = Course.parse(text)
        for c in self.courses:
            if c.key == parsed.key:
                return c
        raise KeyError(f"course {text!r} not in vocabulary")


def build_vocabulary(dataset: EnrollmentDataset, min_enrollments: int = 20,
                     letter_categories: tuple = BINARY_LETTERS) -> Vocabulary:
    """Courses with at least ``min_enrollments`` records, sorted by department
    then number; majors sorted lexicographically."""
    if min_enrollments < 1:
        raise ValueError("min_enrollments must be >= 1")
    counts = Counter(r.course for r in dataset.records)
    courses = sorted((c for c, k in counts.items() if k >= min_enrollments), key=lambda c: c.key)
    if not courses:
        raise EmptyVocabularyError("empty vocabulary")
    majors = sorted({m for r in dataset.records for m in r.majors})
    return Vocabulary(tuple(courses), tuple(majors), tuple(letter_categories))


def restrict_to_vocabulary(dataset: EnrollmentDataset, vocab: Vocabulary) -> EnrollmentDataset:
    """Drop records of courses outside ``vocab``; semesters left empty vanish."""
    keep = vocab.course_index
    return EnrollmentDataset.from_records(r for r in dataset.records if r.course in keep)


@dataclass(frozen=True)
class SequenceExample:
    """A student history whose semesters at positions ``>= label_start`` are
    prediction targets; earlier semesters are input only."""

    student_id: str
    semesters: tuple
    label_start: int = 1

    @property
    def label_semesters(self) -> tuple:
        return self.semesters[self.label_start:]


@dataclass(frozen=True)
class Split:
    train: tuple
    val: tuple
    test: tuple


def temporal_split(dataset: EnrollmentDataset, train_end: Semester, val_semester: Semester,
                   test_semester: Semester) -> Split:
    """Train on every student's semesters up to ``train_end``; validate and
    test on the single semesters given, using all earlier history as input."""
    if not (train_end < val_semester < test_semester):
        raise ValueError("need train_end < val_semester < test_semester")
    present = set(dataset.semesters())
    for name, sem in (("validation", val_semester), ("test", test_semester)):
        if sem not in present:
            raise ValueError(f"{name} semester {sem} absent from data")

    train, val, test = [], [], []
    for s in dataset.students:
        prefix = tuple(x for x in s.semesters if x.semester <= train_end)
        if len(prefix) >= 2:
            train.append(SequenceExample(s.student_id, prefix, 1))
        for sem, bucket in ((val_semester, val), (test_semester, test)):
            hist = tuple(x for x in s.semesters if x.semester <= sem)
            if len(hist) >= 2 and hist[-1].semester == sem:
                bucket.append(SequenceExample(s.student_id, hist, len(hist) - 1))
    return Split(tuple(train), tuple(val), tuple(test))
