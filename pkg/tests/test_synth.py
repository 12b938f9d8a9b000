from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goalrec.domain import Course, build_vocabulary, parse_enrollment_csv
from goalrec.inference import PrereqPair, read_prereq_pairs
from goalrec.synth import (SynthConfig, _check_dag, generate, make_catalog, plant_dag, planted_recall,
                           random_recall_baseline)

SMALL = SynthConfig(n_students=150, seed=4)


@pytest.fixture(scope="module")
def default_data():
    return generate(SynthConfig())


def test_same_seed_same_bytes():
    a, b = generate(SMALL), generate(SMALL)
    assert a.enrollments_csv() == b.enrollments_csv() and a.prereq_csv() == b.prereq_csv()
    assert generate(SynthConfig(n_students=150, seed=5)).enrollments_csv() != a.enrollments_csv()


def test_degenerate_process_all_above():
    data = generate(SynthConfig(n_students=100, dag_edges=(), p_prepared=1.0, p_unprepared=1.0, pnp_fraction=0.0))
    assert data.dag == ()
    assert all(r.grade.points >= 3.0 for r in data.dataset.records)


def test_config_validation():
    for bad in (dict(p_prepared=0.3, p_unprepared=0.5), dict(n_departments=0), dict(n_courses=5),
                dict(pnp_fraction=1.5), dict(n_semesters=1)):
        with pytest.raises(ValueError):
            generate(SynthConfig(**bad))
    cfg = SynthConfig.from_mapping({"n_students": "10", "p_prepared": "0.9", "first_semester": "2012:Fall"})
    assert (cfg.n_students, cfg.p_prepared, cfg.first_semester.year) == (10, 0.9, 2012)
    with pytest.raises(ValueError):
        SynthConfig.from_mapping({"colour": "blue"})


def _above_rate_by_readiness(data):
    prereqs = defaultdict(set)
    for p in data.dag:
        prereqs[p.target].add(p.prerequisite)
    counts = {True: [0, 0], False: [0, 0]}
    for s in data.dataset.students:
        passed = set()
        for sem in s.semesters:
            for r in sem.records:
                if r.grade.is_letter:
                    ready = prereqs[r.course] <= passed
                    counts[ready][0] += r.grade.points >= 3.0
                    counts[ready][1] += 1
            passed |= {r.course for r in sem.records if (r.grade.points or 0) >= 3.0 or r.grade.passed}
    return counts[True][0] / counts[True][1], counts[False][0] / counts[False][1]


def test_prepared_students_do_better(default_data):
    ready, unready = _above_rate_by_readiness(default_data)
    assert ready - unready >= 0.3


def test_generated_csv_survives_pipeline(default_data):
    ds = parse_enrollment_csv(default_data.enrollments_csv().encode())
    assert len(ds.records) == len(default_data.dataset.records)
    assert build_vocabulary(ds, 20).n == 60
    assert read_prereq_pairs(default_data.prereq_csv().encode()) == list(default_data.dag)


def test_students_never_repeat_courses(default_data):
    for s in default_data.dataset.students:
        courses = [r.course for sem in s.semesters for r in sem.records]
        assert len(courses) == len(set(courses))
        sems = [sem.semester for sem in s.semesters]
        assert sems == sorted(set(sems))
        assert all(sem.term.name != "SUMMER" for sem in sems)


def test_dag_not_leaked_into_csv(default_data):
    header = default_data.enrollments_csv().splitlines()[0]
    assert "prereq" not in header.lower()


@given(st.integers(0, 10_000), st.integers(1, 25))
def test_planted_graph_shape(seed, n_edges):
    rng = np.random.default_rng(seed)
    courses = make_catalog(SynthConfig(), rng)
    edges = plant_dag(courses, n_edges, rng)
    assert len(edges) == n_edges and len(set(edges)) == n_edges
    _check_dag(courses, edges)
    for p, t in edges:
        assert courses[p].level <= courses[t].level and courses[t].level >= 1


def test_cycle_rejected():
    courses = [Course("Math", 10), Course("Math", 20)]
    with pytest.raises(ValueError):
        _check_dag(courses, [(0, 1), (1, 0)])
    with pytest.raises(ValueError):
        _check_dag([Course("Math", 150), Course("Math", 10)], [(0, 1)])


def test_planted_recall_extremes():
    a, b, c, t = (Course("Math", j) for j in (1, 2, 3, 150))
    dag = [PrereqPair(a, t), PrereqPair(b, t)]
    assert planted_recall({t: [a, b]}, dag) == 1.0
    assert planted_recall({t: [c]}, dag) == 0.0
    assert planted_recall({}, dag) == 0.0
    with pytest.raises(ValueError):
        planted_recall({}, [])


@pytest.mark.parametrize("size", [12, 25, 40])
def test_random_baseline_is_ten_over_c(size):
    pool = [Course("Math", j) for j in range(size)]
    t = Course("Math", 150)
    got = random_recall_baseline({t: pool}, [PrereqPair(pool[3], t)], trials=4000, seed=1)
    assert got == pytest.approx(10 / size, abs=0.03)
