import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from goalrec.domain import Course, Vocabulary
from goalrec.encode import EncodedSequence, MaskGroup

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_sequence(rng, n, k, T, m=2, p_enrolled=0.6, p_pnp=0.25, label_start=1):
    """A random but internally consistent encoded sequence."""
    w = m + 2
    grades = np.zeros((T, w * n))
    courses = (rng.random((T, n)) < p_enrolled).astype(float)
    courses[:, 0] = 1.0
    masks = np.zeros((T, n), dtype=np.int8)
    for t in range(T):
        for i in np.flatnonzero(courses[t]):
            if rng.random() < p_pnp:
                grades[t, i * w + m + rng.integers(2)] = 1.0
                masks[t, i] = MaskGroup.PASS_NO_PASS
            else:
                grades[t, i * w + rng.integers(m)] = 1.0
                masks[t, i] = MaskGroup.LETTER
    next_courses = np.zeros_like(courses)
    next_courses[:-1] = courses[1:]
    labels = np.zeros_like(grades)
    labels[:-1] = grades[1:]
    label_masks = np.zeros_like(masks)
    label_masks[:-1] = masks[1:]
    labels[: label_start - 1] = 0
    label_masks[: label_start - 1] = 0
    majors = (rng.random((T, k)) < 0.5).astype(float)
    return EncodedSequence("s", grades, next_courses, majors, labels, label_masks)


def perturbed(model, rng, scale=0.3):
    return model.replace_params({k: v + scale * rng.standard_normal(v.shape) for k, v in model.params.items()})


@pytest.fixture
def tiny_vocab():
    courses = (Course("Computer Science", 61), Course("Computer Science", 189), Course("Statistics", 134))
    return Vocabulary(courses, ("Computer Science", "Statistics"))
