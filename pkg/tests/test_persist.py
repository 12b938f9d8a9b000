import struct

import numpy as np
import pytest

from conftest import perturbed, random_sequence
from goalrec.domain import FULL_LETTERS, Course, Vocabulary
from goalrec.encode import ModelKind, Threshold
from goalrec.net import init_params, predict_batch
from goalrec.persist import (MAGIC, BadMagicError, DimOverflowError, TruncatedArtifactError, VersionMismatchError,
                             dumps, load_model, loads, save_model)


def _vocab(n=4, letters=None):
    courses = tuple(Course("Math", j, suffix="A" if j == 2 else "", prefix="C" if j == 3 else "")
                    for j in range(1, n + 1))
    return Vocabulary(courses, ("Math", "Physics"), letters or ("above", "below"))


@pytest.mark.parametrize("kind", list(ModelKind))
def test_round_trip_is_bit_exact(tmp_path, kind):
    rng = np.random.default_rng(int(kind))
    model = perturbed(init_params(kind, 4, 2, 2, d=3, threshold=Threshold.A), rng)
    vocab = _vocab()
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    save_model(model, vocab, a)
    loaded, lvocab = load_model(a)
    save_model(loaded, lvocab, b)
    assert a.read_bytes() == b.read_bytes()
    assert lvocab == vocab and [c.catalog_number for c in lvocab.courses] == ["1", "2A", "C3", "4"]
    assert loaded.kind == model.kind and loaded.dims == model.dims and loaded.threshold is Threshold.A
    for name in model.params:
        assert np.array_equal(loaded.params[name], model.params[name])


def test_loaded_model_predicts_identically(tmp_path):
    rng = np.random.default_rng(0)
    model = perturbed(init_params(ModelKind.MODEL3, 4, 2, 2, d=5), rng)
    save_model(model, _vocab(), tmp_path / "m.bin")
    loaded, _ = load_model(tmp_path / "m.bin")
    seqs = [random_sequence(rng, 4, 2, int(rng.integers(1, 6))) for _ in range(100)]
    for p, q in zip(predict_batch(model, seqs), predict_batch(loaded, seqs)):
        assert np.array_equal(p, q)


def test_full_letter_vocabulary():
    model = init_params(ModelKind.MODEL1, 4, 5, 2, d=2)
    _, vocab = loads(dumps(model, _vocab(letters=FULL_LETTERS)))
    assert vocab.letter_categories == FULL_LETTERS


def _blob():
    return dumps(init_params(ModelKind.MODEL2, 4, 2, 2, d=3), _vocab())


def test_bad_magic():
    with pytest.raises(BadMagicError):
        loads(b"XXXXX" + _blob()[5:])


def test_version_mismatch():
    blob = _blob()
    with pytest.raises(VersionMismatchError):
        loads(MAGIC + struct.pack("<I", 99) + blob[9:])


@pytest.mark.parametrize("cut", [3, 9, 20, 60, -1])
def test_truncation(cut):
    with pytest.raises(TruncatedArtifactError):
        loads(_blob()[:cut])


def test_dim_overflow():
    blob = bytearray(_blob())
    blob[11:15] = struct.pack("<I", 2**31)  # n
    with pytest.raises(DimOverflowError):
        loads(bytes(blob))


def test_errors_are_distinct():
    kinds = {BadMagicError, VersionMismatchError, TruncatedArtifactError, DimOverflowError}
    assert len(kinds) == 4 and not any(issubclass(a, b) for a in kinds for b in kinds if a is not b)


def test_mismatched_vocabulary_rejected():
    with pytest.raises(ValueError):
        dumps(init_params(ModelKind.MODEL1, 3, 2, 2, d=2), _vocab())


def test_atomic_save_leaves_no_temp_files(tmp_path):
    save_model(init_params(ModelKind.MODEL1, 4, 2, 2, d=2), _vocab(), tmp_path / "m.bin")
    assert [p.name for p in tmp_path.iterdir()] == ["m.bin"]
