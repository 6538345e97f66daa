import json

import numpy as np
import pytest

from qtsector import instrument as inst
from qtsector.corpus import qnd2
from .conftest import random_state


def test_corpus_validates(instruments):
    for name, instr in instruments.items():
        report = inst.validate(instr)
        assert report.passed, name
        assert report.deficit <= 1e-12, name


def test_scaled_kraus_fails_validation():
    base = qnd2()
    bad = inst.Instrument(dim=2, outcomes=base.outcomes,
                          kraus={a: [1.1 * k for k in base.kraus[a]]
                                 for a in base.outcomes})
    report = inst.validate(bad)
    assert not report.passed
    # [DERIVED] deficit of 1.21 * Id - Id is exactly 0.21
    assert np.isclose(report.deficit, 0.21)
    with pytest.raises(inst.ValidationError):
        bad.validated()


def test_structural_rejections():
    with pytest.raises(inst.ValidationError):
        inst.Instrument(dim=2, outcomes=("0",), kraus={})
    with pytest.raises(inst.ValidationError):
        inst.Instrument(dim=2, outcomes=("0",), kraus={"0": []})
    with pytest.raises(inst.ValidationError):
        inst.Instrument(dim=2, outcomes=("0",),
                        kraus={"0": [np.eye(2)], "1": [np.eye(2)]})
    from qtsector.matcore import DimensionError
    with pytest.raises(DimensionError):
        inst.Instrument(dim=2, outcomes=("0",), kraus={"0": [np.eye(3)]})
    with pytest.raises(inst.UnknownOutcomeError):
        qnd2().kraus_for("z")


def test_duality(random_instruments):
    """tr(Phi*_a(rho) X) == tr(rho Phi_a(X)) for every outcome."""
    rng = np.random.default_rng(3)
    for instr in random_instruments:
        rho = random_state(rng, instr.dim)
        x = rng.standard_normal((instr.dim, instr.dim)) \
            + 1j * rng.standard_normal((instr.dim, instr.dim))
        for a in instr.outcomes:
            lhs = np.trace(inst.apply_schrodinger(instr, a, rho) @ x)
            rhs = np.trace(rho @ inst.apply_heisenberg(instr, a, x))
            assert abs(lhs - rhs) < 1e-12


def test_superoperator_vec_convention(random_instruments):
    for instr in random_instruments[:6]:
        d = instr.dim
        rng = np.random.default_rng(4)
        x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        sh = inst.superoperator_matrix(instr, "heisenberg")
        ss = inst.superoperator_matrix(instr, "schrodinger")
        # column-stacking vec
        vec = lambda m: m.T.reshape(-1)
        phix = sum(inst.apply_heisenberg(instr, a, x) for a in instr.outcomes)
        assert np.allclose(sh @ vec(x), vec(phix), atol=1e-12)
        assert np.allclose(ss, sh.conj().T, atol=1e-12)
        # channel condition in superoperator form: S_h vec(Id) = vec(Id)
        assert np.allclose(sh @ vec(np.eye(d, dtype=complex)),
                           vec(np.eye(d, dtype=complex)), atol=1e-9)
    with pytest.raises(ValueError):
        inst.superoperator_matrix(qnd2(), "nonsense")


def test_word_additivity_and_shift(random_instruments):
    """P(w) = sum_a P(w + a) and sum_a P((a,)) = 1."""
    rng = np.random.default_rng(5)
    for instr in random_instruments:
        rho = random_state(rng, instr.dim)
        assert np.isclose(sum(inst.word_probability(instr, rho, (a,))
                              for a in instr.outcomes), 1.0, atol=1e-10)
        w = (instr.outcomes[0], instr.outcomes[-1])
        total = sum(inst.word_probability(instr, rho, w + (a,))
                    for a in instr.outcomes)
        assert np.isclose(total, inst.word_probability(instr, rho, w), atol=1e-10)
        # prefix additivity the other way round (shift identity)
        total = sum(inst.word_probability(instr, rho, (a,) + w)
                    for a in instr.outcomes)
        ref = sum(inst.word_probability(
            instr, inst.apply_schrodinger(instr, a, rho), w)
            for a in instr.outcomes)
        assert np.isclose(total, ref, atol=1e-10)


def test_word_probability_manual():
    # [DERIVED] qnd2 from diag(0.4, 0.6): P(0) = 0.4*0.8 + 0.6*0.3 = 0.5,
    # P(00) = 0.4*0.64 + 0.6*0.09 = 0.31
    instr = qnd2()
    rho = np.diag([0.4, 0.6])
    assert np.isclose(inst.word_probability(instr, rho, ("0",)), 0.5, atol=1e-14)
    assert np.isclose(inst.word_probability(instr, rho, ("0", "0")), 0.31, atol=1e-14)


def test_check_state_effect():
    inst.check_state(np.eye(2) / 2)
    with pytest.raises(inst.ValidationError):
        inst.check_state(np.diag([0.7, 0.4]))
    with pytest.raises(inst.ValidationError):
        inst.check_state(np.diag([1.5, -0.5]))
    inst.check_effect(np.diag([1.0, 0.0]))
    with pytest.raises(inst.ValidationError):
        inst.check_effect(np.diag([1.2, 0.0]))


def test_json_roundtrip(tmp_path, instruments):
    for name, instr in instruments.items():
        path = tmp_path / f"{name}.json"
        inst.save_instrument(instr, path)
        back = inst.load_instrument(path)
        assert back.dim == instr.dim
        assert back.outcomes == instr.outcomes
        for a in instr.outcomes:
            for k1, k2 in zip(instr.kraus[a], back.kraus[a]):
                assert np.array_equal(k1, k2), f"{name} outcome {a} not bit-exact"


def test_json_malformed(tmp_path):
    with pytest.raises(inst.ValidationError):
        inst.instrument_from_dict({"dim": 2})
    with pytest.raises(inst.ValidationError):
        inst.instrument_from_dict(
            {"dim": 2, "outcomes": ["0"], "kraus": {"0": [[[0, 0]]]}})
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(json.JSONDecodeError):
        inst.load_instrument(path)
