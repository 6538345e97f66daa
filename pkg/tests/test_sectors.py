import numpy as np
import pytest

from qtsector import instrument as inst
from qtsector.sectors import (
    SectorError,
    UndefinedConditionalError,
    WordBudgetError,
    build_sectors,
    conditional_law,
    deformed_instrument,
    identifiability_horizon,
    kappa,
    laws_equal,
    word_distribution,
)
from .conftest import random_state

# [DERIVED] sector counts on the corpus.
N_SECTORS = {"qnd2": 2, "adl": 1, "flat2": 1, "orth2": 2, "block4": 2}


def _words(outcomes, n):
    if n == 0:
        return [()]
    return [w + (a,) for w in _words(outcomes, n - 1) for a in outcomes]


def test_deformed_is_channel_with_unique_state(instruments, structures):
    for name, instr in instruments.items():
        s = structures[name]
        for i in range(s.r):
            d = deformed_instrument(instr, s, i)
            report = inst.validate(d.instrument)
            assert report.passed, (name, i, report.deficit)
            # invariant state of the deformed instrument is the compressed rho_i
            rho = d.state
            assert np.isclose(np.trace(rho).real, 1.0, atol=1e-10)
            img = sum(inst.apply_schrodinger(d.instrument, a, rho)
                      for a in instr.outcomes)
            assert np.abs(img - rho).max() < 1e-9, (name, i)


def test_deformed_law_identity(instruments, structures):
    """Conditional law through E_i equals the deformed instrument's law on
    the compressed conditioned state, all words up to length 4, <= 1e-10."""
    rng = np.random.default_rng(20)
    for name, instr in instruments.items():
        s = structures[name]
        for i in range(s.r):
            d = deformed_instrument(instr, s, i)
            e = s.effects[i]
            for _ in range(4):
                rho = random_state(rng, instr.dim)
                mass = np.trace(rho @ e).real
                if mass < 1e-6:
                    continue
                from qtsector.matcore import psd_power
                e_half = psd_power(e, 0.5)
                cond = d.basis.conj().T @ (e_half @ rho @ e_half) @ d.basis / mass
                for n in range(1, 5):
                    for w in _words(instr.outcomes, n):
                        lhs = conditional_law(instr, s, rho, i, w)
                        rhs = inst.word_probability(d.instrument, cond, w)
                        assert abs(lhs - rhs) < 1e-10, (name, i, w)


def test_conditional_law_undefined(instruments, structures):
    s = structures["qnd2"]
    # no mass on the enclosure spanned by e1 when rho = |0><0| ... pick the
    # effect whose support misses the state.
    rho = np.diag([1.0, 0.0])
    i = int(np.argmin([np.trace(rho @ e).real for e in s.effects]))
    with pytest.raises(UndefinedConditionalError):
        conditional_law(instruments["qnd2"], s, rho, i, ("0",))


def test_laws_equal_witnesses(instruments, structures):
    cmp = laws_equal(instruments["qnd2"], structures["qnd2"], 0, 1)
    assert not cmp.equal and cmp.horizon == 1 and cmp.gap > 0.4
    cmp = laws_equal(instruments["flat2"], structures["flat2"], 0, 1)
    assert cmp.equal
    with pytest.raises(WordBudgetError):
        laws_equal(instruments["qnd2"], structures["qnd2"], 0, 1, l_eq=40)


def test_partitions(decompositions):
    for name, dec in decompositions.items():
        assert dec.n_sectors == N_SECTORS[name], name
        members = sorted(i for m in dec.partition for i in m)
        assert members == list(range(dec.structure.r)), name
        for i in members:
            assert i in dec.partition[dec.sector_of(i)]


def test_sector_effects_povm(decompositions):
    for name, dec in decompositions.items():
        d = dec.sector_effects[0].shape[0]
        assert np.abs(sum(dec.sector_effects) - np.eye(d)).max() < 1e-8, name
        for e in dec.sector_effects:
            inst.check_effect(e)


def test_mixture_reconstruction(instruments, decompositions):
    """For rho a mixture of extreme invariant states, the word distribution
    is the Q-weighted mixture of the sector laws."""
    for name in ("qnd2", "orth2", "block4"):
        instr = instruments[name]
        dec = decompositions[name]
        refs = dec.reference_states()
        weights = np.linspace(1, dec.n_sectors, dec.n_sectors)
        weights /= weights.sum()
        rho = sum(w * r for w, r in zip(weights, refs))
        for n in (1, 2, 3):
            full = word_distribution(instr, rho, n)
            mix = sum(w * word_distribution(instr, r, n)
                      for w, r in zip(weights, refs))
            assert np.abs(full - mix).max() < 1e-10, name
            q = [np.trace(rho @ e).real for e in dec.sector_effects]
            assert np.allclose(q, weights, atol=1e-10)


def test_identifiability_horizon(instruments, decompositions):
    for name, expect in (("qnd2", 1), ("orth2", 1), ("block4", 1)):
        n, diag = identifiability_horizon(instruments[name], decompositions[name])
        assert n == expect, (name, n)
        assert min(diag.values()) > 1e-6
    with pytest.raises(SectorError):
        identifiability_horizon(instruments["flat2"], decompositions["flat2"])


def test_kappa_qnd2_exact(instruments, decompositions):
    # [DERIVED] laws are Bernoulli(0.8) vs Bernoulli(0.3), independent of the
    # state, so kappa(1) = sqrt(0.8*0.3) + sqrt(0.2*0.7) exactly and
    # kappa(n) = kappa(1)**n by the product structure.
    k1_exact = np.sqrt(0.24) + np.sqrt(0.14)
    k1, state, diag = kappa(instruments["qnd2"], decompositions["qnd2"], 1)
    assert abs(k1 - k1_exact) < 1e-9
    assert np.isclose(np.trace(state).real, 1.0, atol=1e-8)
    k2, _, _ = kappa(instruments["qnd2"], decompositions["qnd2"], 2)
    assert abs(k2 - k1_exact ** 2) < 1e-9
    assert k2 <= k1 + 1e-12  # data processing: longer words only help


def test_kappa_orth2_zero(instruments, decompositions):
    # [DERIVED] disjoint supports: one letter separates the laws perfectly.
    k, _, _ = kappa(instruments["orth2"], decompositions["orth2"], 1)
    assert abs(k) < 1e-12


def test_kappa_block4_bounds(instruments, decompositions):
    k1, _, _ = kappa(instruments["block4"], decompositions["block4"], 1)
    # [DERIVED] the pointer-block laws are again Bernoulli(0.8)/Bernoulli(0.3)
    # so the single-letter coefficient is at least the qnd2 value; and it is
    # a Bhattacharyya coefficient, so < 1 with distinct laws.
    assert np.sqrt(0.24) + np.sqrt(0.14) - 1e-9 <= k1 < 1.0
    k2, _, _ = kappa(instruments["block4"], decompositions["block4"], 2)
    assert k2 <= k1 + 1e-9


def test_kappa_requires_two_sectors(instruments, decompositions):
    with pytest.raises(SectorError):
        kappa(instruments["adl"], decompositions["adl"], 1)
    with pytest.raises(SectorError):
        kappa(instruments["qnd2"], decompositions["qnd2"], 0)
