"""Sectors: grouping of extreme invariant pairs by outcome-law equivalence,
deformed instruments, conditional laws, and the identifiability constants
(horizon N and Bhattacharyya contraction coefficient kappa).

A sector is an equivalence class alpha of indices i whose extreme invariant
states induce the same outcome law; it carries the effect
E_alpha = sum_{i in alpha} E_i.  The deformed instrument for index i is the
conjugation of the original Kraus family by E_i^{+-1/2} compressed onto
supp E_i; it is a channel there with the (compressed) rho_i as its unique
invariant state, and evaluates the conditional law of index i exactly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import instrument as inst
from .invariant import InvariantStructure
from .matcore import psd_power, support_basis

DEFAULT_TOL_LAW = 1e-6
DEFAULT_TOL_COND = 1e-12
WORD_BUDGET = 1_000_000


class SectorError(RuntimeError):
    pass


class UndefinedConditionalError(SectorError):
    """Conditioning mass tr(rho E) is below tolerance."""


class WordBudgetError(SectorError):
    """Requested word enumeration exceeds the combinatorial budget."""


@dataclass
class DeformedInstrument:
    """Instrument on supp E_i together with the compression isometry."""

    instrument: inst.Instrument
    basis: np.ndarray              # d x m isometry onto supp E_i
    state: np.ndarray              # compressed rho_i (unique invariant state)


def deformed_instrument(instr: inst.Instrument, structure: InvariantStructure,
                        i: int, tol_supp: float = 1e-9) -> DeformedInstrument:
    """Build the deformed instrument for extreme pair i.

    Kraus operators are E^{1/2} K E^{-1/2} (Penrose inverse) compressed onto
    an orthonormal eigenbasis of supp E_i.  The compressed instrument is
    validated and its Schroedinger eigenvalue-1 multiplicity checked to be 1.
    """
    e = structure.effects[i]
    e_half = psd_power(e, 0.5, tol_supp)
    e_neg = psd_power(e, -0.5, tol_supp)
    u = support_basis(e, tol_supp)
    kraus = {a: [u.conj().T @ (e_half @ k @ e_neg) @ u for k in instr.kraus[a]]
             for a in instr.outcomes}
    sub = inst.Instrument(dim=u.shape[1], outcomes=instr.outcomes, kraus=kraus,
                          name=f"{instr.name}^({i})").validated()
    s = inst.superoperator_matrix(sub, "schrodinger")
    sv = np.linalg.svd(s - np.eye(sub.dim ** 2), compute_uv=False)
    mult = int(np.count_nonzero(sv <= 1e-8))
    if mult != 1:
        raise SectorError(
            f"deformed instrument {i} has invariant-state multiplicity {mult}; "
            "upstream enclosure decomposition is wrong")
    rho_d = u.conj().T @ structure.states[i] @ u
    return DeformedInstrument(instrument=sub, basis=u, state=rho_d)


def sector_deformed_instrument(instr: inst.Instrument, effect: np.ndarray,
                               tol_supp: float = 1e-9) -> DeformedInstrument:
    """Deformed instrument of a Phi-invariant effect (e.g. a sector's E_alpha).

    Same construction as :func:`deformed_instrument` but for an arbitrary
    invariant effect; the ``state`` field holds the compressed conditioned
    chaotic state E/tr(E), whose deformed law is the chaotic conditional law
    of the sector.  The invariant state need not be unique here (a sector
    may contain several enclosures), so no multiplicity check.
    """
    e = np.asarray(effect, dtype=complex)
    e_half = psd_power(e, 0.5, tol_supp)
    e_neg = psd_power(e, -0.5, tol_supp)
    u = support_basis(e, tol_supp)
    kraus = {a: [u.conj().T @ (e_half @ k @ e_neg) @ u for k in instr.kraus[a]]
             for a in instr.outcomes}
    sub = inst.Instrument(dim=u.shape[1], outcomes=instr.outcomes, kraus=kraus,
                          name=f"{instr.name}^(sector)").validated()
    chi = u.conj().T @ e @ u / float(np.trace(e).real)
    return DeformedInstrument(instrument=sub, basis=u, state=chi)


def conditional_law(instr: inst.Instrument, structure: InvariantStructure,
                    rho: np.ndarray, i: int, word,
                    tol_cond: float = DEFAULT_TOL_COND) -> float:
    """P_{rho,i}(word) = tr(rho Phi_word(E_i)) / tr(rho E_i)."""
    e = structure.effects[i]
    mass = float(np.trace(np.asarray(rho, dtype=complex) @ e).real)
    if mass <= tol_cond:
        raise UndefinedConditionalError(
            f"tr(rho E_{i}) = {mass:.3e} <= {tol_cond:.1e}")
    return inst.word_probability(instr, rho, word, e) / mass


def _word_effect_ladder(instr: inst.Instrument, effect: np.ndarray, n: int):
    """All Heisenberg word operators Phi_{a1..an}(E) for words of length n.

    Returned as an array of shape (|A|**n, d, d); the first letter is the
    most significant digit of the word index.
    """
    na = instr.n_outcomes
    if na ** n > WORD_BUDGET:
        raise WordBudgetError(f"{na}**{n} words exceed the enumeration budget")
    level = np.asarray(effect, dtype=complex)[None, :, :]
    for _ in range(n):
        nxt = np.empty((na * level.shape[0], instr.dim, instr.dim), dtype=complex)
        for ia, a in enumerate(instr.outcomes):
            for r in range(level.shape[0]):
                nxt[ia * level.shape[0] + r] = inst.apply_heisenberg(instr, a, level[r])
        level = nxt
    return level


def word_distribution(instr: inst.Instrument, rho: np.ndarray, n: int,
                      effect: np.ndarray = None) -> np.ndarray:
    """Vector of tr(rho Phi_word(E)) over all words of length n."""
    e = np.eye(instr.dim, dtype=complex) if effect is None else effect
    ladder = _word_effect_ladder(instr, e, n)
    rho = np.asarray(rho, dtype=complex)
    return np.einsum("wij,ji->w", ladder, rho).real


@dataclass
class LawComparison:
    equal: bool
    witness: tuple = None          # first violating word
    gap: float = 0.0
    horizon: int = 0


def laws_equal(instr: inst.Instrument, structure: InvariantStructure,
               i: int, j: int, l_eq: int = None,
               tol_law: float = DEFAULT_TOL_LAW) -> LawComparison:
    """Decide P_{rho_i} = P_{rho_j} by comparing all words up to length l_eq.

    Both laws are evaluated through the deformed instruments (numerically
    stable: no pseudo-inverse factors survive).  The default horizon
    d_i^2 + d_j^2 bounds the linear memory of the word-probability
    recursion.  Breadth-first with early exit on the first violating word.
    """
    di = deformed_instrument(instr, structure, i)
    dj = deformed_instrument(instr, structure, j)
    if l_eq is None:
        l_eq = di.instrument.dim ** 2 + dj.instrument.dim ** 2
    na = instr.n_outcomes
    if na ** l_eq > WORD_BUDGET:
        raise WordBudgetError(
            f"{na}**{l_eq} words exceed the enumeration budget; "
            "pass an explicit smaller l_eq")
    # Propagate unnormalized Schroedinger states per word; the branch
    # probability is the trace.
    branches = [((), di.state, dj.state)]
    for _ in range(l_eq):
        nxt = []
        for word, si, sj in branches:
            for a in instr.outcomes:
                ti = inst.apply_schrodinger(di.instrument, a, si)
                tj = inst.apply_schrodinger(dj.instrument, a, sj)
                pi = float(np.trace(ti).real)
                pj = float(np.trace(tj).real)
                if abs(pi - pj) > tol_law:
                    return LawComparison(False, word + (a,), abs(pi - pj), len(word) + 1)
                if pi > 1e-18 or pj > 1e-18:
                    nxt.append((word + (a,), ti, tj))
        branches = nxt
    return LawComparison(True, None, 0.0, l_eq)


@dataclass
class SectorDecomposition:
    structure: InvariantStructure
    partition: tuple               # tuple of tuples of enclosure indices
    sector_effects: list           # E_alpha, same order as partition
    deformed: list                 # DeformedInstrument per enclosure index i
    witnesses: dict = field(default_factory=dict)  # (i, j) -> LawComparison
    horizon: int = None
    kappa: float = None
    kappa_state: np.ndarray = None

    @property
    def n_sectors(self) -> int:
        return len(self.partition)

    def sector_of(self, i: int) -> int:
        for a, members in enumerate(self.partition):
            if i in members:
                return a
        raise SectorError(f"enclosure index {i} not in the partition")

    def reference_states(self):
        """One extreme invariant state per sector (defines P_alpha)."""
        return [self.structure.states[members[0]] for members in self.partition]

    def to_dict(self):
        from .instrument import _matrix_to_json
        d = {
            "partition": [list(map(int, members)) for members in self.partition],
            "sector_effects": [_matrix_to_json(e) for e in self.sector_effects],
            "witnesses": {
                f"{i},{j}": {"word": list(c.witness) if c.witness else None,
                             "gap": float(c.gap), "equal": bool(c.equal)}
                for (i, j), c in sorted(self.witnesses.items())
            },
            "horizon": self.horizon,
            "kappa": self.kappa,
        }
        if self.kappa_state is not None:
            d["kappa_state"] = _matrix_to_json(self.kappa_state)
        return d


def build_sectors(instr: inst.Instrument, structure: InvariantStructure,
                  l_eq: int = None, tol_law: float = DEFAULT_TOL_LAW) -> SectorDecomposition:
    """Partition {1..r} into sectors and assemble their effects.

    Pairwise law comparisons feed a union-find; the resulting partition is
    cross-checked for transitivity (an intransitive triple at the tolerance
    boundary is a hard error, reported with its witnesses).
    """
    r = structure.r
    parent = list(range(r))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    comparisons = {}
    for i in range(r):
        for j in range(i + 1, r):
            cmp = laws_equal(instr, structure, i, j, l_eq, tol_law)
            comparisons[(i, j)] = cmp
            if cmp.equal:
                parent[find(i)] = find(j)

    classes = {}
    for i in range(r):
        classes.setdefault(find(i), []).append(i)
    partition = tuple(tuple(sorted(m)) for m in
                      sorted(classes.values(), key=lambda m: min(m)))

    for members in partition:
        for i in members:
            for j in members:
                if i < j and not comparisons[(i, j)].equal:
                    c = comparisons[(i, j)]
                    raise SectorError(
                        f"intransitive law equivalence: {i} and {j} merged "
                        f"through the partition but differ on word {c.witness} "
                        f"by {c.gap:.3e}")

    effects = [sum(structure.effects[i] for i in members) for members in partition]
    deformed = [deformed_instrument(instr, structure, i) for i in range(r)]
    return SectorDecomposition(structure=structure, partition=partition,
                               sector_effects=effects, deformed=deformed,
                               witnesses=comparisons)


def _sector_search_states(decomp: SectorDecomposition, alpha: int,
                          samples: int, rng) -> list:
    """States with mass in sector alpha: extremes, the maximally mixed state
    of the sector subspace, and Haar-random pure states inside it."""
    structure = decomp.structure
    members = decomp.partition[alpha]
    cols = np.hstack([support_basis(structure.states[i]) for i in members])
    states = [structure.states[i] for i in members]
    states.append(cols @ cols.conj().T / cols.shape[1])
    for _ in range(samples):
        z = rng.standard_normal(cols.shape[1]) + 1j * rng.standard_normal(cols.shape[1])
        psi = cols @ (z / np.linalg.norm(z))
        states.append(np.outer(psi, psi.conj()))
    return states


def identifiability_horizon(instr: inst.Instrument, decomp: SectorDecomposition,
                            n_max: int = 8, samples: int = 4, seed: int = 0,
                            tol_law: float = DEFAULT_TOL_LAW):
    """Smallest n <= n_max at which every sector pair is distinguished.

    For each pair alpha != beta the minimum over a search ensemble of state
    pairs of the max word-probability gap at length n must exceed tol_law.
    Returns (N, diagnostics); N is None when the search is inconclusive
    (explicitly NOT a disproof).
    """
    if decomp.n_sectors < 2:
        raise SectorError("identifiability horizon requires at least 2 sectors")
    rng = np.random.default_rng(seed)
    ensembles = [_sector_search_states(decomp, a, samples, rng)
                 for a in range(decomp.n_sectors)]
    masses = [[float(np.trace(s @ decomp.sector_effects[a]).real) for s in ens]
              for a, ens in enumerate(ensembles)]

    diagnostics = {}
    for n in range(1, n_max + 1):
        ladders = [_word_effect_ladder(instr, e, n) for e in decomp.sector_effects]
        ok = True
        for a in range(decomp.n_sectors):
            for b in range(a + 1, decomp.n_sectors):
                worst = np.inf
                for sa, ma in zip(ensembles[a], masses[a]):
                    pa = np.einsum("wij,ji->w", ladders[a], sa).real / ma
                    for sb, mb in zip(ensembles[b], masses[b]):
                        pb = np.einsum("wij,ji->w", ladders[b], sb).real / mb
                        worst = min(worst, float(np.abs(pa - pb).max()))
                diagnostics[(a, b, n)] = worst
                if worst <= tol_law:
                    ok = False
        if ok:
            return n, diagnostics
    return None, diagnostics


def _bhattacharyya(rho, ladder_a, ladder_b, e_a, e_b):
    ma = float(np.trace(rho @ e_a).real)
    mb = float(np.trace(rho @ e_b).real)
    if ma <= 0 or mb <= 0:
        return 0.0
    pa = np.clip(np.einsum("wij,ji->w", ladder_a, rho).real / ma, 0.0, None)
    pb = np.clip(np.einsum("wij,ji->w", ladder_b, rho).real / mb, 0.0, None)
    return float(np.sqrt(pa * pb).sum())


def kappa(instr: inst.Instrument, decomp: SectorDecomposition, n: int,
          restarts: int = 8, seed: int = 0, samples: int = 6):
    """Lower-bound estimate of the worst-case Bhattacharyya coefficient

        kappa = sup_{alpha != beta} sup_rho sum_words sqrt(P_{rho,alpha} P_{rho,beta})

    over words of length n.  Multi-start search: candidate states plus
    coordinate ascent on mixture weights toward dictionary vertices.
    Returns (kappa_hat, argmax state, diagnostics).
    """
    if decomp.n_sectors < 2:
        raise SectorError("kappa requires at least 2 sectors")
    if n < 1:
        raise SectorError("kappa requires n >= 1")
    rng = np.random.default_rng(seed)
    d = instr.dim
    best = (-1.0, None)
    diagnostics = {}
    for a in range(decomp.n_sectors):
        ladder_a = _word_effect_ladder(instr, decomp.sector_effects[a], n)
        for b in range(a + 1, decomp.n_sectors):
            ladder_b = _word_effect_ladder(instr, decomp.sector_effects[b], n)
            e_a, e_b = decomp.sector_effects[a], decomp.sector_effects[b]

            def objective(rho):
                return _bhattacharyya(rho, ladder_a, ladder_b, e_a, e_b)

            pair_best = (-1.0, None)
            for _ in range(restarts):
                verts = _sector_search_states(decomp, a, samples, rng) \
                    + _sector_search_states(decomp, b, samples, rng)
                for _ in range(2):
                    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
                    m = z @ z.conj().T
                    verts.append(m / np.trace(m).real)
                rho = sum(verts) / len(verts)
                val = objective(rho)
                # Frank-Wolfe style ascent: move toward the best vertex.
                for _ in range(40):
                    improved = False
                    for v in verts:
                        res = minimize_scalar(
                            lambda t: -objective((1 - t) * rho + t * v),
                            bounds=(0.0, 1.0), method="bounded",
                            options={"xatol": 1e-6})
                        if -res.fun > val + 1e-12:
                            rho = (1 - res.x) * rho + res.x * v
                            val = -res.fun
                            improved = True
                    if not improved:
                        break
                for v in verts:
                    vv = objective(v)
                    if vv > val:
                        rho, val = v, vv
                if val > pair_best[0]:
                    pair_best = (val, rho)
            diagnostics[(a, b)] = pair_best[0]
            if pair_best[0] > best[0]:
                best = pair_best
    return best[0], best[1], diagnostics
