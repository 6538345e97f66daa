"""Fixed-point structure of a channel: recurrent subspace, minimal
enclosures, extreme invariant states and absorption effects.

The enclosure finder is a recursive random splitter: on the current
invariant subspace, compute the Heisenberg fixed space of the restricted
instrument; if it is one dimensional the subspace is minimal, otherwise a
seeded random Hermitian fixed point is eigendecomposed and the subspace is
split along its distinct eigenspaces (spectral projectors of fixed points
are again fixed when the restriction carries a faithful invariant state,
which holds inside the recurrent subspace).
"""

from dataclasses import dataclass

import numpy as np

from . import instrument as inst
from .matcore import (
    eig_hermitian,
    hermitize,
    support_basis,
    support_projector,
)

DEFAULT_TOL_FIX = 1e-8
DEFAULT_TOL_NULL = 1e-8
DEFAULT_TOL_SPLIT = 1e-7
MAX_SPLIT_RETRIES = 32


class StructureError(RuntimeError):
    """A computed invariant-structure object violates its defining property."""


class EnclosureSplitError(StructureError):
    """The random splitter failed to separate a reducible subspace."""


def _vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=complex).T.reshape(-1)


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape(d, d).T


def fixed_space(instr: inst.Instrument, picture: str, tol_null: float = DEFAULT_TOL_NULL):
    """Hermitian orthonormal (Hilbert-Schmidt) basis of {X : Phi(X) = X}.

    The fixed space of a CP map in either picture is closed under the
    adjoint, so it admits a basis of Hermitian matrices; we return one.
    """
    d = instr.dim
    s = inst.superoperator_matrix(instr, picture)
    a = s - np.eye(d * d)
    _, sv, vh = np.linalg.svd(a)
    null = [vh[j].conj() for j in range(d * d) if sv[j] <= tol_null]
    # Split each null matrix into Hermitian and anti-Hermitian parts, then
    # orthonormalize over the reals in the Hilbert-Schmidt inner product.
    cands = []
    for v in null:
        x = _unvec(v, d)
        cands.append((x + x.conj().T) / 2)
        cands.append((x - x.conj().T) / 2j)
    basis = []
    for h in cands:
        for b in basis:
            h = h - np.trace(b.conj().T @ h).real * b
        nrm = float(np.linalg.norm(h))
        if nrm > 1e-10:
            basis.append(h / nrm)
    if len(basis) != len(null):
        raise StructureError(
            f"fixed space not closed under adjoint: {len(null)} complex "
            f"dimensions but {len(basis)} Hermitian basis elements")
    return basis


def cesaro_apply(instr: inst.Instrument, picture: str, x: np.ndarray,
                 tol: float = 1e-9, max_avg: int = 400000) -> np.ndarray:
    """Apply the eigenvalue-1 spectral projector of the channel to X.

    This is the Cesaro limit of averaged channel powers (the averaging kills
    peripheral eigenvalues != 1).  Computed from the eigendecomposition of
    the superoperator matrix, verified against the fixed-point residual;
    falls back to explicit power averaging when the spectral route is
    ill-conditioned.
    """
    d = instr.dim
    s = inst.superoperator_matrix(instr, picture)
    x = np.asarray(x, dtype=complex)
    scale = max(1.0, float(np.abs(x).max()))

    out = None
    w, vr = np.linalg.eig(s)
    idx = np.flatnonzero(np.abs(w - 1.0) <= 1e-8)
    wl, vl = np.linalg.eig(s.conj().T)
    idxl = np.flatnonzero(np.abs(wl - 1.0) <= 1e-8)
    if idx.size and idx.size == idxl.size:
        r = vr[:, idx]
        l = vl[:, idxl].conj().T
        m = l @ r
        try:
            out = _unvec(r @ np.linalg.solve(m, l @ _vec(x)), d)
        except np.linalg.LinAlgError:
            out = None
    if out is not None:
        res = np.abs(_unvec(s @ _vec(out), d) - out).max()
        if res <= tol * scale:
            return out

    # Fallback: explicit Cesaro averaging of channel powers.
    cur = _vec(x)
    acc = np.zeros_like(cur)
    n = 0
    while n < max_avg:
        for _ in range(1000):
            cur = s @ cur
            acc += cur
            n += 1
        avg = _unvec(acc / n, d)
        if np.abs(_unvec(s @ _vec(avg), d) - avg).max() <= tol * scale:
            return avg
    raise StructureError(f"Cesaro averaging did not converge in {max_avg} steps")


def recurrent_projector(instr: inst.Instrument, tol_supp: float = 1e-9) -> np.ndarray:
    """Support projector of the maximal-support invariant state.

    Obtained as the support of the Cesaro projection of the chaotic state
    Id/dim, which dominates every invariant state.
    """
    d = instr.dim
    rho_ch = np.eye(d, dtype=complex) / d
    limit = hermitize(cesaro_apply(instr, "schrodinger", rho_ch))
    return support_projector(limit, tol_supp)


def restricted_instrument(instr: inst.Instrument, v: np.ndarray) -> inst.Instrument:
    """Compress an instrument to an enclosure spanned by the columns of V.

    Only valid when range(V) is an enclosure: then every Kraus operator maps
    it into itself and the compressed family is again an instrument.
    """
    kraus = {a: [v.conj().T @ k @ v for k in instr.kraus[a]] for a in instr.outcomes}
    return inst.Instrument(dim=v.shape[1], outcomes=instr.outcomes, kraus=kraus,
                           name=f"{instr.name}|restricted")


def _projector_sort_key(v: np.ndarray):
    p = v @ v.conj().T
    flat = []
    for z in p.reshape(-1):
        flat.append(round(float(z.real), 9))
        flat.append(round(float(z.imag), 9))
    return (v.shape[1], tuple(flat))


def minimal_enclosures(instr: inst.Instrument, split_seed: int = 0,
                       tol_null: float = DEFAULT_TOL_NULL,
                       tol_split: float = DEFAULT_TOL_SPLIT):
    """Isometry bases (columns) of the minimal enclosures, ordered by
    (dimension, lexicographic projector entries) for reproducibility."""
    rng = np.random.default_rng(split_seed)
    v0 = support_basis(recurrent_projector(instr))
    out = []

    def split(v):
        sub = restricted_instrument(instr, v)
        basis = fixed_space(sub, "heisenberg", tol_null)
        if len(basis) == 1:
            out.append(v)
            return
        for _ in range(MAX_SPLIT_RETRIES):
            h = sum(c * b for c, b in zip(rng.standard_normal(len(basis)), basis))
            w, vecs = eig_hermitian(h)
            # Cluster eigenvalues; each distinct eigenspace is an enclosure.
            groups = [[0]]
            for j in range(1, w.size):
                if w[j - 1] - w[j] > tol_split:
                    groups.append([])
                groups[-1].append(j)
            if len(groups) > 1:
                for g in groups:
                    split(v @ vecs[:, g])
                return
        raise EnclosureSplitError(
            f"failed to split a {v.shape[1]}-dimensional reducible subspace "
            f"after {MAX_SPLIT_RETRIES} random draws")

    split(v0)
    out.sort(key=_projector_sort_key)
    return out


def extreme_invariant_states(instr: inst.Instrument, enclosure_bases,
                             tol_null: float = DEFAULT_TOL_NULL):
    """The unique invariant state supported in each minimal enclosure."""
    states = []
    for v in enclosure_bases:
        sub = restricted_instrument(instr, v)
        m = sub.dim
        s = inst.superoperator_matrix(sub, "schrodinger")
        _, sv, vh = np.linalg.svd(s - np.eye(m * m))
        null = [vh[j].conj() for j in range(m * m) if sv[j] <= tol_null]
        if len(null) != 1:
            raise StructureError(
                f"enclosure of dimension {m} has a {len(null)}-dimensional "
                "invariant-state space; it is not minimal")
        sigma = _unvec(null[0], m)
        sigma = sigma / np.trace(sigma)
        w, vecs = eig_hermitian(hermitize(sigma))
        w = np.clip(w, 0.0, None)
        sigma = (vecs * (w / w.sum())) @ vecs.conj().T
        states.append(v @ sigma @ v.conj().T)
    return states


def absorption_effects(instr: inst.Instrument, enclosure_bases,
                       tol_fix: float = DEFAULT_TOL_FIX):
    """Phi-invariant effects E_i = Cesaro limit of the enclosure projectors."""
    effects = []
    for v in enclosure_bases:
        p = v @ v.conj().T
        e = hermitize(cesaro_apply(instr, "heisenberg", p))
        effects.append(inst.check_effect(e, tol=tol_fix))
    total = sum(effects)
    if np.abs(total - np.eye(instr.dim)).max() > tol_fix:
        raise StructureError(
            "absorption effects do not resolve the identity "
            f"(deviation {np.abs(total - np.eye(instr.dim)).max():.3e})")
    return effects


@dataclass
class InvariantStructure:
    """Extreme invariant pairs (rho_i, E_i) plus the subspaces behind them."""

    recurrent: np.ndarray          # projector onto the recurrent subspace
    enclosure_bases: list          # d x m_i isometries
    enclosures: list               # projectors P_i
    states: list                   # rho_i
    effects: list                  # E_i
    lambdas: list                  # E_i = lambda_i P_i + transient block
    residuals: dict

    @property
    def r(self) -> int:
        return len(self.states)

    def to_dict(self):
        from .instrument import _matrix_to_json
        return {
            "r": self.r,
            "recurrent_projector": _matrix_to_json(self.recurrent),
            "enclosures": [_matrix_to_json(p) for p in self.enclosures],
            "states": [_matrix_to_json(s) for s in self.states],
            "effects": [_matrix_to_json(e) for e in self.effects],
            "lambdas": [float(l) for l in self.lambdas],
            "residuals": {k: float(v) for k, v in self.residuals.items()},
        }


def compute_structure(instr: inst.Instrument, split_seed: int = 0,
                      tol_fix: float = DEFAULT_TOL_FIX) -> InvariantStructure:
    """Full invariant-structure pipeline with post-condition checks."""
    bases = minimal_enclosures(instr, split_seed)
    projectors = [v @ v.conj().T for v in bases]
    states = extreme_invariant_states(instr, bases)
    effects = absorption_effects(instr, bases, tol_fix)
    rec = sum(projectors)

    # Post-condition checks; failures here mean a numerical breakdown.
    res = {}
    s_h = inst.superoperator_matrix(instr, "heisenberg")
    s_s = inst.superoperator_matrix(instr, "schrodinger")
    res["state_fix"] = max(
        float(np.abs(_unvec(s_s @ _vec(rho), instr.dim) - rho).max()) for rho in states)
    res["effect_fix"] = max(
        float(np.abs(_unvec(s_h @ _vec(e), instr.dim) - e).max()) for e in effects)
    res["povm"] = float(np.abs(sum(effects) - np.eye(instr.dim)).max())
    if max(res.values()) > tol_fix:
        raise StructureError(f"invariant-structure residuals too large: {res}")

    lambdas = []
    res["supp_inclusion"] = 0.0
    res["proportionality"] = 0.0
    for p, e, v in zip(projectors, effects, bases):
        e_supp = support_projector(e, tol_supp=tol_fix)
        res["supp_inclusion"] = max(
            res["supp_inclusion"],
            float(np.abs(p - e_supp @ p @ e_supp).max()))
        block = v.conj().T @ e @ v
        lam = float(np.trace(block).real) / v.shape[1]
        res["proportionality"] = max(
            res["proportionality"],
            float(np.abs(block - lam * np.eye(v.shape[1])).max()))
        lambdas.append(lam)
    if res["supp_inclusion"] > 1e-6 or res["proportionality"] > 1e-6:
        raise StructureError(f"support/proportionality checks failed: {res}")

    return InvariantStructure(
        recurrent=rec, enclosure_bases=bases, enclosures=projectors,
        states=states, effects=effects, lambdas=lambdas, residuals=res)
