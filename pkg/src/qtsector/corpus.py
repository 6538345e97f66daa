"""Bundled example instruments, used as fixtures and documentation.

* ``qnd2``   two pointer states measured without disturbance; outcome 0 has
             probability 0.8 on the first pointer and 0.3 on the second.
* ``adl``    leaky two-level system; everything relaxes to the ground state,
             which is the unique invariant state.
* ``flat2``  two scalar Kraus multiples of the identity; every state is
             invariant and all enclosures share one outcome law (one sector).
* ``orth2``  projective readout with disjoint outcome supports; a single
             letter distinguishes the two sectors.
* ``block4`` two pointer blocks plus a two-dimensional transient subspace
             that leaks into both, giving absorption effects with
             nontrivial transient diagonals.
"""

import numpy as np

from .instrument import Instrument

_S = np.sqrt


def qnd2() -> Instrument:
    return Instrument(
        dim=2, outcomes=("0", "1"),
        kraus={"0": [np.diag([_S(0.8), _S(0.3)])],
               "1": [np.diag([_S(0.2), _S(0.7)])]},
        name="qnd2")


def adl() -> Instrument:
    return Instrument(
        dim=2, outcomes=("0", "1"),
        kraus={"0": [np.array([[1.0, 0.0], [0.0, _S(0.5)]])],
               "1": [np.array([[0.0, _S(0.5)], [0.0, 0.0]])]},
        name="adl")


def flat2() -> Instrument:
    return Instrument(
        dim=2, outcomes=("0", "1"),
        kraus={"0": [_S(0.8) * np.eye(2)],
               "1": [_S(0.2) * np.eye(2)]},
        name="flat2")


def orth2() -> Instrument:
    return Instrument(
        dim=2, outcomes=("0", "1"),
        kraus={"0": [np.diag([1.0, 0.0])],
               "1": [np.diag([0.0, 1.0])]},
        name="orth2")


def block4() -> Instrument:
    """Pointer blocks span{e0}, span{e1}; e2 and e3 are transient.

    Jump operators are kept in separate Kraus terms so no two nonzero
    columns share a row and the channel condition holds exactly.  Per step
    e2 stays with probability 0.5 and feeds e0/e1 with 0.3/0.2; e3 stays
    with 0.6 and feeds with 0.15/0.25.  The absorption effects therefore
    have transient diagonals (0.6, 0.375) and (0.4, 0.625).
    """
    d0 = np.diag([_S(0.8), _S(0.3), _S(0.4), _S(0.25)])
    j02 = np.zeros((4, 4)); j02[0, 2] = _S(0.3)
    j03 = np.zeros((4, 4)); j03[0, 3] = _S(0.15)
    d1 = np.diag([_S(0.2), _S(0.7), _S(0.1), _S(0.35)])
    j12 = np.zeros((4, 4)); j12[1, 2] = _S(0.2)
    j13 = np.zeros((4, 4)); j13[1, 3] = _S(0.25)
    return Instrument(
        dim=4, outcomes=("0", "1"),
        kraus={"0": [d0, j02, j03], "1": [d1, j12, j13]},
        name="block4")


CORPUS = {
    "qnd2": qnd2,
    "adl": adl,
    "flat2": flat2,
    "orth2": orth2,
    "block4": block4,
}


def corpus_instrument(name: str) -> Instrument:
    return CORPUS[name]()


def random_instrument(dim: int, n_outcomes: int, kraus_per_outcome: int = 1,
                      seed: int = 0, name: str = "") -> Instrument:
    """Haar-random valid instrument: a random isometry split into blocks.

    The QR factor of a Gaussian matrix gives stacked operators whose
    squared column norms sum to 1 exactly, i.e. sum K^dag K = Id.
    """
    rng = np.random.default_rng(seed)
    total = n_outcomes * kraus_per_outcome
    g = rng.standard_normal((total * dim, dim)) + 1j * rng.standard_normal((total * dim, dim))
    q, _ = np.linalg.qr(g)
    blocks = [q[k * dim:(k + 1) * dim] for k in range(total)]
    outcomes = tuple(str(a) for a in range(n_outcomes))
    kraus = {outcomes[a]: blocks[a * kraus_per_outcome:(a + 1) * kraus_per_outcome]
             for a in range(n_outcomes)}
    return Instrument(dim=dim, outcomes=outcomes, kraus=kraus,
                      name=name or f"random-{dim}x{n_outcomes}-{seed}")
