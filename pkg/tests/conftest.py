import numpy as np
import pytest

from qtsector import build_sectors, compute_structure
from qtsector.corpus import CORPUS, corpus_instrument, random_instrument

CORPUS_NAMES = tuple(CORPUS)


@pytest.fixture(scope="session")
def instruments():
    return {name: corpus_instrument(name).validated() for name in CORPUS_NAMES}


@pytest.fixture(scope="session")
def structures(instruments):
    return {name: compute_structure(instr) for name, instr in instruments.items()}


@pytest.fixture(scope="session")
def decompositions(instruments, structures):
    return {name: build_sectors(instr, structures[name])
            for name, instr in instruments.items()}


@pytest.fixture(scope="session")
def random_instruments():
    """A small pool of Haar-random valid instruments, dims 2-4, 2-4 outcomes."""
    out = []
    seed = 0
    for dim in (2, 3, 4):
        for n_out in (2, 3, 4):
            for kpo in (1, 2):
                out.append(random_instrument(dim, n_out, kpo, seed=seed))
                seed += 1
    return out


def random_state(rng, d):
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    m = z @ z.conj().T
    return m / np.trace(m).real
