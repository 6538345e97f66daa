"""Instruments: outcome-indexed Kraus families summing to a unital channel.

Conventions (fixed across the whole package):

* Heisenberg picture     Phi_a(X)   = sum_k K_{a,k}^dag X K_{a,k}
* Schroedinger picture   Phi*_a(rho)= sum_k K_{a,k} rho K_{a,k}^dag
* vec is column-stacking, so vec(A X B) = (B^T kron A) vec(X).

The channel condition is Phi(Id) = sum_{a,k} K^dag K = Id.  Instruments
failing validation are rejected, never renormalized.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .matcore import DimensionError, hermitize

DEFAULT_TOL_CHANNEL = 1e-9


class ValidationError(ValueError):
    """Instrument violates the channel condition or is structurally broken."""


class UnknownOutcomeError(KeyError):
    """Outcome label not declared by the instrument."""


@dataclass(frozen=True)
class Instrument:
    """An instrument {Phi_a}_{a in outcomes} given by Kraus operators.

    ``kraus[label]`` is a nonempty list of dim x dim complex matrices.
    Use :func:`validate` / :meth:`Instrument.validated` before trusting one.
    """

    dim: int
    outcomes: tuple
    kraus: dict
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        frozen = {}
        for a in self.outcomes:
            if a not in self.kraus:
                raise ValidationError(f"outcome {a!r} has no Kraus operators")
            mats = tuple(np.asarray(k, dtype=complex) for k in self.kraus[a])
            if not mats:
                raise ValidationError(f"outcome {a!r} has an empty Kraus list")
            for k in mats:
                if k.shape != (self.dim, self.dim):
                    raise DimensionError(
                        f"Kraus operator for outcome {a!r} has shape {k.shape}, "
                        f"expected ({self.dim}, {self.dim})")
                if not np.all(np.isfinite(k.real)) or not np.all(np.isfinite(k.imag)):
                    raise ValidationError(f"non-finite Kraus entry for outcome {a!r}")
            frozen[a] = mats
        extra = set(self.kraus) - set(self.outcomes)
        if extra:
            raise ValidationError(f"Kraus operators for undeclared outcomes: {sorted(map(str, extra))}")
        object.__setattr__(self, "kraus", frozen)

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    def kraus_for(self, a):
        try:
            return self.kraus[a]
        except KeyError:
            raise UnknownOutcomeError(f"unknown outcome {a!r}") from None

    def validated(self, tol_channel: float = DEFAULT_TOL_CHANNEL) -> "Instrument":
        report = validate(self, tol_channel)
        if not report.passed:
            raise ValidationError(
                f"instrument {self.name or '<unnamed>'} fails the channel condition: "
                f"||sum K^dag K - Id||_inf = {report.deficit:.3e} > {tol_channel:.1e}")
        return self


@dataclass
class ValidationReport:
    passed: bool
    deficit: float                 # ||sum_{a,k} K^dag K - Id||_inf
    per_outcome: dict = field(default_factory=dict)  # label -> ||sum_k K^dag K||_inf
    tol_channel: float = DEFAULT_TOL_CHANNEL

    def to_dict(self):
        return {
            "passed": bool(self.passed),
            "deficit": float(self.deficit),
            "per_outcome": {str(a): float(v) for a, v in self.per_outcome.items()},
            "tol_channel": float(self.tol_channel),
        }


def validate(instr: Instrument, tol_channel: float = DEFAULT_TOL_CHANNEL) -> ValidationReport:
    """Check Phi(Id) = Id and report the deficit."""
    total = np.zeros((instr.dim, instr.dim), dtype=complex)
    per_outcome = {}
    for a in instr.outcomes:
        block = sum(k.conj().T @ k for k in instr.kraus[a])
        per_outcome[a] = float(np.abs(block).max())
        total += block
    deficit = float(np.abs(total - np.eye(instr.dim)).max())
    return ValidationReport(deficit <= tol_channel, deficit, per_outcome, tol_channel)


def apply_heisenberg(instr: Instrument, a, x: np.ndarray) -> np.ndarray:
    """Phi_a(X) = sum_k K^dag X K."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (instr.dim, instr.dim):
        raise DimensionError(f"operand shape {x.shape} != ({instr.dim}, {instr.dim})")
    out = np.zeros_like(x)
    for k in instr.kraus_for(a):
        out += k.conj().T @ x @ k
    return out


def apply_schrodinger(instr: Instrument, a, rho: np.ndarray) -> np.ndarray:
    """Phi*_a(rho) = sum_k K rho K^dag."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (instr.dim, instr.dim):
        raise DimensionError(f"operand shape {rho.shape} != ({instr.dim}, {instr.dim})")
    out = np.zeros_like(rho)
    for k in instr.kraus_for(a):
        out += k @ rho @ k.conj().T
    return out


def superoperator_matrix(instr: Instrument, picture: str, a=None) -> np.ndarray:
    """dim^2 x dim^2 matrix S with S vec(X) = vec(Phi(X)) (column stacking).

    With ``a`` given, the matrix of the single map Phi_a; otherwise the full
    channel Phi = sum_a Phi_a.  The Schroedinger matrix is the conjugate
    transpose of the Heisenberg one (Hilbert-Schmidt duality).
    """
    if picture not in ("heisenberg", "schrodinger"):
        raise ValueError(f"unknown picture {picture!r}")
    d = instr.dim
    s = np.zeros((d * d, d * d), dtype=complex)
    labels = instr.outcomes if a is None else (a,)
    for lab in labels:
        for k in instr.kraus_for(lab):
            if picture == "heisenberg":
                # Phi(X) = K^dag X K  ->  (K^T kron K^dag)
                s += np.kron(k.T, k.conj().T)
            else:
                # Phi*(rho) = K rho K^dag  ->  (conj(K) kron K)
                s += np.kron(k.conj(), k)
    return s


def word_probability(instr: Instrument, rho: np.ndarray, word, effect: np.ndarray = None) -> float:
    """tr(rho Phi_{a1} o ... o Phi_{ap}(E)), evaluated right to left.

    With the default E = Id this is the outcome-law probability of the
    cylinder set of ``word``.
    """
    d = instr.dim
    op = np.eye(d, dtype=complex) if effect is None else np.asarray(effect, dtype=complex)
    for a in reversed(tuple(word)):
        op = apply_heisenberg(instr, a, op)
    return float(np.trace(np.asarray(rho, dtype=complex) @ op).real)


def check_state(rho: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Assert rho is Hermitian PSD with unit trace; return it hermitized."""
    rho = hermitize(rho)
    w = np.linalg.eigvalsh(rho)
    if w[0] < -tol:
        raise ValidationError(f"state has eigenvalue {w[0]:.3e}")
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > 1e-10:
        raise ValidationError(f"state trace {tr!r} != 1")
    return rho


def check_effect(e: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Assert 0 <= E <= Id; return it hermitized."""
    e = hermitize(e)
    w = np.linalg.eigvalsh(e)
    if w[0] < -tol or w[-1] > 1 + tol:
        raise ValidationError(f"effect spectrum [{w[0]:.3e}, {w[-1]:.3e}] outside [0, 1]")
    return e


# ---------------------------------------------------------------------------
# JSON file format (see README): {"dim": d, "outcomes": [...], "kraus":
# {label: [matrix, ...]}} with each entry a [re, im] pair of doubles.

def _matrix_to_json(m: np.ndarray):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def _matrix_from_json(rows, dim: int) -> np.ndarray:
    m = np.empty((dim, dim), dtype=complex)
    if len(rows) != dim:
        raise ValidationError(f"matrix has {len(rows)} rows, expected {dim}")
    for i, row in enumerate(rows):
        if len(row) != dim:
            raise ValidationError(f"row {i} has {len(row)} entries, expected {dim}")
        for j, entry in enumerate(row):
            re, im = entry
            m[i, j] = complex(float(re), float(im))
    return m


def instrument_to_dict(instr: Instrument) -> dict:
    return {
        "dim": instr.dim,
        "outcomes": [str(a) for a in instr.outcomes],
        "kraus": {str(a): [_matrix_to_json(k) for k in instr.kraus[a]] for a in instr.outcomes},
    }


def instrument_from_dict(data: dict, name: str = "") -> Instrument:
    try:
        dim = int(data["dim"])
        outcomes = [str(a) for a in data["outcomes"]]
        kraus = {a: [_matrix_from_json(k, dim) for k in data["kraus"][a]] for a in outcomes}
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed instrument data: {exc}") from exc
    return Instrument(dim=dim, outcomes=tuple(outcomes), kraus=kraus, name=name)


def load_instrument(path) -> Instrument:
    with open(path) as fh:
        data = json.load(fh)
    return instrument_from_dict(data, name=str(path))


def save_instrument(instr: Instrument, path):
    with open(path, "w") as fh:
        json.dump(instrument_to_dict(instr), fh, indent=1, sort_keys=True)
        fh.write("\n")
