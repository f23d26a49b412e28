"""Dense linear algebra for few-qubit density matrices.

Pauli algebra, tensor products, Born-rule outcome distributions, sampling and
Pauli-component state reconstruction.  Everything is plain ``complex128``
numpy; the systems of interest have at most four subsystems.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, InvalidModelError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
PAULI_PSD_FLOOR = -1e-6

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
for _m in _PAULI.values():
    _m.setflags(write=False)


def pauli(label: str) -> np.ndarray:
    """Single Pauli matrix (``I``, ``X``, ``Y`` or ``Z``) or a tensor string like ``"XYY"``."""
    if not label:
        raise DomainError("empty Pauli label")
    try:
        mats = [_PAULI[c] for c in label.upper()]
    except KeyError as exc:
        raise DomainError(f"unknown Pauli label {label!r}") from exc
    return kron(mats)


def kron(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Tensor product of a sequence of square matrices, left to right."""
    if len(mats) == 0:
        raise DomainError("kron of an empty list")
    return reduce(np.kron, [np.asarray(m, dtype=complex) for m in mats])


def hermitian_deviation(a: np.ndarray) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def expectation(rho, op: np.ndarray) -> float:
    """Tr[rho op] for Hermitian ``op``; the imaginary residue must be < 1e-10."""
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    op = np.asarray(op)
    if r.shape != op.shape:
        raise DomainError(f"dimension mismatch: state {r.shape} vs operator {op.shape}")
    val = np.einsum("ij,ji->", r, op)
    if abs(val.imag) > 1e-10:
        raise InvalidModelError(f"expectation has imaginary part {val.imag:.3e}; operator not Hermitian?")
    return float(val.real)


def operator_norm(h: np.ndarray) -> float:
    """Largest absolute eigenvalue of a Hermitian matrix."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DomainError("operator_norm needs a square matrix")
    if hermitian_deviation(h) > 1e-10:
        raise InvalidModelError("operator_norm needs a Hermitian matrix")
    return float(np.max(np.abs(np.linalg.eigvalsh(h))))


def ket(bits: str) -> np.ndarray:
    """Computational basis vector for a bit string, e.g. ``ket("010")``."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


def projector(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    return np.outer(vec, vec.conj())


def ghz_vector(m: int = 3, sign: int = 1) -> np.ndarray:
    """(|0...0> + sign |1...1>)/sqrt(2)."""
    return (ket("0" * m) + sign * ket("1" * m)) / np.sqrt(2)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A validated density matrix.

    The stored array is read-only.  Construct with ``validate=False`` only for
    matrices produced internally by trace- and positivity-preserving maps.
    """

    matrix: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidModelError("density matrix must be square")
        if self.validate:
            dev = hermitian_deviation(m)
            if dev > HERMITIAN_TOL:
                raise InvalidModelError(f"density matrix not Hermitian (deviation {dev:.2e})")
            tr = np.trace(m).real
            if abs(tr - 1.0) > TRACE_TOL:
                raise InvalidModelError(f"density matrix trace {tr!r} != 1")
            lam = np.linalg.eigvalsh(m)[0]
            if lam < -PSD_TOL:
                raise InvalidModelError(f"density matrix has negative eigenvalue {lam:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_vector(cls, vec) -> "DensityMatrix":
        return cls(projector(vec))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def __eq__(self, other):
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return self.matrix.shape == other.matrix.shape and bool(np.array_equal(self.matrix, other.matrix))

    __hash__ = None


def project_to_psd(matrix: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to zero and renormalize the trace."""
    m = (np.asarray(matrix, dtype=complex) + np.asarray(matrix, dtype=complex).conj().T) / 2
    lam, vec = np.linalg.eigh(m)
    lam = np.clip(lam, 0.0, None)
    out = (vec * lam) @ vec.conj().T
    out = (out + out.conj().T) / 2
    return out / np.trace(out).real


# -- Pauli-component states --------------------------------------------------


def pauli_reconstruction(components: Iterable[tuple[str, float]]) -> np.ndarray:
    """rho = 2^-m sum_M v_M M over the listed Pauli strings (unlisted are zero).

    Returns the raw Hermitian matrix without any positivity check.
    """
    comps = [(str(lbl).upper(), float(val)) for lbl, val in components]
    if not comps:
        raise InvalidModelError("no Pauli components given")
    m = len(comps[0][0])
    seen = set()
    for lbl, val in comps:
        if len(lbl) != m:
            raise InvalidModelError(f"Pauli string {lbl!r} has length != {m}")
        if lbl in seen:
            raise InvalidModelError(f"duplicate Pauli component {lbl!r}")
        seen.add(lbl)
        if abs(val) > 1.0 + 1e-12:
            raise InvalidModelError(f"component {lbl} = {val} exceeds 1 in magnitude")
    identity = "I" * m
    ident = dict(comps).get(identity)
    if ident is None or abs(ident - 1.0) > 1e-12:
        raise InvalidModelError(f"component {identity} must be present and equal to 1")
    rho = sum(val * pauli(lbl) for lbl, val in comps)
    return rho / 2**m


def state_from_pauli_components(components: Iterable[tuple[str, float]]) -> DensityMatrix:
    """Build a state from its Pauli expansion.

    Published component tables are rounded, so a slightly negative spectrum is
    tolerated down to -1e-6; such matrices are projected onto the PSD cone
    (eigenvalue clipping plus renormalization).  Anything more negative is
    rejected.
    """
    raw = pauli_reconstruction(components)
    lam = float(np.linalg.eigvalsh(raw)[0])
    if lam < PAULI_PSD_FLOOR:
        raise InvalidModelError(
            f"Pauli components do not describe a state: minimum eigenvalue {lam:.3e} < {PAULI_PSD_FLOOR:g}"
        )
    if lam < 0:
        raw = project_to_psd(raw)
    return DensityMatrix(raw)


def pauli_components(rho, labels: Iterable[str]) -> dict[str, float]:
    """Tr[rho M] for each Pauli string M in ``labels``."""
    return {lbl: expectation(rho, pauli(lbl)) for lbl in labels}


def all_pauli_labels(m: int) -> list[str]:
    return ["".join(p) for p in itertools.product("IXYZ", repeat=m)]


# -- Born rule ---------------------------------------------------------------


def _born_subscripts(m: int) -> str:
    letters = iter(string.ascii_letters)
    rows = [next(letters) for _ in range(m)]
    cols = [next(letters) for _ in range(m)]
    outs = [next(letters) for _ in range(m)]
    lhs = ["..." + "".join(rows) + "".join(cols)]
    lhs += [f"...{outs[j]}{cols[j]}{rows[j]}" for j in range(m)]
    return ",".join(lhs) + "->..." + "".join(outs)


def joint_probabilities(rho: np.ndarray, local_elements: Sequence[np.ndarray]) -> np.ndarray:
    """Born probabilities Tr[rho (P_a1 x ... x P_am)] for every outcome tuple.

    ``rho`` has shape ``(..., D, D)``; ``local_elements[j]`` has shape
    ``(..., K_j, d_j, d_j)`` holding the POVM elements of subsystem ``j``.
    Leading batch dimensions broadcast.  The result has shape
    ``(..., K_1, ..., K_m)`` and is real.  The joint elements are never formed.
    """
    rho = np.asarray(rho)
    dims = [e.shape[-1] for e in local_elements]
    D = int(np.prod(dims))
    if rho.shape[-1] != D or rho.shape[-2] != D:
        raise DomainError(f"state dimension {rho.shape[-1]} != product of subsystem dims {D}")
    tens = rho.reshape(rho.shape[:-2] + tuple(dims) + tuple(dims))
    out = np.einsum(_born_subscripts(len(dims)), tens, *local_elements, optimize=True)
    return out.real


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probabilities over joint outcome vectors.

    ``outcomes`` is an ``(K, m)`` array of outcome values in lexicographic
    order of the per-subsystem outcome lists; ``probabilities`` has length K.
    """

    outcomes: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if np.any(p < -1e-12):
            raise InvalidModelError(f"negative probability {p.min():.3e}")
        p = np.clip(p, 0.0, None)
        if abs(p.sum() - 1.0) > 1e-10:
            raise InvalidModelError(f"probabilities sum to {p.sum()!r}")
        out = np.asarray(self.outcomes, dtype=float)
        if out.shape[0] != p.shape[0]:
            raise InvalidModelError("outcome and probability lists differ in length")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "outcomes", out)

    def entries(self) -> list[tuple[tuple[float, ...], float]]:
        return [(tuple(a), float(q)) for a, q in zip(self.outcomes, self.probabilities)]


def born_distribution(rho, setting_povm: Sequence[Sequence[tuple[float, np.ndarray]]]) -> OutcomeDistribution:
    """Outcome distribution of a product POVM measurement on ``rho``.

    ``setting_povm[j]`` is the list of ``(value, element)`` pairs of
    subsystem ``j`` for one setting.
    """
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    values = [[float(a) for a, _ in sub] for sub in setting_povm]
    elems = [np.array([np.asarray(e, dtype=complex) for _, e in sub]) for sub in setting_povm]
    for j, e in enumerate(elems):
        dev = np.max(np.abs(e.sum(axis=0) - np.eye(e.shape[-1])))
        if dev > 1e-10:
            raise InvalidModelError(f"POVM of subsystem {j} is incomplete (deviation {dev:.2e})")
    probs = joint_probabilities(r, elems).reshape(-1)
    outcomes = np.array(list(itertools.product(*values)), dtype=float)
    return OutcomeDistribution(outcomes, probs)


def inverse_cdf_indices(probabilities: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF sampling.

    ``probabilities`` is ``(N, K)`` (rows sum to one), ``uniforms`` is ``(N,)``
    in [0, 1).  Returns the smallest index whose cumulative mass exceeds the
    uniform; zero-probability outcomes are never chosen.
    """
    cdf = np.cumsum(probabilities, axis=-1)
    cdf /= cdf[..., -1:]
    return np.sum(cdf[..., :-1] <= uniforms[..., None], axis=-1)


def sample_outcome(dist: OutcomeDistribution, rng: np.random.Generator) -> tuple[float, ...]:
    """Draw one outcome vector by inverse-CDF sampling.

    Consumes exactly one uniform from ``rng``; repeated calls on the same
    generator continue the same stream.
    """
    idx = int(inverse_cdf_indices(dist.probabilities[None, :], np.array([rng.random()]))[0])
    return tuple(float(a) for a in dist.outcomes[idx])
