"""Witness decompositions, POVM models and the score function.

A witness ``W = c I + sum_xi w_xi O_xi`` is described by a list of
measurement settings (one non-identity local observable per subsystem) and a
list of terms, each pointing at a setting and carrying a bitmask that selects
which subsystems contribute a non-identity factor.  Settings are measured by
POVMs whose outcome values calibrate back to the setting observable; the
referee scores each round with

    s(x, a) = -(1/p_x) * sum_{xi: f(xi)=x} w_xi * prod_j a_j**b_j(xi).

Setting indices are zero-based throughout the package.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import qsim
from .errors import (
    DegenerateScoreError,
    DomainError,
    InvalidDecompositionError,
    InvalidModelError,
    InvalidOutcomeError,
    NonInvertibleReadoutError,
)

POVM_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-9
OUTCOME_MATCH_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LocalObservable:
    """A Hermitian operator on one subsystem, with a display label."""

    label: str
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise InvalidModelError(f"observable {self.label!r} is not a square matrix")
        dev = qsim.hermitian_deviation(m)
        if dev > qsim.HERMITIAN_TOL:
            raise InvalidModelError(f"observable {self.label!r} not Hermitian (deviation {dev:.2e})")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pauli(cls, label: str) -> "LocalObservable":
        if len(label) != 1:
            raise DomainError("a local Pauli observable has a one-letter label")
        return cls(label.upper(), qsim.pauli(label))

    def is_multiple_of_identity(self) -> bool:
        d = self.dim
        diag = np.trace(self.matrix) / d
        return bool(np.max(np.abs(self.matrix - diag * np.eye(d))) <= qsim.HERMITIAN_TOL)


@dataclass(frozen=True, eq=False)
class MeasurementSetting:
    observables: tuple[LocalObservable, ...]

    def __post_init__(self):
        obs = tuple(self.observables)
        for o in obs:
            if o.is_multiple_of_identity():
                raise InvalidDecompositionError(f"setting observable {o.label!r} is proportional to the identity")
        object.__setattr__(self, "observables", obs)

    @property
    def label(self) -> str:
        labels = [o.label for o in self.observables]
        sep = "" if all(len(lbl) == 1 for lbl in labels) else "."
        return sep.join(labels)

    @classmethod
    def pauli(cls, labels: str) -> "MeasurementSetting":
        return cls(tuple(LocalObservable.pauli(c) for c in labels))


@dataclass(frozen=True)
class ObservableTerm:
    weight: float
    setting: int
    bitmask: tuple[int, ...]

    def __post_init__(self):
        w = float(self.weight)
        if not math.isfinite(w) or w == 0.0:
            raise InvalidDecompositionError(f"term weight must be finite and nonzero, got {self.weight!r}")
        bits = self.bitmask
        if isinstance(bits, str):
            bits = tuple(int(c) for c in bits)
        bits = tuple(int(b) for b in bits)
        if any(b not in (0, 1) for b in bits):
            raise InvalidDecompositionError(f"bitmask entries must be 0 or 1, got {bits}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "setting", int(self.setting))
        object.__setattr__(self, "bitmask", bits)


@dataclass(frozen=True, eq=False)
class WitnessDecomposition:
    """``W = c I + sum_xi w_xi (x)_j (M_{f(xi)}^(j))^{b_j(xi)}``."""

    num_subsystems: int
    constant: float
    terms: tuple[ObservableTerm, ...]
    settings: tuple[MeasurementSetting, ...]

    def __post_init__(self):
        m = int(self.num_subsystems)
        if m < 1:
            raise InvalidDecompositionError("need at least one subsystem")
        terms = tuple(self.terms)
        settings = tuple(self.settings)
        if not settings:
            raise InvalidDecompositionError("decomposition has no measurement settings")
        for x, st in enumerate(settings):
            if len(st.observables) != m:
                raise InvalidDecompositionError(f"setting {x} has {len(st.observables)} observables, expected {m}")
        dims = [o.dim for o in settings[0].observables]
        for x, st in enumerate(settings):
            if [o.dim for o in st.observables] != dims:
                raise InvalidDecompositionError(f"setting {x} has subsystem dimensions inconsistent with setting 0")
        for k, t in enumerate(terms):
            if not 0 <= t.setting < len(settings):
                raise InvalidDecompositionError(f"term {k} refers to missing setting {t.setting}")
            if len(t.bitmask) != m:
                raise InvalidDecompositionError(f"term {k} bitmask has length {len(t.bitmask)}, expected {m}")
            if not any(t.bitmask):
                raise InvalidDecompositionError(f"term {k} has an all-zero bitmask; fold it into the constant")
        c = float(self.constant)
        if not math.isfinite(c):
            raise InvalidDecompositionError("constant must be finite")
        object.__setattr__(self, "num_subsystems", m)
        object.__setattr__(self, "constant", c)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "settings", settings)

    @property
    def subsystem_dims(self) -> tuple[int, ...]:
        return tuple(o.dim for o in self.settings[0].observables)

    @property
    def dim(self) -> int:
        return int(np.prod(self.subsystem_dims))

    @property
    def num_settings(self) -> int:
        return len(self.settings)

    def term_factors(self, k: int) -> list[np.ndarray]:
        """Local factors O_xi^(j) of term ``k`` (identity where the bit is 0)."""
        t = self.terms[k]
        obs = self.settings[t.setting].observables
        return [obs[j].matrix if b else np.eye(obs[j].dim, dtype=complex) for j, b in enumerate(t.bitmask)]

    def term_label(self, k: int) -> str:
        t = self.terms[k]
        obs = self.settings[t.setting].observables
        return "".join(o.label if b else "I" for o, b in zip(obs, t.bitmask))

    def terms_for_setting(self, x: int) -> list[ObservableTerm]:
        return [t for t in self.terms if t.setting == x]

    def matrix(self) -> np.ndarray:
        """Direct expansion c I + sum_xi w_xi (x)_j O_xi^(j)."""
        out = self.constant * np.eye(self.dim, dtype=complex)
        for k, t in enumerate(self.terms):
            out = out + t.weight * qsim.kron(self.term_factors(k))
        return out


@dataclass(frozen=True)
class SettingDistribution:
    p: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(v) for v in self.p)
        if not p:
            raise InvalidModelError("empty setting distribution")
        if any(not (v > 0.0) for v in p):
            raise InvalidModelError(f"setting probabilities must be strictly positive, got {p}")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise InvalidModelError(f"setting probabilities sum to {math.fsum(p)!r}")
        object.__setattr__(self, "p", p)

    def __len__(self):
        return len(self.p)

    def __getitem__(self, x):
        return self.p[x]

    def as_array(self) -> np.ndarray:
        return np.array(self.p)


@dataclass(frozen=True, eq=False)
class PovmModel:
    """POVMs for every (setting, subsystem) pair.

    ``elements[x][j]`` is a sequence of ``(value, element)`` pairs: the outcome
    set Omega_x^(j) with its POVM elements.  Construction checks positivity,
    completeness and distinct outcome values.  The calibration condition
    ``sum_a a P_a = M_x^(j)`` involves the decomposition and is checked by
    :func:`check_calibration`.
    """

    elements: tuple

    def __post_init__(self):
        frozen = []
        for x, per_setting in enumerate(self.elements):
            row = []
            for j, outcome_set in enumerate(per_setting):
                try:
                    pairs = tuple((float(a), _frozen(e)) for a, e in outcome_set)
                except (TypeError, ValueError) as exc:
                    raise InvalidModelError(
                        f"setting {x}, subsystem {j}: expected (value, element) pairs ({exc})"
                    ) from exc
                if not pairs:
                    raise InvalidModelError(f"empty outcome set for setting {x}, subsystem {j}")
                d = pairs[0][1].shape[0]
                for a, e in pairs:
                    if e.shape != (d, d):
                        raise InvalidModelError(f"POVM element shape mismatch at setting {x}, subsystem {j}")
                    if qsim.hermitian_deviation(e) > POVM_TOL:
                        raise InvalidModelError(f"POVM element not Hermitian at setting {x}, subsystem {j}")
                    lam = np.linalg.eigvalsh(e)[0]
                    if lam < -POVM_TOL:
                        raise InvalidModelError(
                            f"POVM element for outcome {a} at setting {x}, subsystem {j} has eigenvalue {lam:.3e}"
                        )
                    if not math.isfinite(a):
                        raise InvalidModelError("outcome values must be finite")
                total = sum(e for _, e in pairs)
                dev = float(np.max(np.abs(total - np.eye(d))))
                if dev > POVM_TOL:
                    raise InvalidModelError(f"POVM at setting {x}, subsystem {j} incomplete (deviation {dev:.2e})")
                vals = [a for a, _ in pairs]
                if len(set(vals)) != len(vals):
                    raise InvalidModelError(f"repeated outcome values at setting {x}, subsystem {j}")
                row.append(pairs)
            frozen.append(tuple(row))
        if not frozen:
            raise InvalidModelError("POVM model has no settings")
        object.__setattr__(self, "elements", tuple(frozen))

    @property
    def num_settings(self) -> int:
        return len(self.elements)

    def values(self, x: int, j: int) -> tuple[float, ...]:
        return tuple(a for a, _ in self.elements[x][j])

    def element_array(self, x: int, j: int) -> np.ndarray:
        return np.array([e for _, e in self.elements[x][j]])

    def setting_povm(self, x: int):
        return self.elements[x]

    def observable(self, x: int, j: int) -> np.ndarray:
        return sum(a * e for a, e in self.elements[x][j])


def check_calibration(decomp: WitnessDecomposition, povm: PovmModel, tol: float = POVM_TOL) -> None:
    """Raise unless ``sum_a a P_a^(j),x == M_x^(j)`` for every (x, j)."""
    if povm.num_settings != decomp.num_settings:
        raise InvalidModelError(f"POVM model has {povm.num_settings} settings, decomposition {decomp.num_settings}")
    dims = decomp.subsystem_dims
    for x, st in enumerate(decomp.settings):
        if len(povm.elements[x]) != decomp.num_subsystems:
            raise InvalidModelError(f"POVM model setting {x} has wrong number of subsystems")
        for j, obs in enumerate(st.observables):
            e = povm.elements[x][j][0][1]
            if e.shape[0] != dims[j]:
                raise InvalidModelError(f"POVM dimension mismatch at setting {x}, subsystem {j}")
            dev = float(np.max(np.abs(povm.observable(x, j) - obs.matrix)))
            if dev > tol:
                raise InvalidModelError(
                    f"POVM at setting {x}, subsystem {j} does not reproduce observable {obs.label} (deviation {dev:.2e})"
                )


# -- operations --------------------------------------------------------------


def recommended_setting_distribution(decomp: WitnessDecomposition) -> SettingDistribution:
    """p_x proportional to the summed |w_xi| of the terms measured by setting x."""
    mass = np.zeros(decomp.num_settings)
    for t in decomp.terms:
        mass[t.setting] += abs(t.weight)
    total = mass.sum()
    if total == 0.0:
        raise InvalidDecompositionError("all weights are zero")
    if np.any(mass == 0.0):
        unused = [x for x in range(decomp.num_settings) if mass[x] == 0.0]
        raise InvalidDecompositionError(f"settings {unused} carry no terms")
    p = mass / total
    p[-1] = 1.0 - math.fsum(p[:-1])
    return SettingDistribution(tuple(p))


def _outcome_index(values: Sequence[float], a: float) -> int:
    for k, v in enumerate(values):
        if abs(v - a) <= OUTCOME_MATCH_TOL * max(1.0, abs(v)):
            return k
    raise InvalidOutcomeError(f"outcome {a!r} not in outcome set {tuple(values)}")


def score(
    decomp: WitnessDecomposition,
    dist: SettingDistribution,
    x: int,
    a: Sequence[float],
    povm: PovmModel | None = None,
) -> float:
    """Referee's score for setting ``x`` and outcome vector ``a``.

    When ``povm`` is given, each ``a_j`` must belong to Omega_x^(j).
    """
    if not 0 <= x < decomp.num_settings:
        raise DomainError(f"setting index {x} out of range")
    a = [float(v) for v in a]
    if len(a) != decomp.num_subsystems:
        raise InvalidOutcomeError(f"outcome vector has {len(a)} entries, expected {decomp.num_subsystems}")
    if povm is not None:
        for j, aj in enumerate(a):
            _outcome_index(povm.values(x, j), aj)
    total = 0.0
    for t in decomp.terms_for_setting(x):
        prod = t.weight
        for aj, b in zip(a, t.bitmask):
            if b:
                prod *= aj
        total += prod
    return -total / dist[x]


def _score_table(decomp: WitnessDecomposition, dist: SettingDistribution, povm: PovmModel, x: int) -> np.ndarray:
    m = decomp.num_subsystems
    vals = [np.array(povm.values(x, j)) for j in range(m)]
    shape = tuple(len(v) for v in vals)
    table = np.zeros(shape)
    for t in decomp.terms_for_setting(x):
        contrib = np.full(shape, t.weight)
        for j, b in enumerate(t.bitmask):
            if b:
                axis_shape = [1] * m
                axis_shape[j] = -1
                contrib = contrib * vals[j].reshape(axis_shape)
        table += contrib
    return -table / dist[x]


def score_extrema(decomp: WitnessDecomposition, dist: SettingDistribution, povm: PovmModel) -> tuple[float, float, float]:
    """(s_min, s_max, Delta s) by exhaustive enumeration of every (x, a)."""
    lo, hi = math.inf, -math.inf
    for x in range(decomp.num_settings):
        for j in range(decomp.num_subsystems):
            if not povm.elements[x][j]:
                raise InvalidModelError(f"empty outcome set at setting {x}, subsystem {j}")
        tab = _score_table(decomp, dist, povm, x)
        lo = min(lo, float(tab.min()))
        hi = max(hi, float(tab.max()))
    ds = hi - lo
    if not ds > 0.0:
        raise DegenerateScoreError(f"score is constant ({lo!r}); Delta s must be positive")
    return lo, hi, ds


def _check_dims(decomp: WitnessDecomposition, povm: PovmModel) -> None:
    if povm.num_settings != decomp.num_settings:
        raise InvalidModelError("POVM model and decomposition disagree on the number of settings")
    for x in range(decomp.num_settings):
        if len(povm.elements[x]) != decomp.num_subsystems:
            raise InvalidModelError(f"POVM model setting {x} has wrong number of subsystems")
        for j, d in enumerate(decomp.subsystem_dims):
            if povm.elements[x][j][0][1].shape[0] != d:
                raise InvalidModelError(f"POVM dimension mismatch at setting {x}, subsystem {j}")


def score_operator(
    decomp: WitnessDecomposition,
    dist: SettingDistribution,
    povm: PovmModel,
    weights: Sequence[float],
) -> np.ndarray:
    """c I - sum_x weights_x sum_a s(x, a) (x)_j P_{a_j}^(j),x.

    With ``weights = p`` and the ideal POVMs this is the witness itself; with
    perturbed probabilities and POVMs it is the effectively implemented
    operator.  The score always uses the ideal ``dist``.
    """
    _check_dims(decomp, povm)
    out = decomp.constant * np.eye(decomp.dim, dtype=complex)
    for x in range(decomp.num_settings):
        tab = _score_table(decomp, dist, povm, x)
        local = [povm.element_array(x, j) for j in range(decomp.num_subsystems)]
        acc = np.zeros_like(out)
        for idx in itertools.product(*(range(n) for n in tab.shape)):
            acc += tab[idx] * qsim.kron([local[j][k] for j, k in enumerate(idx)])
        out -= weights[x] * acc
    return out


def reconstruct_witness(decomp: WitnessDecomposition, dist: SettingDistribution, povm: PovmModel) -> np.ndarray:
    """Rebuild W from the score function and the POVMs."""
    return score_operator(decomp, dist, povm, dist.p)


class WitnessGame:
    """A decomposition, a setting distribution and a calibrated POVM model.

    Validates the calibration condition on construction and caches the score
    tables, extrema and witness matrix used by the simulator and analyses.
    """

    def __init__(
        self,
        decomp: WitnessDecomposition,
        povm: PovmModel,
        dist: SettingDistribution | None = None,
        name: str = "",
    ):
        _check_dims(decomp, povm)
        check_calibration(decomp, povm)
        self.decomp = decomp
        self.povm = povm
        self.dist = dist if dist is not None else recommended_setting_distribution(decomp)
        if len(self.dist) != decomp.num_settings:
            raise InvalidModelError("setting distribution length differs from the number of settings")
        self.name = name
        self.s_min, self.s_max, self.delta_s = score_extrema(decomp, self.dist, povm)

    @property
    def c(self) -> float:
        return self.decomp.constant

    @property
    def m(self) -> int:
        return self.decomp.num_subsystems

    @property
    def num_settings(self) -> int:
        return self.decomp.num_settings

    @cached_property
    def score_tables(self) -> tuple[np.ndarray, ...]:
        """Per setting, the score of every outcome tuple (indexed by outcome positions)."""
        tabs = []
        for x in range(self.num_settings):
            t = _score_table(self.decomp, self.dist, self.povm, x)
            t.setflags(write=False)
            tabs.append(t)
        return tuple(tabs)

    @cached_property
    def witness_matrix(self) -> np.ndarray:
        w = self.decomp.matrix()
        w.setflags(write=False)
        return w

    @cached_property
    def local_elements(self) -> tuple[tuple[np.ndarray, ...], ...]:
        return tuple(
            tuple(self.povm.element_array(x, j) for j in range(self.m)) for x in range(self.num_settings)
        )

    @cached_property
    def outcome_values(self) -> tuple[tuple[np.ndarray, ...], ...]:
        return tuple(
            tuple(np.array(self.povm.values(x, j)) for j in range(self.m)) for x in range(self.num_settings)
        )

    def outcome_indices(self, x: int, a: Sequence[float]) -> tuple[int, ...]:
        if len(a) != self.m:
            raise InvalidOutcomeError(f"outcome vector has {len(a)} entries, expected {self.m}")
        return tuple(_outcome_index(self.povm.values(x, j), float(aj)) for j, aj in enumerate(a))

    def score(self, x: int, a: Sequence[float]) -> float:
        if not 0 <= x < self.num_settings:
            raise DomainError(f"setting index {x} out of range")
        return float(self.score_tables[x][self.outcome_indices(x, a)])

    def reconstruct(self) -> np.ndarray:
        return reconstruct_witness(self.decomp, self.dist, self.povm)

    def witness_value(self, rho) -> float:
        return qsim.expectation(rho, self.witness_matrix)

    def expected_score(self, rho) -> float:
        """sum_x p_x sum_a Pr[a | x, rho] s(x, a) under the ideal POVMs."""
        r = rho.matrix if isinstance(rho, qsim.DensityMatrix) else np.asarray(rho)
        total = 0.0
        for x in range(self.num_settings):
            probs = qsim.joint_probabilities(r, self.local_elements[x])
            total += self.dist[x] * float(np.sum(probs * self.score_tables[x]))
        return total


# -- GHZ example -------------------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_K = np.array([[1, 1], [1j, -1j]], dtype=complex) / np.sqrt(2)
_BASIS_CHANGE = {"Z": np.eye(2, dtype=complex), "X": _H, "Y": _K}


def readout_povm(u: float, v: float, basis: str = "Z"):
    """Two-outcome noisy Pauli readout and its calibrated outcome values.

    ``u`` and ``v`` are the probabilities of correctly identifying the +1 and
    -1 eigenstates.  Returns ``((P_plus, P_minus), (a_plus, a_minus))`` with
    ``a_plus P_plus + a_minus P_minus`` equal to the Pauli operator.

    Raises
    ------
    NonInvertibleReadoutError
        If ``u + v <= 1``; the readout then carries no usable information.
    """
    u, v = float(u), float(v)
    if not (0.0 < u <= 1.0 and 0.0 < v <= 1.0):
        raise DomainError(f"readout fidelities must lie in (0, 1], got u={u}, v={v}")
    if u + v <= 1.0:
        raise NonInvertibleReadoutError(f"u + v = {u + v} <= 1; outcome values are undefined")
    try:
        U = _BASIS_CHANGE[basis.upper()]
    except KeyError as exc:
        raise DomainError(f"unknown Pauli basis {basis!r}") from exc
    plus = U @ np.diag([u, 1.0 - v]).astype(complex) @ U.conj().T
    minus = U @ np.diag([1.0 - u, v]).astype(complex) @ U.conj().T
    a_plus = (v - u + 1.0) / (u + v - 1.0)
    a_minus = (v - u - 1.0) / (u + v - 1.0)
    return (plus, minus), (a_plus, a_minus)


def pauli_readout_model(decomp: WitnessDecomposition, u: float = 1.0, v: float = 1.0) -> PovmModel:
    """Readout POVMs with fidelities (u, v) for every Pauli setting observable."""
    elements = []
    for st in decomp.settings:
        row = []
        for o in st.observables:
            if o.label not in ("X", "Y", "Z"):
                raise InvalidModelError(f"readout shorthand needs Pauli observables, got {o.label!r}")
            (pp, pm), (ap, am) = readout_povm(u, v, o.label)
            row.append([(ap, pp), (am, pm)])
        elements.append(row)
    return PovmModel(tuple(elements))


def ghz_projection_witness() -> tuple[WitnessDecomposition, np.ndarray]:
    """Five-setting Pauli decomposition of W = I/2 - |GHZ><GHZ| on three qubits.

    Returns the decomposition and the reference matrix computed directly from
    the GHZ projector.
    """
    settings = tuple(MeasurementSetting.pauli(lbl) for lbl in ("ZZZ", "XXX", "XYY", "YXY", "YYX"))
    terms = (
        ObservableTerm(-1 / 8, 0, (0, 1, 1)),
        ObservableTerm(-1 / 8, 0, (1, 0, 1)),
        ObservableTerm(-1 / 8, 0, (1, 1, 0)),
        ObservableTerm(-1 / 8, 1, (1, 1, 1)),
        ObservableTerm(1 / 8, 2, (1, 1, 1)),
        ObservableTerm(1 / 8, 3, (1, 1, 1)),
        ObservableTerm(1 / 8, 4, (1, 1, 1)),
    )
    decomp = WitnessDecomposition(3, 3 / 8, terms, settings)
    reference = 0.5 * np.eye(8, dtype=complex) - qsim.projector(qsim.ghz_vector(3))
    return decomp, reference


def ghz_game(u: float = 0.95, v: float = 0.99) -> WitnessGame:
    """The GHZ projection witness with noisy readout and recommended p_x."""
    decomp, _ = ghz_projection_witness()
    return WitnessGame(decomp, pauli_readout_model(decomp, u, v), name="ghz")
