"""State sources for simulated witness experiments.

Three scenarios are provided: a fixed state every round (iid), GHZ states
fused from two noisy single-click EPR pairs whose phases follow independent
random walks (correlated rounds), and a fixed fraction of perfect GHZ rounds
mixed with an orthogonal bad state.

Angles are given in degrees and converted to radians internally.

Each source supports two access patterns.  ``next_state`` is the sequential
interface (round index, history of previous records, generator).  Sources
that never look at the history also implement ``draw_states``, which produces
a whole run's states in one go as a bank of distinct matrices plus an index
per round; the experiment runner uses this to vectorize measurement.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from importlib import resources

import numpy as np

from . import qsim
from .errors import DomainError, InvalidModelError, SourceError

_X = qsim.pauli("X")
_Z = qsim.pauli("Z")
_I2 = np.eye(2, dtype=complex)


def _check_prob(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def dephasing_q(n_max: float, nu: float) -> float:
    """Memory dephasing strength 1 - exp(-N_max / nu)."""
    if nu <= 0 or n_max < 0:
        raise DomainError("need N_max >= 0 and nu > 0")
    return 1.0 - math.exp(-n_max / nu)


@dataclass(frozen=True)
class SceEprParams:
    """Effective single-click EPR pair.

    ``z|00><00| + (1-z)|Psi+_theta><Psi+_theta|`` with
    ``|Psi+_theta> = (|01> + e^{i theta}|10>)/sqrt(2)``, followed by
    off-diagonal damping ``(1 - dephase_q)`` and a Z flip on the first qubit
    with probability ``p_theta``.
    """

    z: float
    theta: float = 0.0
    dephase_q: float = 0.0
    p_theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "z", _check_prob("z", self.z))
        object.__setattr__(self, "dephase_q", _check_prob("dephase_q", self.dephase_q))
        object.__setattr__(self, "p_theta", _check_prob("p_theta", self.p_theta))
        theta = float(self.theta)
        if not math.isfinite(theta):
            raise DomainError("theta must be finite")
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class DriftParams:
    theta0: float = 0.0
    step: float = 0.98

    def __post_init__(self):
        if not float(self.step) >= 0.0:
            raise DomainError(f"drift step must be non-negative, got {self.step!r}")
        object.__setattr__(self, "theta0", float(self.theta0))
        object.__setattr__(self, "step", float(self.step))


def sce_epr_state(params: SceEprParams) -> qsim.DensityMatrix:
    z, q, p = params.z, params.dephase_q, params.p_theta
    psi = (qsim.ket("01") + np.exp(1j * math.radians(params.theta)) * qsim.ket("10")) / math.sqrt(2)
    rho = z * qsim.projector(qsim.ket("00")) + (1.0 - z) * np.outer(psi, psi.conj())
    off = ~np.eye(4, dtype=bool)
    rho[off] *= 1.0 - q
    z1 = np.kron(_Z, _I2)
    rho = (1.0 - p) * rho + p * (z1 @ rho @ z1)
    return qsim.DensityMatrix(rho)


def to_phi_frame(rho: qsim.DensityMatrix) -> qsim.DensityMatrix:
    """Apply X to the second qubit, mapping Psi-type pairs to Phi-type pairs."""
    u = np.kron(_I2, _X)
    return qsim.DensityMatrix(u @ rho.matrix @ u, validate=False)


def _cnot(control: int, target: int, m: int) -> np.ndarray:
    u = np.zeros((2**m, 2**m), dtype=complex)
    for col in range(2**m):
        bits = [(col >> (m - 1 - k)) & 1 for k in range(m)]
        bits[target] ^= bits[control]
        u[int("".join(map(str, bits)), 2), col] = 1.0
    return u


# Qubit order (A, B_nuclear, B_electron, C).
_CNOT_12 = _cnot(1, 2, 4)


def fusion_branches(rho_ab: qsim.DensityMatrix, rho_bc: qsim.DensityMatrix):
    """Both measurement branches of the fusion circuit.

    The four-qubit state ``rho_ab (x) rho_bc`` on (A, B_nuclear, B_electron, C)
    goes through a CNOT from B_nuclear to B_electron; B_electron is measured in
    the computational basis, X is applied to C on outcome 1, and B_electron is
    traced out.  Returns ``[(p0, state0), (p1, state1)]`` with states on
    (A, B_nuclear, C); a state is ``None`` when its branch has probability 0.
    """
    full = np.kron(rho_ab.matrix, rho_bc.matrix)
    full = _CNOT_12 @ full @ _CNOT_12.conj().T
    t = full.reshape((2,) * 8)
    out = []
    for b in (0, 1):
        # indices: rows a, bn, be, c ; cols a', bn', be', c'
        sub = t[:, :, b, :, :, :, b, :].reshape(8, 8)
        p = float(np.trace(sub).real)
        if p <= 1e-15:
            out.append((0.0, None))
            continue
        sub = sub / p
        if b == 1:
            xc = qsim.kron([_I2, _I2, _X])
            sub = xc @ sub @ xc
        out.append((p, qsim.DensityMatrix((sub + sub.conj().T) / 2)))
    return out


def assemble_ghz(rho_ab: qsim.DensityMatrix, rho_bc: qsim.DensityMatrix, rng: np.random.Generator) -> qsim.DensityMatrix:
    """Fuse two pairs into a three-qubit state, sampling the measurement outcome."""
    (p0, s0), (_, s1) = fusion_branches(rho_ab, rho_bc)
    return s0 if rng.random() < p0 else s1


@lru_cache(maxsize=65536)
def _drift_branches(epr1: SceEprParams, epr2: SceEprParams):
    r1 = to_phi_frame(sce_epr_state(epr1))
    r2 = to_phi_frame(sce_epr_state(epr2))
    return fusion_branches(r1, r2)


class StateSource(ABC):
    """Produces the state of every round."""

    kind: str = "abstract"
    uses_history: bool = False

    def start(self, n: int, rng: np.random.Generator) -> None:
        """Reset per-run state before round 0."""

    @abstractmethod
    def next_state(self, i: int, history, rng: np.random.Generator) -> qsim.DensityMatrix:
        """State of round ``i`` (zero-based); ``history`` is the record prefix."""

    def draw_states(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """All states of an n-round run as ``(bank, index)``.

        ``bank`` is a ``(B, D, D)`` array of distinct states and ``index`` a
        length-n integer array selecting each round's state.
        """
        if self.uses_history:
            raise SourceError(f"{self.kind} source depends on the history; draw states round by round")
        self.start(n, rng)
        states = [self.next_state(i, None, rng).matrix for i in range(n)]
        return np.array(states), np.arange(n)

    def describe(self) -> dict:
        return {"kind": self.kind}


class IidSource(StateSource):
    kind = "iid"

    def __init__(self, rho: qsim.DensityMatrix, name: str = ""):
        self.rho = rho
        self.name = name

    def next_state(self, i, history, rng):
        return self.rho

    def draw_states(self, n, rng):
        return self.rho.matrix[None, :, :].copy(), np.zeros(n, dtype=np.intp)

    def describe(self):
        return {"kind": self.kind, "state": self.name or "custom"}


class DriftSource(StateSource):
    """Two EPR pairs with independent random-walk phases, fused into a GHZ-type state.

    Both phases start at ``theta0`` in round 0 and move by ``+-step`` with
    equal probability before every later round.  Both pairs are brought into
    the Phi frame before fusion so that noiseless pairs yield the ideal GHZ
    state in the outcome-0 branch.
    """

    kind = "drift"

    def __init__(self, epr1: SceEprParams, epr2: SceEprParams, drift: DriftParams):
        self.epr1 = epr1
        self.epr2 = epr2
        self.drift = drift
        self._k = (0, 0)

    def _branches(self, k1: int, k2: int):
        th0, st = self.drift.theta0, self.drift.step
        return self._branches_at(th0 + k1 * st, th0 + k2 * st)

    def _branches_at(self, theta1: float, theta2: float):
        return _drift_branches(replace(self.epr1, theta=theta1), replace(self.epr2, theta=theta2))

    def start(self, n, rng):
        self._k = (0, 0)

    def next_state(self, i, history, rng):
        if i > 0:
            steps = 2 * rng.integers(0, 2, size=2) - 1
            self._k = (self._k[0] + int(steps[0]), self._k[1] + int(steps[1]))
        (p0, s0), (_, s1) = self._branches(*self._k)
        return s0 if rng.random() < p0 else s1

    def walk(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Lattice positions (n, 2) of both phases in units of the step."""
        steps = 2 * rng.integers(0, 2, size=(n - 1, 2)) - 1
        return np.vstack([np.zeros((1, 2), dtype=np.int64), np.cumsum(steps, axis=0)])

    def draw_states(self, n, rng):
        k = self.walk(n, rng)
        u = rng.random(n)
        angles = self.drift.theta0 + k * self.drift.step
        uniq, inv = np.unique(angles, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        bank = []
        p0 = np.empty(len(uniq))
        for r, (t1, t2) in enumerate(uniq):
            (p, s0), (_, s1) = self._branches_at(float(t1), float(t2))
            p0[r] = p
            zero = np.zeros((8, 8), dtype=complex)
            bank.append(s0.matrix if s0 is not None else zero)
            bank.append(s1.matrix if s1 is not None else zero)
        branch = (u >= p0[inv]).astype(np.intp)
        return np.array(bank), 2 * inv + branch

    def describe(self):
        return {
            "kind": self.kind,
            "epr1": asdict(self.epr1),
            "epr2": asdict(self.epr2),
            "drift": asdict(self.drift),
        }


@dataclass(frozen=True, eq=False)
class FractionParams:
    """Exactly ``round(F n)`` good rounds, the rest bad, in random order."""

    F: float
    good_state: qsim.DensityMatrix | None = None
    bad_state: qsim.DensityMatrix | None = None
    schedule_seed: int | None = None
    good: qsim.DensityMatrix = field(init=False, repr=False)
    bad: qsim.DensityMatrix = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "F", _check_prob("F", self.F))
        good, bad = self.good_state, self.bad_state
        if good is None:
            good = qsim.DensityMatrix.from_vector(qsim.ghz_vector(3, +1))
        if bad is None:
            bad = qsim.DensityMatrix.from_vector(qsim.ghz_vector(3, -1))
        if good.dim != bad.dim:
            raise InvalidModelError("good and bad states differ in dimension")
        overlap = abs(np.trace(good.matrix @ bad.matrix))
        if overlap > 1e-10:
            raise InvalidModelError(f"good and bad states are not orthogonal (Tr = {overlap:.3e})")
        object.__setattr__(self, "good", good)
        object.__setattr__(self, "bad", bad)

    def good_count(self, n: int) -> int:
        return int(math.floor(self.F * n + 0.5))


class FractionSource(StateSource):
    kind = "fraction"

    def __init__(self, params: FractionParams):
        self.params = params
        self._schedule = None

    def schedule(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Boolean array, True for good rounds; uses ``schedule_seed`` when set."""
        g = self.params.good_count(n)
        order = np.zeros(n, dtype=bool)
        order[:g] = True
        src = rng if self.params.schedule_seed is None else np.random.default_rng(self.params.schedule_seed)
        return src.permutation(order)

    def start(self, n, rng):
        self._schedule = self.schedule(n, rng)

    def next_state(self, i, history, rng):
        if self._schedule is None or i >= len(self._schedule):
            raise SourceError("fraction source used beyond its scheduled rounds; call start(n, rng) first")
        return self.params.good if self._schedule[i] else self.params.bad

    def draw_states(self, n, rng):
        sched = self.schedule(n, rng)
        bank = np.array([self.params.good.matrix, self.params.bad.matrix])
        return bank, np.where(sched, 0, 1).astype(np.intp)

    def describe(self):
        return {"kind": self.kind, "F": self.params.F, "schedule_seed": self.params.schedule_seed}


# -- presets -----------------------------------------------------------------

TABLE3 = {
    "p_det": 1.5e-3,
    "V": 0.9,
    "p_2ph": 0.02,
    "p_dc": 4.0e-7,
    "p_theta": 0.030,
    "nu": 1500.0,
    "z1": 0.016,
    "z2": 0.080,
    "N_max": 468.0,
}
"""NV simulation parameters.  Only z1, z2, p_theta, N_max and nu enter the
effective pair model; the photonic parameters are kept as provenance."""


def table3_pairs(p_theta: float | None = None, theta: float = 0.0) -> tuple[SceEprParams, SceEprParams]:
    """The two EPR pairs of the NV model; memory dephasing acts on the first pair only."""
    pt = TABLE3["p_theta"] if p_theta is None else p_theta
    q = dephasing_q(TABLE3["N_max"], TABLE3["nu"])
    return (
        SceEprParams(TABLE3["z1"], theta, dephase_q=q, p_theta=pt),
        SceEprParams(TABLE3["z2"], theta, dephase_q=0.0, p_theta=pt),
    )


def drift_preset(step: float = 0.98, theta0: float = 0.0) -> DriftSource:
    """NV pairs without the random Z flip, phases drifting by +-step degrees per round."""
    e1, e2 = table3_pairs(p_theta=0.0, theta=theta0)
    return DriftSource(e1, e2, DriftParams(theta0=theta0, step=step))


def load_pauli_state(path_or_data) -> qsim.DensityMatrix:
    """State from a JSON file or dict with a ``components`` list of {pauli, value}."""
    if isinstance(path_or_data, dict):
        data = path_or_data
    else:
        with open(path_or_data, encoding="utf-8") as fh:
            data = json.load(fh)
    try:
        comps = [(c["pauli"], c["value"]) for c in data["components"]]
    except (KeyError, TypeError) as exc:
        raise InvalidModelError("Pauli state needs a 'components' list of {pauli, value} objects") from exc
    return qsim.state_from_pauli_components(comps)


def table4_state() -> qsim.DensityMatrix:
    text = resources.files("witnesscert").joinpath("data/table4_state.json").read_text(encoding="utf-8")
    return load_pauli_state(json.loads(text))


def named_state(name: str) -> qsim.DensityMatrix:
    """Built-in three-qubit states: table4, ghz, ghz_minus, product000, mixed."""
    key = name.lower()
    if key == "table4":
        return table4_state()
    if key == "ghz":
        return qsim.DensityMatrix.from_vector(qsim.ghz_vector(3, +1))
    if key == "ghz_minus":
        return qsim.DensityMatrix.from_vector(qsim.ghz_vector(3, -1))
    if key == "product000":
        return qsim.DensityMatrix.from_vector(qsim.ket("000"))
    if key == "mixed":
        return qsim.DensityMatrix.maximally_mixed(8)
    raise DomainError(f"unknown state {name!r}; known: table4, ghz, ghz_minus, product000, mixed")
