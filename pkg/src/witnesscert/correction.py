"""Witness correction for imperfect setting choice and imperfect measurements.

If the referee's setting probabilities deviate from p_x by at most ``tau`` and
every POVM element deviates from its ideal by at most ``delta_j`` in operator
norm, the implemented operator W-bar satisfies ``||W - W-bar|| <= gamma`` with
``gamma = gamma1 + gamma2``:

    gamma1 = tau * sum_x max_a |s(x, a)|
    gamma2 = sum_xi |w_xi| sum_j (prod_{k<j} (lam_k + eps_k)) eps_j prod_{k>j} lam_k

where ``eps_j = b_j delta_j sum_a |a|`` and ``lam_j`` is the operator norm of
the local factor of term xi on subsystem j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qsim
from .errors import DomainError, InvalidModelError
from .witness import PovmModel, SettingDistribution, WitnessDecomposition, WitnessGame, score_operator


@dataclass(frozen=True)
class DeviceNoise:
    """Bias bound ``tau`` on setting probabilities and per-subsystem POVM bounds ``delta``."""

    tau: float
    delta: tuple[float, ...]

    def __post_init__(self):
        tau = float(self.tau)
        delta = tuple(float(d) for d in self.delta)
        if not (math.isfinite(tau) and tau >= 0.0):
            raise DomainError(f"tau must be a finite non-negative number, got {self.tau!r}")
        if any(not (math.isfinite(d) and d >= 0.0) for d in delta):
            raise DomainError(f"delta entries must be finite and non-negative, got {self.delta!r}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "delta", delta)

    @classmethod
    def uniform(cls, tau: float, delta: float, m: int) -> "DeviceNoise":
        return cls(tau, (delta,) * m)

    def check(self, dist: SettingDistribution, m: int) -> None:
        if len(self.delta) != m:
            raise DomainError(f"need {m} delta values, got {len(self.delta)}")
        if self.tau >= min(dist.p):
            raise DomainError(f"tau = {self.tau} must be below the smallest setting probability {min(dist.p)}")


@dataclass(frozen=True)
class GammaBreakdown:
    gamma1: float
    gamma2: float
    gamma2_first_order: float

    @property
    def gamma(self) -> float:
        return self.gamma1 + self.gamma2

    def as_dict(self) -> dict:
        return {
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "gamma2_first_order": self.gamma2_first_order,
            "gamma": self.gamma,
        }


def gamma1(decomp: WitnessDecomposition, dist: SettingDistribution, povm: PovmModel, tau: float) -> float:
    if tau < 0:
        raise DomainError("tau must be non-negative")
    game = WitnessGame(decomp, povm, dist)
    return float(tau) * math.fsum(float(np.max(np.abs(t))) for t in game.score_tables)


def _term_eps_lam(decomp: WitnessDecomposition, povm: PovmModel, delta: Sequence[float]):
    if len(delta) != decomp.num_subsystems:
        raise DomainError(f"need {decomp.num_subsystems} delta values, got {len(delta)}")
    out = []
    for k, t in enumerate(decomp.terms):
        factors = decomp.term_factors(k)
        lam = [qsim.operator_norm(f) for f in factors]
        eps = [
            b * float(delta[j]) * math.fsum(abs(a) for a in povm.values(t.setting, j)) for j, b in enumerate(t.bitmask)
        ]
        out.append((abs(t.weight), eps, lam))
    return out


def gamma2(decomp: WitnessDecomposition, povm: PovmModel, delta: Sequence[float]) -> float:
    total = 0.0
    for w, eps, lam in _term_eps_lam(decomp, povm, delta):
        m = len(eps)
        acc = 0.0
        for j in range(m):
            if eps[j] == 0.0:
                continue
            left = math.prod(lam[k] + eps[k] for k in range(j))
            right = math.prod(lam[k] for k in range(j + 1, m))
            acc += left * eps[j] * right
        total += w * acc
    return total


def gamma2_first_order(decomp: WitnessDecomposition, povm: PovmModel, delta: Sequence[float]) -> float:
    return math.fsum(w * math.fsum(eps) for w, eps, _ in _term_eps_lam(decomp, povm, delta))


def witness_correction(game: WitnessGame, noise: DeviceNoise) -> GammaBreakdown:
    """Full gamma report for a game under the given device noise bounds."""
    noise.check(game.dist, game.m)
    g1 = noise.tau * math.fsum(float(np.max(np.abs(t))) for t in game.score_tables)
    return GammaBreakdown(
        gamma1=g1,
        gamma2=gamma2(game.decomp, game.povm, noise.delta),
        gamma2_first_order=gamma2_first_order(game.decomp, game.povm, noise.delta),
    )


def effective_operator(game: WitnessGame, perturbed_dist: Sequence[float], perturbed_povm: PovmModel) -> np.ndarray:
    """Operator implemented by a device with perturbed settings and POVMs.

    The score function stays the one built from the ideal game; only the
    probabilities of choosing settings and the measured elements change.
    """
    p = np.asarray(perturbed_dist, dtype=float)
    if p.shape != (game.num_settings,):
        raise InvalidModelError(f"need {game.num_settings} perturbed setting probabilities")
    if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidModelError("perturbed setting probabilities must be a probability vector")
    for x in range(game.num_settings):
        for j in range(game.m):
            if perturbed_povm.values(x, j) != game.povm.values(x, j):
                raise InvalidModelError(f"perturbed POVM changes the outcome set at setting {x}, subsystem {j}")
    return score_operator(game.decomp, game.dist, perturbed_povm, p)


# -- random admissible perturbations -----------------------------------------


def perturb_elements_batch(
    elements: np.ndarray, delta: float, size: int, rng: np.random.Generator, max_tries: int = 60
) -> np.ndarray:
    """``size`` random POVMs, each within operator-norm distance ``delta`` of ``elements``.

    The last perturbation is minus the sum of the others so completeness is
    preserved.  Each perturbation is scaled to a random size up to ``delta``;
    draws that leave the PSD cone are rejected and redrawn.
    """
    k, d, _ = elements.shape
    out = np.broadcast_to(elements, (size, k, d, d)).copy()
    if delta == 0.0 or size == 0:
        return out
    todo = np.arange(size)
    for _ in range(max_tries):
        r = todo.size
        a = rng.normal(size=(r, k - 1, d, d)) + 1j * rng.normal(size=(r, k - 1, d, d))
        a = (a + np.conj(np.swapaxes(a, -1, -2))) / 2
        dl = np.concatenate([a, -a.sum(axis=1, keepdims=True)], axis=1)
        norm = np.abs(np.linalg.eigvalsh(dl)).max(axis=(-1, -2))
        dl *= (delta * rng.uniform(0.0, 1.0, size=r) / norm)[:, None, None, None]
        cand = elements[None] + dl
        ok = np.linalg.eigvalsh(cand)[..., 0].min(axis=-1) >= 0.0
        out[todo[ok]] = cand[ok]
        todo = todo[~ok]
        if todo.size == 0:
            return out
    raise InvalidModelError("could not find an admissible POVM perturbation; ideal elements may be rank deficient")


def perturb_elements(elements: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """One random admissible perturbation of a single POVM (see :func:`perturb_elements_batch`)."""
    return perturb_elements_batch(elements, delta, 1, rng)[0]


def perturb_povm(povm: PovmModel, delta: Sequence[float], rng: np.random.Generator) -> PovmModel:
    elements = []
    for x in range(povm.num_settings):
        row = []
        for j in range(len(povm.elements[x])):
            new = perturb_elements(povm.element_array(x, j), float(delta[j]), rng)
            row.append(list(zip(povm.values(x, j), new)))
        elements.append(row)
    return PovmModel(tuple(elements))


def perturb_distribution_batch(p: np.ndarray, tau: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` rows of setting probabilities, each entry within ``tau`` of ``p``.

    Offsets are uniform per setting, centered so each row still sums to one,
    then shrunk by a random factor so the largest offset stays below ``tau``.
    """
    p = np.asarray(p, dtype=float)
    if tau == 0.0:
        return np.broadcast_to(p, (size, p.size)).copy()
    d = rng.uniform(-1.0, 1.0, size=(size, p.size))
    d -= d.mean(axis=1, keepdims=True)
    peak = np.abs(d).max(axis=1, keepdims=True)
    peak[peak == 0.0] = 1.0
    d *= tau * rng.uniform(0.0, 1.0, size=(size, 1)) / peak
    return p + d


def perturb_distribution(dist: SettingDistribution, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Setting probabilities with each entry moved by at most ``tau``; still sums to one."""
    return perturb_distribution_batch(dist.as_array(), tau, 1, rng)[0]
