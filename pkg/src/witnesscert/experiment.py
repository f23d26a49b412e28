"""Playing the witness game and analyzing the recorded scores.

A run draws, for every round, a state from the source, a setting from the
referee's distribution and an outcome vector from Born's rule, and records
the score.  Simulated device imperfections (biased setting probabilities,
perturbed POVMs) can be switched on; they must stay inside the bounds used to
compute the witness correction.

Sources that ignore the history are simulated in one vectorized pass; sources
that depend on it are played strictly round by round.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from typing import Iterator

import numpy as np

from . import qsim, stats
from .config import game_from_dict, source_from_dict
from .correction import DeviceNoise, perturb_distribution_batch, perturb_elements_batch, witness_correction
from .errors import (
    DataIntegrityError,
    DomainError,
    InvalidOutcomeError,
    PartialRunError,
    RunLoadError,
    WitnessError,
)
from .rng import make_rng
from .sources import StateSource
from .witness import WitnessGame

RUN_SCHEMA = "witnesscert.run/1"
SCORE_CHECK_TOL = 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything fixed before the experiment starts.

    ``tau`` and ``delta`` are the characterized device bounds entering the
    witness correction; ``sim_tau`` and ``sim_delta`` are the imperfections
    actually simulated and may not exceed them.  ``forced_setting`` makes the
    simulated referee always pick one setting (scores still use the game's
    distribution); it exists for diagnostics.
    """

    n: int
    alpha: float = 0.05
    witness: dict = field(default_factory=lambda: {"preset": "ghz"})
    source: dict = field(default_factory=lambda: {"kind": "iid", "state": "table4"})
    tau: float = 0.0
    delta: float = 0.0
    sim_tau: float = 0.0
    sim_delta: float = 0.0
    gamma_ceiling: float | None = None
    forced_setting: int | None = None
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        for name in ("tau", "delta", "sim_tau", "sim_delta"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0.0):
                raise DomainError(f"{name} must be finite and non-negative")
            object.__setattr__(self, name, v)
        if self.sim_tau > self.tau:
            raise DomainError(f"sim_tau = {self.sim_tau} exceeds the modeled bound tau = {self.tau}")
        if self.sim_delta > self.delta:
            raise DomainError(f"sim_delta = {self.sim_delta} exceeds the modeled bound delta = {self.delta}")
        if self.gamma_ceiling is not None and self.gamma_ceiling < 0:
            raise DomainError("gamma_ceiling must be non-negative")
        if int(self.seed) != self.seed or self.seed < 0:
            raise DomainError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise DataIntegrityError(f"unknown experiment config keys: {sorted(extra)}")
        if "n" not in data:
            raise DataIntegrityError("experiment config needs n")
        return cls(**data)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def build_game(self) -> WitnessGame:
        game = game_from_dict(self.witness)
        if self.forced_setting is not None and not 0 <= self.forced_setting < game.num_settings:
            raise DomainError(f"forced_setting {self.forced_setting} out of range")
        return game

    def build_source(self) -> StateSource:
        return source_from_dict(self.source)

    def noise(self, game: WitnessGame) -> DeviceNoise:
        return DeviceNoise.uniform(self.tau, self.delta, game.m)

    def gamma(self, game: WitnessGame) -> float:
        """Witness correction from (tau, delta), raised to ``gamma_ceiling`` when set."""
        g = witness_correction(game, self.noise(game)).gamma
        if self.gamma_ceiling is not None:
            if self.gamma_ceiling < g:
                raise DomainError(f"gamma_ceiling {self.gamma_ceiling} is below the computed gamma {g:.6g}")
            return float(self.gamma_ceiling)
        return g


@dataclass(frozen=True)
class RoundRecord:
    index: int
    setting: int
    outcome: tuple[float, ...]
    score: float


@dataclass(eq=False)
class RunRecord:
    """The ordered record of one run plus provenance metadata."""

    config: ExperimentConfig
    settings: np.ndarray
    outcomes: np.ndarray
    scores: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.settings = np.asarray(self.settings, dtype=np.int64)
        self.outcomes = np.asarray(self.outcomes, dtype=float)
        self.scores = np.asarray(self.scores, dtype=float)
        n = self.config.n
        if self.settings.shape != (n,) or self.scores.shape != (n,) or self.outcomes.shape[0] != n:
            raise DataIntegrityError(f"run has {self.scores.shape[0]} rounds, config says {n}")
        for a in (self.settings, self.outcomes, self.scores):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.config.n

    @cached_property
    def digest(self) -> str:
        return self.config.digest()

    def __len__(self):
        return self.n

    def rounds(self) -> Iterator[RoundRecord]:
        for i in range(self.n):
            yield RoundRecord(i, int(self.settings[i]), tuple(float(v) for v in self.outcomes[i]), float(self.scores[i]))

    def __eq__(self, other):
        if not isinstance(other, RunRecord):
            return NotImplemented
        return (
            self.config == other.config
            and np.array_equal(self.settings, other.settings)
            and np.array_equal(self.outcomes, other.outcomes)
            and np.array_equal(self.scores, other.scores)
            and self.metadata == other.metadata
        )

    __hash__ = None


# -- simulation --------------------------------------------------------------


class _Measurement:
    """Per-game lookup tables for vectorized measurement."""

    def __init__(self, game: WitnessGame):
        self.game = game
        sizes = [t.size for t in game.score_tables]
        self.kmax = max(sizes)
        X, m = game.num_settings, game.m
        self.sizes = np.array(sizes)
        self.scores = np.zeros((X, self.kmax))
        self.values = np.full((X, self.kmax, m), np.nan)
        for x, tab in enumerate(game.score_tables):
            self.scores[x, : tab.size] = tab.reshape(-1)
            idx = np.unravel_index(np.arange(tab.size), tab.shape)
            for j in range(m):
                self.values[x, : tab.size, j] = game.outcome_values[x][j][idx[j]]

        # Joint POVM elements of all settings as rows of one matrix, so Born
        # probabilities of a state bank are a single product.
        D = game.decomp.dim
        joint = np.zeros((X, self.kmax, D, D), dtype=complex)
        for x, tab in enumerate(game.score_tables):
            for flat, idx in enumerate(np.ndindex(tab.shape)):
                joint[x, flat] = qsim.kron([game.local_elements[x][j][k] for j, k in enumerate(idx)])
        self.joint_t = np.swapaxes(joint, -1, -2).reshape(X * self.kmax, D * D).T.copy()

    def born_table(self, bank: np.ndarray) -> np.ndarray:
        """(B, X, kmax) outcome probabilities of every bank state under every ideal setting."""
        b = bank.shape[0]
        return (bank.reshape(b, -1) @ self.joint_t).real.reshape(b, self.game.num_settings, self.kmax)


def _measure(meas: _Measurement, bank, index, config: ExperimentConfig, rng: np.random.Generator):
    game = meas.game
    n = index.shape[0]
    if config.forced_setting is not None:
        x = np.full(n, config.forced_setting, dtype=np.intp)
    else:
        probs = perturb_distribution_batch(game.dist.as_array(), config.sim_tau, n, rng)
        x = qsim.inverse_cdf_indices(probs, rng.random(n))
    if config.sim_delta == 0.0:
        pk = meas.born_table(bank)[index, x]
    else:
        pk = np.zeros((n, meas.kmax))
        for s in range(game.num_settings):
            rows = np.flatnonzero(x == s)
            if rows.size == 0:
                continue
            elems = [
                perturb_elements_batch(e, config.sim_delta, rows.size, rng) for e in game.local_elements[s]
            ]
            p = qsim.joint_probabilities(bank[index[rows]], elems)
            pk[rows, : meas.sizes[s]] = p.reshape(rows.size, -1)
    pk = np.clip(pk, 0.0, None)
    k = qsim.inverse_cdf_indices(pk, rng.random(n))
    return x, meas.values[x, k], meas.scores[x, k]


def true_witness_values(game: WitnessGame, bank: np.ndarray) -> np.ndarray:
    return np.einsum("bij,ji->b", bank, game.witness_matrix).real


def run_experiment(
    source: StateSource,
    game: WitnessGame,
    config: ExperimentConfig,
    rng: np.random.Generator | None = None,
    measurement: _Measurement | None = None,
) -> RunRecord:
    """Play ``config.n`` rounds of the witness game.

    The generator defaults to the stream of ``config.seed``.  It is split
    into independent child streams for the source and for the referee and
    measurement devices.
    """
    if rng is None:
        rng = make_rng(config.seed)
    state_rng, meas_rng = rng.spawn(2)
    meas = measurement or _Measurement(game)
    n = config.n
    if not source.uses_history:
        try:
            bank, index = source.draw_states(n, state_rng)
        except WitnessError as exc:
            raise PartialRunError(str(exc), 0) from exc
        x, outcomes, scores = _measure(meas, bank, index, config, meas_rng)
        wvals = true_witness_values(game, bank)[index]
    else:
        x = np.empty(n, dtype=np.int64)
        outcomes = np.empty((n, game.m))
        scores = np.empty(n)
        wvals = np.empty(n)
        history: list[RoundRecord] = []
        source.start(n, state_rng)
        for i in range(n):
            try:
                rho = source.next_state(i, tuple(history), state_rng)
            except WitnessError as exc:
                raise PartialRunError(str(exc), i) from exc
            bank = rho.matrix[None]
            xi, ai, si = _measure(meas, bank, np.zeros(1, dtype=np.intp), config, meas_rng)
            x[i], outcomes[i], scores[i] = xi[0], ai[0], si[0]
            wvals[i] = true_witness_values(game, bank)[0]
            history.append(RoundRecord(i, int(x[i]), tuple(outcomes[i]), float(scores[i])))
    metadata = {
        "seed": config.seed,
        "source": source.describe(),
        "true_witness_mean": float(np.mean(wvals)),
    }
    return RunRecord(config, x, outcomes, scores, metadata)


def simulate(config: ExperimentConfig) -> RunRecord:
    """Build game and source from the config and run with ``config.seed``."""
    return run_experiment(config.build_source(), config.build_game(), config)


# -- analysis ----------------------------------------------------------------


def _resolve(run: RunRecord, game: WitnessGame | None, gamma: float | None, alpha: float | None):
    game = game or run.config.build_game()
    gamma = run.config.gamma(game) if gamma is None else float(gamma)
    alpha = run.config.alpha if alpha is None else float(alpha)
    return game, gamma, alpha


def analyze_rejection(
    run: RunRecord,
    gamma: float | None = None,
    alpha: float | None = None,
    game: WitnessGame | None = None,
    method: str = "bentkus",
) -> stats.RejectionResult:
    """p-value bound for the hypothesis that every state was biseparable.

    ``gamma`` and ``alpha`` default to the values implied by the run's config.
    """
    game, gamma, alpha = _resolve(run, game, gamma, alpha)
    return stats.rejection_test(run.scores, game.c, gamma, game.s_min, game.delta_s, alpha, method)


def analyze_estimation(
    run: RunRecord,
    gamma: float | None = None,
    alpha: float | None = None,
    game: WitnessGame | None = None,
    method: str = "bentkus",
) -> stats.EstimationResult:
    """Witness estimate with its assumption-free confidence radius."""
    game, gamma, alpha = _resolve(run, game, gamma, alpha)
    stats.total_normalized_score(run.scores, game.s_min, game.delta_s)
    return stats.estimation(run.scores, game.c, gamma, game.delta_s, alpha, method)


# -- persistence -------------------------------------------------------------


def save_run(run: RunRecord, path, timestamp: bool = False) -> None:
    """Write a JSON-lines file: one header object, then one object per round."""
    header = {
        "schema": RUN_SCHEMA,
        "digest": run.digest,
        "config": run.config.to_dict(),
        "metadata": run.metadata,
    }
    if timestamp:
        header["created"] = datetime.now(timezone.utc).isoformat()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in run.rounds():
            fh.write(json.dumps({"i": r.index, "x": r.setting, "a": list(r.outcome), "s": r.score}) + "\n")


def load_run(path, game: WitnessGame | None = None) -> RunRecord:
    """Read and verify a run file.

    Checks the schema, the config digest, round numbering, that every
    outcome lies in its outcome set and that every score matches the score
    recomputed from the witness config.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise RunLoadError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise RunLoadError("empty file", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise RunLoadError(f"malformed header: {exc.msg}", 1) from exc
    if not isinstance(header, dict) or header.get("schema") != RUN_SCHEMA:
        raise RunLoadError(f"unknown schema {header.get('schema') if isinstance(header, dict) else None!r}", 1)
    try:
        config = ExperimentConfig.from_dict(header["config"])
    except (KeyError, TypeError, WitnessError) as exc:
        raise RunLoadError(f"bad config: {exc}", 1) from exc
    if config.digest() != header.get("digest"):
        raise RunLoadError("config digest mismatch; header was edited", 1)
    game = game or config.build_game()
    body = [ln for ln in enumerate(lines[1:], start=2) if ln[1].strip()]
    if len(body) != config.n:
        raise RunLoadError(f"expected {config.n} rounds, found {len(body)}")
    x = np.empty(config.n, dtype=np.int64)
    a = np.empty((config.n, game.m))
    s = np.empty(config.n)
    for i, (lineno, text) in enumerate(body):
        try:
            rec = json.loads(text)
            ri, xi, ai, si = rec["i"], int(rec["x"]), [float(v) for v in rec["a"]], float(rec["s"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise RunLoadError(f"malformed round record: {exc}", lineno) from exc
        if ri != i:
            raise RunLoadError(f"round index {ri}, expected {i}", lineno)
        if not 0 <= xi < game.num_settings:
            raise RunLoadError(f"setting {xi} out of range", lineno)
        try:
            expect = game.score(xi, ai)
        except InvalidOutcomeError as exc:
            raise RunLoadError(str(exc), lineno) from exc
        if abs(expect - si) > SCORE_CHECK_TOL * max(1.0, abs(expect)):
            raise RunLoadError(f"recorded score {si!r} differs from recomputed {expect!r}", lineno)
        x[i], a[i], s[i] = xi, ai, si
    return RunRecord(config, x, a, s, header.get("metadata", {}))


# -- presets -----------------------------------------------------------------

EXPERIMENT_PRESETS = {
    "ghz-paper": dict(
        n=600,
        alpha=0.05,
        witness={"preset": "ghz"},
        source={"kind": "iid", "state": "table4"},
        tau=1e-6,
        delta=2e-3,
        gamma_ceiling=0.01,
    ),
    "ghz-drift": dict(
        n=600,
        alpha=0.05,
        witness={"preset": "ghz"},
        source={"kind": "drift", "preset": "table3", "step": 0.98, "theta0": 0.0},
        tau=1e-6,
        delta=2e-3,
        gamma_ceiling=0.01,
    ),
    "ghz-fraction": dict(
        n=600,
        alpha=0.05,
        witness={"preset": "ghz", "readout": {"u": 1.0, "v": 1.0}},
        source={"kind": "fraction", "F": 0.672},
        tau=1e-6,
        delta=2e-3,
        gamma_ceiling=0.01,
    ),
    "null-product": dict(
        n=600,
        alpha=0.05,
        witness={"preset": "ghz"},
        source={"kind": "iid", "state": "product000"},
        tau=1e-6,
        delta=2e-3,
        sim_tau=1e-6,
        sim_delta=2e-3,
    ),
}


def experiment_preset(name: str, **overrides) -> ExperimentConfig:
    try:
        base = dict(EXPERIMENT_PRESETS[name])
    except KeyError as exc:
        raise DomainError(f"unknown experiment preset {name!r}; known: {sorted(EXPERIMENT_PRESETS)}") from exc
    base.update(overrides)
    return ExperimentConfig(**base)
