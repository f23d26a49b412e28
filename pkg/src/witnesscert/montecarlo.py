"""Repeated simulated experiments and their summaries.

Repetition ``r`` always uses the random stream ``(seed, r)``, so results do
not depend on the number of workers or on scheduling.  Each repetition
yields one row (witness estimate, normalized score, p-value bound, true
average witness value, iid Gaussian error bar); failed repetitions are
recorded and left out of the aggregates.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm, skew

from . import stats
from .errors import DomainError, WitnessError
from .experiment import ExperimentConfig, RunRecord, _Measurement, run_experiment
from .rng import make_rng

ROW_FIELDS = ("rep", "w_hat", "t_n", "p_bound", "true_w", "sigma_hat", "covered", "rejected")
QUANTILES = (0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975)


@dataclass(frozen=True)
class McConfig:
    repetitions: int
    experiment: ExperimentConfig
    workers: int = 1
    bins: int | None = None
    per_run_csv: str | None = None

    def __post_init__(self):
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise DomainError("repetitions must be a positive integer")
        if self.workers < 1:
            raise DomainError("workers must be at least 1")
        if self.bins is not None and self.bins < 1:
            raise DomainError("bins must be at least 1")


def gaussian_reference(run: RunRecord | Sequence[float], c: float | None = None) -> tuple[float, float]:
    """(mean, std of the mean) of the iid Gaussian description of a run.

    The mean is the witness estimate and the spread is the sample standard
    deviation of the scores divided by sqrt(n).
    """
    if isinstance(run, RunRecord):
        scores = run.scores
        if c is None:
            c = run.config.build_game().c
    else:
        scores = np.asarray(run, dtype=float)
        if c is None:
            raise DomainError("c is required when passing raw scores")
    n = scores.size
    if n < 2:
        raise DomainError("need at least two rounds for a Gaussian reference")
    return stats.witness_estimate(scores, c), float(np.std(scores, ddof=1) / math.sqrt(n))


def _rows_for(exp_dict: dict, reps: Sequence[int]) -> tuple[dict[str, np.ndarray], list[dict]]:
    """Columns of per-repetition results for ``reps`` plus the failed repetitions."""
    cfg = ExperimentConfig.from_dict(exp_dict)
    game = cfg.build_game()
    source = cfg.build_source()
    meas = _Measurement(game)
    gamma = cfg.gamma(game)
    beta = stats.beta_param(game.c, gamma, game.s_min, game.delta_s)
    eps = stats.confidence_radius(cfg.n, cfg.alpha, gamma, game.delta_s)
    size = len(reps)
    dtypes = {"rep": np.int64, "covered": bool, "rejected": bool}
    cols = {k: np.empty(size, dtype=dtypes.get(k, float)) for k in ROW_FIELDS}
    ok = np.zeros(size, dtype=bool)
    failures = []
    for i, r in enumerate(reps):
        try:
            run = run_experiment(source, game, cfg, make_rng(cfg.seed, r), measurement=meas)
            t = stats.total_normalized_score(run.scores, game.s_min, game.delta_s)
            p = stats.p_value_bound(t, cfg.n, beta)
            w_hat = stats.witness_estimate(run.scores, game.c)
            sigma = float(np.std(run.scores, ddof=1) / math.sqrt(cfg.n)) if cfg.n > 1 else math.nan
        except (WitnessError, np.linalg.LinAlgError, FloatingPointError) as exc:
            failures.append({"rep": r, "error": f"{type(exc).__name__}: {exc}"})
            continue
        true_w = run.metadata["true_witness_mean"]
        ok[i] = True
        cols["rep"][i] = r
        cols["w_hat"][i] = w_hat
        cols["t_n"][i] = t
        cols["p_bound"][i] = p
        cols["true_w"][i] = true_w
        cols["sigma_hat"][i] = sigma
        cols["covered"][i] = abs(true_w - w_hat) <= eps
        cols["rejected"][i] = p <= cfg.alpha
    return {k: v[ok] for k, v in cols.items()}, failures


@dataclass
class McSummary:
    """Per-repetition columns (successful repetitions, ordered by id) and aggregates."""

    data: dict[str, np.ndarray]
    alpha: float
    epsilon: float
    failures: list[dict] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.data[name], dtype=float)

    @property
    def rows(self) -> list[dict]:
        return [{k: self.data[k][i].item() for k in ROW_FIELDS} for i in range(self.n_ok)]

    @property
    def n_ok(self) -> int:
        return int(self.data["rep"].size)

    @property
    def has_failures(self) -> bool:
        return bool(self.failures)

    def quantiles(self, name: str = "w_hat") -> dict[str, float]:
        q = np.quantile(self.column(name), QUANTILES)
        return {f"q{100 * k:g}": float(v) for k, v in zip(QUANTILES, q)}

    def skewness(self, name: str = "w_hat") -> float:
        col = self.column(name)
        return float(skew(col)) if col.size > 2 and np.std(col) > 0 else 0.0

    @property
    def rejection_rate(self) -> float:
        return float(np.mean(self.data["rejected"]))

    @property
    def coverage_rate(self) -> float:
        return float(np.mean(self.data["covered"]))

    def median_index(self) -> int:
        """Position of the repetition whose witness estimate is the (lower) median."""
        order = np.argsort(self.column("w_hat"), kind="stable")
        return int(order[(len(order) - 1) // 2])

    def median_run(self) -> dict:
        i = self.median_index()
        return {k: self.data[k][i].item() for k in ROW_FIELDS}

    def central_width(self, level: float = 0.95) -> float:
        lo, hi = np.quantile(self.column("w_hat"), [(1 - level) / 2, (1 + level) / 2])
        return float(hi - lo)

    def gaussian_width_ratio(self, level: float = 0.95) -> float:
        """Median run's iid Gaussian interval width over the empirical central width.

        Values above 1 mean the iid error bar overstates the spread seen
        across repetitions.
        """
        z = norm.ppf((1 + level) / 2)
        return 2 * z * self.median_run()["sigma_hat"] / self.central_width(level)

    def as_dict(self) -> dict:
        w = self.column("w_hat")
        med = self.median_run()
        return {
            "repetitions": self.n_ok + len(self.failures),
            "failures": len(self.failures),
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "w_hat_mean": float(w.mean()),
            "w_hat_std": float(w.std(ddof=1)) if w.size > 1 else 0.0,
            "w_hat_skewness": self.skewness(),
            "w_hat_quantiles": self.quantiles(),
            "true_w_mean": float(self.column("true_w").mean()),
            "p_bound_quantiles": self.quantiles("p_bound"),
            "rejection_rate": self.rejection_rate,
            "coverage_rate": self.coverage_rate,
            "median_run": {"rep": med["rep"], "w_hat": med["w_hat"], "sigma_hat": med["sigma_hat"]},
        }


def _chunks(reps: Sequence[int], k: int) -> list[list[int]]:
    size = max(1, math.ceil(len(reps) / (4 * k)))
    return [list(reps[i : i + size]) for i in range(0, len(reps), size)]


def run_monte_carlo(cfg: McConfig) -> McSummary:
    exp_dict = cfg.experiment.to_dict()
    reps = list(range(cfg.repetitions))
    if cfg.workers == 1:
        parts = [_rows_for(exp_dict, reps)]
    else:
        chunks = _chunks(reps, cfg.workers)
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_rows_for, [exp_dict] * len(chunks), chunks))
    data = {k: np.concatenate([p[0][k] for p in parts]) for k in ROW_FIELDS}
    order = np.argsort(data["rep"], kind="stable")
    data = {k: v[order] for k, v in data.items()}
    failures = sorted((f for p in parts for f in p[1]), key=lambda f: f["rep"])
    if data["rep"].size == 0:
        raise WitnessError(f"all {len(failures)} repetitions failed; first error: {failures[0]['error']}")
    game = cfg.experiment.build_game()
    eps = stats.confidence_radius(cfg.experiment.n, cfg.experiment.alpha, cfg.experiment.gamma(game), game.delta_s)
    summary = McSummary(data, cfg.experiment.alpha, eps, failures)
    if cfg.per_run_csv:
        write_rows_csv(summary.rows, cfg.per_run_csv)
    return summary


def write_rows_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (int(r[k]) if isinstance(r[k], (bool, np.bool_)) else r[k]) for k in ROW_FIELDS})


# -- histograms --------------------------------------------------------------


def freedman_diaconis_edges(data: Sequence[float], bins: int | None = None) -> np.ndarray:
    """Bin edges; Freedman-Diaconis width unless ``bins`` is given."""
    x = np.asarray(data, dtype=float)
    if x.size == 0:
        raise DomainError("no data to bin")
    if bins is not None:
        return np.histogram_bin_edges(x, bins=bins)
    return np.histogram_bin_edges(x, bins="fd")


def histogram(data: Sequence[float], bins: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    edges = freedman_diaconis_edges(data, bins)
    counts, _ = np.histogram(np.asarray(data, dtype=float), bins=edges)
    return counts, edges


def histogram_svg(
    counts: Sequence[int],
    edges: Sequence[float],
    title: str = "",
    xlabel: str = "",
    marker: float | None = None,
    width: int = 640,
    height: int = 360,
) -> str:
    """A minimal standalone SVG bar chart, with an optional vertical marker line."""
    counts = np.asarray(counts, dtype=float)
    edges = np.asarray(edges, dtype=float)
    ml, mr, mt, mb = 50, 20, 30, 40
    pw, ph = width - ml - mr, height - mt - mb
    x0, x1 = float(edges[0]), float(edges[-1])
    span = x1 - x0 if x1 > x0 else 1.0
    top = counts.max() if counts.size and counts.max() > 0 else 1.0

    def sx(v):
        return ml + (v - x0) / span * pw

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle">{title}</text>',
    ]
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        h = c / top * ph
        parts.append(
            f'<rect x="{sx(a):.2f}" y="{mt + ph - h:.2f}" width="{max(sx(b) - sx(a) - 0.5, 0.5):.2f}" '
            f'height="{h:.2f}" fill="#4a7ab5"/>'
        )
    parts.append(f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>')
    parts.append(f'<text x="{ml}" y="{height - 20}" text-anchor="start">{x0:.4g}</text>')
    parts.append(f'<text x="{ml + pw}" y="{height - 20}" text-anchor="end">{x1:.4g}</text>')
    parts.append(f'<text x="{width / 2}" y="{height - 5}" text-anchor="middle">{xlabel}</text>')
    if marker is not None and x0 <= marker <= x1:
        parts.append(f'<line x1="{sx(marker):.2f}" y1="{mt}" x2="{sx(marker):.2f}" y2="{mt + ph}" stroke="red"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- scaling sweep -----------------------------------------------------------

SWEEP_FIELDS = ("t_n", "n", "beta", "p_bound", "log10_p_bound")
ANCHOR = (440.97, 600, 0.662)


def scaling_sweep(
    t_values: Iterable[float],
    n_values: Iterable[int],
    beta_values: Iterable[float],
    include_anchor: bool = True,
) -> list[dict]:
    """p-value bound on a (t_n, n, beta) grid, evaluated in log space.

    Grid points outside the domain (t_n > n, non-integer n, beta outside
    [0, 1]) are skipped with a warning.
    """
    rows = []
    grid = [(float(t), n, float(b)) for n in n_values for b in beta_values for t in t_values]
    if include_anchor and ANCHOR not in grid:
        grid.append(ANCHOR)
    for t, n, b in grid:
        try:
            lp = stats.log_p_value_bound(t, n, b)
        except DomainError as exc:
            warnings.warn(f"skipping (t_n={t}, n={n}, beta={b}): {exc}", stacklevel=2)
            continue
        rows.append({"t_n": t, "n": int(n), "beta": b, "p_bound": math.exp(lp), "log10_p_bound": lp / math.log(10)})
    return rows


def write_sweep_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def parse_range(spec: str, integer: bool = False) -> list:
    """``a:b:k`` gives k evenly spaced values from a to b; a comma list is taken literally."""
    spec = spec.strip()
    try:
        if ":" in spec:
            a, b, k = spec.split(":")
            vals = np.linspace(float(a), float(b), int(k))
        else:
            vals = np.array([float(v) for v in spec.split(",") if v.strip()])
    except ValueError as exc:
        raise DomainError(f"cannot parse range {spec!r}; use a:b:k or a comma list") from exc
    if integer:
        return [int(round(v)) for v in vals]
    return [float(v) for v in vals]


def write_outputs(summary: McSummary, outdir, svg: bool = True, bins: int | None = None) -> dict[str, Path]:
    """per_run.csv, summary.json and optional histograms into ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"per_run": out / "per_run.csv", "summary": out / "summary.json"}
    write_rows_csv(summary.rows, paths["per_run"])
    doc = summary.as_dict()
    if summary.failures:
        doc["failure_messages"] = [f["error"] for f in summary.failures[:20]]
    paths["summary"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if svg:
        counts, edges = histogram(summary.column("w_hat"), bins)
        paths["hist_w_hat"] = out / "hist_w_hat.svg"
        paths["hist_w_hat"].write_text(
            histogram_svg(counts, edges, "witness estimates", "w_hat", marker=doc["true_w_mean"]), encoding="utf-8"
        )
        # floor keeps underflowed bounds finite
        logp = np.log10(np.maximum(summary.column("p_bound"), np.finfo(float).tiny))
        counts, edges = histogram(logp, bins)
        paths["hist_p_bound"] = out / "hist_p_bound.svg"
        paths["hist_p_bound"].write_text(
            histogram_svg(counts, edges, "p-value bounds", "log10 p_bound", marker=math.log10(summary.alpha)),
            encoding="utf-8",
        )
    return paths
