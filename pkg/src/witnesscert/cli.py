"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data-integrity failure, 3 numeric
domain or model error.  ``--json`` switches every subcommand to a single JSON
object carrying a versioned ``schema`` field.  Output files default to the
directory named by ``WITNESSCERT_OUTDIR`` (or the working directory).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import stats
from .config import load_game, load_json
from .correction import DeviceNoise, witness_correction
from .errors import DataIntegrityError, WitnessError
from .experiment import (
    EXPERIMENT_PRESETS,
    ExperimentConfig,
    analyze_estimation,
    analyze_rejection,
    experiment_preset,
    load_run,
    save_run,
    simulate,
)
from .montecarlo import McConfig, parse_range, run_monte_carlo, scaling_sweep, write_outputs, write_sweep_csv
from .witness import WitnessGame, pauli_readout_model

SCHEMA = "witnesscert.cli/1"
OUTDIR_ENV = "WITNESSCERT_OUTDIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _outpath(path: str | None, default: str) -> Path:
    p = Path(path or default)
    if not p.is_absolute():
        p = Path(os.environ.get(OUTDIR_ENV, ".")) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _game(args) -> WitnessGame:
    game = load_game(args.witness or args.preset)
    if getattr(args, "u", None) is not None or getattr(args, "v", None) is not None:
        u = 1.0 if args.u is None else args.u
        v = 1.0 if args.v is None else args.v
        game = WitnessGame(game.decomp, pauli_readout_model(game.decomp, u, v), game.dist, game.name)
    return game


def _read_scores(path: str) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    vals = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.replace(",", " ").split():
            try:
                vals.append(float(tok))
            except ValueError as exc:
                raise DataIntegrityError(f"{path} line {lineno}: not a number: {tok!r}") from exc
    if not vals:
        raise DataIntegrityError(f"{path}: no scores")
    return np.array(vals)


def _require_seed(args):
    if args.seed is None and os.environ.get("CI"):
        raise UsageError("--seed is mandatory when CI is set")


def _emit(args, payload: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps({"schema": SCHEMA, "command": args.command, **payload}, indent=2, sort_keys=True))
    else:
        print("\n".join(lines))


def _add_witness_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--preset", default="ghz", help="bundled witness (default: ghz)")
    g.add_argument("--witness", help="witness config JSON file")
    p.add_argument("--u", type=float, help="readout fidelity of the +1 eigenstate (Pauli settings)")
    p.add_argument("--v", type=float, help="readout fidelity of the -1 eigenstate (Pauli settings)")


# -- subcommands -------------------------------------------------------------


def cmd_gamma(args):
    game = _game(args)
    delta = _floats(args.delta)
    if len(delta) == 1:
        delta = delta * game.m
    br = witness_correction(game, DeviceNoise(args.tau, tuple(delta)))
    _emit(
        args,
        {"tau": args.tau, "delta": delta, **br.as_dict()},
        [
            f"witness        {game.name or 'custom'}",
            f"tau            {args.tau:g}",
            f"delta          {', '.join(f'{d:g}' for d in delta)}",
            f"gamma1         {br.gamma1:.6e}",
            f"gamma2         {br.gamma2:.6e}",
            f"gamma2 (1st)   {br.gamma2_first_order:.6e}",
            f"gamma          {br.gamma:.6e}",
        ],
    )


def cmd_score_table(args):
    game = _game(args)
    settings = []
    lines = [f"c = {game.c:g}", "setting  p_x       outcomes -> score"]
    for x, st in enumerate(game.decomp.settings):
        tab = game.score_tables[x]
        entries = []
        for idx in np.ndindex(tab.shape):
            a = [float(game.outcome_values[x][j][k]) for j, k in enumerate(idx)]
            entries.append({"outcome": a, "score": float(tab[idx])})
        settings.append({"index": x, "label": st.label, "p": game.dist[x], "scores": entries})
        lines.append(f"{x} {st.label:<6} {game.dist[x]:.6f}")
        for e in entries:
            lines.append("    (" + ", ".join(f"{v:+.6f}" for v in e["outcome"]) + f") -> {e['score']:+.6f}")
    lines.append(f"s_min = {game.s_min:.9f}  s_max = {game.s_max:.9f}  delta_s = {game.delta_s:.9f}")
    _emit(
        args,
        {"c": game.c, "settings": settings, "s_min": game.s_min, "s_max": game.s_max, "delta_s": game.delta_s},
        lines,
    )


def _beta_from_args(args) -> float:
    if args.beta is not None:
        return args.beta
    game = _game(args)
    if args.gamma is None:
        raise UsageError("give --beta, or --gamma together with a witness")
    return stats.beta_param(game.c, args.gamma, game.s_min, game.delta_s)


def cmd_pvalue(args):
    if args.scores:
        game = _game(args)
        if args.gamma is None:
            raise UsageError("--scores needs --gamma")
        res = stats.rejection_test(
            _read_scores(args.scores), game.c, args.gamma, game.s_min, game.delta_s, args.alpha, args.method
        )
    else:
        if args.tn is None or args.n is None:
            raise UsageError("give --tn and --n, or --scores")
        beta = _beta_from_args(args)
        fn = stats.p_value_bound if args.method == "bentkus" else stats.hoeffding_p_bound
        res = stats.RejectionResult(args.tn, beta, fn(args.tn, args.n, beta), args.n, args.alpha, args.method)
    d = res.as_dict()
    _emit(
        args,
        d,
        [
            f"t_n      {res.t_n:.6f}",
            f"n        {res.n}",
            f"beta     {res.beta:.6f}",
            f"p_bound  {res.p_bound:.6e}  ({res.method})",
            f"alpha    {res.alpha:g}",
            f"rejected {str(res.rejected).lower()}",
        ],
    )


def cmd_ci(args):
    if args.scores:
        game = _game(args)
        res = stats.estimation(_read_scores(args.scores), game.c, args.gamma, game.delta_s, args.alpha, args.method)
    else:
        if args.n is None:
            raise UsageError("give --n (and optionally --w-hat), or --scores")
        ds = args.delta_s if args.delta_s is not None else _game(args).delta_s
        radius = stats.confidence_radius if args.method == "bentkus" else stats.hoeffding_radius
        res = stats.EstimationResult(args.w_hat, radius(args.n, args.alpha, args.gamma, ds), args.alpha, args.n, args.method)
    lo, hi = res.two_sided
    _emit(
        args,
        res.as_dict(),
        [
            f"w_hat       {res.w_hat:.6f}",
            f"epsilon     {res.epsilon:.6f}  ({res.method})",
            f"two-sided   [{lo:.6f}, {hi:.6f}]  at confidence {1 - 2 * res.alpha:g}",
            f"one-sided   (-inf, {hi:.6f}]  at confidence {1 - res.alpha:g}",
        ],
    )


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        data = load_json(args.config)
    else:
        data = dict(EXPERIMENT_PRESETS[args.preset])
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "n", None) is not None:
        data["n"] = args.n
    return ExperimentConfig.from_dict(data)


def cmd_simulate(args):
    _require_seed(args)
    cfg = _experiment_config(args)
    run = simulate(cfg)
    out = _outpath(args.out, "run.jsonl")
    save_run(run, out, timestamp=args.timestamp)
    _emit(
        args,
        {"path": str(out), "n": run.n, "digest": run.digest, "metadata": run.metadata},
        [f"wrote {run.n} rounds to {out}", f"digest {run.digest}", f"true <W>_n {run.metadata['true_witness_mean']:.6f}"],
    )


def cmd_analyze(args):
    run = load_run(args.run)
    game = run.config.build_game()
    gamma = args.gamma if args.gamma is not None else run.config.gamma(game)
    if args.mode == "rejection":
        res = analyze_rejection(run, gamma, args.alpha, game, args.method)
        payload = {"mode": "rejection", "gamma": gamma, **res.as_dict()}
        lines = [
            f"gamma    {gamma:.6g}",
            f"t_n      {res.t_n:.6f}",
            f"beta     {res.beta:.6f}",
            f"p_bound  {res.p_bound:.6e}",
            f"rejected={str(res.rejected).lower()}",
        ]
    else:
        res = analyze_estimation(run, gamma, args.alpha, game, args.method)
        lo, hi = res.two_sided
        payload = {"mode": "estimation", "gamma": gamma, **res.as_dict()}
        lines = [
            f"gamma    {gamma:.6g}",
            f"w_hat    {res.w_hat:.6f}",
            f"epsilon  {res.epsilon:.6f}",
            f"interval [{lo:.6f}, {hi:.6f}]",
            f"upper    {hi:.6f}",
        ]
    _emit(args, payload, lines)


def cmd_montecarlo(args):
    _require_seed(args)
    if args.config:
        data = load_json(args.config)
        exp = data.get("experiment") or dict(EXPERIMENT_PRESETS[data.get("preset", "ghz-paper")])
        reps = int(data.get("repetitions", args.reps))
        workers = int(data.get("workers", args.workers))
        bins = data.get("bins", args.bins)
    else:
        exp = dict(EXPERIMENT_PRESETS[args.preset])
        reps, workers, bins = args.reps, args.workers, args.bins
    if args.seed is not None:
        exp["seed"] = args.seed
    if args.n is not None:
        exp["n"] = args.n
    summary = run_monte_carlo(McConfig(reps, ExperimentConfig.from_dict(exp), workers=workers, bins=bins))
    paths = write_outputs(summary, _outpath(args.out, "montecarlo"), svg=not args.no_svg, bins=bins)
    doc = summary.as_dict()
    q = doc["w_hat_quantiles"]
    _emit(
        args,
        {"summary": doc, "outputs": {k: str(v) for k, v in paths.items()}},
        [
            f"repetitions   {doc['repetitions']} (failures {doc['failures']})",
            f"w_hat mean    {doc['w_hat_mean']:.6f}  std {doc['w_hat_std']:.6f}  skew {doc['w_hat_skewness']:.4f}",
            f"w_hat 95%     [{q['q2.5']:.6f}, {q['q97.5']:.6f}]",
            f"true <W>_n    {doc['true_w_mean']:.6f}",
            f"rejection     {doc['rejection_rate']:.4f} at alpha {doc['alpha']:g}",
            f"coverage      {doc['coverage_rate']:.4f}",
            f"outputs       {paths['summary'].parent}",
        ],
    )


def cmd_sweep(args):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = scaling_sweep(
            parse_range(args.tn), parse_range(args.n, integer=True), parse_range(args.beta), not args.no_anchor
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = _outpath(args.out, "sweep.csv")
    write_sweep_csv(rows, out)
    _emit(args, {"path": str(out), "rows": len(rows), "skipped": len(caught)}, [f"wrote {len(rows)} rows to {out}"])


def _walkthrough(args):
    cfg = experiment_preset("ghz-paper", **({"seed": args.seed} if args.seed is not None else {}))
    game = cfg.build_game()
    br = witness_correction(game, cfg.noise(game))
    gamma = cfg.gamma(game)
    run = simulate(cfg)
    rej = analyze_rejection(run, gamma, cfg.alpha, game)
    est = analyze_estimation(run, gamma, cfg.alpha, game)
    a_plus, a_minus = game.outcome_values[0][0]
    payload = {
        "config": cfg.to_dict(),
        "readout_values": [float(a_plus), float(a_minus)],
        "setting_distribution": list(game.dist.p),
        "score_range": {"s_min": game.s_min, "s_max": game.s_max, "delta_s": game.delta_s},
        "correction": br.as_dict(),
        "gamma_used": gamma,
        "true_witness_mean": run.metadata["true_witness_mean"],
        "rejection": rej.as_dict(),
        "estimation": est.as_dict(),
    }
    if args.out:
        out = _outpath(args.out, "run.jsonl")
        save_run(run, out)
        payload["path"] = str(out)
    lo, hi = est.two_sided
    _emit(
        args,
        payload,
        [
            "1. witness  I/2 - |GHZ><GHZ|, 5 settings, n = 600, alpha = 0.05",
            f"   readout  a+ = {a_plus:.6f}, a- = {a_minus:.6f}",
            "   p_x      " + ", ".join(f"{p:.4f}" for p in game.dist.p),
            f"   scores   s_min = {game.s_min:.6f}, s_max = {game.s_max:.6f}, delta_s = {game.delta_s:.6f}",
            f"2. gamma1 = {br.gamma1:.3e}, gamma2 = {br.gamma2:.3e}, gamma = {br.gamma:.3e} (using {gamma:g})",
            f"3. simulated {run.n} rounds of the Table-4 state (seed {cfg.seed}), true <W> = "
            f"{run.metadata['true_witness_mean']:.6f}",
            f"4a. t_n = {rej.t_n:.3f}, beta = {rej.beta:.6f}, p_bound = {rej.p_bound:.3e}, "
            f"rejected = {str(rej.rejected).lower()}",
            f"4b. w_hat = {est.w_hat:.6f}, epsilon = {est.epsilon:.6f}, interval [{lo:.6f}, {hi:.6f}]",
        ],
    )


def cmd_presets(args):
    if args.name is None:
        _emit(
            args,
            {"experiments": sorted(EXPERIMENT_PRESETS), "witnesses": ["ghz"]},
            ["experiment presets: " + ", ".join(sorted(EXPERIMENT_PRESETS)), "witness presets: ghz"],
        )
        return
    if args.name == "ghz-paper" and not args.show:
        _walkthrough(args)
        return
    cfg = experiment_preset(args.name)
    _emit(args, {"name": args.name, "config": cfg.to_dict()}, [json.dumps(cfg.to_dict(), indent=2, sort_keys=True)])


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="witnesscert", description="Finite-statistics entanglement witness analysis.")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--seed", type=int, help="master seed for simulations")
    # The global flags are also accepted after the subcommand.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("gamma", parents=[common], help="witness correction from device bounds")
    _add_witness_args(s)
    s.add_argument("--tau", type=float, required=True, help="setting-probability bias bound")
    s.add_argument("--delta", required=True, help="POVM bound, one value or one per subsystem")
    s.set_defaults(func=cmd_gamma)

    s = sub.add_parser("score-table", parents=[common], help="score of every setting and outcome")
    _add_witness_args(s)
    s.set_defaults(func=cmd_score_table)

    s = sub.add_parser("pvalue", parents=[common], help="p-value bound from t_n or a score file")
    _add_witness_args(s)
    s.add_argument("--tn", type=float)
    s.add_argument("--n", type=int)
    s.add_argument("--beta", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--scores", help="text file of scores")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--method", choices=("bentkus", "hoeffding"), default="bentkus")
    s.set_defaults(func=cmd_pvalue)

    s = sub.add_parser("ci", parents=[common], help="confidence radius and intervals")
    _add_witness_args(s)
    s.add_argument("--n", type=int)
    s.add_argument("--w-hat", type=float, default=0.0)
    s.add_argument("--gamma", type=float, default=0.0)
    s.add_argument("--delta-s", type=float)
    s.add_argument("--scores", help="text file of scores")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--method", choices=("bentkus", "hoeffding"), default="bentkus")
    s.set_defaults(func=cmd_ci)

    s = sub.add_parser("simulate", parents=[common], help="simulate one experiment and write a run file")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--config", help="experiment config JSON")
    g.add_argument("--preset", default="ghz-paper", choices=sorted(EXPERIMENT_PRESETS))
    s.add_argument("--n", type=int, help="override the number of rounds")
    s.add_argument("--out", help="run file (default run.jsonl)")
    s.add_argument("--timestamp", action="store_true", help="record the creation time in the header")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", parents=[common], help="rejection or estimation analysis of a run file")
    s.add_argument("--run", required=True)
    s.add_argument("--mode", choices=("rejection", "estimation"), default="rejection")
    s.add_argument("--gamma", type=float, help="default: from the run's config")
    s.add_argument("--alpha", type=float, help="default: from the run's config")
    s.add_argument("--method", choices=("bentkus", "hoeffding"), default="bentkus")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("montecarlo", parents=[common], help="repeated simulations with CSV, JSON and SVG output")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--config", help="JSON with repetitions and an experiment block or preset name")
    g.add_argument("--preset", default="ghz-paper", choices=sorted(EXPERIMENT_PRESETS))
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--n", type=int, help="override the number of rounds")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--bins", type=int)
    s.add_argument("--no-svg", action="store_true")
    s.add_argument("--out", help="output directory (default montecarlo)")
    s.set_defaults(func=cmd_montecarlo)

    s = sub.add_parser("sweep", parents=[common], help="p-value bound over a (t_n, n, beta) grid")
    s.add_argument("--tn", required=True, help="a:b:k or comma list")
    s.add_argument("--n", required=True, help="a:b:k or comma list")
    s.add_argument("--beta", required=True, help="a:b:k or comma list")
    s.add_argument("--no-anchor", action="store_true")
    s.add_argument("--out", help="CSV path (default sweep.csv)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("presets", parents=[common], help="list presets, show one, or run the ghz-paper walkthrough")
    s.add_argument("name", nargs="?", choices=sorted(EXPERIMENT_PRESETS))
    s.add_argument("--show", action="store_true", help="print the config instead of running it")
    s.add_argument("--out", help="also save the walkthrough run")
    s.set_defaults(func=cmd_presets)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        args.func(args)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except DataIntegrityError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (WitnessError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
