"""Command-line harness: ``pairrank <command> [options]``.

Every command writes its artifacts under ``--out-dir`` together with a
``manifest-<command>.json`` that records the exact argument vector;
``pairrank replay <manifest>`` re-runs it.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .core import ComparisonSet, ItemSet, load_comparisons, load_items, validate
from .errors import PairrankError
from .judge import PROMPTS, JudgeEndpointConfig, judge_pairs, write_failures
from .metrics import evaluate, ols_fit, pearson
from .scoring import OptimizerConfig, ScoringMethod, poe_bt_score, poe_tm_score, score
from .selection import (
    FullOrdered,
    FullUnordered,
    RandomK,
    RoundRobinPlusRandom,
    SampledWithReplacement,
    select_pairs,
)
from .simulate import (
    CurveConfig,
    HardDecision,
    Miscalibrated,
    SoftCalibrated,
    StandardNormal,
    Uniform,
    judge_probabilities,
    run_curve,
    trial_streams,
)
from .targets import (
    GAMMA_GRID,
    Link,
    TargetConfig,
    build_training_pairs,
    score_stddev,
    soft_targets,
    target_histogram,
    write_training_pairs,
)

log = logging.getLogger("pairrank")


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_manifest(args: argparse.Namespace, argv: Sequence[str], artifacts: list[Path], seeds) -> Path:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "seeds": seeds,
        "artifacts": [str(p) for p in artifacts],
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = Path(args.out_dir) / f"manifest-{args.command}.json"
    _write_json(path, manifest)
    return path


def _optimizer(args) -> OptimizerConfig:
    return OptimizerConfig(max_iters=args.max_iters, grad_tol=args.grad_tol,
                           l2_lambda=args.l2_lambda, init_seed=args.init_seed)


def _judge_model(args):
    if args.judge == "hard":
        return HardDecision(args.flip)
    if args.judge == "miscalibrated":
        return Miscalibrated(args.gamma_judge, args.noise, args.bias)
    return SoftCalibrated(args.gamma_judge, args.noise)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


# -- commands ------------------------------------------------------------------


def cmd_score(args) -> tuple[list[Path], list]:
    items = load_items(args.items)
    cset = load_comparisons(args.comparisons, items)
    report = validate(cset)
    print(report.summary(), file=sys.stderr)
    if report.uncovered:
        log.warning("%d item(s) never compared: %s", len(report.uncovered), list(report.uncovered[:10]))
    if not report.connected and len(cset):
        log.warning("comparison graph is disconnected (%d components); scores are gauge-fixed "
                    "jointly and only comparable within a component", report.n_components)

    method = ScoringMethod.parse(args.method)
    cfg = _optimizer(args)
    pred = score(cset, method, cfg)
    for w in pred.warnings:
        if report.connected or "components" not in w:
            log.warning("%s", w)

    out = Path(args.out_dir)
    score_path = out / "scores.jsonl"
    with open(score_path, "w", encoding="utf-8") as fh:
        header = {"method": method.value, "lambda": cfg.l2_lambda, "iterations": pred.iterations,
                  "converged": pred.converged, "gauge": pred.gauge.value, "n": len(pred)}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for item_id, value in zip(pred.ids, pred.values.tolist()):
            fh.write(json.dumps({"id": item_id, "score": value}) + "\n")

    metrics_path = out / "metrics.json"
    if items.has_gold():
        rep = evaluate(pred, items.gold_scores())
        _write_json(metrics_path, {"available": True, **rep.to_dict()})
        print(f"spearman={rep.spearman:.4f} pearson={rep.pearson:.4f} rmse_scaled={rep.rmse_scaled:.4g}")
    else:
        _write_json(metrics_path, {"available": False, "reason": "items carry no gold scores"})
        print("metrics unavailable: items carry no gold scores")
    return [score_path, metrics_path], []


def cmd_curve(args) -> tuple[list[Path], list]:
    dist = Uniform(args.lo, args.hi) if args.dist == "uniform" else StandardNormal()
    cfg = CurveConfig(
        n=args.n,
        judge=_judge_model(args),
        k_values=tuple(t.strip() for t in args.k_grid.split(",") if t.strip()),
        methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
        n_seeds=args.n_seeds,
        base_seed=args.seed,
        true_score_dist=dist,
        optimizer=_optimizer(args),
    )
    rows = run_curve(cfg, jobs=args.jobs)
    path = Path(args.out_dir) / "curve.csv"
    _write_csv(path, ["method", "K", "seed", "spearman", "pearson", "rmse_scaled", "spearman_pct", "pearson_pct"],
               [(r.method, r.k, r.seed, r.spearman, r.pearson, r.rmse_scaled,
                 100.0 * r.spearman, 100.0 * r.pearson) for r in rows])
    for r in rows:
        if r.seed == "mean":
            print(f"{r.method:>9} K={r.k:<6d} pearson={r.pearson:.4f} spearman={r.spearman:.4f}")
    return [path], [[args.seed, t] for t in range(args.n_seeds)]


def _sweep_scores(args) -> np.ndarray:
    if args.items:
        return load_items(args.items).gold_scores().values
    score_rng, _, _ = trial_streams(args.seed)
    return score_rng.standard_normal(args.n)


def cmd_gamma_sweep(args) -> tuple[list[Path], list]:
    scores = _sweep_scores(args)
    sigma = score_stddev(scores)
    pairs = select_pairs(scores.size, FullOrdered())
    link = Link(args.link)
    hist_rows, summary_rows = [], []
    for gamma in _floats(args.gammas):
        cfg = TargetConfig(gamma=gamma, link=link, sigma_s=sigma)
        t = soft_targets(scores[pairs[:, 0]], scores[pairs[:, 1]], cfg)
        hist = target_histogram(t, args.bins)
        for lo, hi, c in hist.rows():
            hist_rows.append((gamma, lo, hi, c))
        mid = float(np.mean((t > 0.05) & (t < 0.95)))
        summary_rows.append((gamma, t.size, mid, float(np.max(np.abs(t - 0.5)))))
        print(f"gamma={gamma:<5g} pairs={t.size} frac_in_(0.05,0.95)={mid:.3f}")
    out = Path(args.out_dir)
    hist_path, summary_path = out / "gamma_sweep.csv", out / "gamma_summary.csv"
    _write_csv(hist_path, ["gamma", "bin_lo", "bin_hi", "count"], hist_rows)
    _write_csv(summary_path, ["gamma", "n_pairs", "frac_mid", "max_abs_dev"], summary_rows)
    return [hist_path, summary_path], [args.seed] if not args.items else []


def cmd_bt_tm_compare(args) -> tuple[list[Path], list]:
    if args.items and args.comparisons:
        items = load_items(args.items)
        cset = load_comparisons(args.comparisons, items)
        seeds = []
    else:
        score_rng, _, judge_rng = trial_streams(args.seed)
        true = score_rng.standard_normal(args.n)
        pairs = select_pairs(args.n, FullOrdered())
        p = judge_probabilities(pairs[:, 0], pairs[:, 1], true, SoftCalibrated(args.gamma_judge, args.noise), judge_rng)
        cset = ComparisonSet(ItemSet.from_scores(true), pairs[:, 0], pairs[:, 1], p)
        seeds = [args.seed]
    report = validate(cset)
    if not report.connected:
        log.warning("comparison set is not connected; the slope mixes components")
    cfg = _optimizer(args)
    bt = poe_bt_score(cset, cfg)
    tm = poe_tm_score(cset, cfg)
    slope, intercept = ols_fit(tm.values, bt.values)
    r = pearson(tm.values, bt.values)
    result = {"slope": slope, "intercept": intercept, "r": r, "n": len(bt),
              "bt_converged": bt.converged, "tm_converged": tm.converged}
    out = Path(args.out_dir)
    json_path, csv_path = out / "bt_tm.json", out / "bt_tm_scores.csv"
    _write_json(json_path, result)
    _write_csv(csv_path, ["id", "poe_tm", "poe_bt"], list(zip(bt.ids, tm.values.tolist(), bt.values.tolist())))
    print(f"slope={slope:.4f} intercept={intercept:.3g} r={r:.5f}")
    return [json_path, csv_path], seeds


def _pairing(args):
    name = args.pairing
    if name == "full-ordered":
        return FullOrdered()
    if name == "full-unordered":
        return FullUnordered()
    if name == "random-k":
        return RandomK(args.count, args.seed)
    if name == "round-robin":
        return RoundRobinPlusRandom(args.count, args.seed)
    return SampledWithReplacement(args.count, args.seed)


def cmd_export_targets(args) -> tuple[list[Path], list]:
    items = load_items(args.items)
    cfg = TargetConfig(gamma=args.gamma, link=Link(args.link))
    pairs = build_training_pairs(items, cfg, _pairing(args), rng_seed=args.seed)
    path = Path(args.out_dir) / "training_pairs.jsonl"
    n = write_training_pairs(pairs, path)
    hist = target_histogram([tp.target for tp in pairs], args.bins)
    print(f"wrote {n} training pairs (gamma={args.gamma}, link={args.link})")
    peak = max(hist.counts.max(), 1)
    for lo, hi, c in hist.rows():
        print(f"  [{lo:.2f}, {hi:.2f}) {c:>7d} {'#' * int(round(40 * c / peak))}")
    return [path], [args.seed]


def cmd_judge(args) -> tuple[list[Path], list]:
    items = load_items(args.items)
    if args.prompt in PROMPTS:
        template = PROMPTS[args.prompt]
    else:
        template = Path(args.prompt).read_text(encoding="utf-8")
    labels = tuple(t.strip() for t in args.labels.split(","))
    if len(labels) != 2:
        raise PairrankError("--labels needs exactly two comma-separated tokens")
    cfg = JudgeEndpointConfig(
        base_url=args.base_url, model_name=args.model, prompt_template=template,
        label_tokens=labels, timeout=args.timeout, max_retries=args.max_retries,
        api_key_env=args.api_key_env, backoff_base=args.backoff,
    )
    k = args.k if args.k is not None else 4 * items.N
    strategy = {
        "full-ordered": FullOrdered(),
        "full-unordered": FullUnordered(),
        "random-k": RandomK(k, args.seed),
        "round-robin": RoundRobinPlusRandom(k, args.seed),
    }[args.strategy]
    pairs = select_pairs(items.N, strategy)
    out = Path(args.out_dir)
    cache = Path(args.cache) if args.cache else out / "judge_cache.jsonl"
    res = judge_pairs(items, pairs, cfg, cache, jobs=args.jobs)

    comp_path, fail_path = out / "comparisons.jsonl", out / "judge_failures.jsonl"
    with open(comp_path, "w", encoding="utf-8") as fh:
        for c in res.comparisons:
            fh.write(json.dumps({"i": c.i, "j": c.j, "p": c.p}) + "\n")
    write_failures(res.failures, fail_path)
    print(f"{len(res.comparisons)} judged ({res.n_cached} cached, {res.n_requests} requests, "
          f"{res.n_imputed} with an imputed label), {len(res.failures)} failed")
    if res.failures:
        log.warning("%d pair(s) failed; see %s and re-run to resume", len(res.failures), fail_path)
    return [comp_path, fail_path, cache], [args.seed]


# -- parser --------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--jobs", type=int, default=1, help="concurrent workers")
    p.add_argument("--out-dir", default=".", help="directory for all outputs")
    p.add_argument("--format", choices=["csv"], default="csv", help="tabular output format")
    p.add_argument("-v", "--verbose", action="store_true")


def _optim_flags(p: argparse.ArgumentParser, l2_default: float = 0.01) -> None:
    p.add_argument("--l2-lambda", type=float, default=l2_default)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--grad-tol", type=float, default=1e-8)
    p.add_argument("--init-seed", type=int, default=None)


def _judge_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--judge", choices=["soft", "hard", "miscalibrated"], default="soft")
    p.add_argument("--gamma-judge", type=float, default=5.0)
    p.add_argument("--noise", type=float, default=0.0, help="logit noise sd")
    p.add_argument("--flip", type=float, default=0.1, help="flip probability of the hard judge")
    p.add_argument("--bias", type=float, default=0.0, help="logit bias of the miscalibrated judge")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairrank", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score items from a comparisons file")
    _common(p)
    p.add_argument("--items", required=True)
    p.add_argument("--comparisons", required=True)
    p.add_argument("--method", default="poe-bt", help=", ".join(m.value for m in ScoringMethod))
    _optim_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("curve", help="metric vs number of comparisons with a simulated judge")
    _common(p)
    p.add_argument("--n", type=int, default=50)
    _judge_flags(p)
    p.add_argument("--dist", choices=["normal", "uniform"], default="normal")
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--k-grid", default="N,2N,4N,full")
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--methods", default="poe-bt")
    _optim_flags(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("gamma-sweep", help="histograms of soft targets across gamma")
    _common(p)
    p.add_argument("--items", help="items file with gold scores (default: simulated)")
    p.add_argument("--n", type=int, default=466, help="simulated item count")
    p.add_argument("--gammas", default="0," + ",".join(f"{g:g}" for g in GAMMA_GRID))
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--link", choices=[l.value for l in Link], default="sigmoid")
    p.set_defaults(func=cmd_gamma_sweep)

    p = sub.add_parser("bt-tm-compare", help="linear relation between PoE-BT and PoE-TM scores")
    _common(p)
    p.add_argument("--items")
    p.add_argument("--comparisons")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--gamma-judge", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0)
    _optim_flags(p, l2_default=0.0)
    p.set_defaults(func=cmd_bt_tm_compare)

    p = sub.add_parser("export-targets", help="write soft training pairs for an external trainer")
    _common(p)
    p.add_argument("--items", required=True)
    p.add_argument("--gamma", type=float, default=5.0)
    p.add_argument("--link", choices=[l.value for l in Link], default="sigmoid")
    p.add_argument("--pairing", choices=["with-replacement", "random-k", "round-robin",
                                         "full-ordered", "full-unordered"], default="with-replacement")
    p.add_argument("--count", type=int, default=50_000)
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_export_targets)

    p = sub.add_parser("judge", help="collect comparisons from an OpenAI-compatible endpoint")
    _common(p)
    p.add_argument("--items", required=True)
    p.add_argument("--base-url", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--prompt", default="difficulty", help=f"{', '.join(PROMPTS)} or a template file path")
    p.add_argument("--labels", default="1,2")
    p.add_argument("--strategy", choices=["full-ordered", "full-unordered", "random-k", "round-robin"],
                   default="random-k")
    p.add_argument("--k", type=int, default=None, help="comparison budget (default 4N)")
    p.add_argument("--cache", default=None)
    p.add_argument("--api-key-env", default="OPENAI_API_KEY", help="name of the env var holding the key")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--max-retries", type=int, default=5)
    p.add_argument("--backoff", type=float, default=1.0, help="base delay (s) for exponential backoff")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", default=None, help="override the recorded output directory")
    p.set_defaults(func=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "replay":
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        replay = list(manifest["argv"])
        if args.out_dir is not None:
            replay += ["--out-dir", args.out_dir]
        return main(replay)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    try:
        artifacts, seeds = args.func(args)
    except (PairrankError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write_manifest(args, argv, artifacts, seeds)
    return 0


if __name__ == "__main__":
    sys.exit(main())
