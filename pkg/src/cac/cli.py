"""Command line front end: attack, bench, bound, serve-check.

Every attack knob can come from three places with fixed precedence: a flag
given on the command line wins, then a `key = value` line in the config file
named by --config, then the built-in default. File keys match the flag names
with either dashes or underscores.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .bench import (
    ExperimentSpec,
    gen_synthetic_task,
    load_points_csv,
    run_experiment,
)
from .engine import AttackConfig, attack_with_restarts, cac_attack_batch
from .errors import TransportError
from .guarantee import iteration_bound
from .oracle import RemoteOracle

# Named self-contained tasks for running without a remote oracle. Each entry
# carries generator arguments, a preset of attack knobs sized to the task
# (overridable by config file and flags), and a demo target known to sit in
# attackable territory. blobs-2d is the two-cluster toy every demo uses;
# blobs-10d is the harder mixture the benchmark defaults to; teacher-5d
# wraps a frozen random network.
BUILTIN_TASKS = {
    "blobs-2d": dict(
        # close centroids and a broad pool keep every eval point's nearest
        # neighbors label-mixed, which the initial distillation set needs
        task=dict(kind="gaussian_blobs", d=2, K=2, size=200, seed=7,
                  centroids=((0.4, 0.4), (0.6, 0.6)), noise=0.05,
                  pool_sigma=0.35),
        preset=dict(delta=0.2, budget=80, m=16, n_init=100, n_adv=4,
                    epochs=300, learning_rate=1e-2, hidden=(16,)),
        demo_target=None,
    ),
    "blobs-10d": dict(
        task=dict(kind="gaussian_blobs", d=10, K=3, size=400, seed=42),
        preset=dict(delta=0.125, contraction_t=0.99, steps=1, budget=300,
                    m=30, n_init=100, n_adv=10, epochs=400,
                    learning_rate=1e-2, hidden=(32,)),
        demo_target=None,
    ),
    "teacher-5d": dict(
        task=dict(kind="teacher_network", d=5, K=3, size=300, seed=11),
        preset=dict(delta=0.125, budget=120, m=16, n_init=100, n_adv=4,
                    epochs=300, learning_rate=1e-2, hidden=(16,)),
        demo_target=None,
    ),
}

# Attack knobs for bench runs over generator-flag tasks, sized per kind.
GENERATOR_PRESETS = {
    "gaussian_blobs": BUILTIN_TASKS["blobs-10d"]["preset"],
    "teacher_network": BUILTIN_TASKS["teacher-5d"]["preset"],
}

# AttackConfig fields settable from flags or the config file, with the
# parser used for config-file strings.
def _parse_hidden(text):
    text = text.strip()
    if not text or text == "none":
        return ()
    return tuple(int(p) for p in text.split(",") if p.strip())


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


ATTACK_FIELDS = {
    "delta": float,
    "contraction_t": float,
    "steps": int,
    "momentum": float,
    "budget": int,
    "m": int,
    "n_init": int,
    "n_adv": int,
    "restart_shrink": float,
    "mode": str,
    "seed": int,
    "epochs": int,
    "learning_rate": float,
    "hidden": _parse_hidden,
    "warm_start": _parse_bool,
}


def read_config_file(path) -> dict:
    """Parse `key = value` lines; '#' starts a comment, blank lines skipped."""
    vals = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            key = key.strip().replace("-", "_")
            if not key:
                raise ValueError(f"{path}:{lineno}: empty key")
            vals[key] = val.strip()
    return vals


def build_attack_config(args, file_vals: dict, preset: dict | None = None) -> AttackConfig:
    kw = dict(preset or {})
    for name, conv in ATTACK_FIELDS.items():
        cli = getattr(args, name, None)
        if cli is not None:
            kw[name] = cli
        elif name in file_vals:
            try:
                kw[name] = conv(file_vals[name])
            except ValueError as exc:
                raise ValueError(f"config key {name}: {exc}") from exc
    return AttackConfig(**kw)


def _add_attack_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--delta", type=float)
    p.add_argument("--contraction-t", type=float, dest="contraction_t")
    p.add_argument("--steps", type=int)
    p.add_argument("--momentum", type=float)
    p.add_argument("--budget", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--n-init", type=int, dest="n_init")
    p.add_argument("--n-adv", type=int, dest="n_adv")
    p.add_argument("--restart-shrink", type=float, dest="restart_shrink")
    p.add_argument("--mode", choices=("hard", "soft"))
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--hidden", type=_parse_hidden,
                   help="comma separated layer widths, e.g. 64,64")
    p.add_argument("--warm-start", action="store_const", const=True,
                   dest="warm_start")


def _add_oracle_flags(p: argparse.ArgumentParser, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--oracle-url", help="base URL of a remote oracle service")
    g.add_argument("--oracle-builtin", choices=sorted(BUILTIN_TASKS),
                   help="self-contained task to attack")


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(p) for p in text.split(",") if p.strip()])
    except ValueError as exc:
        raise ValueError(f"bad vector {text!r}: {exc}") from exc


def _resolve_oracle(args):
    """Returns (backend factory, holdout, default target, preset)."""
    if args.oracle_builtin:
        entry = BUILTIN_TASKS[args.oracle_builtin]
        task = gen_synthetic_task(**entry["task"])
        holdout = task.holdout
        if getattr(args, "holdout_csv", None):
            holdout = load_points_csv(args.holdout_csv)
        target = entry["demo_target"]
        target = task.eval_points[0] if target is None else np.asarray(target)
        return task.fresh_backend, holdout, target, entry["preset"]
    if not getattr(args, "holdout_csv", None):
        raise ValueError("--oracle-url needs --holdout-csv for the "
                         "distillation pool")
    holdout = load_points_csv(args.holdout_csv)
    url = args.oracle_url
    return (lambda: RemoteOracle(url)), holdout, None, None


def cmd_attack(args) -> int:
    file_vals = read_config_file(args.config) if args.config else {}
    factory, holdout, default_target, preset = _resolve_oracle(args)
    config = build_attack_config(args, file_vals, preset)
    if args.target is not None:
        x = _parse_vector(args.target)
    elif default_target is not None:
        x = default_target
    else:
        raise ValueError("--target is required with --oracle-url")

    runner = attack_with_restarts if args.restarts else cac_attack_batch
    result = runner(factory(), x, holdout, config)

    print(f"status: {result.status}")
    print(f"target label: {result.trace.target_label}")
    print(f"queries: {result.queries_total} of {config.budget}")
    if result.success:
        win = next((c for c in result.trace.alternations[-1].chains
                    if c.outcome == "transfer"), None)
        if win is not None:
            print(f"adversarial label: {win.oracle_label}")
        print(f"l2: {result.l2:.6f}")
        print(f"linf: {result.linf:.6f}")
        print(f"alternations: {result.terminated_at}")
        if result.restarts_used:
            print(f"restarts: {result.restarts_used}")
    if args.trace_out:
        Path(args.trace_out).write_text(result.trace.to_json() + "\n")
        print(f"trace written to {args.trace_out}")
    if args.cert_out:
        Path(args.cert_out).write_text(result.certificate.to_json() + "\n")
        print(f"certificate written to {args.cert_out}")
    return 0 if result.success else 1


def cmd_bench(args) -> int:
    file_vals = read_config_file(args.config) if args.config else {}
    if args.oracle_builtin:
        preset = BUILTIN_TASKS[args.oracle_builtin]["preset"]
    elif args.oracle_url:
        # remote oracles bring their own scale; only explicit knobs apply
        preset = None
    else:
        preset = GENERATOR_PRESETS[args.kind]
    config = build_attack_config(args, file_vals, preset)

    if args.oracle_builtin:
        task = gen_synthetic_task(**BUILTIN_TASKS[args.oracle_builtin]["task"])
        spec_kw = dict(task=task)
    elif args.oracle_url:
        if not (args.points_csv and args.holdout_csv):
            raise ValueError("--oracle-url needs --points-csv and "
                             "--holdout-csv")
        url = args.oracle_url
        spec_kw = dict(
            backend_factory=lambda: RemoteOracle(url),
            points=load_points_csv(args.points_csv),
            holdout=load_points_csv(args.holdout_csv),
        )
    else:
        task = gen_synthetic_task(args.kind, args.d, args.k, args.size,
                                  args.task_seed)
        spec_kw = dict(task=task)
    if args.points_csv and "points" not in spec_kw:
        spec_kw["points"] = load_points_csv(args.points_csv)
    if args.holdout_csv and "holdout" not in spec_kw:
        spec_kw["holdout"] = load_points_csv(args.holdout_csv)

    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    spec = ExperimentSpec(
        attack=config, methods=methods, out_dir=args.out_dir,
        seed=args.seed if args.seed is not None else 0,
        n_points=args.n_points, **spec_kw,
    )
    report = run_experiment(spec)
    print((report.out_dir / "metrics.csv").read_text(), end="")
    cert = report.summary["certificates"]
    print(f"eligible points: {report.summary['points_eligible']} "
          f"of {report.summary['points_total']}")
    if cert["fraction_assumption_clean"] is not None:
        print(f"assumption-clean runs: {cert['fraction_assumption_clean']:.2f}")
    if cert["max_termination_ratio"] is not None:
        print(f"max terminated_at / bound_n: {cert['max_termination_ratio']:.3f}")
    print(f"report written to {report.out_dir}")
    return 0


def cmd_bound(args) -> int:
    n = iteration_bound(args.epsilon, args.delta, args.gamma, args.t)
    if args.json:
        print(json.dumps({"epsilon": args.epsilon, "delta": args.delta,
                          "gamma": args.gamma, "t": args.t, "bound_n": n}))
    else:
        print(f"alternation bound: {n}")
        if args.epsilon >= args.delta * args.gamma:
            print("margin covers the whole space: the first alternation "
                  "already satisfies the transfer condition")
    return 0


def cmd_serve_check(args) -> int:
    t0 = time.perf_counter()
    oracle = RemoteOracle(args.oracle_url, timeout=args.timeout)
    info_ms = (time.perf_counter() - t0) * 1e3
    print(f"oracle at {args.oracle_url}: input_dim={oracle.input_dim} "
          f"num_classes={oracle.num_classes} ({info_ms:.1f} ms)")
    probe = np.full(oracle.input_dim, 0.5)
    t0 = time.perf_counter()
    ans = oracle.answer(probe, "hard")
    query_ms = (time.perf_counter() - t0) * 1e3
    print(f"probe query at the cube center: label {ans.hard} ({query_ms:.1f} ms)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cac",
        description="query-budgeted black-box attack with a contracting "
                    "search space",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="attack one target point")
    _add_oracle_flags(p)
    _add_attack_flags(p)
    p.add_argument("--target", help="comma separated coordinates in [0,1]")
    p.add_argument("--holdout-csv", dest="holdout_csv",
                   help="distillation pool, one point per row")
    p.add_argument("--restarts", action="store_true",
                   help="keep shrinking delta after each success")
    p.add_argument("--trace-out", dest="trace_out")
    p.add_argument("--cert-out", dest="cert_out")
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("bench", help="run methods over many target points")
    _add_oracle_flags(p, required=False)
    _add_attack_flags(p)
    p.add_argument("--kind", choices=("gaussian_blobs", "teacher_network"),
                   default="gaussian_blobs")
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--size", type=int, default=400)
    p.add_argument("--task-seed", type=int, default=42, dest="task_seed")
    p.add_argument("--n-points", type=int, default=20, dest="n_points")
    p.add_argument("--methods", default="cac,random_baseline")
    p.add_argument("--points-csv", dest="points_csv")
    p.add_argument("--holdout-csv", dest="holdout_csv")
    p.add_argument("--out-dir", default="runs/bench", dest="out_dir")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("bound", help="alternations needed for guaranteed "
                                     "transfer")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--t", type=float, default=0.99)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_bound)

    p = sub.add_parser("serve-check", help="ping a remote oracle")
    p.add_argument("--oracle-url", required=True)
    p.add_argument("--timeout", type=float, default=5.0)
    p.set_defaults(fn=cmd_serve_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, TransportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
