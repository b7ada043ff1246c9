"""Experiment runner CLI.

    sgcrl-lab run <recipe> [--env ...] [--seeds N] [--out DIR] [--set k=v ...]
    sgcrl-lab summarize <DIR>
    sgcrl-lab validate <DIR>

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .artifacts import RunArtifact, emit_artifact, is_complete, load_artifact
from .dynamics import write_dynamics_csv
from .metrics import coverage, mean_and_se, success_summary
from .recipes import RECIPES, DynamicsResult, run_recipe


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_sets(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = _parse_value(value.strip())
    return out


def _seed_dir(out: Path, seed: int) -> Path:
    return out / f"seed_{seed:04d}"


def _write_dynamics(result: DynamicsResult, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    write_dynamics_csv(result.series, run_dir / "series.csv")
    report = {
        "steps_taken": result.report.steps_taken,
        "converged": result.report.converged,
        "max_c_spread": result.report.max_c_spread,
        "claims": result.report.claims,
        "terminal": asdict(result.report.terminal),
    }
    (run_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    (run_dir / "manifest.json").write_text(
        json.dumps({"code_version": __version__, **result.params}, indent=2, sort_keys=True)
    )


def _run_one(task: tuple[str, int, dict, str]) -> dict:
    recipe, seed, cfg, out = task
    run_dir = _seed_dir(Path(out), seed)
    result = run_recipe(recipe, seed, cfg)
    if isinstance(result, DynamicsResult):
        _write_dynamics(result, run_dir)
        t = result.report.terminal
        return {
            "seed": seed,
            "kind": "dynamics",
            "steps": result.report.steps_taken,
            "terminal_c_max": t.c_max,
            "alpha": t.alpha,
            "lambda_max": t.lambda_max,
            "claims": result.report.claims,
        }
    result.manifest.setdefault("code_version", __version__)
    emit_artifact(result, run_dir)
    summary = success_summary(result)
    last = result.checkpoints[-1] if result.checkpoints else None
    return {
        "seed": seed,
        "kind": "artifact",
        "first_success": summary.first_success,
        "first_majority_success": summary.first_majority_success,
        "terminal_rate": summary.terminal_rate,
        "coverage": coverage(last.visitation) if last is not None else 0.0,
    }


def _aggregate(rows: list[dict], out: Path) -> None:
    if not rows:
        return
    if rows[0]["kind"] == "dynamics":
        claims = sorted({c for r in rows for c in r["claims"]})
        counts = {c: sum(1 for r in rows if r["claims"][c] == "pass") for c in claims}
        summary = {
            "seeds": len(rows),
            "claim_pass_counts": counts,
            "terminal_c_max_mean": mean_and_se(r["terminal_c_max"] for r in rows)[0],
            "alpha_mean": mean_and_se(r["alpha"] for r in rows)[0],
            "lambda_max_mean": mean_and_se(r["lambda_max"] for r in rows)[0],
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        print(json.dumps(summary, indent=2, sort_keys=True))
        return
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["seed", "first_success", "first_majority_success", "terminal_rate", "coverage"]
        )
        for r in sorted(rows, key=lambda r: r["seed"]):
            w.writerow(
                [r["seed"], r["first_success"], r["first_majority_success"],
                 repr(r["terminal_rate"]), repr(r["coverage"])]
            )
    for key in ("first_success", "first_majority_success", "terminal_rate", "coverage"):
        vals = [r[key] for r in rows if r[key] is not None]
        if vals:
            mean, se = mean_and_se(vals)
            print(f"{key}: mean {mean:.3f} +/- {se:.3f} SE (n={len(vals)})")
        else:
            print(f"{key}: no events")


def cmd_run(args) -> int:
    cfg = {}
    if args.config:
        cfg.update(json.loads(Path(args.config).read_text()))
    if args.env:
        cfg["env"] = args.env
    if args.grid_side:
        cfg["grid_side"] = args.grid_side
    if args.disks:
        cfg["disks"] = args.disks
    cfg.update(_parse_sets(args.set or []))

    seeds = list(range(args.seeds)) if args.seed_list is None else [
        int(s) for s in args.seed_list.split(",")
    ]
    out = Path(args.out or f"runs/{args.recipe}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(
        json.dumps(
            {"recipe": args.recipe, "seeds": seeds, "config": cfg, "code_version": __version__},
            indent=2, sort_keys=True,
        )
    )
    tasks = [(args.recipe, s, cfg, str(out)) for s in seeds]
    rows: list[dict] = []
    try:
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                rows = list(pool.map(_run_one, tasks))
        else:
            for t in tasks:
                rows.append(_run_one(t))
                print(f"seed {t[1]} done", file=sys.stderr)
    except Exception:
        traceback.print_exc()
        return 2
    _aggregate(rows, out)
    return 0


def cmd_summarize(args) -> int:
    root = Path(args.dir)
    seed_dirs = sorted(p for p in root.glob("seed_*") if p.is_dir())
    if not seed_dirs:
        print(f"no seed directories under {root}", file=sys.stderr)
        return 1
    rows = []
    flagged = 0
    for d in seed_dirs:
        if (d / "report.json").exists():  # dynamics run
            report = json.loads((d / "report.json").read_text())
            rows.append(
                {
                    "seed": d.name,
                    "kind": "dynamics",
                    "claims": report["claims"],
                    "terminal_c_max": report["terminal"]["c_max"],
                    "alpha": report["terminal"]["alpha"],
                    "lambda_max": report["terminal"]["lambda_max"],
                }
            )
            continue
        if not is_complete(d):
            print(f"incomplete artifact: {d} (excluded from means)", file=sys.stderr)
            flagged += 1
            continue
        artifact = load_artifact(d)
        summary = success_summary(artifact)
        last = artifact.checkpoints[-1]
        rows.append(
            {
                "seed": d.name,
                "kind": "artifact",
                "first_success": summary.first_success,
                "first_majority_success": summary.first_majority_success,
                "terminal_rate": summary.terminal_rate,
                "coverage": coverage(last.visitation),
            }
        )
    if not rows:
        print("all artifacts incomplete", file=sys.stderr)
        return 1
    if rows[0]["kind"] == "dynamics":
        claims = sorted({c for r in rows for c in r["claims"]})
        print("seed            " + "  ".join(claims))
        for r in rows:
            print(r["seed"] + "  " + "  ".join(r["claims"][c] for c in claims))
        return 0
    with open(root / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["seed", "first_success", "first_majority_success", "terminal_rate", "coverage"]
        )
        for r in rows:
            w.writerow(
                [r["seed"], r["first_success"], r["first_majority_success"],
                 repr(r["terminal_rate"]), repr(r["coverage"])]
            )
    print(f"{'metric':<24}{'mean':>10}{'se':>10}{'n':>4}")
    for key in ("first_success", "first_majority_success", "terminal_rate", "coverage"):
        vals = [r[key] for r in rows if r[key] is not None]
        if vals:
            mean, se = mean_and_se(vals)
            print(f"{key:<24}{mean:>10.3f}{se:>10.3f}{len(vals):>4}")
        else:
            print(f"{key:<24}{'n/a':>10}")
    if flagged:
        print(f"({flagged} incomplete run(s) excluded)", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    root = Path(args.dir)
    seed_dirs = sorted(p for p in root.glob("seed_*") if p.is_dir())
    if not seed_dirs:
        print(f"no seed directories under {root}", file=sys.stderr)
        return 1
    bad = 0
    for d in seed_dirs:
        if (d / "report.json").exists():
            try:
                json.loads((d / "report.json").read_text())
                json.loads((d / "manifest.json").read_text())
            except (OSError, json.JSONDecodeError) as exc:
                print(f"INVALID {d}: {exc}", file=sys.stderr)
                bad += 1
            continue
        try:
            artifact = load_artifact(d)
            artifact.validate()
        except Exception as exc:
            print(f"INVALID {d}: {exc}", file=sys.stderr)
            bad += 1
    print(f"validated {len(seed_dirs) - bad}/{len(seed_dirs)} runs")
    return 1 if bad else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sgcrl-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a named experiment recipe over seeds")
    p_run.add_argument("recipe", choices=RECIPES)
    p_run.add_argument("--env", choices=["fourrooms", "hanoi", "lwall", "spiral"])
    p_run.add_argument("--grid-side", type=int, dest="grid_side")
    p_run.add_argument("--disks", type=int)
    p_run.add_argument("--seeds", type=int, default=8)
    p_run.add_argument("--seed-list", dest="seed_list")
    p_run.add_argument("--out")
    p_run.add_argument("--config", help="JSON config file; --set overrides its keys")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_sum = sub.add_parser("summarize", help="aggregate a sweep directory")
    p_sum.add_argument("dir")
    p_sum.set_defaults(func=cmd_summarize)

    p_val = sub.add_parser("validate", help="validate artifacts in a sweep directory")
    p_val.add_argument("dir")
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
