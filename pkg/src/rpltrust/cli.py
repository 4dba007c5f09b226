"""Command line entry point: run scenarios, write artifact directories, compare runs."""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import evaluation as ev
from .scenario import SCHEMES, ScenarioConfig, ScenarioError, emit_scenario, load_scenario, with_overrides

BUNDLED = "reference.yaml"
PASSIVE = ("def", "avg", "rec")


def bundled_scenario() -> Path:
    return Path(str(resources.files("rpltrust") / "data" / BUNDLED))


class Artifacts:
    """Writes the files of one run directory and remembers what it wrote."""

    def __init__(self, root: Path) -> None:
        self.root = root
        self.written: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str) -> None:
        (self.root / name).write_text(content)
        self.written.append(name)

    def json(self, name: str, obj) -> None:
        self.text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, rows, columns) -> None:
        self.text(name, ev.csv_text(rows, columns))


# ---------------------------------------------------------------------- plots

def _pyplot():
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "rpltrust"
    return plt


def _save(plt, fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_roc(curves: dict[str, ev.RocCurve], path: Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for name, curve in curves.items():
        xs, ys = zip(*curve.points)
        a = ev.auc(curve)
        ax.plot(xs, ys, marker="o", ms=3, label=f"{name} (AUC {a:.3f})" if a is not None else name)
    ax.plot([0, 1], [0, 1], ls=":", color="grey")
    ax.set_xlabel("false alarm rate")
    ax.set_ylabel("detection rate")
    ax.legend(loc="lower right", fontsize=8)
    _save(plt, fig, path)


def plot_bars(values: dict[str, float], ylabel: str, path: Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    names = list(values)
    ax.bar(range(len(names)), [values[n] for n in names])
    ax.set_xticks(range(len(names)), [str(n) for n in names])
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    _save(plt, fig, path)


# ---------------------------------------------------------------------- single run

def trace_summary(result) -> dict:
    return {
        "scheme": result.scheme,
        "seed": result.seed,
        "threshold": result.threshold,
        "duration": result.duration,
        "counters": dict(sorted(result.counters.items())),
        "parent_changes": len(result.parent_changes),
        "notifications": len(result.notifications),
        "blacklist": {str(k): v for k, v in sorted(result.blacklist_times.items())},
        "final_parents": {str(k): v for k, v in sorted(result.final_parents.items())},
        "relayed_data": {str(k): len(v) for k, v in sorted(result.relays.items())},
    }


TRUST_COLUMNS = ("window", "node", "self_trust", "descendant_trust", "aggregate", "watchlist", "blacklist")


def write_run(out: Path, config: ScenarioConfig, duration: float | None = None) -> ev.SchemeRun:
    art = Artifacts(out)
    art.text("config.yaml", emit_scenario(config))
    run = ev.evaluate_scheme(config, duration=duration)
    result = run.primary
    art.json("trace_summary.json", trace_summary(result))
    art.csv("trust_snapshots.csv", [dict(zip(TRUST_COLUMNS, r)) for r in result.trust_rows], TRUST_COLUMNS)
    verdicts = [{"scheme": s, "window": v.window, "node": v.node, "score": v.score}
                for s, rows in sorted(result.verdicts.items()) for v in rows]
    art.csv("verdicts.csv", verdicts, ("scheme", "window", "node", "score"))
    metrics = ev.metrics_dict(run.metrics)
    metrics["scores"] = {str(k): v for k, v in sorted(run.scores.items())}
    metrics["attackers"] = list(result.attackers)
    art.json("metrics.json", metrics)
    points = [{"threshold": t, "false_alarm_rate": x, "detection_rate": y}
              for t, (x, y) in zip(run.curve.thresholds, run.curve.points)]
    art.csv("roc_points.csv", points, ("threshold", "false_alarm_rate", "detection_rate"))
    art.csv("energy.csv", ev.energy_rows(result), ev.ENERGY_COLUMNS)
    plot_roc({result.scheme: run.curve}, out / "roc.svg")
    honest = set(result.honest)
    plot_bars({n: run.metrics.energy[n] for n in sorted(run.metrics.energy) if n in honest},
              "energy (honest nodes)", out / "energy.svg")
    plot_bars({n: d for n, d in sorted(run.metrics.delay.per_node.items())},
              "detection delay (s)", out / "delay.svg")
    return run


def write_sweep(out: Path, config: ScenarioConfig, duration: float | None = None) -> list[dict]:
    art = Artifacts(out)
    art.text("config.yaml", emit_scenario(config))
    rows, runs = ev.run_sweep(config, duration=duration, keep_runs=True)
    for point, rep, run in runs:
        sub = Artifacts(out / point.label())
        if run is None:
            continue
        m = ev.metrics_dict(run.metrics)
        m["scores"] = {str(k): v for k, v in sorted(run.scores.items())}
        sub.json(f"metrics_rep{rep}.json", m)
        pts = [{"false_alarm_rate": x, "detection_rate": y} for x, y in run.curve.points]
        sub.csv(f"roc_rep{rep}.csv", pts, ("false_alarm_rate", "detection_rate"))
    art.csv("sweep.csv", rows, ev.SWEEP_COLUMNS)
    art.text("sweep.jsonl", ev.jsonl_text(rows))
    summary = ev.summarize(rows)
    keys = ("scheme", "lambda_g", "lambda_b", "w_s", "mix")
    art.csv("summary.csv", [dict(zip(keys, k), auc_mean=v[0], auc_spread=v[1], runs=v[2])
                            for k, v in summary.items()], keys + ("auc_mean", "auc_spread", "runs"))
    failed = [r for r in rows if r["error"]]
    if failed:
        art.json("errors.json", failed)
    return rows


# ---------------------------------------------------------------------- compare

class CompareError(ValueError):
    pass


def _comparable(config: dict) -> dict:
    config = json.loads(json.dumps(config))
    config["defense"].pop("scheme", None)
    config.pop("sweep", None)
    return config


def compare(dirs: Sequence[Path]) -> list[dict]:
    """Side-by-side rows, best AUC first; energy percent is over the MRHOF-only run."""
    import yaml

    if len(dirs) < 2:
        raise CompareError("compare needs at least two run directories")
    reference = None
    rows = []
    for d in dirs:
        config_file, metrics_file = d / "config.yaml", d / "metrics.json"
        if not config_file.exists() or not metrics_file.exists():
            raise CompareError(f"{d} is not a completed run directory")
        config = _comparable(yaml.safe_load(config_file.read_text()))
        if reference is None:
            reference = (d, config)
        elif config != reference[1]:
            raise CompareError(f"{d} ran a different scenario than {reference[0]}")
        m = json.loads(metrics_file.read_text())
        rows.append({"run": str(d), "scheme": m["scheme"], "auc": m["auc"], "honest_energy": m["honest_energy"],
                     "delay_mean": m["delay_mean"], "delay_spread": m["delay_spread"],
                     "detected": len(m["detection_delay"]), "missed": len(m["missed"])})
    base = next((r["honest_energy"] for r in rows if r["scheme"] in PASSIVE), None)
    for r in rows:
        r["energy_pct"] = None if base is None else 100.0 * (r["honest_energy"] - base) / base
    rows.sort(key=lambda r: (-(r["auc"] if r["auc"] is not None else -1.0), r["scheme"]))
    return rows


COMPARE_COLUMNS = ("scheme", "auc", "honest_energy", "energy_pct", "delay_mean", "delay_spread",
                   "detected", "missed", "run")


def format_compare(rows: list[dict]) -> str:
    def f(v, spec):
        return "-" if v is None else format(v, spec)

    lines = [f"{'scheme':<10}{'AUC':>8}{'energy':>12}{'vs MRHOF':>10}{'delay':>10}{'spread':>9}  run"]
    for r in rows:
        pct = "-" if r["energy_pct"] is None else f"{r['energy_pct']:+.1f}%"
        lines.append(f"{r['scheme']:<10}{f(r['auc'], '.3f'):>8}{f(r['honest_energy'], '.0f'):>12}"
                     f"{pct:>10}{f(r['delay_mean'], '.0f'):>10}{f(r['delay_spread'], '.0f'):>9}  {r['run']}")
    return "\n".join(lines)


# ---------------------------------------------------------------------- argument handling

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rpltrust", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="simulate one scenario and write an artifact directory")
    run.add_argument("scenario", nargs="?", help="scenario YAML (default: bundled fifteen-node reference topology)")
    run.add_argument("--sweep", action="store_true", help="run the scenario's sweep grid")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--scheme", choices=SCHEMES)
    run.add_argument("--duration", type=float, help="simulated seconds")
    run.add_argument("--quiet", action="store_true")
    cmp_ = sub.add_parser("compare", help="compare completed run directories")
    cmp_.add_argument("dirs", nargs="+", type=Path)
    cmp_.add_argument("--out", type=Path, help="also write the comparison as CSV")
    return parser


def _config_from(args) -> ScenarioConfig:
    path = Path(args.scenario) if args.scenario else bundled_scenario()
    config = load_scenario(path)
    if args.seed is not None:
        config = with_overrides(config, seed=args.seed)
    if args.scheme:
        config = with_overrides(config, defense={"scheme": args.scheme})
    if args.duration is not None:
        config = with_overrides(config, traffic={"duration": args.duration})
    return config


def _default_out(args, config: ScenarioConfig) -> Path:
    stem = Path(args.scenario).stem if args.scenario else Path(BUNDLED).stem
    tag = "sweep" if args.sweep else config.defense.scheme
    return Path("runs") / f"{stem}_{tag}_seed{config.seed}"


def _write_manifest(out: Path, exc: BaseException) -> None:
    out.mkdir(parents=True, exist_ok=True)
    present = sorted(p.name for p in out.iterdir() if p.name != "error.json")
    errors = exc.violations if isinstance(exc, ScenarioError) else [str(exc)]
    manifest = {"error": type(exc).__name__, "messages": errors, "partial_outputs": present,
                "traceback": traceback.format_exception(type(exc), exc, exc.__traceback__)}
    (out / "error.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_run(args) -> int:
    out = args.out
    try:
        config = _config_from(args)
        out = out or _default_out(args, config)
        if args.sweep:
            if config.sweep is None:
                raise ScenarioError(["sweep: --sweep given but the scenario has no sweep section"])
            rows = write_sweep(out, config)
            if not args.quiet:
                for key, (mean, spread, n) in ev.summarize(rows).items():
                    print(" ".join(f"{v}" for v in key), f"AUC {mean:.3f} ± {spread:.3f} (n={n})")
        else:
            run = write_run(out, config)
            if not args.quiet:
                m = run.metrics
                auc = "undefined" if m.auc is None else f"{m.auc:.3f}"
                print(f"{config.defense.scheme} seed {config.seed}: AUC {auc}, "
                      f"honest energy {m.honest_energy:.0f}, detected {len(m.delay.per_node)}, "
                      f"missed {len(m.delay.missed)}")
    except Exception as exc:
        out = out or Path("runs") / "failed"
        _write_manifest(out, exc)
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, ScenarioError):
            for v in exc.violations:
                print(f"  {v}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"artifacts in {out}")
    return 0


def cmd_compare(args) -> int:
    try:
        rows = compare(args.dirs)
    except (CompareError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(format_compare(rows))
    if args.out:
        args.out.write_text(ev.csv_text(rows, COMPARE_COLUMNS))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] not in ("run", "compare", "-h", "--help"):
        argv.insert(0, "run")
    args = build_parser().parse_args(argv)
    return cmd_run(args) if args.command == "run" else cmd_compare(args)


if __name__ == "__main__":
    sys.exit(main())
