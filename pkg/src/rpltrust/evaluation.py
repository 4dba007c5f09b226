"""ROC curves, AUC, detection delay, energy summaries and parameter sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np

from .engine import run_seed
from .network import RunResult, simulate
from .scenario import ScenarioConfig, with_overrides


@dataclass(frozen=True)
class RocCurve:
    """Detection rate against false alarm rate as the score threshold rises.

    A node counts as detected at threshold ``t`` when its score is at most
    ``t``; low scores are suspicious.
    """

    points: list[tuple[float, float]]
    thresholds: list[float]
    positives: int
    negatives: int


def roc(scores: Mapping[int, float], truth: Iterable[int]) -> RocCurve:
    malicious = set(truth)
    pos = sum(1 for n in scores if n in malicious)
    neg = len(scores) - pos
    points = [(0.0, 0.0)]
    thresholds = [-math.inf]
    if pos == 0 or neg == 0:
        return RocCurve(points + [(1.0, 1.0)], thresholds + [math.inf], pos, neg)
    tp = fp = 0
    ordered = sorted(scores.items(), key=lambda kv: kv[1])
    i = 0
    while i < len(ordered):
        level = ordered[i][1]
        while i < len(ordered) and ordered[i][1] == level:
            if ordered[i][0] in malicious:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / neg, tp / pos))
        thresholds.append(level)
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
        thresholds.append(math.inf)
    return RocCurve(points, thresholds, pos, neg)


def auc(curve: RocCurve) -> float | None:
    """Trapezoid area under the curve; None when one class is missing."""
    if curve.positives == 0 or curve.negatives == 0:
        return None
    area = 0.0
    for (x0, y0), (x1, y1) in zip(curve.points, curve.points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def pair_auc(scores: Mapping[int, float], truth: Iterable[int]) -> float | None:
    """Probability that a malicious node scores below an honest one, ties counting half."""
    malicious = set(truth)
    bad = [s for n, s in scores.items() if n in malicious]
    good = [s for n, s in scores.items() if n not in malicious]
    if not bad or not good:
        return None
    wins = 0.0
    for b in bad:
        for g in good:
            wins += 1.0 if b < g else 0.5 if b == g else 0.0
    return wins / (len(bad) * len(good))


def score_auc(scores: Mapping[int, float], truth: Iterable[int]) -> float | None:
    return auc(roc(scores, truth))


@dataclass
class DelayStats:
    per_node: dict[int, float]
    missed: list[int]

    @property
    def mean(self) -> float | None:
        return float(np.mean(list(self.per_node.values()))) if self.per_node else None

    @property
    def spread(self) -> float | None:
        return float(np.std(list(self.per_node.values()))) if self.per_node else None


def detection_delay(blacklist_times: Mapping[int, float], attackers: Iterable[int],
                    attack_start: float | Mapping[int, float] = 0.0) -> DelayStats:
    """Time from attack start to blacklisting, over successfully detected attackers only."""
    per_node, missed = {}, []
    for n in sorted(attackers):
        start = attack_start.get(n, 0.0) if isinstance(attack_start, Mapping) else attack_start
        t = blacklist_times.get(n)
        if t is None or t < start:
            missed.append(n)
        else:
            per_node[n] = t - start
    return DelayStats(per_node, missed)


def threshold_grid_scores(results: Sequence[RunResult], scored: Iterable[int]) -> dict[int, float]:
    """Collapse closed-loop runs at several thresholds into one score per node.

    A node's score is the smallest threshold whose run blacklisted it, or
    1.0 when no run did.
    """
    scores = {n: 1.0 for n in scored}
    for result in sorted(results, key=lambda r: r.threshold, reverse=True):
        for n in result.blacklist_times:
            if n in scores:
                scores[n] = min(scores[n], result.threshold)
    return scores


# ---------------------------------------------------------------------- per-scheme evaluation

@dataclass
class RunMetrics:
    scheme: str
    seed: int
    auc: float | None
    delay: DelayStats
    energy: dict[int, float]
    honest_energy: float
    packets_dropped: int
    roc_points: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class SchemeRun:
    """Everything one scheme produced for one seed.

    The proposed scheme is closed-loop: detection changes the topology, so
    its ROC comes from one run per threshold of the grid. ``primary`` is
    the run at the configured operating threshold and supplies delay,
    energy and the artifacts.
    """

    metrics: RunMetrics
    scores: dict[int, float]
    curve: RocCurve
    primary: RunResult
    runs: list[RunResult]


def _dropped(result: RunResult) -> int:
    return sum(v for k, v in result.counters.items() if k.startswith("data-drop-"))


def metrics_for(result: RunResult, scores: Mapping[int, float]) -> tuple[RunMetrics, RocCurve]:
    curve = roc(scores, result.attackers)
    delay = detection_delay(result.blacklist_times, result.attackers, result.attack_start)
    energy = {n: result.energy[n].joules for n in result.scored_nodes}
    metrics = RunMetrics(result.scheme, result.seed, auc(curve), delay, energy,
                         result.mean_honest_energy(), _dropped(result), list(curve.points))
    return metrics, curve


def evaluate_scheme(config: ScenarioConfig, scheme: str | None = None, seed: int | None = None,
                    duration: float | None = None) -> SchemeRun:
    scheme = scheme or config.defense.scheme
    seed = config.seed if seed is None else seed
    primary = simulate(config, scheme=scheme, seed=seed, duration=duration)
    runs = [primary]
    if scheme == "proposed":
        grid = config.defense.threshold_grid
        runs += [simulate(config, scheme=scheme, threshold=t, seed=seed, duration=duration)
                 for t in grid if not math.isclose(t, primary.threshold)]
        on_grid = [r for r in runs if any(math.isclose(r.threshold, t) for t in grid)]
        scores = threshold_grid_scores(on_grid, primary.scored_nodes)
    else:
        scores = primary.final_scores(scheme)
    metrics, curve = metrics_for(primary, scores)
    return SchemeRun(metrics, scores, curve, primary, runs)


# ---------------------------------------------------------------------- sweeps

SWEEP_COLUMNS = (
    "scheme", "lambda_g", "lambda_b", "w_s", "w_d", "mix", "repetition", "seed",
    "auc", "delay_mean", "delay_spread", "detected", "missed", "honest_energy",
    "packets_dropped", "error",
)


@dataclass(frozen=True)
class GridPoint:
    scheme: str
    lambda_g: float
    lambda_b: float
    w_s: float
    mix: float

    @property
    def w_d(self) -> float:
        return round(1.0 - self.w_s, 12)

    def label(self) -> str:
        return f"{self.scheme}_lg{self.lambda_g:g}_lb{self.lambda_b:g}_ws{self.w_s:g}_mix{self.mix:g}"

    def apply(self, config: ScenarioConfig) -> ScenarioConfig:
        return with_overrides(
            config,
            defense={"scheme": self.scheme, "lambda_g": self.lambda_g, "lambda_b": self.lambda_b,
                     "w_s": self.w_s, "w_d": self.w_d},
            attack={"mix": self.mix},
        )


def grid_points(config: ScenarioConfig) -> list[GridPoint]:
    """Cartesian product of the sweep dimensions; empty dimensions keep the scenario value.

    Forgetting variants are the symmetric ``lambdas`` followed by every
    ``lambda_b`` shifted by every offset for ``lambda_g``.
    """
    grid, d = config.sweep, config.defense
    forgetting = [(lam, lam) for lam in grid.lambdas]
    forgetting += [(b + o, b) for b, o in product(grid.lambda_b, grid.offsets)]
    forgetting = forgetting or [(d.lambda_g, d.lambda_b)]
    weights = grid.w_s or [d.w_s]
    mixes = grid.mixes or [config.attack.mix]
    schemes = grid.schemes or [d.scheme]
    return [GridPoint(s, lg, lb, w, m)
            for s, (lg, lb), w, m in product(schemes, forgetting, weights, mixes)]


def sweep_seeds(config: ScenarioConfig) -> list[int]:
    grid = config.sweep
    if grid.seeds:
        return list(grid.seeds)
    return [run_seed(config.seed, i) for i in range(grid.repetitions)]


def _row(point: GridPoint, rep: int, seed: int, run: SchemeRun | None, error: str = "") -> dict:
    row = {"scheme": point.scheme, "lambda_g": point.lambda_g, "lambda_b": point.lambda_b,
           "w_s": point.w_s, "w_d": point.w_d, "mix": point.mix, "repetition": rep, "seed": seed}
    if run is None:
        row.update(auc=None, delay_mean=None, delay_spread=None, detected=0, missed=0,
                   honest_energy=None, packets_dropped=None, error=error)
        return row
    m = run.metrics
    row.update(auc=m.auc, delay_mean=m.delay.mean, delay_spread=m.delay.spread,
               detected=len(m.delay.per_node), missed=len(m.delay.missed),
               honest_energy=m.honest_energy, packets_dropped=m.packets_dropped, error="")
    return row


def _sweep_job(args: tuple) -> tuple[dict, SchemeRun | None]:
    config, point, rep, seed, duration = args
    try:
        run = evaluate_scheme(point.apply(config), seed=seed, duration=duration)
    except Exception as exc:  # a failed point is recorded, the sweep goes on
        return _row(point, rep, seed, None, f"{type(exc).__name__}: {exc}"), None
    return _row(point, rep, seed, run), run


def run_sweep(config: ScenarioConfig, workers: int = 1, duration: float | None = None,
              keep_runs: bool = False) -> list[dict] | tuple[list[dict], list]:
    """One row per (grid point, repetition), in grid order regardless of ``workers``."""
    if config.sweep is None:
        raise ValueError("scenario has no sweep section")
    jobs = [(config, p, rep, seed, duration)
            for p in grid_points(config) for rep, seed in enumerate(sweep_seeds(config))]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_sweep_job, jobs))
    else:
        out = [_sweep_job(j) for j in jobs]
    rows = [r for r, _ in out]
    if keep_runs:
        return rows, [(j[1], j[2], run) for j, (_, run) in zip(jobs, out)]
    return rows


def summarize(rows: Iterable[dict], keys: Sequence[str] = ("scheme", "lambda_g", "lambda_b", "w_s", "mix"),
              value: str = "auc") -> dict[tuple, tuple[float, float, int]]:
    """Mean, spread and count of ``value`` per grid point, skipping failed rows."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        if row.get(value) is None:
            continue
        groups.setdefault(tuple(row[k] for k in keys), []).append(float(row[value]))
    return {k: (float(np.mean(v)), float(np.std(v)), len(v)) for k, v in groups.items()}


# ---------------------------------------------------------------------- tables

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(round(value, 10))
    return str(value)


def csv_text(rows: Iterable[Mapping], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def jsonl_text(rows: Iterable[Mapping]) -> str:
    return "".join(json.dumps(dict(r), sort_keys=True) + "\n" for r in rows)


ENERGY_COLUMNS = ("node", "role", "tx_count", "rx_count", "cpu_ops", "idle_time", "joules")


def energy_rows(result: RunResult) -> list[dict]:
    rows = []
    for n in result.nodes:
        e = result.energy[n]
        role = "root" if n == result.root else "malicious" if n in result.attackers else "honest"
        rows.append({"node": n, "role": role, "tx_count": e.tx_count, "rx_count": e.rx_count,
                     "cpu_ops": e.cpu_ops, "idle_time": e.idle_time, "joules": e.joules})
    return rows


def energy_overhead(energy: Mapping[str, float], baseline: str = "def") -> dict[str, float]:
    """Percent of extra energy over the baseline scheme; the baseline itself is 0."""
    if baseline not in energy:
        raise KeyError(f"no {baseline!r} entry to compare against")
    base = energy[baseline]
    return {k: 0.0 if k == baseline else 100.0 * (v - base) / base for k, v in energy.items()}


def metrics_dict(m: RunMetrics) -> dict:
    return {
        "scheme": m.scheme,
        "seed": m.seed,
        "auc": m.auc,
        "detection_delay": {str(k): v for k, v in m.delay.per_node.items()},
        "delay_mean": m.delay.mean,
        "delay_spread": m.delay.spread,
        "missed": m.delay.missed,
        "honest_energy": m.honest_energy,
        "energy": {str(k): v for k, v in m.energy.items()},
        "packets_dropped": m.packets_dropped,
    }
