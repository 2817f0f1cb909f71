"""Batch experiments: seeded instances, every mechanism variant, metrics and file output."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from .domain import SyntheticDomainSpec, brute_force_optimum, generate_instance
from .mechanism import VARIANTS, MechanismConfig, run_auction
from .model import ValuationView, efficiency, relative_revenue

WORKERS_ENV = "IMLCA_WORKERS"
ROWS_FILE = "rows.csv"
TIMING_FILE = "timing.csv"
AGGREGATE_FILE = "aggregate.json"

# Column order of rows.csv.
COLUMNS = (
    "seed",
    "variant",
    "efficiency",
    "relative_revenue",
    "rounds",
    "mrpar_refinements",
    "total_refinements",
    "final_uncertainty",
    "initial_uncertainty",
    "final_omega",
    "error",
)
METRICS = COLUMNS[2:10]


@dataclass(frozen=True)
class ExperimentConfig:
    domain: SyntheticDomainSpec = SyntheticDomainSpec()
    mechanism: MechanismConfig = MechanismConfig()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        dom = dict(data.get("domain", {}))
        for key in ("base_range", "gamma_range"):
            if key in dom:
                dom[key] = tuple(dom[key])
        base = cls()
        domain = dataclasses.replace(base.domain, **dom)
        mechanism = dataclasses.replace(base.mechanism, **data.get("mechanism", {}))
        return cls(domain, mechanism)

    def to_dict(self) -> dict:
        return {"domain": dataclasses.asdict(self.domain), "mechanism": dataclasses.asdict(self.mechanism)}


def load_config(path: str | os.PathLike | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


@dataclass
class RunRow:
    seed: int
    variant: str
    efficiency: float = math.nan
    relative_revenue: float = math.nan
    rounds: int = 0
    mrpar_refinements: int = 0
    total_refinements: int = 0
    final_uncertainty: float = math.nan
    initial_uncertainty: float = math.nan
    final_omega: float = math.nan
    error: str = ""
    wall_clock: float = field(default=0.0, compare=False)


@dataclass
class ExperimentResult:
    rows: list[RunRow]
    aggregates: dict[str, dict[str, dict[str, float]]]

    @property
    def failed(self) -> bool:
        return any(r.error for r in self.rows)


def mechanism_for(cfg: ExperimentConfig, variant: str, seed: int) -> MechanismConfig:
    """The mechanism config of one run; the master seed is the instance seed so variants pair up."""
    mech = dataclasses.replace(cfg.mechanism, variant=variant, seed=seed)
    if variant == "imlca-sp":
        mech = dataclasses.replace(mech, prices="simple")
    elif variant == "imlca":
        mech = dataclasses.replace(mech, prices="effort-reduction")
    elif variant == "mlca-exact":
        mech = dataclasses.replace(mech, mu=0.0)
    return mech


def run_one(cfg: ExperimentConfig, seed: int, variant: str, trace_dir: str | None = None) -> RunRow:
    start = time.perf_counter()
    row = RunRow(seed, variant)
    try:
        instance = generate_instance(dataclasses.replace(cfg.domain, seed=seed))
        _, opt = brute_force_optimum(instance)
        outcome, trace = run_auction(instance, mechanism_for(cfg, variant, seed))
        truth = ValuationView.true(instance.values)
        row.efficiency = efficiency(truth, outcome.allocation, opt)
        row.relative_revenue = relative_revenue(outcome.payments, opt)
        row.rounds = len(trace.rounds)
        row.mrpar_refinements = trace.mrpar_refinements
        row.total_refinements = trace.total_refinements
        row.final_uncertainty = trace.final_uncertainty
        row.initial_uncertainty = trace.initial_uncertainty
        row.final_omega = trace.final_omega if trace.final_omega is not None else math.nan
        if trace_dir is not None:
            path = Path(trace_dir) / f"{seed}_{variant}.json"
            payload = {"outcome": dataclasses.asdict(outcome), "trace": dataclasses.asdict(trace)}
            path.write_text(json.dumps(payload, sort_keys=True, default=_jsonable))
    except Exception as exc:  # recorded as an error row; the batch carries on
        row.error = f"{type(exc).__name__}: {exc}"
    row.wall_clock = time.perf_counter() - start
    return row


def _jsonable(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _run_task(args) -> RunRow:
    return run_one(*args)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def aggregate(rows: Iterable[RunRow]) -> dict[str, dict[str, dict[str, float]]]:
    """Mean and standard error of every metric per variant, over error-free rows."""
    by_variant: dict[str, list[RunRow]] = {}
    for r in rows:
        by_variant.setdefault(r.variant, [])
        if not r.error:
            by_variant[r.variant].append(r)
    out = {}
    for variant in sorted(by_variant):
        good = by_variant[variant]
        stats: dict[str, dict[str, float]] = {"runs": {"count": len(good)}}
        for metric in METRICS:
            xs = [float(getattr(r, metric)) for r in good]
            xs = [x for x in xs if not math.isnan(x)]
            k = len(xs)
            mean = math.fsum(xs) / k if k else math.nan
            if k > 1:
                var = math.fsum((x - mean) ** 2 for x in xs) / (k - 1)
                se = math.sqrt(var / k)
            else:
                se = 0.0 if k else math.nan
            stats[metric] = {"mean": mean, "se": se}
        out[variant] = stats
    return out


def _variant_order(v: str) -> int:
    return VARIANTS.index(v) if v in VARIANTS else len(VARIANTS)


def run_batch(cfg: ExperimentConfig, seeds: Sequence[int], variants: Sequence[str],
              out_dir: str | os.PathLike | None = None, trace: str = "none",
              workers: int | None = None) -> ExperimentResult:
    """Run every (seed, variant) pair; write rows, timings and aggregates when ``out_dir`` is set."""
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    trace_dir = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        if trace == "json":
            trace_dir = str(Path(out_dir) / "traces")
            Path(trace_dir).mkdir(exist_ok=True)
    tasks = [(cfg, s, v, trace_dir) for s in seeds for v in variants]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task, tasks))
    else:
        rows = [_run_task(t) for t in tasks]
    rows.sort(key=lambda r: (r.seed, _variant_order(r.variant), r.variant))
    result = ExperimentResult(rows, aggregate(rows))
    if out_dir is not None:
        write_outputs(result, out_dir, cfg)
    return result


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows(rows: Sequence[RunRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])


def write_timing(rows: Sequence[RunRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seed", "variant", "wall_clock"))
        for r in rows:
            w.writerow([r.seed, r.variant, repr(r.wall_clock)])


def write_outputs(result: ExperimentResult, out_dir: str | os.PathLike,
                  cfg: ExperimentConfig | None = None) -> None:
    """``rows.csv`` and ``aggregate.json`` are deterministic; wall-clock goes to ``timing.csv``."""
    out = Path(out_dir)
    write_rows(result.rows, out / ROWS_FILE)
    write_timing(result.rows, out / TIMING_FILE)
    payload = {"aggregates": result.aggregates}
    if cfg is not None:
        payload["config"] = cfg.to_dict()
    (out / AGGREGATE_FILE).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


_TYPES = {f.name: f.type for f in fields(RunRow)}


def _parse(name: str, text: str):
    kind = _TYPES[name]
    if kind in ("int", int):
        return int(text)
    if kind in ("float", float):
        return float(text)
    return text


def read_rows(path: str | os.PathLike) -> list[RunRow]:
    """Parse ``rows.csv`` (and a sibling ``timing.csv`` if present) back into rows."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [RunRow(**{c: _parse(c, rec[c]) for c in COLUMNS}) for rec in reader]
    timing = path.parent / TIMING_FILE
    if timing.exists():
        with open(timing, newline="") as fh:
            clock = {(int(t["seed"]), t["variant"]): float(t["wall_clock"]) for t in csv.DictReader(fh)}
        for r in rows:
            r.wall_clock = clock.get((r.seed, r.variant), 0.0)
    return rows


def format_table(aggregates: dict[str, dict[str, dict[str, float]]]) -> str:
    """Plain-text table: one line per variant, mean (standard error) per metric."""
    header = ["variant", "runs"] + list(METRICS)
    lines = ["\t".join(header)]
    for variant, stats in aggregates.items():
        cells = [variant, str(stats["runs"]["count"])]
        for metric in METRICS:
            s = stats[metric]
            cells.append(f"{s['mean']:.4g} ({s['se']:.2g})")
        lines.append("\t".join(cells))
    return "\n".join(lines)
