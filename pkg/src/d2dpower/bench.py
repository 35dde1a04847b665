"""Scalability and wall-clock benchmarks over the three allocation methods.

Two experiment shapes: a scalability sweep (mean achieved sum rate per
network size for WMMSE, the generic GNN, and the unrolled GNN on identical
instances) and a timing sweep (wall-clock per full allocation, including
graph construction for the learned models).  Reports serialize to CSV for
plotting and to JSON for lossless round trips.
"""

import csv
import json
import platform
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .channel import ChannelConfig, build_graph, generate_instance
from .errors import ConfigError
from .wmmse import WmmseSettings, run_wmmse, sum_rate

METHODS = ("wmmse", "gnn", "wugnn")
DEFAULT_SIZES = (10, 20, 30, 50, 70, 100)


def _cpu_description() -> str:
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine() or "unknown"


def environment_metadata(threads: int) -> dict:
    """Machine context stored alongside every report."""
    return {
        "cpu": _cpu_description(),
        "threads": int(threads),
        "build": "python %s, numpy %s" % (platform.python_version(), np.__version__),
    }


def _check_method_coverage(records, skipped) -> None:
    # every size must either carry a row per method or list the method as skipped
    for method in skipped:
        if method not in METHODS:
            raise ValueError("unknown skipped method %r" % (method,))
    by_n = {}
    for rec in records:
        if rec.method not in METHODS:
            raise ValueError("unknown method %r in record" % (rec.method,))
        by_n.setdefault(rec.n, set()).add(rec.method)
    for n, present in by_n.items():
        missing = set(METHODS) - present - set(skipped)
        if missing:
            raise ValueError(
                "records for n=%d miss methods %s without marking them skipped"
                % (n, sorted(missing))
            )


@dataclass(frozen=True)
class ScalabilityRecord:
    n: int
    method: str
    mean_rate: float
    std_rate: float
    trials: int


@dataclass(frozen=True)
class BenchReport:
    """Mean achieved sum rate per (size, method) over shared instances."""

    experiment: str
    records: tuple
    skipped: tuple
    environment: dict
    config: dict

    def __post_init__(self):
        _check_method_coverage(self.records, self.skipped)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "records": [asdict(r) for r in self.records],
            "skipped": list(self.skipped),
            "environment": self.environment,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchReport":
        return cls(
            experiment=d["experiment"],
            records=tuple(ScalabilityRecord(**r) for r in d["records"]),
            skipped=tuple(d["skipped"]),
            environment=d["environment"],
            config=d["config"],
        )


@dataclass(frozen=True)
class TimingRecord:
    n: int
    method: str
    median_s: float
    p10_s: float
    p90_s: float
    reps: int

    def __post_init__(self):
        if not (self.p10_s <= self.median_s <= self.p90_s):
            raise ValueError("timing percentiles out of order")
        if self.median_s < 0.0:
            raise ValueError("negative median time")


@dataclass(frozen=True)
class TimingReport:
    """Wall-clock per full allocation, per (size, method)."""

    experiment: str
    records: tuple
    repetitions: int
    warmup: int
    skipped: tuple
    environment: dict
    config: dict

    def __post_init__(self):
        if self.repetitions < 5:
            raise ValueError("repetitions must be >= 5")
        if self.warmup < 1:
            raise ValueError("warmup must be >= 1")
        _check_method_coverage(self.records, self.skipped)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "records": [asdict(r) for r in self.records],
            "repetitions": self.repetitions,
            "warmup": self.warmup,
            "skipped": list(self.skipped),
            "environment": self.environment,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimingReport":
        return cls(
            experiment=d["experiment"],
            records=tuple(TimingRecord(**r) for r in d["records"]),
            repetitions=d["repetitions"],
            warmup=d["warmup"],
            skipped=tuple(d["skipped"]),
            environment=d["environment"],
            config=d["config"],
        )


def _bench_instances(base_channel, n: int, count: int, seed: int):
    """Fresh instances for one record, reproducible from (seed, n)."""
    base = base_channel if base_channel is not None else ChannelConfig(n=n, seed=0)
    child_seeds = np.random.SeedSequence((seed, n)).generate_state(count)
    return [
        generate_instance(replace(base, n=n, seed=int(s))) for s in child_seeds
    ]


def _check_checkpoints(checkpoints) -> tuple:
    for method in checkpoints:
        if method not in ("gnn", "wugnn"):
            raise ConfigError("unknown checkpoint method %r" % (method,))
    return tuple(m for m in ("gnn", "wugnn") if m not in checkpoints)


def _method_rate(method, checkpoints, settings, instance, graph):
    if method == "wmmse":
        trace = run_wmmse(instance, max_iter=settings.max_iter, tol=settings.tol)
        return trace.final_sum_rate
    model, params = checkpoints[method]
    v = model.forward_graph(params, graph, instance)
    return sum_rate(instance, v)


def run_scalability(
    checkpoints,
    sizes=DEFAULT_SIZES,
    trials_per_size: int = 50,
    seed: int = 0,
    wmmse_settings: WmmseSettings = None,
    base_channel: ChannelConfig = None,
    threads: int = 1,
) -> BenchReport:
    """Evaluate all methods on identical instances at each network size.

    ``checkpoints`` maps "gnn" / "wugnn" to loaded (model, params) pairs;
    a missing entry marks that method skipped.  The WMMSE reference always
    runs.
    """
    sizes = tuple(int(n) for n in sizes)
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if trials_per_size < 1:
        raise ValueError("trials_per_size must be >= 1")
    settings = wmmse_settings if wmmse_settings is not None else WmmseSettings()
    skipped = _check_checkpoints(checkpoints)

    records = []
    for n in sizes:
        instances = _bench_instances(base_channel, n, trials_per_size, seed)
        graphs = [build_graph(inst) for inst in instances]
        for method in METHODS:
            if method in skipped:
                continue
            rates = [
                _method_rate(method, checkpoints, settings, inst, graph)
                for inst, graph in zip(instances, graphs)
            ]
            records.append(
                ScalabilityRecord(
                    n=n,
                    method=method,
                    mean_rate=float(np.mean(rates)),
                    std_rate=float(np.std(rates)),
                    trials=trials_per_size,
                )
            )

    probe = instances[0]
    config = {
        "sizes": list(sizes),
        "trials_per_size": trials_per_size,
        "seed": seed,
        "noise_power": probe.noise_power,
        "p_max": probe.p_max,
        "wmmse": settings.to_dict(),
    }
    return BenchReport(
        experiment="scalability",
        records=tuple(records),
        skipped=skipped,
        environment=environment_metadata(threads),
        config=config,
    )


def _time_fn(fn, inputs, warmup: int) -> np.ndarray:
    """Wall-clock one call of ``fn`` per input; drop the first ``warmup``."""
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    if warmup >= len(inputs):
        raise ValueError("need at least one measured call after warmup")
    times = []
    for x in inputs:
        start = time.perf_counter()
        fn(x)
        times.append(time.perf_counter() - start)
    return np.asarray(times[warmup:])


def run_timing(
    checkpoints,
    sizes=DEFAULT_SIZES,
    repetitions: int = 10,
    warmup: int = 2,
    wmmse_settings: WmmseSettings = None,
    seed: int = 0,
    base_channel: ChannelConfig = None,
    threads: int = 1,
) -> TimingReport:
    """Measure one full allocation per repetition on fresh instances.

    Learned-model timings include graph construction; the WMMSE timing is a
    run to convergence or max_iter under ``wmmse_settings``.
    """
    sizes = tuple(int(n) for n in sizes)
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if repetitions < 5:
        raise ValueError("repetitions must be >= 5")
    if warmup < 1:
        raise ValueError("warmup must be >= 1")
    settings = wmmse_settings if wmmse_settings is not None else WmmseSettings()
    skipped = _check_checkpoints(checkpoints)

    records = []
    for n in sizes:
        instances = _bench_instances(base_channel, n, warmup + repetitions, seed)
        for method in METHODS:
            if method in skipped:
                continue
            if method == "wmmse":
                fn = lambda inst: run_wmmse(
                    inst, max_iter=settings.max_iter, tol=settings.tol
                )
            else:
                model, params = checkpoints[method]
                fn = lambda inst, m=model, p=params: m.forward_graph(
                    p, build_graph(inst), inst
                )
            times = _time_fn(fn, instances, warmup)
            p10, median, p90 = np.percentile(times, [10.0, 50.0, 90.0])
            records.append(
                TimingRecord(
                    n=n,
                    method=method,
                    median_s=float(median),
                    p10_s=float(p10),
                    p90_s=float(p90),
                    reps=repetitions,
                )
            )

    probe = instances[0]
    config = {
        "sizes": list(sizes),
        "seed": seed,
        "noise_power": probe.noise_power,
        "p_max": probe.p_max,
        "wmmse": settings.to_dict(),
    }
    return TimingReport(
        experiment="timing",
        records=tuple(records),
        repetitions=repetitions,
        warmup=warmup,
        skipped=skipped,
        environment=environment_metadata(threads),
        config=config,
    )


SCALABILITY_HEADER = ["n", "method", "mean_rate", "std_rate", "trials"]
TIMING_HEADER = ["n", "method", "median_s", "p10_s", "p90_s", "reps"]


def emit_report(report, path, format: str = "csv") -> None:
    """Write a report as CSV (plot-ready rows) or JSON (lossless)."""
    if format not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    try:
        if format == "json":
            with open(path, "w") as fh:
                json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            return
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if isinstance(report, TimingReport):
                writer.writerow(TIMING_HEADER)
                for r in report.records:
                    writer.writerow(
                        [r.n, r.method, repr(r.median_s), repr(r.p10_s), repr(r.p90_s), r.reps]
                    )
            else:
                writer.writerow(SCALABILITY_HEADER)
                for r in report.records:
                    writer.writerow(
                        [r.n, r.method, repr(r.mean_rate), repr(r.std_rate), r.trials]
                    )
    except OSError as exc:
        raise OSError("cannot write report to %s: %s" % (path, exc)) from exc


def parse_report(path):
    """Read back a JSON report written by emit_report."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise OSError("cannot read report from %s: %s" % (path, exc)) from exc
    experiment = d.get("experiment")
    if experiment == "scalability":
        return BenchReport.from_dict(d)
    if experiment == "timing":
        return TimingReport.from_dict(d)
    raise ValueError("unknown experiment %r in %s" % (experiment, path))
