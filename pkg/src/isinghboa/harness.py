"""Experimental protocol: population sizing, per-instance metrics, batches.

For every instance the smallest population that finds the ground state in
10 out of 10 independent runs is located by doubling from 16 and then
bisecting until the bracket is within 10% of its upper end. The instance
is then measured by 10 fresh runs at that size; the recorded E_G and E_L
are the (lower) medians over those runs.

All randomness is derived from a master seed and string labels, so every
record is reproducible on its own, whatever the execution order.
"""

from __future__ import annotations

import csv
import io
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numba
import numpy as np

from .hboa import Caps, RunMetrics, hboa_run
from .lattice import (
    CouplingDistribution,
    SpinGlassInstance,
    _energy_kernel,
    generate_instance,
    neighbor_tables,
    read_instance,
)
from .oracle import OracleRangeError, exact_ground
from .rng import derive_seed, make_rng

__all__ = [
    "BatchSpec",
    "BisectionResult",
    "InstanceRecord",
    "MeasurementError",
    "PreconditionError",
    "Probe",
    "RESULT_FIELDS",
    "baseline_one_plus_one",
    "bisect_population",
    "instance_id",
    "iter_batch",
    "measure_instance",
    "parse_batch_config",
    "read_results_csv",
    "run_batch",
    "write_results_csv",
]

RUNS_PER_PROBE = 10
START_POPULATION = 16
MAX_POPULATION = 2**20
BISECTION_WIDTH = 0.1

RESULT_FIELDS = [
    "instance_id",
    "L",
    "dist",
    "mu_tilde",
    "minimal_pop",
    "E_G",
    "E_L",
    "best_energy",
    "verified",
]


class PreconditionError(ValueError):
    """Input data does not satisfy an operation's precondition."""


class MeasurementError(RuntimeError):
    """Confirmation runs kept failing at the bisected population size."""


@dataclass(frozen=True)
class Probe:
    """Outcome at one population size. ``runs`` stops at the first failure."""

    pop_size: int
    successes: int
    runs: int

    @property
    def passed(self) -> bool:
        return self.successes == RUNS_PER_PROBE


@dataclass(frozen=True)
class BisectionResult:
    minimal_pop: int
    probes: tuple[Probe, ...]
    final_interval: tuple[int, int]


@dataclass(frozen=True)
class InstanceRecord:
    instance_id: str
    L: int
    dist: str
    mu_tilde: float | None
    minimal_pop: int
    E_G: int
    E_L: int
    best_energy: float
    verified: bool
    runs: tuple[RunMetrics, ...] = field(default=(), compare=False, repr=False)


def _target(inst: SpinGlassInstance) -> float:
    if inst.ground_energy is None:
        raise PreconditionError(
            "instance has no ground energy; compute it with the exact oracle "
            "or supply it in the instance file"
        )
    return inst.ground_energy


def _probe(
    inst: SpinGlassInstance, pop: int, seed: int, caps: Caps, runs: int
) -> Probe:
    target = _target(inst)
    for r in range(runs):
        m = hboa_run(inst, pop, target, make_rng(seed, "probe", pop, r), caps)
        if not m.found:
            return Probe(pop, r, r + 1)
    return Probe(pop, runs, runs)


def bisect_population(
    inst: SpinGlassInstance,
    seed: int,
    caps: Caps = Caps(),
    *,
    start: int = START_POPULATION,
    max_pop: int = MAX_POPULATION,
    runs: int = RUNS_PER_PROBE,
    known_failure: int | None = None,
) -> BisectionResult:
    """Smallest (even) population solving ``runs`` of ``runs`` runs.

    A probe stops at its first failed run. When the starting size already
    succeeds no smaller size is tried and the interval is reported as
    ``(start, start)``. ``known_failure`` is a size already seen to fail;
    the search then starts from twice that size and never goes below it.
    """
    _target(inst)
    probes: list[Probe] = []
    pop = start
    low = None
    if known_failure is not None:
        low = known_failure
        pop = max(start, 2 * known_failure)
    while True:
        p = _probe(inst, pop, seed, caps, runs)
        probes.append(p)
        if p.successes == runs:
            break
        low = pop
        pop *= 2
        if pop > max_pop:
            raise MeasurementError(
                f"no population up to {max_pop} found the ground state in "
                f"{runs}/{runs} runs (probes: {probes})"
            )
    high = pop
    if low is None:
        return BisectionResult(high, tuple(probes), (high, high))
    while high - low > BISECTION_WIDTH * high:
        mid = (low + high) // 4 * 2
        if not low < mid < high:
            break
        p = _probe(inst, mid, seed, caps, runs)
        probes.append(p)
        if p.successes == runs:
            high = mid
        else:
            low = mid
    return BisectionResult(high, tuple(probes), (low, high))


def measure_instance(
    inst: SpinGlassInstance,
    seed: int,
    caps: Caps = Caps(),
    *,
    instance_name: str = "",
    verified: bool = False,
) -> InstanceRecord:
    """Bisect, then take median E_G and E_L over 10 fresh runs at that size.

    A failed confirmation run triggers one new bisection, with fresh
    streams and restricted to sizes above the failed one. The medians are
    taken over the successful confirmation runs of the last attempt;
    ``MeasurementError`` is raised only if none of them succeeded.
    """
    target = _target(inst)
    failed_at = None
    for attempt in range(2):
        bis = bisect_population(
            inst, derive_seed(seed, "bisect", attempt), caps, known_failure=failed_at
        )
        runs = [
            hboa_run(
                inst,
                bis.minimal_pop,
                target,
                make_rng(seed, "measure", attempt, r),
                caps,
            )
            for r in range(RUNS_PER_PROBE)
        ]
        if all(m.found for m in runs):
            break
        # the confirmation showed this size is not reliable; search above it
        failed_at = bis.minimal_pop
    solved = [m for m in runs if m.found]
    if not solved:
        raise MeasurementError(
            f"all {RUNS_PER_PROBE} confirmation runs failed at population "
            f"{bis.minimal_pop} after a bisection retry"
        )
    dist = inst.distribution
    return InstanceRecord(
        instance_id=instance_name,
        L=inst.L,
        dist=dist.kind,
        mu_tilde=dist.mu_tilde,
        minimal_pop=bis.minimal_pop,
        E_G=int(statistics.median_low(m.E_G for m in solved)),
        E_L=int(statistics.median_low(m.E_L for m in solved)),
        best_energy=min(m.best_energy for m in solved),
        verified=verified,
        runs=tuple(runs),
    )


# --------------------------------------------------------------------------
# (1+1) evolution strategy baseline


@numba.njit(cache=True)
def _es_chunk(s, e, nbr, nbr_j, U, threshold, budget):
    """Run up to min(len(U), budget) offspring; returns (used, found, energy)."""
    n = s.shape[0]
    p = 1.0 / n
    flipped = np.empty(n, dtype=np.int64)
    steps = min(U.shape[0], budget)
    for t in range(steps):
        delta = 0.0
        nf = 0
        for k in range(n):
            if U[t, k] < p:
                f = 0.0
                for d in range(4):
                    f += nbr_j[k, d] * s[nbr[k, d]]
                delta += -2.0 * s[k] * f
                s[k] = -s[k]
                flipped[nf] = k
                nf += 1
        if delta <= 0.0:
            e += delta
            if e <= threshold + 1e-6:
                return t + 1, True, e
        else:
            for q in range(nf - 1, -1, -1):
                s[flipped[q]] = -s[flipped[q]]
    return steps, False, e


def baseline_one_plus_one(
    inst: SpinGlassInstance,
    rng: np.random.Generator,
    max_evaluations: int = 1_000_000,
    *,
    chunk: int = 4096,
) -> RunMetrics:
    """(1+1) evolution strategy with per-bit mutation rate 1/N.

    The offspring replaces the parent when its energy is not higher. E_G
    counts offspring evaluations; there is no local searcher, so E_L is 0.
    """
    target = _target(inst)
    nbr, nbr_j = neighbor_tables(inst)
    edges, J = inst.edges, inst.couplings
    threshold = target + inst.energy_tolerance
    n = inst.n_spins
    s = rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0
    e = float(_energy_kernel(s, edges, J))
    evals = 0
    found = e <= threshold
    while not found and evals < max_evaluations:
        U = rng.random((chunk, n))
        used, hit, e = _es_chunk(s, e, nbr, nbr_j, U, threshold, max_evaluations - evals)
        evals += int(used)
        # refresh the running energy so rounding never decides a hit
        e = float(_energy_kernel(s, edges, J))
        found = bool(hit) and e <= threshold
    return RunMetrics(evals, 0, found, e, evals)


# --------------------------------------------------------------------------
# batches


@dataclass(frozen=True)
class BatchSpec:
    sizes: tuple[int, ...]
    distributions: tuple[CouplingDistribution, ...]
    count: int
    master_seed: int
    ground_dir: str | None = None
    exact: str = "auto"
    max_evaluations: int = Caps().max_evaluations
    jobs: int = 1

    def __post_init__(self) -> None:
        if not self.sizes or any(L < 3 for L in self.sizes):
            raise ValueError("sizes must be a non-empty list of side lengths >= 3")
        if not self.distributions:
            raise ValueError("at least one coupling distribution is required")
        if self.count < 1:
            raise ValueError("count must be positive")
        if self.exact not in ("auto", "brute", "none"):
            raise ValueError(f"exact must be auto, brute or none, not {self.exact!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be positive")


def _dist_label(dist: CouplingDistribution) -> str:
    return f"mix{dist.mu_tilde!r}" if dist.kind == "mix" else dist.kind


def instance_id(dist: CouplingDistribution, L: int, index: int) -> str:
    return f"{_dist_label(dist)}_L{L}_{index:04d}"


def instance_seed(master_seed: int, L: int, index: int) -> int:
    # the distribution is not part of the key: a mu_tilde sweep reuses the
    # same underlying sign and normal draws for every mu_tilde
    return derive_seed(master_seed, "instance", L, index)


@dataclass(frozen=True)
class _Task:
    name: str
    L: int
    dist: CouplingDistribution
    seed: int
    master_seed: int
    ground_dir: str | None
    exact: str
    max_evaluations: int


def _resolve_ground(task: _Task, inst: SpinGlassInstance) -> tuple[SpinGlassInstance, bool]:
    if task.ground_dir:
        path = Path(task.ground_dir) / f"{task.name}.txt"
        if path.exists():
            stored = read_instance(path)
            if not np.array_equal(stored.couplings, inst.couplings):
                raise PreconditionError(f"{path} does not match the generated couplings")
            if stored.ground_energy is not None:
                return inst.with_ground_energy(stored.ground_energy), False
    if task.exact == "none":
        raise PreconditionError("no ground energy supplied and exact oracle disabled")
    method = "brute" if task.exact == "brute" else "auto"
    try:
        truth = exact_ground(inst, method)
    except OracleRangeError as exc:
        where = f" in {task.ground_dir}" if task.ground_dir else ""
        raise PreconditionError(
            f"no ground energy: {exc}; provide {task.name}.txt{where}"
        ) from None
    return inst.with_ground_energy(truth.ground_energy), True


def _run_task(task: _Task) -> InstanceRecord | tuple[str, str]:
    inst = generate_instance(task.L, task.dist, task.seed)
    try:
        inst, verified = _resolve_ground(task, inst)
        return measure_instance(
            inst,
            derive_seed(task.master_seed, "measure", task.name),
            Caps(max_evaluations=task.max_evaluations),
            instance_name=task.name,
            verified=verified,
        )
    except (PreconditionError, MeasurementError) as exc:
        return (task.name, str(exc))


def _tasks(spec: BatchSpec, skip: set[str]) -> list[_Task]:
    tasks = []
    for dist in spec.distributions:
        for L in spec.sizes:
            for i in range(spec.count):
                name = instance_id(dist, L, i)
                if name in skip:
                    continue
                tasks.append(
                    _Task(
                        name,
                        L,
                        dist,
                        instance_seed(spec.master_seed, L, i),
                        spec.master_seed,
                        spec.ground_dir,
                        spec.exact,
                        spec.max_evaluations,
                    )
                )
    return tasks


def iter_batch(
    spec: BatchSpec, skip: Iterable[str] = ()
) -> Iterator[InstanceRecord | tuple[str, str]]:
    """Yield a record or an ``(instance_id, message)`` error per instance.

    Results come in instance order (distribution, size, index) regardless
    of ``spec.jobs``. Instance ids in ``skip`` are not run.
    """
    tasks = _tasks(spec, set(skip))
    if spec.jobs == 1 or len(tasks) <= 1:
        for task in tasks:
            yield _run_task(task)
        return
    with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
        yield from pool.map(_run_task, tasks)


def run_batch(spec: BatchSpec) -> tuple[list[InstanceRecord], list[tuple[str, str]]]:
    records: list[InstanceRecord] = []
    errors: list[tuple[str, str]] = []
    for item in iter_batch(spec):
        if isinstance(item, InstanceRecord):
            records.append(item)
        else:
            errors.append(item)
    return records, errors


def format_record(rec: InstanceRecord) -> list[str]:
    return [
        rec.instance_id,
        str(rec.L),
        rec.dist,
        "" if rec.mu_tilde is None else repr(rec.mu_tilde),
        str(rec.minimal_pop),
        str(rec.E_G),
        str(rec.E_L),
        f"{rec.best_energy:.17g}",
        "true" if rec.verified else "false",
    ]


def write_results_csv(records: Sequence[InstanceRecord], fh=None) -> str | None:
    """Write records with a header to ``fh``; return the text if ``fh`` is None."""
    out = io.StringIO() if fh is None else fh
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for rec in records:
        w.writerow(format_record(rec))
    return out.getvalue() if fh is None else None


def read_results_csv(path) -> list[InstanceRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_FIELDS:
            raise PreconditionError(
                f"{path}: expected columns {','.join(RESULT_FIELDS)}"
            )
        return [
            InstanceRecord(
                instance_id=row["instance_id"],
                L=int(row["L"]),
                dist=row["dist"],
                mu_tilde=float(row["mu_tilde"]) if row["mu_tilde"] else None,
                minimal_pop=int(row["minimal_pop"]),
                E_G=int(row["E_G"]),
                E_L=int(row["E_L"]),
                best_energy=float(row["best_energy"]),
                verified=row["verified"] == "true",
            )
            for row in reader
        ]


def _parse_list(text: str, cast) -> list:
    return [cast(part) for part in text.split(",") if part.strip()]


def distributions_from(kind: str, mu_values: Sequence[float] | None) -> tuple[CouplingDistribution, ...]:
    if kind == "mix":
        if not mu_values:
            raise ValueError("mix requires at least one mu_tilde value")
        return tuple(CouplingDistribution.mixture(mu) for mu in mu_values)
    if mu_values:
        raise ValueError("mu_tilde only applies to the mix distribution")
    return (CouplingDistribution(kind),)


def parse_batch_config(text: str) -> BatchSpec:
    """Batch spec from ``key=value`` lines (``#`` starts a comment).

    Keys: L, dist, mu_tilde, count, seed, ground_dir, exact, max_evals, jobs.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    known = {"L", "dist", "mu_tilde", "count", "seed", "ground_dir", "exact", "max_evals", "jobs"}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown keys: {', '.join(sorted(unknown))}")
    for key in ("L", "dist", "count", "seed"):
        if key not in values:
            raise ValueError(f"missing required key {key!r}")
    mu = _parse_list(values["mu_tilde"], float) if "mu_tilde" in values else None
    return BatchSpec(
        sizes=tuple(_parse_list(values["L"], int)),
        distributions=distributions_from(values["dist"], mu),
        count=int(values["count"]),
        master_seed=int(values["seed"]),
        ground_dir=values.get("ground_dir") or None,
        exact=values.get("exact", "auto"),
        max_evaluations=int(values.get("max_evals", Caps().max_evaluations)),
        jobs=int(values.get("jobs", 1)),
    )
