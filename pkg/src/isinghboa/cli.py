"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or precondition error,
3 internal failure. Data goes to files or stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .evd import FitError, fit_mle, fit_power_law, histogram_table, write_histogram_csv
from .hboa import Caps, hboa_run
from .harness import (
    BatchSpec,
    InstanceRecord,
    MeasurementError,
    PreconditionError,
    RESULT_FIELDS,
    baseline_one_plus_one,
    bisect_population,
    distributions_from,
    format_record,
    iter_batch,
    parse_batch_config,
    read_results_csv,
)
from .lattice import (
    CouplingDistribution,
    InstanceFormatError,
    generate_instance,
    parse_instance,
    read_instance,
    write_instance,
)
from .oracle import BRUTE_FORCE_MAX_SPINS, OracleRangeError, exact_ground
from .rng import make_rng

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _with_target(path: str):
    inst = read_instance(path)
    if inst.ground_energy is None:
        if inst.n_spins > BRUTE_FORCE_MAX_SPINS:
            raise PreconditionError(
                f"{path} has no ground_energy and is too large for brute force "
                f"(N={inst.n_spins} > {BRUTE_FORCE_MAX_SPINS}); run 'ground --annotate'"
            )
        inst = inst.with_ground_energy(exact_ground(inst, "brute").ground_energy)
    return inst


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    if len(args.L) != 1:
        raise UsageError("gen takes a single --L value")
    mu = args.mu_tilde
    if mu is not None and len(mu) != 1:
        raise UsageError("gen takes a single --mu-tilde value")
    (dist,) = distributions_from(args.dist, mu)
    _emit(write_instance(generate_instance(args.L[0], dist, args.seed)), args.out)
    return EXIT_OK


def cmd_ground(args) -> int:
    path = Path(args.input)
    text = path.read_text(encoding="utf-8")
    inst = parse_instance(text)
    truth = exact_ground(inst, args.method)
    payload = {
        "ground_energy": truth.ground_energy,
        "degeneracy": truth.degeneracy,
        "method": truth.method,
        "witness": truth.witness.astype(int).tolist(),
    }
    if args.annotate:
        if inst.ground_energy is not None:
            if not math.isclose(inst.ground_energy, truth.ground_energy, abs_tol=1e-9):
                raise PreconditionError(
                    f"{path} already records ground_energy {inst.ground_energy!r}, "
                    f"exact value is {truth.ground_energy!r}"
                )
        else:
            with open(path, "a", encoding="utf-8") as fh:
                if not text.endswith("\n"):
                    fh.write("\n")
                fh.write(f"ground_energy {truth.ground_energy:.17g}\n")
    _emit(_json(payload), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _with_target(args.input)
    caps = Caps(max_evaluations=args.max_evals, max_generations=args.max_gens)
    m = hboa_run(inst, args.pop, inst.ground_energy, make_rng(args.seed, "solve"), caps)
    payload = {
        "E_G": m.E_G,
        "E_L": m.E_L,
        "found": m.found,
        "best_energy": m.best_energy,
        "generations": m.generations,
        "target": inst.ground_energy,
    }
    _emit(_json(payload), args.out)
    return EXIT_OK


def cmd_bisect(args) -> int:
    inst = _with_target(args.input)
    res = bisect_population(inst, args.seed, Caps(max_evaluations=args.max_evals))
    payload = {
        "minimal_pop": res.minimal_pop,
        "final_interval": list(res.final_interval),
        "probes": [
            {"pop_size": p.pop_size, "successes": p.successes, "runs": p.runs}
            for p in res.probes
        ],
    }
    _emit(_json(payload), args.out)
    return EXIT_OK


def cmd_baseline(args) -> int:
    inst = _with_target(args.input)
    m = baseline_one_plus_one(inst, make_rng(args.seed, "baseline"), args.max_evals)
    payload = {"E_G": m.E_G, "found": m.found, "best_energy": m.best_energy}
    _emit(_json(payload), args.out)
    return EXIT_OK


def _batch_spec(args) -> BatchSpec:
    if args.config:
        spec = parse_batch_config(Path(args.config).read_text(encoding="utf-8"))
        if args.jobs is not None:
            spec = BatchSpec(**{**spec.__dict__, "jobs": args.jobs})
        return spec
    missing = [flag for flag, v in (("--L", args.L), ("--dist", args.dist),
                                    ("--count", args.count), ("--seed", args.seed)) if v is None]
    if missing:
        raise UsageError(f"batch requires {', '.join(missing)} (or --config)")
    return BatchSpec(
        sizes=tuple(args.L),
        distributions=distributions_from(args.dist, args.mu_tilde),
        count=args.count,
        master_seed=args.seed,
        ground_dir=args.ground_dir,
        exact=args.exact,
        max_evaluations=args.max_evals,
        jobs=args.jobs or 1,
    )


def cmd_batch(args) -> int:
    spec = _batch_spec(args)
    done: list[InstanceRecord] = []
    if args.resume and args.out and Path(args.out).exists():
        done = read_results_csv(args.out)
    errors = 0
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_FIELDS)
        for rec in done:
            writer.writerow(format_record(rec))
        fh.flush()
        for item in iter_batch(spec, skip={r.instance_id for r in done}):
            if isinstance(item, InstanceRecord):
                writer.writerow(format_record(item))
                fh.flush()
            else:
                errors += 1
                print(f"{item[0]}: {item[1]}", file=sys.stderr)
    finally:
        if fh is not sys.stdout:
            fh.close()
    if errors:
        print(f"{errors} instance(s) failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _column(records: Sequence[InstanceRecord], column: str) -> np.ndarray:
    if column not in ("E_G", "E_L", "minimal_pop"):
        raise UsageError(f"--column must be E_G, E_L or minimal_pop, not {column!r}")
    return np.array([getattr(r, column) for r in records], dtype=np.float64)


def _filter(records, args) -> list[InstanceRecord]:
    out = list(records)
    if getattr(args, "L", None):
        out = [r for r in out if r.L in args.L]
    if getattr(args, "dist", None):
        out = [r for r in out if r.dist == args.dist]
    if getattr(args, "mu_tilde", None):
        out = [r for r in out if r.mu_tilde is not None
               and any(math.isclose(r.mu_tilde, m) for m in args.mu_tilde)]
    return out


def cmd_fit(args) -> int:
    records = _filter(read_results_csv(args.input), args)
    values = _column(records, args.column)
    fit = fit_mle(values)
    if args.hist:
        write_histogram_csv(args.hist, histogram_table(values, fit, args.bins))
    _emit(_json(fit.as_dict()), args.out)
    return EXIT_OK


def cmd_scaling(args) -> int:
    records = _filter(read_results_csv(args.input), args)
    sizes = sorted({r.L for r in records})
    if len(sizes) < 3:
        raise PreconditionError(f"need at least three lattice sizes, found {sizes}")
    fits = []
    for L in sizes:
        fit = fit_mle(_column([r for r in records if r.L == L], args.column))
        fits.append({"L": L, "n_spins": L * L, **fit.as_dict()})
    law = fit_power_law([f["n_spins"] for f in fits], [f["mu"] for f in fits])
    payload = {
        "column": args.column,
        "fits": fits,
        "exponent": law.exponent,
        "exponent_se": law.exponent_se,
        "intercept": law.intercept,
        "r2": law.r2,
    }
    _emit(_json(payload), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="isinghboa", description="hBOA on 2D Ising spin glasses")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def dist_flags(sp, required: bool):
        sp.add_argument("--dist", choices=["pmj", "gauss", "mix"], required=required)
        sp.add_argument("--mu-tilde", type=_float_list, dest="mu_tilde")

    sp = sub.add_parser("gen", help="generate a random instance")
    sp.add_argument("--L", type=_int_list, required=True)
    dist_flags(sp, True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("ground", help="exact ground state of an instance")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--method", choices=["brute", "transfer", "auto"], default="brute")
    sp.add_argument("--annotate", action="store_true",
                    help="append the ground_energy line to the instance file")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ground)

    sp = sub.add_parser("solve", help="one hBOA run at a fixed population size")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--pop", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--max-evals", type=int, default=Caps().max_evaluations)
    sp.add_argument("--max-gens", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("bisect", help="minimal population size for 10/10 successes")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--max-evals", type=int, default=Caps().max_evaluations)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bisect)

    sp = sub.add_parser("baseline", help="(1+1) evolution strategy run")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--max-evals", type=int, default=1_000_000)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("batch", help="measure E_G and E_L over many instances")
    sp.add_argument("--config", help="key=value batch spec file")
    sp.add_argument("--L", type=_int_list)
    dist_flags(sp, False)
    sp.add_argument("--count", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--ground-dir")
    sp.add_argument("--exact", choices=["auto", "brute", "none"], default="auto")
    sp.add_argument("--max-evals", type=int, default=Caps().max_evaluations)
    sp.add_argument("--resume", action="store_true",
                    help="keep rows already present in --out and run the rest")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_batch)

    for name, func, helptext in (
        ("fit", cmd_fit, "maximum-likelihood extreme-value fit of a results column"),
        ("scaling", cmd_scaling, "power-law fit of fitted locations against N = L^2"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--in", dest="input", required=True)
        sp.add_argument("--column", default="E_G")
        sp.add_argument("--L", type=_int_list)
        sp.add_argument("--dist", choices=["pmj", "gauss", "mix"])
        sp.add_argument("--mu-tilde", type=_float_list, dest="mu_tilde")
        sp.add_argument("--out")
        if name == "fit":
            sp.add_argument("--hist", help="write a normalised histogram CSV")
            sp.add_argument("--bins", type=int, default=30)
        sp.set_defaults(func=func)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (
        InstanceFormatError,
        OracleRangeError,
        PreconditionError,
        MeasurementError,
        FitError,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
