"""Acceptance criteria, one test each, each printing a PASS/FAIL line.

The hBOA experiments are read from cached batch outputs in
``tests/data/acceptance`` (see ``acceptance_data.py``); missing files are
computed on the fly, which takes hours for the scaling sets. Set
``ISINGHBOA_RECOMPUTE=1`` to rebuild every cached file first.
"""

from __future__ import annotations

import math
import os
import statistics

import numpy as np
import pytest

import acceptance_data as data
from isinghboa.cli import main as cli_main
from isinghboa.evd import EvdParams, evd_pdf, fit_mle, fit_power_law, moment_defined, sample_evd
from isinghboa.harness import baseline_one_plus_one, instance_id, instance_seed, read_results_csv
from isinghboa.lattice import CouplingDistribution, generate_instance
from isinghboa.oracle import brute_force_ground, transfer_matrix_ground
from isinghboa.rng import make_rng

PMJ = CouplingDistribution.plus_minus_j()
GAUSS = CouplingDistribution.gaussian()
RECOMPUTE = os.environ.get("ISINGHBOA_RECOMPUTE") == "1"
_rebuilt: set[str] = set()


def records(name):
    if RECOMPUTE and name not in _rebuilt:
        data.build(name, force=True)
        _rebuilt.add(name)
    return read_results_csv(data.build(name))


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def column(recs, name):
    return np.array([getattr(r, name) for r in recs], dtype=float)


def location_fits(recs, sizes):
    return {L: fit_mle(column([r for r in recs if r.L == L], "E_G")) for L in sizes}


# ---------------------------------------------------------------------------


def test_criterion_1_oracle_equivalence(capsys):
    recs = records("oracle_pmj") + records("oracle_gauss")
    matched = 0
    for r in recs:
        dist = PMJ if r.dist == "pmj" else GAUSS
        idx = int(r.instance_id.rsplit("_", 1)[1])
        inst = generate_instance(r.L, dist, instance_seed(1001, r.L, idx))
        ground = brute_force_ground(inst).ground_energy
        tol = 0.0 if r.dist == "pmj" else 1e-9
        matched += r.verified and abs(r.best_energy - ground) <= tol
    ok = len(recs) == 400 and matched == 400
    report(capsys, 1, ok, f"{matched}/400 instances reached the brute-force ground energy ({len(recs)} records)")


def test_criterion_2_frechet_shape(capsys):
    recs = [r for r in records("pmj_L8") if r.L == 8]
    fit = fit_mle(column(recs, "E_G"))
    xi, se = fit.params.xi, fit.se_xi
    ok = len(recs) >= 200 and xi + 2 * se < 0 and abs(xi) < 1
    report(capsys, 2, ok, f"L=8 +-J, {len(recs)} instances: xi={xi:.3f}, se={se:.3f}, xi+2se={xi + 2 * se:.3f}")


def test_criterion_3_location_scaling(capsys):
    sizes = (6, 8, 10, 12)
    pmj = records("pmj_L8") + records("pmj_L6_10_12")
    gauss = records("gauss_L6_8_10_12")
    counts = {d: [sum(r.L == L for r in rs) for L in sizes] for d, rs in (("pmj", pmj), ("gauss", gauss))}
    laws = {}
    for d, rs in (("pmj", pmj), ("gauss", gauss)):
        fits = location_fits(rs, sizes)
        laws[d] = (fit_power_law([L * L for L in sizes], [fits[L].params.mu for L in sizes]), fits)
    a_pmj, a_gauss = laws["pmj"][0].exponent, laws["gauss"][0].exponent
    enough = all(c >= 100 for cs in counts.values() for c in cs)
    ok = enough and 1.0 <= a_pmj <= 2.0 and a_gauss > a_pmj
    locs = {d: [round(float(laws[d][1][L].params.mu), 1) for L in sizes] for d in laws}
    report(
        capsys, 3, ok,
        f"+-J exponent {a_pmj:.2f} (se {laws['pmj'][0].exponent_se:.2f}, need [1,2]), "
        f"Gaussian {a_gauss:.2f} (se {laws['gauss'][0].exponent_se:.2f}); "
        f"locations {locs}; counts {counts}",
    )


def test_criterion_4_transition(capsys):
    recs = records("mix_L8")
    fits = {}
    for mu in (0.0, 0.6, 0.8, 0.95, 1.0):
        fits[mu] = fit_mle(column([r for r in recs if math.isclose(r.mu_tilde, mu)], "E_G"))
    end0, end1 = fits[0.0], fits[1.0]
    lo, hi = sorted([end0, end1], key=lambda f: f.params.mu)
    inside = []
    for mu in (0.6, 0.8, 0.95):
        f = fits[mu]
        below = math.hypot(f.se_mu, lo.se_mu)
        above = math.hypot(f.se_mu, hi.se_mu)
        inside.append(lo.params.mu - below <= f.params.mu <= hi.params.mu + above)
    ok = sum(inside) >= 2
    detail = ", ".join(f"mu~={m}: {fits[m].params.mu:.1f}+-{fits[m].se_mu:.1f}" for m in fits)
    report(capsys, 4, ok, f"{sum(inside)}/3 interior points within bounds; {detail}")


def test_criterion_5_gev_fitter(capsys):
    truth = EvdParams(100, 20, -0.4)
    fit = fit_mle(sample_evd(truth, 100_000, make_rng(5, "acceptance")))
    p = fit.params
    rec_ok = (abs(p.mu / 100 - 1) <= 0.02 and abs(p.beta / 20 - 1) <= 0.02 and abs(p.xi + 0.4) <= 0.03)
    xi = -0.5
    law = EvdParams(0, 1, xi)
    scaled = [evd_pdf(law, x) * x ** (1 - 1 / xi) for x in (1e3, 1e4)]
    tail = scaled[1] / scaled[0]
    ok = rec_ok and abs(tail - 1) <= 0.05
    report(capsys, 5, ok, f"fit mu={p.mu:.2f} beta={p.beta:.2f} xi={p.xi:.4f}; tail ratio {tail:.4f}")


def _median_second_moment(xi, reps=200):
    m2 = []
    for r in range(reps):
        x = sample_evd(EvdParams(0, 1, xi), 10**6, make_rng(6, "moment", xi, r))
        m2.append([np.mean(x[:10**4] ** 2), np.mean(x**2)])
    return np.median(np.array(m2), axis=0)


def test_criterion_6_moment_criterion(capsys):
    table_ok = all(
        moment_defined(xi, m) == (xi >= 0 or abs(xi) < 1 / m)
        for xi in np.round(np.arange(-1.5, 1.51, 0.05), 2)
        for m in range(1, 6)
    ) and moment_defined(-0.4, 2) and not moment_defined(-0.6, 2)
    # median over 200 independent sequences of the sample second moment
    # after 10^4 and 10^6 draws
    growth = {xi: float(np.divide(*_median_second_moment(xi)[::-1])) for xi in (-0.6, -0.4)}
    diverges = growth[-0.6] > 1.1
    stabilises = abs(growth[-0.4] - 1) <= 0.1
    ok = table_ok and diverges and stabilises
    report(
        capsys, 6, ok,
        f"truth table {'ok' if table_ok else 'WRONG'}; second-moment growth 1e4->1e6: "
        f"xi=-0.6 x{growth[-0.6]:.2f} (must exceed 1.1), xi=-0.4 x{growth[-0.4]:.3f} (must be within 10%)",
    )


def test_criterion_7_local_steps_ratio(capsys):
    recs = records("pmj_L6_10_12")
    ratio = {L: statistics.median(r.E_L / r.E_G for r in recs if r.L == L) for L in (6, 12)}
    growth = ratio[12] / ratio[6]
    g = records("gauss_L6_8_10_12")
    g_ratio = {L: statistics.median(r.E_L / r.E_G for r in g if r.L == L) for L in (6, 12)}
    ok = 1.3 <= growth <= 3.2
    report(
        capsys, 7, ok,
        f"+-J median E_L/E_G: L=6 {ratio[6]:.2f}, L=12 {ratio[12]:.2f}, growth {growth:.2f} (need [1.3,3.2]); "
        f"Gaussian growth {g_ratio[12] / g_ratio[6]:.2f} for reference",
    )


def _es_batch(L, count=30, seed=5005, cap=1_000_000):
    out = []
    for i in range(count):
        inst = generate_instance(L, PMJ, instance_seed(seed, L, i))
        ground = (brute_force_ground(inst) if L * L <= 26 else transfer_matrix_ground(inst)).ground_energy
        rng = make_rng(seed, "es", instance_id(PMJ, L, i))
        out.append(baseline_one_plus_one(inst.with_ground_energy(ground), rng, cap))
    return out


def test_criterion_8_mutation_baseline(capsys):
    hboa = records("baseline_hboa_L6")
    hboa_all = len(hboa) == 30 and all(r.verified for r in hboa)
    es6, es8 = _es_batch(6), _es_batch(8)
    med_h = statistics.median(r.E_G for r in hboa)
    med_es = statistics.median(m.E_G for m in es6)
    fail6 = sum(not m.found for m in es6) / 30
    fail8 = sum(not m.found for m in es8) / 30
    ok = hboa_all and med_es > med_h and fail8 > fail6
    report(
        capsys, 8, ok,
        f"hBOA solved {len(hboa)}/30, median E_G {med_h:g}; (1+1)-ES median E_G {med_es:g}; "
        f"ES failure rate L=6 {fail6:.2f}, L=8 {fail8:.2f}",
    )


def test_criterion_9_determinism(capsys, tmp_path):
    name = "oracle_pmj"
    cached = data.path_of(name)
    records(name)
    flags, _ = data.DATASETS[name]
    outs = []
    for jobs in ("1", "2"):
        out = tmp_path / f"rerun_{jobs}.csv"
        assert cli_main(["batch", *flags, "--jobs", jobs, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] == cached.read_bytes()
    report(capsys, 9, ok, f"{name} rerun serially and with 2 workers: byte-identical to the cached file: {ok}")
