import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from isinghboa.lattice import (
    CouplingDistribution,
    InstanceFormatError,
    delta_energy,
    edge_list,
    energy,
    flip,
    generate_instance,
    parse_instance,
    write_instance,
)

from conftest import GAUSS, PMJ, ferromagnet

DISTS = [PMJ, GAUSS, CouplingDistribution.mixture(0.8)]


def edge_sum_by_hand(L, J, s):
    """Direct sum over the right and down bonds of every site."""
    total = 0.0
    k = 0
    for row in range(L):
        for col in range(L):
            i = row * L + col
            right = row * L + (col + 1) % L
            down = ((row + 1) % L) * L + col
            total += s[i] * J[k] * s[right]
            total += s[i] * J[k + 1] * s[down]
            k += 2
    return total


class TestEdges:
    @pytest.mark.parametrize("L", [3, 4, 7])
    def test_edge_count_and_degree(self, L):
        e = edge_list(L)
        assert e.shape == (2 * L * L, 2)
        assert np.all(np.bincount(e.ravel(), minlength=L * L) == 4)

    def test_enumeration_order(self):
        e = edge_list(3)
        assert e[:6].tolist() == [[0, 1], [0, 3], [1, 2], [1, 4], [2, 0], [2, 5]]

    def test_no_duplicate_edges(self):
        e = np.sort(edge_list(3), axis=1)
        assert len({tuple(x) for x in e}) == 18


class TestGenerate:
    def test_pmj_values(self):
        inst = generate_instance(4, PMJ, 5)
        assert inst.couplings.size == 32
        assert set(np.unique(inst.couplings)) <= {-1.0, 1.0}

    def test_mixture_one_is_pmj(self):
        a = generate_instance(4, CouplingDistribution.mixture(1.0), 5)
        b = generate_instance(4, PMJ, 5)
        assert np.array_equal(a.couplings, b.couplings)

    def test_mixture_zero_is_gauss(self):
        a = generate_instance(6, CouplingDistribution.mixture(0.0), 5)
        b = generate_instance(6, GAUSS, 5)
        assert np.array_equal(a.couplings, b.couplings)

    def test_mixture_moments(self):
        J = np.concatenate(
            [generate_instance(10, CouplingDistribution.mixture(0.8), s).couplings for s in range(100)]
        )
        assert abs(J.mean()) < 0.05
        assert abs(J.var() - 1.0) < 0.1

    def test_mixture_moments_per_instance_rate(self):
        # the mean of 200 unit-variance draws has sd 0.071, so the 0.05 band
        # holds for only ~52% of instances (variance band ~81%)
        hits_mean = hits_var = 0
        n = 400
        for s in range(n):
            J = generate_instance(10, CouplingDistribution.mixture(0.8), s).couplings
            assert J.size == 200
            hits_mean += abs(J.mean()) < 0.05
            hits_var += abs(J.var() - 1.0) < 0.1
        for hits, rate in ((hits_mean, 0.523), (hits_var, 0.805)):
            sd = np.sqrt(rate * (1 - rate) / n)
            assert abs(hits / n - rate) < 4 * sd

    def test_mixture_is_bimodal(self):
        J = np.concatenate(
            [generate_instance(20, CouplingDistribution.mixture(0.95), s).couplings for s in range(5)]
        )
        # sigma_tilde = 0.31, so almost no mass near zero
        assert np.mean(np.abs(J) < 0.2) < 0.01

    def test_mixture_zero_matches_gauss_distribution(self):
        a = np.concatenate([generate_instance(50, CouplingDistribution.mixture(0.0), s).couplings for s in range(2)])
        b = np.concatenate([generate_instance(50, GAUSS, 100 + s).couplings for s in range(2)])
        assert a.size == b.size == 10_000
        assert stats.ks_2samp(a, b).statistic < 0.05

    def test_gauss_is_standard_normal(self):
        J = generate_instance(50, GAUSS, 3).couplings
        assert stats.kstest(J, "norm").pvalue > 0.001

    @pytest.mark.parametrize("dist", DISTS, ids=lambda d: d.tag())
    def test_determinism(self, dist):
        a = generate_instance(6, dist, 99).couplings
        b = generate_instance(6, dist, 99).couplings
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, generate_instance(6, dist, 100).couplings)

    @pytest.mark.parametrize("L", [0, 1, 2])
    def test_small_lattice_rejected(self, L):
        with pytest.raises(ValueError):
            generate_instance(L, PMJ, 1)

    def test_bad_mixture_parameter(self):
        with pytest.raises(ValueError):
            CouplingDistribution.mixture(1.5)


class TestEnergy:
    def test_ferromagnet(self):
        inst = ferromagnet(4)
        assert energy(inst, np.ones(16, dtype=np.int8)) == -32
        assert energy(inst, -np.ones(16, dtype=np.int8)) == -32

    def test_hand_sum_3x3(self):
        inst = generate_instance(3, PMJ, 31)
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = rng.choice([-1, 1], size=9)
            assert energy(inst, s) == edge_sum_by_hand(3, inst.couplings, s)

    def test_positive_coupling_prefers_antialigned(self):
        inst = ferromagnet(4)
        inst = type(inst)(4, np.ones(32), PMJ, 0)
        checker = np.array([(-1) ** (r + c) for r in range(4) for c in range(4)])
        assert energy(inst, checker) == -32

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            energy(ferromagnet(4), np.ones(15))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32), L=st.integers(3, 7), dist=st.sampled_from(DISTS))
    def test_global_flip_symmetry(self, seed, L, dist):
        inst = generate_instance(L, dist, seed)
        s = np.random.default_rng(seed).choice([-1, 1], size=L * L)
        assert energy(inst, s) == pytest.approx(energy(inst, -s), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32), L=st.integers(3, 7))
    def test_pmj_energies_even(self, seed, L):
        inst = generate_instance(L, PMJ, seed)
        s = np.random.default_rng(seed).choice([-1, 1], size=L * L)
        e = energy(inst, s)
        assert e == int(e) and int(e) % 2 == 0


class TestDelta:
    def test_ferromagnet_aligned(self):
        inst = ferromagnet(4)
        s = np.ones(16)
        assert all(delta_energy(inst, s, k) == 8 for k in range(16))

    def test_gauss_5x5_k7(self):
        inst = generate_instance(5, GAUSS, 8)
        s = np.random.default_rng(1).choice([-1, 1], size=25)
        full = energy(inst, flip(s, 7)) - energy(inst, s)
        assert delta_energy(inst, s, 7) == pytest.approx(full, abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32), dist=st.sampled_from(DISTS), k=st.integers(0, 35))
    def test_matches_recompute(self, seed, dist, k):
        inst = generate_instance(6, dist, seed)
        s = np.random.default_rng(seed).choice([-1, 1], size=36)
        full = energy(inst, flip(s, k)) - energy(inst, s)
        assert delta_energy(inst, s, k) == pytest.approx(full, abs=1e-9)

    @pytest.mark.parametrize("k", [-1, 16])
    def test_index_out_of_range(self, k):
        with pytest.raises(IndexError):
            delta_energy(ferromagnet(4), np.ones(16), k)

    def test_flip_copies(self):
        s = np.ones(4)
        t = flip(s, 2)
        assert s.tolist() == [1, 1, 1, 1] and t.tolist() == [1, 1, -1, 1]


class TestFileFormat:
    @pytest.mark.parametrize("dist", DISTS, ids=lambda d: d.tag())
    def test_round_trip(self, dist):
        for seed in range(50):
            inst = generate_instance(3 + seed % 5, dist, seed)
            if seed % 3 == 0:
                inst = inst.with_ground_energy(-1.2345678901234567 * seed)
            assert parse_instance(write_instance(inst)) == inst

    def test_layout(self):
        text = write_instance(generate_instance(3, GAUSS, 4).with_ground_energy(-7.5))
        lines = text.splitlines()
        assert lines[:5] == ["ising2d v1", "L 3", "dist gauss", "seed 4", "ground_energy -7.5"]
        assert len(lines) == 5 + 18
        i, j, J = lines[5].split()
        assert (i, j) == ("0", "1")
        assert len(J.lstrip("-").replace(".", "").split("e")[0].lstrip("0")) <= 17

    def test_mix_tag(self):
        text = write_instance(generate_instance(3, CouplingDistribution.mixture(0.8), 1))
        assert text.splitlines()[2] == "dist mix 0.8"

    def test_ground_energy_passthrough(self):
        text = write_instance(ferromagnet(4))
        lines = text.splitlines()
        lines.insert(4, "ground_energy -32")
        assert parse_instance("\n".join(lines) + "\n").ground_energy == -32

    def test_ground_energy_appended(self):
        text = write_instance(ferromagnet(4)) + "ground_energy -32\n"
        assert parse_instance(text).ground_energy == -32

    def test_missing_coupling(self):
        lines = write_instance(generate_instance(4, PMJ, 1)).splitlines()
        with pytest.raises(InstanceFormatError, match="expected 32 couplings"):
            parse_instance("\n".join(lines[:-1]) + "\n")

    def test_bad_header(self):
        text = write_instance(ferromagnet(3)).replace("ising2d v1", "ising2d v2")
        with pytest.raises(InstanceFormatError, match="line 1"):
            parse_instance(text)

    def test_non_numeric_coupling(self):
        lines = write_instance(ferromagnet(3)).splitlines()
        lines[7] = "1 2 abc"
        with pytest.raises(InstanceFormatError, match="line 8"):
            parse_instance("\n".join(lines))

    def test_edge_out_of_order(self):
        lines = write_instance(ferromagnet(3)).splitlines()
        lines[4], lines[5] = lines[5], lines[4]
        with pytest.raises(InstanceFormatError):
            parse_instance("\n".join(lines))
