"""Exact ground states for small lattices.

Two solvers:

* ``brute_force_ground`` enumerates every configuration in Gray-code
  order with incremental energy updates (N <= 26). It also counts the
  ground-state degeneracy.
* ``transfer_matrix_ground`` sweeps the torus site by site, keeping the
  minimum energy for every state of the L-spin frontier, once per
  assignment of the first row. Cost grows as ``L^2 4^L``; it is exact
  and practical up to L = 12 or so, which covers the sizes that brute
  force cannot reach in the desk-scale experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .lattice import SpinGlassInstance, energy, neighbor_tables

__all__ = [
    "BRUTE_FORCE_MAX_SPINS",
    "GroundTruth",
    "OracleRangeError",
    "TRANSFER_MATRIX_MAX_L",
    "brute_force_ground",
    "exact_ground",
    "transfer_matrix_ground",
]

BRUTE_FORCE_MAX_SPINS = 26
TRANSFER_MATRIX_MAX_L = 14


class OracleRangeError(ValueError):
    """The instance is too large for the requested exact method."""


@dataclass(frozen=True)
class GroundTruth:
    ground_energy: float
    degeneracy: int | None
    witness: np.ndarray
    method: str


@numba.njit(cache=True)
def _gray_enumerate(nbr, nbr_j, n, tol):
    s = np.ones(n)
    e = 0.0
    for k in range(n):
        for d in range(2):  # right and down edges cover every edge once
            e += s[k] * nbr_j[k, d] * s[nbr[k, d]]
    best = e
    count = 1
    best_g = 0
    total = 1 << (n - 1)
    for g in range(1, total):
        # spin 0 stays +1; free spin index = 1 + number of trailing zeros
        bit = 0
        t = g
        while (t & 1) == 0:
            t >>= 1
            bit += 1
        k = bit + 1
        f = 0.0
        for d in range(4):
            f += nbr_j[k, d] * s[nbr[k, d]]
        e += -2.0 * s[k] * f
        s[k] = -s[k]
        if e < best - tol:
            best = e
            count = 1
            best_g = g
        elif e <= best + tol:
            count += 1
    return best, count, best_g


def brute_force_ground(inst: SpinGlassInstance) -> GroundTruth:
    """Exhaustive minimum of the energy with degeneracy count.

    Spin 0 is pinned to +1 (global flip symmetry), so 2^(N-1)
    configurations are visited and the count is doubled.
    """
    n = inst.n_spins
    if n > BRUTE_FORCE_MAX_SPINS:
        raise OracleRangeError(
            f"instance too large for brute force (N={n} > {BRUTE_FORCE_MAX_SPINS}); "
            "supply ground_energy in the instance file"
        )
    nbr, nbr_j = neighbor_tables(inst)
    tol = inst.energy_tolerance
    _, count, g = _gray_enumerate(nbr, nbr_j, n, tol)
    gray = g ^ (g >> 1)
    witness = np.ones(n, dtype=np.int8)
    for b in range(n - 1):
        if (gray >> b) & 1:
            witness[b + 1] = -1
    return GroundTruth(energy(inst, witness), 2 * int(count), witness, "brute")


@numba.njit(cache=True)
def _tm_sweep(L, row0, Jr, Jd, choice, record):
    size = 1 << L
    inf = np.inf
    dp = np.full(size, inf)
    new = np.empty(size)
    start = 0
    e0 = 0.0
    for c in range(L):
        if row0[c] > 0:
            start |= 1 << c
        e0 += Jr[0, c] * row0[c] * row0[(c + 1) % L]
    dp[start] = e0
    t = 0
    for r in range(1, L):
        last = r == L - 1
        for c in range(L):
            new[:] = inf
            mask = ~(1 << c)
            jd = Jd[r - 1, c]
            jl = Jr[r, c - 1] if c >= 1 else 0.0
            jw = Jr[r, L - 1] if c == L - 1 else 0.0
            jb = Jd[L - 1, c] * row0[c] if last else 0.0
            for S in range(size):
                v = dp[S]
                if v == inf:
                    continue
                old = (S >> c) & 1
                up = 1.0 if old else -1.0
                left = 0.0
                if c >= 1:
                    left = 1.0 if (S >> (c - 1)) & 1 else -1.0
                first = 1.0 if S & 1 else -1.0
                for b in range(2):
                    sp = 1.0 if b else -1.0
                    e = jd * up * sp + jl * left * sp + jw * sp * first + jb * sp
                    S2 = (S & mask) | (b << c)
                    val = v + e
                    if val < new[S2]:
                        new[S2] = val
                        if record:
                            choice[t, S2] = old
            dp, new = new, dp
            t += 1
    best = 0
    for S in range(1, size):
        if dp[S] < dp[best]:
            best = S
    return dp[best], best


@numba.njit(cache=True)
def _tm_all_rows(L, Jr, Jd):
    dummy = np.zeros((1, 1), dtype=np.uint8)
    row0 = np.empty(L)
    best_e = np.inf
    best_f = 0
    for f in range(1 << (L - 1)):
        row0[0] = 1.0
        for c in range(1, L):
            row0[c] = 1.0 if (f >> (c - 1)) & 1 else -1.0
        e, _ = _tm_sweep(L, row0, Jr, Jd, dummy, False)
        if e < best_e:
            best_e = e
            best_f = f
    return best_e, best_f


def transfer_matrix_ground(inst: SpinGlassInstance) -> GroundTruth:
    """Exact ground state by frontier dynamic programming (no degeneracy)."""
    L = inst.L
    if L > TRANSFER_MATRIX_MAX_L:
        raise OracleRangeError(
            f"instance too large for the transfer-matrix solver "
            f"(L={L} > {TRANSFER_MATRIX_MAX_L}); supply ground_energy"
        )
    Jr = np.ascontiguousarray(inst.couplings[0::2].reshape(L, L))
    Jd = np.ascontiguousarray(inst.couplings[1::2].reshape(L, L))
    _, f = _tm_all_rows(L, Jr, Jd)
    row0 = np.array(
        [1.0] + [1.0 if (f >> (c - 1)) & 1 else -1.0 for c in range(1, L)]
    )
    steps = (L - 1) * L
    choice = np.zeros((steps, 1 << L), dtype=np.uint8)
    _, state = _tm_sweep(L, row0, Jr, Jd, choice, True)
    spins = np.empty((L, L), dtype=np.int8)
    spins[0] = row0.astype(np.int8)
    t = steps - 1
    for r in range(L - 1, 0, -1):
        for c in range(L - 1, -1, -1):
            spins[r, c] = 1 if (state >> c) & 1 else -1
            state = (state & ~(1 << c)) | (int(choice[t, state]) << c)
            t -= 1
    witness = spins.reshape(-1)
    return GroundTruth(energy(inst, witness), None, witness, "transfer")


def exact_ground(inst: SpinGlassInstance, method: str = "auto") -> GroundTruth:
    """Dispatch to an exact solver.

    ``auto`` uses brute force when N <= 26 (so the degeneracy is known)
    and the transfer-matrix sweep otherwise.
    """
    if method == "brute":
        return brute_force_ground(inst)
    if method == "transfer":
        return transfer_matrix_ground(inst)
    if method != "auto":
        raise ValueError(f"unknown exact method {method!r}")
    if inst.n_spins <= BRUTE_FORCE_MAX_SPINS:
        return brute_force_ground(inst)
    return transfer_matrix_ground(inst)
