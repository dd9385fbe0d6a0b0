"""2D periodic Ising spin glass instances.

Spins live on an L x L torus, indexed row-major (``i = row * L + col``).
Each node owns two edges, to its right and down neighbours with
wraparound, so an instance has exactly ``2 * L**2`` couplings, stored in
that enumeration order.

The energy of a configuration is ``sum over edges of s_i * J_ij * s_j``.
There is no leading minus sign: a positive coupling is satisfied by
anti-aligned spins, and ground states minimise this sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy.special import ndtri

from .rng import make_rng

__all__ = [
    "CouplingDistribution",
    "InstanceFormatError",
    "SpinGlassInstance",
    "delta_energy",
    "edge_list",
    "energy",
    "flip",
    "generate_instance",
    "neighbor_tables",
    "parse_instance",
    "read_instance",
    "write_instance",
]

FORMAT_HEADER = "ising2d v1"


class InstanceFormatError(ValueError):
    """Raised when an instance file cannot be parsed."""


@dataclass(frozen=True)
class CouplingDistribution:
    """Distribution of the coupling constants.

    ``kind`` is ``"pmj"`` (J = +1 or -1 with equal probability), ``"gauss"``
    (standard normal), or ``"mix"``: a two-component mixture with means
    +mu_tilde and -mu_tilde and common variance ``1 - mu_tilde**2``.
    """

    kind: str
    mu_tilde: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("pmj", "gauss", "mix"):
            raise ValueError(f"unknown coupling distribution {self.kind!r}")
        if self.kind == "mix":
            if self.mu_tilde is None:
                raise ValueError("mix distribution requires mu_tilde")
            mu = float(self.mu_tilde)
            if not 0.0 <= mu <= 1.0:
                raise ValueError(f"mu_tilde must lie in [0, 1], got {mu}")
            object.__setattr__(self, "mu_tilde", mu)
        elif self.mu_tilde is not None:
            raise ValueError(f"mu_tilde only applies to mix, not {self.kind}")

    @classmethod
    def plus_minus_j(cls) -> CouplingDistribution:
        return cls("pmj")

    @classmethod
    def gaussian(cls) -> CouplingDistribution:
        return cls("gauss")

    @classmethod
    def mixture(cls, mu_tilde: float) -> CouplingDistribution:
        return cls("mix", mu_tilde)

    @property
    def sigma_tilde(self) -> float:
        """Standard deviation of each mixture component."""
        if self.kind != "mix":
            raise ValueError("sigma_tilde is defined for the mixture only")
        return math.sqrt(max(0.0, 1.0 - self.mu_tilde**2))

    @property
    def integer_valued(self) -> bool:
        """True when every coupling is exactly +1 or -1."""
        return self.kind == "pmj" or (self.kind == "mix" and self.mu_tilde == 1.0)

    def tag(self) -> str:
        if self.kind == "mix":
            return f"mix {self.mu_tilde!r}"
        return self.kind

    @classmethod
    def from_tag(cls, text: str) -> CouplingDistribution:
        parts = text.split()
        if not parts:
            raise ValueError("empty distribution tag")
        if parts[0] == "mix":
            if len(parts) != 2:
                raise ValueError("mix requires exactly one mu_tilde value")
            return cls.mixture(float(parts[1]))
        if len(parts) != 1:
            raise ValueError(f"unexpected arguments for {parts[0]}")
        return cls(parts[0])


@lru_cache(maxsize=None)
def edge_list(L: int) -> np.ndarray:
    """(2 L^2, 2) array of edges in enumeration order: (i, right), (i, down)."""
    if L < 3:
        raise ValueError(f"side length must be at least 3, got {L}")
    edges = np.empty((2 * L * L, 2), dtype=np.int64)
    for row in range(L):
        for col in range(L):
            i = row * L + col
            edges[2 * i] = (i, row * L + (col + 1) % L)
            edges[2 * i + 1] = (i, ((row + 1) % L) * L + col)
    edges.setflags(write=False)
    return edges


@lru_cache(maxsize=None)
def _neighbor_index(L: int) -> tuple[np.ndarray, np.ndarray]:
    n = L * L
    nbr = np.empty((n, 4), dtype=np.int64)
    eid = np.empty((n, 4), dtype=np.int64)
    for row in range(L):
        for col in range(L):
            i = row * L + col
            left = row * L + (col - 1) % L
            up = ((row - 1) % L) * L + col
            nbr[i] = (row * L + (col + 1) % L, ((row + 1) % L) * L + col, left, up)
            eid[i] = (2 * i, 2 * i + 1, 2 * left, 2 * up + 1)
    nbr.setflags(write=False)
    eid.setflags(write=False)
    return nbr, eid


@dataclass(frozen=True, eq=False)
class SpinGlassInstance:
    """A spin glass sample: lattice side, couplings and provenance."""

    L: int
    couplings: np.ndarray
    distribution: CouplingDistribution
    seed: int
    ground_energy: float | None = None
    _nbr_j: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.L < 3:
            raise ValueError(f"side length must be at least 3, got {self.L}")
        J = np.array(self.couplings, dtype=np.float64)
        if J.shape != (2 * self.L * self.L,):
            raise ValueError(
                f"expected {2 * self.L * self.L} couplings, got {J.size}"
            )
        J.setflags(write=False)
        object.__setattr__(self, "couplings", J)
        _, eid = _neighbor_index(self.L)
        nbr_j = J[eid]
        nbr_j.setflags(write=False)
        object.__setattr__(self, "_nbr_j", nbr_j)

    @property
    def n_spins(self) -> int:
        return self.L * self.L

    @property
    def edges(self) -> np.ndarray:
        return edge_list(self.L)

    @property
    def energy_tolerance(self) -> float:
        """Absolute tolerance used when comparing energies to a target."""
        return 0.0 if self.distribution.integer_valued else 1e-9

    def with_ground_energy(self, value: float | None) -> SpinGlassInstance:
        return SpinGlassInstance(
            self.L, self.couplings, self.distribution, self.seed, value
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpinGlassInstance):
            return NotImplemented
        return (
            self.L == other.L
            and self.distribution == other.distribution
            and self.seed == other.seed
            and self.ground_energy == other.ground_energy
            and np.array_equal(self.couplings, other.couplings)
        )

    __hash__ = None  # type: ignore[assignment]


def neighbor_tables(inst: SpinGlassInstance) -> tuple[np.ndarray, np.ndarray]:
    """Per-spin neighbour indices and the matching couplings, both (N, 4)."""
    nbr, _ = _neighbor_index(inst.L)
    return nbr, inst._nbr_j


def _uniform_open(rng: np.random.Generator, size: int) -> np.ndarray:
    # (k + 0.5) / 2**53 never hits 0 or 1, so ndtri stays finite
    return (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) / 2.0**53


def generate_instance(
    L: int, dist: CouplingDistribution, seed: int
) -> SpinGlassInstance:
    """Draw ``2 L^2`` i.i.d. couplings from ``dist``.

    Signs and normal deviates come from separate streams, so the mixture
    reproduces the +-J couplings exactly at ``mu_tilde = 1`` and the
    Gaussian couplings exactly at ``mu_tilde = 0`` for the same seed.
    """
    if L < 3:
        raise ValueError(
            f"side length must be at least 3, got {L} "
            "(L = 2 would duplicate edges under periodic boundaries)"
        )
    m = 2 * L * L
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    if dist.kind == "pmj":
        J = _signs(seed, m)
    elif dist.kind == "gauss":
        J = _normals(seed, m)
    else:
        J = dist.mu_tilde * _signs(seed, m) + dist.sigma_tilde * _normals(seed, m)
    return SpinGlassInstance(L, J, dist, seed)


def _signs(seed: int, m: int) -> np.ndarray:
    rng = make_rng(seed, "coupling-signs")
    return rng.integers(0, 2, size=m).astype(np.float64) * 2.0 - 1.0


def _normals(seed: int, m: int) -> np.ndarray:
    # inverse-transform sampling keeps deviates independent of numpy's
    # normal-generation algorithm
    return ndtri(_uniform_open(make_rng(seed, "coupling-normals"), m))


@numba.njit(cache=True)
def _energy_kernel(spins, edges, J):
    total = 0.0
    for e in range(edges.shape[0]):
        total += spins[edges[e, 0]] * J[e] * spins[edges[e, 1]]
    return total


@numba.njit(cache=True)
def _delta_kernel(spins, nbr, nbr_j, k):
    field = 0.0
    for d in range(4):
        field += nbr_j[k, d] * spins[nbr[k, d]]
    return -2.0 * spins[k] * field


def _as_spins(inst: SpinGlassInstance, c) -> np.ndarray:
    s = np.asarray(c)
    if s.shape != (inst.n_spins,):
        raise ValueError(
            f"configuration has shape {s.shape}, instance needs ({inst.n_spins},)"
        )
    return s.astype(np.float64)


def energy(inst: SpinGlassInstance, c) -> float:
    """Energy of configuration ``c`` (length-N vector of +1/-1)."""
    return float(_energy_kernel(_as_spins(inst, c), inst.edges, inst.couplings))


def delta_energy(inst: SpinGlassInstance, c, k: int) -> float:
    """Energy change caused by flipping spin ``k``."""
    s = _as_spins(inst, c)
    if not 0 <= k < inst.n_spins:
        raise IndexError(f"spin index {k} out of range [0, {inst.n_spins})")
    nbr, nbr_j = neighbor_tables(inst)
    return float(_delta_kernel(s, nbr, nbr_j, k))


def flip(c, k: int) -> np.ndarray:
    """Copy of ``c`` with spin ``k`` flipped."""
    out = np.array(c, copy=True)
    out[k] = -out[k]
    return out


def write_instance(inst: SpinGlassInstance) -> str:
    lines = [
        FORMAT_HEADER,
        f"L {inst.L}",
        f"dist {inst.distribution.tag()}",
        f"seed {inst.seed}",
    ]
    if inst.ground_energy is not None:
        lines.append(f"ground_energy {inst.ground_energy:.17g}")
    for (i, j), value in zip(inst.edges, inst.couplings):
        lines.append(f"{i} {j} {value:.17g}")
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> SpinGlassInstance:
    lines = text.splitlines()

    def fail(lineno: int, msg: str) -> InstanceFormatError:
        return InstanceFormatError(f"line {lineno}: {msg}")

    def keyed(lineno: int, key: str) -> str:
        if lineno > len(lines):
            raise fail(lineno, f"missing '{key}' line")
        parts = lines[lineno - 1].split(maxsplit=1)
        if len(parts) != 2 or parts[0] != key:
            raise fail(lineno, f"expected '{key} <value>'")
        return parts[1].strip()

    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise fail(1, f"expected header '{FORMAT_HEADER}'")
    try:
        L = int(keyed(2, "L"))
    except ValueError:
        raise fail(2, "side length is not an integer") from None
    if L < 3:
        raise fail(2, f"side length must be at least 3, got {L}")
    try:
        dist = CouplingDistribution.from_tag(keyed(3, "dist"))
    except ValueError as exc:
        raise fail(3, str(exc)) from None
    try:
        seed = int(keyed(4, "seed"))
    except ValueError:
        raise fail(4, "seed is not an integer") from None
    if not 0 <= seed < 2**64:
        raise fail(4, "seed must be an unsigned 64-bit integer")

    pos = 5
    ground = None
    if pos <= len(lines) and lines[pos - 1].startswith("ground_energy"):
        try:
            ground = float(keyed(pos, "ground_energy"))
        except ValueError:
            raise fail(pos, "ground_energy is not a number") from None
        pos += 1

    body = [(k, line) for k, line in enumerate(lines[pos - 1 :], start=pos) if line.strip()]
    # `ground --annotate` appends the ground energy after the couplings
    if ground is None and body and body[-1][1].startswith("ground_energy"):
        lineno = body.pop()[0]
        try:
            ground = float(keyed(lineno, "ground_energy"))
        except ValueError:
            raise fail(lineno, "ground_energy is not a number") from None
    expected = 2 * L * L
    if len(body) != expected:
        last = body[-1][0] if body else pos
        raise fail(last, f"expected {expected} couplings, found {len(body)}")
    edges = edge_list(L)
    J = np.empty(expected, dtype=np.float64)
    for e, (lineno, line) in enumerate(body):
        parts = line.split()
        if len(parts) != 3:
            raise fail(lineno, "expected '<i> <j> <J_ij>'")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise fail(lineno, "edge endpoints must be integers") from None
        if (i, j) != (edges[e, 0], edges[e, 1]):
            raise fail(
                lineno, f"edge ({i}, {j}) out of order, expected {tuple(edges[e])}"
            )
        try:
            J[e] = float(parts[2])
        except ValueError:
            raise fail(lineno, f"non-numeric coupling {parts[2]!r}") from None
        if not math.isfinite(J[e]):
            raise fail(lineno, "coupling must be finite")
    if dist.kind == "pmj" and not np.all(np.abs(J) == 1.0):
        raise fail(pos, "pmj couplings must all be +1 or -1")
    return SpinGlassInstance(L, J, dist, seed, ground)


def read_instance(path) -> SpinGlassInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())
