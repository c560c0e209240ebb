"""Torus geometry, disorder sampling and finite-volume Anderson Hamiltonians.

Sites of the box ``j + [-L/2, L/2)^d`` are identified with the discrete torus
``Z^d / L Z^d``.  Linear indices run in C order over the box coordinates, with
the last coordinate varying fastest.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_VOLUME_CAP = 1 << 20
DENSE_VOLUME_CAP = 4096
SUBLATTICE_STEP = 4


class LatticeError(ValueError):
    """Invalid geometry, distribution, or field/box combination."""


class VolumeCapError(LatticeError):
    """Requested volume exceeds a configured resource cap."""


@dataclass(frozen=True)
class BoxSpec:
    d: int
    L: int
    origin: tuple[int, ...] = ()

    def __post_init__(self):
        if self.d < 1:
            raise LatticeError(f"d must be >= 1, got {self.d}")
        if self.L % 2:
            raise LatticeError(f"L must be even, got L={self.L}")
        if self.L < 4:
            raise LatticeError(f"L must be >= 4, got L={self.L}")
        origin = tuple(int(x) for x in self.origin) or (0,) * self.d
        if len(origin) != self.d:
            raise LatticeError(f"origin must have {self.d} components, got {len(origin)}")
        object.__setattr__(self, "origin", origin)

    @property
    def volume(self) -> int:
        return self.L**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d


@dataclass(frozen=True, eq=False)
class SiteIndex:
    """Bijection between box coordinates and linear indices, plus torus neighbours."""

    box: BoxSpec

    @cached_property
    def coords(self) -> np.ndarray:
        """(|Λ|, d) integer coordinates, row i is the site with linear index i."""
        half = self.box.L // 2
        grids = np.indices(self.box.shape).reshape(self.box.d, -1).T
        return grids - half + np.asarray(self.box.origin)

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(|Λ|, 2d) linear indices of the torus neighbours, ordered (-e_1, +e_1, -e_2, ...)."""
        lin = np.arange(self.box.volume).reshape(self.box.shape)
        cols = []
        for axis in range(self.box.d):
            for step in (1, -1):
                cols.append(np.roll(lin, step, axis=axis).ravel())
        return np.stack(cols, axis=1)

    def index_of(self, site: Sequence[int] | int) -> int:
        """Linear index of a point of Z^d, wrapped onto the torus."""
        x = np.atleast_1d(np.asarray(site, dtype=np.int64))
        if x.shape != (self.box.d,):
            raise LatticeError(f"site must have {self.box.d} components, got {tuple(x)}")
        offs = (x - np.asarray(self.box.origin) + self.box.L // 2) % self.box.L
        return int(np.ravel_multi_index(tuple(offs), self.box.shape))

    def site_of(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.box.volume:
            raise LatticeError(f"index {index} outside 0..{self.box.volume - 1}")
        return tuple(int(v) for v in self.coords[index])

    def wrap(self, site: Sequence[int]) -> tuple[int, ...]:
        return self.site_of(self.index_of(site))

    def offset(self, k: Sequence[int]) -> np.ndarray:
        """Minimal-image representative of a torus offset, components in [-L/2, L/2)."""
        half = self.box.L // 2
        return (np.asarray(k) + half) % self.box.L - half


def build_box(d: int, L: int, origin: Sequence[int] = (), volume_cap: int = DEFAULT_VOLUME_CAP):
    """Return ``(BoxSpec, SiteIndex)`` for the periodic box of side ``L`` in dimension ``d``."""
    box = BoxSpec(int(d), int(L), tuple(origin))
    if box.volume > volume_cap:
        raise VolumeCapError(f"volume L^d = {box.volume} exceeds the cap {volume_cap}")
    return box, SiteIndex(box)


# -- single-site distributions ----------------------------------------------


@dataclass(frozen=True)
class DistributionSpec:
    """Single-site law with a bounded, piecewise-constant density supported on [0, sup].

    ``uniform(0, b)`` is stored as a one-piece table.  ``edges`` are the
    breakpoints and ``densities`` the density value on each piece.
    """

    kind: str
    edges: tuple[float, ...]
    densities: tuple[float, ...]

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        dens = np.asarray(self.densities, dtype=float)
        if edges.ndim != 1 or len(edges) < 2 or len(dens) != len(edges) - 1:
            raise LatticeError("density table needs n+1 edges for n pieces")
        if not np.all(np.isfinite(edges)) or np.any(np.diff(edges) <= 0):
            raise LatticeError("density edges must be finite and strictly increasing")
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise LatticeError("density values must be finite and nonnegative")
        mass = float(np.sum(dens * np.diff(edges)))
        if abs(mass - 1.0) > 1e-10:
            raise LatticeError(f"density must integrate to 1, got {mass!r}")
        pos = np.nonzero(dens > 0)[0]
        if edges[pos[0]] != 0.0:
            raise LatticeError(f"support infimum must be 0, got {edges[pos[0]]:g}")

    @classmethod
    def uniform(cls, a: float, b: float) -> "DistributionSpec":
        if not b > a:
            raise LatticeError(f"uniform(a, b) needs a < b, got ({a}, {b})")
        if a != 0:
            raise LatticeError(f"support infimum must be 0, got {a:g}")
        return cls("uniform", (0.0, float(b)), (1.0 / b,))

    @classmethod
    def piecewise(cls, edges: Sequence[float], densities: Sequence[float]) -> "DistributionSpec":
        return cls("piecewise", tuple(float(e) for e in edges), tuple(float(v) for v in densities))

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Parse ``uniform:a,b`` or ``piecewise:e0,e1,...:r0,r1,...``."""
        kind, _, rest = text.strip().partition(":")
        try:
            if kind == "uniform":
                a, b = (float(v) for v in rest.split(","))
                return cls.uniform(a, b)
            if kind == "piecewise":
                e, r = rest.split(":")
                return cls.piecewise([float(v) for v in e.split(",")], [float(v) for v in r.split(",")])
        except LatticeError:
            raise
        except ValueError as exc:
            raise LatticeError(f"cannot parse distribution {text!r}: {exc}") from None
        raise LatticeError(f"unknown distribution kind {kind!r} (expected uniform or piecewise)")

    def describe(self) -> str:
        if self.kind == "uniform":
            return f"uniform:0,{self.sup_support:.17g}"
        e = ",".join(f"{v:.17g}" for v in self.edges)
        r = ",".join(f"{v:.17g}" for v in self.densities)
        return f"piecewise:{e}:{r}"

    @property
    def density_sup(self) -> float:
        return float(max(self.densities))

    @property
    def inf_support(self) -> float:
        return 0.0

    @property
    def sup_support(self) -> float:
        dens = np.asarray(self.densities)
        return float(self.edges[np.nonzero(dens > 0)[0][-1] + 1])

    @cached_property
    def _cdf_edges(self) -> np.ndarray:
        mass = np.asarray(self.densities) * np.diff(self.edges)
        return np.concatenate([[0.0], np.cumsum(mass)])

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        piece = np.searchsorted(self.edges, x, side="right") - 1
        inside = (piece >= 0) & (piece < len(self.densities))
        out = np.zeros_like(x)
        out[inside] = np.asarray(self.densities)[piece[inside]]
        return out

    def ppf(self, u) -> np.ndarray:
        """Inverse CDF on [0, 1); pieces of zero density are never hit."""
        u = np.asarray(u, dtype=float)
        cdf = self._cdf_edges
        dens = np.asarray(self.densities)
        live = np.nonzero(dens > 0)[0]
        # Restrict to positive-density pieces so the inverse is single valued.
        lo = cdf[live]
        j = np.clip(np.searchsorted(lo, u, side="right") - 1, 0, len(live) - 1)
        piece = live[j]
        x = np.asarray(self.edges)[piece] + (u - cdf[piece]) / dens[piece]
        return np.clip(x, 0.0, self.sup_support)

    def quadrature(self, nodes: int = 64) -> tuple[np.ndarray, np.ndarray]:
        """Gauss-Legendre nodes on each positive-density piece, weights include the density."""
        gx, gw = np.polynomial.legendre.leggauss(nodes)
        xs, ws = [], []
        for a, b, r in zip(self.edges[:-1], self.edges[1:], self.densities):
            if r <= 0:
                continue
            xs.append(0.5 * (b - a) * gx + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * gw * r)
        return np.concatenate(xs), np.concatenate(ws)


# -- disorder ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DisorderField:
    values: np.ndarray
    box: BoxSpec
    seed: int | None = None
    realization: int | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.box.volume,):
            raise LatticeError(f"field has shape {v.shape}, box needs ({self.box.volume},)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def replace(self, values) -> "DisorderField":
        return DisorderField(values, self.box, self.seed, self.realization)


def realization_rng(seed: int, realization: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, realization); independent of scheduling."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(realization)])
    return np.random.Generator(np.random.Philox(ss))


def sample_disorder(dist: DistributionSpec, box: BoxSpec, seed: int, realization: int = 0) -> DisorderField:
    """i.i.d. couplings; site ``i`` receives the i-th draw of the (seed, realization) stream."""
    if dist.inf_support != 0.0:
        raise LatticeError("support infimum must be 0")
    u = realization_rng(seed, realization).random(box.volume)
    return DisorderField(dist.ppf(u), box, seed, realization)


# -- operators -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    matrix: sp.csr_matrix
    box: BoxSpec

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_dense(self, cap: int = DENSE_VOLUME_CAP) -> np.ndarray:
        if self.dim > cap:
            raise VolumeCapError(f"dense conversion of dimension {self.dim} exceeds cap {cap}")
        return self.matrix.toarray()


_LAPLACIANS: dict[BoxSpec, sp.csr_matrix] = {}


def free_laplacian(box: BoxSpec) -> sp.csr_matrix:
    """-Δ on the torus: 2d on the diagonal, -1 on each edge."""
    lap = _LAPLACIANS.get(box)
    if lap is None:
        n = box.volume
        nbr = SiteIndex(box).neighbors
        rows = np.repeat(np.arange(n), nbr.shape[1])
        hop = sp.csr_matrix((np.full(rows.size, -1.0), (rows, nbr.ravel())), shape=(n, n))
        lap = (hop + sp.identity(n, format="csr") * (2.0 * box.d)).tocsr()
        lap.sort_indices()
        _LAPLACIANS[box] = lap
    return lap


def assemble_hamiltonian(box: BoxSpec, field: DisorderField | np.ndarray) -> OperatorMatrix:
    omega = _values_on(box, field)
    h = (free_laplacian(box) + sp.diags(omega, format="csr")).tocsr()
    h.sort_indices()
    return OperatorMatrix(h, box)


def dense_hamiltonian(box: BoxSpec, field: DisorderField | np.ndarray) -> np.ndarray:
    """Dense ``-Δ + V``; the fast path used inside Monte Carlo loops."""
    omega = _values_on(box, field)
    h = free_laplacian(box).toarray()
    h[np.diag_indices_from(h)] += omega
    return h


def _values_on(box: BoxSpec, field) -> np.ndarray:
    if isinstance(field, DisorderField):
        if field.box != box:
            raise LatticeError("disorder field was sampled on a different box")
        return field.values
    omega = np.asarray(field, dtype=float)
    if omega.shape != (box.volume,):
        raise LatticeError(f"field has shape {omega.shape}, box needs ({box.volume},)")
    return omega


def mask_potential(field: DisorderField, keep_sites: Iterable[int]) -> DisorderField:
    """Zero the couplings outside ``keep_sites`` (linear indices)."""
    keep = np.fromiter((int(i) for i in keep_sites), dtype=np.int64)
    if keep.size and (keep.min() < 0 or keep.max() >= field.box.volume):
        raise LatticeError("keep_sites contains an index outside the box")
    out = np.zeros(field.box.volume)
    out[keep] = field.values[keep]
    return field.replace(out)


# -- decoupling sublattice -----------------------------------------------------


@dataclass(frozen=True)
class SublatticeSpec:
    offset: tuple[int, ...]
    excluded: tuple[tuple[int, ...], ...] = field(default=())
    step: int = SUBLATTICE_STEP

    def contains(self, site: Sequence[int]) -> bool:
        return all((int(x) - o) % self.step == 0 for x, o in zip(site, self.offset))

    def sites_in(self, index: SiteIndex) -> np.ndarray:
        """Linear indices of Γ ∩ Λ."""
        if index.box.L % self.step:
            raise LatticeError(f"L must be divisible by {self.step}")
        rel = (index.coords - np.asarray(self.offset)) % self.step
        return np.nonzero(np.all(rel == 0, axis=1))[0]


def choose_decoupling_sublattice(box: BoxSpec, k: Sequence[int] | int) -> SublatticeSpec:
    """Lexicographically smallest offset in {0,1,2,3}^d whose sublattice misses 0 and k."""
    if box.L % SUBLATTICE_STEP:
        raise LatticeError(f"L must be divisible by 4, got L={box.L}")
    k = tuple(int(v) for v in np.atleast_1d(k))
    if len(k) != box.d:
        raise LatticeError(f"k must have {box.d} components")
    zero = (0,) * box.d
    for k0 in itertools.product(range(SUBLATTICE_STEP), repeat=box.d):
        spec = SublatticeSpec(tuple(k0), (zero, k))
        if not spec.contains(zero) and not spec.contains(k):
            return spec
    raise AssertionError("unreachable: first coordinate always admits a free residue")
