"""Monte Carlo estimators over disorder realizations.

Each realization is an independent task keyed by ``(seed, index)``; the
per-realization results are collected in index order and reduced with
:meth:`McAccumulator.from_samples`, so no reported digit depends on the
worker count or the completion order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.stats

from .accumulate import McAccumulator
from .lattice import (
    DENSE_VOLUME_CAP,
    BoxSpec,
    DistributionSpec,
    LatticeError,
    SiteIndex,
    VolumeCapError,
    dense_hamiltonian,
    sample_disorder,
)
from .parallel import map_ordered
from .spectral import EnergyInterval

POISSON_SPACING_RATIO = 2 * math.log(2) - 1


class InsufficientDataError(ValueError):
    pass


def _check_volume(box: BoxSpec, cap: int = DENSE_VOLUME_CAP):
    if box.volume > cap:
        raise VolumeCapError(f"volume {box.volume} exceeds the dense eigensolver cap {cap}")


def site_index(box: BoxSpec, site) -> int:
    """Linear index from either a linear index or a coordinate vector."""
    if isinstance(site, (int, np.integer)):
        if not 0 <= site < box.volume:
            raise LatticeError(f"site index {site} outside the box")
        return int(site)
    return SiteIndex(box).index_of(site)


# -- spectra -------------------------------------------------------------------


def realization_spectrum(box: BoxSpec, dist: DistributionSpec, seed: int, index: int) -> np.ndarray:
    h = dense_hamiltonian(box, sample_disorder(dist, box, seed, index))
    return scipy.linalg.eigh(h, eigvals_only=True, check_finite=False)


def sample_spectra(box: BoxSpec, dist: DistributionSpec, samples: int, seed: int, workers: int = 1) -> np.ndarray:
    """(samples, |Λ|) array of ascending eigenvalues, row r from realization r."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    _check_volume(box)
    rows = map_ordered(partial(realization_spectrum, box, dist, seed), range(samples), workers)
    return np.vstack(rows)


# -- IDS -----------------------------------------------------------------------


@dataclass
class IdsCurve:
    energies: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    samples: int
    volume: int
    meta: dict = field(default_factory=dict)

    @property
    def counts(self) -> np.ndarray:
        """Pooled number of eigenvalues <= E over all realizations."""
        return np.rint(self.values * self.samples * self.volume).astype(np.int64)

    @property
    def trials(self) -> int:
        return self.samples * self.volume


def ids_from_spectra(spectra: np.ndarray, grid: Sequence[float], meta: dict | None = None) -> IdsCurve:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("energy grid must be strictly increasing")
    samples, volume = spectra.shape
    per_real = np.stack([np.searchsorted(row, grid, side="right") for row in spectra]) / volume
    acc = McAccumulator.from_samples(per_real)
    return IdsCurve(grid, np.asarray(acc.mean), np.asarray(acc.stderr), samples, volume, dict(meta or {}))


def estimate_ids(box, dist, grid, samples, seed, workers: int = 1) -> IdsCurve:
    spectra = sample_spectra(box, dist, samples, seed, workers)
    return ids_from_spectra(spectra, grid, {"seed": seed, "box": (box.d, box.L), "dist": dist.describe()})


# -- DOS -----------------------------------------------------------------------


@dataclass
class DosEstimate:
    edges: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    upper: np.ndarray
    pooled: np.ndarray
    samples: int
    volume: int
    bandwidth: float
    smoothed: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    # Lifshitz-fit adapter: per-bin energy, value and pooled count.
    @property
    def energies(self) -> np.ndarray:
        return self.centers

    @property
    def counts(self) -> np.ndarray:
        return self.pooled

    @property
    def trials(self) -> int:
        return self.samples * self.volume

    def bin_of(self, energy: float) -> int:
        b = int(np.searchsorted(self.edges, energy, side="left")) - 1
        return min(max(b, 0), len(self.values) - 1)


def _bin_counts(spectra: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Per-realization counts in bins (e_b, e_{b+1}], the first bin closed on the left."""
    span = edges[-1] - edges[0]
    tol = 1e-9 * max(1.0, abs(edges[0]), abs(edges[-1]))
    lo, hi = spectra.min(), spectra.max()
    if lo < edges[0] - tol or hi > edges[-1] + tol:
        raise ValueError(
            f"bins [{edges[0]:g}, {edges[-1]:g}] do not cover the spectrum [{lo:g}, {hi:g}] (span {span:g})"
        )
    nb = len(edges) - 1
    idx = np.clip(np.searchsorted(edges, spectra, side="left") - 1, 0, nb - 1)
    samples = spectra.shape[0]
    flat = idx + nb * np.arange(samples)[:, None]
    return np.bincount(flat.ravel(), minlength=nb * samples).reshape(samples, nb)


def dos_from_spectra(spectra: np.ndarray, edges, bandwidth: float | None = None, meta: dict | None = None) -> DosEstimate:
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    samples, volume = spectra.shape
    counts = _bin_counts(spectra, edges)
    widths = np.diff(edges)
    acc = McAccumulator.from_samples(counts)
    scale = volume * widths
    values = np.asarray(acc.mean) / scale
    stderr = np.asarray(acc.stderr) / scale
    pooled = counts.sum(axis=0)
    # rule of three: one-sided 95% bound for bins with no events
    upper = np.where(pooled == 0, 3.0 / (samples * scale), values + 2 * stderr)
    h = 2.0 * float(np.mean(widths)) if bandwidth is None else float(bandwidth)
    centers = 0.5 * (edges[1:] + edges[:-1])
    kern = scipy.stats.norm.pdf((centers[:, None] - centers[None, :]) / h) / h
    smoothed = kern @ (values * widths)
    return DosEstimate(edges, values, stderr, upper, pooled, samples, volume, h, smoothed, dict(meta or {}))


def estimate_dos(box, dist, bins, samples, seed, bandwidth=None, workers: int = 1) -> DosEstimate:
    spectra = sample_spectra(box, dist, samples, seed, workers)
    edges = full_spectrum_edges(box, dist, bins) if np.ndim(bins) == 0 else np.asarray(bins, dtype=float)
    return dos_from_spectra(spectra, edges, bandwidth, {"seed": seed, "box": (box.d, box.L), "dist": dist.describe()})


def full_spectrum_edges(box: BoxSpec, dist: DistributionSpec, nbins: int) -> np.ndarray:
    return np.linspace(0.0, 4.0 * box.d + dist.sup_support, int(nbins) + 1)


# -- Wegner ratio --------------------------------------------------------------


@dataclass
class WegnerReport:
    interval: EnergyInterval
    trace_mean: float
    trace_stderr: float
    ratio: float
    ratio_stderr: float
    samples: int
    volume: int

    @property
    def flagged(self) -> bool:
        """K̂ exceeds 1 by more than three standard errors."""
        return self.ratio - 3 * self.ratio_stderr > 1.0


def _interval_counts(spectra: np.ndarray, interval: EnergyInterval) -> np.ndarray:
    hi = np.array([np.searchsorted(row, interval.upper, side="right") for row in spectra])
    lo = np.array([np.searchsorted(row, interval.lower, side="left") for row in spectra])
    return hi - lo


def wegner_from_spectra(spectra: np.ndarray, dist: DistributionSpec, interval: EnergyInterval) -> WegnerReport:
    if not interval.width > 0:
        raise ValueError("Wegner ratio needs an interval of positive width")
    samples, volume = spectra.shape
    acc = McAccumulator.from_samples(_interval_counts(spectra, interval))
    norm = dist.density_sup * interval.width * volume
    return WegnerReport(
        interval, float(acc.mean), float(acc.stderr), float(acc.mean) / norm, float(acc.stderr) / norm, samples, volume
    )


def wegner_ratio(box, dist, interval, samples, seed, workers: int = 1) -> WegnerReport:
    interval = interval if isinstance(interval, EnergyInterval) else EnergyInterval(*interval)
    if not interval.width > 0:
        raise ValueError("Wegner ratio needs an interval of positive width")
    return wegner_from_spectra(sample_spectra(box, dist, samples, seed, workers), dist, interval)


def nonincreasing_within_bands(reports: Sequence[WegnerReport], nsigma: float = 3.0) -> bool:
    """True when K̂ never rises, beyond overlapping bands, as the interval edge shrinks."""
    order = sorted(reports, key=lambda r: r.interval.upper, reverse=True)
    for big, small in zip(order, order[1:]):
        if small.ratio - nsigma * small.ratio_stderr > big.ratio + nsigma * big.ratio_stderr:
            return False
    return True


# -- spectral averaging --------------------------------------------------------


@dataclass
class SpectralAveragingReport:
    site: int
    interval: EnergyInterval
    average: float
    stderr: float
    bound: float
    samples: int
    nodes: int

    @property
    def flagged(self) -> bool:
        return self.average - 3 * self.stderr > self.bound


def _conditional_weights(box, dist, site, intervals, nodes, seed, index) -> np.ndarray:
    """Quadrature average over ω_site of ⟨δ_site, P(I) δ_site⟩, one entry per interval."""
    base = sample_disorder(dist, box, seed, index).values
    xs, ws = dist.quadrature(nodes)
    h = np.broadcast_to(dense_hamiltonian(box, base), (xs.size, box.volume, box.volume)).copy()
    h[:, site, site] += xs - base[site]
    lam, vec = np.linalg.eigh(h)
    w_site = vec[:, site, :] ** 2
    out = np.empty(len(intervals))
    for j, iv in enumerate(intervals):
        out[j] = math.fsum(ws * np.sum(iv(lam) * w_site, axis=1))
    return out


def spectral_averaging_audit(box, dist, site, intervals, samples, seed, nodes: int = 64, workers: int = 1):
    """Compare the ω_site-averaged local spectral weight of I against ‖ρ‖∞|I|.

    The inner expectation over ω_site is a deterministic Gauss-Legendre rule
    (``nodes`` per density piece); all other couplings are refreshed per
    realization.  Accepts one interval or a sequence and returns the same shape.
    """
    single = isinstance(intervals, EnergyInterval) or (
        len(intervals) == 2 and all(isinstance(v, (int, float)) for v in intervals)
    )
    ivs = [intervals] if single else list(intervals)
    ivs = [iv if isinstance(iv, EnergyInterval) else EnergyInterval(*iv) for iv in ivs]
    _check_volume(box)
    s = site_index(box, site)
    rows = map_ordered(partial(_conditional_weights, box, dist, s, ivs, nodes, seed), range(samples), workers)
    acc = McAccumulator.from_samples(np.vstack(rows))
    reports = [
        SpectralAveragingReport(
            s, iv, float(acc.mean[j]), float(acc.stderr[j]), dist.density_sup * iv.width, samples, nodes
        )
        for j, iv in enumerate(ivs)
    ]
    return reports[0] if single else reports


# -- Lifshitz exponent ---------------------------------------------------------


@dataclass
class LifshitzFit:
    energies: np.ndarray
    exponents: np.ndarray
    sigma: np.ndarray
    usable: np.ndarray
    notes: list[str]
    window: tuple[float, float]
    max_exponent: float
    slope: float
    intercept: float
    substitutes: dict[float, float]

    @property
    def usable_energies(self) -> np.ndarray:
        return self.energies[self.usable]

    @property
    def usable_exponents(self) -> np.ndarray:
        return self.exponents[self.usable]


def lifshitz_exponent(energy, value):
    """log(-log v) / log E."""
    return np.log(-np.log(value)) / np.log(energy)


def zero_count_upper_bound(trials: int, confidence: float = 0.95) -> float:
    """Clopper-Pearson one-sided upper bound on a rate after 0 events in ``trials``."""
    return 1.0 - (1.0 - confidence) ** (1.0 / trials)


def lifshitz_exponent_fit(curve, window: tuple[float, float], min_count: int = 1) -> LifshitzFit:
    """Per-energy ℓ̂(E) on ``window`` with a least-squares trend of ℓ̂ against log E.

    ``curve`` is an :class:`IdsCurve` or a :class:`DosEstimate`; anything with
    ``energies``, ``values``, ``counts`` and ``trials`` works.  Points with a
    pooled count below ``min_count`` are excluded; zero-count points get a
    Clopper-Pearson substitute reported in ``substitutes``.  The trend is
    weighted by the delta-method errors of ℓ̂ when the curve carries a
    ``stderr`` array, so a handful of rare events cannot dominate it.
    """
    lo, hi = window
    if not (0 < lo < hi < 1):
        raise ValueError(f"window must lie inside (0, 1), got {window}")
    e = np.asarray(curve.energies, dtype=float)
    v = np.asarray(curve.values, dtype=float)
    c = np.asarray(curve.counts)
    sel = (e >= lo) & (e <= hi)
    e, v, c = e[sel], v[sel], c[sel]
    ell = np.full(e.shape, np.nan)
    usable = np.zeros(e.shape, dtype=bool)
    notes = []
    subs = {}
    for i in range(e.size):
        if c[i] == 0 or v[i] <= 0:
            up = zero_count_upper_bound(curve.trials)
            subs[float(e[i])] = float(lifshitz_exponent(e[i], up))
            notes.append(f"zero count; upper-confidence substitute {subs[float(e[i])]:.6g}")
        elif c[i] < min_count:
            notes.append(f"pooled count {int(c[i])} below {min_count}")
        elif v[i] >= 1:
            notes.append("value >= 1")
        else:
            ell[i] = lifshitz_exponent(e[i], v[i])
            usable[i] = True
            notes.append("")
    if usable.sum() < 3:
        raise InsufficientDataError(f"only {int(usable.sum())} usable points in window {window}; need 3")
    sigma = np.full(e.shape, np.nan)
    stderr = getattr(curve, "stderr", None)
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)[sel]
        # delta method: dℓ/dv = 1 / (v log v log E)
        sigma[usable] = se[usable] / np.abs(v[usable] * np.log(v[usable]) * np.log(e[usable]))
    w = 1.0 / sigma[usable] if np.all(sigma[usable] > 0) else None
    slope, intercept = np.polyfit(np.log(e[usable]), ell[usable], 1, w=w)
    return LifshitzFit(
        e, ell, sigma, usable, notes, (lo, hi), float(np.max(ell[usable])), float(slope), float(intercept), subs
    )


# -- Minami / Poisson statistics -----------------------------------------------


@dataclass
class MinamiReport:
    energy: float
    intensity: float
    scale: int
    half_width: float
    points: list[np.ndarray]
    count_mean: float
    count_variance: float
    ks_distance: float
    spacing_ratio: float
    total_points: int

    @property
    def variance_ratio(self) -> float:
        return self.count_variance / self.count_mean


def spacing_ratios(points: np.ndarray) -> np.ndarray:
    """min(s_i, s_{i+1}) / max(s_i, s_{i+1}) over consecutive spacings of sorted points."""
    s = np.diff(np.sort(points))
    if s.size < 2:
        return np.empty(0)
    a, b = s[:-1], s[1:]
    top = np.maximum(a, b)
    keep = top > 0
    return np.minimum(a, b)[keep] / top[keep]


def poisson_diagnostics(point_sets: Sequence[np.ndarray], intensity: float, half_width: float, min_points: int = 100):
    """Count dispersion, spacing KS distance and mean spacing ratio of windowed point sets.

    Returns ``(points, count_mean, count_variance, ks_distance, spacing_ratio)``
    where ``points`` are the sorted entries of each set inside
    ``[-half_width, half_width]``.
    """
    pts = [np.sort(p[np.abs(p) <= half_width]) for p in map(np.asarray, point_sets)]
    total = int(sum(p.size for p in pts))
    if total < min_points:
        raise InsufficientDataError(f"only {total} points in the window; need at least {min_points}")
    counts = np.array([p.size for p in pts], dtype=float)
    spacings = np.concatenate([np.diff(p) for p in pts])
    ratios = np.concatenate([spacing_ratios(p) for p in pts])
    ks = scipy.stats.kstest(spacings, "expon", args=(0, 1.0 / intensity)).statistic if spacings.size else math.nan
    return pts, float(counts.mean()), float(counts.var(ddof=1)), float(ks), float(np.mean(ratios))


def poisson_ratio_oracle(n_points: int = 200_000, seed: int = 0) -> float:
    """Mean spacing ratio of i.i.d. uniform points, the Poisson reference value."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x5A17])))
    return float(np.mean(spacing_ratios(rng.random(n_points))))


def lower_band_peak(dos: DosEstimate, top: float) -> float:
    """Centre of the highest DOS bin in the lower half of [0, top]."""
    lower = dos.centers < 0.5 * top
    b = int(np.argmax(np.where(lower, dos.values, -np.inf)))
    return float(dos.centers[b])


def minami_statistics(
    box,
    dist,
    energy: float | None,
    half_width: float | None,
    samples: int,
    seed: int,
    nbins: int = 90,
    spacings_in_window: float = 5.0,
    workers: int = 1,
) -> MinamiReport:
    """Rescaled eigenvalues |Λ|(λ - E) near E and their Poisson diagnostics.

    ``energy=None`` picks the DOS peak of the lower band; ``half_width=None``
    uses ``spacings_in_window`` expected spacings, 1/n̂(E) each.  The
    intensity n̂(E) comes from this run's own DOS histogram.
    """
    spectra = sample_spectra(box, dist, samples, seed, workers)
    dos = dos_from_spectra(spectra, full_spectrum_edges(box, dist, nbins))
    if energy is None:
        energy = lower_band_peak(dos, 4.0 * box.d + dist.sup_support)
    intensity = float(dos.values[dos.bin_of(energy)])
    if intensity <= 0:
        raise InsufficientDataError(f"estimated DOS at E={energy:g} is zero")
    if half_width is None:
        half_width = spacings_in_window / intensity
    scale = box.volume
    pts, mean, var, ks, ratio = poisson_diagnostics([scale * (row - energy) for row in spectra], intensity, half_width)
    return MinamiReport(float(energy), intensity, scale, float(half_width), pts, mean, var, ks, ratio, int(sum(p.size for p in pts)))
