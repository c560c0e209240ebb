"""Numerical checks of the deterministic inequalities behind the DOS tail bound.

Everything here is exact linear algebra per disorder sample (up to the
eigensolver residual); Monte Carlo enters only where an ensemble average is
being compared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.special
import sympy

from .accumulate import McAccumulator
from .lattice import (
    BoxSpec,
    DisorderField,
    DistributionSpec,
    LatticeError,
    SiteIndex,
    SublatticeSpec,
    choose_decoupling_sublattice,
    dense_hamiltonian,
    mask_potential,
    sample_disorder,
)
from .parallel import map_ordered
from .spectral import EigenSystem, EnergyInterval, count_below, eigensolve, heat, indicator, operator_row

MAX_DERIVATIVE_ORDER = 7


class ProbeError(ValueError):
    pass


class LemmaHypothesisError(ProbeError):
    pass


def _aux_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    """Auxiliary stream, disjoint from the disorder stream of the same realization."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index), stream])))


# -- smooth cutoff -------------------------------------------------------------


def step_profile(x) -> np.ndarray:
    """C^∞ step: 1 for x <= 0, 0 for x >= 1, σ(1-x)/(σ(x)+σ(1-x)) between, σ(x)=e^{-1/x}."""
    x = np.asarray(x, dtype=float)
    out = np.where(x <= 0, 1.0, 0.0)
    inside = (x > 0) & (x < 1)
    xi = x[inside]
    # σ(1-x)/(σ(x)+σ(1-x)) = expit(1/x - 1/(1-x)), stable at both ends
    out[inside] = scipy.special.expit(1.0 / xi - 1.0 / (1.0 - xi))
    return out


@lru_cache(maxsize=None)
def _profile_derivatives(max_order: int) -> tuple[Callable, ...]:
    """Q_j with h^{(j)}(x) = s(1-s) Q_j(s, 1/x, 1/(1-x)), s = h(x), for j >= 1.

    h = expit(-u) with u = 1/(1-x) - 1/x, so ds/dx = -s(1-s)u'.  Keeping the
    factor s(1-s) outside and evaluating it as s * expit(u) avoids the
    cancellation that an expanded polynomial in s suffers near the plateaus.
    """
    s, a, b = sympy.symbols("s a b")
    du = a**2 + b**2
    p = s * (1 - s)

    def total(expr):
        # d/dx with da/dx = -a^2, db/dx = b^2, ds/dx = -p u'
        return sympy.diff(expr, a) * (-(a**2)) + sympy.diff(expr, b) * b**2 + sympy.diff(expr, s) * (-p * du)

    q = -du
    funcs = [None, sympy.lambdify((s, a, b), q, "numpy")]
    for _ in range(max_order - 1):
        q = sympy.expand(-(1 - 2 * s) * du * q + total(q))
        funcs.append(sympy.lambdify((s, a, b), q, "numpy", cse=True))
    return tuple(funcs)


def step_derivative(x, order: int) -> np.ndarray:
    if order == 0:
        return step_profile(x)
    if not 0 < order <= MAX_DERIVATIVE_ORDER:
        raise ProbeError(f"derivative order must be in 0..{MAX_DERIVATIVE_ORDER}")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0) & (x < 1)
    xi = x[inside]
    a, b = 1.0 / xi, 1.0 / (1.0 - xi)
    s = scipy.special.expit(a - b)
    with np.errstate(over="ignore", invalid="ignore"):
        val = s * scipy.special.expit(b - a) * _profile_derivatives(MAX_DERIVATIVE_ORDER)[order](s, a, b)
    # a^k overflows only where s(1-s) has already underflowed to 0
    out[inside] = np.where(np.isfinite(val), val, 0.0)
    return out


@dataclass(frozen=True)
class SmoothCutoff:
    """f_E(t) = h((t - E)/E): equal to 1 up to E, 0 from 2E on, non-increasing."""

    E: float

    def __post_init__(self):
        if not self.E > 0:
            raise ProbeError(f"cutoff scale must be positive, got {self.E}")

    def __call__(self, t) -> np.ndarray:
        return step_profile((np.asarray(t, dtype=float) - self.E) / self.E)

    def derivative(self, t, order: int) -> np.ndarray:
        return step_derivative((np.asarray(t, dtype=float) - self.E) / self.E, order) / self.E**order

    def scaled_sup(self, order: int, points: int = 20001) -> float:
        """sup_t |f_E^{(j)}(t)| E^j over a dense grid of [E, 2E]."""
        t = np.linspace(self.E, 2 * self.E, points)
        return float(np.max(np.abs(self.derivative(t, order)))) * self.E**order


def make_cutoff(E: float) -> SmoothCutoff:
    return SmoothCutoff(float(E))


@dataclass
class CutoffCheck:
    E: float
    orders: list[int]
    scaled_sup: list[float]
    fd_error: list[float]
    monotone: bool
    in_range: bool
    plateaus_exact: bool

    @property
    def ok(self) -> bool:
        return self.monotone and self.in_range and self.plateaus_exact and max(self.fd_error, default=0.0) < 1e-4


def verify_cutoff(E: float, d: int, points: int = 20001) -> CutoffCheck:
    """Check the cutoff invariants and the derivative bounds up to order min(2d+3, 7).

    Each analytic derivative is compared against a central difference of the
    previous one; ``fd_error`` is that discrepancy relative to the sup norm.
    """
    f = make_cutoff(E)
    orders = list(range(1, min(2 * d + 3, MAX_DERIVATIVE_ORDER) + 1))
    t = np.linspace(0.0, 3 * E, 3 * points)
    vals = f(t)
    x = np.linspace(0.0, 1.0, points)
    dx = x[1] - x[0]
    sups, errs = [], []
    for j in orders:
        hj = step_derivative(x, j)
        fd = np.gradient(step_derivative(x, j - 1), dx)
        sup = float(np.max(np.abs(hj)))
        # second-order FD error scales with h^2 times the next derivative
        errs.append(float(np.max(np.abs(hj[2:-2] - fd[2:-2]))) / sup)
        sups.append(f.scaled_sup(j, points))
    return CutoffCheck(
        E,
        orders,
        sups,
        errs,
        bool(np.all(np.diff(vals) <= 0)),
        bool(np.all((vals >= 0) & (vals <= 1))),
        bool(np.all(vals[t <= E] == 1.0) and np.all(vals[t >= 2 * E] == 0.0)),
    )


# -- trace lemma ---------------------------------------------------------------


@dataclass
class LemmaCase:
    """H = H0 + W with f supported below E0 and 1 >= g >= 1 below E0."""

    h0: np.ndarray
    w: np.ndarray
    e0: float
    f: Callable
    g: Callable
    family: str = ""
    equality: bool = False

    @property
    def h(self) -> np.ndarray:
        return self.h0 + self.w


def _spectral(a: np.ndarray) -> EigenSystem:
    return eigensolve(a, need_vectors=True)


def validate_lemma_case(case: LemmaCase) -> tuple[EigenSystem, EigenSystem]:
    n = case.h0.shape[0]
    if n > 16:
        raise LemmaHypothesisError(f"dimension {n} exceeds 16")
    for name, a in (("H0", case.h0), ("W", case.w)):
        if a.shape != (n, n) or not np.array_equal(a, a.T):
            raise LemmaHypothesisError(f"{name} must be a symmetric {n}x{n} matrix")
    es, es0 = _spectral(case.h), _spectral(case.h0)
    fv, gv = case.f(es.values), case.g(es0.values)
    if np.any(fv < 0):
        raise LemmaHypothesisError("f must be nonnegative")
    if np.any(fv[es.values > case.e0] != 0):
        raise LemmaHypothesisError("f must vanish above E0")
    if np.any(gv > 1) or np.any(gv[es0.values <= case.e0] < 1):
        raise LemmaHypothesisError("g must satisfy 1[(-inf, E0]] <= g <= 1")
    if np.any(gv < 0):
        raise LemmaHypothesisError("g must be nonnegative")
    return es, es0


def check_trace_lemma(case: LemmaCase) -> float:
    """tr f(H) W g(H0) - tr f(H) W, which must be >= 0."""
    es, es0 = validate_lemma_case(case)
    fh = (es.vectors * case.f(es.values)) @ es.vectors.T
    g0 = (es0.vectors * case.g(es0.values)) @ es0.vectors.T
    fw = fh @ case.w
    return float(np.sum(fw * g0.T) - np.trace(fw))


def _goe(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    a = 0.5 * (a + a.T)
    return a / max(np.max(np.abs(np.linalg.eigvalsh(a))), 1e-12)


def generate_lemma_cases(count: int, seed: int, max_dim: int = 12) -> Iterator[LemmaCase]:
    """Hypothesis-valid corpus alternating diagonal-nonnegative and general symmetric W.

    H0 is a GOE-type matrix with spectral radius 1 shifted to [0, 2].  f and
    g rotate through smooth cutoffs and indicators; every fifth case has
    g ≡ 1 (the equality case).
    """
    for i in range(count):
        rng = _aux_rng(seed, i, 0x1E)
        n = int(rng.integers(2, max_dim + 1))
        h0 = _goe(rng, n) + np.eye(n)
        h0 = 0.5 * (h0 + h0.T)
        family = "diagonal" if i % 2 == 0 else "symmetric"
        if family == "diagonal":
            w = np.diag(rng.uniform(0.0, 1.0, n))
        else:
            w = 0.5 * _goe(rng, n)
            w = 0.5 * (w + w.T)
        e0 = float(rng.uniform(0.2, 2.5))
        variant = i % 5
        if variant in (0, 1, 2):
            f = make_cutoff(e0 / 2)
        else:
            a = float(rng.uniform(-1.0, e0))
            f = partial(_scaled_indicator, a, e0, float(rng.uniform(0.1, 1.0)))
        if variant == 4:
            g = _one
        elif variant in (1, 3):
            g = EnergyInterval(-math.inf, e0 + float(rng.uniform(0.0, 1.0)))
        else:
            g = make_cutoff(e0)
        yield LemmaCase(h0, w, e0, f, g, family, equality=(g is _one))


def _one(lam):
    return np.ones_like(np.asarray(lam, dtype=float))


def _scaled_indicator(a, b, amp, lam):
    return amp * indicator(a, b)(lam)


@dataclass
class LemmaCorpusReport:
    family: str
    cases: int
    rejected: int
    min_margin: float
    violations: int
    equality_cases: int
    max_equality_error: float


def lemma_corpus(count: int, seed: int, max_dim: int = 12, tolerance: float = 1e-9) -> list[LemmaCorpusReport]:
    stats: dict[str, dict] = {}
    for case in generate_lemma_cases(count, seed, max_dim):
        st = stats.setdefault(
            case.family, {"cases": 0, "rejected": 0, "min": math.inf, "viol": 0, "eq": 0, "eq_err": 0.0}
        )
        try:
            margin = check_trace_lemma(case)
        except LemmaHypothesisError:
            st["rejected"] += 1
            continue
        st["cases"] += 1
        st["min"] = min(st["min"], margin)
        st["viol"] += margin < -tolerance
        if case.equality:
            st["eq"] += 1
            st["eq_err"] = max(st["eq_err"], abs(margin))
    return [
        LemmaCorpusReport(fam, s["cases"], s["rejected"], s["min"], int(s["viol"]), s["eq"], s["eq_err"])
        for fam, s in sorted(stats.items())
    ]


# -- kernel decay ----------------------------------------------------------------


@dataclass
class DecayProfile:
    offsets: np.ndarray
    radius: np.ndarray
    bracket: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    fit_range: tuple[float, float]
    exponent: float
    constant: float
    samples: int


def _decay_row(box, dist, E, seed, index) -> np.ndarray:
    idx = SiteIndex(box)
    field = sample_disorder(dist, box, seed, index)
    zero = idx.index_of((0,) * box.d)
    perp = mask_potential(field, np.delete(np.arange(box.volume), zero))
    es = eigensolve(dense_hamiltonian(box, perp), need_vectors=True)
    return np.abs(operator_row(es, zero, make_cutoff(E)))


def decay_envelope(radius: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct radii and the non-increasing envelope max_{|k| >= r} value(k)."""
    radii, inverse = np.unique(np.round(radius, 9), return_inverse=True)
    shell = np.zeros(radii.size)
    np.maximum.at(shell, inverse, values)
    env = np.maximum.accumulate(shell[::-1])[::-1]
    return radii, env


def kernel_decay_profile(box: BoxSpec, dist: DistributionSpec, E: float, samples: int, seed: int,
                         fit_range: tuple[float, float] | None = None, workers: int = 1) -> DecayProfile:
    """Averaged |⟨δ_0, f_E(H with ω_0 removed) δ_k⟩| over every torus offset k."""
    if not E > 0:
        raise ProbeError("E must be positive")
    idx = SiteIndex(box)
    rows = map_ordered(partial(_decay_row, box, dist, E, seed), range(samples), workers)
    acc = McAccumulator.from_samples(np.vstack(rows))
    offsets = idx.offset(idx.coords)
    radius = np.linalg.norm(offsets, axis=1)
    bracket = np.sqrt(1.0 + radius**2)
    values = np.asarray(acc.mean)
    lo, hi = fit_range or (2.0, box.L / 4)
    radii, env = decay_envelope(radius, values)
    sel = (radii >= lo) & (radii <= hi) & (env > 0)
    if sel.sum() < 2:
        raise ProbeError(f"degenerate fit window {lo}..{hi}: {int(sel.sum())} usable radii")
    slope, _ = np.polyfit(np.log(np.sqrt(1 + radii[sel] ** 2)), np.log(env[sel]), 1)
    constant = float(np.max(values * bracket ** (box.d + 1))) * E ** (box.d + 1.5)
    return DecayProfile(offsets, radius, bracket, values, np.asarray(acc.stderr), (lo, hi), float(-slope), constant, samples)


# -- heat semigroup comparison ---------------------------------------------------


@dataclass
class HeatCheck:
    r: tuple[int, ...]
    t: float
    full: float
    perp: float
    sublattice: float
    projection: float
    tail: float

    @property
    def monotone_slack(self) -> float:
        """min over the chain e^{-tH_ω} <= e^{-tH_{ω_0^⊥}} <= e^{-tH_{ω_Γ}} at (r, r)."""
        return min(self.perp - self.full, self.sublattice - self.perp)

    @property
    def split_slack(self) -> float:
        return self.projection + self.tail - self.sublattice


def _coords(box: BoxSpec, site) -> tuple[int, ...]:
    site = tuple(int(v) for v in np.atleast_1d(site))
    if len(site) != box.d:
        raise LatticeError(f"site must have {box.d} components")
    return site


def heat_comparison(box: BoxSpec, field: DisorderField, sublattice: SublatticeSpec, r, t: float,
                    energy: float) -> HeatCheck:
    """Diagonal heat-kernel entries at r for the full, 0-removed and Γ-restricted potentials.

    Masking couplings lowers the operator and so raises e^{-tH} entrywise;
    the split bound compares the Γ-restricted entry with the spectral weight
    below 4E plus e^{-4tE}.
    """
    return heat_comparisons(box, field, sublattice, [r], [t], energy)[0]


def heat_comparisons(box, field, sublattice, rs, ts, energy) -> list[HeatCheck]:
    if box.L % 4:
        raise LatticeError(f"L must be divisible by 4, got L={box.L}")
    if np.any(field.values < 0):
        raise ProbeError("heat comparison needs a nonnegative potential")
    idx = SiteIndex(box)
    rs = [_coords(box, r) for r in rs]
    for r in rs:
        if sublattice.contains(r):
            raise ProbeError(f"r={r} lies in the sublattice")
    if any(t < 0 for t in ts):
        raise ProbeError("t must be >= 0")
    zero = idx.index_of((0,) * box.d)
    perp = mask_potential(field, np.delete(np.arange(box.volume), zero))
    sub = mask_potential(field, sublattice.sites_in(idx))
    es_full = eigensolve(dense_hamiltonian(box, field), need_vectors=True)
    es_perp = eigensolve(dense_hamiltonian(box, perp), need_vectors=True)
    es_sub = eigensolve(dense_hamiltonian(box, sub), need_vectors=True)
    low = indicator(-math.inf, 4 * energy)
    out = []
    for r in rs:
        i = idx.index_of(r)
        w_full, w_perp, w_sub = (es.vectors[i] ** 2 for es in (es_full, es_perp, es_sub))
        proj = float(np.dot(low(es_sub.values), w_sub))
        for t in ts:
            g = heat(t)
            out.append(HeatCheck(
                r, float(t),
                float(np.dot(g(es_full.values), w_full)),
                float(np.dot(g(es_perp.values), w_perp)),
                float(np.dot(g(es_sub.values), w_sub)),
                proj,
                math.exp(-4 * t * energy),
            ))
    return out


@dataclass
class HeatProbeReport:
    cases: int
    checks: int
    monotone_violations: int
    split_violations: int
    min_monotone_slack: float
    min_split_slack: float
    tolerance: float


def _heat_case(box, dist, ts, energy, seed, index) -> list[HeatCheck]:
    idx = SiteIndex(box)
    field = sample_disorder(dist, box, seed, index)
    k = idx.site_of(int(_aux_rng(seed, index, 0x4EA7).integers(box.volume)))
    gamma = choose_decoupling_sublattice(box, k)
    rs = [(0,) * box.d] + ([k] if any(k) else [])
    return heat_comparisons(box, field, gamma, rs, ts, energy)


def heat_probe(box, dist, cases, ts, energy, seed, tolerance: float = 1e-10, workers: int = 1):
    """Random (field, k) cases; r runs over {0, k} and Γ is the decoupling sublattice of k."""
    checks = [c for batch in map_ordered(partial(_heat_case, box, dist, tuple(ts), energy, seed), range(cases), workers)
              for c in batch]
    mono = np.array([c.monotone_slack for c in checks])
    split = np.array([c.split_slack for c in checks])
    report = HeatProbeReport(cases, len(checks), int(np.sum(mono < -tolerance)), int(np.sum(split < -tolerance)),
                             float(mono.min()), float(split.min()), tolerance)
    return report, checks


# -- decoupling bound ------------------------------------------------------------


@dataclass(frozen=True)
class DecouplingParams:
    d: int
    E: float
    eps: float

    def __post_init__(self):
        if not 0 < self.eps < self.d / 2:
            raise ProbeError(f"eps must lie in (0, d/2) = (0, {self.d / 2}), got {self.eps}")
        if not self.E > 0:
            raise ProbeError("E must be positive")

    @property
    def t(self) -> float:
        """t_E = (4E)^{-d/2-1+ε} - (1+2d) log 2 / (4E)."""
        x = 4 * self.E
        return x ** (-self.d / 2 - 1 + self.eps) - (1 + 2 * self.d) * math.log(2) / x

    @property
    def valid(self) -> bool:
        return self.t > 0

    def identity_sides(self) -> tuple[float, float]:
        """(e^{-4 t_E E}, 2·4^d e^{-(4E)^{-d/2+ε}}); equal whenever t_E is used."""
        x = 4 * self.E
        lhs = math.exp(-4 * self.t * self.E)
        rhs = 2 * 4**self.d * math.exp(-(x ** (-self.d / 2 + self.eps)))
        return lhs, rhs

    @property
    def target(self) -> float:
        """4^{d+1} e^{-(4E)^{-d/2+ε}}, the bound on E{tr Π_r P̃_0 Π_r}."""
        return 4 ** (self.d + 1) * math.exp(-((4 * self.E) ** (-self.d / 2 + self.eps)))


def largest_valid_energy(d: int, eps: float, grid: Sequence[float]) -> float | None:
    """Largest grid energy with t_E > 0."""
    ok = [E for E in grid if DecouplingParams(d, E, eps).valid]
    return max(ok) if ok else None


@dataclass
class ChainCheck:
    """Terms of the Cauchy-Schwarz chain for one disorder sample."""

    trace: float
    smoothed: float
    term_sum: float
    cauchy_schwarz: float
    averaged: float

    def violation(self) -> float:
        """Largest amount by which any step fails (<= 0 when the chain holds)."""
        return max(
            self.trace - self.smoothed,
            abs(self.smoothed - self.term_sum),
            self.smoothed - self.cauchy_schwarz,
            self.cauchy_schwarz - self.averaged,
        )


def cauchy_schwarz_chain(es_full: EigenSystem, es_perp: EigenSystem, zero: int, interval: EnergyInterval,
                         E: float) -> ChainCheck:
    """tr P(I)Π_0 <= tr P(I)Π_0P̃_0 = Σ_k ... <= Σ_k ‖P Π_0‖₂‖P Π_k‖₂|P̃_0(0,k)| <= ½Σ_k (P_00 + P_kk)|P̃_0(0,k)|."""
    v = es_full.require_vectors()
    chi = interval(es_full.values)
    p_diag = (v**2) @ chi
    p_col0 = v @ (chi * v[zero])
    ptilde = operator_row(es_perp, zero, make_cutoff(E))
    terms = p_col0 * ptilde
    smoothed = float(np.dot(p_col0, ptilde))
    p0 = p_diag[zero]
    return ChainCheck(
        float(p0),
        smoothed,
        math.fsum(terms),
        float(np.dot(np.sqrt(np.clip(p0 * p_diag, 0, None)), np.abs(ptilde))),
        float(0.5 * np.dot(p0 + p_diag, np.abs(ptilde))),
    )


@dataclass
class DecouplingSample:
    chain: ChainCheck
    smoothed_diag: dict
    heat_diag: dict
    projection_diag: dict
    coset_mean: dict
    sublattice_ids: float
    transl_bound_ok: bool
    domination_ok: bool
    smoothing_ok: bool


def _decoupling_sample(box, dist, E, t, interval, k_fixed, seed, index) -> DecouplingSample:
    idx = SiteIndex(box)
    field = sample_disorder(dist, box, seed, index)
    if k_fixed is None:
        k = idx.site_of(int(_aux_rng(seed, index, 0xDEC0).integers(box.volume)))
    else:
        k = idx.wrap(k_fixed)
    gamma = choose_decoupling_sublattice(box, k)
    zero = idx.index_of((0,) * box.d)
    perp = mask_potential(field, np.delete(np.arange(box.volume), zero))
    gsites = gamma.sites_in(idx)
    sub = mask_potential(field, gsites)
    es_full = eigensolve(dense_hamiltonian(box, field), need_vectors=True)
    es_perp = eigensolve(dense_hamiltonian(box, perp), need_vectors=True)
    es_sub = eigensolve(dense_hamiltonian(box, sub), need_vectors=True)
    chain = cauchy_schwarz_chain(es_full, es_perp, zero, interval, E)

    f = make_cutoff(E)
    low = indicator(-math.inf, 4 * E)
    w_perp = es_perp.vectors**2
    w_sub = es_sub.vectors**2
    proj_all = w_sub @ low(es_sub.values)
    heat_sub = w_sub @ heat(t)(es_sub.values)
    heat_perp = w_perp @ heat(t)(es_perp.values)
    smooth = w_perp @ f(es_perp.values)
    n_low = count_below(es_sub, 4 * E)
    smoothed_diag, heat_diag, proj_diag, coset = {}, {}, {}, {}
    smoothing_ok = True
    transl_ok = True
    # r = 0 and r = k; both lie outside Γ
    for name, r in (("0", (0,) * box.d), ("k", k)):
        i = idx.index_of(r)
        smoothed_diag[name] = float(smooth[i])
        heat_diag[name] = float(heat_sub[i])
        proj_diag[name] = float(proj_all[i])
        # orbit of r under the translations (4Z)^d that leave the law of ω_Γ invariant
        rel = (idx.coords - np.asarray(r)) % 4
        members = np.nonzero(np.all(rel == 0, axis=1))[0]
        coset[name] = float(np.mean(proj_all[members]))
        tol = 1e-10
        scale = math.exp(2 * t * E)
        smoothing_ok &= smooth[i] <= scale * heat_perp[i] + tol and heat_perp[i] <= heat_sub[i] + tol
        transl_ok &= coset[name] <= 4**box.d / box.volume * n_low + tol
    domination = bool(np.all(es_sub.values <= es_full.values + 1e-10))
    return DecouplingSample(chain, smoothed_diag, heat_diag, proj_diag, coset, n_low / box.volume,
                            bool(transl_ok), domination, bool(smoothing_ok))


@dataclass
class DecouplingReport:
    params: DecouplingParams
    interval: EnergyInterval
    samples: int
    t_used: float
    identity: tuple[float, float] | None
    chain_violations: int
    max_chain_violation: float
    smoothed_mean: dict
    smoothed_stderr: dict
    heat_mean: dict
    projection_mean: dict
    sublattice_ids: float
    sublattice_ids_stderr: float
    transl_difference: dict
    transl_stderr: dict
    transl_bound_failures: int
    domination_failures: int
    smoothing_failures: int
    notes: list[str] = field(default_factory=list)

    @property
    def regime(self) -> str:
        return "inside E'_eps regime" if self.params.valid else "outside E'_eps regime"

    @property
    def transl_ok(self) -> bool:
        return all(abs(self.transl_difference[r]) <= 3 * self.transl_stderr[r] + 1e-12 for r in self.transl_difference)

    @property
    def flagged(self) -> bool:
        return bool(self.chain_violations or self.transl_bound_failures or self.domination_failures
                    or self.smoothing_failures or not self.transl_ok)


def evaluate_decoupling_bound(box: BoxSpec, dist: DistributionSpec, E: float, eps: float, samples: int, seed: int,
                              interval: EnergyInterval | None = None, k=None, tolerance: float = 1e-9,
                              workers: int = 1) -> DecouplingReport:
    """Per-sample chain checks plus the ensemble quantities entering the sublattice bound.

    When t_E <= 0 the identity and t_E-dependent bound are not evaluated and
    the heat comparisons fall back to t = 1/E; the deterministic checks run
    either way.
    """
    if box.L % 4:
        raise LatticeError(f"L must be divisible by 4, got L={box.L}")
    params = DecouplingParams(box.d, float(E), float(eps))
    interval = interval or EnergyInterval(0.0, float(E))
    if interval.upper > E:
        raise ProbeError("interval must lie below E")
    t = params.t if params.valid else 1.0 / E
    rows = map_ordered(partial(_decoupling_sample, box, dist, float(E), t, interval, k, seed), range(samples), workers)
    viol = np.array([s.chain.violation() for s in rows])
    notes = [] if params.valid else [f"t_E = {params.t:.6g} <= 0: outside E'_eps regime, no bound evaluated"]

    def stat(get):
        acc = McAccumulator.from_samples(np.array([get(s) for s in rows]))
        return float(acc.mean), float(acc.stderr)

    sm, sm_se, hm, pm, td, td_se = {}, {}, {}, {}, {}, {}
    for r in ("0", "k"):
        sm[r], sm_se[r] = stat(lambda s: s.smoothed_diag[r])
        hm[r], _ = stat(lambda s: s.heat_diag[r])
        pm[r], _ = stat(lambda s: s.projection_diag[r])
        td[r], td_se[r] = stat(lambda s: s.projection_diag[r] - s.coset_mean[r])
    nid, nid_se = stat(lambda s: s.sublattice_ids)
    return DecouplingReport(
        params, interval, samples, t, params.identity_sides() if params.valid else None,
        int(np.sum(viol > tolerance)), float(viol.max()), sm, sm_se, hm, pm, nid, nid_se, td, td_se,
        sum(not s.transl_bound_ok for s in rows), sum(not s.domination_ok for s in rows),
        sum(not s.smoothing_ok for s in rows), notes,
    )
