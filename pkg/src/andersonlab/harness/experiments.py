"""One runner per experiment: config in, (columns, rows, summary, flags) out."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import estimators as est
from .. import probes
from ..lattice import build_box
from ..spectral import EnergyInterval
from .config import ExperimentConfig

SCHEMAS = {
    "ids": ["E", "N_hat", "stderr", "samples", "volume"],
    "dos": ["E_lo", "E_hi", "n_hat", "stderr", "upper", "n_smooth", "pooled"],
    "wegner": ["E_lo", "E_hi", "trace_mean", "trace_stderr", "K_hat", "K_stderr", "flag"],
    "spectral-averaging": ["site", "E_lo", "E_hi", "average", "stderr", "bound", "flag"],
    "lifshitz-fit": ["E", "ell_hat", "usable", "note"],
    "minami": ["stat_name", "value", "target", "tolerance", "pass"],
    "probe-lemma": ["family", "cases", "rejected", "min_margin", "violations", "equality_cases", "max_equality_error"],
    "probe-cutoff": ["E", "order", "scaled_sup", "fd_error"],
    "probe-decay": ["offset", "radius", "bracket", "value", "stderr"],
    "probe-heat": ["check", "cases", "checks", "violations", "min_slack"],
    "probe-decoupling": ["quantity", "value", "stderr", "note"],
}


@dataclass
class ExperimentResult:
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)


def run(config: ExperimentConfig) -> ExperimentResult:
    runner = RUNNERS[config.experiment]
    result = runner(config)
    result.columns = SCHEMAS[config.experiment]
    return result


def _box(cfg: ExperimentConfig):
    return build_box(cfg.dim, cfg.L)[0]


def _meta(cfg):
    return {"seed": cfg.seed, "config_hash": cfg.hash}


def _ids(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    box, dist = _box(cfg), cfg.distribution()
    grid = np.linspace(p["emin"], p["emax"], p["npoints"])
    curve = est.estimate_ids(box, dist, grid, cfg.samples, cfg.seed, cfg.workers)
    rows = [[E, v, s, cfg.samples, box.volume] for E, v, s in zip(curve.energies, curve.values, curve.stderr)]
    flags = [] if np.all(np.diff(curve.values) >= 0) else ["averaged IDS is not non-decreasing"]
    return ExperimentResult([], rows, {"points": len(rows)}, flags)


def _dos(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    box, dist = _box(cfg), cfg.distribution()
    dos = est.estimate_dos(box, dist, p["bins"], cfg.samples, cfg.seed, p["bandwidth"], cfg.workers)
    rows = [
        [lo, hi, v, s, u, sm, int(c)]
        for lo, hi, v, s, u, sm, c in zip(dos.edges[:-1], dos.edges[1:], dos.values, dos.stderr, dos.upper,
                                          dos.smoothed, dos.pooled)
    ]
    total = math.fsum(dos.values * dos.widths)
    flags = [] if abs(total - 1) <= 1e-10 else [f"DOS normalization {total!r} differs from 1"]
    return ExperimentResult([], rows, {"normalization": total, "bandwidth": dos.bandwidth}, flags)


def _wegner(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    box, dist = _box(cfg), cfg.distribution()
    spectra = est.sample_spectra(box, dist, cfg.samples, cfg.seed, cfg.workers)
    intervals = [EnergyInterval(lo, hi) for lo, hi in p["interval"]]
    decay = [EnergyInterval(0.0, e) for e in p["energies"]]
    rows, flags = [], []
    reports = []
    for iv in intervals + decay:
        rep = est.wegner_from_spectra(spectra, dist, iv)
        reports.append(rep)
        rows.append([iv.lower, iv.upper, rep.trace_mean, rep.trace_stderr, rep.ratio, rep.ratio_stderr, rep.flagged])
        if rep.flagged:
            flags.append(f"K_hat - 3 sigma > 1 on [{iv.lower:g}, {iv.upper:g}]")
    summary = {"max_K_hat": max(r.ratio for r in reports)}
    if decay:
        trend = est.nonincreasing_within_bands(reports[len(intervals):])
        summary["decay_nonincreasing"] = trend
        if not trend:
            flags.append("K_hat(E) increases beyond overlapping 3 sigma bands as E decreases")
    return ExperimentResult([], rows, summary, flags)


def _spectral_averaging(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    box, dist = _box(cfg), cfg.distribution()
    site = p["site"] if isinstance(p["site"], int) else tuple(p["site"])
    reports = est.spectral_averaging_audit(
        box, dist, site, [EnergyInterval(lo, hi) for lo, hi in p["interval"]], cfg.samples, cfg.seed, p["nodes"],
        cfg.workers,
    )
    rows = [[r.site, r.interval.lower, r.interval.upper, r.average, r.stderr, r.bound, r.flagged] for r in reports]
    flags = [f"average exceeds ||rho|| |I| by > 3 sigma on [{r.interval.lower:g}, {r.interval.upper:g}]"
             for r in reports if r.flagged]
    return ExperimentResult([], rows, {"intervals": len(rows)}, flags)


def _lifshitz(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    box, dist = _box(cfg), cfg.distribution()
    spectra = est.sample_spectra(box, dist, cfg.samples, cfg.seed, cfg.workers)
    if p["source"] == "ids":
        curve = est.ids_from_spectra(spectra, np.linspace(p["emin"], p["emax"], p["npoints"]))
    else:
        top = 4.0 * box.d + dist.sup_support
        nb = max(1, int(round(top / p["bin_width"])))
        curve = est.dos_from_spectra(spectra, np.linspace(0.0, top, nb + 1))
    fit = est.lifshitz_exponent_fit(curve, tuple(p["window"]), p["min_count"])
    rows = [[E, ell, bool(u), note] for E, ell, u, note in zip(fit.energies, fit.exponents, fit.usable, fit.notes)]
    summary = {"max_ell_hat": fit.max_exponent, "trend_slope": fit.slope, "usable_points": int(fit.usable.sum()),
               "excluded_points": int((~fit.usable).sum())}
    flags = []
    if p["ell_max"] is not None:
        if fit.max_exponent > p["ell_max"]:
            flags.append(f"ell_hat exceeds {p['ell_max']:g} at a usable point")
        if not fit.slope > 0:
            flags.append("ell_hat trend versus log E is not increasing")
    return ExperimentResult([], rows, summary, flags)


def _minami(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    box, dist = _box(cfg), cfg.distribution()
    rep = est.minami_statistics(box, dist, p["energy"], p["half_width"], cfg.samples, cfg.seed, p["bins"],
                                p["spacings"], cfg.workers)
    oracle = est.poisson_ratio_oracle()
    vr_ok = abs(rep.variance_ratio - 1.0) <= 0.2
    sr_ok = abs(rep.spacing_ratio - oracle) <= 0.03
    rows = [
        ["energy", rep.energy, "", "", "n/a"],
        ["intensity", rep.intensity, "", "", "n/a"],
        ["half_width", rep.half_width, "", "", "n/a"],
        ["total_points", rep.total_points, "", "", "n/a"],
        ["count_mean", rep.count_mean, "", "", "n/a"],
        ["variance_ratio", rep.variance_ratio, 1.0, 0.2, vr_ok],
        ["spacing_ratio", rep.spacing_ratio, oracle, 0.03, sr_ok],
        ["ks_distance", rep.ks_distance, 0.0, "", "n/a"],
    ]
    flags = []
    if not vr_ok:
        flags.append(f"count variance/mean {rep.variance_ratio:.4f} outside [0.8, 1.2]")
    if not sr_ok:
        flags.append(f"mean spacing ratio {rep.spacing_ratio:.4f} not within 0.03 of {oracle:.4f}")
    return ExperimentResult([], rows, {"variance_ratio": rep.variance_ratio, "spacing_ratio": rep.spacing_ratio,
                                       "poisson_oracle": oracle}, flags)


def _probe_lemma(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    reports = probes.lemma_corpus(p["cases"], cfg.seed, p["max_dim"])
    rows = [[r.family, r.cases, r.rejected, r.min_margin, r.violations, r.equality_cases, r.max_equality_error]
            for r in reports]
    flags = [f"{r.family}: {r.violations} margins below -1e-9" for r in reports if r.violations]
    flags += [f"{r.family}: equality case error {r.max_equality_error:g} > 1e-12"
              for r in reports if r.max_equality_error > 1e-12]
    return ExperimentResult([], rows, {"violations": sum(r.violations for r in reports)}, flags)


def _probe_cutoff(cfg: ExperimentConfig) -> ExperimentResult:
    rows, flags = [], []
    checks = [probes.verify_cutoff(E, cfg.dim) for E in cfg.params["energies"]]
    for c in checks:
        rows += [[c.E, j, s, e] for j, s, e in zip(c.orders, c.scaled_sup, c.fd_error)]
        if not c.ok:
            flags.append(f"cutoff invariants fail at E={c.E:g}")
    if len(checks) > 1:
        ref = np.array(checks[0].scaled_sup)
        spread = max(float(np.max(np.abs(np.array(c.scaled_sup) - ref) / ref)) for c in checks[1:])
        if spread > 1e-9:
            flags.append(f"scaled derivative bounds depend on E (relative spread {spread:g})")
    return ExperimentResult([], rows, {"orders": checks[0].orders if checks else []}, flags)


def _probe_decay(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    box, dist = _box(cfg), cfg.distribution()
    fr = tuple(p["fit_range"]) if p["fit_range"] else None
    prof = probes.kernel_decay_profile(box, dist, p["energy"], cfg.samples, cfg.seed, fr, cfg.workers)
    rows = [[",".join(str(int(v)) for v in off), r, b, v, s]
            for off, r, b, v, s in zip(prof.offsets, prof.radius, prof.bracket, prof.values, prof.stderr)]
    target = box.d + 1 - 0.5
    flags = [] if prof.exponent >= target else [f"fitted decay exponent {prof.exponent:.4f} < {target:g}"]
    return ExperimentResult([], rows, {"exponent": prof.exponent, "constant": prof.constant,
                                       "fit_range": list(prof.fit_range)}, flags)


def _probe_heat(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    box, dist = _box(cfg), cfg.distribution()
    rep, _ = probes.heat_probe(box, dist, p["cases"], p["t"], p["energy"], cfg.seed, workers=cfg.workers)
    rows = [
        ["heat_monotonicity", rep.cases, rep.checks, rep.monotone_violations, rep.min_monotone_slack],
        ["split_bound", rep.cases, rep.checks, rep.split_violations, rep.min_split_slack],
    ]
    flags = []
    if rep.monotone_violations:
        flags.append(f"heat monotonicity violated in {rep.monotone_violations} checks")
    if rep.split_violations:
        flags.append(f"split bound violated in {rep.split_violations} checks")
    return ExperimentResult([], rows, {"violations": rep.monotone_violations + rep.split_violations}, flags)


def _probe_decoupling(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    box, dist = _box(cfg), cfg.distribution()
    iv = EnergyInterval(*p["interval"][0]) if p["interval"] else None
    rep = probes.evaluate_decoupling_bound(box, dist, p["energy"], p["eps"], cfg.samples, cfg.seed, iv, p["k"],
                                           workers=cfg.workers)
    par = rep.params
    rows = [["t_E", par.t, "", rep.regime], ["t_used", rep.t_used, "", ""]]
    if rep.identity is not None:
        lhs, rhs = rep.identity
        rows += [["identity_lhs", lhs, "", "exp(-4 t_E E)"], ["identity_rhs", rhs, "", "2 4^d exp(-(4E)^(-d/2+eps))"],
                 ["target_bound", par.target, "", "4^(d+1) exp(-(4E)^(-d/2+eps))"]]
    for r in ("0", "k"):
        rows += [
            [f"smoothed_diag_{r}", rep.smoothed_mean[r], rep.smoothed_stderr[r], "E{<d_r, f_E(H_perp) d_r>}"],
            [f"heat_diag_{r}", rep.heat_mean[r], "", "E{<d_r, exp(-t H_Gamma) d_r>}"],
            [f"projection_diag_{r}", rep.projection_mean[r], "", "E{<d_r, 1(H_Gamma <= 4E) d_r>}"],
            [f"transl_difference_{r}", rep.transl_difference[r], rep.transl_stderr[r], "site minus orbit mean"],
        ]
    rows += [
        ["sublattice_ids_4E", rep.sublattice_ids, rep.sublattice_ids_stderr, "N_Gamma(4E)"],
        ["transl_bound", 4**box.d * rep.sublattice_ids, 4**box.d * rep.sublattice_ids_stderr, "4^d N_Gamma(4E)"],
        ["chain_violations", rep.chain_violations, "", f"max step excess {rep.max_chain_violation:.3g}"],
        ["transl_bound_failures", rep.transl_bound_failures, "", ""],
        ["domination_failures", rep.domination_failures, "", "sorted spec(H_Gamma) <= spec(H)"],
        ["smoothing_failures", rep.smoothing_failures, "", "f_E <= e^{2tE} heat chain"],
    ]
    flags = []
    if rep.chain_violations:
        flags.append(f"Cauchy-Schwarz chain violated in {rep.chain_violations} samples")
    if rep.transl_bound_failures or rep.domination_failures or rep.smoothing_failures:
        flags.append("deterministic sublattice comparison failed")
    if not rep.transl_ok:
        flags.append("translation-averaging identity off by more than 3 sigma")
    if rep.identity is not None and not math.isclose(*rep.identity, rel_tol=1e-12):
        flags.append("t_E identity does not hold")
    return ExperimentResult([], rows, {"t_E": par.t, "regime": rep.regime, "notes": rep.notes}, flags)


RUNNERS = {
    "ids": _ids,
    "dos": _dos,
    "wegner": _wegner,
    "spectral-averaging": _spectral_averaging,
    "lifshitz-fit": _lifshitz,
    "minami": _minami,
    "probe-lemma": _probe_lemma,
    "probe-cutoff": _probe_cutoff,
    "probe-decay": _probe_decay,
    "probe-heat": _probe_heat,
    "probe-decoupling": _probe_decoupling,
}
