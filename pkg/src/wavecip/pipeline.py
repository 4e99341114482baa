"""Scenario objects and the end-to-end runs behind the command line."""
from __future__ import annotations

import logging
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, dump_config, load_config, parse_config_text
from .control import (ControlFunction, HUMConfig, HUMProblem, control_cache_key, solve_control,
                      verify_null_control)
from .domain import (BoundaryPartition, CoefficientField, FrequencySample, Subdomain, build_grid, make_bump_c1,
                     make_cutoff_beta)
from .errors import FrequencyError
from .recon import (FourierEntry, FourierSampleSet, build_frequency_grid, boundary_functional_g,
                    boundary_functional_theta, entries_to_arrays, fourier_oracle, fourier_sample, invert_fourier,
                    lattice_index, prop31_check, reconstruction_metrics, scaling_factor)
from .storage import ControlCache, trace_to_csv, write_container, write_json, write_trace
from .theta import solve_theta_ode, solve_theta_volterra
from .wave import BoundaryTrace, dtn_apply, perturbation_sup_norm

log = logging.getLogger(__name__)


def versions():
    import numba
    import scipy

    return {"wavecip": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _subdomain(words):
    vals = [float(v) for v in words[1:]]
    if words[0] == "rect":
        return Subdomain.rectangle(*vals)
    return Subdomain.disk((vals[0], vals[1]), vals[2])


@dataclass(eq=False)
class Scenario:
    config: ScenarioConfig
    grid: object
    gamma: BoundaryPartition
    omega_prime: Subdomain
    coeff: CoefficientField
    beta: object
    hum_cfg: HUMConfig
    _problems: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_config(cls, cfg: ScenarioConfig):
        g, b, co, bu, ct = (cfg[s] for s in ("grid", "boundary", "coefficient", "bump", "control"))
        grid = build_grid(g["Lx"], g["Ly"], g["nx"], g["ny"], g["T"], g["dt"], dt_factor=g["dt_factor"],
                          cfl_factor=g["cfl_factor"])
        gamma = BoundaryPartition(grid, tuple(b["gamma"]))
        om = _subdomain(co["omega_prime"])
        c0 = np.full(grid.shape, co["c0"])
        c1 = make_bump_c1(grid, tuple(bu["center"]), bu["radius"], bu["amplitude"], om)
        coeff = CoefficientField(grid, c0, c1, co["alpha"], om, co["c2"], co["c_star"])
        grid.check_cfl(coeff.c_min, g["cfl_factor"])
        beta = make_cutoff_beta(grid, om, ct["beta_margin"])
        hum = HUMConfig(ct["cg_tol"], ct["cg_max_iters"], ct["epsilon"], ct["filter"], ct["taper_fraction"])
        return cls(cfg, grid, gamma, om, coeff, beta, hum)

    @classmethod
    def load(cls, path=None):
        return cls.from_config(load_config(path))

    @property
    def alpha(self):
        return self.coeff.alpha

    @property
    def bump(self):
        bu = self.config["bump"]
        return {"center": tuple(bu["center"]), "radius": bu["radius"], "amplitude": bu["amplitude"]}

    def frequency_grid(self):
        r = self.config["recon"]
        return build_frequency_grid(r["eta_max"], r["d_eta"], self.grid)

    def problem(self, cfg: HUMConfig):
        if cfg not in self._problems:
            self._problems[cfg] = HUMProblem(self.grid, self.gamma, self.coeff.c0, cfg)
        return self._problems[cfg]

    def manifest(self, **extra):
        m = {"config_sha256": self.config.digest(), "config_source": self.config.source,
             "config": dump_config(self.config), "versions": versions(),
             "grid": {"nx": self.grid.nx, "ny": self.grid.ny, "hx": self.grid.hx, "hy": self.grid.hy,
                      "nt": self.grid.nt, "dt": self.grid.dt, "T": self.grid.T},
             "gamma": list(self.gamma.gamma_edges)}
        m.update(extra)
        return m


def get_control(sc: Scenario, eta: FrequencySample, cache: ControlCache | None, cfg: HUMConfig | None = None):
    """Cached null control for η; returns ``(control, cache_hit)``.

    Fresh controls are rounded to complex64 before use, so a cached and a
    freshly computed control feed identical numbers downstream.
    """
    cfg = cfg or sc.hum_cfg
    key = control_cache_key(sc.grid, sc.gamma, eta, sc.beta, cfg, sc.coeff.c0)
    if cache is not None:
        hit = cache.load(key)
        if hit is not None:
            arr, hdr, man = hit
            tr = BoundaryTrace(arr.astype(complex), sc.grid.dt, "control", eta.eta)
            if arr.shape == (sc.grid.nt + 1, sc.gamma.n_samples):
                return ControlFunction(tr, eta, man["residual_energy"], man["iterations"], man["epsilon"],
                                       man["certified"], [], man["cg_tol"]), True
    cf = solve_control(eta, sc.beta, sc.problem(cfg), cfg)
    q = cf.g.values.astype(np.complex64)
    cf.g.values = q.astype(complex)
    if cache is not None:
        cache.store(key, q, {"eta": list(eta.eta), "residual_energy": cf.residual_energy,
                             "iterations": cf.iterations, "epsilon": cfg.epsilon, "cg_tol": cfg.cg_tol,
                             "certified": cf.certified, "versions": versions()},
                    dt=sc.grid.dt, hx=sc.grid.hx, hy=sc.grid.hy, eta=eta.eta, tag="control")
    return cf, False


# -- forward --------------------------------------------------------------------------------


def run_forward(sc: Scenario, out, eta, alpha=None, csv=False):
    """Write Λ_α f, Λ_0 f and their difference on Γ, with a manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    eta = FrequencySample(tuple(eta))
    alpha = sc.alpha if alpha is None else alpha
    ta = dtn_apply(alpha, eta, sc.coeff, sc.gamma)
    t0 = dtn_apply(0.0, eta, sc.coeff, sc.gamma)
    diff = ta - t0
    diff.alpha = float(alpha)
    files = {}
    for name, tr in (("dtn_alpha", ta), ("dtn_0", t0), ("dtn_diff", diff)):
        p = out / f"{name}.wcip"
        write_trace(p, tr, sc.gamma)
        files[name] = p.name
        if csv:
            trace_to_csv(out / f"{name}.csv", tr, sc.gamma)
    sup = float(np.abs(diff.values).max())
    write_json(out / "forward.json", sc.manifest(command="forward", eta=list(eta.eta), alpha=alpha, files=files,
                                                 diff_sup=sup))
    return {"dtn_alpha": ta, "dtn_0": t0, "dtn_diff": diff, "diff_sup": sup}


# -- reconstruction -------------------------------------------------------------------------

_WORKER = {}


def _worker_sample(text, source, cache_dir, eta, convention):
    sc = _WORKER.get((text, source))
    if sc is None:
        sc = _WORKER[(text, source)] = Scenario.from_config(parse_config_text(text, source))
    return _sample(sc, ControlCache(cache_dir), FrequencySample(tuple(eta)), convention)


def _sample(sc, cache, eta, convention):
    cf, hit = get_control(sc, eta, cache)
    return fourier_sample(eta, sc.alpha, sc.coeff, sc.gamma, cf, convention), hit


def _rescale(e: FourierEntry, alpha, convention):
    if e.convention == convention:
        return e
    k = math.hypot(e.eta_x, e.eta_y)
    s = scaling_factor(alpha, k, convention)
    e.F_est, e.F_est_g, e.convention = e.functional_theta / s, e.functional_g / s, convention
    return e


@dataclass
class ReconstructionRun:
    samples: FourierSampleSet
    computed: list
    excluded: list
    metrics: dict
    status: int
    result: object = None
    reference: object = None


def run_reconstruct(sc: Scenario, out, cache_dir=None, jobs=1, resume=False, convention=None, progress=None):
    """Sample F on the lattice, invert, and write samples, fields, metrics and plot data."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    r = sc.config["recon"]
    convention = convention or r["convention"]
    fg = sc.frequency_grid()
    d_eta = fg.d_eta
    cache_dir = Path(cache_dir) if cache_dir else out / "cache"
    cache = ControlCache(cache_dir)
    csv_path = out / "samples.csv"
    done = {}
    if resume and csv_path.exists():
        for e in FourierSampleSet.from_csv(csv_path).entries:
            done[lattice_index(e.eta, d_eta)] = _rescale(e, sc.alpha, convention)
    wanted = {lattice_index(s.eta, d_eta): s for s in fg.samples}
    done = {k: v for k, v in done.items() if k in wanted}
    todo = [s for k, s in wanted.items() if k not in done]
    computed = []

    def flush():
        FourierSampleSet(list(done.values())).to_csv(csv_path)

    def record(eta, entry):
        done[lattice_index(eta, d_eta)] = entry
        computed.append(list(eta))
        flush()
        if progress:
            progress(len(done), len(wanted), entry)

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = {ex.submit(_worker_sample, sc.config.text, sc.config.source, str(cache_dir), s.eta, convention): s
                    for s in todo}
            for f in as_completed(futs):
                entry, _ = f.result()
                record(futs[f].eta, entry)
    else:
        for s in todo:
            entry, _ = _sample(sc, cache, s, convention)
            record(s.eta, entry)
    flush()
    samples = FourierSampleSet(sorted(done.values(), key=lambda e: (e.eta_x, e.eta_y)))

    # a non-certified η drops its mirror too, keeping the lattice symmetric
    bad = {lattice_index(e.eta, d_eta) for e in samples.entries if not e.certified}
    bad |= {(-i, -j) for i, j in bad}
    excluded = sorted([list(e.eta) for e in samples.entries if lattice_index(e.eta, d_eta) in bad])
    frac = len(excluded) / max(len(samples.entries), 1)
    base = sc.manifest(command="reconstruct", convention=convention, n_lattice=len(wanted),
                       n_computed=len(computed), computed=computed, excluded=excluded, excluded_fraction=frac,
                       control_cache={"hits": cache.hits, "misses": cache.misses, "dir": str(cache_dir)})
    if frac > r["max_excluded"]:
        base["status"] = "too many non-certified frequencies"
        write_json(out / "metrics.json", base)
        return ReconstructionRun(samples, computed, excluded, base, 3)
    keep = [e for e in samples.entries if lattice_index(e.eta, d_eta) not in bad]
    if not keep:
        raise FrequencyError("no admissible frequencies")
    etas, F = entries_to_arrays(keep, certified_only=False)
    res = invert_fourier(etas, F, sc.grid, d_eta, sc.coeff.c0, sc.alpha, convention, r["imag_tol"])
    m, ref = reconstruction_metrics(res, sc.grid, sc.omega_prime, sc.coeff.c1, d_eta, fg.eta_max, sc.bump)
    herm = FourierSampleSet(keep).hermitian_residue(d_eta)
    m["hermitian_residue"] = herm
    m["max_form_gap"] = max(e.form_gap for e in keep)
    m["flagged_imag"] = bool(res.flagged)
    m["checks"] = {"rel_l2_bandlimited": m["rel_l2_bandlimited"] <= r["l2_tol"],
                   "hermitian_residue": herm <= r["hermitian_tol"],
                   "imag_residue": res.imag_residue <= r["imag_tol"]}
    base.update(metrics=m, status="ok")
    fk = dict(dt=sc.grid.dt, hx=sc.grid.hx, hy=sc.grid.hy, alpha=sc.alpha, dtype=np.complex128)
    write_container(out / "c1_est.wcip", res.c1_est, tag="c1_est", **fk)
    write_container(out / "calpha_est.wcip", res.calpha_est, tag="calpha_est", **fk)
    write_container(out / "c1_reference.wcip", ref, tag="c1_reference", **fk)
    write_plot_data(out, sc, res.c1_est, ref, keep)
    write_json(out / "metrics.json", base)
    return ReconstructionRun(samples, computed, excluded, base, 0, res, ref)


def write_plot_data(out, sc: Scenario, c1_est, ref, entries):
    import csv

    x, y = sc.grid.x, sc.grid.y
    cx, cy = sc.bump["center"]
    i = int(np.argmin(np.abs(x - cx)))
    j = int(np.argmin(np.abs(y - cy)))
    c1 = sc.coeff.c1
    with open(Path(out) / "slices.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "s", "c1_true", "c1_reference", "c1_est"])
        for jj, s in enumerate(y):
            w.writerow(["y", repr(float(s)), repr(float(c1[i, jj])), repr(float(ref[i, jj])), repr(float(c1_est[i, jj]))])
        for ii, s in enumerate(x):
            w.writerow(["x", repr(float(s)), repr(float(c1[ii, j])), repr(float(ref[ii, j])), repr(float(c1_est[ii, j]))])
    with open(Path(out) / "fourier.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eta_x", "eta_y", "abs_F", "abs_oracle", "rel_err"])
        for e in entries:
            err = abs(e.F_est - e.oracle) / abs(e.oracle) if e.oracle else float("nan")
            w.writerow([repr(e.eta_x), repr(e.eta_y), repr(abs(e.F_est)), repr(abs(e.oracle)), repr(err)])


# -- validation -----------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    measured: float
    tolerance: str
    passed: bool
    detail: str = ""


def _rel(a, b):
    return abs(a - b) / abs(b) if b else abs(a - b)


def _slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def run_validate(sc: Scenario, out, cache_dir=None, progress=None):
    """Consistency checks at the scenario's resolution; returns the list of checks."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    v = sc.config["validate"]
    cache = ControlCache(Path(cache_dir) if cache_dir else out / "cache")
    cfg = HUMConfig(v["cg_tol"], v["cg_max_iters"], sc.hum_cfg.epsilon, sc.hum_cfg.filter,
                    sc.hum_cfg.taper_fraction)
    checks = []

    def add(c: Check):
        checks.append(c)
        if progress:
            progress(c)

    controls = {}
    for e in v["etas"]:
        eta = FrequencySample(tuple(e))
        cf, _ = get_control(sc, eta, cache, cfg)
        controls[eta.eta] = cf
        tag = f"eta=({eta.eta[0]:.4g},{eta.eta[1]:.4g})"
        add(Check(f"control certified {tag}", cf.residual_energy, f"<= {cfg.cg_tol:g}", cf.certified,
                  f"{cf.iterations} iterations"))
        ver = verify_null_control(cf, eta, sc.beta, sc.gamma, sc.coeff.c0)
        rv = _rel(ver, cf.residual_energy) if cf.residual_energy > 0 else 0.0
        add(Check(f"re-simulated energy {tag}", rv, f"<= {v['verify_tol']:g}", rv <= v["verify_tol"],
                  f"E(T)/E(0) = {ver:.3e}"))
        lhs, rhs = prop31_check(eta, sc.coeff, cf, sc.gamma)
        gap = _rel(lhs, rhs)
        add(Check(f"auxiliary identity {tag}", gap, f"<= {v['prop31_tol']:g}", gap <= v["prop31_tol"],
                  f"lhs={lhs:.5g} rhs={rhs:.5g}"))
        th = solve_theta_ode(cf)
        tv = solve_theta_volterra(cf)
        d = float(np.linalg.norm(th.theta.values - tv.theta.values) / np.linalg.norm(th.theta.values)) \
            if np.linalg.norm(th.theta.values) else 0.0
        add(Check(f"theta ODE vs Volterra {tag}", d, f"<= {v['theta_tol']:g}", d <= v["theta_tol"], tv.method))
        X = dtn_apply(sc.alpha, eta, sc.coeff, sc.gamma) - dtn_apply(0.0, eta, sc.coeff, sc.gamma)
        ft = boundary_functional_theta(th, X, sc.gamma)
        fgv = boundary_functional_g(cf, X, sc.gamma)
        fd = _rel(ft, fgv)
        add(Check(f"functional forms agree {tag}", fd, f"<= {v['forms_tol']:g}", fd <= v["forms_tol"]))

    alphas = list(v["alphas"])
    eta = FrequencySample(tuple(v["etas"][0]))
    norms = [perturbation_sup_norm(a, eta, sc.coeff) for a in alphas]
    sl = _slope(alphas, norms)
    add(Check("perturbation size slope in alpha", sl, f"1 +- {v['lemma_slope_tol']:g}",
              abs(sl - 1) <= v["lemma_slope_tol"], " ".join(f"{n:.4e}" for n in norms)))

    cf = controls[eta.eta]
    oracle = fourier_oracle(sc.coeff.c1, sc.grid, eta)
    errs, est = [], {}
    for a in alphas:
        est[a] = fourier_sample(eta, a, sc.coeff, sc.gamma, cf).F_est
        errs.append(abs(est[a] - oracle))
    a_mid = sorted(alphas)[len(alphas) // 2]
    rel = errs[alphas.index(a_mid)] / abs(oracle)
    add(Check(f"leading-order law at alpha={a_mid:g}", rel, f"<= {v['theorem_tol']:g}", rel <= v["theorem_tol"],
              f"F_est={est[a_mid]:.5g} oracle={oracle:.5g}"))
    sl = _slope(alphas, errs)
    add(Check("leading-order remainder slope in alpha", sl, f">= {v['theorem_min_slope']:g}",
              sl >= v["theorem_min_slope"]))

    write_validation_report(out, sc, checks)
    return checks


def write_validation_report(out, sc, checks):
    import csv

    with open(Path(out) / "validate.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "measured", "tolerance", "passed", "detail"])
        for c in checks:
            w.writerow([c.name, repr(float(c.measured)), c.tolerance, int(c.passed), c.detail])
    write_json(Path(out) / "validate.json", sc.manifest(
        command="validate", passed=all(c.passed for c in checks),
        checks=[{"name": c.name, "measured": float(c.measured), "tolerance": c.tolerance, "passed": c.passed,
                 "detail": c.detail} for c in checks]))


def format_checks(checks):
    w = max(len(c.name) for c in checks) if checks else 10
    lines = [f"{'check':<{w}}  {'measured':>12}  {'tolerance':<12} result"]
    for c in checks:
        lines.append(f"{c.name:<{w}}  {c.measured:>12.4e}  {c.tolerance:<12} {'PASS' if c.passed else 'FAIL'}"
                     + (f"  ({c.detail})" if c.detail else ""))
    return "\n".join(lines)
