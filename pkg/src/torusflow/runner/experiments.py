"""One function per subcommand: RunConfig + map -> Outcome (metrics, gated checks, artifacts).

Checks are the acceptance criteria at their stated tolerances; the acceptance
suite calls these functions with the default configs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ..dispersionless import (
    delta_offset,
    field_flow,
    lil_statistics,
    max_bin_mass,
    period,
    period_alt_exponent,
    point_energies,
    pointwise_hamiltonian,
    return_time,
)
from ..energy import (
    DT_RHS_CONVENTION,
    chain_identity_check,
    commutator_decomposition,
    dt_energy_rhs,
    energy_breakdown,
    fd_energy_derivative,
)
from ..estimates import (
    BallEvent,
    chaos_moment_growth,
    convolution_sum,
    energy_shadow,
    fit_exponent,
    l2_difference,
    partition_function,
    transport_diagnostic,
)
from ..flow import FlowConfig, convergence_study, evolve, hamiltonian, jacobian_volume_check, reversibility_defect
from ..gaussian import MeasureSpec, sample, sigma_N
from ..variational import optimize_drift
from .parallel import spans


class NumericalFailure(RuntimeError):
    """A computation produced non-finite output; `snapshot` is the state to persist, if any."""

    def __init__(self, message, snapshot=None, t=None):
        super().__init__(message)
        self.snapshot = snapshot
        self.t = t


@dataclass
class Outcome:
    metrics: dict
    checks: dict
    tables: dict = field(default_factory=dict)   # name -> (columns, rows)
    fields: dict = field(default_factory=dict)   # name -> (SpectralField, s_tag)
    report: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _finite(metrics: dict):
    for k, v in metrics.items():
        if isinstance(v, float) and np.isnan(v):
            raise NumericalFailure(f"metric '{k}' is NaN")


# ---------------------------------------------------------------- criterion 1

def _identity_job(measure, seed, k_list, span):
    rows = []
    for i in range(span[0], span[0] + span[1]):
        for k in k_list:
            spec = MeasureSpec(**{**measure, "k": k})
            pair = sample(spec, seed, i).pair
            b1, b2 = energy_breakdown(pair, spec).identity_defects()
            rows.append((i, k, chain_identity_check(pair, spec), b1, b2))
    return rows


def _commutator_job(measure, seed, span):
    spec = MeasureSpec(**measure)
    rows = []
    for i in range(span[0], span[0] + span[1]):
        pair = sample(spec, seed, i).pair
        parts = commutator_decomposition(pair.u, pair.v, spec.s)
        rows.append((i, parts.reconstruction_defect()))
    return rows


def run_commutator(cfg, mapper) -> Outcome:
    p = cfg.params
    chunk = p["chunk"]
    rows = [r for part in mapper(partial(_identity_job, cfg.measure, cfg.seed, tuple(p["k_list"])),
                                 spans(p["pairs"], chunk)) for r in part]
    cm = {**cfg.measure, "N": p["commutator_N"]}
    crows = [r for part in mapper(partial(_commutator_job, cm, cfg.seed), spans(p["commutator_pairs"], chunk))
             for r in part]
    a = np.array([r[2:] for r in rows])
    c = np.array([r[1] for r in crows])
    m = {"chain_max": float(a[:, 0].max()), "breakdown_energy_max": float(a[:, 1].max()),
         "breakdown_r_max": float(a[:, 2].max()), "commutator_max": float(c.max()),
         "pairs": len(rows), "commutator_pairs": len(crows)}
    _finite(m)
    checks = {"chain_identity": m["chain_max"] < p["chain_tol"],
              "breakdown_identities": max(m["breakdown_energy_max"], m["breakdown_r_max"]) < p["breakdown_tol"],
              "commutator_reconstruction": m["commutator_max"] < p["commutator_tol"]}
    tables = {"identities": (["index", "k", "chain", "breakdown_energy", "breakdown_r"], rows),
              "commutator": (["index", "reconstruction_defect"], crows)}
    return Outcome(m, checks, tables)


# ---------------------------------------------------------------- criterion 2

def _dt_job(measure, seed, grid, h, scheme, span):
    rows = []
    for i in range(span[0], span[0] + span[1]):
        for s, k in grid:
            spec = MeasureSpec(**{**measure, "s": s, "k": k})
            pair = sample(spec, seed, i).pair
            rhs = dt_energy_rhs(pair, spec)
            fd = fd_energy_derivative(pair, spec, h=h, scheme=scheme)
            rows.append((i, s, k, fd, rhs, abs(fd - rhs) / (1 + abs(rhs))))
    return rows


def run_dt_identity(cfg, mapper) -> Outcome:
    p = cfg.params
    grid = tuple((float(s), int(k)) for s in p["s_list"] for k in p["k_list"])
    rows = [r for part in mapper(partial(_dt_job, cfg.measure, cfg.seed, grid, p["h"], p["scheme"]),
                                 spans(p["samples"], p["chunk"])) for r in part]
    res = np.array([r[5] for r in rows])
    m = {"residual_max": float(res.max()), "residual_median": float(np.median(res)), "cases": len(rows)}
    _finite(m)
    return Outcome(m, {"dt_identity": m["residual_max"] < p["tol"]},
                   {"dt_identity": (["index", "s", "k", "fd", "rhs", "residual"], rows)},
                   report={"dt_rhs_convention": DT_RHS_CONVENTION})


# ---------------------------------------------------------------- criterion 3

def run_evolve(cfg, mapper) -> Outcome:
    p = cfg.params
    spec = cfg.measure_spec()
    p0 = sample(spec, cfg.seed, 0).pair
    main = evolve(p0, FlowConfig(spec, p["dt"], p["scheme"], p["t"]), snapshot_every=p["snapshot_every"])
    ref = evolve(p0, FlowConfig(spec, p["dt"], p["drift_scheme"], p["t"]))
    conv = convergence_study(p0, spec, p["t"], tuple(p["dts"]), p["scheme"], p["ref_scheme"])
    rev = reversibility_defect(p0, FlowConfig(spec, p["dt"], p["scheme"], p["t"]))
    jspec = spec.with_(N=p["jacobian_N"])
    jac = jacobian_volume_check(sample(jspec, cfg.seed, 0).pair, FlowConfig(jspec, p["dt"], p["scheme"], p["t"]))
    m = {"drift": ref.max_energy_drift(), "drift_scheme": p["drift_scheme"],
         "drift_default_scheme": main.max_energy_drift(), "slope": conv.slope, "reversibility": rev,
         "jacobian_det": jac.determinant, "jacobian_condition": jac.condition, "H0": float(main.energies[0])}
    _finite(m)
    checks = {"hamiltonian_drift": m["drift"] < p["drift_tol"],
              "order_two": abs(conv.slope - p["slope_target"]) <= p["slope_tol"],
              "reversible": rev < p["reversibility_tol"],
              "liouville": abs(jac.determinant - 1) <= p["jacobian_tol"]}
    tables = {"trajectory": (["t", "energy", "norm"], list(zip(main.times, main.energies, main.norms))),
              "convergence": (["dt", "error"], list(zip(conv.dts, conv.errors)))}
    fields = {}
    for t, pair in main.snapshots:
        tag = f"{t:.4f}".replace(".", "p")
        fields[f"u_t{tag}"] = (pair.u, spec.s)
        fields[f"v_t{tag}"] = (pair.v, spec.s)
    return Outcome(m, checks, tables, fields)


# ---------------------------------------------------------------- criterion 4

def run_sample(cfg, mapper) -> Outcome:
    p = cfg.params
    spec = cfg.measure_spec()
    Ns = list(p["sigma_N_list"])
    rows = []
    for N in Ns:
        a, b = sigma_N(spec, N), sigma_N(spec, 2 * N)
        rows.append((N, a, b, b / a))
    lo, hi = p["ratio_band"]
    ratios = [r[3] for r in rows]
    m = {f"ratio_N{N}": r for N, r in zip(Ns, ratios)}
    fields = {}
    for i in range(p["count"]):
        pair = sample(spec, cfg.seed, i).pair
        fields[f"u_{i}"] = (pair.u, spec.s)
        fields[f"v_{i}"] = (pair.v, spec.s)
        m[f"hamiltonian_{i}"] = hamiltonian(pair, spec)
    _finite(m)
    return Outcome(m, {"sigma_growth": all(lo <= r <= hi for r in ratios)},
                   {"sigma_N": (["N", "sigma_N", "sigma_2N", "ratio"], rows)}, fields)


# ---------------------------------------------------------------- criterion 5

def run_chaos_moments(cfg, mapper) -> Outcome:
    p = cfg.params
    spec = cfg.measure_spec()
    lo, hi = p["holder_band"]
    m, checks, rows, report = {}, {}, [], {}
    for f in p["functionals"]:
        r = chaos_moment_growth(spec, f, tuple(p["p_list"]), p["samples"], cfg.seed, p["eps"], p["alpha"],
                                p["beta"], batch=p["batch"], chunk=p["chunk"], mapper=mapper)
        m[f"{f}_exponent"] = r.exponent
        m[f"{f}_exponent_log_p"] = r.exponent_log_p
        m[f"{f}_raw_exponent"] = r.raw_exponent
        z = r.second_moment_z()
        m[f"{f}_second_moment_max_z"] = float(np.max(np.abs(z)))
        if f == "product_field":
            checks[f] = bool(r.exponent <= p["product_max"])
        else:
            checks[f] = bool(lo <= r.exponent <= hi)
        for raw, cen in zip(r.raw, r.centered):
            rows.append((f, raw.p, raw.mean, raw.std_error, cen.mean, cen.std_error))
        report[f] = {"regularity": r.regularity, "shell_mc": r.shell_mc, "shell_se": r.shell_se,
                     "shell_exact": r.shell_exact}
    _finite(m)
    return Outcome(m, checks, {"moments": (["functional", "p", "raw", "raw_se", "centered", "centered_se"], rows)},
                   report=report)


# ---------------------------------------------------------------- criterion 6

def _conv_job(M, eps, case):
    (a, b), n = case
    r = convolution_sum((n, 0, 0), a, b, M, eps)
    return (a, b, n, r.value, r.tail, r.exponent, r.reference, r.ratio)


def run_convolution(cfg, mapper) -> Outcome:
    p = cfg.params
    cases = [((float(a), float(b)), int(n)) for a, b in p["regimes"] for n in p["norms"]]
    rows = mapper(partial(_conv_job, p["M"], p["eps"]), cases)
    C = max(r[7] for r in rows)
    tail = max(r[4] / r[3] for r in rows)
    m = {"fitted_constant": C, "max_tail_fraction": tail}
    for a, b in p["regimes"]:
        rs = [r for r in rows if r[0] == a and r[1] == b]
        m[f"ratio_growth_{a:g}_{b:g}"] = fit_exponent([1 + r[2] ** 2 for r in rs], [r[7] for r in rs]) * 2
    _finite(m)
    checks = {"single_constant": bool(np.isfinite(C) and all(r[3] + r[4] <= C * r[6] * (1 + 1e-12) for r in rows)),
              "tail_resolved": tail <= p["max_tail_fraction"]}
    return Outcome(m, checks, {"convolution": (["alpha", "beta", "n", "sum", "tail", "exponent", "reference",
                                                "ratio"], rows)})


# ---------------------------------------------------------------- criterion 7

def run_partition(cfg, mapper) -> Outcome:
    p = cfg.params
    spec = cfg.measure_spec()
    r = partition_function(spec, p["samples"], cfg.seed, p["proposal"], tuple(p["p_list"]))
    l2 = l2_difference(spec, 2 * spec.N, p["l2_samples"], cfg.seed, p["proposal"])
    m = {"N": spec.N, "log_Z": r.Z.log_mean, "log_Z_se": r.Z.log_std_error, "ess": r.Z.ess,
         "jensen_log_bound": r.jensen_log_bound.mean, "nu_log_Z": r.nu_Z.log_mean, "log_l2_diff": l2.log_mean,
         "log_l2_diff_se": l2.log_std_error}
    for q, e in r.lp_norms.items():
        m[f"log_norm_p{q}"] = e.log_mean
    _finite(m)
    return Outcome(m, {"jensen": r.jensen_holds(p["nsigma"])}, report={"modes": r.modes})


def summarize_partition(cfg, points) -> Outcome:
    """Across a sweep over N: Z within the band, L2 differences decreasing."""
    rows = sorted(((o.metrics["N"], o.metrics["log_Z"], o.metrics["log_Z_se"], o.metrics["log_l2_diff"],
                    o.metrics["ess"]) for _, o in points))
    lz = np.array([r[1] for r in rows])
    l2 = np.array([r[3] for r in rows])
    with np.errstate(over="ignore"):
        variation = float(np.expm1(lz.max() - lz.min()))
    m = {"Z_variation": variation, "log_Z_spread": float(lz.max() - lz.min())}
    checks = {"N_uniformity": variation <= cfg.params["max_variation"],
              "jensen": all(o.checks["jensen"] for _, o in points),
              "l2_decreasing": bool(np.all(np.diff(l2) < 0))}
    return Outcome(m, checks, {"summary": (["N", "log_Z", "log_Z_se", "log_l2_diff", "ess"], rows)})


# ---------------------------------------------------------------- criterion 8

def run_varbound(cfg, mapper) -> Outcome:
    p = cfg.params
    spec = cfg.measure_spec()
    z = partition_function(spec, p["z_samples"], cfg.seed, "laplace", (1,))
    res = optimize_drift(spec, p["M"], p["family"], p["iters"], cfg.seed, p["samples"], p["fresh"], p["n_low"],
                         p["pieces"], p["fd_step"])
    if res.diverged:
        raise NumericalFailure(f"drift optimisation diverged: {res.message}")
    lower, lower_se = -z.Z.log_mean, z.Z.log_std_error
    b, z0 = res.bound, res.zero_drift
    k = p["nsigma"]
    m = {"minus_log_Z": lower, "minus_log_Z_se": lower_se, "bound": b.mean, "bound_se": b.std_error,
         "zero_drift": z0.mean, "zero_drift_se": z0.std_error, "iterations": len(res.trace) - 1,
         "ess": z.Z.ess}
    _finite(m)
    checks = {"lower": lower <= b.mean + k * np.hypot(lower_se, b.std_error),
              "upper": b.mean <= z0.mean + k * np.hypot(b.std_error, z0.std_error),
              "trace_monotone": res.trace_monotone(p["trace_nsigma"])}
    return Outcome(m, checks, {"trace": (["iteration", "objective", "se"], res.trace)},
                   report={"params": res.params, "message": res.message})


# ---------------------------------------------------------------- criterion 9

def _transport_job(measure, seed, p, event):
    spec = MeasureSpec(**measure)
    ev = BallEvent(tuple(tuple(c) for c in event))
    return transport_diagnostic(spec, ev, p["t"], p["samples"], seed, p["dt"], p["scheme"], p["proposal"])


def run_transport(cfg, mapper) -> Outcome:
    p = cfg.params
    reps = mapper(partial(_transport_job, cfg.measure, cfg.seed, p), p["events"])
    rows, m = [], {}
    for i, r in enumerate(reps):
        a, b = r.rho_flowA, r.rho_flowA_cov
        rows.append((i, r.rho_A.mean, a.mean, a.std_error, b.mean, b.std_error, r.z_score(), r.flagged))
        m[f"z_{i}"] = r.z_score()
    m["z_max"] = max(r.z_score() for r in reps)
    _finite(m)
    checks = {"dual_agreement": all(r.agree(p["nsigma"]) for r in reps),
              "not_flagged": not any(r.flagged for r in reps)}
    return Outcome(m, checks, {"transport": (["event", "rho_A", "forward", "forward_se", "cov", "cov_se", "z",
                                              "flagged"], rows)}, report={"events": p["events"]})


# ---------------------------------------------------------------- criterion 10

def _shadow_job(measure, seed, p, N):
    spec = MeasureSpec(**{**measure, "N": N})
    return energy_shadow(spec, tuple(p["p_list"]), p["samples"], seed, p["radius"])


def run_energy_check(cfg, mapper) -> Outcome:
    p = cfg.params
    reps = mapper(partial(_shadow_job, cfg.measure, cfg.seed, p), list(p["N_list"]))
    table = np.array([[e.mean for e in r.norms] for r in reps])
    variation = float(np.max(table.max(axis=0) / table.min(axis=0) - 1))
    exps = [r.exponent for r in reps]
    m = {"max_exponent": float(max(exps)), "N_variation": variation,
         "min_ball_fraction": float(min(r.ball_fraction for r in reps))}
    _finite(m)
    rows = [(N, q, e.mean, e.std_error) for N, r in zip(p["N_list"], reps) for q, e in zip(r.p_list, r.norms)]
    checks = {"p_growth": m["max_exponent"] <= p["max_exponent"], "N_stability": variation <= p["max_variation"]}
    return Outcome(m, checks, {"shadow": (["N", "p", "norm", "se"], rows)})


# ---------------------------------------------------------------- criterion 11

def _period_job(method, case):
    H0, k = case
    T = period(H0, k, method)
    R = return_time(H0, k)
    return (H0, k, T, R, abs(T - R) / T, period_alt_exponent(H0, k))


def run_dispersionless(cfg, mapper) -> Outcome:
    p = cfg.params
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    lo, hi = p["H0_range"]
    H0s = np.exp(rng.uniform(np.log(lo), np.log(hi), p["pairs"]))
    ks = rng.choice(np.asarray(p["k_list"]), p["pairs"])
    rows = mapper(partial(_period_job, p["method"]), [(float(h), int(k)) for h, k in zip(H0s, ks)])
    period_err = max(r[4] for r in rows)
    alt_err = max(abs(r[5] - r[3]) / r[3] for r in rows)
    scal = []
    for k in p["k_list"]:
        H = np.asarray(p["scaling_H0"], dtype=float)
        T = [period(h, k, p["method"]) for h in H]
        fitted = float(np.polyfit(np.log(H), np.log(T), 1)[0])
        scal.append((k, fitted, -(k - 1) / (2 * (k + 1))))
    scaling_err = max(abs(a - b) for _, a, b in scal)
    spec = cfg.measure_spec()
    pair = sample(spec, cfg.seed, 0).pair
    _, u1, v1 = field_flow(pair, spec.k, p["flow_t"], p["flow_tol"])
    from ..spectral import physical_size, plan

    pl = plan(spec.d, spec.N, physical_size(spec.N))
    u0, v0 = pl.to_real(pair.u.coeffs), pl.to_real(pair.v.coeffs)
    H0 = pointwise_hamiltonian(u0, v0, spec.k)
    H1 = pointwise_hamiltonian(u1, v1, spec.k)
    drift = float(np.max(np.abs(H1 - H0) / np.maximum(H0, 1e-300)))
    He, v0s = point_energies(spec, cfg.seed, p["continuity_samples"])
    Ts = np.array([period(h, spec.k, "beta") for h in He])
    Ds = np.array([delta_offset(min(v, np.sqrt(2 * h)), h, spec.k, "beta") for h, v in zip(He, v0s)])
    mass_T, mass_D = max_bin_mass(Ts), max_bin_mass(Ds)
    m = {"period_max_rel_err": period_err, "alt_formula_max_rel_err": alt_err,
         "scaling_max_err": scaling_err, "energy_drift": drift,
         "period_bin_mass_finest": float(mass_T[-1]), "offset_bin_mass_finest": float(mass_D[-1])}
    _finite(m)
    checks = {"period_vs_return_time": period_err <= p["period_tol"],
              "scaling_law": scaling_err <= p["scaling_tol"],
              "energy_conservation": drift <= p["energy_tol"]}
    tables = {"periods": (["H0", "k", "period", "return_time", "rel_err", "alt_formula"], rows),
              "scaling": (["k", "fitted", "expected"], scal),
              "continuity": (["bins_index", "period_mass", "offset_mass"],
                             [(i, a, b) for i, (a, b) in enumerate(zip(mass_T, mass_D))])}
    return Outcome(m, checks, tables)


def run_lil(cfg, mapper) -> Outcome:
    p = cfg.params
    spec = cfg.measure_spec()
    a = lil_statistics(spec, p["r"], p["samples"], None, cfg.seed, oversample=p["oversample"], batch=p["batch"])
    b = lil_statistics(spec.with_(N=p["refine_N"]), p["r"], p["samples"], a.h_grid, cfg.seed,
                       oversample=p["oversample"], batch=p["batch"])
    ratios = a.ratio_samples
    m = {"fitted_exponent": a.fitted_exponent, "expected_exponent": a.expected_exponent,
         "line_index": a.line_index, "regime": a.regime, "r": a.r, "refined_exponent": b.fitted_exponent,
         "ratio_max": float(ratios.max()), "ratio_min": float(ratios.min())}
    _finite(m)
    checks = {"lil_exponent": a.error <= p["tol"],
              "refinement_stable": abs(a.fitted_exponent - b.fitted_exponent) <= p["refine_tol"],
              "ratios_bounded": bool(np.all(np.isfinite(ratios)) and ratios.min() > 0)}
    rows = [(h, lag, sa, sb, ratios[:, j].mean(), ratios[:, j].max())
            for j, (h, lag, sa, sb) in enumerate(zip(a.h_grid, a.lags, a.structure, b.structure))]
    return Outcome(m, checks, {"lil": (["h", "lag", "structure", "structure_refined", "ratio_mean", "ratio_max"],
                                       rows)})


EXPERIMENTS = {
    "sample": run_sample,
    "evolve": run_evolve,
    "energy-check": run_energy_check,
    "dt-identity": run_dt_identity,
    "commutator": run_commutator,
    "chaos-moments": run_chaos_moments,
    "convolution": run_convolution,
    "partition": run_partition,
    "transport": run_transport,
    "varbound": run_varbound,
    "dispersionless": run_dispersionless,
    "lil": run_lil,
}

SUMMARIES = {"partition": summarize_partition}


def validate(cfg):
    """Semantic checks the schema cannot express; returns (path, message) or None."""
    p = cfg.params
    if cfg.experiment == "transport":
        for i, ev in enumerate(p["events"]):
            for j, c in enumerate(ev):
                try:
                    BallEvent((tuple(c),))
                except ValueError as e:
                    return ("params", "events", i, j), str(e)
    if cfg.experiment == "chaos-moments":
        if p["chunk"] % p["batch"]:
            return ("params", "chunk"), "chunk must be a multiple of batch"
    if cfg.experiment == "lil":
        for N in {cfg.measure["N"], p["refine_N"]}:
            if N < 16:
                return ("measure", "N"), "the LIL lags need N >= 16"
    return None
