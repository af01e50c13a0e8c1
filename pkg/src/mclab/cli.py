"""Command line experiments over the library: weight-bound scans,
linear mode studies, nonlinear runs, parameter sweeps and norm reports.

Subcommands (each exits 0 on --help):

    multiplier-check   exhaustive multiplier bound scan per viscosity
    linear-mode        one linear study: curve plus peak summary
    linear-sweep       peak scaling fits over nu and an alpha comparison
    simulate           one nonlinear run with streamed norm panels
    threshold-sweep    (nu, epsilon) grid of nonlinear runs
    norms-report       bound panels recomputed from a stored trajectory

Common flags: --config PATH (required), --out DIR, --jobs N, --seed S,
--allow-out-of-theorem.  Parameter sets outside the uniform
stabilization regime (it needs 0 < nu <= 1 and |alpha| > 8 p) make the
solver-running subcommands refuse with a warning unless the override
flag is given; comparative linear and multiplier studies run anywhere
by design.

Output layout, one directory per plan and one per cell:

    OUT/<plan-hash>/plan.ini             the resolved plan
    OUT/<plan-hash>/summary.csv          one row per cell
    OUT/<plan-hash>/records.json         full run records
    OUT/<plan-hash>/<family CSVs>        plot data, see emit_plot_data
    OUT/<plan-hash>/<cell>/config.ini    self-contained cell config
    OUT/<plan-hash>/<cell>/log.txt       captured cell output
    OUT/<plan-hash>/<cell>/record.json   status, wall time, digest
    OUT/<plan-hash>/<cell>/...           diagnostics.csv, states.bin,
                                         curve.csv, panels, per kind

Reruns of an unchanged plan are byte-identical outside log.txt and the
record files (fixed seeds, sorted iteration, repr-formatted floats);
RunRecord.digest is the content hash of a cell directory under those
exclusions.  Cells run in separate processes when --jobs > 1 and share
nothing; a failing cell is recorded and reported without stopping its
siblings, and the exit code is nonzero iff any cell failed.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .config import (
    ExperimentPlan,
    LinearStudy,
    build_sim_config,
    cell_params,
    parse_config,
    parse_config_text,
    serialize_plan,
)
from .diagnostics import BootstrapAccumulator, TheoremAccumulator
from .linear_modes import (
    fit_g2_scaling,
    g2_peak_amplification,
    homogeneous_g2_exact,
    homogeneous_q2_exact,
    inviscid_damping_curve,
    scan_sym_v2_envelopes,
    sym_v2_propagator_envelope,
    zero_mode_liftup,
)
from .multipliers import (
    M1_LOWER_BOUND,
    M2_LOWER_BOUND,
    enhanced_dissipation_margin_array,
    m1_array,
    m2_array,
)
from .solver import run
from .spectral import ModeIndex, RationalShearAngle, theorem_regime_violations
from .storage import (
    StateWriter,
    read_states,
    tree_digest,
    write_diagnostics_csv,
    write_table_csv,
)

SUBCOMMAND_KINDS = {
    "multiplier-check": "multiplier_check",
    "linear-mode": "linear_mode",
    "linear-sweep": "linear_sweep",
    "simulate": "simulate",
    "threshold-sweep": "threshold_sweep",
    "norms-report": "norms_report",
}

#: kinds that advance the nonlinear solver and hence sit under the
#: regime gate; the rest are comparative or read-only.
GATED_KINDS = ("simulate", "threshold_sweep")

_BOUND_TOL = 1e-12


class OutOfRegimeError(RuntimeError):
    """Raised when a gated plan is outside the stabilization regime
    and the override flag was not given."""


@dataclass
class RunRecord:
    """Per-cell outcome; persisted as record.json in the cell directory."""

    cell_id: str
    plan_hash: str
    status: str
    wall_time: float
    digest: str
    detail: str = ""


def plan_hash(plan: ExperimentPlan) -> str:
    """Identity of the experiment: where it writes and how many workers
    run it do not change the bytes it produces, so out and jobs are
    normalized away before hashing."""
    return hashlib.sha256(
        serialize_plan(replace(plan, out="out", jobs=1)).encode()
    ).hexdigest()[:12]


# ---------------------------------------------------------------------------
# cell enumeration

def _fmt(x: float) -> str:
    return f"{x:g}"


def plan_cells(plan: ExperimentPlan) -> list[tuple[str, dict]]:
    """Stable (cell_id, overrides) enumeration; an empty sweep axis for
    a sweep kind yields zero cells."""
    k = plan.kind
    if k == "multiplier_check":
        return [(f"nu-{_fmt(nu)}", {"nu": nu}) for nu in plan.multiplier.nu_values]
    if k in ("linear_mode", "simulate", "norms_report"):
        return [({"linear_mode": "mode", "simulate": "run", "norms_report": "report"}[k], {})]
    if k == "linear_sweep":
        nus = plan.nu_values or (plan.params.nu,)
        sigmas: tuple = plan.sigma_values or (None,)
        cells = []
        for sig in sigmas:
            tag = "" if sig is None else f"_sig-{sig.q}-{sig.p}"
            for nu in nus:
                ov: dict = {"nu": nu}
                if sig is not None:
                    ov["sigma"] = f"{sig.q}/{sig.p}"
                cells.append((f"nu-{_fmt(nu)}{tag}", ov))
        return cells
    if k == "threshold_sweep":
        return [
            (f"nu-{_fmt(nu)}_eps-{_fmt(eps)}", {"nu": nu, "epsilon": eps})
            for nu in plan.nu_values
            for eps in plan.epsilon_values
        ]
    raise ValueError(f"unhandled kind {k!r}")


def _cell_plan(plan: ExperimentPlan, overrides: dict) -> ExperimentPlan:
    """The plan a single cell actually runs: sweep values substituted,
    sweep axes cleared.  Its serialization is the cell's config.ini."""
    sigma = overrides.get("sigma")
    if isinstance(sigma, str):
        q, _, p = sigma.partition("/")
        sigma = RationalShearAngle(int(q), int(p or "1"))
    params = cell_params(plan, overrides.get("nu"), overrides.get("alpha"), sigma)
    rn = plan.run
    if "epsilon" in overrides:
        rn = replace(rn, epsilon=overrides["epsilon"])
    mult = plan.multiplier
    if plan.kind == "multiplier_check" and "nu" in overrides:
        mult = replace(mult, nu_values=(overrides["nu"],))
    # out and jobs are normalized so the embedded config (and with it the
    # cell digest) does not depend on where or how wide the parent ran
    return replace(
        plan,
        params=params,
        run=rn,
        multiplier=mult,
        out="out",
        jobs=1,
        nu_values=(),
        alpha_values=(),
        epsilon_values=(),
        sigma_values=(),
    )


# ---------------------------------------------------------------------------
# linear study helpers

def _homogeneous_family(plan: ExperimentPlan) -> list[ModeIndex]:
    sig = plan.params.sigma
    study = plan.linear
    modes = []
    for k in range(1, study.k_max + 1):
        if (sig.q * k) % sig.p:
            continue
        l = -(sig.q * k) // sig.p
        if abs(l) > study.l_max:
            continue
        for j in range(-study.eta_max, study.eta_max + 1):
            modes.append(ModeIndex(k=k, j=j, l=l))
    if not modes:
        raise ValueError(
            "no homogeneous modes within the family bounds; "
            "raise linear.k_max / linear.l_max"
        )
    return modes


def _nonhomogeneous_family(plan: ExperimentPlan) -> list[ModeIndex]:
    sig = plan.params.sigma
    study = plan.linear
    modes = []
    for k in range(-study.k_max, study.k_max + 1):
        if k == 0:
            continue
        for l in range(-study.l_max, study.l_max + 1):
            if sig.q * k + sig.p * l == 0:
                continue
            for j in range(-study.eta_max, study.eta_max + 1):
                modes.append(ModeIndex(k=k, j=j, l=l))
    if not modes:
        raise ValueError("no nonhomogeneous modes within the family bounds")
    return modes


def _study_horizon(study: LinearStudy, nu: float) -> float:
    if study.t_final is not None:
        return study.t_final
    # long enough to reach the viscous peak time ~ (2/nu)^{1/3} and the
    # oscillation-envelope decay scale ~ nu^{-1/3}
    return max(40.0, 2.0 * (2.0 / nu) ** (1.0 / 3.0)) if nu > 0.0 else 40.0


def _family_peak(modes, params, kind: str) -> tuple[float, float]:
    """Worst-mode amplification peak (value, time) over a family."""
    best = (0.0, 0.0)
    for mode in modes:
        t_peak, peak = g2_peak_amplification(mode, params) if kind == "g2" else _q2_peak(mode, params)
        if peak > best[0]:
            best = (peak, t_peak)
    return best


def _q2_peak(mode: ModeIndex, params) -> tuple[float, float]:
    # Q^2 is nonincreasing in the shear-dominated range; sample densely
    ts = np.linspace(0.0, _study_horizon(LinearStudy(), max(params.nu, 1e-6)), 2001)
    vals = homogeneous_q2_exact(mode, params, ts)
    i = int(np.argmax(vals))
    return float(ts[i]), float(vals[i])


# ---------------------------------------------------------------------------
# cell bodies; each receives the resolved cell plan, writes into
# cell_dir and returns a flat summary dict of plain floats/strings

def _cell_multiplier_check(plan: ExperimentPlan, cell_dir: Path) -> dict:
    scan = plan.multiplier
    nu = scan.nu_values[0]
    s = np.arange(-scan.eta_abs_max, scan.eta_abs_max + 0.5 * scan.eta_step, scan.eta_step)
    rows = []
    agg = {
        "m1_min": np.inf,
        "m1_max": -np.inf,
        "m2_min": np.inf,
        "m2_max": -np.inf,
        "margin_min": np.inf,
    }
    for k in [kk for kk in range(-scan.k_max, scan.k_max + 1) if kk]:
        # evaluate where the current shifted frequency sweeps the scan
        # axis exactly; the start labels then sit one full band away,
        # which drives m1 and m2 through (almost) their entire range
        t_scan = 2.0 * scan.eta_abs_max / abs(k)
        eta = s + k * t_scan
        k_arr = np.float64(k)
        m1_lo, m1_hi, m2_lo, m2_hi = np.inf, -np.inf, np.inf, -np.inf
        for l in range(-scan.l_max, scan.l_max + 1):
            v1 = m1_array(t_scan, k_arr, eta, np.float64(l))
            v2 = m2_array(t_scan, k_arr, eta, np.float64(l), nu)
            m1_lo, m1_hi = min(m1_lo, v1.min()), max(m1_hi, v1.max())
            m2_lo, m2_hi = min(m2_lo, v2.min()), max(m2_hi, v2.max())
        margin = float(enhanced_dissipation_margin_array(k_arr, s, nu).min())
        rows.append((nu, k, float(m1_lo), float(m1_hi), float(m2_lo), float(m2_hi), margin))
        agg["m1_min"] = min(agg["m1_min"], m1_lo)
        agg["m1_max"] = max(agg["m1_max"], m1_hi)
        agg["m2_min"] = min(agg["m2_min"], m2_lo)
        agg["m2_max"] = max(agg["m2_max"], m2_hi)
        agg["margin_min"] = min(agg["margin_min"], margin)
    write_table_csv(
        cell_dir / "bounds.csv",
        ("nu", "k", "m1_min", "m1_max", "m2_min", "m2_max", "margin_min"),
        rows,
    )
    ok = (
        agg["m1_min"] >= M1_LOWER_BOUND - _BOUND_TOL
        and agg["m1_max"] <= 1.0 + _BOUND_TOL
        and agg["m2_min"] >= M2_LOWER_BOUND - _BOUND_TOL
        and agg["m2_max"] <= 1.0 + _BOUND_TOL
        and agg["margin_min"] >= -_BOUND_TOL
    )
    summary = {"nu": nu, "samples": int(s.size), **{k2: float(v) for k2, v in agg.items()}}
    print(f"nu={nu:g}: m1 in [{agg['m1_min']:.6f}, {agg['m1_max']:.6f}], "
          f"m2 in [{agg['m2_min']:.6f}, {agg['m2_max']:.6f}], "
          f"margin_min={agg['margin_min']:.3e}")
    if not ok:
        raise RuntimeError(f"multiplier bound violated: {summary}")
    return summary


def _cell_linear_mode(plan: ExperimentPlan, cell_dir: Path) -> dict:
    study = plan.linear
    params = plan.params
    mode = ModeIndex(k=study.mode[0], j=study.mode[1], l=study.mode[2])
    T = _study_horizon(study, params.nu)
    times = np.linspace(0.0, T, study.n_eval)
    if study.study in ("g2_scaling", "q2_scaling"):
        exact = homogeneous_g2_exact if study.study == "g2_scaling" else homogeneous_q2_exact
        curve = np.asarray(exact(mode, params, times), dtype=float)
        if study.study == "g2_scaling":
            t_peak, peak = g2_peak_amplification(mode, params)
        else:
            i = int(np.argmax(curve))
            t_peak, peak = float(times[i]), float(curve[i])
    elif study.study == "sym_v2":
        sol = sym_v2_propagator_envelope(mode, params, T, n_eval=study.n_eval)
        times, curve = sol.times, sol.amplitudes
        t_peak, peak = float(times[int(np.argmax(curve))]), float(sol.peak)
    elif study.study == "liftup":
        sol = zero_mode_liftup(mode, params, list(study.amp_u) + list(study.amp_b), T, n_eval=study.n_eval)
        times, curve = sol.times, sol.amplitudes
        t_peak, peak = float(times[int(np.argmax(curve))]), float(sol.peak)
    else:  # damping
        times = times[times > 0.0]
        curve = inviscid_damping_curve(mode, params, times)
        t_peak, peak = float(times[int(np.argmax(curve))]), float(np.max(curve))
    write_table_csv(cell_dir / "curve.csv", ("t", "value"), zip(times.tolist(), curve.tolist()))
    summary = {
        "study": study.study,
        "k": mode.k,
        "j": mode.j,
        "l": mode.l,
        "nu": params.nu,
        "alpha": params.alpha,
        "peak": float(peak),
        "t_peak": float(t_peak),
    }
    write_table_csv(cell_dir / "summary.csv", tuple(summary), [tuple(summary.values())])
    print(f"{study.study} ({mode.k},{mode.j},{mode.l}): peak {peak:.6g} at t={t_peak:.4g}")
    return summary


def _cell_linear_sweep(plan: ExperimentPlan, cell_dir: Path) -> dict:
    params = plan.params
    nu = params.nu
    hom = _homogeneous_family(plan)
    g2_peak, g2_t = _family_peak(hom, params, "g2")
    q2_peak, q2_t = _family_peak(hom, params, "q2")
    nonhom = _nonhomogeneous_family(plan)
    T = _study_horizon(plan.linear, nu)
    n_eval = min(plan.linear.n_eval, 1001)
    env_alpha = float(np.max(scan_sym_v2_envelopes(nonhom, params, T, n_eval=n_eval)))
    params0 = cell_params(plan, alpha=0.0)
    env_zero = float(np.max(scan_sym_v2_envelopes(nonhom, params0, T, n_eval=n_eval)))
    summary = {
        "nu": nu,
        "alpha": params.alpha,
        "sigma": f"{params.sigma.q}/{params.sigma.p}",
        "g2_peak": g2_peak,
        "g2_t_peak": g2_t,
        "q2_peak": q2_peak,
        "q2_t_peak": q2_t,
        "envelope_peak": env_alpha,
        "envelope_peak_alpha0": env_zero,
        "suppression_ratio": env_zero / env_alpha if env_alpha > 0.0 else float("nan"),
        "n_modes": len(nonhom),
    }
    write_table_csv(cell_dir / "summary.csv", tuple(summary), [tuple(summary.values())])
    print(f"nu={nu:g}: G2 peak {g2_peak:.4g} (t={g2_t:.3g}), Q2 peak {q2_peak:.4g}, "
          f"envelope {env_alpha:.4g} vs alpha=0 {env_zero:.4g}")
    return summary


class _Stride:
    """Forwards every stride-th observed state plus the final one."""

    def __init__(self, fn, stride: int, last_row: int):
        self.fn = fn
        self.stride = max(1, stride)
        self.last_row = last_row
        self.row = -1

    def __call__(self, state) -> None:
        self.row += 1
        if self.row % self.stride == 0 or self.row == self.last_row:
            self.fn(state)


def _run_with_panels(plan: ExperimentPlan, cell_dir: Path, write_states_file: bool) -> dict:
    cfg = build_sim_config(plan)
    n_rows = cfg.n_steps // cfg.steps_per_diag + 1
    boot = BootstrapAccumulator(cfg.params, n=cfg.sobolev_n)
    thm = TheoremAccumulator(cfg.params, n=cfg.sobolev_n)
    spr = cfg.steps_per_remap
    norm_stride = max(1, (spr or cfg.n_steps // 64 or 1) // cfg.steps_per_diag)
    observers = [
        _Stride(boot.push, norm_stride, n_rows - 1),
        _Stride(thm.push, norm_stride, n_rows - 1),
    ]
    writer = None
    if write_states_file:
        writer = StateWriter(cell_dir / "states.bin", cfg.grid, cfg.params)
        observers.append(_Stride(writer.append, max(1, (n_rows - 1) // 8), n_rows - 1))
    else:
        holder = {}
        observers.append(lambda st: holder.__setitem__("last", st))
    try:
        traj = run(cfg, observers=observers)
    finally:
        if writer is not None:
            writer.close()
    if not write_states_file:
        with StateWriter(cell_dir / "states.bin", cfg.grid, cfg.params) as w:
            w.append(holder["last"])

    write_diagnostics_csv(cell_dir / "diagnostics.csv", traj)
    panel = boot.finalize()
    panel.to_csv(cell_dir / "bootstrap_panel.csv")
    rows = thm.finalize()
    rows.to_csv(cell_dir / "theorem_rows.csv")

    e0 = float(traj.energy_u[0] + traj.energy_b[0])
    peak = lambda a, a0: float(np.max(a) / a0) if a0 > 0.0 else float("nan")
    summary = {
        "nu": cfg.params.nu,
        "epsilon": cfg.epsilon,
        "alpha": cfg.params.alpha,
        "t_final": cfg.t_final,
        "peak_u_amp": peak(traj.energy_u, float(traj.energy_u[0])),
        "peak_b_amp": peak(traj.energy_b, float(traj.energy_b[0])),
        "peak_total_amp": peak(traj.energy_u + traj.energy_b, e0),
        "final_total_energy": float(traj.energy_u[-1] + traj.energy_b[-1]),
        "max_constant": panel.max_constant,
        "epsilon_measured": panel.epsilon,
        "c0_fit": panel.c0,
    }
    print(f"nu={cfg.params.nu:g} eps={cfg.epsilon:g}: peak total amplification "
          f"{summary['peak_total_amp']:.4g}, panel max constant {summary['max_constant']:.4g}")
    return summary


def _cell_simulate(plan: ExperimentPlan, cell_dir: Path) -> dict:
    return _run_with_panels(plan, cell_dir, write_states_file=True)


def _cell_threshold(plan: ExperimentPlan, cell_dir: Path) -> dict:
    return _run_with_panels(plan, cell_dir, write_states_file=False)


def _cell_norms_report(plan: ExperimentPlan, cell_dir: Path) -> dict:
    states = read_states(plan.report.states)
    if len(states) < 2:
        raise ValueError("norms report needs a trajectory of at least two stored states")
    params = states[0].params
    rep = plan.report
    boot = BootstrapAccumulator(params, n=rep.n, epsilon=rep.epsilon, c0=rep.c0)
    thm = TheoremAccumulator(params, n=rep.n, epsilon=rep.epsilon)
    for st in states:
        boot.push(st)
        thm.push(st)
    panel = boot.finalize()
    panel.to_csv(cell_dir / "bootstrap_panel.csv")
    thm.finalize().to_csv(cell_dir / "theorem_rows.csv")
    summary = {
        "states": len(states),
        "nu": params.nu,
        "epsilon_used": panel.epsilon,
        "c0_fit": panel.c0,
        "max_constant": panel.max_constant,
    }
    print(f"{len(states)} states: panel max constant {summary['max_constant']:.4g}")
    return summary


_CELL_BODIES = {
    "multiplier_check": _cell_multiplier_check,
    "linear_mode": _cell_linear_mode,
    "linear_sweep": _cell_linear_sweep,
    "simulate": _cell_simulate,
    "threshold_sweep": _cell_threshold,
    "norms_report": _cell_norms_report,
}


def _run_cell(payload: tuple[str, str, str, str]) -> tuple[str, str, float, str, dict]:
    """Child-process entry: (kind, cell_id, cell_dir, config_text) ->
    (cell_id, status, wall_time, detail, summary).  Never raises."""
    kind, cell_id, cell_dir, text = payload
    cell_dir = Path(cell_dir)
    cell_dir.mkdir(parents=True, exist_ok=True)
    (cell_dir / "config.ini").write_text(text)
    start = time.perf_counter()
    status, detail, summary = "ok", "", {}
    with open(cell_dir / "log.txt", "w") as log, contextlib.redirect_stdout(
        log
    ), contextlib.redirect_stderr(log):
        try:
            plan = parse_config_text(text, kind=kind)
            summary = _CELL_BODIES[kind](plan, cell_dir)
        except Exception as exc:
            status = "failed"
            detail = f"{type(exc).__name__}: {exc}"
            traceback.print_exc()
    return cell_id, status, time.perf_counter() - start, detail, summary


# ---------------------------------------------------------------------------
# orchestration

def assert_in_regime(plan: ExperimentPlan, allow: bool, echo=None) -> None:
    """Refuse gated kinds outside the stabilization regime unless
    overridden; always surfaces the violations as warnings."""
    if plan.kind not in GATED_KINDS:
        return
    echo = echo or (lambda msg: print(msg, file=sys.stderr))
    seen = []
    for _, overrides in plan_cells(plan):
        for reason in theorem_regime_violations(_cell_plan(plan, overrides).params):
            if reason not in seen:
                seen.append(reason)
    for reason in seen:
        echo(f"warning: outside the uniform stabilization regime: {reason}")
    if seen and not allow:
        raise OutOfRegimeError(
            "; ".join(seen) + " (pass --allow-out-of-theorem to run anyway)"
        )


def execute(plan: ExperimentPlan, allow_out_of_theorem: bool = False) -> list[RunRecord]:
    """Run every cell of the plan, write all artifacts, return records.
    Cell failures are isolated; inspect record.status per cell."""
    assert_in_regime(plan, allow_out_of_theorem)
    phash = plan_hash(plan)
    out_root = Path(plan.out) / phash
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "plan.ini").write_text(serialize_plan(plan))

    cells = plan_cells(plan)
    payloads = [
        (plan.kind, cid, str(out_root / cid), serialize_plan(_cell_plan(plan, ov)))
        for cid, ov in cells
    ]
    if plan.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            results = list(pool.map(_run_cell, payloads))
    else:
        results = [_run_cell(p) for p in payloads]

    records, summaries = [], {}
    for cell_id, status, wall, detail, summary in results:
        cell_dir = out_root / cell_id
        digest = tree_digest(cell_dir)
        rec = RunRecord(cell_id, phash, status, wall, digest, detail)
        (cell_dir / "record.json").write_text(json.dumps(asdict(rec), indent=1))
        records.append(rec)
        summaries[cell_id] = summary

    write_table_csv(
        out_root / "summary.csv",
        ("cell_id", "status", "digest", "detail"),
        [(r.cell_id, r.status, r.digest, r.detail) for r in records],
    )
    (out_root / "records.json").write_text(
        json.dumps([asdict(r) for r in records], indent=1)
    )
    emit_plot_data(plan, [(cid, ov, summaries.get(cid, {})) for cid, ov in cells], out_root)
    return records


def emit_plot_data(plan: ExperimentPlan, cells, out_root) -> None:
    """Tidy per-family CSVs aggregated over successful cells.  Headers
    are always written, so an empty or fully-failed sweep still leaves
    well-formed (header-only) files."""
    out_root = Path(out_root)
    ok = [(cid, ov, s) for cid, ov, s in cells if s]
    if plan.kind == "multiplier_check":
        write_table_csv(
            out_root / "multiplier_bounds.csv",
            ("nu", "m1_min", "m1_max", "m2_min", "m2_max", "margin_min", "samples"),
            [
                (s["nu"], s["m1_min"], s["m1_max"], s["m2_min"], s["m2_max"],
                 s["margin_min"], s["samples"])
                for _, _, s in ok
            ],
        )
    elif plan.kind == "linear_sweep":
        slope_g2, slope_q2 = _sweep_slopes(plan, ok)
        write_table_csv(
            out_root / "g2_scaling.csv",
            ("nu", "peak", "t_peak", "slope_global"),
            [(s["nu"], s["g2_peak"], s["g2_t_peak"], slope_g2) for _, _, s in ok],
        )
        write_table_csv(
            out_root / "q2_scaling.csv",
            ("nu", "peak", "t_peak", "slope_global"),
            [(s["nu"], s["q2_peak"], s["q2_t_peak"], slope_q2) for _, _, s in ok],
        )
        write_table_csv(
            out_root / "alpha_comparison.csv",
            ("nu", "alpha", "envelope_peak", "envelope_peak_alpha0", "suppression_ratio"),
            [
                (s["nu"], s["alpha"], s["envelope_peak"], s["envelope_peak_alpha0"],
                 s["suppression_ratio"])
                for _, _, s in ok
            ],
        )
    elif plan.kind == "threshold_sweep":
        write_table_csv(
            out_root / "threshold.csv",
            ("nu", "epsilon", "peak_u_amp", "peak_b_amp", "peak_total_amp",
             "final_total_energy", "max_constant", "status"),
            [
                (s["nu"], s["epsilon"], s["peak_u_amp"], s["peak_b_amp"],
                 s["peak_total_amp"], s["final_total_energy"], s["max_constant"], "ok")
                for _, _, s in ok
            ],
        )
    elif plan.kind == "norms_report":
        for cid, _, _ in ok:
            for name in ("bootstrap_panel.csv", "theorem_rows.csv"):
                src = out_root / cid / name
                if src.is_file():
                    (out_root / name).write_bytes(src.read_bytes())


def _sweep_slopes(plan: ExperimentPlan, ok_cells) -> tuple[float | str, float | str]:
    """Global log-log slopes via the family fit; empty when the nu axis
    is too thin to fit (fewer than 3 values or under 2 decades)."""
    nus = sorted({s["nu"] for _, _, s in ok_cells})
    try:
        fam = _homogeneous_family(plan)
        pfam = [cell_params(plan, nu=nu) for nu in nus]
        g2 = fit_g2_scaling(fam, pfam, kind="g2").slope
        q2 = fit_g2_scaling(fam, pfam, kind="q2").slope
        return g2, q2
    except ValueError:
        return "", ""


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcl",
        description="Sheared-frame MHD spectral laboratory: linear studies, "
        "nonlinear runs, sweeps and norm reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    help_lines = {
        "multiplier-check": "scan the multiplier bounds and the dissipation margin",
        "linear-mode": "one linear mode study (curve plus peak)",
        "linear-sweep": "peak scaling over nu plus the alpha comparison",
        "simulate": "one nonlinear run with streamed norm panels",
        "threshold-sweep": "grid of (nu, epsilon) nonlinear runs",
        "norms-report": "recompute norm panels from stored states",
    }
    for name in SUBCOMMAND_KINDS:
        p = sub.add_parser(name, help=help_lines[name])
        p.add_argument("--config", required=True, help="INI config file (see module docs)")
        p.add_argument("--out", default=None, help="output directory (default: experiment.out)")
        p.add_argument("--jobs", type=int, default=None, help="parallel cells (default: experiment.jobs)")
        p.add_argument("--seed", type=int, default=None, help="seed override (default: experiment.seed)")
        p.add_argument(
            "--allow-out-of-theorem",
            action="store_true",
            help="run even when (nu, alpha, sigma) sit outside the stabilization regime",
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        plan = parse_config(args.config, kind=SUBCOMMAND_KINDS[args.command])
        updates = {}
        if args.out is not None:
            updates["out"] = args.out
        if args.jobs is not None:
            updates["jobs"] = args.jobs
        if args.seed is not None:
            updates["seed"] = args.seed
        if updates:
            plan = replace(plan, **updates)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        records = execute(plan, allow_out_of_theorem=args.allow_out_of_theorem)
    except OutOfRegimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for rec in records:
        print(f"{rec.cell_id:32s} {rec.status:8s} {rec.wall_time:9.2f}s  {rec.digest[:12]}")
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} cell(s), {failed} failed, plan {plan_hash(plan)} -> "
          f"{Path(plan.out) / plan_hash(plan)}")
    return 1 if failed else 0
