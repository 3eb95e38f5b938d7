"""Named experiments: each turns a validated config into artifacts plus pass/fail checks."""
from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import analysis, config as cfgmod, flows, linalg, losses, pathsolve, reparam
from .flows import fmt
from .models import init_params, jacobian, label_flatten, output_flatten


# -- run context ---------------------------------------------------------------

class RunContext:
    def __init__(self, cfg: dict, out_dir: Path, base_dir=None):
        self.cfg = cfg
        self.params = cfg["params"]
        self.seed = int(cfg["seed"])
        self.out_dir = Path(out_dir)
        self.base_dir = base_dir
        self.artifacts: list = []
        self.checks: list = []
        self.notes: dict = {}

    def cases(self) -> list:
        return cfgmod.cases(self.cfg, self.base_dir)

    def check(self, name: str, value, tolerance, comparison: str = "<=") -> bool:
        v = float(value)
        tol = float(tolerance)
        ok = {"<=": v <= tol, "<": v < tol, ">=": v >= tol, ">": v > tol, "==": v == tol}[comparison]
        self.checks.append({"metric_name": name, "scalar": v, "tolerance": tol,
                            "comparison": comparison, "pass": bool(ok)})
        return ok

    def check_series(self, name: str, series, tolerance, comparison: str = "<=") -> bool:
        s = [float(v) for v in series]
        worst = max(s) if comparison.startswith("<") else min(s)
        ok = self.check(name, worst, tolerance, comparison)
        self.checks[-1]["per_time_series"] = s
        return ok

    def write_csv(self, filename: str, header: list, rows) -> Path:
        path = self.out_dir / filename
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row])
        self.artifacts.append(filename)
        return path

    def register(self, filename: str) -> None:
        self.artifacts.append(filename)

    def write_json(self, filename: str, obj) -> Path:
        path = self.out_dir / filename
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        self.artifacts.append(filename)
        return path


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    runner: Callable[[RunContext], None]
    requires: tuple = ()
    params: dict = field(default_factory=dict)

    @property
    def params_schema(self) -> dict:
        return {"type": "object", "additionalProperties": False,
                "required": [k for k, v in self.params.items() if not v.get("optional")],
                "properties": {k: {kk: vv for kk, vv in v.items() if kk != "optional"}
                               for k, v in self.params.items()}}


NUM = {"type": "number"}
POS = {"type": "number", "exclusiveMinimum": 0}
NONNEG = {"type": "number", "minimum": 0}
INT1 = {"type": "integer", "minimum": 1}
ALPHAS = {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0, "maximum": 1}}
TIMES = {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}}
QS = {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}}


def _theta0(ctx: RunContext, spec):
    return init_params(spec, ctx.seed)


def _require_loss(ctx: RunContext, kind: str) -> None:
    if ctx.cfg.get("loss") != kind:
        raise cfgmod.ConfigError(f"config field 'loss': experiment '{ctx.cfg['experiment']}' needs '{kind}'")


# -- linalg ---------------------------------------------------------------------

def _random_matrix(rng, max_rows, max_cols, deficient: bool):
    m = int(rng.integers(1, max_rows + 1))
    n = int(rng.integers(1, max_cols + 1))
    if deficient and min(m, n) > 1:
        r = int(rng.integers(1, min(m, n)))
        return rng.standard_normal((m, r)) @ rng.standard_normal((r, n)), True
    return rng.standard_normal((m, n)), False


def _rel(a, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / (nb if nb > 0 else 1.0))


def run_penrose_suite(ctx: RunContext) -> None:
    p = ctx.params
    rng = np.random.default_rng(ctx.seed)
    tol = p["tolerance"]
    rows, worst = [], {}
    kernel_ok = True
    for i in range(p["n_matrices"]):
        a, forced = _random_matrix(rng, p["max_rows"], p["max_cols"], i % p["deficient_every"] == 0)
        x = linalg.pseudoinverse(a)
        f = linalg.svd(a)
        rep = linalg.verify_penrose(a, x)
        ident = {
            "pinv_pinv": _rel(linalg.pseudoinverse(x), a),
            "pinv_transpose": _rel(linalg.pseudoinverse(a.T), x.T),
            "pinv_gram": _rel(linalg.pseudoinverse(a.T @ a), x @ linalg.pseudoinverse(a.T)),
            "a_aat_pinv": _rel(a @ a.T @ linalg.pseudoinverse(a.T), a),
        }
        probes = list(f.kernel_basis.T) + list(rng.standard_normal((3, a.shape[1])))
        agree = linalg.kernel_agreement_check(a, probes)
        kernel_ok &= agree
        for k, v in ident.items():
            worst[k] = max(worst.get(k, 0.0), v)
        worst["penrose"] = max(worst.get("penrose", 0.0), rep.max_relative)
        rows.append([i, a.shape[0], a.shape[1], f.numerical_rank, int(forced), *rep.relative,
                     *ident.values(), int(agree)])
    ctx.write_csv("penrose.csv", ["index", "rows", "cols", "rank", "forced_deficient",
                                  "r_axa", "r_xax", "r_ax_sym", "r_xa_sym",
                                  "pinv_pinv", "pinv_transpose", "pinv_gram", "a_aat_pinv", "kernel_agree"], rows)
    for k in ["penrose", "pinv_pinv", "pinv_transpose", "pinv_gram", "a_aat_pinv"]:
        ctx.check(f"max_relative_residual/{k}", worst[k], tol)
    ctx.check("kernel_agreement_failures", 0 if kernel_ok else 1, 0, "==")


# -- models ---------------------------------------------------------------------

def fd_jacobian(spec, theta, data, h: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    cols = []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        cols.append((output_flatten(spec, theta + e, data) - output_flatten(spec, theta - e, data)) / (2 * h))
    return np.array(cols).T


def jacobian_rel_error(d, fd, min_magnitude: float):
    mask = np.abs(d) > min_magnitude
    if not mask.any():
        return 0.0, 0
    return float(np.max(np.abs(d[mask] - fd[mask]) / np.abs(d[mask]))), int(mask.sum())


def run_jacobian_check(ctx: RunContext) -> None:
    p = ctx.params
    rows = []
    for case in ctx.cases():
        spec, data = case["model"], case["data"]
        worst = 0.0
        for draw in range(p["n_draws"]):
            theta = init_params(spec, ctx.seed + draw)
            err, n = jacobian_rel_error(jacobian(spec, theta, data), fd_jacobian(spec, theta, data, p["fd_step"]),
                                        p["min_magnitude"])
            worst = max(worst, err)
            rows.append([case["name"], draw, err, n])
        ctx.check(f"{case['name']}/max_relative_error", worst, p["rtol"])
    ctx.write_csv("jacobian.csv", ["case", "draw", "max_relative_error", "entries_checked"], rows)


# -- flows ----------------------------------------------------------------------

def run_induced_field_check(ctx: RunContext) -> None:
    p = ctx.params
    loss = ctx.cfg["loss"]
    rows = []
    for case in ctx.cases():
        spec, data = case["model"], case["data"]
        worst = 0.0
        for draw in range(p["n_draws"]):
            theta = init_params(spec, ctx.seed + draw)
            for a in p["alphas"]:
                s = flows.induced_output_field(spec, theta, data, loss, a)
                scaled = s.residual_norm / max(1.0, float(np.linalg.norm(s.predicted_velocity)))
                worst = max(worst, scaled)
                rows.append([case["name"], draw, float(a), s.residual_norm, scaled])
        ctx.check(f"{case['name']}/max_scaled_residual", worst, p["rtol"])
    ctx.write_csv("induced_field.csv", ["case", "draw", "alpha", "residual_norm", "scaled_residual"], rows)


def _write_traj(ctx: RunContext, traj, stem: str, theta_sidecar: bool) -> None:
    flows.write_trajectory_csv(traj, ctx.out_dir / f"{stem}.csv",
                               ctx.out_dir / f"{stem}_theta.csv" if theta_sidecar else None)
    ctx.register(f"{stem}.csv")
    if theta_sidecar:
        ctx.register(f"{stem}_theta.csv")


def _divergence(traj) -> dict:
    last = traj.final
    return {"s": last.s, "cost": last.cost, "grad_norm": last.grad_theta_norm, "rank": last.jacobian_rank}


def run_flow_run(ctx: RunContext) -> None:
    (case,) = ctx.cases()
    spec, data = case["model"], case["data"]
    fc = cfgmod.flow_config(ctx.cfg)
    traj = flows.integrate(spec, _theta0(ctx, spec), data, ctx.cfg["loss"], fc)
    _write_traj(ctx, traj, "trajectory", ctx.params["theta_sidecar"])
    ctx.notes["stop_reason"] = traj.stop_reason
    if traj.diverged:
        ctx.notes["divergence"] = _divergence(traj)
    ctx.check("diverged", int(traj.diverged), 0, "==")
    rises = np.diff(traj.costs)
    ctx.check("max_cost_increase", float(rises.max()) if rises.size else 0.0, ctx.params["monotone_tol"])


def run_alpha_sweep(ctx: RunContext) -> None:
    p = ctx.params
    (case,) = ctx.cases()
    spec, data = case["model"], case["data"]
    loss = ctx.cfg["loss"]
    fc = cfgmod.flow_config(ctx.cfg)
    theta0 = _theta0(ctx, spec)
    generating = [fc.alpha] + ([p["repeat_with_alpha"]] if p.get("repeat_with_alpha") is not None else [])
    report = []
    for g in generating:
        run_cfg = flows.FlowConfig(**{**ctx.cfg["flow"], "alpha": g})
        traj = flows.integrate(spec, theta0, data, loss, run_cfg)
        tag = f"alpha{g:g}"
        _write_traj(ctx, traj, f"trajectory_{tag}", False)
        if traj.diverged:
            ctx.notes[f"divergence_{tag}"] = _divergence(traj)
        ctx.check(f"{tag}/terminal_grad_norm", traj.final.grad_theta_norm, run_cfg.stop_grad_norm)
        sweep = flows.equilibrium_sweep(spec, traj.final.theta, data, loss, p["alphas"], p["tolerance"])
        for a, n in zip(sweep.alphas, sweep.field_norms):
            ctx.check(f"{tag}/field_norm_at_alpha{a:g}", n, p["tolerance"])
        report.append({"generating_alpha": g, "alphas": list(sweep.alphas),
                       "field_norms": list(sweep.field_norms), "final_s": traj.final.s})
    # no spurious zeros away from equilibrium
    control = flows.equilibrium_sweep(spec, theta0, data, loss, p["alphas"], p["tolerance"])
    ctx.check("control/min_field_norm_at_theta0", min(control.field_norms), p["tolerance"], ">")
    ctx.write_json("sweep.json", report)


# -- reparametrization ------------------------------------------------------------

def _write_reparam(ctx: RunContext, traj, filename: str) -> None:
    qn = traj.x0.size
    rows = [[r.t, r.deviation_norm, r.projector_defect, *r.x_flat] for r in traj.records]
    ctx.write_csv(filename, ["t", "deviation_norm", "projector_defect"] + [f"x_{i}" for i in range(qn)], rows)


def run_reparam_check(ctx: RunContext) -> None:
    p = ctx.params
    _require_loss(ctx, "squared")
    (case,) = ctx.cases()
    spec, data = case["model"], case["data"]
    traj = reparam.reparametrized_flow(spec, _theta0(ctx, spec), data, p["step_size"], p["t_max"],
                                       p["record_stride"])
    _write_reparam(ctx, traj, "reparam.csv")
    gap = float(np.linalg.norm(traj.x0 - traj.y))
    ctx.check("min_rank_minus_QN", min(r.rank for r in traj.records) - traj.x0.size, 0, "==")
    ctx.check_series("deviation_norm", [r.deviation_norm for r in traj.records],
                     p["deviation_rtol"] * (1.0 + gap))
    terminal = float(np.linalg.norm(traj.records[-1].x_flat - traj.y))
    ctx.check("terminal_distance_ratio", terminal / gap if gap > 0 else 0.0, p["terminal_factor"])


def _grid_index(times: np.ndarray, t: float) -> int:
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9:
        raise cfgmod.ConfigError(f"config field 'params/eval_times': {t} is not on the record grid")
    return k


def run_rank_loss_check(ctx: RunContext) -> None:
    p = ctx.params
    _require_loss(ctx, "squared")
    for case in ctx.cases():
        spec, data = case["model"], case["data"]
        name = case["name"]
        traj = reparam.reparametrized_flow(spec, _theta0(ctx, spec), data, p["step_size"], p["t_max"], 1)
        _write_reparam(ctx, traj, f"reparam_{name}.csv")
        predicted = reparam.deviation_via_propagator(traj, generator=p["generator"])
        measured = traj.measured_deviation()
        qn = traj.x0.size
        deficient = min(r.rank for r in traj.records) < qn
        rows = []
        for k, t in enumerate(traj.times):
            mn, pn = float(np.linalg.norm(measured[k])), float(np.linalg.norm(predicted[k]))
            rel = float(np.linalg.norm(predicted[k] - measured[k]) / mn) if mn > 0 else float(np.linalg.norm(predicted[k]))
            rows.append([t, mn, pn, rel])
        ctx.write_csv(f"propagator_{name}.csv", ["t", "measured_norm", "predicted_norm", "relative_error"], rows)
        if deficient:
            for t in p["eval_times"]:
                ctx.check(f"{name}/relative_error_t{t:g}", rows[_grid_index(traj.times, t)][3], p["match_rtol"])
            ctx.check(f"{name}/terminal_cost", float(np.sum((traj.records[-1].x_flat - traj.y) ** 2))
                      / (2 * data.n_samples), 0.0, ">")
        else:
            ctx.check(f"{name}/max_predicted_deviation", max(r[2] for r in rows), p["full_rank_tol"])


# -- cross-entropy -----------------------------------------------------------------

def run_ce_equilibrium_check(ctx: RunContext) -> None:
    p = ctx.params
    rng = np.random.default_rng(ctx.seed)
    rows = []
    worst = {"distance": 0.0, "drift": 0.0, "terminal_cost_gap": 0.0,
             "formula_fixed_point": 0.0, "formula_hyperplane": 0.0, "formula_cost_gap": 0.0}
    for q in p["output_dims"]:
        for draw in range(p["n_draws"]):
            y = rng.dirichlet(np.full(q, p["dirichlet_concentration"]))
            f0 = rng.uniform(-p["f0_bound"], p["f0_bound"], size=q)
            r = analysis.ce_flow_convergence(f0, y, p["horizon"], p["step_size"])
            fstar = r.formula_f
            vals = {
                "distance": r.distance_to_formula,
                "drift": r.hyperplane_drift,
                "terminal_cost_gap": abs(r.terminal_cost - r.entropy),
                "formula_fixed_point": float(np.max(np.abs(losses.softmax(fstar) - y))),
                "formula_hyperplane": abs(fstar.sum() - f0.sum()),
                "formula_cost_gap": abs(losses.cost("cross_entropy", fstar, y, 1) - r.entropy),
            }
            for k, v in vals.items():
                worst[k] = max(worst[k], v)
            rows.append([q, draw, float(y.min()), *vals.values()])
    ctx.write_csv("ce_equilibrium.csv", ["Q", "draw", "min_label"] + list(worst), rows)
    ctx.check("max_distance_to_formula", worst["distance"], p["distance_tol"])
    ctx.check("max_hyperplane_drift", worst["drift"], p["drift_tol"])
    ctx.check("max_terminal_cost_gap", worst["terminal_cost_gap"], p["cost_tol"])
    ctx.check("formula/max_softmax_minus_label", worst["formula_fixed_point"], 1e-10)
    ctx.check("formula/max_hyperplane_offset", worst["formula_hyperplane"], 1e-12)
    ctx.check("formula/max_cost_gap", worst["formula_cost_gap"], p["cost_tol"])


def run_ce_hessian_check(ctx: RunContext) -> None:
    p = ctx.params
    rng = np.random.default_rng(ctx.seed)
    rows = []
    rank_misses, min_eig, max_null, min_vhv = 0, np.inf, 0.0, np.inf
    for q in p["output_dims"]:
        for draw in range(p["n_draws"]):
            z = rng.uniform(-p["z_bound"], p["z_bound"], size=q)
            v = rng.standard_normal(q)
            v -= v.mean()
            v /= np.linalg.norm(v)
            h = losses.ce_hessian_block(z).matrix
            chk = losses.ce_hessian_rank_psd_check(z)
            null = float(np.linalg.norm(h @ np.ones(q)))
            vhv = float(v @ h @ v)
            rank_misses += chk.rank != q - 1
            min_eig = min(min_eig, chk.min_eigenvalue)
            max_null = max(max_null, null)
            min_vhv = min(min_vhv, vhv)
            rows.append([q, draw, float(np.ptp(z)), chk.rank, chk.min_eigenvalue, null, vhv,
                         chk.restricted_min_eigenvalue])
    ctx.write_csv("ce_hessian.csv", ["Q", "draw", "z_spread", "rank", "min_eigenvalue", "null_residual",
                                     "vHv", "restricted_min_eigenvalue"], rows)
    ctx.check("rank_mismatches", rank_misses, 0, "==")
    ctx.check("min_eigenvalue", min_eig, -p["psd_tol"], ">=")
    ctx.check("max_null_residual", max_null, p["null_tol"])
    ctx.check("min_vHv_on_sum_free_subspace", min_vhv, p["restricted_min"], ">")


# -- prescribed paths ---------------------------------------------------------------

def _write_path(ctx: RunContext, res, filename: str) -> None:
    qn = res.records[0].x_flat.size
    rows = [[r.s, r.tracking_error, r.defect, r.rank, *r.x_flat] for r in res.records]
    ctx.write_csv(filename, ["s", "tracking_error", "defect", "rank"] + [f"x_{i}" for i in range(qn)], rows)


def run_prescribed_path(ctx: RunContext) -> None:
    p = ctx.params
    (case,) = ctx.cases()
    spec, data = case["model"], case["data"]
    theta0 = _theta0(ctx, spec)
    x0, y = output_flatten(spec, theta0, data), label_flatten(data)
    if p["path_kind"] == "user_waypoints":
        wp = Path(p["waypoints_file"])
        if not wp.is_absolute() and ctx.base_dir is not None:
            wp = Path(ctx.base_dir) / wp
        path = pathsolve.load_waypoints(wp)
    else:
        path = pathsolve.linear_path(x0, y, p["endpoint_time"])
    kw = dict(feedback_gain=p["feedback_gain"], defect_threshold=p["defect_threshold"])
    res = pathsolve.solve_prescribed(spec, theta0, data, path, p["step_size"], **kw)
    _write_path(ctx, res, "path.csv")
    ctx.notes["range_violated"] = res.range_violated
    ctx.check("max_range_defect", res.max_defect, p["defect_tol"])
    if p["path_kind"] == "linear_interpolation":
        gap = float(np.linalg.norm(x0 - y))
        ctx.check("terminal_output_error_ratio", np.linalg.norm(res.final.x_flat - y) / gap, p["terminal_rtol"])
        half = pathsolve.solve_prescribed(spec, theta0, data, path, 0.5 * p["step_size"], **kw)
        _write_path(ctx, half, "path_half_step.csv")
        ratio = res.final.tracking_error / half.final.tracking_error if half.final.tracking_error > 0 else np.inf
        ctx.check("halving_error_ratio", ratio, p["halving_ratio"], ">=")


# -- collapse & NTK -----------------------------------------------------------------

def run_collapse_report(ctx: RunContext) -> None:
    p = ctx.params
    _require_loss(ctx, "squared")
    (case,) = ctx.cases()
    spec, data = case["model"], case["data"]
    if data.classes is None:
        raise cfgmod.ConfigError("config field 'dataset/classes': collapse_report needs class indices")
    traj = reparam.reparametrized_flow(spec, _theta0(ctx, spec), data, p["step_size"], p["t_max"],
                                       p["record_stride"])
    rows = []
    for r in traj.records:
        m = analysis.collapse_metrics(r.x_flat, data.labels, data.classes)
        rows.append([r.t, m.within_class_energy, m.mean_mismatch_energy, m.total, m.decomposition_residual])
    ctx.write_csv("collapse.csv", ["t", "within_class_energy", "mean_mismatch_energy", "two_n_cost",
                                   "identity_residual"], rows)
    ctx.check("min_rank_minus_QN", min(r.rank for r in traj.records) - traj.x0.size, 0, "==")
    ctx.check("terminal_within_class_energy", rows[-1][1], p["energy_tol"])
    ctx.check("terminal_mean_mismatch_energy", rows[-1][2], p["energy_tol"])
    ctx.check_series("identity_residual", [r[4] for r in rows], p["identity_tol"])


def run_ntk_report(ctx: RunContext) -> None:
    p = ctx.params
    summary = []
    for case in ctx.cases():
        spec, data = case["model"], case["data"]
        theta = _theta0(ctx, spec)
        nb = analysis.ntk_blocks(spec, theta, data)
        d = jacobian(spec, theta, data)
        rank = linalg.numerical_rank(d)
        qn = d.shape[0]
        entry_gap = float(np.max(np.abs(nb.assembled - d @ d.T)))
        name = case["name"]
        ctx.check(f"{name}/max_entry_gap_vs_DDT", entry_gap, p["entry_tol"])
        ctx.check(f"{name}/min_eigenvalue", nb.min_eigenvalue, nb.rank_tolerance, ">" if rank == qn else "<=")
        summary.append({"case": name, "rank": rank, "QN": qn, "min_eigenvalue": nb.min_eigenvalue,
                        "rank_tolerance": nb.rank_tolerance, "positive_definite": nb.positive_definite})
        rows = [[i, j, float(nb.assembled[i, j])] for i in range(qn) for j in range(qn)]
        ctx.write_csv(f"ntk_{name}.csv", ["row", "col", "value"], rows)
    ctx.write_json("ntk_summary.json", summary)


# -- registry ----------------------------------------------------------------------

_MODEL = ("model_or_cases",)

EXPERIMENTS = {e.name: e for e in [
    Experiment("flow_run", "integrate one alpha-flow from the seeded init and write its trajectory",
               run_flow_run, _MODEL + ("loss", "flow"),
               {"theta_sidecar": {"type": "boolean"}, "monotone_tol": NONNEG}),
    Experiment("alpha_sweep", "run to equilibrium, then check every alpha-field vanishes there",
               run_alpha_sweep, _MODEL + ("loss", "flow"),
               {"alphas": ALPHAS, "tolerance": POS,
                "repeat_with_alpha": {"type": ["number", "null"], "minimum": 0, "maximum": 1}}),
    Experiment("reparam_check", "adapted L2 flow in t = 1 - exp(-s/N) against straight-line interpolation",
               run_reparam_check, _MODEL + ("loss",),
               {"t_max": {**POS, "maximum": reparam.T_CAP}, "step_size": POS, "record_stride": INT1,
                "deviation_rtol": POS, "terminal_factor": POS}),
    Experiment("rank_loss_check", "Duhamel-propagator deviation prediction against the measured deviation",
               run_rank_loss_check, _MODEL + ("loss",),
               {"t_max": {**POS, "maximum": reparam.T_CAP}, "step_size": POS, "eval_times": TIMES,
                "match_rtol": POS, "full_rank_tol": POS, "generator": {"enum": ["complement", "range"]}}),
    Experiment("prescribed_path", "train along a prescribed output path with theta' = D^+ xhat'",
               run_prescribed_path, _MODEL,
               {"path_kind": {"enum": list(pathsolve.PATH_KINDS)}, "endpoint_time": POS, "step_size": POS,
                "feedback_gain": NONNEG, "defect_threshold": POS, "defect_tol": POS, "terminal_rtol": POS,
                "halving_ratio": POS, "waypoints_file": {"type": "string", "optional": True}}),
    Experiment("ce_equilibrium_check", "per-sample cross-entropy flow against the closed-form equilibrium",
               run_ce_equilibrium_check, (),
               {"output_dims": QS, "n_draws": INT1, "horizon": POS, "step_size": POS, "f0_bound": POS,
                "dirichlet_concentration": POS, "distance_tol": POS, "drift_tol": POS, "cost_tol": POS}),
    Experiment("collapse_report", "class-mean and within-class energies along the adapted L2 flow",
               run_collapse_report, _MODEL + ("loss",),
               {"t_max": {**POS, "maximum": reparam.T_CAP}, "step_size": POS, "record_stride": INT1,
                "energy_tol": POS, "identity_tol": POS}),
    Experiment("ntk_report", "blockwise tangent kernel against D D^T and its definiteness",
               run_ntk_report, _MODEL, {"entry_tol": POS}),
    Experiment("penrose_suite", "Penrose identities and pseudoinverse algebra on seeded random matrices",
               run_penrose_suite, (),
               {"n_matrices": INT1, "max_rows": INT1, "max_cols": INT1, "deficient_every": INT1,
                "tolerance": POS}),
    Experiment("jacobian_check", "forward-mode Jacobian against central finite differences",
               run_jacobian_check, _MODEL,
               {"n_draws": INT1, "fd_step": POS, "rtol": POS, "min_magnitude": NONNEG}),
    Experiment("induced_field_check", "D times the alpha-field against the predicted output-space field",
               run_induced_field_check, _MODEL + ("loss",),
               {"alphas": ALPHAS, "n_draws": INT1, "rtol": POS}),
    Experiment("ce_hessian_check", "rank, definiteness and null vector of the softmax cross-entropy Hessian",
               run_ce_hessian_check, (),
               {"output_dims": QS, "n_draws": INT1, "z_bound": POS, "psd_tol": POS, "null_tol": POS,
                "restricted_min": NONNEG}),
]}


def list_experiments() -> list:
    """``[(name, description)]`` in registry order."""
    return [(e.name, e.description) for e in EXPERIMENTS.values()]


# -- running -----------------------------------------------------------------------

def resolve_output_dir(cfg: dict, output_root=None) -> Path:
    out = Path(cfg["output_dir"])
    if out.is_absolute():
        return out
    root = output_root if output_root is not None else os.environ.get("FLOWLAB_OUTPUT_ROOT", ".")
    return Path(root) / out


def _atomic_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def run_config(cfg: dict, base_dir=None, output_root=None) -> dict:
    """Validate and run one config; write artifacts and ``manifest.json``; return the manifest."""
    from . import __version__

    cfg = cfgmod.validate(cfg, base_dir)
    out = resolve_output_dir(cfg, output_root)
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, out, base_dir)
    started = time.perf_counter()
    EXPERIMENTS[cfg["experiment"]].runner(ctx)
    manifest = {
        "experiment": cfg["experiment"],
        "config": cfg,
        "artifacts": ctx.artifacts,
        "checks": ctx.checks,
        "notes": ctx.notes,
        "passed": all(c["pass"] for c in ctx.checks),
        "tool_version": __version__,
        "wall_clock_seconds": time.perf_counter() - started,
    }
    _atomic_json(out / "manifest.json", manifest)
    return manifest
