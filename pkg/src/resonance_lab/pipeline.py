"""Experiment orchestration: constants, manifold, annulus, attractor, branches."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, parse_float_list
from .equilibria import BRANCH_HEADER, deflated_search, geometric_grid, multiplicity_report
from .errors import ResonanceLabError
from .manifold import LPConfig, invariance_residual, tolerance_budget
from .nonlinearity import lipschitz_estimate, make_nonlinearity, nemytskii_bound, smallness_margin, verify_landesman_lazer
from .reduced import (
    AttractorConfig,
    GraphDensity,
    certify_sphere_shape,
    compute_attractor,
    find_s0,
    find_theta,
    graph_at,
    gronwall_envelope,
    integrate_reduced,
    invariant_annulus,
    orientation_sign,
    unit_directions,
)
from .semiflow import IntegratorConfig
from .spectral import DomainSpec, basis_for_level, build_basis, estimate_semigroup_constant, spectral_gap, split_at

log = logging.getLogger(__name__)

STAGES = ("check", "manifold", "annulus", "attractor", "branches")
COMMAND_STAGE = {"check": "check", "manifold": "manifold", "annulus": "annulus", "bifurcate": "branches"}


class PipelineAbort(ResonanceLabError):
    """A stage failed; the report so far is attached."""

    def __init__(self, stage: str, cause: Exception, report: "Report"):
        super().__init__(f"stage '{stage}' aborted: {cause}")
        self.stage = stage
        self.cause = cause
        self.report = report


@dataclass
class Report:
    data: dict
    files: dict = field(default_factory=dict)  # file name -> text

    @property
    def passed(self) -> bool:
        claims = self.data.get("claims", {})
        return self.data.get("status") == "complete" and bool(claims) and all(claims.values())


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return f"{x:.12e}"


class _Run:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        v = cfg.values
        self.k = v["problem"]["k"]
        self.domain = DomainSpec(v["domain"]["kind"], v["domain"]["length"], v["domain"]["quadrature_points_per_dim"])
        if v["problem"]["modes"] is not None:
            self.basis = build_basis(self.domain, v["problem"]["modes"])
        else:
            self.basis = basis_for_level(self.domain, self.k, v["problem"]["truncation_factor"], v["problem"]["min_modes"])
        self.spec = make_nonlinearity(v["nonlinearity"]["name"], v["nonlinearity"]["orientation"], **cfg.nonlinearity_params())
        self.mu_k = float(self.basis.levels[self.k - 1])
        self.side = self.spec.side
        self.M = 1.0
        lp = v["lp"]
        self.lp = LPConfig(lp["window"], lp["nodes_per_unit"], lp["grading"], lp["tol"], lp["max_iter"])
        g = v["graph"]
        self.density = GraphDensity(g["n_radial"], g["n_angular"], g["box_factor"])
        self.theta_density = GraphDensity(g["theta_n_radial"], g["theta_n_angular"], g["box_factor"])
        a = v["attractor"]
        self.attractor = AttractorConfig(cells=a["cells"], test_points=a["test_points"], tau=a["tau"], dt=a["dt"])
        self.integrator = IntegratorConfig(h=v["integrator"]["h"])
        self.seed = v["run"]["seed"]
        self.graphs = {}
        self.annuli = {}
        self.covers = {}
        self.theta = None
        self.grid = None
        self.certify = None

    def rng(self, stage: str):
        return np.random.default_rng([self.seed, STAGES.index(stage)])

    # -- stages ---------------------------------------------------------------------

    def check(self, report: Report):
        c = report.data["constants"]
        beta = spectral_gap(self.basis, self.k)
        ltilde = lipschitz_estimate(self.spec, self.basis, rng=self.rng("check"))
        # M is measured over the parameter range the run will use
        reach = self.cfg.values["lambda"]["theta"] or beta / 8
        probe = [self.mu_k + self.side * reach * 2.0**-i for i in range(12)]
        self.M = max(estimate_semigroup_constant(split_at(self.basis, self.k, lam)) for lam in probe)
        c["M_probe_reach"] = reach
        self.lp.M = self.M
        M_beta, margin = smallness_margin(self.spec, self.basis, self.k, self.M)
        c.update(
            mu_k=self.mu_k, beta_k=beta, m=len(self.basis.level_index(self.k)), N=self.basis.N,
            M=self.M, M_beta=M_beta, L_f=self.spec.lipschitz, L_tilde=ltilde, margin=margin,
            C_f=nemytskii_bound(self.spec, self.basis),
        )
        report.data["claims"]["smallness_condition"] = margin > 0
        if not margin > 0:
            raise ResonanceLabError(
                f"smallness condition M_beta * L_f / sqrt(mu_1) < 1 fails: "
                f"M_beta={M_beta:.6g}, L_f={self.spec.lipschitz:.6g}, margin={margin:.6g}"
            )
        c["L0"] = self.M / (1 - M_beta * ltilde) + 1
        ll = verify_landesman_lazer(self.spec)
        report.data["certificates"]["landesman_lazer"] = {
            "orientation": ll.orientation, "upper_margin": ll.upper_margin, "lower_margin": ll.lower_margin, "passed": ll.passed,
        }
        delta = min(self.spec.fbar, self.spec.funder)
        c["delta"] = delta

    def _lambdas(self, report: Report):
        lam_cfg = self.cfg.values["lambda"]
        theta = lam_cfg["theta"]
        if theta is None:
            theta, _ = find_theta(self.basis, self.spec, self.k, self.lp, self.theta_density)
            report.data["constants"]["theta_source"] = "bisection"
        else:
            report.data["constants"]["theta_source"] = "config"
        self.theta = float(theta)
        report.data["constants"]["theta"] = self.theta
        if lam_cfg["grid"] == "geometric":
            self.grid = geometric_grid(self.mu_k, self.theta, self.side, lam_cfg["levels"])
        else:
            self.grid = np.array(parse_float_list(lam_cfg["grid"]))
        cert = lam_cfg["certify"]
        self.certify = list(self.grid[: lam_cfg["certify_count"]]) if cert in (None, "auto") else parse_float_list(cert)
        report.data["lambda_grid"] = [float(x) for x in self.grid]
        report.data["certify_lambdas"] = [float(x) for x in self.certify]

    def manifold(self, report: Report):
        self._lambdas(report)
        cert = report.data["certificates"]
        c = report.data["constants"]
        rows = []
        for i, lam in enumerate(self.certify):
            split, graph = graph_at(self.basis, self.spec, self.k, float(lam), self.lp, self.density, check_every=16)
            self.graphs[float(lam)] = (split, graph)
            sup_xi = float(np.max(np.linalg.norm(graph.values * split.alpha_weights(), axis=1)))
            bound = c["M_beta"] * c["L_tilde"]
            rows.append({
                "lambda": float(lam),
                "samples": len(graph.samples),
                "box_radius": graph.radius,
                "max_contraction_ratio": graph.max_ratio,
                "contraction_bound": bound,
                "max_iterations": int(max(graph.iterations)),
                "lipschitz": graph.lipschitz,
                "lipschitz_bound": graph.lipschitz_bound,
                "sup_xi_alpha": sup_xi,
                "xi_bound": c["M_beta"] * c["C_f"],
                "tail_bound": graph.tail_bound,
            })
            header = [f"y_{j + 1}" for j in range(split.m)] + [f"xi_{j + 1}" for j in range(split.basis.N)] + ["tail_bound"]
            table = [[_fmt(x) for x in (*y, *v, graph.tail_bound)] for y, v in zip(graph.samples, graph.values)]
            report.files[f"manifold_{i}.csv"] = _csv_text(header, table)
        cert["manifold"] = rows
        slack = lambda b: b + 0.1 * (1 - b)  # noqa: E731
        claims = report.data["claims"]
        claims["contraction"] = all(r["max_contraction_ratio"] <= slack(r["contraction_bound"]) for r in rows)
        claims["manifold_lipschitz"] = all(r["lipschitz"] <= r["lipschitz_bound"] for r in rows)
        claims["manifold_bounded"] = all(r["sup_xi_alpha"] <= r["xi_bound"] for r in rows)
        # invariance at the first certified lambda
        split, graph = self.graphs[float(self.certify[0])]
        g = self.cfg.values["graph"]
        n = g["invariance_points"]
        dirs = unit_directions(split.m, max(n, 2))
        horizon = g["invariance_horizon"]
        unstable = -split.rates[split.idx_u]
        if len(unstable):
            # forward flow amplifies off-manifold errors by exp(rate * t); keep that below e^2
            horizon = min(horizon, 2.0 / float(unstable.max()))
        report.data["constants"]["invariance_horizon"] = horizon
        inv = []
        for j in range(n):
            y = 0.25 * graph.radius * (j + 1) / n * dirs[j % len(dirs)]
            res = invariance_residual(split, self.spec, graph, y, horizon, self.integrator, self.lp)
            budget = tolerance_budget(split, self.spec, graph, y, horizon, self.integrator, self.lp)
            inv.append({"y": y.tolist(), "horizon": horizon, "residual": res, **budget, "passed": res <= budget["total"]})
        cert["invariance"] = inv
        claims["invariance"] = all(r["passed"] for r in inv)

    def annulus(self, report: Report):
        rows, env = [], []
        sigma = orientation_sign(self.spec)
        for lam in self.certify:
            split, graph = self.graphs[float(lam)]
            sat = find_s0(split, self.spec, graph)
            ann = invariant_annulus(split, self.spec, graph, saturation=sat)
            self.annuli[float(lam)] = ann
            rows.append(ann.as_dict())
            # envelope domination along reduced trajectories started on and off the annulus
            if sigma > 0:
                d = self.mu_k - float(lam)
                dirs = unit_directions(split.m, 8)
                starts = np.concatenate([ann.a * dirs, ann.b * dirs, min(2 * ann.b, 0.95 * graph.radius) * dirs])
                t, path = integrate_reduced(split, self.spec, graph, starts, min(2.0 / d, 400.0), dt=0.5)
                sq = np.sum(path**2, axis=-1)
                envl = gronwall_envelope(ann, float(lam), np.linalg.norm(starts, axis=1)[None, :], t[:, None])
                worst = float(np.max((sq - envl) / (1 + envl)))
                env.append({"lambda": float(lam), "worst_relative_excess": worst, "passed": worst <= 1e-6})
        report.data["certificates"]["annulus"] = rows
        report.data["certificates"]["envelope"] = env
        c = report.data["constants"]
        first = rows[0]
        for key in ("r", "c0", "s0", "R0", "C", "rho", "a", "b"):
            c[key] = first[key]
        c["annulus_lambda"] = first["lam"]
        dist = np.array([abs(self.mu_k - r["lam"]) for r in rows])
        order = np.argsort(-dist)
        a = np.array([r["a"] for r in rows])[order]
        b = np.array([r["b"] for r in rows])[order]
        claims = report.data["claims"]
        claims["annulus_certified"] = all(r["inner_min_margin"] >= -1e-8 and r["outer_max"] <= 1e-8 for r in rows)
        claims["annulus_radii_grow_toward_resonance"] = bool(np.all(np.diff(a) >= 0) and np.all(np.diff(b) >= 0))
        if env:
            claims["gronwall_envelope"] = all(e["passed"] for e in env)
        report.files["annulus.csv"] = _csv_text(
            ["lambda", "a", "b", "c0", "R0", "s0", "r", "delta", "C", "rho", "inner_samples", "outer_samples"],
            [[_fmt(r[k]) if isinstance(r[k], float) else r[k] for k in ("lam", "a", "b", "c0", "R0", "s0", "r", "delta", "C", "rho", "inner_samples", "outer_samples")] for r in rows],
        )

    def attractor_stage(self, report: Report):
        shapes = []
        for i, lam in enumerate(self.certify):
            split, graph = self.graphs[float(lam)]
            cover = compute_attractor(split, self.spec, graph, self.annuli[float(lam)], self.attractor)
            self.covers[float(lam)] = cover
            shape = certify_sphere_shape(cover)
            lifted = [split.lift(w) + graph(w[None])[0] for w in cover.equilibria]
            shapes.append({
                "lambda": float(lam),
                "cells": int(cover.mask.sum()),
                "cell_size": cover.cell_size,
                "equilibria": cover.equilibria.tolist(),
                "equilibria_norms": np.linalg.norm(cover.equilibria, axis=1).tolist(),
                "shape": shape.as_dict(),
            })
            rows = [[_fmt(x) for x in cc] + [_fmt(cover.cell_size), "cell"] for cc in cover.centers()]
            rows += [[_fmt(x) for x in e] + [_fmt(cover.cell_size), "equilibrium"] for e in cover.equilibria]
            report.files[f"attractor_{i}.csv"] = _csv_text([f"w_{j + 1}" for j in range(split.m)] + ["cell_size", "kind"], rows)
            self._lifted = getattr(self, "_lifted", {})
            self._lifted[float(lam)] = lifted
        report.data["certificates"]["attractor"] = shapes
        claims = report.data["claims"]
        claims["sphere_shape"] = all(s["shape"]["passed"] for s in shapes)
        claims["attractor_has_two_equilibria"] = all(len(s["equilibria"]) >= 2 for s in shapes)

    def branches(self, report: Report):
        opposite = 2 * self.mu_k - self.grid
        mr = multiplicity_report(
            self.basis, self.spec, self.k, self.grid, opposite,
            cross_check=bool(self.cfg.values["run"]["cross_validate"]), rng=self.rng("branches"),
        )
        branches = mr.pop("_branches")
        opp = mr.pop("_opposite_branches")
        report.data["branches"] = mr
        claims = report.data["claims"]
        claims.update(mr["claims"])
        claims["energy_distinct"] = bool(mr["energy_gap_ok"])
        rows = [r for i, b in enumerate(branches) for r in b.to_rows(i)]
        report.files["branches.csv"] = _csv_text(BRANCH_HEADER, rows)
        report.files["opposite_branches.csv"] = _csv_text(BRANCH_HEADER, [r for i, b in enumerate(opp) for r in b.to_rows(i)])
        # reduced/full consistency where a cover was computed
        lifted = getattr(self, "_lifted", {})
        cons = []
        for lam, pts in lifted.items():
            found = deflated_search(self.basis, self.spec, lam, k=self.k)
            ev = self.basis.eigenvalues
            for u in pts:
                dmin = min(math.sqrt(((u - e.coef) ** 2) @ ev) for e in found)
                cons.append({"lambda": lam, "v_distance": dmin, "passed": dmin < 1e-3 * max(1.0, math.sqrt(u**2 @ ev))})
        if cons:
            report.data["certificates"]["reduced_full_consistency"] = cons
            claims["reduced_full_consistency"] = all(c["passed"] for c in cons)


def run_experiment(cfg: ExperimentConfig, stop: str | None = None) -> Report:
    """Run the stages up to ``stop`` (default: the config's ``run.stage`` or all)."""
    stop = stop or cfg.values["run"]["stage"] or STAGES[-1]
    if stop not in STAGES:
        raise ValueError(f"unknown stage {stop!r}; stages: {', '.join(STAGES)}")
    report = Report({
        "config": cfg.as_dict(),
        "source": cfg.source,
        "status": "running",
        "stages_run": [],
        "constants": {},
        "certificates": {},
        "claims": {},
    })
    try:
        run = _Run(cfg)
    except ResonanceLabError as exc:
        report.data["status"] = "aborted"
        report.data["abort"] = {"stage": "setup", "error": type(exc).__name__, "message": str(exc)}
        raise PipelineAbort("setup", exc, report) from exc
    steps = {"check": run.check, "manifold": run.manifold, "annulus": run.annulus, "attractor": run.attractor_stage, "branches": run.branches}
    for stage in STAGES[: STAGES.index(stop) + 1]:
        log.info("stage %s", stage)
        try:
            steps[stage](report)
        except ResonanceLabError as exc:
            report.data["status"] = "aborted"
            report.data["abort"] = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
            raise PipelineAbort(stage, exc, report) from exc
        report.data["stages_run"].append(stage)
    report.data["status"] = "complete"
    report.data["passed"] = report.passed
    return report


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def emit_report(report: Report, out_dir, formats=("csv", "structured-text")) -> list:
    """Write the report deterministically; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "structured-text" in formats:
        p = out / "report.json"
        p.write_text(json.dumps(_jsonable(report.data), indent=2, sort_keys=True, allow_nan=False) + "\n")
        written.append(p)
    if "csv" in formats:
        consts = report.data.get("constants", {})
        p = out / "constants.csv"
        p.write_text(_csv_text(["name", "value"], [[k, consts[k]] for k in sorted(consts)]))
        written.append(p)
        claims = report.data.get("claims", {})
        p = out / "claims.csv"
        p.write_text(_csv_text(["claim", "passed"], [[k, bool(claims[k])] for k in sorted(claims)]))
        written.append(p)
        for name in sorted(report.files):
            p = out / name
            p.write_text(report.files[name])
            written.append(p)
    return written
