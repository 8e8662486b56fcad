"""Command-line front end: orchestration, reporting, reproducible artifacts.

All disk output happens here; the computational modules only return
in-memory values.  Artifacts are CSV (tables), JSON (reports) and SVG
(log-log plots), written with fixed float formatting so identical configs
reproduce byte-identical files.  The run manifest records wall-clock times
and is therefore excluded from that guarantee.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import fem, geometry, korn, ratefit, relent, solver1d, solver_axi
from .config import ConfigError, ExperimentConfig, load_config


# ------------------------------------------------------------------ artifacts

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def svg_loglog(path, series, title, xlabel, ylabel) -> None:
    """Minimal deterministic log-log plot: series is a list of
    (label, x array, y array) triples, each drawn as a polyline with dots."""
    W, H, ML, MB, MT, MR = 560.0, 400.0, 70.0, 50.0, 36.0, 150.0
    xs = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    good = (xs > 0) & (ys > 0)
    if not np.any(good):
        raise ValueError("log-log plot needs positive data")
    lx0, lx1 = np.log10(xs[good].min()), np.log10(xs[good].max())
    ly0, ly1 = np.log10(ys[good].min()), np.log10(ys[good].max())
    lx1 = lx1 if lx1 > lx0 else lx0 + 1.0
    ly1 = ly1 if ly1 > ly0 else ly0 + 1.0
    padx, pady = 0.06 * (lx1 - lx0), 0.08 * (ly1 - ly0)
    lx0, lx1, ly0, ly1 = lx0 - padx, lx1 + padx, ly0 - pady, ly1 + pady

    def X(v):
        return ML + (np.log10(v) - lx0) / (lx1 - lx0) * (W - ML - MR)

    def Y(v):
        return H - MB - (np.log10(v) - ly0) / (ly1 - ly0) * (H - MB - MT)

    colors = ["#1f619e", "#b3342c", "#3c8a46", "#7a5ba8", "#b07c22",
              "#3a7f8a"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" '
        f'height="{H:.0f}" viewBox="0 0 {W:.0f} {H:.0f}">',
        f'<rect width="{W:.0f}" height="{H:.0f}" fill="white"/>',
        f'<text x="{(ML + W - MR) / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    # decade grid and tick labels
    for d in range(int(np.floor(lx0)), int(np.ceil(lx1)) + 1):
        if lx0 <= d <= lx1:
            x = ML + (d - lx0) / (lx1 - lx0) * (W - ML - MR)
            parts.append(f'<line x1="{x:.1f}" y1="{MT:.1f}" x2="{x:.1f}" '
                         f'y2="{H - MB:.1f}" stroke="#dddddd"/>')
            parts.append(f'<text x="{x:.1f}" y="{H - MB + 16:.1f}" '
                         f'text-anchor="middle" font-family="sans-serif" '
                         f'font-size="11">1e{d}</text>')
    for d in range(int(np.floor(ly0)), int(np.ceil(ly1)) + 1):
        if ly0 <= d <= ly1:
            y = H - MB - (d - ly0) / (ly1 - ly0) * (H - MB - MT)
            parts.append(f'<line x1="{ML:.1f}" y1="{y:.1f}" '
                         f'x2="{W - MR:.1f}" y2="{y:.1f}" stroke="#dddddd"/>')
            parts.append(f'<text x="{ML - 6:.1f}" y="{y + 4:.1f}" '
                         f'text-anchor="end" font-family="sans-serif" '
                         f'font-size="11">1e{d}</text>')
    parts.append(f'<rect x="{ML:.1f}" y="{MT:.1f}" width="{W - ML - MR:.1f}" '
                 f'height="{H - MB - MT:.1f}" fill="none" stroke="#444444"/>')
    parts.append(f'<text x="{(ML + W - MR) / 2:.1f}" y="{H - 10:.1f}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">{xlabel}</text>')
    parts.append(f'<text x="16" y="{(MT + H - MB) / 2:.1f}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12" transform="rotate(-90 16 '
                 f'{(MT + H - MB) / 2:.1f})">{ylabel}</text>')
    for i, (label, sx, sy) in enumerate(series):
        sx = np.asarray(sx, dtype=float)
        sy = np.asarray(sy, dtype=float)
        keep = (sx > 0) & (sy > 0)
        sx, sy = sx[keep], sy[keep]
        if sx.size == 0:
            continue
        color = colors[i % len(colors)]
        pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(sx, sy))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.6"/>')
        for a, b in zip(sx, sy):
            parts.append(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="3" '
                         f'fill="{color}"/>')
        ly = MT + 16 + 16 * i
        parts.append(f'<line x1="{W - MR + 8:.1f}" y1="{ly:.1f}" '
                     f'x2="{W - MR + 28:.1f}" y2="{ly:.1f}" '
                     f'stroke="{color}" stroke-width="1.6"/>')
        parts.append(f'<text x="{W - MR + 33:.1f}" y="{ly + 4:.1f}" '
                     f'font-family="sans-serif" font-size="11">{label}'
                     f'</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


# ------------------------------------------------------------------- manifest

def config_hash(raw: dict) -> str:
    """Stable digest of the parsed config (insensitive to key order)."""
    blob = json.dumps(_jsonable(raw), sort_keys=True,
                      separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    """Record of one orchestrated run: inputs, jobs, and emitted files."""

    config_hash: str
    code_version: str
    command: str
    out_dir: str
    jobs: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    passed: bool = True

    def add_job(self, name, status, seconds, detail=None):
        self.jobs.append({"name": name, "status": status,
                          "seconds": round(float(seconds), 3),
                          "detail": detail})
        if status != "ok":
            self.passed = False

    def check(self, name, ok, detail):
        self.jobs.append({"name": name,
                          "status": "ok" if ok else "failed",
                          "seconds": 0.0, "detail": detail})
        if not ok:
            self.passed = False

    def emit(self, path):
        self.artifacts.append(os.path.basename(path))
        return path

    def write(self):
        path = os.path.join(self.out_dir, "manifest.json")
        if "manifest.json" not in self.artifacts:
            self.artifacts.append("manifest.json")
        payload = {
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "command": self.command,
            "jobs": self.jobs,
            "artifacts": sorted(self.artifacts),
            "passed": self.passed,
        }
        write_json(path, payload)
        return path


# ------------------------------------------------------------ worker payloads

def _korn_row(payload):
    """One epsilon cell of a korn sweep; module-level so pools can pickle it."""
    (radius, d_radius, eps, m_sec, n_z, m_disk, constrained, dense_cutoff) = \
        payload
    geom = geometry.ChannelGeometry.circular(radius, d_radius=d_radius)
    mesh = korn._build_channel(geom, eps, m_sec, n_z, "disk")
    T, Kg, Ks, Mv = korn._reduced_channel(mesh)
    lu = None
    if Ks.shape[0] > dense_cutoff:
        import scipy.sparse.linalg as spla
        lu = spla.splu(Ks.tocsc())
    ko1, _ = korn._pencil_max(Kg, Ks, dense_cutoff=dense_cutoff, lu=lu)
    ko2, _ = korn._pencil_max(Mv, Ks, dense_cutoff=dense_cutoff, lu=lu)
    sin_profile = korn.KernelElement(theta=_sin_pi, d_theta=_dsin_pi)
    fieldobj, ratio = korn.example_blowup_field(sin_profile, geom, eps)
    lower = korn.rayleigh_quotient(mesh, fieldobj.nodal_values(mesh),
                                   "grad", "sym")
    cp_unit = korn.tangent_poincare_constant(fem.disk_section(m_disk))
    row = {
        "epsilon": float(eps),
        "ko1": ko1,
        "ko2": ko2,
        "poincare": cp_unit * (eps * float(geom.radius(0.5))) ** 2,
        "blowup_lower_bound": lower,
        "blowup_closed_form": 1.0 / ratio,
    }
    if constrained:
        row["constrained_constant"] = korn._constrained_max(
            mesh, T, Kg, Ks, None, dense_cutoff=dense_cutoff, lu=lu)
    return row


def _sin_pi(z):
    return np.sin(np.pi * z)


def _dsin_pi(z):
    return np.pi * np.cos(np.pi * z)


# ---------------------------------------------------------------- subcommands

def _run_geometry_check(cfg: ExperimentConfig, manifest, out):
    t0 = time.time()
    geom = cfg.geometry
    if geom.kind == "circular":
        tilt = geometry.tilt_field_circular(geom)
    else:
        tilt = geometry.tilt_field_neumann(geom)
    residual = geometry.check_divergence_identity(geom, tilt)
    flow_err = geometry.flow_reconstruction_error(geom, tilt, 1.0)
    area_table = [[float(z), float(geometry.area(geom, z))]
                  for z in geom.z_samples]
    report = {
        "area_table": area_table,
        "divergence_identity_residual": residual,
        "flow_reconstruction_error": flow_err,
    }
    if geom.kind == "circular":
        ok = residual <= 1e-10
        detail = f"max |A div V - dA/dz| = {residual:.3e}"
    else:
        ok = np.isfinite(residual) and np.isfinite(flow_err)
        detail = (f"divergence residual = {residual:.3e}, "
                  f"flow reconstruction error = {flow_err:.3e}")
    write_json(manifest.emit(os.path.join(out, "geometry_check.json")),
               report)
    manifest.add_job("geometry-check", "ok" if ok else "failed",
                     time.time() - t0, detail)


def _initial_state_1d(cfg: ExperimentConfig):
    grid = solver1d.Grid1D(cfg.solver1d["n_cells"])
    z = grid.centers
    rho = np.asarray(cfg.solver1d["rho0"](z), dtype=float)
    v = np.asarray(cfg.solver1d["v0"](z), dtype=float)
    amp = cfg.solver1d["perturb"]
    if amp > 0:
        # seeded smooth density perturbation, wall-compatible by construction
        rng = np.random.default_rng(cfg.seed)
        coefs = rng.standard_normal(4)
        bump = sum(c * np.sin((j + 1) * np.pi * z)
                   for j, c in enumerate(coefs))
        rho = rho * (1.0 + amp * bump / (np.max(np.abs(bump)) + 1e-300))
    return solver1d.State1D(grid=grid, rho=rho, m=rho * v)


def _run_1d(cfg: ExperimentConfig, manifest, out):
    t0 = time.time()
    s = cfg.solver1d
    state = _initial_state_1d(cfg)
    visc = None
    if s["system"] == "nsdrift":
        visc = solver1d.Visc1DParams(mu=s["mu"], lam=s["lam"], eps=s["eps"])
    outputs = np.linspace(0.0, s["T"], s["n_out"])
    traj = solver1d.run_1d(s["system"], state, cfg.geometry, cfg.law,
                           s["T"], outputs, visc=visc, cfl=s["cfl"])
    rows = []
    for k, t in enumerate(traj.times):
        st = traj.states[k]
        for j in range(st.grid.n_cells):
            rows.append((t, st.grid.centers[j], st.rho[j], st.u[j]))
    write_csv(manifest.emit(os.path.join(out, "run1d_fields.csv")),
              ("time", "z", "rho", "u"), rows)
    drift = abs(traj.mass[-1] - traj.mass[0]) / max(abs(traj.mass[0]), 1e-300)
    report = {
        "system": traj.system,
        "times": traj.times,
        "mass": traj.mass,
        "energy": traj.energy,
        "n_steps": traj.n_steps,
        "mass_drift_rel": drift,
    }
    write_json(manifest.emit(os.path.join(out, "run1d_report.json")), report)
    ok = drift <= 1e-12 * max(traj.n_steps, 1)
    manifest.add_job("run-1d", "ok" if ok else "failed", time.time() - t0,
                     f"{traj.n_steps} steps, relative mass drift {drift:.3e}")


def _run_axi(cfg: ExperimentConfig, manifest, out):
    t0 = time.time()
    s = cfg.solver_axi
    eps = s["eps"]
    geom = cfg.geometry
    if geom.kind != "circular":
        manifest.add_job("run-axi", "failed", time.time() - t0,
                         "axisymmetric runs need circular geometry")
        return
    scaled = geometry.ChannelGeometry.circular(
        geom.radius, centerline=geom.centerline, epsilon=eps,
        d_radius=geom.d_radius, d_centerline=geom.d_centerline)
    grid = solver_axi.AxiGrid(scaled, s["n_r"], s["n_z"])
    rho0, v0 = s["rho0"], s["v0"]
    state = solver_axi.initial_axi_state(
        grid,
        lambda r, z: np.asarray(rho0(z), dtype=float) + 0.0 * r,
        lambda r, z: 0.0 * r,
        lambda r, z: np.asarray(v0(z), dtype=float) + 0.0 * r)
    visc = solver_axi.ViscParams3D(mu=s["mu"], eta=s["eta"], lam=s["lam"])
    outputs = np.linspace(0.0, s["T"], s["n_out"])
    bc = "slip" if s["bc"] == "slip" else "noslip_caps"
    traj = solver_axi.run_axi(state, grid, cfg.law, visc, s["T"], outputs,
                              bc_mode=bc, cfl=s["cfl"])
    mon = solver_axi.energy_monitor(traj)
    rows = [(traj.times[k], traj.mass[k], traj.energy[k],
             traj.dissipation[k]) for k in range(len(traj.times))]
    write_csv(manifest.emit(os.path.join(out, "runaxi_series.csv")),
              ("time", "mass", "energy", "dissipation"), rows)
    worst = float(np.max(mon["residual"]))
    scale = max(abs(float(traj.energy[0])), 1.0)
    report = {
        "bc": traj.bc_mode,
        "epsilon": eps,
        "n_steps": traj.n_steps,
        "times": traj.times,
        "energy_monitor": mon,
        "worst_energy_residual": worst,
    }
    write_json(manifest.emit(os.path.join(out, "runaxi_report.json")), report)
    drift = abs(traj.mass[-1] - traj.mass[0]) / max(abs(traj.mass[0]), 1e-300)
    ok = (worst <= s["energy_tol"] * scale
          and drift <= 1e-12 * max(traj.n_steps, 1))
    manifest.add_job(
        "run-axi", "ok" if ok else "failed", time.time() - t0,
        f"{traj.n_steps} steps, worst energy residual {worst:.3e}, "
        f"mass drift {drift:.3e}")


def _run_converge(cfg: ExperimentConfig, mode, manifest, out):
    t0 = time.time()
    if cfg.study is None:
        manifest.add_job("converge", "failed", 0.0,
                         "config has no [study] section")
        return
    if not cfg.study.eps_values:
        manifest.add_job("converge", "ok", time.time() - t0,
                         "empty sweep, nothing to do")
        return
    if cfg.study_mode != mode:
        manifest.add_job(
            "converge", "failed", 0.0,
            f"config study.mode is {cfg.study_mode!r}, command asked for "
            f"{mode!r}")
        return
    report = relent.convergence_study(mode, cfg.study)
    payload = report.to_json_dict()
    write_json(manifest.emit(os.path.join(out, "convergence_report.json")),
               payload)
    eps = [c.eps for c in report.cells]
    sup = [c.sup_E_normalized for c in report.cells]
    write_csv(manifest.emit(os.path.join(out, "convergence_cells.csv")),
              ("epsilon", "lam", "sup_E_normalized", "rei_residual",
               "n_steps"),
              [(c.eps, c.lam, c.sup_E_normalized, c.rei_residual, c.n_steps)
               for c in report.cells])
    x = np.array(eps, dtype=float)
    y = np.array(sup, dtype=float)
    series = [("sup E / |Omega|", x, y)]
    if report.floor > 0:
        # nonpositive leftovers drop out of the plot automatically
        series.append(("floor-subtracted", x, y - report.floor))
    svg_loglog(manifest.emit(os.path.join(out, "convergence.svg")),
               series, f"{mode} relative-energy decay", "epsilon",
               "sup_t E / |Omega|")
    q_min = float(dict(cfg.raw.get("study", {})).get("q_min", 0.8))
    mono = bool(np.all(np.diff(y[::-1]) >= -1e-14))
    manifest.check("monotone-decay", mono,
                   f"sup E decreasing in epsilon: {list(map(float, y))}")
    manifest.check("fitted-rate", report.fitted_q >= q_min,
                   f"fitted q = {report.fitted_q:.3f} (need >= {q_min})")
    manifest.add_job(f"converge-{mode}", "ok", time.time() - t0,
                     f"{len(report.cells)} cells, q = {report.fitted_q:.3f}")


def _run_korn(cfg: ExperimentConfig, manifest, out, jobs):
    t0 = time.time()
    k = cfg.korn
    eps_values = list(k["epsilons"])
    if not eps_values:
        manifest.add_job("korn-sweep", "ok", time.time() - t0,
                         "empty sweep, nothing to do")
        return
    geom = cfg.geometry
    if geom.kind != "circular":
        manifest.add_job("korn-sweep", "failed", 0.0,
                         "korn sweeps need circular geometry")
        return
    if jobs > 1:
        payloads = [(geom.radius, geom.d_radius, eps, k["m_sec"], k["n_z"],
                     k["m_disk"], k["constrained"], 3200)
                    for eps in eps_values]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_korn_row, payloads))
        cp_unit = korn.tangent_poincare_constant(
            fem.disk_section(k["m_disk"]))
        mesh_f = korn._build_channel(
            geom, eps_values[0],
            max(k["m_sec"] + 1, int(round(k["refine"] * k["m_sec"]))),
            max(k["n_z"] + 2, int(round(k["refine"] * k["n_z"]))), "disk")
        _, Kg_f, Ks_f, _ = korn._reduced_channel(mesh_f)
        fine_ko1, _ = korn._pencil_max(Kg_f, Ks_f)
        errbar = abs(fine_ko1 - rows[0]["ko1"]) / rows[0]["ko1"]
        report = {"rows": rows, "poincare_unit_disk": cp_unit,
                  "self_convergence_errbar": errbar,
                  "mesh": f"disk m={k['m_sec']}, n_z={k['n_z']}"}
    else:
        report = korn.sweep_report(
            geom, eps_values, m_sec=k["m_sec"], n_z=k["n_z"],
            refine=k["refine"], m_disk=k["m_disk"],
            with_constrained=k["constrained"])
    rows = report["rows"]
    write_json(manifest.emit(os.path.join(out, "korn_report.json")), report)
    header = ["epsilon", "ko1", "ko2", "poincare", "blowup_lower_bound",
              "blowup_closed_form"]
    if k["constrained"]:
        header.append("constrained_constant")
    write_csv(manifest.emit(os.path.join(out, "korn_sweep.csv")), header,
              [[row[h] for h in header] for row in rows])
    eps = np.array([row["epsilon"] for row in rows])
    ko1 = np.array([row["ko1"] for row in rows])
    ko2 = np.array([row["ko2"] for row in rows])
    series = [("ko1", eps, ko1), ("ko2", eps, ko2),
              ("certified lower bound", eps,
               np.array([row["blowup_lower_bound"] for row in rows]))]
    if k["constrained"]:
        series.append(("kernel-orthogonal", eps,
                       np.array([row["constrained_constant"]
                                 for row in rows])))
    svg_loglog(manifest.emit(os.path.join(out, "korn_sweep.svg")), series,
               "thin-channel constants", "epsilon", "constant")
    if len(rows) >= 2:
        slope, _ = ratefit.loglog_slope(eps, ko1)
        lo, hi = k["slope_band"]
        manifest.check("ko1-slope", lo <= slope <= hi,
                       f"log-log slope = {slope:.3f} (band [{lo}, {hi}])")
        ratio = float(ko2.max() / ko2.min())
        manifest.check("ko2-uniform", ratio <= k["ko2_max_ratio"],
                       f"ko2 max/min = {ratio:.3f} "
                       f"(need <= {k['ko2_max_ratio']})")
    lb_ok = all(row["ko1"] >= row["blowup_lower_bound"] * (1.0 - 1e-9)
                for row in rows)
    manifest.check("certified-lower-bound", lb_ok,
                   "eigensolved ko1 dominates the rotation-field quotient")
    manifest.add_job("korn-sweep", "ok", time.time() - t0,
                     f"{len(rows)} cells, errbar "
                     f"{report['self_convergence_errbar']:.4f}")


def _run_poincare(cfg: ExperimentConfig, manifest, out):
    t0 = time.time()
    p = cfg.poincare
    coarse = korn.tangent_poincare_constant(fem.disk_section(p["m"]))
    fine = korn.tangent_poincare_constant(fem.disk_section(p["refine_m"]))
    drift = abs(fine - coarse) / coarse
    rows = [(1.0, coarse)]
    for s in p["dilations"]:
        if s == 1.0:
            continue
        scaled = korn.tangent_poincare_constant(
            fem.disk_section(p["m"], radius=s))
        rows.append((s, scaled))
    trace = korn.normal_trace_bound(fem.disk_section(p["m"]))
    report = {
        "unit_disk_constant": coarse,
        "refined_constant": fine,
        "refinement_drift": drift,
        "dilation_constants": [{"scale": s, "constant": c} for s, c in rows],
        "normal_trace_bound_unit_circle": trace,
    }
    write_json(manifest.emit(os.path.join(out, "poincare_report.json")),
               report)
    write_csv(manifest.emit(os.path.join(out, "poincare.csv")),
              ("scale", "constant"), rows)
    manifest.check("mesh-stability", drift < p["stability_tol"],
                   f"refinement drift {drift:.4%}")
    dil_ok = all(abs(c - coarse * s * s) <= 1e-8 * max(coarse, 1.0)
                 for s, c in rows)
    manifest.check("dilation-law", dil_ok,
                   "constant scales by the squared dilation factor")
    manifest.check("normal-trace", abs(trace - np.pi) <= 1e-8,
                   f"unit-circle bound {trace:.12f} vs pi")
    manifest.add_job("poincare", "ok", time.time() - t0,
                     f"unit-disk constant {coarse:.6f}")


# ----------------------------------------------------------------------- main

def run(cfg: ExperimentConfig, command: str, out_dir=None,
        jobs=None) -> RunManifest:
    """Dispatch one subcommand pipeline and write its artifacts."""
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    if jobs is None:
        jobs = cfg.jobs
    if jobs is None:
        cells = len(cfg.korn["epsilons"]) if command == "korn-sweep" else 1
        jobs = max(1, min(cells, os.cpu_count() or 1))
    manifest = RunManifest(config_hash=config_hash(cfg.raw),
                           code_version=__version__, command=command,
                           out_dir=out)
    try:
        if command == "geometry-check":
            _run_geometry_check(cfg, manifest, out)
        elif command == "run-1d":
            _run_1d(cfg, manifest, out)
        elif command == "run-axi":
            _run_axi(cfg, manifest, out)
        elif command in ("converge-inviscid", "converge-viscous"):
            _run_converge(cfg, command.split("-", 1)[1], manifest, out)
        elif command == "korn-sweep":
            _run_korn(cfg, manifest, out, jobs)
        elif command == "poincare":
            _run_poincare(cfg, manifest, out)
        else:
            raise ValueError(f"unknown command {command!r}")
    except Exception as exc:  # noqa: BLE001 - job failures land in the manifest
        manifest.add_job(command, "failed", 0.0,
                         f"{type(exc).__name__}: {exc}")
    manifest.write()
    return manifest


def _common_flags(p):
    p.add_argument("--config", required=True, help="TOML experiment file")
    p.add_argument("--out", default=None,
                   help="output directory (NOZZLE_LAB_OUT overrides)")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel sweep cells (default: cells, capped at "
                        "CPU count)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nozzle-lab",
        description="Thin-channel compressible-flow experiments: limit "
                    "solvers, relative-energy sweeps, and inequality "
                    "constants.")
    sub = parser.add_subparsers(dest="command", required=True)

    geo = sub.add_parser("geometry", help="geometry diagnostics")
    geos = geo.add_subparsers(dest="sub", required=True)
    _common_flags(geos.add_parser("check",
                                  help="divergence identity residuals"))

    _common_flags(sub.add_parser("run-1d", help="one nozzle-flow run"))
    _common_flags(sub.add_parser("run-axi",
                                 help="one axisymmetric channel run"))

    conv = sub.add_parser("converge", help="relative-energy rate studies")
    convs = conv.add_subparsers(dest="sub", required=True)
    _common_flags(convs.add_parser("inviscid", help="eps = lam sweep"))
    _common_flags(convs.add_parser("viscous", help="lam = 1 viscous sweep"))

    kor = sub.add_parser("korn", help="inequality-constant experiments")
    kors = kor.add_subparsers(dest="sub", required=True)
    _common_flags(kors.add_parser("sweep", help="thin-channel constants"))

    _common_flags(sub.add_parser("poincare",
                                 help="tangent Poincare diagnostics"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    if command in ("geometry", "converge", "korn"):
        suffix = {"geometry": {"check": "geometry-check"},
                  "converge": {"inviscid": "converge-inviscid",
                               "viscous": "converge-viscous"},
                  "korn": {"sweep": "korn-sweep"}}[command][args.sub]
        command = suffix
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out = os.environ.get("NOZZLE_LAB_OUT") or args.out
    manifest = run(cfg, command, out_dir=out, jobs=args.jobs)
    status = "passed" if manifest.passed else "FAILED"
    print(f"{command}: {status}; artifacts in {manifest.out_dir}")
    for job in manifest.jobs:
        print(f"  [{job['status']}] {job['name']}: {job['detail']}")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
