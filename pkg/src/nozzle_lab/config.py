"""Experiment configuration: TOML parsing and whole-file validation.

Loading never stops at the first problem; every violated constraint is
collected so a config can be repaired in one pass.  Hypothesis checks that
the solvers would only hit at run time (bulk viscosity, pressure growth)
are performed here, at load time.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:
    import tomli as _toml

from .geometry import ChannelGeometry
from .relent import StudyConfig
from .thermo import PressureLaw


class ConfigError(ValueError):
    """Carries the full list of validation failures."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


# ------------------------------------------------------------------ profiles

_SCALAR_KINDS = ("constant", "linear", "cosine", "sinsq")


@dataclass(frozen=True)
class ScalarProfile:
    """Named z-profile with an analytic derivative; picklable by design
    so configured geometries can cross process boundaries.

    constant: a
    linear:   a + b z
    cosine:   a + b cos(k pi z)
    sinsq:    a + b sin^2(pi z) sin(k pi z)
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    k: int = 1

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "constant":
            return self.a + 0.0 * z
        if self.kind == "linear":
            return self.a + self.b * z
        if self.kind == "cosine":
            return self.a + self.b * np.cos(self.k * np.pi * z)
        if self.kind == "sinsq":
            s = np.sin(np.pi * z)
            return self.a + self.b * s * s * np.sin(self.k * np.pi * z)
        raise ValueError(f"unknown profile kind {self.kind!r}")

    def deriv(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "constant":
            return 0.0 * z
        if self.kind == "linear":
            return self.b + 0.0 * z
        if self.kind == "cosine":
            return -self.b * self.k * np.pi * np.sin(self.k * np.pi * z)
        if self.kind == "sinsq":
            kp = self.k * np.pi
            s = np.sin(np.pi * z)
            return self.b * (np.pi * np.sin(2.0 * np.pi * z) * np.sin(kp * z)
                             + kp * s * s * np.cos(kp * z))
        raise ValueError(f"unknown profile kind {self.kind!r}")


@dataclass(frozen=True)
class LinePath:
    """Straight centerline c(z) = (ax, ay) + z (bx, by)."""

    ax: float = 0.0
    ay: float = 0.0
    bx: float = 0.0
    by: float = 0.0

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.stack([self.ax + self.bx * z, self.ay + self.by * z],
                        axis=-1)

    def deriv(self, z):
        z = np.asarray(z, dtype=float)
        one = np.ones_like(z)
        return np.stack([self.bx * one, self.by * one], axis=-1)


def _parse_profile(table, where, errors, default=None):
    if table is None:
        return default
    if not isinstance(table, dict):
        errors.append(f"{where}: expected a table with a 'kind' key")
        return default
    kind = table.get("kind")
    if kind not in _SCALAR_KINDS:
        errors.append(
            f"{where}.kind: expected one of {_SCALAR_KINDS}, got {kind!r}")
        return default
    vals = {}
    for key in ("a", "b", "k"):
        if key in table:
            v = table[key]
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                errors.append(f"{where}.{key}: expected a number, got {v!r}")
                return default
            vals[key] = v
    extra = set(table) - {"kind", "a", "b", "k"}
    if extra:
        errors.append(f"{where}: unknown keys {sorted(extra)}")
    return ScalarProfile(kind=kind, a=float(vals.get("a", 0.0)),
                         b=float(vals.get("b", 0.0)),
                         k=int(vals.get("k", 1)))


# ------------------------------------------------------------- section tables

def boundary_table_from_csv(path):
    """Boundary table from a per-slice polygon CSV (columns
    z, vertex_index, x, y).

    The z values must form an equispaced grid from 0 to 1 and every slice
    must carry the same vertex count, matching the tabulated-geometry
    contract.
    """
    slices = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        need = {"z", "vertex_index", "x", "y"}
        if not need <= cols:
            raise ValueError(
                f"{path}: need columns z,vertex_index,x,y, found "
                f"{sorted(cols)}")
        for rec in reader:
            z = float(rec["z"])
            slices.setdefault(z, []).append(
                (int(rec["vertex_index"]), float(rec["x"]), float(rec["y"])))
    if len(slices) < 3:
        raise ValueError(f"{path}: need at least 3 slices")
    zs = np.array(sorted(slices))
    dz = np.diff(zs)
    if abs(zs[0]) > 1e-12 or abs(zs[-1] - 1.0) > 1e-12 or np.ptp(dz) > 1e-9:
        raise ValueError(f"{path}: z must be equispaced from 0 to 1")
    counts = {len(v) for v in slices.values()}
    if len(counts) != 1:
        raise ValueError(f"{path}: all slices need the same vertex count")
    table = []
    for z in zs:
        verts = sorted(slices[z])
        idx = [v[0] for v in verts]
        if idx != list(range(len(idx))):
            raise ValueError(
                f"{path}: slice z={z} vertex_index must run 0..m-1")
        table.append([(x, y) for _, x, y in verts])
    return np.asarray(table, dtype=float)


# ----------------------------------------------------------------- the config

_TOP_KEYS = {"out_dir", "seed", "jobs", "geometry", "pressure", "solver1d",
             "solver_axi", "study", "korn", "poincare"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``raw`` keeps the parsed TOML so orchestration can hash it and ship it
    across process boundaries without re-reading the file.
    """

    geometry: ChannelGeometry
    law: PressureLaw
    solver1d: dict
    solver_axi: dict
    study: Optional[StudyConfig]
    study_mode: Optional[str]
    korn: dict
    poincare: dict
    out_dir: str
    seed: int
    jobs: Optional[int]
    raw: dict = field(repr=False, default_factory=dict)


def _num(table, key, where, errors, default, positive=False, integer=False):
    v = table.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"{where}.{key}: expected a number, got {v!r}")
        return default
    if integer and int(v) != v:
        errors.append(f"{where}.{key}: expected an integer, got {v!r}")
        return default
    if positive and not v > 0:
        errors.append(f"{where}.{key}: must be positive, got {v!r}")
        return default
    return int(v) if integer else float(v)


def _positive_list(table, key, where, errors, default):
    vals = table.get(key, default)
    if not isinstance(vals, (list, tuple)):
        errors.append(f"{where}.{key}: expected a list of numbers")
        return list(default)
    out = []
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0:
            errors.append(f"{where}.{key}: entries must be positive numbers, "
                          f"got {v!r}")
            return list(default)
        out.append(float(v))
    return out


def _build_geometry(sec, errors, base_dir):
    errs = []
    geom = _build_geometry_inner(sec, errs, base_dir)
    errors.extend(errs)
    return geom


def _build_geometry_inner(sec, errs, base_dir):
    kind = sec.get("kind", "circular")
    n_samples = _num(sec, "n_z_samples", "geometry", errs, 64,
                     positive=True, integer=True) or 64
    if kind == "circular":
        radius = _parse_profile(sec.get("radius"), "geometry.radius", errs,
                                default=ScalarProfile("constant", a=1.0))
        center = sec.get("centerline")
        path = None
        if center is not None:
            if not isinstance(center, dict):
                errs.append("geometry.centerline: expected a table")
            else:
                path = LinePath(
                    ax=float(center.get("ax", 0.0)),
                    ay=float(center.get("ay", 0.0)),
                    bx=float(center.get("bx", 0.0)),
                    by=float(center.get("by", 0.0)))
        if radius is not None:
            sample = radius(np.linspace(0.0, 1.0, 33))
            if not np.all(np.asarray(sample) > 0):
                errs.append("geometry.radius: profile must stay strictly "
                            "positive on [0, 1]")
                return None
        if errs:
            return None
        return ChannelGeometry.circular(
            radius, centerline=path, n_z_samples=n_samples,
            d_radius=radius.deriv,
            d_centerline=path.deriv if path is not None else None)
    if kind == "tabulated":
        fname = sec.get("file")
        if not isinstance(fname, str) or not fname:
            errs.append("geometry.file: tabulated geometry needs a CSV path")
            return None
        path = fname if os.path.isabs(fname) else os.path.join(base_dir, fname)
        if not os.path.exists(path):
            errs.append(f"geometry.file: {path} does not exist")
            return None
        try:
            table = boundary_table_from_csv(path)
            return ChannelGeometry.tabulated(table)
        except ValueError as exc:
            errs.append(f"geometry.file: {exc}")
            return None
    errs.append(f"geometry.kind: expected 'circular' or 'tabulated', "
                f"got {kind!r}")
    return None


def _build_law(sec, errors):
    gamma = _num(sec, "gamma", "pressure", errors, 2.0)
    kappa = _num(sec, "kappa", "pressure", errors, 1.0)
    ok = True
    if gamma is not None and not gamma > 1.5:
        errors.append(
            f"pressure.gamma: the pressure growth hypothesis requires "
            f"gamma > 3/2, got {gamma}")
        ok = False
    if kappa is not None and not kappa > 0:
        errors.append(
            f"pressure.kappa: the coercive pressure scaling requires "
            f"kappa > 0, got {kappa}")
        ok = False
    if not ok or gamma is None or kappa is None:
        return None
    return PressureLaw(gamma=gamma, kappa=kappa)


_MODES = ("inviscid", "viscous")


def _build_study(sec, errors, geometry, law):
    errs = []
    mode = sec.get("mode")
    if mode not in _MODES:
        errors.append(f"study.mode: expected one of {_MODES}, got {mode!r}")
        return None, None
    eps = _positive_list(sec, "epsilons", "study", errs,
                         (0.2, 0.1, 0.05, 0.025))
    lams = sec.get("lambdas")
    lam_values = None
    if lams is not None:
        lam_list = _positive_list(sec, "lambdas", "study", errs, ())
        if lam_list and len(lam_list) != len(eps):
            errs.append("study.lambdas: must match epsilons in length")
        lam_values = tuple(lam_list) if lam_list else None
    T = _num(sec, "T", "study", errs, 0.25, positive=True)
    mu = _num(sec, "mu", "study", errs,
              1.0 if mode == "viscous" else 1e-2)
    eta = _num(sec, "eta", "study", errs,
               1.0 if mode == "viscous" else 0.0)
    if mode == "viscous":
        if eta is not None and not eta > 0:
            errs.append(
                "study.eta: the viscous limit requires strictly positive "
                f"bulk viscosity (eta > 0), got {eta}")
        if mu is not None and not mu > 0:
            errs.append(
                "study.mu: the viscous limit requires strictly positive "
                f"shear viscosity (mu > 0), got {mu}")
    n_r = _num(sec, "n_r", "study", errs, 8, positive=True, integer=True)
    if n_r is not None and n_r < 8:
        errs.append("study.n_r: the radial grid needs n_r >= 8")
    n_z = _num(sec, "n_z", "study", errs, 48, positive=True, integer=True)
    if n_z is not None and n_z < 32:
        errs.append("study.n_z: the axial grid needs n_z >= 32")
    n_out = _num(sec, "n_out", "study", errs, 9, positive=True, integer=True)
    floor_refine = _num(sec, "floor_refine", "study", errs, 2.0,
                        positive=True)
    subtract = sec.get("subtract_floor", True)
    if not isinstance(subtract, bool):
        errs.append("study.subtract_floor: expected a boolean")
        subtract = True
    rho0 = _parse_profile(sec.get("rho0"), "study.rho0", errs,
                          default=ScalarProfile("cosine", a=1.0, b=0.1, k=2))
    v0 = _parse_profile(sec.get("v0"), "study.v0", errs,
                        default=ScalarProfile("sinsq", b=0.05, k=3))
    known = {"mode", "epsilons", "lambdas", "T", "mu", "eta", "n_r", "n_z",
             "n_out", "floor_refine", "subtract_floor", "rho0", "v0",
             "q_min"}
    extra = set(sec) - known
    if extra:
        errs.append(f"study: unknown keys {sorted(extra)}")
    if geometry is not None and geometry.kind != "circular":
        errs.append("study: convergence sweeps need circular geometry")
    errors.extend(errs)
    if errs or geometry is None or law is None:
        return None, mode
    cfg = StudyConfig(
        radius=geometry.radius, rho0=rho0, v0=v0, law=law,
        radius_deriv=geometry.d_radius, mu=mu, eta=eta, T=T,
        eps_values=tuple(eps), lam_values=lam_values,
        n_r=n_r, n_z=n_z, n_out=n_out,
        subtract_floor=subtract, floor_refine=floor_refine)
    return cfg, mode


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment file.

    Raises ConfigError carrying every violated constraint, not only the
    first; parse failures keep tomli's line and column report.
    """
    with open(path, "rb") as fh:
        try:
            raw = _toml.load(fh)
        except _toml.TOMLDecodeError as exc:
            raise ConfigError([f"{path}: {exc}"]) from exc

    errors = []
    extra = set(raw) - _TOP_KEYS
    if extra:
        errors.append(f"unknown top-level keys {sorted(extra)}")

    base_dir = os.path.dirname(os.path.abspath(path))
    geometry = _build_geometry(raw.get("geometry", {}), errors, base_dir)
    law = _build_law(raw.get("pressure", {}), errors)

    sec1 = dict(raw.get("solver1d", {}))
    solver1d = {
        "system": sec1.get("system", "euler"),
        "n_cells": _num(sec1, "n_cells", "solver1d", errors, 256,
                        positive=True, integer=True),
        "cfl": _num(sec1, "cfl", "solver1d", errors, 0.4, positive=True),
        "T": _num(sec1, "T", "solver1d", errors, 0.25, positive=True),
        "n_out": _num(sec1, "n_out", "solver1d", errors, 5,
                      positive=True, integer=True),
        "mu": _num(sec1, "mu", "solver1d", errors, 1e-2),
        "lam": _num(sec1, "lam", "solver1d", errors, 1.0, positive=True),
        "eps": _num(sec1, "eps", "solver1d", errors, 0.1, positive=True),
        "perturb": _num(sec1, "perturb", "solver1d", errors, 0.0),
        "rho0": _parse_profile(sec1.get("rho0"), "solver1d.rho0", errors,
                               default=ScalarProfile("cosine", a=1.0, b=0.1,
                                                     k=2)),
        "v0": _parse_profile(sec1.get("v0"), "solver1d.v0", errors,
                             default=ScalarProfile("sinsq", b=0.05, k=3)),
    }
    if solver1d["system"] not in ("euler", "nsdrift"):
        errors.append(f"solver1d.system: expected 'euler' or 'nsdrift', "
                      f"got {solver1d['system']!r}")
    if solver1d["system"] == "nsdrift" and solver1d["mu"] is not None \
            and not solver1d["mu"] > 0:
        errors.append("solver1d.mu: the drift system requires mu > 0")
    if solver1d["perturb"] is not None and solver1d["perturb"] < 0:
        errors.append("solver1d.perturb: must be nonnegative")

    seca = dict(raw.get("solver_axi", {}))
    solver_axi = {
        "n_r": _num(seca, "n_r", "solver_axi", errors, 8,
                    positive=True, integer=True),
        "n_z": _num(seca, "n_z", "solver_axi", errors, 32,
                    positive=True, integer=True),
        "cfl": _num(seca, "cfl", "solver_axi", errors, 0.4, positive=True),
        "mu": _num(seca, "mu", "solver_axi", errors, 1.0),
        "eta": _num(seca, "eta", "solver_axi", errors, 0.0),
        "lam": _num(seca, "lam", "solver_axi", errors, 1.0, positive=True),
        "eps": _num(seca, "eps", "solver_axi", errors, 0.2, positive=True),
        "bc": seca.get("bc", "slip"),
        "T": _num(seca, "T", "solver_axi", errors, 0.05, positive=True),
        "n_out": _num(seca, "n_out", "solver_axi", errors, 5,
                      positive=True, integer=True),
        "energy_tol": _num(seca, "energy_tol", "solver_axi", errors, 1e-8,
                           positive=True),
        "rho0": _parse_profile(seca.get("rho0"), "solver_axi.rho0", errors,
                               default=ScalarProfile("cosine", a=1.0, b=0.1,
                                                     k=2)),
        "v0": _parse_profile(seca.get("v0"), "solver_axi.v0", errors,
                             default=ScalarProfile("sinsq", b=0.05, k=3)),
    }
    if solver_axi["bc"] not in ("slip", "noslip"):
        errors.append(f"solver_axi.bc: expected 'slip' or 'noslip', "
                      f"got {solver_axi['bc']!r}")
    if solver_axi["bc"] == "noslip" and solver_axi["eta"] is not None \
            and not solver_axi["eta"] > 0:
        errors.append(
            "solver_axi.eta: no-slip caps require strictly positive bulk "
            f"viscosity (eta > 0), got {solver_axi['eta']}")
    if solver_axi["mu"] is not None and not solver_axi["mu"] > 0:
        errors.append("solver_axi.mu: the viscous stress needs mu > 0 "
                      "(drive the inviscid limit with lam instead)")
    if solver_axi["eta"] is not None and solver_axi["eta"] < 0:
        errors.append("solver_axi.eta: must be nonnegative")
    if solver_axi["n_r"] is not None and solver_axi["n_r"] < 8:
        errors.append("solver_axi.n_r: the radial grid needs n_r >= 8")
    if solver_axi["n_z"] is not None and solver_axi["n_z"] < 32:
        errors.append("solver_axi.n_z: the axial grid needs n_z >= 32")

    study_cfg, study_mode = (None, None)
    if "study" in raw:
        study_cfg, study_mode = _build_study(dict(raw["study"]), errors,
                                             geometry, law)

    seck = dict(raw.get("korn", {}))
    korn = {
        "epsilons": _positive_list(seck, "epsilons", "korn", errors,
                                   (0.4, 0.2, 0.1)),
        "m_sec": _num(seck, "m_sec", "korn", errors, 8,
                      positive=True, integer=True),
        "n_z": _num(seck, "n_z", "korn", errors, 32,
                    positive=True, integer=True),
        "refine": _num(seck, "refine", "korn", errors, 1.25, positive=True),
        "m_disk": _num(seck, "m_disk", "korn", errors, 12,
                       positive=True, integer=True),
        "constrained": seck.get("constrained", True),
        "slope_band": seck.get("slope_band", [-2.3, -1.7]),
        "ko2_max_ratio": _num(seck, "ko2_max_ratio", "korn", errors, 3.0,
                              positive=True),
    }
    if not isinstance(korn["constrained"], bool):
        errors.append("korn.constrained: expected a boolean")
        korn["constrained"] = True
    band = korn["slope_band"]
    if (not isinstance(band, (list, tuple)) or len(band) != 2
            or not all(isinstance(v, (int, float)) for v in band)
            or not band[0] < band[1]):
        errors.append("korn.slope_band: expected [lo, hi] with lo < hi")
        korn["slope_band"] = [-2.3, -1.7]

    secp = dict(raw.get("poincare", {}))
    poincare = {
        "m": _num(secp, "m", "poincare", errors, 12,
                  positive=True, integer=True),
        "refine_m": _num(secp, "refine_m", "poincare", errors, 15,
                         positive=True, integer=True),
        "dilations": _positive_list(secp, "dilations", "poincare", errors,
                                    (1.0, 0.5)),
        "stability_tol": _num(secp, "stability_tol", "poincare", errors,
                              0.05, positive=True),
    }

    out_dir = raw.get("out_dir", "nozzle-lab-out")
    if not isinstance(out_dir, str) or not out_dir:
        errors.append("out_dir: expected a nonempty string")
        out_dir = "nozzle-lab-out"
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        errors.append("seed: expected a nonnegative integer")
        seed = 0
    jobs = raw.get("jobs")
    if jobs is not None and (isinstance(jobs, bool)
                             or not isinstance(jobs, int) or jobs < 1):
        errors.append("jobs: expected a positive integer")
        jobs = None

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        geometry=geometry, law=law, solver1d=solver1d, solver_axi=solver_axi,
        study=study_cfg, study_mode=study_mode, korn=korn, poincare=poincare,
        out_dir=out_dir, seed=seed, jobs=jobs, raw=raw)
