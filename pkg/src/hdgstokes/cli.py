"""Command-line driver.

Subcommands: solve (one cavity solve, JSON report), study (iteration
counts per preconditioner over a refinement ladder, CSV + JSON),
verify (spectral verification suite, JSON, nonzero exit on failure),
export-matrices (Matrix Market dump of the full and condensed
systems).  Configuration is an INI file; every run is deterministic
for a fixed configuration.

Exit codes: 0 success, 1 failed verification or non-converged solve,
2 configuration errors.
"""

import argparse
import configparser
import csv
import hashlib
import json
import os
import sys

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import assembly, condense, krylov, precond, spaces, spectra
from . import mesh as _mesh


class ConfigError(Exception):
    pass


_DEFAULTS = {
    "shape": "triangle", "nx": 8, "ny": 8, "jitter": 0.0, "seed": 0,
    "domain": (-1.0, -1.0, 1.0, 1.0),
    "degree": 2, "alpha": 24.0,
    "problem": "cavity",
    "method": "minres", "tol": 1e-8, "maxiter": 1000, "restart": 50,
    "pc": "PM", "rbar": "exact", "cycles": 4,
    "levels": 4,
    "verify_nx": 4, "verify_levels": 3,
}


class RunConfig:
    """Validated run configuration with INI loading."""

    def __init__(self, **kw):
        vals = dict(_DEFAULTS)
        vals.update(kw)
        for k, v in vals.items():
            setattr(self, k, v)
        self._validate()

    def _validate(self):
        if self.shape not in ("triangle", "quadrilateral"):
            raise ConfigError("mesh shape must be triangle or quadrilateral")
        if int(self.degree) not in (1, 2, 3):
            raise ConfigError("degree must be 1, 2 or 3")
        if self.pc not in precond.KINDS:
            raise ConfigError("unknown preconditioner %r; expected one of %s"
                              % (self.pc, ", ".join(precond.KINDS)))
        if self.method not in ("minres", "gmres"):
            raise ConfigError("solver method must be minres or gmres")
        if self.rbar not in ("exact", "multigrid"):
            raise ConfigError("rbar mode must be exact or multigrid")
        if self.problem not in ("cavity", "zero"):
            raise ConfigError("problem must be cavity or zero")
        for name in ("nx", "ny", "maxiter", "restart", "cycles", "levels",
                     "verify_nx", "verify_levels"):
            v = int(getattr(self, name))
            if v < 1:
                raise ConfigError("%s must be positive" % name)
            setattr(self, name, v)
        self.degree = int(self.degree)
        for name in ("alpha", "tol", "jitter"):
            setattr(self, name, float(getattr(self, name)))
        self.seed = int(self.seed)

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError("cannot read config file %r" % path)
        kw = {}
        section_keys = {
            "mesh": ("shape", "nx", "ny", "jitter", "seed", "domain"),
            "discretization": ("degree", "alpha"),
            "problem": ("problem",),
            "solver": ("method", "tol", "maxiter", "restart"),
            "preconditioner": ("pc", "rbar", "cycles"),
            "study": ("levels",),
            "verify": ("verify_nx", "verify_levels"),
        }
        for section, keys in section_keys.items():
            if not parser.has_section(section):
                continue
            for key in parser.options(section):
                target = "verify_" + key if section == "verify" \
                    and not key.startswith("verify_") else key
                if target == "kind" or key == "kind":
                    target = "problem" if section == "problem" else "pc"
                if target not in keys:
                    raise ConfigError("unknown option %r in section [%s]"
                                      % (key, section))
                kw[target] = parser.get(section, key)
        if "domain" in kw:
            parts = [float(t) for t in kw["domain"].replace(",", " ").split()]
            if len(parts) != 4:
                raise ConfigError("domain needs four numbers: x0 y0 x1 y1")
            kw["domain"] = tuple(parts)
        return cls(**kw)


def csr_hash(A):
    """Deterministic digest of a CSR matrix."""
    A = A.tocsr().copy()
    A.sum_duplicates()
    A.sort_indices()
    h = hashlib.sha256()
    h.update(np.asarray(A.shape, dtype=np.int64).tobytes())
    h.update(A.indptr.astype(np.int64).tobytes())
    h.update(A.indices.astype(np.int64).tobytes())
    h.update(A.data.tobytes())
    return h.hexdigest()


def _build_mesh(cfg):
    return _mesh.generate(cfg.nx, cfg.ny, cfg.shape, cfg.domain,
                          jitter=cfg.jitter, seed=cfg.seed)


def _mesh_ladder(cfg, nx, ny, levels):
    """Doubling sequence of meshes of the same structured family.

    Regenerating at doubled resolution keeps every level in one cell
    family; uniform refinement of a structured triangulation would mix
    in rotated cells at the first step and perturb the level-0 spectra."""
    return [_mesh.generate(nx << lvl, ny << lvl, cfg.shape, cfg.domain,
                           jitter=cfg.jitter, seed=cfg.seed)
            for lvl in range(levels)]


def _problem(cfg):
    if cfg.problem == "cavity":
        return spaces.lid_driven_cavity(cfg.degree, cfg.alpha)
    return spaces.ProblemSpec(degree=cfg.degree, alpha=cfg.alpha)


def solve_once(cfg, m, pc_kind=None, method=None, tol=None):
    """Assemble, condense, precondition and solve on a given mesh.

    Returns (result dict, condensed system, solver report)."""
    sp_ = spaces.build_spaces(m, cfg.degree)
    prob = _problem(cfg)
    g = spaces.interpolate_boundary(sp_, prob.boundary_velocity)
    flux = assembly.boundary_flux_per_facet(sp_, g)
    scale = max(np.abs(g).max(), 1.0)
    if flux.size and np.abs(flux).max() > 1e-10 * scale:
        raise ConfigError("boundary datum has nonzero normal flux; "
                          "elimination would break mass conservation")

    bs = assembly.build_block_system(sp_, prob)
    cs = condense.condense(bs)
    kind = pc_kind or cfg.pc
    pc = precond.build_preconditioner(cs, bs.M_p, bs.M_s, kind=kind,
                                      rbar_mode=cfg.rbar, cycles=cfg.cycles)
    nullv = cs.nullspace_vector()
    use = method or cfg.method
    use_tol = cfg.tol if tol is None else tol
    if use == "minres":
        rep = krylov.minres(cs.K, cs.rhs, pc.apply, tol=use_tol,
                            maxiter=cfg.maxiter, nullspace=nullv,
                            label=kind)
    else:
        rep = krylov.gmres(cs.K, cs.rhs, pc.apply, tol=use_tol,
                           maxiter=cfg.maxiter, restart=cfg.restart,
                           nullspace=nullv, label=kind)

    ubar, p, pbar = cs.split(rep.x)
    u = condense.recover_velocity(cs, ubar, p, pbar)

    # report pressures with mass-weighted zero mean
    c = spaces.constant_pressure_vector(sp_)
    M = sp.block_diag([bs.M_p, bs.M_s]).tocsr()
    pp = np.concatenate([p, pbar])
    shift = (c @ (M @ pp)) / (c @ (M @ c))
    pp = pp - shift * c
    p, pbar = pp[:sp_.n_p], pp[sp_.n_p:]

    checks = spectra.field_checks(sp_, u)
    result = {
        "mesh": {"cells": m.num_cells, "facets": m.num_facets,
                 "shape": m.cell_type, "h_max": float(m.h.max()),
                 "mesh_ratio": float(m.mesh_ratio)},
        "dofs": {"cell_velocity": sp_.n_u, "cell_pressure": sp_.n_p,
                 "facet_velocity": sp_.n_ubar, "facet_pressure": sp_.n_pbar,
                 "condensed": cs.size},
        "solver": rep.to_dict(),
        "field_checks": checks,
        "pressure_mean_shift": float(shift),
    }
    fields = {"u": u, "ubar": ubar, "p": p, "pbar": pbar}
    return result, fields, cs, rep


def run_solve(cfg, outdir, save_solution=False):
    os.makedirs(outdir, exist_ok=True)
    m = _build_mesh(cfg)
    result, fields, _, rep = solve_once(cfg, m)
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(result, fh, indent=2)
    if save_solution:
        np.savez(os.path.join(outdir, "solution.npz"), **fields)
    _mesh.write_mesh(m, os.path.join(outdir, "mesh.txt"))
    return 0 if rep.converged else 1


def run_study(cfg, outdir):
    """Iteration counts of all four preconditioners over a refinement
    ladder; one CSV row per level."""
    os.makedirs(outdir, exist_ok=True)
    rows = []
    detail = []
    failed = False
    for level, m in enumerate(_mesh_ladder(cfg, cfg.nx, cfg.ny, cfg.levels)):
        sp_ = spaces.build_spaces(m, cfg.degree)
        prob = _problem(cfg)
        bs = assembly.build_block_system(sp_, prob)
        cs = condense.condense(bs)
        nullv = cs.nullspace_vector()
        row = {"level": level, "cells": m.num_cells, "dofs": cs.size}
        for kind in precond.KINDS:
            pc = precond.build_preconditioner(cs, bs.M_p, bs.M_s, kind=kind,
                                              rbar_mode=cfg.rbar,
                                              cycles=cfg.cycles)
            rep = krylov.minres(cs.K, cs.rhs, pc.apply, tol=cfg.tol,
                                maxiter=cfg.maxiter, nullspace=nullv,
                                label=kind)
            row[kind] = rep.iterations if rep.converged else -1
            failed = failed or not rep.converged
            detail.append({"level": level, **rep.to_dict()})
        row["matrix_hash"] = csr_hash(cs.K)
        rows.append(row)

    cols = ["level", "cells", "dofs", *precond.KINDS, "matrix_hash"]
    with open(os.path.join(outdir, "study.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(rows)
    with open(os.path.join(outdir, "study.json"), "w") as fh:
        json.dump({"rows": rows, "reports": detail}, fh, indent=2)
    return 1 if failed else 0


def run_verify(cfg, outdir):
    """Spectral verification ladder; writes verify.json and returns a
    nonzero exit code when any check fails."""
    os.makedirs(outdir, exist_ok=True)
    checks = []

    def record(name, passed, **data):
        checks.append({"name": name, "passed": bool(passed),
                       **spectra.SpectraReport(**data).to_dict()})

    meshes = _mesh_ladder(cfg, cfg.verify_nx, cfg.verify_nx,
                          cfg.verify_levels)
    base = meshes[0]

    prob = _problem(cfg)
    zero = spaces.ProblemSpec(degree=cfg.degree, alpha=cfg.alpha)

    # condensation identity on a 2-cell mesh and the base mesh
    for label, m in (("2cell", _mesh.generate(1, 1, cfg.shape, cfg.domain)),
                     ("base", base)):
        sp_ = spaces.build_spaces(m, cfg.degree)
        bs = assembly.build_block_system(sp_, zero)
        cs = condense.condense(bs)
        res = spectra.condensed_schur_identity(bs, cs)
        record("schur_identity_" + label, res <= 1e-9, residual=res)

    # spectra of the full and condensed pressure Schur complements
    full, cond = [], []
    probes = []
    for m in meshes:
        sp_ = spaces.build_spaces(m, cfg.degree)
        bs = assembly.build_block_system(sp_, zero)
        cs = condense.condense(bs)
        full.append(spectra.schur_spectrum(bs))
        cond.append(spectra.element_block_spectrum(cs, bs.M_p, bs.M_s))
        probes.append((m, sp_, bs, cs))

    def drift_ok(seq):
        ok = all(lo > 0 for lo, _ in seq)
        for (l0, u0), (l1, u1) in zip(seq, seq[1:]):
            ok = ok and abs(l1 - l0) < 0.2 * min(l0, l1)
            ok = ok and abs(u1 - u0) < 0.2 * min(u0, u1)
        return ok

    record("schur_spectrum_drift", drift_ok(full), extremes=full)
    record("element_block_spectrum_drift", drift_ok(cond), extremes=cond)

    # coercivity (unconstrained form), on meshes small enough for a
    # dense eigensolver
    coer = []
    for m, sp_, _, _ in probes:
        if sp_.n_u + sp_.n_ubar > 4000:
            break
        raw = assembly.build_block_system(sp_, zero, bcs=False)
        coer.append(spectra.coercivity_bounds(raw))
    record("coercivity_positive", all(lo > 0 for lo, _ in coer),
           bounds=coer, alpha=cfg.alpha)

    # the detector must flag a known-bad stabilization
    weak = spaces.ProblemSpec(degree=cfg.degree, alpha=0.01)
    sp0 = probes[0][1]
    raw = assembly.build_block_system(sp0, weak, bcs=False)
    lo, hi = spectra.coercivity_bounds(raw)
    record("coercivity_failure_detected", lo <= 0, bounds=[(lo, hi)],
           alpha=0.01)

    # local inf-sup constants
    betas = [spectra.cell_infsup(sp_, cfg.alpha).min()
             for _, sp_, _, _ in probes]
    record("cell_infsup_positive", all(b > 1e-8 for b in betas),
           minima=betas)
    fb = [spectra.facet_infsup(bs) for _, _, bs, _ in probes]
    record("facet_infsup_positive", all(b > 1e-8 for b in fb), values=fb)

    # trace-form equivalence bracket across levels
    lows, highs = [], []
    for _, _, _, cs in probes:
        r = spectra.trace_form_ratios(cs, cfg.alpha)
        lows.append(r.min())
        highs.append(r.max())
    stable = (max(lows) - min(lows) <= 0.25 * min(lows)
              and max(highs) - min(highs) <= 0.25 * min(highs))
    record("trace_form_bracket_stable", stable, lower=lows, upper=highs)

    # one converged solve: conservation and kernel hygiene
    result, fields, cs, rep = solve_once(cfg, base, pc_kind="PM",
                                         method="minres", tol=1e-10)
    fc = result["field_checks"]
    scale = max(fc["velocity_scale"], 1e-300)
    ok = (rep.converged
          and fc["max_divergence"] <= 1e-8 * scale
          and fc["max_normal_jump"] <= 1e-8 * scale
          and rep.nullspace_residual <= 1e-10)
    record("conservation_and_kernel", ok, field_checks=fc,
           nullspace_residual=rep.nullspace_residual,
           converged=rep.converged)

    passed = all(c["passed"] for c in checks)
    with open(os.path.join(outdir, "verify.json"), "w") as fh:
        json.dump({"passed": passed, "checks": checks}, fh, indent=2)
    for c in checks:
        print("%-34s %s" % (c["name"], "pass" if c["passed"] else "FAIL"))
    return 0 if passed else 1


def run_export(cfg, outdir):
    os.makedirs(outdir, exist_ok=True)
    m = _build_mesh(cfg)
    sp_ = spaces.build_spaces(m, cfg.degree)
    prob = _problem(cfg)
    bs = assembly.build_block_system(sp_, prob)
    cs = condense.condense(bs)
    out = {
        "A": bs.velocity_matrix(), "B": bs.divergence_matrix(),
        "M": bs.pressure_mass(), "saddle": bs.saddle_matrix(),
        "condensed": cs.K,
    }
    for name, mat in out.items():
        scipy.io.mmwrite(os.path.join(outdir, name + ".mtx"), mat)
    scipy.io.mmwrite(os.path.join(outdir, "rhs_full.mtx"),
                     bs.full_rhs()[:, None])
    scipy.io.mmwrite(os.path.join(outdir, "rhs_condensed.mtx"),
                     cs.rhs[:, None])
    _mesh.write_mesh(m, os.path.join(outdir, "mesh.txt"))
    with open(os.path.join(outdir, "sizes.json"), "w") as fh:
        json.dump({k: v.shape for k, v in out.items()}, fh, indent=2,
                  default=list)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="hdg-stokes",
        description="Hybridized DG Stokes solver and verification suite")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--out", default="out")
    parser.add_argument("--config", dest="config_global",
                        help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", parents=[common],
                             help="one solve, JSON report")
    p_solve.add_argument("--save-solution", action="store_true")
    sub.add_parser("study", parents=[common],
                   help="preconditioner comparison ladder")
    sub.add_parser("verify", parents=[common],
                   help="spectral verification suite")
    sub.add_parser("export-matrices", parents=[common],
                   help="Matrix Market dump")
    args = parser.parse_args(argv)

    config = args.config or getattr(args, "config_global", None)
    try:
        cfg = RunConfig.from_file(config) if config else RunConfig()
        if args.command == "solve":
            return run_solve(cfg, args.out, args.save_solution)
        if args.command == "study":
            return run_study(cfg, args.out)
        if args.command == "verify":
            return run_verify(cfg, args.out)
        return run_export(cfg, args.out)
    except ConfigError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
