"""Command-line entry point: configuration in, CSV artifacts out.

Commands: audit, drift, cell, effective, solve, homogenize, constants.
Exit codes: 0 success, 2 validation or audit failure, 3 numerical failure,
4 I/O failure.  Audit-gated commands refuse to run on failed audits unless
--force is given.  --threads is accepted for interface stability; results
never depend on it (the numerics are deterministic single-process numpy).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import csvio
from .cell import CellConfig, CellParams, vanishing_discount_sweep
from .config import (ConfigError, RunConfig, build_coefficient, build_hamiltonian,
                     build_kernel, build_u0, parse_config)
from .effective import (audit_properties, fill_from_formula, save_table, tabulate)
from .grid import GridFunction
from .hamiltonians import (audit_periodicity, audit_regularity,
                           audit_superlinearity, coercivity_constants,
                           growth_bound)
from .homogenize import (ProblemFamily, SweepConfig, effective_source_from_formula,
                         effective_source_from_table, run_sweep)
from .kernels import audit_ellipticity, drift_vector, periodized_weights
from .parabolic import (NumericalFailure, ParabolicProblem, SolverConfig,
                        holder_exponent_alpha0, solve)

EXIT_OK = 0
EXIT_AUDIT = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _out_path(args, cfg: RunConfig, suffix: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, f"{cfg['output.prefix']}_{suffix}")


def _run_audits(cfg: RunConfig, quick: bool = True) -> tuple:
    kernel = build_kernel(cfg)
    a = build_coefficient(cfg)
    ham = build_hamiltonian(cfg)
    budget = 20 ** 3 if quick else 64 ** 3
    ell = audit_ellipticity(a, kernel, nx=64 if quick else 512,
                            ny=256 if quick else 512)
    sup = audit_superlinearity(ham, sample_budget=budget)
    reg = audit_regularity(ham, sample_budget=budget)
    return ell, sup, reg


def _gate(cfg: RunConfig, force: bool) -> int:
    ell, sup, reg = _run_audits(cfg, quick=True)
    ok = ell.passed and sup.passed and reg.passed
    if not ok:
        for name, rep in (("ellipticity", ell), ("superlinearity", sup),
                          ("regularity", reg)):
            if not rep.passed:
                print(f"audit failed: {name}: {rep}", file=sys.stderr)
        if not force:
            print("refusing to run on failed audits (use --force to override)",
                  file=sys.stderr)
            return EXIT_AUDIT
        print("continuing despite failed audits (--force)", file=sys.stderr)
    return EXIT_OK


def _drift_for(cfg: RunConfig) -> float:
    kernel = build_kernel(cfg)
    if kernel.sigma != 1.0 or kernel.symmetric:
        return 0.0
    return drift_vector(kernel, tol=1e-8).b


def cmd_audit(args, cfg: RunConfig) -> int:
    ell, sup, reg = _run_audits(cfg, quick=False)
    ham = build_hamiltonian(cfg)
    grow = growth_bound(ham)
    period_gap = audit_periodicity(ham)
    periodic_ok = period_gap <= 1e-10
    print(f"ellipticity: {'PASS' if ell.passed else 'FAIL'} a0={ell.a0:.6g} "
          f"witness={ell.witness} messages={list(ell.messages)}")
    print(f"superlinearity: {'PASS' if sup.passed else 'FAIL'} "
          f"worst_slack={sup.worst_slack:.6g} witness={sup.witness}")
    print(f"regularity: {'PASS' if reg.passed else 'FAIL'} measured_L={reg.measured_L:.6g} "
          f"(L_x={reg.L_x:.4g} L_y={reg.L_y:.4g} L_p={reg.L_p:.4g})")
    print(f"periodicity: {'PASS' if periodic_ok else 'FAIL'} "
          f"sup |H(x, y+1, p) - H(x, y, p)| = {period_gap:.3g}")
    print(f"growth: |H| <= {grow:.6g} (1 + |p|^m) on the sample")
    ok = ell.passed and sup.passed and reg.passed and periodic_ok
    return EXIT_OK if ok else EXIT_AUDIT


def cmd_drift(args, cfg: RunConfig) -> int:
    kernel = build_kernel(cfg)
    if kernel.sigma != 1.0:
        print("drift extraction requires kernel.sigma = 1", file=sys.stderr)
        return EXIT_AUDIT
    dv = drift_vector(kernel, tol=1e-8)
    print(f"{dv.b:.17e}")
    if not dv.converged:
        print(f"warning: truncation limit not converged (residual {dv.residual:.3e})",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cell_params(cfg: RunConfig, p: float = None, l: float = None) -> CellParams:
    return CellParams(
        x=cfg["cell.x"],
        p=cfg["cell.p"] if p is None else p,
        l=cfg["cell.l"] if l is None else l,
        sigma=cfg["kernel.sigma"],
        a=build_coefficient(cfg),
        ham=build_hamiltonian(cfg),
        drift_b=_drift_for(cfg),
    )


def _cell_config(cfg: RunConfig) -> CellConfig:
    return CellConfig(n=cfg["cell.n"], tol=cfg["cell.tol"],
                      max_steps=cfg["cell.max_steps"], flux=cfg["grid.flux"],
                      cfl_safety=cfg["grid.cfl_safety"],
                      image_budget=cfg["kernel.image_budget"])


def cmd_cell(args, cfg: RunConfig) -> int:
    code = _gate(cfg, args.force)
    if code:
        return code
    params = _cell_params(cfg)
    sol = vanishing_discount_sweep(params, cfg["cell.deltas"], _cell_config(cfg))
    path = _out_path(args, cfg, "cell.csv")
    csvio.emit_csv(path, ["x", "p", "l", "sigma", "H_bar", "spread", "osc", "lip",
                          "flap_sup"],
                   csvio.cell_report_rows(params, sol), cfg.header_lines())
    print(f"regime {params.regime}: H_bar = {sol.H_bar:.10g} +/- {sol.spread / 2:.3g} "
          f"(spread {sol.spread:.3g}), corrector osc {sol.regularity.osc:.4g}, "
          f"report -> {path}")
    if not sol.converged:
        print("steady state not reached within the step budget; residual history:",
              file=sys.stderr)
        for d, res, steps in sol.residuals:
            print(f"  delta={d:g}: residual={res:.3e} after {steps} steps",
                  file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _discount_fill(cfg: RunConfig):
    ccfg = _cell_config(cfg)
    deltas = cfg["cell.deltas"]

    def fill(x, p, l):
        params = CellParams(x=x, p=p, l=l, sigma=cfg["kernel.sigma"],
                            a=build_coefficient(cfg), ham=build_hamiltonian(cfg),
                            drift_b=_drift_for(cfg))
        sol = vanishing_discount_sweep(params, deltas, ccfg)
        if not sol.converged:
            raise NumericalFailure("cell solve did not reach steady state")
        return sol.H_bar, sol.spread, "discount"

    return fill


def _build_table(cfg: RunConfig):
    sigma = cfg["kernel.sigma"]
    if sigma > 1.0:
        fill = fill_from_formula(build_coefficient(cfg), build_hamiltonian(cfg))
    else:
        fill = _discount_fill(cfg)
    return tabulate(fill, cfg["cell.table_x"], cfg["cell.table_p"],
                    cfg["cell.table_l"], sigma=sigma,
                    meta={"model": cfg["hamiltonian.b"] + "|" + cfg["hamiltonian.f"],
                          "m": str(cfg["hamiltonian.m"])})


def cmd_effective(args, cfg: RunConfig) -> int:
    code = _gate(cfg, args.force)
    if code:
        return code
    table = _build_table(cfg)
    ham = build_hamiltonian(cfg)
    if ham.power_form is not None:
        xs = np.arange(256) / 256
        b0_claim = float(np.min(ham.power_form.b(xs[:, None], xs[None, :])))
        C_claim = float(np.max(np.abs(ham.power_form.f(xs[:, None], xs[None, :]))))
    else:
        b0_claim, C_claim = ham.b0, ham.C0
    a_vals = build_coefficient(cfg)(np.zeros(512), np.arange(512) / 512)
    audit = audit_properties(table, b0=b0_claim, C=C_claim,
                             a_sup=float(np.max(np.abs(a_vals))), m=ham.m)
    path = _out_path(args, cfg, "effective.csv")
    try:
        save_table(table, path, config_lines=cfg.header_lines())
    except OSError as exc:
        print(f"cannot write table: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"table {table.values.shape} saved -> {path}")
    print(f"audit: monotone violations {audit.monotone_violations}, "
          f"coercivity margin {audit.coercivity_margin:.4g}, "
          f"continuity C_l={audit.C_l:.4g} C_x={audit.C_x:.4g} C_p={audit.C_p:.4g}")
    if np.any(table.provenance == "failed"):
        print("some nodes failed to converge (marked 'failed')", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK if audit.passed else EXIT_AUDIT


def cmd_solve(args, cfg: RunConfig) -> int:
    code = _gate(cfg, args.force)
    if code:
        return code
    kernel = build_kernel(cfg)
    n = cfg["grid.n"]
    u0 = GridFunction.from_callable(build_u0(cfg), n)
    table = periodized_weights(kernel, n, image_budget=cfg["kernel.image_budget"])
    ham = build_hamiltonian(cfg)
    if cfg["grid.kind"] == "oscillating":
        problem = ParabolicProblem(kind="oscillating", u0=u0, T=cfg["grid.T"],
                                   kernel=kernel, table=table, eps=cfg["grid.eps"],
                                   a=build_coefficient(cfg), ham=ham)
    else:
        if kernel.sigma > 1.0:
            src = effective_source_from_formula(build_coefficient(cfg), ham)
        else:
            from .effective import load_table
            path = cfg["grid.table_csv"]
            if not path:
                print("effective solves below order one need grid.table_csv",
                      file=sys.stderr)
                return EXIT_AUDIT
            try:
                src = effective_source_from_table(load_table(path))
            except OSError as exc:
                print(f"cannot read table: {exc}", file=sys.stderr)
                return EXIT_IO
        problem = ParabolicProblem(kind="effective", u0=u0, T=cfg["grid.T"],
                                   kernel=kernel, table=table,
                                   hbar_value=src.value, hbar_l_slope=src.l_slope,
                                   hbar_power_coeff=src.power_coeff,
                                   hbar_power_m=src.power_m)
    theta = cfg["grid.theta"]
    if (theta < 0 and cfg["grid.kind"] == "effective"
            and getattr(src, "theta", None) is not None):
        theta = src.theta
    grange = cfg["grid.gradient_range"]
    scfg = SolverConfig(cfl_safety=cfg["grid.cfl_safety"], flux=cfg["grid.flux"],
                        theta=None if theta < 0 else theta,
                        gradient_range=None if grange < 0 else grange,
                        snapshots=cfg["grid.snapshots"])
    try:
        traj = solve(problem, scfg)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    tpath = _out_path(args, cfg, "trajectory.csv")
    spath = _out_path(args, cfg, "summary.csv")
    csvio.emit_csv(tpath, ["t", "x", "u"], csvio.trajectory_rows(traj),
                   cfg.header_lines())
    csvio.emit_csv(spath, ["t", "sup_norm", "initial_layer"],
                   csvio.trajectory_summary_rows(traj, u0), cfg.header_lines())
    bound = u0.sup_norm() + ham.h_at_zero_sup() * cfg["grid.T"] + 1e-8
    print(f"final sup norm {traj.sup_norm_track[-1]:.6g} "
          f"(a-priori bound {bound:.6g}), dt = {traj.dt:.3e}")
    print(f"trajectory -> {tpath}\nsummary -> {spath}")
    return EXIT_OK


def cmd_homogenize(args, cfg: RunConfig) -> int:
    code = _gate(cfg, args.force)
    if code:
        return code
    kernel = build_kernel(cfg)
    ham = build_hamiltonian(cfg)
    a = build_coefficient(cfg)
    sigma = kernel.sigma
    psi_provider = None
    if sigma > 1.0:
        src = effective_source_from_formula(a, ham)
        from .cell import spectral_cell_above_one
        from .effective import explicit_formula_above_one

        def psi_provider(x, p, l, _n=cfg["cell.n"]):
            ys = np.arange(_n) / _n
            a_vals = np.asarray(a(np.full(_n, x), ys), dtype=float)
            hb = explicit_formula_above_one(a, ham, x, p, l, nquad=_n)
            h_vals = np.asarray(ham.eval(np.full(_n, x), ys, np.full(_n, p)), dtype=float)
            f = l + (hb - h_vals) / a_vals
            return spectral_cell_above_one(sigma, GridFunction(f - np.mean(f)))
    else:
        table = _build_table(cfg)
        tpath = _out_path(args, cfg, "effective.csv")
        save_table(table, tpath, config_lines=cfg.header_lines())
        print(f"effective table -> {tpath}")
        src = effective_source_from_table(table)
    family = ProblemFamily(a=a, ham=ham, kernel=kernel, u0_func=build_u0(cfg),
                           T=cfg["sweep.T"], effective=src)
    n_fixed = cfg["sweep.n_fixed"]
    scfg = SweepConfig(n_per_k=cfg["sweep.n_per_k"],
                       n_fixed=None if n_fixed == 0 else n_fixed,
                       snapshots=cfg["sweep.snapshots"],
                       cfl_safety=cfg["grid.cfl_safety"], flux=cfg["grid.flux"],
                       image_budget=cfg["kernel.image_budget"])
    try:
        report = run_sweep(family, cfg["sweep.eps_list"], scfg,
                           psi_provider=psi_provider)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    path = _out_path(args, cfg, "sweep.csv")
    csvio.emit_csv(path, ["eps", "n", "dt", "error", "rate", "corrector_residual",
                          "seconds"], csvio.sweep_rows(report), cfg.header_lines())
    snap_path = _out_path(args, cfg, "sweep_snapshots.csv")
    csvio.emit_csv(snap_path, ["eps", "x", "u"], csvio.sweep_snapshot_rows(report),
                   cfg.header_lines())
    for i, eps in enumerate(report.eps_list):
        print(f"eps = {eps:.6g}: n = {report.ns[i]}, error = {report.errors[i]:.6g}")
    print(f"sweep -> {path}\nsnapshots -> {snap_path}")
    return EXIT_OK


def cmd_constants(args, cfg: RunConfig) -> int:
    ham = build_hamiltonian(cfg)
    sigma = cfg["kernel.sigma"]
    m = ham.m
    n_struct = cfg["cell.structure_n"]
    grow = growth_bound(ham)
    cert0 = coercivity_constants(m, ham.b0, ham.C0, grow, 0.0)
    xs = np.arange(64) / 64
    ps = np.linspace(-2.0, 2.0, 81)
    X, Y, P = np.meshgrid(xs, xs, ps, indexing="ij")
    k_small = float(np.max(cert0.C_tilde * (1.0 + np.abs(P) ** m) - ham.eval(X, Y, P)))
    cert = coercivity_constants(m, ham.b0, ham.C0, grow, max(k_small, 0.0))
    if sigma <= 1.0:
        alpha0 = holder_exponent_alpha0(n_struct, sigma, m)
        print(f"alpha0({n_struct:g}, {sigma:g}, {m:g}) = {alpha0:.10f}")
    else:
        print(f"threshold exponent applies to orders <= 1 (sigma = {sigma:g})")
    print(f"c_m = {cert.c_m:.17g}")
    print(f"C_m = {cert.C_m:.17g}")
    print(f"C_tilde = {cert.C_tilde:.17g}")
    print(f"K = {cert.K:.17g} (valid for |p| > {cert.valid_above:g}, "
          f"K_small = {max(k_small, 0.0):.6g})")
    return EXIT_OK


_COMMANDS = {
    "audit": cmd_audit,
    "drift": cmd_drift,
    "cell": cmd_cell,
    "effective": cmd_effective,
    "solve": cmd_solve,
    "homogenize": cmd_homogenize,
    "constants": cmd_constants,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hjhom",
        description="Homogenization toolkit for nonlocal Hamilton-Jacobi "
                    "equations on the 1-D torus")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the run configuration")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--force", action="store_true",
                        help="run even if structural audits fail")
    parser.add_argument("--threads", type=int, default=1,
                        help="advisory; affects speed only, never results")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        for line in exc.errors:
            print(line, file=sys.stderr)
        return EXIT_AUDIT if os.path.exists(args.config) else EXIT_IO
    try:
        return _COMMANDS[args.command](args, cfg)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
