"""Command-line entry point: ``logmfg <command> --config FILE [--out DIR] [--threads K] [--seed S]``.

Exit codes: 0 success, 1 error, 2 non-convergence (or a failed acceptance
criterion for ``verify``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .estimates import lipschitz_sweep
from .exponents import PreconditionError, feasible_lem61, feasible_techlem, write_witness
from .grid import write_field_dump
from .hamiltonian import check_assumptions
from .mfg import picard_solve
from .mms import spatial_study, temporal_study, write_order_tables
from .particles import density_mismatch, empirical_cost, resampling_baseline, simulate

EXIT_OK, EXIT_ERROR, EXIT_NONCONVERGED = 0, 1, 2
logger = logging.getLogger("logmfg")


def _outdir(cfg: RunConfig, args) -> Path:
    out = Path(args.out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, cfg: RunConfig, payload: dict) -> None:
    manifest = {"command": command, "version": __version__, "config": cfg.source, **payload}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _assumption_summary(cfg: RunConfig) -> tuple[dict, list[str]]:
    rep = check_assumptions(cfg.hamiltonian())
    for k in rep.failures():
        logger.warning("assumption %s failed", k)
    warnings = [f"assumption {k} failed" for k in rep.failures()] + list(rep.notes)
    return {"flags": rep.flags, "constants": rep.constants}, warnings


def cmd_solve(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args)
    assumptions, warnings = _assumption_summary(cfg)
    problem = cfg.build_problem()
    sol = picard_solve(problem, options=cfg.picard_options())
    rep = sol.report
    files = []
    if "dump" in cfg.output.formats:
        for name, traj in (("u", sol.u_traj), ("m", sol.m_traj)):
            write_field_dump(out / f"{name}.mfgf", traj)
            files.append(f"{name}.mfgf")
    if "csv" in cfg.output.formats:
        with open(out / "iterations.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "u_update", "m_update", "omega", "alpha"])
            for k, row in enumerate(zip(rep.u_updates, rep.m_updates, rep.omegas, rep.alphas)):
                w.writerow([k, *map(repr, row)])
        files.append("iterations.csv")
    _write_manifest(out, "solve", cfg, {
        "converged": rep.converged, "iterations": rep.iterations, "alpha": sol.alpha, "eps": sol.eps,
        "hjb_residual": rep.hjb_residual, "fp_residual": rep.fp_residual,
        "assumptions": assumptions, "warnings": warnings, "files": files,
    })
    print(f"solve: converged={rep.converged} iterations={rep.iterations} "
          f"residuals hjb={rep.hjb_residual:.3e} fp={rep.fp_residual:.3e}")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_sweep_eps(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args)
    _, warnings = _assumption_summary(cfg)
    h = cfg.harness
    probes = [(x0, tau) for x0 in (h.x0 or (None,)) for tau in (h.tau or (None,))]
    files, failures, fits = [], [], {}
    for x0, tau in probes:
        rep = lipschitz_sweep(cfg.build_problem(), cfg.schedule(), h.p, q=h.q, nu=h.nu,
                              options=cfg.picard_options(), x0=x0, tau=tau, threads=args.threads)
        tag = "" if x0 is None and tau is None else (
            "_x" + "-".join(map(str, x0 or ("max",))) + f"_t{'0' if tau is None else tau}")
        name = f"estimates{tag}.csv"
        rep.to_csv(out / name)
        files += [name, f"estimates{tag}.columns.txt"]
        failures += rep.failures
        fits[name] = rep.constants
    _write_manifest(out, "sweep-eps", cfg, {"files": files, "failures": failures, "fits": fits,
                                            "warnings": warnings})
    print(f"sweep-eps: {len(probes)} probe(s), failures: {failures or 'none'}")
    return EXIT_NONCONVERGED if failures else EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    from .acceptance import run_all

    out = _outdir(cfg, args)
    results = run_all()
    with open(out / "acceptance.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["criterion", "name", "passed", "seconds", "detail"])
        for r in results:
            w.writerow([r.number, r.name, int(r.passed), f"{r.seconds:.2f}", r.detail])
    failed = [r.number for r in results if not r.passed]
    _write_manifest(out, "verify", cfg, {"failed": failed, "files": ["acceptance.csv"]})
    return EXIT_OK if not failed else EXIT_NONCONVERGED


def cmd_mms(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args)
    m = cfg.mms
    tables = []
    for eq in m.equations:
        tables.append(spatial_study(eq, m.sizes, dt_factor=m.dt_factor))
        tables.append(temporal_study(eq, n=m.sizes[-1], steps=m.steps, reference_factor=m.reference_factor))
    write_order_tables(out / "mms_orders.csv", tables)
    for t in tables:
        print(f"mms {t.equation} {t.kind}: orders {', '.join(f'{o:.3f}' for o in t.orders)}")
    _write_manifest(out, "mms", cfg, {"files": ["mms_orders.csv"],
                                      "orders": {f"{t.equation}/{t.kind}": t.orders for t in tables}})
    return EXIT_OK


def cmd_exponents(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args)
    e = cfg.exponents
    files = []
    if e.lemma in ("techlem", "both"):
        write_witness(out / "witness_techlem.txt", feasible_techlem(e.d, e.q, e.b, e.lam))
        files.append("witness_techlem.txt")
    if e.lemma in ("lem61", "both"):
        write_witness(out / "witness_lem61.txt", feasible_lem61(e.d, e.lam, e.p))
        files.append("witness_lem61.txt")
    for f in files:
        print(f"--- {f}\n{(out / f).read_text()}", end="")
    _write_manifest(out, "exponents", cfg, {"files": files})
    return EXIT_OK


def cmd_particles(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args)
    problem = cfg.build_problem()
    sol = picard_solve(problem, options=cfg.picard_options())
    pc = cfg.particles
    seed = pc.seed if args.seed is None else args.seed
    ens = simulate(sol, problem, pc.N, seed, control=pc.control, threads=args.threads)
    mismatch = density_mismatch(ens, sol.m_traj)
    baseline = resampling_baseline(sol.m_traj.frames[-1], sol.grid, pc.N, seed)
    bucket = (pc.bucket_lower, pc.bucket_upper) if pc.bucket_lower else None
    cost = empirical_cost(ens, sol, problem, bucket)
    with open(out / "mismatch.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "t", "l1_distance"])
        for k, (t, v) in enumerate(zip(sol.grid.times(), mismatch)):
            w.writerow([k, repr(float(t)), repr(float(v))])
    files = ["mismatch.csv"]
    if "dump" in cfg.output.formats:
        ens.dump(out / "particles.mfgp")
        files.append("particles.mfgp")
    _write_manifest(out, "particles", cfg, {
        "seed": seed, "N": pc.N, "control": pc.control, "converged": sol.report.converged,
        "final_mismatch": float(mismatch[-1]), "resampling_baseline": baseline,
        "cost": {"mean": cost.mean, "stderr": cost.stderr, "count": cost.count, "u_reference": cost.reference},
        "files": files,
    })
    print(f"particles: mismatch(T)={mismatch[-1]:.4f} baseline={baseline:.4f} "
          f"cost={cost.mean:.6f}+-{cost.stderr:.1e} u={cost.reference:.6f}")
    return EXIT_OK if sol.report.converged else EXIT_NONCONVERGED


COMMANDS = {
    "solve": cmd_solve,
    "sweep-eps": cmd_sweep_eps,
    "verify": cmd_verify,
    "mms": cmd_mms,
    "exponents": cmd_exponents,
    "particles": cmd_particles,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logmfg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="INI run configuration")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides [output] directory)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent work items")
        p.add_argument("--seed", type=int, default=None, help="particle RNG seed (overrides [particles] seed)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
