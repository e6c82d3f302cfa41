"""
Command-line driver.

``qcdol sweep|trace|verify|bound [--config PATH] [--out DIR] [--workers N] [--seed N]``

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure (divergence, reference accuracy, quadrature).
"""

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import analysis
from .config import load_config
from .errors import ConfigError, DivergenceError, QuadratureError, ReferenceAccuracyError
from .linalg_core import unitarity_error
from .pipeline import reference_trajectory
from .twoqubit import default_setup, proposition1_trace

log = logging.getLogger("qcdol")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

SWEEP_HEADER = ("order", "N", "h", "norm_e", "norm_f", "bound", "max_Enn", "sum_Enn_h")
TRACE_HEADER = ("t", "V", "fidelity", "u1", "purity")
BOUND_HEADER = ("order", "N", "h", "norm_e", "bound", "term_init", "term_E", "term_T2overN")

UNITARITY_TOL = 1e-10
OPEN_LOOP_TOL = 1e-11
REF_TRACE_TOL = 1e-10
REF_PURITY_TOL = 1e-9


def _fmt(x):
    # repr gives the shortest round-trip decimal, hence byte-stable files
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    write_atomic(path, "\n".join(lines) + "\n")


def _check_tableaux(cfg):
    problems = []
    for o in cfg.orders:
        problems += [f"RK{o}: {p}" for p in cfg.tableau(o).problems()]
    return problems


def _run_sweep(cfg):
    problems = _check_tableaux(cfg)
    if problems:
        raise ConfigError("invalid tableau: " + "; ".join(problems))
    sys_ = cfg.build_system()
    rho0, sigma0 = cfg.initial_states()
    log.info("reference trajectory: %d RK5 steps", cfg.n_ref)
    ref = reference_trajectory(sys_, rho0, cfg.T, cfg.n_ref, tol_ref=cfg.tol_ref)
    log.info("sweep: orders %s, grids %s", cfg.orders, cfg.grids)
    records = analysis.convergence_sweep(
        sys_,
        rho0,
        sigma0,
        cfg.T,
        cfg.orders,
        cfg.grids,
        ref=ref,
        workers=cfg.workers,
        tableaux={o: cfg.tableau(o) for o in cfg.orders},
    )
    return sys_, rho0, sigma0, ref, records


def cmd_sweep(cfg):
    _, _, _, _, records = _run_sweep(cfg)
    rows = [
        (r.method_order, r.n_grid, r.h, r.norm_e, r.norm_f, r.bound, r.max_e_nn, r.sum_e_nn_h)
        for r in records
    ]
    write_csv(Path(cfg.out) / "sweep.csv", SWEEP_HEADER, rows)
    return EXIT_OK


def cmd_bound(cfg):
    _, _, _, _, records = _run_sweep(cfg)
    rows = [
        (r.method_order, r.n_grid, r.h, r.norm_e, r.bound, r.term_init, r.term_e, r.term_t2_over_n)
        for r in records
    ]
    write_csv(Path(cfg.out) / "bound.csv", BOUND_HEADER, rows)
    bad = [r for r in records if r.norm_e > r.bound]
    for r in bad:
        print(f"bound violated: order {r.method_order}, N {r.n_grid}", file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


def _twoqubit_setup(cfg):
    if cfg.system != "twoqubit":
        raise ConfigError("this command needs system = twoqubit")
    return default_setup(cfg.K, cfg.T)


def cmd_trace(cfg):
    setup = _twoqubit_setup(cfg)
    rho0, _ = cfg.initial_states()
    rep = proposition1_trace(setup, cfg.t_long, cfg.trace_steps, rho0=rho0, v_threshold=cfg.v_threshold)
    rows = zip(rep.times, rep.V, rep.fidelity, rep.u1, rep.purity)
    write_csv(Path(cfg.out) / "trace.csv", TRACE_HEADER, rows)
    if not rep.checks["V nonincreasing"]:
        print("V increased along the trace", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _verify_items(cfg):
    """Yield ``(name, passed, detail)`` in report order; stops after a tableau failure."""
    problems = _check_tableaux(cfg)
    yield "tableaux", not problems, "; ".join(problems) or f"orders {list(cfg.orders)} consistent"
    if problems:
        return
    sys_, rho0, sigma0, ref, records = _run_sweep(cfg)

    worst = max(
        max(r.diagnostics.unitarity for r in records),
        unitarity_error(ref.step_unitaries),
        unitarity_error(ref.cumulative),
    )
    yield "unitarity", worst <= UNITARITY_TOL, f"max ||U^dagger U - I|| = {worst:.3e}"

    drift = max(
        max(r.diagnostics.trace_drift, r.diagnostics.hermiticity, r.diagnostics.purity_drift) for r in records
    )
    tr = np.real(np.trace(ref.states, axis1=1, axis2=2))
    pur = np.real(np.einsum("nij,nji->n", ref.states, ref.states))
    ref_tr = float(np.max(np.abs(tr - tr[0])))
    ref_pur = float(np.max(np.abs(pur - pur[0])))
    ok = drift <= OPEN_LOOP_TOL and ref_tr <= REF_TRACE_TOL and ref_pur <= REF_PURITY_TOL
    yield "conservation", ok, f"open loop {drift:.3e}, reference trace {ref_tr:.3e}, purity {ref_pur:.3e}"

    t1 = analysis.theorem1_check(
        records, ref, rho0, sigma0, cfg.T,
        jitter=cfg.jitter, decrease_factor=cfg.decrease_factor, eps_pass=cfg.eps_pass,
    )
    detail = ", ".join(f"RK{o.order} ||F||={o.norm_f[-1]:.3e} x{o.reduction:.3g}" for o in t1.orders)
    yield "theorem1", t1.passed, detail

    limit = analysis.theorem2_limit(ref, sigma0, sys_, cfg.T)
    t2 = analysis.theorem2_check(
        records, limit, ref, rho0, sigma0, cfg.T,
        slope_from=cfg.slope_from, slope_range=(cfg.slope_min, cfg.slope_max), limit_tol=cfg.limit_tol,
        overlap_from=cfg.overlap_from, overlap_tol=cfg.overlap_tol, vacuous_below=cfg.vacuous_below,
    )
    if t2.vacuous:
        detail = f"vacuous, ||L|| = {t2.limit_norm:.3e}"
    else:
        detail = f"||L|| = {t2.limit_norm:.6g}, " + ", ".join(
            f"RK{o.order} slope {o.slope:.3f} dev {o.final_deviation:.2e}" for o in t2.orders if o.applicable
        )
    yield "theorem2", t2.passed, detail

    dominated, identical = analysis.theorem3_domination(records)
    margin = min(r.bound - r.norm_e for r in records)
    yield "theorem3", dominated and identical, f"min(bound - norm_e) = {margin:.3e}, third term order-independent: {identical}"

    app = analysis.appendix_identity_checks(
        ref, sys_, rng=np.random.default_rng(cfg.seed), n_times=cfg.appendix_samples,
        n_random=cfg.appendix_pairs, tol_a=cfg.appendix_a_tol, tol_b=cfg.appendix_b_tol,
    )
    yield "appendixA", app.passed_a, f"residual {app.residual_a:.3e}"
    yield "appendixB", app.passed_b, f"residual {app.residual_b:.3e}"

    if cfg.system == "twoqubit":
        setup = default_setup(cfg.K, cfg.T)
        rep = proposition1_trace(setup, cfg.t_long, cfg.trace_steps, v_threshold=cfg.v_threshold)
        fail = rep.first_failure()
        detail = f"V({cfg.t_long!r}) = {rep.final_v:.4e}"
        if fail:
            detail += f"; {fail[0]} fails at t = {fail[1]:.6g}"
        yield "proposition1", rep.passed, detail


def cmd_verify(cfg):
    lines = []
    first_fail = None
    for name, ok, detail in _verify_items(cfg):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        print(line)
        lines.append(line)
        if not ok and first_fail is None:
            first_fail = name
    write_atomic(Path(cfg.out) / "verify.txt", "\n".join(lines) + "\n")
    if first_fail is not None:
        print(f"first failing item: {first_fail}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


COMMANDS = {"sweep": cmd_sweep, "trace": cmd_trace, "verify": cmd_verify, "bound": cmd_bound}


def build_parser():
    p = argparse.ArgumentParser(prog="qcdol", description="Closed-loop designed open-loop control checks.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key = value config file (built-in defaults when omitted)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="parallel sweep workers")
    p.add_argument("--seed", type=int, help="seed for randomized spot checks")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, out=args.out, workers=args.workers, seed=args.seed)
        return COMMANDS[args.command](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ReferenceAccuracyError, QuadratureError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
