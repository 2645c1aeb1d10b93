"""Command-line interface.

Exit codes
----------
0  success
2  input error (unreadable or invalid model, bad arguments)
3  solver did not converge
4  some grid points failed (NaN or unknown rows are still written)
5  verification failed (the full report is still written)

CSV outputs start with ``#`` metadata lines (version, model hash, resolved
configuration, seeds, wall-clock).  Everything below them depends only on
the inputs, so reruns produce byte-identical bodies for any thread count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from typing import Optional

import numpy as np

from . import __version__
from .errors import ContractError, ConvergenceError, KronMdeError, ModelValidationError
from .mde import EtaSchedule, SolverOptions, solve_at, solve_continuation
from .model import (
    KroneckerModel,
    hermitian_dyson_data,
    hermitize,
    load_model,
    model_hash,
    save_model,
    validate,
)
from .presets import FIG1_POINTS, PRESETS, preset
from .sampler import (
    DISTRIBUTIONS,
    GENERAL_CAP,
    HERMITIAN_CAP,
    OracleSet,
    SampleConfig,
    containment_report,
    esd_histogram,
    global_law_distance,
    sample_eigenvalues,
)
from .spectrum import (
    SCAN_SCHEDULE,
    STATUS_NAMES,
    ScanOptions,
    ZetaGrid,
    dos_curve,
    estimate_support,
    pseudospectrum,
    support_bracket,
)
from .superop import check_self_adjoint, f_operator_analysis, verify_decomposition

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_PARTIAL, EXIT_VERIFY = 0, 2, 3, 4, 5
THREADS_ENV = "KRONMDE_THREADS"


class InputError(KronMdeError):
    pass


def parse_complex(text: str) -> complex:
    """Parse ``"a+bi"``, ``"a"``, ``"bi"`` or ``"a - b i"`` (``j`` also accepted)."""
    s = str(text).replace(" ", "").replace("I", "i").replace("J", "j")
    if not s:
        raise InputError("empty complex number")
    s = s.replace("i", "j")
    if s.endswith("j") and (s[:-1] in ("", "+", "-") or s[-2] in "+-"):
        s = s[:-1] + "1j"
    try:
        return complex(s)
    except ValueError:
        raise InputError(f"cannot parse complex number {text!r}") from None


def parse_range(text: str):
    """``"lo:hi:count"`` to a numpy grid."""
    try:
        lo, hi, n = text.split(":")
        n = int(n)
        if n < 1:
            raise ValueError
        return np.linspace(float(lo), float(hi), n)
    except ValueError:
        raise InputError(f"cannot parse range {text!r}; expected lo:hi:count") from None


def parse_oracle(text: str) -> OracleSet:
    """``points:z1,z2,...[;L=n]`` or ``disk:R``."""
    kind, _, rest = text.partition(":")
    if kind == "disk":
        try:
            R = float(rest)
        except ValueError:
            raise InputError(f"bad disk radius in {text!r}") from None
        if R <= 0:
            raise InputError("disk radius must be positive")
        return OracleSet((0j,), L=1.0 / R ** 2)
    if kind == "points":
        body, _, lpart = rest.partition(";")
        pts = tuple(parse_complex(p) for p in body.split(",") if p.strip())
        if not pts:
            raise InputError("oracle needs at least one point")
        L = None
        if lpart:
            if not lpart.startswith("L="):
                raise InputError(f"bad oracle option {lpart!r}")
            L = float(lpart[2:])
        return OracleSet(pts, L=L)
    if kind in FIG1_POINTS:
        return OracleSet(FIG1_POINTS[kind])
    raise InputError(f"unknown oracle {text!r}; use points:..., disk:R or a preset name")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


class Output:
    """Collects metadata lines and CSV rows for one output file."""

    def __init__(self, command: str, config: dict, model: Optional[KroneckerModel] = None):
        self.start = time.time()
        self.meta = {"tool": f"kronmde {__version__}", "command": command}
        if model is not None:
            self.meta["model_hash"] = model_hash(model)
            self.meta["model_name"] = model.name
        self.config = config

    def header_lines(self) -> list:
        lines = [f"# {k}: {v}" for k, v in self.meta.items()]
        lines.append("# config: " + json.dumps(self.config, sort_keys=True))
        lines.append(f"# wall_clock_s: {time.time() - self.start:.3f}")
        return lines

    def write_csv(self, path, columns, rows):
        body = [",".join(columns)] + [",".join(_fmt(v) for v in row) for row in rows]
        text = "\n".join(self.header_lines() + body) + "\n"
        _write(path, text)

    def write_json(self, path, payload: dict):
        doc = {"meta": dict(self.meta, config=self.config, wall_clock_s=round(time.time() - self.start, 3))}
        doc.update(payload)
        _write(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _write(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


@contextmanager
def _mapper(threads: int):
    if threads <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=threads) as ex:
        yield ex.map


# --------------------------------------------------------------------------
# Argument helpers


def _load(args) -> KroneckerModel:
    if getattr(args, "preset", None):
        model = preset(args.preset, args.N)
    elif getattr(args, "model", None):
        try:
            model = load_model(args.model)
        except OSError as exc:
            raise InputError(f"cannot read model file: {exc}") from None
    else:
        raise InputError("give a model file or --preset")
    report = validate(model)
    if not report.ok:
        raise ModelValidationError(report)
    return model


def _data(model: KroneckerModel, zeta):
    if zeta is not None:
        return hermitize(model, parse_complex(zeta))
    if not model.is_hermitian:
        raise InputError("model is not Hermitian; pass --zeta to solve the Hermitized equation")
    return hermitian_dyson_data(model)


def _solver_opts(args, schedule: Optional[EtaSchedule] = None) -> SolverOptions:
    sched = schedule or EtaSchedule()
    if getattr(args, "eta_ratio", None) is not None:
        sched = EtaSchedule(start=sched.start, ratio=args.eta_ratio, floor=sched.floor)
    return SolverOptions(
        tol=args.tol, max_iter=args.max_iter, damping_init=args.damping, eta_schedule=sched
    )


def _add_model_args(p):
    p.add_argument("model", nargs="?", help="model JSON file")
    p.add_argument("--preset", choices=PRESETS, help="use a built-in model instead of a file")
    p.add_argument("--N", type=int, default=1000, help="size for --preset (default 1000)")


def _add_solver_args(p):
    p.add_argument("--tol", type=float, default=1e-10, help="residual tolerance (default 1e-10)")
    p.add_argument("--max-iter", type=int, default=50000, help="iteration cap per solve (default 50000)")
    p.add_argument("--damping", type=float, default=0.5, help="initial damping (default 0.5)")
    p.add_argument("--eta-ratio", type=float, default=None, help="geometric ratio of the eta descent")


def _add_scan_args(p):
    p.add_argument("--eta-floor", type=float, default=1e-5, help="smallest eta (default 1e-5)")
    p.add_argument("--threshold", type=float, default=50.0,
                   help="IN threshold on max_j |Im m_j|/eta (default 50)")


def _config(args) -> dict:
    skip = {"func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# --------------------------------------------------------------------------
# Commands


def cmd_preset(args) -> int:
    model = preset(args.name, args.N)
    if args.out in (None, "-"):
        from .model import dumps_model

        sys.stdout.write(dumps_model(model) + "\n")
    else:
        save_model(model, args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    model = _load(args)
    data = _data(model, args.zeta)
    z = parse_complex(args.z)
    if z.imag <= 0:
        raise InputError("Im z must be positive")
    opts = _solver_opts(args)
    out = Output("solve", _config(args), model)
    if z.imag >= opts.eta_schedule.start:
        sol = solve_at(data, z, opts)
    else:
        try:
            sol = solve_continuation(data, z.real, [z.imag], opts)[0]
        except ConvergenceError as exc:
            sol = None
            out.write_json(args.out, {"converged": False, "error": str(exc)})
            return EXIT_CONVERGENCE
    payload = sol.to_dict()
    payload["z"] = [sol.z.real, sol.z.imag]
    out.write_json(args.out, payload)
    return EXIT_OK if sol.converged else EXIT_CONVERGENCE


def cmd_dos(args) -> int:
    model = _load(args)
    data = _data(model, args.zeta)
    E = parse_range(args.E)
    out = Output("dos", _config(args), model)
    curve = dos_curve(data, E, args.eta, _solver_opts(args))
    rows = zip(curve.E_grid, curve.rho, curve.max_im_over_eta)
    out.write_csv(args.out, ["E", "rho", "max_im_over_eta"], rows)
    bad = int((~curve.converged).sum())
    if bad:
        print(f"warning: {bad} point(s) did not converge; rho = nan there", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_support(args) -> int:
    model = _load(args)
    data = _data(model, args.zeta)
    lo, hi = support_bracket(data)
    if args.E:
        E = parse_range(args.E)
    else:
        n = int(math.floor((hi - lo) / args.step + 1e-9)) + 1
        E = lo + args.step * np.arange(n)
    opts = _solver_opts(args, SCAN_SCHEDULE)
    est = estimate_support(data, E, args.eta_floor, args.threshold, opts)
    out = Output("support", _config(args), model)
    out.meta["bracket"] = json.dumps([lo, hi])
    out.meta["intervals"] = json.dumps([list(iv) for iv in est.intervals])
    rows = ((e, STATUS_NAMES[int(s)], v, c) for e, s, v, c in zip(est.E_grid, est.status, est.value, est.certificates))
    out.write_csv(args.out, ["E", "status", "max_im_over_eta", "dist_certificate"], rows)
    if args.report:
        out.write_json(args.report, {"bracket": [lo, hi], "intervals": [list(iv) for iv in est.intervals]})
    return EXIT_PARTIAL if (est.status == 2).any() else EXIT_OK


def cmd_pseudospectrum(args) -> int:
    model = _load(args)
    try:
        grid = ZetaGrid.parse(args.grid)
    except ContractError as exc:
        raise InputError(str(exc)) from None
    opts = ScanOptions(
        eta_floor=args.eta_floor,
        in_threshold=args.threshold,
        scan_step=args.scan_step,
        scan_max=args.scan_max,
        solver=_solver_opts(args, SCAN_SCHEDULE),
    )
    out = Output("pseudospectrum", _config(args), model)
    with _mapper(args.threads) as mapper:
        ps = pseudospectrum(model, grid, args.epsilon, opts, tilde_epsilon=args.tilde_epsilon, mapper=mapper)
    out.write_csv(args.out, ["re", "im", "dist0", "member", "member_tilde"], ps.rows())
    if args.report:
        out.write_json(args.report, {
            "grid": grid.to_dict(),
            "epsilon": ps.epsilon,
            "tilde_epsilon": ps.tilde_epsilon,
            "scan_step": ps.scan_step,
            "options": opts.to_dict(),
            "members": int(ps.member.sum()),
            "members_tilde": int(ps.member_tilde.sum()),
            "unknown": int(ps.unknown.sum()),
        })
    if ps.unknown.any():
        print(f"warning: {int(ps.unknown.sum())} grid point(s) unresolved; counted as members", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _eig_job(job):
    model, cfg, trial = job
    return sample_eigenvalues(model, cfg, trial)


def cmd_verify(args) -> int:
    model = _load(args)
    cfg = SampleConfig(seed=args.seed, distribution=args.distribution, trials=args.trials,
                       allow_large=args.allow_large)
    cap = HERMITIAN_CAP if model.is_hermitian else GENERAL_CAP
    if model.N > cap and args.allow_large:
        print(f"warning: N = {model.N} is above the desk-scale cap {cap}; dense eigensolves cost O((NL)^3)",
              file=sys.stderr)
    out = Output("verify", _config(args), model)
    out.meta["seeds"] = f"{cfg.seed} (trials 0..{cfg.trials - 1})"
    payload = {"ok": True}
    eigs = None
    if args.eigs_out or args.hist_out:
        with _mapper(args.threads) as mapper:
            eigs = list(mapper(_eig_job, [(model, cfg, t) for t in range(cfg.trials)]))
    if args.eigs_out:
        rows = ((t, z.real, z.imag) for t, w in enumerate(eigs) for z in np.asarray(w, dtype=complex))
        out.write_csv(args.eigs_out, ["trial", "re", "im"], rows)
    if args.hist_out:
        if not model.is_hermitian:
            raise InputError("--hist-out needs a Hermitian model")
        lo, hi = support_bracket(hermitian_dyson_data(model))
        hist = esd_histogram(np.concatenate(eigs), np.linspace(lo, hi, args.hist_bins + 1))
        out.write_csv(args.hist_out, ["edge", "weight"], hist.rows())
    if args.oracle:
        oracle = parse_oracle(args.oracle)
        with _mapper(args.threads) as mapper:
            rep = containment_report(model, cfg, args.epsilon, oracle, mapper=mapper)
        payload["containment"] = rep.to_dict()
        payload["ok"] &= rep.ok
    elif not model.is_hermitian:
        raise InputError("--oracle is required for non-Hermitian models")
    if model.is_hermitian:
        data = hermitian_dyson_data(model)
        lo, hi = support_bracket(data)
        pad = 10 * args.eta
        E = np.arange(lo - pad, hi + pad + args.dos_step / 2, args.dos_step)
        dos = dos_curve(data, E, args.eta, _solver_opts(args))
        dist = global_law_distance(model, cfg, dos)
        payload["global_law"] = {"kolmogorov_distance": dist, "bound": args.ks_bound, "eta": args.eta}
        payload["ok"] &= bool(dist < args.ks_bound)
    out.write_json(args.out, payload)
    return EXIT_OK if payload["ok"] else EXIT_VERIFY


def cmd_diagnose(args) -> int:
    model = _load(args)
    data = _data(model, args.zeta)
    z = parse_complex(args.z)
    if z.imag <= 0:
        raise InputError("Im z must be positive")
    opts = _solver_opts(args)
    out = Output("diagnose", _config(args), model)
    try:
        sol = solve_continuation(data, z.real, [z.imag], opts)[0] if z.imag < opts.eta_schedule.start \
            else solve_at(data, z, opts)
    except ConvergenceError as exc:
        out.write_json(args.out, {"converged": False, "error": str(exc)})
        return EXIT_CONVERGENCE
    if not sol.converged:
        out.write_json(args.out, {"converged": False, "residual": sol.residual})
        return EXIT_CONVERGENCE
    diag = f_operator_analysis(data, sol.m, z)
    payload = {
        "z": [z.real, z.imag],
        "residual": sol.residual,
        "min_im_eig": sol.min_im_eig,
        "norm_S_max": diag.norm_S_max,
        "norm_S_hs": diag.norm_S_hs,
        "norm_Linv_hs": _finite(diag.norm_Linv_hs),
        "norm_F": diag.norm_F,
        "gap_F": diag.gap_F,
        "gap_identity_rhs": diag.gap_identity_rhs,
        "gap_identity_residual": diag.gap_identity_residual,
        "power_iterations": diag.power_iterations,
        "self_adjoint_ok": check_self_adjoint(data),
        "decomposition_ok": verify_decomposition(data, sol.m, z),
    }
    out.write_json(args.out, payload)
    return EXIT_OK


# --------------------------------------------------------------------------


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kronmde",
        description="Dyson equation solver, density of states and pseudospectra for Kronecker random matrices.",
        epilog="exit codes: 0 ok, 2 input error, 3 no convergence, 4 partial grid failure, 5 verification failed",
    )
    p.add_argument("--version", action="version", version=f"kronmde {__version__}")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker processes for grid and trial fan-out (default ${THREADS_ENV} or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("preset", help="write a built-in model file")
    s.add_argument("name", choices=PRESETS)
    s.add_argument("--N", type=int, default=1000, help="matrix size N (default 1000)")
    s.add_argument("--out", default=None, help="output path (default stdout)")
    s.set_defaults(func=cmd_preset)

    s = sub.add_parser("solve", help="solve the Dyson equation at one z")
    _add_model_args(s)
    s.add_argument("--z", required=True, help='spectral parameter, e.g. "0.5+1e-3i"')
    s.add_argument("--zeta", default=None, help="Hermitize at this zeta (required for non-Hermitian models)")
    _add_solver_args(s)
    s.add_argument("--out", default=None, help="JSON report path (default stdout)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("dos", help="density of states on an energy grid")
    _add_model_args(s)
    s.add_argument("--E", default="-3:3:601", help="energy grid lo:hi:count (default -3:3:601)")
    s.add_argument("--eta", type=float, default=1e-3, help="imaginary part (default 1e-3)")
    s.add_argument("--zeta", default=None, help="Hermitize at this zeta")
    _add_solver_args(s)
    s.add_argument("--out", default=None, help="CSV path (default stdout)")
    s.set_defaults(func=cmd_dos)

    s = sub.add_parser("support", help="estimate the support of the density of states")
    _add_model_args(s)
    s.add_argument("--E", default=None, help="energy grid lo:hi:count (default: the support bracket)")
    s.add_argument("--step", type=float, default=0.01, help="grid step over the bracket (default 0.01)")
    s.add_argument("--zeta", default=None, help="Hermitize at this zeta")
    _add_scan_args(s)
    _add_solver_args(s)
    s.add_argument("--out", default=None, help="CSV path (default stdout)")
    s.add_argument("--report", default=None, help="optional JSON report path")
    s.set_defaults(func=cmd_support)

    s = sub.add_parser("pseudospectrum", help="self-consistent pseudospectrum on a zeta grid")
    _add_model_args(s)
    s.add_argument("--grid", required=True, help="re_min:re_max:count,im_min:im_max:count")
    s.add_argument("--epsilon", type=float, default=0.02, help="epsilon (default 0.02)")
    s.add_argument("--tilde-epsilon", type=float, default=None,
                   help="epsilon of the imaginary-axis criterion (default: --epsilon)")
    s.add_argument("--scan-step", type=float, default=None, help="energy scan step (default epsilon/4)")
    s.add_argument("--scan-max", type=float, default=None, help="energy scan end (default 2*epsilon)")
    _add_scan_args(s)
    _add_solver_args(s)
    s.add_argument("--out", default=None, help="CSV path (default stdout)")
    s.add_argument("--report", default=None, help="optional JSON report path")
    s.set_defaults(func=cmd_pseudospectrum)

    s = sub.add_parser("verify", help="Monte Carlo containment and global-law checks")
    _add_model_args(s)
    s.add_argument("--epsilon", type=float, default=0.1, help="dilation of the oracle set (default 0.1)")
    s.add_argument("--oracle", default=None,
                   help="points:z1,z2,...[;L=n], disk:R or a fig1 preset name")
    s.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    s.add_argument("--trials", type=int, default=5, help="number of samples (default 5)")
    s.add_argument("--distribution", choices=DISTRIBUTIONS, default="ComplexGaussian")
    s.add_argument("--eta", type=float, default=1e-3, help="eta of the reference density (default 1e-3)")
    s.add_argument("--dos-step", type=float, default=0.005, help="energy step of the reference density")
    s.add_argument("--ks-bound", type=float, default=0.03, help="Kolmogorov distance bound (default 0.03)")
    s.add_argument("--allow-large", action="store_true",
                   help=f"lift the desk-scale caps (N <= {HERMITIAN_CAP} Hermitian, N <= {GENERAL_CAP} general)")
    s.add_argument("--eigs-out", default=None, help="optional CSV of sampled eigenvalues (trial, re, im)")
    s.add_argument("--hist-out", default=None, help="optional CSV histogram (edge, weight), Hermitian models")
    s.add_argument("--hist-bins", type=int, default=200, help="histogram bins over the support bracket")
    _add_solver_args(s)
    s.add_argument("--out", default=None, help="JSON report path (default stdout)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("diagnose", help="stability diagnostics at one z")
    _add_model_args(s)
    s.add_argument("--z", required=True, help="spectral parameter")
    s.add_argument("--zeta", default=None, help="Hermitize at this zeta")
    _add_solver_args(s)
    s.add_argument("--out", default=None, help="JSON report path (default stdout)")
    s.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (InputError, ModelValidationError, ContractError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
