"""Command-line interface.

Subcommands: ``synth``, ``verify``, ``recover``, ``nemp``, ``bounds`` and
``experiment {hadamard,gaussian,conv}``.  Every command accepts
``--config FILE.json`` whose keys are flag names (``-`` or ``_``); flags given
on the command line take precedence.  Outputs carry an ``invocation`` block
with the resolved settings and are written atomically.  ``--threads`` never
changes output bytes and is therefore left out of the echo.

Exit codes: 0 success, 1 domain error (for example "sparsity level not
certifiable", or a failed ``verify``), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundRequest, evaluate
from .errors import L1CertError, ParameterError
from .harness import PRESETS, ExperimentConfig, run_campaign, write_report
from .model import NoiseModel, NuNormParams, SensingMatrix, UncertaintySet, read_csv
from .nemp import NempConfig, nemp_run, write_trace
from .recovery import recover_dantzig, recover_lasso, recover_penalized, recover_regular
from .synthesis import ContrastCertificate, omega_star, select_gamma_bar, verify_contrast

__all__ = ["main", "build_parser"]

ECHO_SKIP = {"command", "func", "config", "threads", "setup_cmd", "out"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _provenance() -> str:
    import clarabel
    import scipy
    return (f"l1cert {__version__} (python {platform.python_version()}, numpy {np.__version__}, "
            f"scipy {scipy.__version__}, clarabel {getattr(clarabel, '__version__', 'unknown')})")


def _float_or_auto(text):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _float_list(text):
    try:
        return tuple(float(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return tuple(int(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _p_value(text):
    if text in ("inf", "Inf", "infinity"):
        return math.inf
    v = float(text)
    if v < 1:
        raise argparse.ArgumentTypeError("p must be >= 1")
    return v


def _common(p):
    p.add_argument("--config", help="JSON file with default flag values")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")


def _noise_flags(p):
    p.add_argument("--sigma", type=float, help="noise level sigma")
    p.add_argument("--eps", type=float, default=0.01, help="confidence level epsilon")
    p.add_argument("--nuisance", help="uncertainty set JSON (observation side, R^m)")
    p.add_argument("--L", type=float, help="scale the box-image nuisance radius to L")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="l1cert", description="Verifiable l1 recovery: certificates, recovery and risk bounds.")
    ap.add_argument("--version", action="version", version=_provenance())
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="synthesize a contrast certificate")
    _common(p)
    p.add_argument("--matrix", required=True, help="sensing matrix CSV")
    p.add_argument("--s", type=int, required=True)
    _noise_flags(p)
    p.add_argument("--gamma", type=_float_or_auto, default="auto", help="level gamma or 'auto' (bisection)")
    p.add_argument("--gamma-plus", type=float, help="upper end of the gamma search (default 0.99/(2s))")
    p.add_argument("--out", required=True, help="certificate JSON")
    p.add_argument("--contrast-out", help="also write H as CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="check |I - H^T A| <= gamma entrywise")
    _common(p)
    p.add_argument("--matrix", required=True)
    p.add_argument("--contrast", required=True, help="contrast CSV or certificate JSON")
    p.add_argument("--gamma", type=float, help="level (default: the certificate's gamma_bar)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("recover", help="recover a signal from observations")
    _common(p)
    p.add_argument("--method", choices=("regular", "penalized", "dantzig", "lasso"), required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--y", required=True, help="observation CSV")
    p.add_argument("--cert", help="certificate JSON (regular, penalized; supplies kappa for lasso)")
    p.add_argument("--s", type=int)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--rho", type=_float_or_auto, default="auto")
    p.add_argument("--penalty", type=_float_or_auto, default="auto", help="Lasso penalty")
    p.add_argument("--kappa", type=float, help="kappa for the automatic Lasso penalty")
    p.add_argument("--signal-nuisance", help="signal-side nuisance set JSON (dantzig, lasso)")
    _noise_flags(p)
    p.add_argument("--out", required=True, help="result JSON")
    p.add_argument("--x-out", help="also write the estimate as CSV")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("nemp", help="run matching pursuit with certified error bounds")
    _common(p)
    p.add_argument("--matrix", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--cert", required=True)
    p.add_argument("--s", type=int)
    p.add_argument("--upsilon", type=float, default=0.0)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--trace-out", help="CSV of (k, alpha_k, l1 change)")
    p.set_defaults(func=cmd_nemp)

    p = sub.add_parser("bounds", help="evaluate a risk bound")
    _common(p)
    p.add_argument("--method", required=True,
                   choices=("regular", "penalized", "regular_q", "penalized_q", "dantzig", "lasso", "nemp"))
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--p", type=_p_value, default=1.0)
    p.add_argument("--q", type=_p_value, default=math.inf)
    p.add_argument("--upsilon", type=float, default=0.0)
    p.add_argument("--kappa", type=float)
    p.add_argument("--nu", type=float, dest="nu_H", help="nu(H)")
    p.add_argument("--rho-hat", type=float)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--lambda-hat", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--varrho", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--eps", type=float, dest="epsilon")
    p.add_argument("--n", type=int)
    p.add_argument("--varkappa", type=float)
    p.add_argument("--gamma-bar", type=float)
    p.add_argument("--t", type=int)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--out", help="result JSON (default: stdout)")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("experiment", help="run a seeded Monte Carlo campaign")
    _common(p)
    p.add_argument("setup_cmd", choices=("hadamard", "gaussian", "conv"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--s", type=_int_list, dest="s_list", help="comma-separated sparsity levels")
    p.add_argument("--sigma", type=_float_list, dest="sigma_list", help="comma-separated noise levels")
    p.add_argument("--L", type=_float_list, dest="L_list", help="comma-separated nuisance radii")
    p.add_argument("--eps", type=float, dest="epsilon")
    p.add_argument("--gamma", type=_float_or_auto, dest="gamma_bar")
    p.add_argument("--methods", type=lambda t: tuple(x for x in t.split(",") if x))
    p.add_argument("--signal-l1", type=float)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_experiment)
    return ap


# --- helpers ---------------------------------------------------------------------

def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_write_csv(path, arr) -> None:
    from .model import write_csv
    write_csv(path, arr)


def _echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ECHO_SKIP:
            continue
        if isinstance(v, float) and math.isinf(v):
            v = "inf"
        out[k] = list(v) if isinstance(v, tuple) else v
    out["command"] = args.command
    if getattr(args, "setup_cmd", None):
        out["setup"] = args.setup_cmd
    return out


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _nuisance(args, m: int) -> UncertaintySet:
    if getattr(args, "nuisance", None):
        U = UncertaintySet.from_json(args.nuisance)
        if args.L is not None:
            if U.variant != "box_image":
                raise ParameterError("--L applies to box-image nuisance sets only")
            U = UncertaintySet.box_image(U.M, args.L)
        return U
    if getattr(args, "L", None):
        raise ParameterError("--L needs --nuisance")
    return UncertaintySet.zero(m)


def _noise(args) -> NoiseModel:
    if args.sigma is None:
        raise UsageError("--sigma is required")
    return NoiseModel(args.sigma, args.eps)


# --- commands ------------------------------------------------------------------------

def cmd_synth(args) -> int:
    A = SensingMatrix.from_csv(args.matrix)
    params = NuNormParams(_nuisance(args, A.m), _noise(args), A.n)
    if args.gamma == "auto":
        gp = args.gamma_plus if args.gamma_plus is not None else 0.99 / (2 * args.s)
        _, cert = select_gamma_bar(A, args.s, gp, params, threads=args.threads)
    else:
        cert = omega_star(A, args.gamma, params, args.s, threads=args.threads)
    d = cert.to_dict()
    d["invocation"] = _echo(args)
    _atomic_write_text(args.out, _dump(d))
    if args.contrast_out:
        _atomic_write_csv(args.contrast_out, cert.H)
    print(f"gamma_bar = {cert.gamma_bar:.10g}  kappa = {cert.kappa:.10g}  omega_star = {cert.omega_star:.10g}")
    return 0


def _load_contrast(path):
    if str(path).endswith(".json"):
        return ContrastCertificate.from_json(path)
    return read_csv(path, ndim=2)


def cmd_verify(args) -> int:
    A = SensingMatrix.from_csv(args.matrix)
    src = _load_contrast(args.contrast)
    if isinstance(src, ContrastCertificate):
        H, gamma = src.H, src.gamma_bar if args.gamma is None else args.gamma
    else:
        if args.gamma is None:
            raise UsageError("--gamma is required with a CSV contrast")
        H, gamma = src, args.gamma
    ok, res = verify_contrast(A, H, gamma)
    for r in res:
        print(repr(float(r)))
    print(f"max residual {float(res.max()):.10g} vs gamma {gamma:.10g}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_recover(args) -> int:
    A = SensingMatrix.from_csv(args.matrix)
    y = read_csv(args.y)
    cert = None
    if args.cert:
        cert = ContrastCertificate.from_json(args.cert)
        cert.check_matrix(A)
    meth = args.method
    if meth in ("regular", "penalized") and cert is None:
        raise UsageError(f"--method {meth} needs --cert")
    V = UncertaintySet.from_json(args.signal_nuisance) if args.signal_nuisance else None
    noise = NoiseModel(args.sigma, args.eps) if args.sigma is not None else None
    if meth == "regular":
        r = recover_regular(y, A, cert, rho=args.rho)
    elif meth == "penalized":
        r = recover_penalized(y, A, cert, s=args.s, theta=args.theta)
    elif meth == "dantzig":
        r = recover_dantzig(y, A, rho=args.rho, nuisance=V, noise=noise)
    else:
        kappa = args.kappa if args.kappa is not None else (cert.kappa if cert is not None else None)
        if args.penalty == "auto" and kappa is None:
            raise UsageError("automatic Lasso penalty needs --kappa or --cert")
        r = recover_lasso(y, A, args.penalty, nuisance=V, kappa=kappa, noise=noise)
    d = r.to_dict()
    d["invocation"] = _echo(args)
    _atomic_write_text(args.out, _dump(d))
    if args.x_out:
        _atomic_write_csv(args.x_out, r.x_hat)
    print(f"{meth}: objective {r.objective:.10g}, ||x_hat||_1 = {float(np.abs(r.x_hat).sum()):.10g}")
    return 0


def cmd_nemp(args) -> int:
    A = SensingMatrix.from_csv(args.matrix)
    y = read_csv(args.y)
    cert = ContrastCertificate.from_json(args.cert)
    cert.check_matrix(A)
    s = args.s if args.s is not None else cert.s
    cfg = NempConfig(A, cert, s, args.upsilon, args.max_iters)
    x, trace, certified = nemp_run(y, cfg)
    d = {"x_hat": x.tolist(), "certified": certified, "trace": [list(t) for t in trace],
         "invocation": _echo(args)}
    _atomic_write_text(args.out, _dump(d))
    if args.trace_out:
        tmp = Path(args.trace_out).with_name(Path(args.trace_out).name + ".tmp")
        write_trace(tmp, trace)
        os.replace(tmp, args.trace_out)
    print(f"nemp: {certified['t']} steps, certified l1 error {certified['1']:.10g} ({certified['regime']})")
    return 0


def cmd_bounds(args) -> int:
    fields = ("kappa", "nu_H", "rho_hat", "theta", "lambda_hat", "rho", "varrho", "beta", "sigma", "epsilon",
              "n", "varkappa", "gamma_bar", "t", "alpha0", "q")
    kw = {f: getattr(args, f) for f in fields if getattr(args, f) is not None}
    req = BoundRequest(args.method, args.s, args.p, args.upsilon, **kw)
    res = evaluate(req)
    res["invocation"] = _echo(args)
    text = _dump(res)
    if args.out:
        _atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return 0


def cmd_experiment(args) -> int:
    base = dict(PRESETS[args.setup_cmd])
    overrides = {"N_reps": args.reps, "n": args.n, "m": args.m, "s_list": args.s_list,
                 "sigma_list": args.sigma_list, "L_list": args.L_list, "epsilon": args.epsilon,
                 "gamma_bar": args.gamma_bar, "methods": args.methods, "signal_l1": args.signal_l1,
                 "seed": args.seed}
    base.update({k: v for k, v in overrides.items() if v is not None})
    if base["setup"] == "hadamard" and args.n is not None:
        k = int(round(math.log2(args.n)))
        if 2 ** k != args.n:
            raise UsageError("hadamard setup needs --n a power of two")
        base["hadamard_k"] = k
    try:
        cfg = ExperimentConfig(**base)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = run_campaign(cfg, threads=args.threads)
    report.config["invocation"] = _echo(args)
    paths = write_report(report, args.out)
    for p in paths:
        print(p)
    return 0


# --- entry point ----------------------------------------------------------------------

def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` (flags still win).

    The config path is located before the real parse so that flags marked
    required may be supplied by the file alone.
    """
    commands = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in commands), None)
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    if command is None or path is None:
        return parser.parse_args(argv)
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    sub = commands[command]
    known = {a.dest: a for a in sub._actions}
    by_flag = {}
    for a in sub._actions:
        for opt in a.option_strings:
            by_flag[opt.lstrip("-").replace("-", "_")] = a
    defaults = {}
    for key, val in cfg.items():
        act = by_flag.get(key.replace("-", "_")) or known.get(key)
        if act is None or act.dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(val, list):
            val = tuple(val)
        elif act.type is not None and isinstance(val, (str, int, float)) and not isinstance(val, bool):
            try:
                val = act.type(str(val))
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"bad config value for {key!r}: {exc}") from None
        defaults[act.dest] = val
    sub.set_defaults(**defaults)
    for a in sub._actions:
        if a.dest in defaults:
            a.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return int(args.func(args))
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except L1CertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
