"""``wavecip`` command line: forward, control, reconstruct, validate.

Exit codes: 0 ok, 1 validation failure, 2 config error, 3 solver error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import parse_number
from .domain import FrequencySample
from .errors import CFLError, ConfigError, FrequencyError, GridError, SupportError, WaveCIPError

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("wavecip")


def _eta(values):
    try:
        return tuple(parse_number(v) for v in values)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser():
    p = argparse.ArgumentParser(prog="wavecip", description="Coefficient recovery from partial boundary data "
                                                            "of the wave equation.")
    p.add_argument("--config", help="scenario file (default: packaged default scenario)")
    p.add_argument("--out", default="wavecip-out", help="output directory")
    p.add_argument("--cache", help="control cache directory (default: OUT/cache)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over frequencies")
    p.add_argument("--resume", action="store_true", help="reuse samples already in OUT/samples.csv")
    p.add_argument("--paper-constant", action="store_true",
                   help="use the literal alpha^d|eta|^2 scaling and factor 2 instead of the derived normalization")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("forward", help="DtN traces for one frequency")
    f.add_argument("--eta", nargs=2, required=True, metavar=("X", "Y"), help="frequency, e.g. 2pi 0")
    f.add_argument("--alpha", type=float, help="perturbation size (default from scenario)")
    f.add_argument("--csv", action="store_true", help="also export traces as CSV")

    c = sub.add_parser("control", help="null control for one frequency (cached)")
    c.add_argument("--eta", nargs=2, required=True, metavar=("X", "Y"))
    c.add_argument("--zero-beta", action="store_true", help="use beta = 0 (trivial control)")

    r = sub.add_parser("reconstruct", help="full lattice sweep and inversion")
    r.add_argument("--no-plots", action="store_true", help="skip PNG rendering")

    sub.add_parser("validate", help="consistency checks with a pass/fail table")
    return p


def _scenario(args):
    from .pipeline import Scenario

    sc = Scenario.load(args.config)
    if len(sc.gamma.gamma_edges) == 1:
        print(f"warning: Γ is the single side {sc.gamma.gamma_edges[0]!r}; the geometric control condition is "
              "presumably violated and control certification is expected to fail", file=sys.stderr)
    return sc


def cmd_forward(args, sc):
    from .pipeline import run_forward

    eta = _eta(args.eta)
    res = run_forward(sc, args.out, eta, args.alpha, csv=args.csv)
    print(f"wrote dtn_alpha.wcip dtn_0.wcip dtn_diff.wcip to {args.out}; sup |difference| = {res['diff_sup']:.4e}")
    return EXIT_OK


def cmd_control(args, sc):
    from .control import HUMConfig  # noqa: F401
    from .domain import CutoffField
    from .pipeline import get_control
    from .storage import ControlCache

    eta = FrequencySample(_eta(args.eta))
    if args.zero_beta:
        sc.beta = CutoffField(np.zeros(sc.grid.shape), sc.omega_prime, sc.beta.margin)
    cache = ControlCache(args.cache or Path(args.out) / "cache")
    cf, hit = get_control(sc, eta, cache)
    print(f"eta=({eta.eta[0]:.6g}, {eta.eta[1]:.6g}) certified={cf.certified} "
          f"residual_energy={cf.residual_energy:.4e} iterations={cf.iterations} cache={'hit' if hit else 'miss'}")
    return EXIT_OK if cf.certified else EXIT_SOLVER


def cmd_reconstruct(args, sc):
    from .pipeline import run_reconstruct

    def progress(n, total, e):
        log.info("%d/%d eta=(%.4g, %.4g) certified=%s", n, total, e.eta_x, e.eta_y, e.certified)

    conv = "literal" if args.paper_constant else None
    run = run_reconstruct(sc, args.out, args.cache, jobs=args.jobs, resume=args.resume, convention=conv,
                          progress=progress)
    if run.excluded:
        print(f"excluded {len(run.excluded)} frequencies (non-certified or mirror of one): "
              + ", ".join(f"({a:.4g},{b:.4g})" for a, b in run.excluded))
    if run.status != 0:
        print(f"error: {run.metrics['status']} ({run.metrics['excluded_fraction']:.1%} excluded)", file=sys.stderr)
        return run.status
    m = run.metrics["metrics"]
    print(f"computed {len(run.computed)} of {run.metrics['n_lattice']} samples")
    for k in ("rel_l2_bandlimited", "rel_l2_raw_meanfree", "hermitian_residue", "imag_residue", "max_form_gap"):
        print(f"{k:>24}: {m[k]:.4e}")
    if not args.no_plots:
        from .plotting import render, write_plot_script

        write_plot_script(args.out)
        render(args.out, sc.grid, {"c1 true": sc.coeff.c1, "band-limited reference": run.reference,
                                   "c1 estimate": run.result.c1_est})
    return EXIT_OK


def cmd_validate(args, sc):
    from .pipeline import format_checks, run_validate

    checks = run_validate(sc, args.out, args.cache, progress=lambda c: log.info("%s: %s", c.name, c.passed))
    print(format_checks(checks))
    ok = all(c.passed for c in checks)
    print("all checks passed" if ok else f"{sum(not c.passed for c in checks)} check(s) failed")
    return EXIT_OK if ok else EXIT_VALIDATION


COMMANDS = {"forward": cmd_forward, "control": cmd_control, "reconstruct": cmd_reconstruct,
            "validate": cmd_validate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        sc = _scenario(args)
    except CFLError as exc:
        print(f"CFL violation: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, GridError, SupportError, FrequencyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, sc)
    except FrequencyError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WaveCIPError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
