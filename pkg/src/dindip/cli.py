"""Command-line entry point.

Subcommands: solve, flow, theory, grid-ab, grid-ka, deconv, wellcond.
Exit codes: 0 success, 2 configuration/usage error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__, dipnet, flow, inertia, xp

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dindip",
        description="Train a two-layer deep inverse prior with inertial dynamics "
        "and emit trajectories, certificates, and benchmark grids.",
    )
    parser.add_argument("--version", action="version", version=f"dindip {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, needs_out: bool = True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", default=None, help="optional output directory")
        return p

    add("solve", "run the discrete inertial algorithm; writes trajectory.csv + certificate.txt")
    add("flow", "integrate the continuous dynamic; writes trajectory.csv + certificate.txt")
    add("theory", "compute the certificate only, no optimization", needs_out=False)
    add("grid-ab", "mean iterations-to-threshold over an (alpha, beta) grid")
    add("grid-ka", "success probability over a (k, alpha) grid")
    p = add("deconv", "circular Gaussian deconvolution benchmark with PGM snapshots")
    p.add_argument("--image", default=None, help="input PGM image (defaults to a synthetic pattern)")
    p = add("wellcond", "well-conditioned svd-composed operator benchmark")
    p.add_argument("--image", default=None, help="input PGM image (defaults to a synthetic pattern)")
    return parser


def cli_dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        cfg = xp.load_config(args.config)
        if getattr(args, "image", None):
            cfg.setdefault("experiment", {})["image"] = args.image
        if args.command == "solve":
            result = xp.run_solve(cfg, args.out, cfg_path=args.config)
            print(f"solve: status={result.status} iterations={result.iterations} "
                  f"final_loss={result.state.loss:.6g}")
            if result.status == "diverged":
                return EXIT_NUMERICAL
        elif args.command == "flow":
            result = xp.run_flow(cfg, args.out, cfg_path=args.config)
            print(f"flow: t_end={result.state.t:.6g} "
                  f"final_loss={result.records[-1][flow.FLOW_COLUMNS.index('loss')]:.6g}")
        elif args.command == "theory":
            cert = xp.run_theory(cfg, args.out, cfg_path=args.config)
            for key, value in cert.as_dict().items():
                print(f"{key} = {xp.fmt(value)}")
        elif args.command == "grid-ab":
            path = xp.exp_grid_alpha_beta(cfg, args.out, cfg_path=args.config)
            print(f"grid-ab: wrote {path}")
        elif args.command == "grid-ka":
            path = xp.exp_grid_k_alpha(cfg, args.out, cfg_path=args.config)
            print(f"grid-ka: wrote {path}")
        elif args.command == "deconv":
            xp.exp_deconv(cfg, args.out, cfg_path=args.config)
            print(f"deconv: outputs in {args.out}")
        elif args.command == "wellcond":
            xp.exp_wellcond(cfg, args.out, cfg_path=args.config)
            print(f"wellcond: outputs in {args.out}")
    except xp.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (flow.BlowUpError, inertia.BacktrackStallError, dipnet.EvaluationError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
