"""Batch command-line interface.

Subcommands: simulate (stationary statistics), mix (mixing / enhanced
dissipation), lyapunov (tracer exponents), toy (closed-form strain spectrum),
spectrum / flux / yaglom (diagnostics over saved snapshots), replay.
"""

import argparse
import sys

import numpy as np


def _add_run_args(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="override rng.seed")
    p.add_argument("--out", help="override run.output_dir")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")


def _load_cfg(args):
    from .config import load_config, parse_config_text
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        k, _, v = item.partition("=")
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["rng.seed"] = str(args.seed)
    if args.out is not None:
        overrides["run.output_dir"] = args.out
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        cfg = parse_config_text("", overrides)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return cfg


def _cmd_simulate(args):
    from .harness import run_stationary
    manifest = run_stationary(_load_cfg(args))
    print(f"stationary run complete: {manifest.config['run.output_dir']}")
    return 0


def _cmd_mix(args):
    from .harness import run_mixing
    manifest = run_mixing(_load_cfg(args))
    print(f"mixing run complete: {manifest.config['run.output_dir']}")
    return 0


def _cmd_lyapunov(args):
    from .harness import run_lyapunov
    manifest = run_lyapunov(_load_cfg(args))
    lam = manifest.observables.get("lambda_1")
    if lam:
        print(f"lambda_1 = {lam['mean']:.4g}")
    print(f"lyapunov run complete: {manifest.config['run.output_dir']}")
    return 0


def _cmd_toy(args):
    from .toy import StrainModel, spectrum_table
    model = StrainModel(gamma=args.gamma, kappa=args.kappa, chi=args.chi)
    n_values = np.geomspace(args.n_min, args.n_max, args.points)
    rows = spectrum_table(model, n_values)
    out = open(args.out, "w") if args.out else sys.stdout
    out.write("n,Gamma,cumulative,reference\n")
    for n, gam, cum, ref in rows:
        out.write(f"{n!r},{gam!r},{cum!r},{ref!r}\n")
    if args.out:
        out.close()
        print(f"wrote {args.out}")
    return 0


def _load_snapshot(path):
    from .snapshot import load_field
    return load_field(path)


def _cmd_spectrum(args):
    from .diagnostics import cumulative_spectrum
    g = _load_snapshot(args.snapshot)
    spec = cumulative_spectrum(g)
    out = open(args.out, "w") if args.out else sys.stdout
    out.write("t,N,cumulative,shell\n")
    for N, c, s in zip(spec.Ns, spec.cumulative, spec.shell):
        out.write(f"0.0,{int(N)},{float(c)!r},{float(s)!r}\n")
    if args.out:
        out.close()
    return 0


def _cmd_flux(args):
    from .diagnostics import spectral_flux
    u = _load_snapshot(args.velocity)
    g = _load_snapshot(args.scalar)
    for N in args.levels:
        print(f"{N},{spectral_flux(u, g, N, args.cutoff)!r}")
    return 0


def _cmd_yaglom(args):
    from .diagnostics import yaglom_flux
    u = _load_snapshot(args.velocity)
    g = _load_snapshot(args.scalar)
    for ell in args.ells:
        print(f"{ell!r},{yaglom_flux(u, g, ell, args.angles)!r}")
    return 0


def _cmd_replay(args):
    from .harness import replay
    manifest = replay(args.manifest, args.out)
    print(f"replayed into {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="batchlab",
        description="pseudo-spectral passive-scalar turbulence laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, helptext in [
            ("simulate", _cmd_simulate, "stationary-statistics run over a kappa sweep"),
            ("mix", _cmd_mix, "mixing / enhanced-dissipation experiments"),
            ("lyapunov", _cmd_lyapunov, "tracer Lyapunov exponent estimation")]:
        p = sub.add_parser(name, help=helptext)
        _add_run_args(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("toy", help="closed-form pure-strain spectrum CSV")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=1e-8)
    p.add_argument("--chi", type=float, default=1.0)
    p.add_argument("--n-min", type=float, default=2.0)
    p.add_argument("--n-max", type=float, default=1e4)
    p.add_argument("--points", type=int, default=120)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_toy)

    p = sub.add_parser("spectrum", help="cumulative/shell spectrum of a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_spectrum)

    p = sub.add_parser("flux", help="spectral flux between saved fields")
    p.add_argument("--velocity", required=True)
    p.add_argument("--scalar", required=True)
    p.add_argument("--levels", type=int, nargs="+", default=[8, 16, 32])
    p.add_argument("--cutoff", choices=["sharp", "smooth"], default="sharp")
    p.set_defaults(fn=_cmd_flux)

    p = sub.add_parser("yaglom", help="structure-function flux between saved fields")
    p.add_argument("--velocity", required=True)
    p.add_argument("--scalar", required=True)
    p.add_argument("--ells", type=float, nargs="+", default=[0.1, 0.2, 0.4])
    p.add_argument("--angles", type=int, default=32)
    p.set_defaults(fn=_cmd_yaglom)

    p = sub.add_parser("replay", help="re-execute a run from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_replay)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
