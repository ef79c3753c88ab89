"""Command-line interface: ``ogtt fit | simulate | sbc | recover``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import io
from ._backend import BACKEND
from .analysis import predict_g3h, predictive_band, summarize
from .inference import PARAM_NAMES
from .model import DEFAULT_STEP, FixedSettings, PatientParams, simulate
from .pipeline import fit
from .sampler import SamplerConfig, diagnostics
from .synth import DEFAULT_SCHEDULE, PROFILES, recovery_experiment, sbc

log = logging.getLogger("ogtt")


def _cmd_fit(args) -> int:
    cfg = io.load_config(args.config) if args.config else io.RunConfig()
    cfg = io.with_overrides(cfg, seed=args.seed, iterations=args.iterations,
                            burn_in=args.burn_in)
    out_dir = cfg.output_dir(args.out)
    obs = io.read_observations(args.observations)
    print(f"seed: {cfg.seed}")
    print(f"kernels: {BACKEND}")
    sample = fit(obs, cfg.fixed, cfg.prior, cfg.sampler_config(), cfg.integrator_step)
    band = predictive_band(sample, cfg.fixed, cfg.horizon, cfg.band_step, cfg.max_curves,
                           integrator_step=cfg.integrator_step)
    g3 = predict_g3h(sample, cfg.fixed, cfg.threshold, seed=cfg.seed,
                     integrator_step=cfg.integrator_step)
    summary = summarize(sample, (cfg.theta0_low, cfg.theta0_high), g3)
    header = f"observations: {args.observations}\nseed: {cfg.seed}\n"
    try:
        header += str(diagnostics(sample)) + "\n"
    except ValueError:
        pass
    paths = io.write_outputs(sample, band, summary, out_dir, obs, extra_summary=header)
    print(summary.to_text(), end="")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def _cmd_simulate(args) -> int:
    fs = FixedSettings(a=args.a, b=args.b, c=args.c, gb=args.gb, v0=args.v0)
    p = PatientParams(args.theta0, args.theta1, args.theta2, args.g0)
    p.check(fs)
    traj = simulate(p, fs, args.t_end, args.step, method=args.method)
    print("seed: none (deterministic)", file=sys.stderr)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["time_hr", "G", "I", "L", "D", "V"])
    for k in range(0, len(traj), args.every):
        w.writerow([repr(float(traj.times[k]))] + [repr(float(v)) for v in traj.states[k]])
    return 0


def _sampler_cfg(args) -> SamplerConfig:
    return SamplerConfig(n_iterations=args.iterations, burn_in=args.burn_in, seed=args.seed)


def _cmd_sbc(args) -> int:
    print(f"seed: {args.seed}")
    rep = sbc(n_replicates=args.replicates, cfg=_sampler_cfg(args), seed=args.seed,
              min_replicates=1 if args.allow_small else 100)
    print(f"replicates: {len(rep.ranks)} ok, {len(rep.failures)} failed; ranks in "
          f"0..{rep.n_ranks}, {rep.n_bins} bins")
    for name in PARAM_NAMES:
        print(f"{name:7s} chi-square p = {rep.pvalues[name]:.4f}  "
              f"hist = {rep.histograms[name].tolist()}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sbc_ranks.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PARAM_NAMES)
            w.writerows(rep.ranks.tolist())
        print(f"wrote {out / 'sbc_ranks.csv'}")
    return 0


def _cmd_recover(args) -> int:
    print(f"seed: {args.seed}")
    truth = PROFILES[args.profile]
    rep = recovery_experiment(truth, FixedSettings(), DEFAULT_SCHEDULE, args.replicates,
                              _sampler_cfg(args), seed=args.seed,
                              min_replicates=1 if args.allow_small else 20)
    rows = rep.to_rows()
    print(f"profile: {args.profile} ({truth}); {len(rep.covered)} ok, "
          f"{len(rep.failures)} failed")
    for r in rows:
        print(f"{r['parameter']:7s} truth {r['truth']:8.4g}  95% coverage {r['coverage']:.3f}  "
              f"median {r['median_of_medians']:8.4g}  sd/prior-sd {r['mean_sd_ratio']:.3f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "recovery.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        print(f"wrote {out / 'recovery.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ogtt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="posterior sample, bands and summary for one OGTT file")
    p.add_argument("observations", help="CSV with header time_hr,glucose_mg_dl")
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--out", help=f"output directory (else ${io.OUT_DIR_ENV}, config, ./ogtt-out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("simulate", help="forward trajectory as CSV on stdout")
    for name in PARAM_NAMES:
        p.add_argument(f"--{name}", type=float, required=True)
    defaults = FixedSettings()
    for name in ("a", "b", "c", "gb", "v0"):
        p.add_argument(f"--{name}", type=float, default=getattr(defaults, name))
    p.add_argument("--t-end", type=float, default=3.0)
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.add_argument("--every", type=int, default=1, help="print every k-th grid point")
    p.add_argument("--method", choices=("forced", "full"), default="forced")
    p.set_defaults(func=_cmd_simulate)

    for name, func, help_ in (("sbc", _cmd_sbc, "simulation-based calibration"),
                              ("recover", _cmd_recover, "parameter recovery on a synthetic truth")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--replicates", type=int, default=100 if name == "sbc" else 50)
        p.add_argument("--iterations", type=int, default=200_000)
        p.add_argument("--burn-in", type=int, default=20_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        p.add_argument("--allow-small", action="store_true",
                       help="permit fewer replicates than the validated minimum")
        if name == "recover":
            p.add_argument("--profile", choices=sorted(PROFILES), default="healthy")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "every", 1) < 1:
        parser.error("argument --every: must be >= 1")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
