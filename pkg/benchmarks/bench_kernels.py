"""Compiled vs pure-Python kernels: forward solve, posterior evaluation, t-walk.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends run the same inputs; the script also checks that they agree
(the t-walk chains must be bit-identical).
"""

import argparse
import importlib
import time

import numpy as np

from ogtt import _pykernels
from ogtt.inference import ObservationSet, PriorSpec, _likelihood_constants
from ogtt.model import DEFAULT_STEP, FixedSettings
from ogtt.synth import PROFILES, generate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def build_target(kern, obs: ObservationSet, fs: FixedSettings, spec: PriorSpec):
    inv2s2, const = _likelihood_constants(fs.sigma, len(obs))
    return kern.OGTTTarget(list(obs.times), list(obs.values), (fs.a, fs.b, fs.c, fs.gb, fs.v0),
                           spec.constants(), DEFAULT_STEP, inv2s2, const, 1.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--twalk-iterations", type=int, default=2000)
    args = ap.parse_args()

    try:
        ck = importlib.import_module("ogtt._ckernels")
    except ImportError:
        raise SystemExit("compiled kernels not built; run `pip install -e .` first")

    fs = FixedSettings()
    p = PROFILES["healthy"]
    obs = generate(p, fs, seed=0).obs
    spec = PriorSpec().resolved(obs)
    x = p.as_array()
    times = np.array(obs.times)
    n_eval = 200
    n_tw = args.twalk_iterations
    x0, xp0 = x, x * 1.05

    rows = []
    for name, kern in (("python", _pykernels), ("compiled", ck)):
        target = build_target(kern, obs, fs, spec)
        fg = best_of(lambda: [kern.forced_glucose(*x[:4], fs.a, fs.b, fs.c, fs.gb, fs.v0,
                                                  DEFAULT_STEP, times) for _ in range(n_eval)],
                     args.repeat) / n_eval
        te = best_of(lambda: [target(x) for _ in range(n_eval)], args.repeat) / n_eval
        tw = best_of(lambda: kern.twalk(target, x0, xp0, n_tw, np.random.PCG64(1)),
                     args.repeat) / n_tw
        rows.append((name, fg, te, tw))

    print(f"{'backend':10s} {'G at obs (us)':>14s} {'log-post (us)':>14s} "
          f"{'t-walk/iter (us)':>17s}")
    for name, fg, te, tw in rows:
        print(f"{name:10s} {fg * 1e6:14.1f} {te * 1e6:14.1f} {tw * 1e6:17.1f}")
    py, c = rows
    print(f"{'speed-up':10s} {py[1] / c[1]:13.0f}x {py[2] / c[2]:13.0f}x {py[3] / c[3]:16.0f}x")

    # agreement
    a = _pykernels.twalk(build_target(_pykernels, obs, fs, spec), x0, xp0, n_tw,
                         np.random.PCG64(1))
    b = ck.twalk(build_target(ck, obs, fs, spec), x0, xp0, n_tw, np.random.PCG64(1))
    same = all(np.array_equal(u, v) for u, v in zip(a, b))
    print(f"t-walk chains bit-identical across backends: {same}")
    est = c[3] * 200_000
    print(f"estimated compiled fit time at 200k iterations: {est:.1f} s")


if __name__ == "__main__":
    main()
