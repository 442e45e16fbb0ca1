"""Stiffness bias under a Gaussian disturbance, with and without the compensation neuron."""
import argparse
from dataclasses import replace

import numpy as np

from hnnest.config import load_preset
from hnnest.experiments import run_single


def k2_trace(preset, horizon, seed):
    cfg = load_preset(preset)
    spec = cfg.estimators[0]
    # raw network outputs; a coarser step keeps the run short
    opts = dict(spec.options, beta=10.0, project_output=False)
    cfg = replace(cfg, h=1e-4, emit_every=100, seed=seed,
                  estimators=[replace(spec, options=opts)])
    res = run_single(cfg, horizon=horizon)
    return res.t, np.asarray(res.traces[spec.name]["k2"])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=float, default=100.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    for preset, label in (("fig5", "no compensation"), ("fig7", "compensated")):
        t, k2 = k2_trace(preset, args.horizon, args.seed)
        tail = k2[-(k2.size // 10):]
        print(f"{label:>16}: k2 mean over last 10% = {tail.mean():.4f} (true 0.5)")
        if preset == "fig5":
            e = k2[k2.size // 2:] - 0.5
            spec = np.abs(np.fft.rfft((e - e.mean()) * np.hanning(e.size)))
            freqs = 2 * np.pi * np.fft.rfftfreq(e.size, t[1] - t[0])
            print(f"{'':>16}  ripple peak at {freqs[1 + np.argmax(spec[1:])]:.3f} rad/s")


if __name__ == "__main__":
    main()
