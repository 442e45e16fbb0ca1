"""Rank-one excitation: the identifiability monitor freezes the blind parameter."""
import numpy as np

from hnnest.constraints import ConstraintSet
from hnnest.hnn import GainConfig, HnnEstimator
from hnnest.monitor import IdentifiabilityMonitor
from hnnest.traces import SnapshotChunk


def stream(seed, h=1e-4, horizon=10.0):
    rng = np.random.default_rng(seed)
    t = np.arange(int(horizon / h)) * h
    # second regressor column is almost zero, so theta[1] is barely observed
    W = np.stack([np.ones_like(t), 5e-4 * np.sin(t)], axis=1)[:, None, :]
    w = W[:, 0, :] @ np.array([1.0, 0.5]) + np.sin(t) + 0.1 * rng.standard_normal(t.size)
    return SnapshotChunk(t=t, W=W, w=w[:, None], offset=0, h=h)


def main():
    cs = ConstraintSet(p=2, A_eq=np.array([[1.0, 0.0]]), a_eq=np.array([1.0]))
    chunk = stream(0)
    for mitigate in (False, True):
        mon = IdentifiabilityMonitor(cs.A_eq, 50.0, theta0=[1.0, 0.5]) if mitigate else None
        est = HnnEstimator(2, GainConfig(10.0, 10.0, 50.0, 1e-4), [1.0, 0.5], cs,
                           monitor=mon, diag_every=10, emit_every=10)
        est.process(chunk)
        dev = np.abs(est.trace.arrays()["theta"][:, 1] - 0.5).max()
        label = "monitor on" if mitigate else "monitor off"
        extra = f", min score {min(est.diag['score']):.1e}" if mitigate else ""
        print(f"{label:>11}: max |theta[1] - 0.5| = {dev:.3e}{extra}")


if __name__ == "__main__":
    main()
