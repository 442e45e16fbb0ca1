"""Containers passed between the plant, the estimators and the metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mapping import RegressorSnapshot


@dataclass
class SnapshotChunk:
    """A contiguous block of regression snapshots on the plant grid.

    ``offset`` is the global index of the first snapshot, so that
    estimators can align emission and decimation across chunks.
    """

    t: np.ndarray          # (K,)
    W: np.ndarray          # (K, q, p)
    w: np.ndarray          # (K, q)
    offset: int
    h: float
    f: np.ndarray | None = None
    d: np.ndarray | None = None
    x: np.ndarray | None = None
    theta_true: np.ndarray | None = None

    def __len__(self) -> int:
        return self.t.size

    def snapshot(self, k: int, H: np.ndarray | None = None) -> RegressorSnapshot:
        return RegressorSnapshot(W=self.W[k], w=self.w[k], H=H, t=float(self.t[k]))

    def checksum(self) -> str:
        import hashlib
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.W).tobytes())
        digest.update(np.ascontiguousarray(self.w).tobytes())
        return digest.hexdigest()


@dataclass
class EstimatorTrace:
    """Per-emission record of one estimator over a run."""

    name: str
    p: int
    t: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    failure: str | None = None

    def append(self, t, theta, **extra) -> None:
        self.t.append(t)
        self.theta.append(theta)
        for key, val in extra.items():
            self.extra.setdefault(key, []).append(val)

    def extend(self, t: np.ndarray, theta: np.ndarray, **extra) -> None:
        self.t.extend(np.asarray(t).tolist())
        self.theta.extend(list(np.asarray(theta)))
        for key, val in extra.items():
            self.extra.setdefault(key, []).extend(list(np.asarray(val)))

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"t": np.asarray(self.t, dtype=float),
               "theta": np.asarray(self.theta, dtype=float).reshape(-1, self.p)}
        for key, val in self.extra.items():
            out[key] = np.asarray(val)
        return out
