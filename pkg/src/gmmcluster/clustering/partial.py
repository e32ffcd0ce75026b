"""Partial clusterings with their ground-truth quality; threshold splits."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from ..model import Dataset


@dataclass
class PartialClustering:
    """Disjoint nonempty parts covering the indices 0..n-1.

    Stored as a label vector; ``parts`` lists the members of each part in
    increasing index order.
    """

    labels: np.ndarray
    branch: str = "root"
    parent: Optional[int] = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if labels.size == 0:
            raise ValueError("empty universe")
        if labels.min() < 0:
            raise ValueError("every sample needs a part")
        # relabel by first occurrence so equal partitions compare equal
        _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        self.labels = rank[inv]

    @classmethod
    def trivial(cls, n: int) -> "PartialClustering":
        return cls(np.zeros(n, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def parts(self) -> List[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(np.bincount(self.labels, minlength=self.k))[:-1]
        return np.split(order, bounds)

    def split_part(self, part: int, mask: np.ndarray, branch: str, parent: Optional[int] = None) -> "PartialClustering":
        """Replace ``part`` by (members where mask is False, members where mask is True)."""
        members = np.flatnonzero(self.labels == part)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != members.shape:
            raise ValueError("mask must cover the part")
        if mask.all() or not mask.any():
            raise ValueError("split leaves a part empty")
        labels = self.labels.copy()
        labels[members[mask]] = self.k
        return PartialClustering(labels, branch, parent)

    def is_refinement_of(self, other: "PartialClustering") -> bool:
        """Every part of self lies inside a part of other."""
        if other.n != self.n:
            return False
        pairs = np.unique(np.stack([self.labels, other.labels]), axis=1)
        return len(np.unique(pairs[0])) == pairs.shape[1]

    def key(self) -> str:
        return hashlib.sha1(self.labels.astype(np.int32).tobytes()).hexdigest()

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "branch": self.branch, "parent": self.parent}


@dataclass
class PartQuality:
    size: int
    comp: List[int]
    corr: int


@dataclass
class ClusterQuality:
    parts: List[PartQuality] = field(default_factory=list)

    @property
    def worst_corruption(self) -> float:
        return max((p.corr / p.size for p in self.parts), default=0.0)

    def is_good(self, eps: float) -> bool:
        """Every part contains a component and has corr/size <= eps."""
        return all(p.comp for p in self.parts) and self.worst_corruption <= eps

    def to_dict(self) -> dict:
        return {"parts": [{"size": p.size, "comp": p.comp, "corr": p.corr} for p in self.parts],
                "worst_corruption": self.worst_corruption}


def quality(clustering: PartialClustering, data: Dataset, w_min: Optional[float] = None) -> ClusterQuality:
    """Containment and corruption counts against the true labels.

    Component i is contained in part S when S holds at least a (1 - w_min)
    fraction of the uncorrupted samples of i.  corr(S) counts the samples of
    S that are corrupted or whose component is not contained in S, plus the
    samples of contained components that lie outside S.
    """
    if data.true_labels is None:
        raise ValueError("quality needs true labels")
    if clustering.n != data.n:
        raise ValueError("clustering and data disagree on the sample count")
    truth = np.asarray(data.true_labels, dtype=np.int64)
    bad = np.zeros(data.n, dtype=bool) if data.corrupted_mask is None else np.asarray(data.corrupted_mask, bool)
    clean = ~bad & (truth >= 0)
    k_true = int(truth[clean].max()) + 1 if clean.any() else 0
    if w_min is None:
        counts = np.bincount(truth[clean], minlength=k_true)
        w_min = float(counts.min() / counts.sum()) if k_true else 1.0
    table = np.zeros((clustering.k, k_true), dtype=np.int64)
    np.add.at(table, (clustering.labels[clean], truth[clean]), 1)
    totals = table.sum(axis=0)
    contained = table >= (1.0 - w_min) * totals[None, :]
    contained &= totals[None, :] > 0
    out = ClusterQuality()
    sizes = np.bincount(clustering.labels, minlength=clustering.k)
    for s in range(clustering.k):
        comp = np.flatnonzero(contained[s]).tolist()
        good = int(table[s, comp].sum())
        missing = int(totals[comp].sum()) - good
        out.parts.append(PartQuality(int(sizes[s]), comp, int(sizes[s]) - good + missing))
    return out


def interval_split(X: np.ndarray, v: np.ndarray, tau: float, mode: str = "two_sided") -> Tuple[np.ndarray, np.ndarray]:
    """Indices (S1, S2) of the rows of X split by their projection on v.

    two_sided puts |<x, v>| <= tau into S1; one_sided puts <x, v> <= tau
    into S1.  Ties go to S1.
    """
    if not math.isfinite(tau):
        raise ValueError("tau must be finite")
    proj = np.asarray(X, dtype=float) @ np.asarray(v, dtype=float)
    if mode == "two_sided":
        inside = np.abs(proj) <= tau
    elif mode == "one_sided":
        inside = proj <= tau
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return np.flatnonzero(inside), np.flatnonzero(~inside)


def threshold_error_rates(var1: float, var2: float, n_mc: int, seed: int) -> Dict[str, float]:
    """Monte Carlo misrouting rates of the two-sided split at sqrt(sigma1 sigma2).

    rate1 is the chance that a N(0, var1) projection lands outside the
    interval, rate2 the chance that a N(0, var2) projection lands inside.
    The closed-form Gaussian values and standard errors come along.
    """
    if not 0 < var1 < var2:
        raise ValueError("need 0 < var1 < var2")
    s1, s2 = math.sqrt(var1), math.sqrt(var2)
    tau = math.sqrt(s1 * s2)
    rng = np.random.default_rng(seed)
    z1 = rng.standard_normal(n_mc) * s1
    z2 = rng.standard_normal(n_mc) * s2
    r1 = float(np.mean(np.abs(z1) > tau))
    r2 = float(np.mean(np.abs(z2) <= tau))
    exact1 = float(special.erfc(tau / (s1 * math.sqrt(2.0))))
    exact2 = float(special.erf(tau / (s2 * math.sqrt(2.0))))
    return {
        "tau": tau, "ratio": s1 / s2, "rate1": r1, "rate2": r2,
        "stderr1": math.sqrt(max(r1 * (1 - r1), 1.0 / n_mc) / n_mc),
        "stderr2": math.sqrt(max(r2 * (1 - r2), 1.0 / n_mc) / n_mc),
        "exact1": exact1, "exact2": exact2,
    }
