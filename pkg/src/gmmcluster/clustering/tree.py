"""Worklist search over chains of refinements."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .partial import PartialClustering

log = logging.getLogger(__name__)

Refiner = Callable[..., List[PartialClustering]]


@dataclass
class CandidateSet:
    """Every clustering visited by the search, with parent links.

    ``nodes[i]`` is the i-th clustering created; ``parents[i]`` the index of
    the clustering it refines (None for the root).  ``results`` indexes the
    nodes with exactly k parts.
    """

    k: int
    nodes: List[PartialClustering] = field(default_factory=list)
    parents: List[Optional[int]] = field(default_factory=list)
    results: List[int] = field(default_factory=list)
    refiner_calls: int = 0
    exhausted: bool = False
    diagnostics: dict = field(default_factory=dict)

    def add(self, node: PartialClustering, parent: Optional[int]) -> int:
        self.nodes.append(node)
        self.parents.append(parent)
        idx = len(self.nodes) - 1
        if node.k == self.k:
            self.results.append(idx)
        return idx

    @property
    def clusterings(self) -> List[PartialClustering]:
        return [self.nodes[i] for i in self.results]

    def depth(self, idx: int) -> int:
        out = 0
        while self.parents[idx] is not None:
            idx = self.parents[idx]
            out += 1
        return out

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "refiner_calls": self.refiner_calls,
            "exhausted": self.exhausted,
            "nodes": [{"id": i, "parent": p, "parts": n.k, "branch": n.branch,
                       "sizes": np.bincount(n.labels).tolist()}
                      for i, (n, p) in enumerate(zip(self.nodes, self.parents))],
            "results": self.results,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


def tree_search(X: np.ndarray, k: int, refiner: Refiner, max_nodes: int = 20000, seed: int = 0) -> CandidateSet:
    """Refine the trivial clustering of X until every branch has k parts.

    ``refiner(clustering, part, X, seed=..., parent=..., diagnostics=...)``
    returns refinements of ``clustering`` that split ``part``.  Nodes are
    expanded in creation order; the search stops early once ``max_nodes``
    clusterings exist and flags the result as exhausted.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    out = CandidateSet(k)
    out.add(PartialClustering.trivial(len(X)), None)
    head = 0
    while head < len(out.nodes):
        node = out.nodes[head]
        if node.k < k:
            for part in range(node.k):
                if len(out.nodes) >= max_nodes:
                    out.exhausted = True
                    break
                diag: dict = {}
                children = refiner(node, part, X, seed=seed + 7919 * out.refiner_calls, parent=head,
                                   diagnostics=diag)
                out.diagnostics[f"{head}:{part}"] = diag
                out.refiner_calls += 1
                for child in children:
                    if len(out.nodes) >= max_nodes:
                        out.exhausted = True
                        break
                    out.add(child, head)
        if out.exhausted:
            break
        head += 1
    log.debug("tree search: %d nodes, %d results", len(out.nodes), len(out.results))
    return out
