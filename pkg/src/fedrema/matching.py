"""Server-side decision kernel: soft-logit probing, relativity matrix,
maximum-difference segmentation, the critical co-learning period state,
and the historical dependency map."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from fedrema.errors import ConfigurationError, DimensionError
from fedrema.nn import Classifier, softmax

log = logging.getLogger(__name__)


def sample_probe(rng: np.random.Generator, feature_dim: int) -> np.ndarray:
    """Random probe feature, elements iid uniform [0, 1)."""
    return rng.random(feature_dim)


def probe_soft_logits(classifiers: list[Classifier], probe: np.ndarray,
                      temperature: float) -> np.ndarray:
    """Temperature-softened response of every classifier to one shared
    probe; returns a (K, C) array of probability vectors."""
    probe = np.asarray(probe, dtype=np.float64).reshape(-1)
    out = []
    for k, clf in enumerate(classifiers):
        if clf.feature_dim != probe.shape[0]:
            raise DimensionError(
                f"classifier {k} expects {clf.feature_dim}-dim features, "
                f"probe has {probe.shape[0]}")
        out.append(softmax(clf.weight @ probe + clf.bias, temperature))
    return np.asarray(out)


def relativity_matrix(soft_logits: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities of the soft-logit vectors.

    Softmax outputs are strictly positive, so every entry is in [0, 1];
    the result is symmetric with unit diagonal.
    """
    p = np.asarray(soft_logits, dtype=np.float64)
    if p.shape[0] < 2:
        raise ConfigurationError("need at least 2 clients for a relativity matrix")
    norms = np.linalg.norm(p, axis=1)
    assert np.all(norms > 0), "soft logits cannot have zero norm"
    unit = p / norms[:, None]
    s = unit @ unit.T
    s = (s + s.T) / 2.0
    np.clip(s, 0.0, 1.0, out=s)
    np.fill_diagonal(s, 1.0)
    return s


@dataclass
class RelevantSet:
    client: int
    peers: tuple[int, ...]  # sorted client ids above the largest gap
    max_gap: float

    def __post_init__(self):
        self.peers = tuple(sorted(self.peers))


def mds(relevance: np.ndarray, client: int = -1,
        paper_literal: bool = False) -> RelevantSet:
    """Maximum-difference segmentation of one client's relevance vector.

    Sorts ascending (stable, client id as tiebreak), finds the largest
    consecutive gap (first maximum on ties) and returns the segment
    above it. With paper_literal=True the element just below the gap is
    included as well. If all values are equal the whole population is
    returned with gap 0.
    """
    s = np.asarray(relevance, dtype=np.float64).reshape(-1)
    if s.shape[0] < 2:
        raise ConfigurationError("mds needs at least 2 clients")
    order = np.argsort(s, kind="stable")
    gaps = np.diff(s[order])
    m = int(np.argmax(gaps))
    max_gap = float(gaps[m])
    if max_gap == 0.0:
        return RelevantSet(client, tuple(range(s.shape[0])), 0.0)
    start = m if paper_literal else m + 1
    return RelevantSet(client, tuple(int(i) for i in order[start:]), max_gap)


@dataclass
class CcpTracker:
    """Tracks the per-round summed maximum similarity differences and
    decides when the critical co-learning period ends. The active flag
    is monotone: once the gap ratio drops to the threshold, it stays
    off for good."""

    threshold: float = 0.5
    history: list[float] = field(default_factory=list)
    active: bool = True

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ConfigurationError(
                f"ccp threshold must be in (0,1), got {self.threshold}")

    @property
    def historical_max(self) -> float:
        return max(self.history) if self.history else 0.0


def ccp_update(tracker: CcpTracker, per_client_gaps: np.ndarray) -> bool:
    """Record this round's summed gap and refresh the CCP flag.

    Only the ratio of the current sum to the historical maximum matters,
    so any uniform positive rescaling of the gaps leaves the resulting
    boolean trace unchanged.
    """
    gaps = np.asarray(per_client_gaps, dtype=np.float64).reshape(-1)
    if gaps.shape[0] == 0:
        raise DimensionError("empty gap vector")
    if not tracker.active:
        raise ConfigurationError("ccp_update called after the period ended")
    total = float(gaps.sum())
    tracker.history.append(total)
    peak = tracker.historical_max
    tracker.active = peak > 0 and (total / peak) > tracker.threshold
    return tracker.active


@dataclass
class DependencyMap:
    """Selection counts accumulated during the co-learning period;
    entry (k, i) is how many times client k kept client i as a peer."""

    counts: np.ndarray

    @classmethod
    def zeros(cls, num_clients: int) -> "DependencyMap":
        return cls(np.zeros((num_clients, num_clients), dtype=np.int64))

    @property
    def num_clients(self) -> int:
        return self.counts.shape[0]


def dependency_record(dep: DependencyMap, relevant_sets: list[RelevantSet]) -> None:
    for rs in relevant_sets:
        for i in rs.peers:
            dep.counts[rs.client, i] += 1


def dependency_weights(dep: DependencyMap, client: int) -> np.ndarray:
    """Row-normalized selection counts; a client that never completed a
    co-learning round falls back to keeping its own classifier."""
    row = dep.counts[client]
    total = row.sum()
    if total == 0:
        log.warning("client %d has no recorded peer selections; using self-only weights",
                    client)
        w = np.zeros(dep.num_clients)
        w[client] = 1.0
        return w
    return row / total
