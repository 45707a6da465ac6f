"""Round orchestration and the aggregation strategies.

One round: every client trains locally on its own data, the server
aggregates according to the chosen strategy, the result is broadcast,
and each client is scored on its personal test set.

Strategies:
  local   - no aggregation at all
  fedavg  - size-weighted mean of the full model
  fedper  - size-weighted mean of the extractors only, heads stay local
  fedrema - global extractor mean plus adaptive classifier
            collaboration (peer matching during the co-learning
            period, historical dependency weights afterwards)
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from fedrema import matching, nn
from fedrema.data import ClientDataset
from fedrema.errors import ConfigurationError, DimensionError
from fedrema.nn import Classifier, FeatureExtractor, ModelParams

STRATEGIES = ("local", "fedavg", "fedper", "fedrema")

evaluate = nn.evaluate


@dataclass
class Strategy:
    name: str = "fedrema"
    delta: float = 0.5
    temperature: float = 0.5
    n_probes: int = 1
    paper_literal_mds: bool = False
    always_probe: bool = False
    # Diagnostic switches used by the reduction-identity checks.
    force_relevant_all: bool = False
    force_ccp_active: bool = False

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.name!r}")
        if self.n_probes < 1:
            raise ConfigurationError("n_probes must be >= 1")


@dataclass
class RoundState:
    round: int
    models: list[ModelParams]
    sizes: np.ndarray  # per-client |D_k|
    tracker: matching.CcpTracker
    dep: matching.DependencyMap
    master_seed: int
    server_rng: np.random.Generator

    @classmethod
    def initial(cls, num_clients: int, model: ModelParams, sizes, master_seed: int,
                delta: float = 0.5) -> "RoundState":
        return cls(
            round=0,
            models=[model.copy() for _ in range(num_clients)],
            sizes=np.asarray(sizes, dtype=np.int64),
            tracker=matching.CcpTracker(threshold=delta),
            dep=matching.DependencyMap.zeros(num_clients),
            master_seed=master_seed,
            server_rng=np.random.default_rng(
                np.random.SeedSequence([master_seed, 0x5E12])),
        )

    @property
    def num_clients(self) -> int:
        return len(self.models)


@dataclass
class RoundReport:
    round: int
    accuracies: list[float]
    mean_accuracy: float
    delta_s_bar: float | None
    ccp_active: bool
    relevant_sets: dict[int, tuple[int, ...]] = field(default_factory=dict)
    wall_ms: float = 0.0


def _weighted_mean(arrays: list[np.ndarray], weights: np.ndarray) -> np.ndarray:
    """Fixed-order weighted sum; callers pass clients in ascending id
    order so two runs accumulate in the same order bit-for-bit."""
    if not arrays:
        raise DimensionError("nothing to aggregate")
    shape = arrays[0].shape
    acc = np.zeros(shape)
    for a, w in zip(arrays, weights):
        if a.shape != shape:
            raise DimensionError(f"shape mismatch in aggregation: {a.shape} vs {shape}")
        acc += w * a
    return acc


def aggregate_extractors(uploads: list[tuple[FeatureExtractor, int]]) -> FeatureExtractor:
    """Size-weighted mean of extractor parameters, layer by layer."""
    if not uploads:
        raise DimensionError("no extractor uploads")
    sizes = np.array([s for _, s in uploads], dtype=np.float64)
    weights = sizes / sizes.sum()
    template = uploads[0][0]
    layers = []
    for i, ref in enumerate(template.layers):
        w = _weighted_mean([ext.layers[i].weight for ext, _ in uploads], weights)
        b = _weighted_mean([ext.layers[i].bias for ext, _ in uploads], weights)
        layers.append(nn.Layer(w, b, ref.activation))
    return FeatureExtractor(layers)


def _aggregate_classifiers(uploads: list[Classifier], weights: np.ndarray) -> Classifier:
    w = _weighted_mean([c.weight for c in uploads], weights)
    b = _weighted_mean([c.bias for c in uploads], weights)
    return Classifier(w, b)


def aggregate_classifiers_ccp(uploads: list[tuple[Classifier, int]],
                              relevant: matching.RelevantSet) -> Classifier:
    """Size-weighted mean of the heads of the relevant peers only."""
    if not relevant.peers:
        raise DimensionError(f"client {relevant.client} has an empty relevant set")
    peers = list(relevant.peers)  # already sorted ascending
    sizes = np.array([uploads[i][1] for i in peers], dtype=np.float64)
    weights = sizes / sizes.sum()
    return _aggregate_classifiers([uploads[i][0] for i in peers], weights)


def aggregate_classifiers_post(uploads: list[Classifier],
                               weights: np.ndarray) -> Classifier:
    """Head mixture with externally supplied (dependency) weights."""
    weights = np.asarray(weights, dtype=np.float64)
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ConfigurationError("dependency weights must sum to 1")
    return _aggregate_classifiers(uploads, weights)


def _check_finite(params: ModelParams, round_idx: int, client: int) -> None:
    arrays = [l.weight for l in params.extractor.layers]
    arrays += [l.bias for l in params.extractor.layers]
    arrays += [params.classifier.weight, params.classifier.bias]
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(
                f"non-finite parameters after aggregation in round {round_idx}, "
                f"client {client}")


def client_seed(master_seed: int, round_idx: int, client: int) -> np.random.SeedSequence:
    """Per-(round, client) training seed, independent of execution order."""
    return np.random.SeedSequence([master_seed, round_idx, client])


def _relativity(heads: list[Classifier], rng: np.random.Generator,
                strategy: Strategy) -> np.ndarray:
    """Mean relativity matrix over n_probes independent probe vectors.

    A single random probe projects each head onto one direction, which
    makes the similarity estimate noisy; averaging the per-probe cosine
    matrices is far more robust than averaging the soft logits (one
    dominant probe can swamp an average of probability vectors)."""
    h = heads[0].feature_dim
    acc = None
    for _ in range(strategy.n_probes):
        probe = matching.sample_probe(rng, h)
        p = matching.probe_soft_logits(heads, probe, strategy.temperature)
        s = matching.relativity_matrix(p)
        acc = s if acc is None else acc + s
    return acc / strategy.n_probes


def _matching_pass(heads: list[Classifier], state: RoundState, strategy: Strategy):
    """Probe the freshly uploaded heads, build the relativity matrix,
    and segment every client's relevance vector."""
    s = _relativity(heads, state.server_rng, strategy)
    sets = [
        matching.mds(s[k], client=k, paper_literal=strategy.paper_literal_mds)
        for k in range(state.num_clients)
    ]
    return s, sets


def run_round(state: RoundState, strategy: Strategy, datasets: list[ClientDataset],
              epochs: int, batch_size: int, lr: float,
              parallel: bool = False, max_workers: int | None = None,
              ) -> RoundReport:
    """Execute one communication round in place and report metrics."""
    t = state.round + 1
    k_count = state.num_clients

    def train_one(k: int) -> ModelParams:
        return nn.local_train(state.models[k], datasets[k].train, epochs,
                              batch_size, lr, client_seed(state.master_seed, t, k))

    if parallel:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            trained = list(pool.map(train_one, range(k_count)))
    else:
        trained = [train_one(k) for k in range(k_count)]

    delta_s_bar = None
    relevant_sets: dict[int, tuple[int, ...]] = {}
    ccp_now = False

    if strategy.always_probe and strategy.name != "fedrema" and k_count > 1:
        # Instrumentation: emit the gap statistic for any strategy so
        # similarity dynamics can be observed without FedReMa running.
        _, probe_sets = _matching_pass([m.classifier for m in trained], state, strategy)
        delta_s_bar = float(sum(rs.max_gap for rs in probe_sets))

    if strategy.name == "local":
        new_models = trained
    elif strategy.name == "fedavg":
        theta = aggregate_extractors([(m.extractor, s) for m, s in zip(trained, state.sizes)])
        sizes = state.sizes.astype(np.float64)
        phi = _aggregate_classifiers([m.classifier for m in trained], sizes / sizes.sum())
        new_models = [ModelParams(theta.copy(), phi.copy()) for _ in range(k_count)]
    elif strategy.name == "fedper":
        theta = aggregate_extractors([(m.extractor, s) for m, s in zip(trained, state.sizes)])
        new_models = [ModelParams(theta.copy(), m.classifier.copy()) for m in trained]
    else:  # fedrema
        theta = aggregate_extractors([(m.extractor, s) for m, s in zip(trained, state.sizes)])
        head_uploads = [(m.classifier, int(s)) for m, s in zip(trained, state.sizes)]
        ccp_now = True if strategy.force_ccp_active else state.tracker.active
        if k_count == 1:
            # degenerate single-client run: always its own (only) peer
            ccp_now = True
            sets = [matching.RelevantSet(0, (0,), 0.0)]
            heads = [head_uploads[0][0].copy()]
            matching.dependency_record(state.dep, sets)
            delta_s_bar = 0.0
            relevant_sets = {0: (0,)}
        elif ccp_now:
            _, sets = _matching_pass([c for c, _ in head_uploads], state, strategy)
            if strategy.force_relevant_all:
                sets = [
                    matching.RelevantSet(k, tuple(range(k_count)), rs.max_gap)
                    for k, rs in enumerate(sets)
                ]
            heads = [aggregate_classifiers_ccp(head_uploads, rs) for rs in sets]
            matching.dependency_record(state.dep, sets)
            gaps = np.array([rs.max_gap for rs in sets])
            delta_s_bar = float(gaps.sum())
            relevant_sets = {rs.client: rs.peers for rs in sets}
            if not strategy.force_ccp_active:
                matching.ccp_update(state.tracker, gaps)
        else:
            heads = [
                aggregate_classifiers_post(
                    [c for c, _ in head_uploads],
                    matching.dependency_weights(state.dep, k))
                for k in range(k_count)
            ]
            if strategy.always_probe:
                # Diagnostic only: keep emitting the gap statistic after
                # the co-learning period without influencing aggregation.
                _, sets = _matching_pass([c for c, _ in head_uploads], state, strategy)
                delta_s_bar = float(sum(rs.max_gap for rs in sets))
        new_models = [ModelParams(theta.copy(), h) for h in heads]

    for k, m in enumerate(new_models):
        _check_finite(m, t, k)

    state.models = new_models
    state.round = t
    accs = [evaluate(m, d.test) for m, d in zip(new_models, datasets)]
    return RoundReport(
        round=t,
        accuracies=accs,
        mean_accuracy=float(np.mean(accs)),
        delta_s_bar=delta_s_bar,
        ccp_active=ccp_now,
        relevant_sets=relevant_sets,
    )
