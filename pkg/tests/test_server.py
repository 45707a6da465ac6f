import copy
import dataclasses

import numpy as np
import pytest

from fedrema import data, matching, nn, server
from fedrema.config import ExperimentConfig
from fedrema.errors import ConfigurationError, DimensionError
from fedrema.runner import build_datasets, build_state


def scalar_model(theta_value, phi_value):
    """1-layer, 2-class toy model whose parameters are easy to read."""
    ext = nn.FeatureExtractor(
        [nn.Layer(np.full((2, 2), float(theta_value)), np.zeros(2), nn.IDENTITY)])
    clf = nn.Classifier(np.full((2, 2), float(phi_value)), np.zeros(2))
    return nn.ModelParams(ext, clf)


def params_equal(a, b):
    if not np.array_equal(a.classifier.weight, b.classifier.weight):
        return False
    if not np.array_equal(a.classifier.bias, b.classifier.bias):
        return False
    for la, lb in zip(a.extractor.layers, b.extractor.layers):
        if not np.array_equal(la.weight, lb.weight):
            return False
        if not np.array_equal(la.bias, lb.bias):
            return False
    return True


def desk_config(**overrides):
    base = dict(rounds=3, pool_per_class=400, samples_per_client=200,
                batch_size=50, local_epochs=2)
    base.update(overrides)
    return dataclasses.replace(ExperimentConfig(), **base).validate()


class TestAggregation:
    def test_extractor_idempotent(self):
        m = scalar_model(1.5, 0.0)
        out = server.aggregate_extractors([(m.extractor, 10), (m.extractor, 20)])
        np.testing.assert_array_equal(out.layers[0].weight, m.extractor.layers[0].weight)

    def test_extractor_equal_sizes_mean(self):
        a, b = scalar_model(1.0, 0.0), scalar_model(3.0, 0.0)
        out = server.aggregate_extractors([(a.extractor, 5), (b.extractor, 5)])
        np.testing.assert_allclose(out.layers[0].weight, 2.0)

    def test_extractor_weighted_mean(self):
        a, b = scalar_model(1.0, 0.0), scalar_model(2.0, 0.0)
        out = server.aggregate_extractors([(a.extractor, 100), (b.extractor, 300)])
        np.testing.assert_allclose(out.layers[0].weight, 1.75)

    def test_extractor_shape_mismatch(self):
        a = scalar_model(1.0, 0.0)
        bad = nn.FeatureExtractor([nn.Layer(np.ones((3, 2)), np.zeros(3), nn.IDENTITY)])
        with pytest.raises(DimensionError):
            server.aggregate_extractors([(a.extractor, 1), (bad, 1)])

    def test_head_self_only(self):
        a, b = scalar_model(0, 1.0), scalar_model(0, 9.0)
        uploads = [(a.classifier, 10), (b.classifier, 10)]
        rs = matching.RelevantSet(0, (0,), 0.5)
        out = server.aggregate_classifiers_ccp(uploads, rs)
        np.testing.assert_array_equal(out.weight, a.classifier.weight)

    def test_head_full_set_equals_fedavg(self):
        a, b = scalar_model(0, 1.0), scalar_model(0, 3.0)
        uploads = [(a.classifier, 7), (b.classifier, 7)]
        rs = matching.RelevantSet(0, (0, 1), 0.5)
        out = server.aggregate_classifiers_ccp(uploads, rs)
        np.testing.assert_allclose(out.weight, 2.0)

    def test_head_weighted(self):
        a, b = scalar_model(0, 1.0), scalar_model(0, 2.0)
        uploads = [(a.classifier, 100), (b.classifier, 300)]
        out = server.aggregate_classifiers_ccp(uploads, matching.RelevantSet(1, (0, 1), 0.5))
        np.testing.assert_allclose(out.weight, 1.75)

    def test_post_one_hot(self):
        heads = [scalar_model(0, v).classifier for v in (1.0, 5.0)]
        out = server.aggregate_classifiers_post(heads, np.array([0.0, 1.0]))
        np.testing.assert_allclose(out.weight, 5.0)

    def test_post_weighted(self):
        heads = [scalar_model(0, v).classifier for v in (1.0, 5.0)]
        out = server.aggregate_classifiers_post(heads, np.array([0.75, 0.25]))
        np.testing.assert_allclose(out.weight, 2.0)

    def test_post_uniform_equals_mean(self):
        heads = [scalar_model(0, v).classifier for v in (1.0, 2.0, 6.0)]
        out = server.aggregate_classifiers_post(heads, np.full(3, 1 / 3))
        np.testing.assert_allclose(out.weight, 3.0)

    def test_post_weights_must_normalize(self):
        heads = [scalar_model(0, v).classifier for v in (1.0, 5.0)]
        with pytest.raises(ConfigurationError):
            server.aggregate_classifiers_post(heads, np.array([0.9, 0.9]))


class TestRunRound:
    def run_rounds(self, config, n=None):
        datasets = build_datasets(config)
        state = build_state(config, datasets)
        strategy = server.Strategy(
            name=config.strategy, delta=config.delta,
            temperature=config.temperature)
        reports = []
        for _ in range(n or config.rounds):
            reports.append(server.run_round(
                state, strategy, datasets, epochs=config.local_epochs,
                batch_size=config.batch_size, lr=config.learning_rate))
        return state, reports

    def test_local_strategy_isolation(self):
        config = desk_config(strategy="local", clients=4, rounds=2)
        datasets = build_datasets(config)
        state_a = build_state(config, datasets)
        state_b = build_state(config, datasets)
        # perturb client 0 only in run b
        state_b.models[0].classifier.weight += 1.0
        strat = server.Strategy(name="local")
        for st in (state_a, state_b):
            for _ in range(2):
                server.run_round(st, strat, datasets, epochs=1, batch_size=50, lr=0.01)
        assert not params_equal(state_a.models[0], state_b.models[0])
        for k in range(1, 4):
            assert params_equal(state_a.models[k], state_b.models[k])

    def test_fedrema_single_client_degenerates(self):
        config = desk_config(strategy="fedrema", clients=1, num_groups=1,
                             dominant_per_group=3, rounds=2)
        datasets = build_datasets(config)
        state = build_state(config, datasets)
        state_solo = build_state(config, datasets)
        strat = server.Strategy(name="fedrema")
        for _ in range(2):
            report = server.run_round(state, strat, datasets, epochs=1,
                                      batch_size=50, lr=0.01)
            assert report.relevant_sets == {0: (0,)}
            server.run_round(state_solo, server.Strategy(name="local"), datasets,
                             epochs=1, batch_size=50, lr=0.01)
        # self-training: identical to the no-aggregation strategy
        assert params_equal(state.models[0], state_solo.models[0])

    def test_fedrema_first_round_group_precision(self):
        config = desk_config(strategy="fedrema", clients=10, iid_fraction=0.0,
                             samples_per_client=300, rounds=1)
        _, reports = self.run_rounds(config, n=1)
        sets = reports[0].relevant_sets
        fracs = []
        for k, peers in sets.items():
            others = [p for p in peers if p != k]
            if not others:
                continue
            same = sum(1 for p in others if p % 5 == k % 5)
            fracs.append(same / len(others))
        assert fracs and np.mean(fracs) >= 0.9

    def test_ccp_branch_exclusivity(self):
        config = desk_config(strategy="fedrema", rounds=8)
        _, reports = self.run_rounds(config)
        for r in reports:
            if r.ccp_active:
                assert r.delta_s_bar is not None and r.relevant_sets
            else:
                assert r.delta_s_bar is None and not r.relevant_sets
        flags = [r.ccp_active for r in reports]
        assert flags == sorted(flags, reverse=True)

    def test_nan_abort(self):
        config = desk_config(strategy="fedavg", clients=2, rounds=1)
        datasets = build_datasets(config)
        state = build_state(config, datasets)
        state.models[1].classifier.weight[0, 0] = np.nan
        with pytest.raises(FloatingPointError, match="round 1"):
            server.run_round(state, server.Strategy(name="fedavg"), datasets,
                             epochs=1, batch_size=50, lr=0.0)


class TestReductionIdentity:
    def test_forced_fedrema_equals_fedavg(self):
        config = desk_config(clients=6, rounds=5, samples_per_client=120)
        datasets = build_datasets(config)
        state_a = build_state(config, datasets)
        state_b = build_state(config, datasets)
        forced = server.Strategy(name="fedrema", force_relevant_all=True,
                                 force_ccp_active=True)
        fedavg = server.Strategy(name="fedavg")
        for _ in range(5):
            ra = server.run_round(state_a, forced, datasets, epochs=1,
                                  batch_size=40, lr=0.05)
            rb = server.run_round(state_b, fedavg, datasets, epochs=1,
                                  batch_size=40, lr=0.05)
            assert ra.accuracies == rb.accuracies
        for ma, mb in zip(state_a.models, state_b.models):
            assert params_equal(ma, mb)

    def test_parallel_matches_sequential(self):
        config = desk_config(strategy="fedrema", clients=5, rounds=3)
        datasets = build_datasets(config)
        state_seq = build_state(config, datasets)
        state_par = build_state(config, datasets)
        strat = server.Strategy(name="fedrema")
        for _ in range(3):
            server.run_round(state_seq, strat, datasets, epochs=1, batch_size=50,
                             lr=0.01, parallel=False)
            server.run_round(state_par, strat, datasets, epochs=1, batch_size=50,
                             lr=0.01, parallel=True)
        for ms, mp in zip(state_seq.models, state_par.models):
            assert params_equal(ms, mp)
