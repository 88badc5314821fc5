import math
import random

import numpy as np
import pytest

from fogbench.model import quorum_probability
from fogbench.services import (GatewayService, InferenceService, RoutingError,
                               logistic)
from fogbench.workload import AggregateRecord

NS = 1_000_000_000


def rec(site="s", sensor=0, window=0, gen=0, means=(0.0, 0.0, 0.0)):
    return AggregateRecord(site, sensor, window, gen, means, 448)


class TestQuorum:
    def test_threshold_boundary(self):
        gw = GatewayService("s", 300, 0.2)
        for i in range(60):
            assert gw.edge_on_exceed(0, i, 0) is None
        trigger = gw.edge_on_exceed(0, 60, 0)
        assert trigger is not None
        assert trigger.exceed_count == 61

    def test_single_trigger_per_tick(self):
        gw = GatewayService("s", 300, 0.2)
        triggers = [gw.edge_on_exceed(0, i, 0) for i in range(300)]
        assert sum(t is not None for t in triggers) == 1

    def test_counter_resets_each_tick(self):
        gw = GatewayService("s", 10, 0.5)
        for tick in range(5):
            for i in range(5):
                assert gw.edge_on_exceed(tick, i, tick) is None

    def test_duplicate_sensor_counted_once(self):
        gw = GatewayService("s", 10, 0.5)  # threshold ceil(5) = 5
        for _ in range(100):
            gw.edge_on_exceed(0, 3, 0)
        assert gw.triggers == 0

    def test_y_one_never_triggers(self):
        gw = GatewayService("s", 50, 1.0)
        for i in range(50):
            assert gw.edge_on_exceed(0, i, 0) is None

    def test_permutation_invariance(self):
        for seed in range(5):
            ids = list(range(100))
            random.Random(seed).shuffle(ids)
            gw = GatewayService("s", 100, 0.3)
            fired = [i for i in ids if gw.edge_on_exceed(0, i, 0)]
            assert len(fired) == 1  # always exactly one trigger, any order

    def test_batch_equivalent(self):
        gw_a = GatewayService("s", 100, 0.3)
        gw_b = GatewayService("s", 100, 0.3)
        for count in (10, 31, 30, 95):
            tick = count  # distinct tick ids
            a = any(gw_a.edge_on_exceed(tick, i, 0) for i in range(count))
            b = gw_b.edge_on_exceed_batch(tick, count, 0) is not None
            assert a == b

    def test_empirical_frequency_matches_model(self):
        n, y, p = 40, 0.2, 0.15
        gw = GatewayService("s", n, y)
        rng = np.random.default_rng(12)
        ticks = 20_000
        for t in range(ticks):
            gw.edge_on_exceed_batch(t, int(rng.binomial(n, p)), t)
        expected = quorum_probability(n, y, p)
        assert gw.triggers / ticks == pytest.approx(expected, rel=0.10)


class TestAggregateForwarding:
    def test_forwards_local_site(self):
        gw = GatewayService("s", 10, 0.5)
        out = gw.edge_on_aggregate(rec(site="s"))
        assert out.site_id == "s"
        assert gw.aggregates_forwarded == 1

    def test_rejects_unknown_site(self):
        gw = GatewayService("s", 10, 0.5)
        with pytest.raises(RoutingError):
            gw.edge_on_aggregate(rec(site="other"))


class TestInference:
    def test_baseline_probability(self):
        svc = InferenceService(10.0)
        out = svc.infer_annotate(rec(means=(0.0, 1.0, -1.0)), now=5)
        assert out.event_probability == pytest.approx(logistic(-4), abs=1e-12)
        assert out.inference_time == 5

    def test_monotone_in_window_mean(self):
        probs = []
        for mean in (0.0, 1.0, 2.0, 4.0, 8.0):
            svc = InferenceService(10.0)
            out = svc.infer_annotate(rec(means=(mean, 0, 0)), now=0)
            probs.append(out.event_probability)
        assert probs == sorted(probs)
        assert probs[-1] > 0.99

    def test_singleton_window(self):
        svc = InferenceService(10.0)
        out = svc.infer_annotate(rec(means=(1.0, 0, 0), gen=0), now=0)
        assert out.event_probability == pytest.approx(logistic(-2), abs=1e-12)

    def test_window_eviction(self):
        svc = InferenceService(window_s=1.0)
        svc.infer_annotate(rec(gen=0, means=(10.0, 0, 0)), now=0)
        assert svc.window_len("s") == 1
        svc.infer_annotate(rec(gen=int(0.5 * NS), means=(10.0, 0, 0)), now=1)
        assert svc.window_len("s") == 2
        svc.infer_annotate(rec(gen=2 * NS, means=(0.0, 0, 0)), now=2)
        assert svc.window_len("s") == 1  # old records fell out

    def test_pure_function_of_window(self):
        a = InferenceService(10.0)
        b = InferenceService(10.0)
        seq = [rec(gen=i, means=(0.1 * i, 0, 0)) for i in range(20)]
        pa = [a.infer_annotate(r, now=i).event_probability
              for i, r in enumerate(seq)]
        pb = [b.infer_annotate(r, now=i + 7).event_probability
              for i, r in enumerate(seq)]
        assert pa == pb

    def test_sites_isolated(self):
        svc = InferenceService(10.0)
        svc.infer_annotate(rec(site="a", means=(100.0, 0, 0)), now=0)
        out = svc.infer_annotate(rec(site="b", means=(0.0, 0, 0)), now=0)
        assert out.event_probability == pytest.approx(logistic(-4), abs=1e-12)

    def test_warning_counter(self):
        svc = InferenceService(10.0, warning_threshold=0.5)
        svc.infer_annotate(rec(means=(10.0, 0, 0)), now=0)
        assert svc.warnings == 1

    def test_pluggable_model_hook(self):
        svc = InferenceService(10.0, probability_fn=lambda m: 0.42)
        out = svc.infer_annotate(rec(), now=0)
        assert out.event_probability == 0.42

    def test_report_assembly_requires_all_dumps(self):
        gw = GatewayService("s", 10, 0.2)
        trig = gw.edge_on_exceed_batch(0, 5, 0)
        assert trig is not None
        with pytest.raises(ValueError):
            gw.assemble_report(trig, 9, 1000)
        report = gw.assemble_report(trig, 10, 1000)
        assert report.n_dumps == 10
