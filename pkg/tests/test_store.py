import random

import numpy as np
import pytest

from fogbench.services import AnnotatedRecord
from fogbench.store import StoreCluster, StoreInstance
from fogbench.workload import Query


def ann(site, gen, prob=0.0, seq=0):
    return AnnotatedRecord(site_id=site, sensor_id=0, window_seq=seq,
                           gen_time=gen, channel_means=(0.0,), size_bits=448,
                           event_probability=prob, inference_time=gen)


def brute_interval(records, start, end, due_cutoff):
    """Oracle over a plain (gen, rec_id) list, any order."""
    hit = [(g, i) for g, i in records if start <= g < end]
    xor = 0
    for _, i in hit:
        xor ^= i
    due = sum(1 for g, _ in hit if g <= due_cutoff)
    newest = max((g for g, _ in hit), default=-1)
    return (len(hit), sum(i for _, i in hit), xor, due, newest)


class TestInstance:
    def test_sorted_after_out_of_order_inserts(self):
        inst = StoreInstance("i", 100)
        for g in (5, 1, 9, 3, 3, 7):
            inst.insert(g, g * 10, 0.0)
        assert list(inst.gen) == sorted(inst.gen)

    def test_watermark_tracks_max_gen(self):
        inst = StoreInstance("i", 100)
        inst.insert(10, 0, 0.0)
        assert inst.watermark == 10
        inst.insert(4, 1, 0.0)   # late arrival does not move it back
        assert inst.watermark == 10
        inst.insert(12, 2, 0.0)
        assert inst.watermark == 12

    def test_eviction_oldest_first(self):
        inst = StoreInstance("i", 3)
        for g in (4, 2, 8):
            assert inst.insert(g, g, 0.0) == []
        assert inst.insert(6, 6, 0.0) == [2]   # smallest gen leaves first
        assert inst.insert(10, 10, 0.0) == [4]
        assert inst.evictions == 2
        assert list(inst.gen) == [6, 8, 10]

    def test_interval_half_open(self):
        inst = StoreInstance("i", 100)
        for g in (1, 2, 3, 4, 5):
            inst.insert(g, g, 0.0)
        count, id_sum, _, _, newest = inst.interval(2, 4, due_cutoff=10)
        assert (count, id_sum, newest) == (2, 5, 3)

    def test_interval_matches_oracle(self):
        rng = random.Random(7)
        inst = StoreInstance("i", 10_000)
        records = []
        for i in range(2000):
            g = rng.randrange(0, 1000)
            inst.insert(g, i, 0.0)
            records.append((g, i))
        for _ in range(200):
            a = rng.randrange(0, 1100)
            b = rng.randrange(0, 1100)
            cut = rng.randrange(0, 1100)
            got = inst.interval(min(a, b), max(a, b), cut)
            assert got == brute_interval(records, min(a, b), max(a, b), cut)

    def test_scan_threshold(self):
        inst = StoreInstance("i", 100)
        for i, p in enumerate((0.1, 0.5, 0.9, 0.95)):
            inst.insert(i, i, p)
        count, id_sum, _, scanned, newest = inst.scan(0.9)
        assert (count, id_sum, scanned, newest) == (1, 3, 4, 3)
        assert inst.scan(1.0)[0] == 0  # theta=1 selects nothing
        assert inst.scan(-0.1)[0] == 4

    def test_empty_instance(self):
        inst = StoreInstance("i", 10)
        assert inst.interval(0, 100, 50) == (0, 0, 0, 0, -1)
        assert inst.scan(0.5) == (0, 0, 0, 0, -1)


class TestCluster:
    SITES = ["a", "b", "c", "d", "e", "f"]

    def make(self, n_instances=3, max_records=10_000):
        return StoreCluster(self.SITES, n_instances, max_records)

    def fill(self, cluster, seed=0, n=1000):
        rng = random.Random(seed)
        records = []
        for i in range(n):
            site = rng.choice(self.SITES)
            g = rng.randrange(0, 10_000)
            cluster.insert(ann(site, g), i)
            records.append((g, i))
        return records

    def query(self, kind, interval=None, theta=None, issue=20_000):
        return Query(query_id=0, client_id=0, kind=kind, issue_time=issue,
                     interval=interval, theta=theta)

    def test_partition_assignment_is_stable(self):
        c1 = self.make()
        c2 = StoreCluster(list(reversed(self.SITES)), 3, 100)
        for s in self.SITES:
            assert (c1.instance_for(s).instance_id
                    == c2.instance_for(s).instance_id)

    def test_unknown_site_rejected(self):
        with pytest.raises(KeyError):
            self.make().instance_for("nowhere")

    def test_merged_interval_matches_oracle(self):
        for n_instances in (1, 2, 3, 6):
            cluster = self.make(n_instances)
            records = self.fill(cluster, seed=n_instances)
            q = self.query("random_1h", interval=(2000, 7000))
            res, touched = cluster.execute_query(q, stale_threshold_ns=15_000)
            oracle = brute_interval(records, 2000, 7000, 20_000 - 15_000)
            assert res.fingerprint() == oracle[:3]
            assert res.due_count == oracle[3]
            assert res.newest_gen_time == oracle[4]
            assert len(touched) == n_instances
            assert sum(touched) == res.count

    def test_fingerprint_invariant_to_partitioning(self):
        fps = []
        for n_instances in (1, 2, 3, 6):
            cluster = self.make(n_instances)
            self.fill(cluster, seed=42)
            q = self.query("random_1h", interval=(0, 10_000))
            res, _ = cluster.execute_query(q, stale_threshold_ns=0)
            fps.append(res.fingerprint())
        assert len(set(fps)) == 1

    def test_scan_touches_everything(self):
        cluster = self.make(3)
        rng = np.random.default_rng(1)
        for i in range(300):
            site = self.SITES[i % 6]
            cluster.insert(ann(site, i, prob=float(rng.random())), i)
        q = self.query("scan_filter", theta=0.8)
        res, touched = cluster.execute_query(q, stale_threshold_ns=0)
        assert sum(touched) == 300
        assert 0 < res.count < 300

    def test_eviction_counted_per_instance(self):
        cluster = self.make(2, max_records=5)
        self.fill(cluster, n=100)
        assert cluster.total_records() == 10
        assert cluster.total_evictions() == 90
