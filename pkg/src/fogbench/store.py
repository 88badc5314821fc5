"""Reference cloud time-series store: the in-process baseline SUT.

N_cloud instances partition the sites; each instance keeps a
gen_time-sorted record log in flat arrays so interval queries are binary
searches and scans are vectorized passes. Ground-truth bookkeeping
(record ids, insertion counters) supports the staleness and verification
oracles without the harness peeking into SUT internals at query time.
"""

from __future__ import annotations

from array import array
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np

from .services import AnnotatedRecord
from .workload import Query


@dataclass
class QueryResult:
    query_id: int
    kind: str
    count: int
    newest_gen_time: int | None
    id_sum: int
    id_xor: int
    due_count: int          # records in result with gen_time <= staleness cutoff
    issue_time: int
    completion_time: int = 0
    served_by: tuple[str, ...] = ()

    def fingerprint(self) -> tuple[int, int, int]:
        return (self.count, self.id_sum, self.id_xor)


class StoreInstance:
    """One cloud store node: a gen_time-sorted log with a disk bound."""

    def __init__(self, instance_id: str, max_records: int):
        self.instance_id = instance_id
        self.max_records = max_records
        self.gen = array("q")
        self.ids = array("q")
        self.probs = array("d")
        self.watermark: int | None = None
        self.evictions = 0
        self.inserted = 0

    def __len__(self) -> int:
        return len(self.gen)

    def insert(self, gen_time: int, rec_id: int, prob: float) -> list[int]:
        """Insert one record; returns ids evicted by the disk bound."""
        idx = bisect_right(self.gen, gen_time)
        self.gen.insert(idx, gen_time)
        self.ids.insert(idx, rec_id)
        self.probs.insert(idx, prob)
        self.inserted += 1
        if self.watermark is None or gen_time >= self.watermark:
            self.watermark = gen_time
        evicted = []
        while len(self.gen) > self.max_records:
            self.gen.pop(0)
            evicted.append(self.ids.pop(0))
            self.probs.pop(0)
            self.evictions += 1
        return evicted

    def _views(self):
        n = len(self.gen)
        g = np.frombuffer(self.gen, dtype=np.int64, count=n)
        i = np.frombuffer(self.ids, dtype=np.int64, count=n)
        p = np.frombuffer(self.probs, dtype=np.float64, count=n)
        return g, i, p

    def interval(self, start: int, end: int, due_cutoff: int) -> tuple[int, int, int, int, int]:
        """(count, id_sum, id_xor, due_count, newest_gen) over [start, end)."""
        lo = bisect_left(self.gen, start)
        hi = bisect_left(self.gen, end)
        if hi <= lo:
            return 0, 0, 0, 0, -1
        _, ids, _ = self._views()
        sl = ids[lo:hi]
        due_hi = bisect_right(self.gen, due_cutoff, lo, hi)
        return (hi - lo, int(sl.sum()), int(np.bitwise_xor.reduce(sl)),
                due_hi - lo, self.gen[hi - 1])

    def scan(self, theta: float) -> tuple[int, int, int, int, int]:
        """(count, id_sum, id_xor, scanned, newest_gen) for prob > theta."""
        g, ids, probs = self._views()
        if len(g) == 0:
            return 0, 0, 0, 0, -1
        mask = probs > theta
        sel = ids[mask]
        newest = int(g[mask].max()) if sel.size else -1
        return (int(sel.size), int(sel.sum()),
                int(np.bitwise_xor.reduce(sel)) if sel.size else 0,
                len(g), newest)


class StoreCluster:
    """Site-partitioned cluster of identical store instances."""

    def __init__(self, site_ids: list[str], n_instances: int, max_records: int):
        self.instances = [StoreInstance(f"cloud-{i}", max_records)
                          for i in range(n_instances)]
        # round-robin site partitioning keeps interval queries mergeable
        self.partition = {sid: self.instances[i % n_instances]
                          for i, sid in enumerate(sorted(site_ids))}

    def instance_for(self, site_id: str) -> StoreInstance:
        try:
            return self.partition[site_id]
        except KeyError:
            raise KeyError(f"unknown site {site_id!r}") from None

    def insert(self, record: AnnotatedRecord, rec_id: int) -> list[int]:
        inst = self.instance_for(record.site_id)
        return inst.insert(record.gen_time, rec_id, record.event_probability)

    def total_records(self) -> int:
        return sum(len(i) for i in self.instances)

    def total_evictions(self) -> int:
        return sum(i.evictions for i in self.instances)

    def execute_query(self, q: Query, stale_threshold_ns: int) -> tuple[QueryResult, list[int]]:
        """Run a query against every instance and merge.

        Returns the merged result plus the per-instance touched-record
        counts (the cost model charges each instance for its share).
        """
        count = 0
        id_sum = 0
        id_xor = 0
        due = 0
        newest = -1
        touched = []
        due_cutoff = q.issue_time - stale_threshold_ns
        for inst in self.instances:
            if q.kind == "scan_filter":
                c, s, x, t, nw = inst.scan(q.theta)
            else:
                start, end = q.interval
                c, s, x, d, nw = inst.interval(start, end, due_cutoff)
                due += d
                t = c
            count += c
            id_sum += s
            id_xor ^= x
            newest = max(newest, nw)
            touched.append(t)
        res = QueryResult(
            query_id=q.query_id, kind=q.kind, count=count,
            newest_gen_time=None if newest < 0 else newest,
            id_sum=id_sum, id_xor=id_xor, due_count=due,
            issue_time=q.issue_time,
            served_by=tuple(i.instance_id for i in self.instances))
        return res, touched
