import random
import socket
import struct

import pytest

from fogbench.adapter import (OP_ERROR, OP_QUERY, ExternalBinding,
                              InProcessBinding, StoreServer, read_frame,
                              write_frame)
from fogbench.services import AnnotatedRecord
from fogbench.store import StoreCluster
from fogbench.workload import Query

SITES = ["a", "b", "c", "d", "e", "f"]


def ann(site, gen, prob=0.0):
    return AnnotatedRecord(site_id=site, sensor_id=0, window_seq=0,
                           gen_time=gen, channel_means=(0.0,), size_bits=448,
                           event_probability=prob, inference_time=gen)


@pytest.fixture
def server():
    cluster = StoreCluster(SITES, 3, 500)
    srv = StoreServer(cluster, port=0)
    srv.start()
    yield srv
    srv.stop()


def seeded_records(seed, n):
    rng = random.Random(seed)
    return [(rng.choice(SITES), rng.randrange(0, 100_000), rng.random(), i)
            for i in range(n)]


class TestLoopbackEquivalence:
    def test_state_identical_after_ingest(self, server):
        direct = StoreCluster(SITES, 3, 500)
        inproc = InProcessBinding(direct)
        ext = ExternalBinding("127.0.0.1", server.port)
        for site, gen, prob, i in seeded_records(3, 1000):
            a = inproc.ingest(ann(site, gen, prob), i)
            b = ext.ingest(ann(site, gen, prob), i)
            assert a == b
        for da, db in zip(direct.instances, server.cluster.instances):
            assert list(da.gen) == list(db.gen)
            assert list(da.ids) == list(db.ids)
            assert list(da.probs) == list(db.probs)
        assert inproc.evictions() == ext.evictions()
        ext.close()

    def test_query_results_match(self, server):
        direct = StoreCluster(SITES, 3, 500)
        inproc = InProcessBinding(direct)
        ext = ExternalBinding("127.0.0.1", server.port)
        for site, gen, prob, i in seeded_records(8, 400):
            inproc.ingest(ann(site, gen, prob), i)
            ext.ingest(ann(site, gen, prob), i)
        queries = [
            Query(0, 0, "random_1h", 200_000, (10_000, 60_000)),
            Query(1, 0, "recent_1h", 200_000, (0, 200_000)),
            Query(2, 0, "scan_filter", 200_000, None, 0.7),
        ]
        for q in queries:
            ra, ta = inproc.query(q, stale_ns=50_000)
            rb, tb = ext.query(q, stale_ns=50_000)
            assert ra.fingerprint() == rb.fingerprint()
            assert ra.due_count == rb.due_count
            assert ra.newest_gen_time == rb.newest_gen_time
            assert ta == tb
        assert ext.protocol_errors == 0
        ext.close()


class TestFailureModes:
    def test_unreachable_endpoint(self):
        ext = ExternalBinding("127.0.0.1", 1, timeout_s=0.2)
        assert ext.ingest(ann("a", 0), 0) is None
        assert ext.query(Query(0, 0, "recent_1h", 0, (0, 1)), 0) == (None, None)
        assert ext.protocol_errors == 2

    def test_unknown_opcode_gets_error(self, server):
        with socket.create_connection(("127.0.0.1", server.port), 2) as s:
            write_frame(s, 0x7F, {})
            op, body = read_frame(s)
        assert op == OP_ERROR
        assert "opcode" in body["error"]

    def test_malformed_body_gets_error(self, server):
        with socket.create_connection(("127.0.0.1", server.port), 2) as s:
            write_frame(s, OP_QUERY, {"nope": True})
            op, body = read_frame(s)
        assert op == OP_ERROR

    def test_unknown_site_gets_error(self, server):
        ext = ExternalBinding("127.0.0.1", server.port)
        assert ext.ingest(ann("atlantis", 0), 0) is None
        assert ext.protocol_errors == 1
        ext.close()

    def test_truncated_frame_drops_connection(self, server):
        with socket.create_connection(("127.0.0.1", server.port), 2) as s:
            s.sendall(struct.pack(">IB", 100, OP_QUERY) + b"{")
            s.shutdown(socket.SHUT_WR)
            assert s.recv(1) == b""  # server closes without replying


class TestFraming:
    def test_roundtrip(self):
        a, b = socket.socketpair()
        try:
            write_frame(a, OP_QUERY, {"x": [1, 2, 3]})
            op, body = read_frame(b)
            assert op == OP_QUERY
            assert body == {"x": [1, 2, 3]}
        finally:
            a.close()
            b.close()

    def test_length_covers_opcode(self):
        a, b = socket.socketpair()
        try:
            write_frame(a, OP_QUERY, {})
            raw = b.recv(64)
            length = struct.unpack(">I", raw[:4])[0]
            assert length == len(raw) - 4  # opcode included, prefix not
        finally:
            a.close()
            b.close()
