"""The SUT boundary: a narrow binding every system-under-test implements.

Two bindings ship with the harness: the in-process reference store, and
an external binding speaking a length-prefixed wire protocol so a fog
data-processing system in any language can be benchmarked.

Wire protocol (normative)
-------------------------
Stream transport. Each frame is:

    4-byte big-endian length L  |  1-byte opcode  |  (L - 1) bytes body

so L covers the opcode plus body. Opcodes:

    0x01 INSERT  body: {"site": str, "gen_time": int, "rec_id": int,
                        "prob": float}
    0x02 QUERY   body: {"kind": str, "interval": [start, end] | null,
                        "theta": float | null, "issue_time": int,
                        "query_id": int, "stale_ns": int}
    0x03 RESULT  body: {"count", "id_sum", "id_xor", "due_count",
                        "newest", "touched": [int per instance]}
    0x04 ACK     body: {"evicted": [rec_id, ...]}
    0x05 ERROR   body: {"error": str}

Bodies are UTF-8 JSON with the field names above (matching the record
and query type definitions). One request is in flight per connection;
clients open connection pools for parallelism.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading

OP_INSERT = 0x01
OP_QUERY = 0x02
OP_RESULT = 0x03
OP_ACK = 0x04
OP_ERROR = 0x05


class AdapterError(RuntimeError):
    pass


def write_frame(sock: socket.socket, opcode: int, body: dict) -> None:
    payload = json.dumps(body, sort_keys=True).encode()
    sock.sendall(struct.pack(">IB", len(payload) + 1, opcode) + payload)


def read_frame(sock: socket.socket) -> tuple[int, dict]:
    header = _read_exact(sock, 5)
    length, opcode = struct.unpack(">IB", header)
    body = _read_exact(sock, length - 1)
    return opcode, json.loads(body.decode())


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise AdapterError("connection closed mid-frame")
        buf += chunk
    return buf


class InProcessBinding:
    """Reference binding: direct calls into the in-process store cluster."""

    mode = "in_process"
    supports_event_reports = True
    supports_scan = True

    def __init__(self, cluster):
        self.cluster = cluster

    def ingest(self, record, rec_id: int):
        return self.cluster.insert(record, rec_id)

    def query(self, q, stale_ns: int):
        return self.cluster.execute_query(q, stale_ns)

    def evictions(self) -> int:
        return self.cluster.total_evictions()

    def close(self) -> None:
        pass


class ExternalBinding:
    """Wire-protocol client binding for an external SUT endpoint.

    Requests are strictly serialized per connection. Timeouts and
    protocol errors surface as None returns; the harness counts them as
    failures and continues.
    """

    mode = "external"
    supports_event_reports = False
    supports_scan = True

    def __init__(self, host: str, port: int, timeout_s: float = 5.0):
        self.host = host
        self.port = port
        self.timeout_s = timeout_s
        self._sock = None
        self._evictions = 0
        self.protocol_errors = 0

    def connect(self) -> None:
        self._sock = socket.create_connection((self.host, self.port),
                                              timeout=self.timeout_s)

    def _roundtrip(self, opcode: int, body: dict):
        try:
            if self._sock is None:
                self.connect()
            write_frame(self._sock, opcode, body)
            return read_frame(self._sock)
        except (OSError, AdapterError, json.JSONDecodeError):
            self.protocol_errors += 1
            if self._sock is not None:
                try:
                    self._sock.close()
                finally:
                    self._sock = None
            return None, None

    def ingest(self, record, rec_id: int):
        op, body = self._roundtrip(OP_INSERT, {
            "site": record.site_id, "gen_time": record.gen_time,
            "rec_id": rec_id, "prob": record.event_probability})
        if op != OP_ACK:
            if op is not None:
                self.protocol_errors += 1
            return None
        evicted = body.get("evicted", [])
        self._evictions += len(evicted)
        return evicted

    def query(self, q, stale_ns: int):
        op, body = self._roundtrip(OP_QUERY, {
            "kind": q.kind,
            "interval": list(q.interval) if q.interval else None,
            "theta": q.theta, "issue_time": q.issue_time,
            "query_id": q.query_id, "stale_ns": stale_ns})
        if op != OP_RESULT:
            if op is not None:
                self.protocol_errors += 1
            return None, None
        from .store import QueryResult
        res = QueryResult(
            query_id=q.query_id, kind=q.kind, count=body["count"],
            newest_gen_time=body["newest"] if body["newest"] >= 0 else None,
            id_sum=body["id_sum"], id_xor=body["id_xor"],
            due_count=body["due_count"], issue_time=q.issue_time)
        return res, body["touched"]

    def evictions(self) -> int:
        return self._evictions

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None


class StoreServer:
    """Hosts a reference store cluster behind the wire protocol."""

    def __init__(self, cluster, host: str = "127.0.0.1", port: int = 0):
        self.cluster = cluster
        outer = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                while True:
                    try:
                        opcode, body = read_frame(self.request)
                    except AdapterError:
                        return
                    try:
                        reply_op, reply = outer._dispatch(opcode, body)
                    except Exception as exc:  # malformed request
                        reply_op, reply = OP_ERROR, {"error": str(exc)}
                    write_frame(self.request, reply_op, reply)

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self.port = self._server.server_address[1]
        self._thread = None
        self._lock = threading.Lock()

    def _dispatch(self, opcode: int, body: dict):
        with self._lock:  # per-cluster serialized ingest and query
            if opcode == OP_INSERT:
                inst = self.cluster.instance_for(body["site"])
                evicted = inst.insert(body["gen_time"], body["rec_id"],
                                      body["prob"])
                return OP_ACK, {"evicted": evicted}
            if opcode == OP_QUERY:
                from .workload import Query
                q = Query(body["query_id"], -1, body["kind"],
                          body["issue_time"],
                          tuple(body["interval"]) if body["interval"] else None,
                          body["theta"])
                res, touched = self.cluster.execute_query(q, body["stale_ns"])
                return OP_RESULT, {
                    "count": res.count, "id_sum": res.id_sum,
                    "id_xor": res.id_xor, "due_count": res.due_count,
                    "newest": (res.newest_gen_time
                               if res.newest_gen_time is not None else -1),
                    "touched": touched}
            raise AdapterError(f"unknown opcode {opcode:#x}")

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
