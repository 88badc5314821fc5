"""Reference pipeline services, expressed paradigm-neutrally.

Three handlers: edge aggregation & preprocessing on the gateway (quorum
event detection, aggregate forwarding), windowed inference annotation on
the on-premise node, and the warning path. Handlers carry declared
compute costs; the simulator charges those to node queues and moves the
messages, so the logic here stays pure and independently testable.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .workload import AggregateRecord


class RoutingError(ValueError):
    """A record arrived at a service that does not own its site."""


@dataclass
class CollectionTrigger:
    site_id: str
    trigger_time: int
    exceed_count: int


@dataclass
class EventReport:
    site_id: str
    trigger_time: int
    exceed_count: int
    n_dumps: int
    total_bits: int


@dataclass
class AnnotatedRecord:
    site_id: str
    sensor_id: int
    window_seq: int
    gen_time: int
    channel_means: tuple[float, ...]
    size_bits: int
    event_probability: float
    inference_time: int


class GatewayService:
    """Edge aggregation & preprocessing for one site.

    Counts distinct sensors reporting threshold exceedance within a
    sampling tick; when the count first passes ceil(n_sensors * y) a
    single CollectionTrigger is emitted for that tick. The counter resets
    every tick, and duplicate reports from one sensor in a tick count
    once.
    """

    def __init__(self, site_id: str, n_sensors: int, quorum_ratio: float):
        self.site_id = site_id
        self.n_sensors = n_sensors
        self.threshold = math.ceil(n_sensors * quorum_ratio)
        self._tick_id = None
        self._reported: set[int] = set()
        self._triggered = False
        self.triggers = 0
        self.aggregates_forwarded = 0

    def edge_on_exceed(self, tick_id: int, sensor_id: int,
                       now: int) -> CollectionTrigger | None:
        if tick_id != self._tick_id:
            self._tick_id = tick_id
            self._reported.clear()
            self._triggered = False
        if sensor_id in self._reported:
            return None
        self._reported.add(sensor_id)
        if not self._triggered and len(self._reported) > self.threshold:
            self._triggered = True
            self.triggers += 1
            return CollectionTrigger(self.site_id, now, len(self._reported))
        return None

    def edge_on_exceed_batch(self, tick_id: int, distinct_count: int,
                             now: int) -> CollectionTrigger | None:
        """Tick-level form of edge_on_exceed for pre-deduplicated counts.

        Equivalent to feeding `distinct_count` distinct sensor reports for
        one tick through edge_on_exceed.
        """
        self._tick_id = tick_id
        self._reported.clear()
        self._triggered = False
        if distinct_count > self.threshold:
            self._triggered = True
            self.triggers += 1
            return CollectionTrigger(self.site_id, now, distinct_count)
        return None

    def edge_on_aggregate(self, record: AggregateRecord) -> AggregateRecord:
        """Validate and pass the record on toward inference."""
        if record.site_id != self.site_id:
            raise RoutingError(
                f"record for site {record.site_id!r} at gateway {self.site_id!r}")
        self.aggregates_forwarded += 1
        return record

    def assemble_report(self, trigger: CollectionTrigger, n_dumps: int,
                        total_bits: int) -> EventReport:
        if n_dumps != self.n_sensors:
            raise ValueError(
                f"report needs {self.n_sensors} dumps, got {n_dumps}")
        return EventReport(self.site_id, trigger.trigger_time,
                           trigger.exceed_count, n_dumps, total_bits)


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


class InferenceService:
    """Windowed annotation standing in for the trained forecasting model.

    Per site, keeps a sliding window of the channel-0 means of the last
    lstm_window_s of aggregate records (by generation time) and maps the
    window mean through a fixed logistic. Deterministic: identical window
    contents always yield the identical probability. A real model can be
    plugged in via `probability_fn` with the same signature
    (window mean -> probability).
    """

    def __init__(self, window_s: float, a: float = 2.0, b: float = -4.0,
                 warning_threshold: float = 0.95, probability_fn=None):
        self.window_ns = int(window_s * 1_000_000_000)
        self.a = a
        self.b = b
        self.warning_threshold = warning_threshold
        self.probability_fn = probability_fn
        self._windows: dict[str, deque] = {}
        self._sums: dict[str, float] = {}
        self.warnings = 0
        self.annotated = 0

    def window_len(self, site_id: str) -> int:
        return len(self._windows.get(site_id, ()))

    def infer_annotate(self, record: AggregateRecord,
                       now: int) -> AnnotatedRecord:
        site = record.site_id
        win = self._windows.get(site)
        if win is None:
            win = self._windows[site] = deque()
            self._sums[site] = 0.0
        c0 = record.channel_means[0]
        win.append((record.gen_time, c0))
        self._sums[site] += c0
        floor = record.gen_time - self.window_ns
        while win[0][0] < floor:
            _, old = win.popleft()
            self._sums[site] -= old
        mean = self._sums[site] / len(win)
        if self.probability_fn is not None:
            prob = float(self.probability_fn(mean))
        else:
            prob = logistic(self.a * mean + self.b)
        prob = min(1.0, max(0.0, prob))
        if prob > self.warning_threshold:
            self.warnings += 1
        self.annotated += 1
        return AnnotatedRecord(
            site_id=site, sensor_id=record.sensor_id,
            window_seq=record.window_seq, gen_time=record.gen_time,
            channel_means=record.channel_means, size_bits=record.size_bits,
            event_probability=prob, inference_time=now)
