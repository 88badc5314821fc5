"""Seed-deterministic open-model workload generators.

Two producer populations: edge sensors emitting readings at a fixed
sampling rate, and offline-analysis clients issuing queries at a fixed
per-client rate. Generation timing never depends on downstream progress
(open system model).

`SensorState` is the per-sensor reference generator used by the
standalone `generate` subcommand and the unit suite; `SiteGenerator` is
the vectorized equivalent the simulator uses so that hundreds of sensors
per site stay cheap. They share distributions and parameters but draw
from differently shaped RNG streams, so their outputs agree
statistically, not sample-for-sample.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .model import WorkloadParams
from .netsim import NS

EXCEED_OFFSET_SIGMA = 6.0  # channel-0 shift marking an exceedance reading


@dataclass
class SensorReading:
    sensor_id: int
    site_id: str
    seq: int
    gen_time: int  # sim-ns
    channels: tuple[float, ...]
    exceeds: bool


@dataclass
class AggregateRecord:
    site_id: str
    sensor_id: int
    window_seq: int
    gen_time: int           # window-start gen_time, sim-ns
    channel_means: tuple[float, ...]
    size_bits: int


class SensorBuffer:
    """Ring of the most recent buffer_size readings, oldest evicted first."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._ring: deque[SensorReading] = deque(maxlen=capacity)

    def append(self, reading: SensorReading) -> None:
        self._ring.append(reading)

    def __len__(self) -> int:
        return len(self._ring)

    def dump(self) -> list[SensorReading]:
        """All buffered readings in chronological order; non-destructive."""
        return list(self._ring)


class SensorState:
    """Reference per-sensor generator: Gaussian baseline readings.

    Channel values are standard-normal; with probability p the reading is
    an exceedance and channel 0 is shifted into the tail by a fixed
    offset, so the exceed flag is Bernoulli(p) by construction.
    """

    def __init__(self, sensor_id: int, site_id: str, params: WorkloadParams,
                 rng: np.random.Generator, header_bits: int = 256):
        self.sensor_id = sensor_id
        self.site_id = site_id
        self.params = params
        self.rng = rng
        self.header_bits = header_bits
        self.seq = 0
        self.buffer = SensorBuffer(params.buffer_size)
        self._agg_sum = np.zeros(params.n_channels)
        self._agg_count = 0
        self._agg_start_time = 0
        self._window_seq = 0

    def next_reading(self, gen_time: int) -> SensorReading:
        p = self.params
        channels = self.rng.standard_normal(p.n_channels)
        exceeds = bool(self.rng.random() < p.exceed_prob)
        if exceeds:
            channels[0] += EXCEED_OFFSET_SIGMA
        reading = SensorReading(self.sensor_id, self.site_id, self.seq,
                                gen_time, tuple(channels), exceeds)
        self.seq += 1
        self.buffer.append(reading)
        if self._agg_count == 0:
            self._agg_start_time = gen_time
        self._agg_sum += channels
        self._agg_count += 1
        return reading

    def maybe_aggregate(self) -> AggregateRecord | None:
        """Emit a window mean once every n_agg readings, else nothing."""
        p = self.params
        if self._agg_count < p.n_agg:
            return None
        means = self._agg_sum / self._agg_count
        rec = AggregateRecord(
            site_id=self.site_id, sensor_id=self.sensor_id,
            window_seq=self._window_seq, gen_time=self._agg_start_time,
            channel_means=tuple(means),
            size_bits=p.resolution_bits + self.header_bits)
        self._window_seq += 1
        self._agg_sum[:] = 0.0
        self._agg_count = 0
        return rec

    def dump_bits(self) -> int:
        """Size of a full buffer dump: payload plus fixed header."""
        return len(self.buffer) * self.params.resolution_bits + self.header_bits


class SiteGenerator:
    """Vectorized tick-level generator for all sensors of one site.

    Each call to `tick` produces one reading per sensor: the exceed mask,
    running per-channel aggregate sums, and (on every n_agg-th tick) the
    batch of aggregate records. Buffer contents are tracked as a fill
    level only; dump sizes are reconstructed from it.
    """

    def __init__(self, site_id: str, params: WorkloadParams,
                 rng: np.random.Generator, header_bits: int = 256):
        self.site_id = site_id
        self.params = params
        self.rng = rng
        self.header_bits = header_bits
        self.tick_count = 0
        self.buffer_fill = 0
        n = params.n_sensors
        self._agg_sum = np.zeros((n, params.n_channels))
        self._agg_start_time = 0
        self._window_seq = 0
        self.readings_total = 0
        self.exceeds_total = 0

    def tick(self, gen_time: int) -> tuple[np.ndarray, list[AggregateRecord]]:
        """Advance one sampling tick; returns (exceed mask, aggregates)."""
        p = self.params
        n = p.n_sensors
        values = self.rng.standard_normal((n, p.n_channels))
        exceeds = self.rng.random(n) < p.exceed_prob
        values[exceeds, 0] += EXCEED_OFFSET_SIGMA
        if self.tick_count % p.n_agg == 0:
            self._agg_start_time = gen_time
        self._agg_sum += values
        self.tick_count += 1
        self.buffer_fill = min(self.buffer_fill + 1, p.buffer_size)
        self.readings_total += n
        self.exceeds_total += int(exceeds.sum())

        aggregates: list[AggregateRecord] = []
        if self.tick_count % p.n_agg == 0:
            means = self._agg_sum / p.n_agg
            size = p.resolution_bits + self.header_bits
            for sensor_id in range(n):
                aggregates.append(AggregateRecord(
                    self.site_id, sensor_id, self._window_seq,
                    self._agg_start_time, tuple(means[sensor_id]), size))
            self._window_seq += 1
            self._agg_sum[:] = 0.0
        return exceeds, aggregates

    def quorum_threshold(self) -> int:
        import math
        return math.ceil(self.params.n_sensors * self.params.quorum_ratio)

    def dump_bits_per_sensor(self) -> int:
        return self.buffer_fill * self.params.resolution_bits + self.header_bits


# ---------------------------------------------------------------------------
# Offline-analysis clients
# ---------------------------------------------------------------------------

HOUR_NS = 3600 * NS


@dataclass
class Query:
    query_id: int
    client_id: int
    kind: str               # recent_1h | random_1h | scan_filter
    issue_time: int
    interval: tuple[int, int] | None  # [start, end) sim-ns; None for scans
    theta: float | None = None        # scan predicate threshold


class QueryGenerator:
    """Open-loop query source for one client.

    Kind frequencies follow (q_recent, q_random, q_scan); issuing never
    waits on outstanding responses.
    """

    _KINDS = ("recent_1h", "random_1h", "scan_filter")

    def __init__(self, client_id: int, params: WorkloadParams,
                 rng: np.random.Generator, history_start: int = 0,
                 scan_theta: float = 0.9):
        self.client_id = client_id
        self.params = params
        self.rng = rng
        self.history_start = history_start
        self.scan_theta = scan_theta
        self._next_qid = 0

    def next_query(self, now: int) -> Query:
        p = self.params
        u = self.rng.random()
        if u < p.q_recent:
            kind = "recent_1h"
        elif u < p.q_recent + p.q_random:
            kind = "random_1h"
        else:
            kind = "scan_filter"
        qid = self._next_qid
        self._next_qid += 1

        interval = None
        theta = None
        if kind == "recent_1h":
            interval = (max(self.history_start, now - HOUR_NS), now)
        elif kind == "random_1h":
            span = now - self.history_start
            if span <= HOUR_NS:
                interval = (self.history_start, now)
            else:
                start = self.history_start + int(self.rng.random() * (span - HOUR_NS))
                interval = (start, start + HOUR_NS)
        else:
            theta = self.scan_theta
        return Query(qid, self.client_id, kind, now, interval, theta)


# ---------------------------------------------------------------------------
# Standalone stream generation (the `generate` subcommand)
# ---------------------------------------------------------------------------

def generate_stream(params: WorkloadParams, seed: int, duration_s: float,
                    site_ids: list[str], out, scan_theta: float = 0.9) -> int:
    """Write newline-delimited JSON reading/query records to `out`.

    Returns the number of records written. Runs the scalar reference
    generators tick by tick, so output is exactly reproducible per seed.
    """
    params.validate()
    ss = np.random.SeedSequence(seed)
    site_seeds = ss.spawn(len(site_ids))
    client_seed, = ss.spawn(1)

    sensors = []
    for site_id, sseed in zip(site_ids, site_seeds):
        child = sseed.spawn(params.n_sensors)
        for i, cs in enumerate(child):
            sensors.append(SensorState(i, site_id, params,
                                       np.random.default_rng(cs)))
    clients = [QueryGenerator(i, params, np.random.default_rng(cseed),
                              scan_theta=scan_theta)
               for i, cseed in enumerate(client_seed.spawn(params.n_clients))]

    tick_ns = int(round(NS / params.sampling_rate_hz))
    query_ns = int(round(NS / params.request_rate_hz))
    end_ns = int(duration_s * NS)
    written = 0

    t = 0
    while t < end_ns:
        for s in sensors:
            r = s.next_reading(t)
            out.write(json.dumps({
                "type": "reading", "site": r.site_id, "sensor": r.sensor_id,
                "seq": r.seq, "t_ns": r.gen_time,
                "channels": [round(c, 6) for c in r.channels],
                "exceeds": r.exceeds}) + "\n")
            written += 1
            agg = s.maybe_aggregate()
            if agg is not None:
                out.write(json.dumps({
                    "type": "aggregate", "site": agg.site_id,
                    "sensor": agg.sensor_id, "window_seq": agg.window_seq,
                    "t_ns": agg.gen_time,
                    "channel_means": [round(c, 6) for c in agg.channel_means]}) + "\n")
                written += 1
        t += tick_ns

    t = query_ns
    while t < end_ns:
        for c in clients:
            q = c.next_query(t)
            out.write(json.dumps({
                "type": "query", "client": q.client_id, "query_id": q.query_id,
                "kind": q.kind, "t_ns": q.issue_time,
                "interval_ns": list(q.interval) if q.interval else None,
                "theta": q.theta}) + "\n")
            written += 1
        t += query_ns
    return written
