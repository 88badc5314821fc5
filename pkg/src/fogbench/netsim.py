"""Deterministic discrete-event core with link and compute emulation.

Simulated time is integer nanoseconds. A run is strictly single-threaded;
determinism (same seed + config => same trace) is a hard contract, so all
randomness flows through generators owned by the simulation.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ComputeSpec, LinkSpec

NS = 1_000_000_000  # ns per second


class SchedulingError(RuntimeError):
    """Scheduling an event into the simulated past is a logic error."""


@dataclass(order=True)
class Event:
    fire_time: int
    seq: int
    kind: str = field(compare=False)
    callback: object = field(compare=False)


@dataclass
class EventStats:
    processed: int = 0


class Simulator:
    """Event loop: a clock plus a (fire_time, seq)-ordered pending heap."""

    def __init__(self):
        self.now = 0
        self._heap: list[Event] = []
        self._seq = 0
        self.trace = None  # optional list of (time_ns, kind, detail) rows

    def schedule(self, fire_time: int, kind: str, callback) -> Event:
        fire_time = int(fire_time)
        if fire_time < self.now:
            raise SchedulingError(
                f"cannot schedule {kind!r} at {fire_time} before now={self.now}")
        ev = Event(fire_time, self._seq, kind, callback)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def schedule_in(self, delay_ns: int, kind: str, callback) -> Event:
        return self.schedule(self.now + int(delay_ns), kind, callback)

    def run_until(self, t_end: int) -> EventStats:
        t_end = int(t_end)
        if t_end < self.now:
            raise SchedulingError("t_end is in the past")
        stats = EventStats()
        heap = self._heap
        while heap and heap[0].fire_time <= t_end:
            ev = heapq.heappop(heap)
            self.now = ev.fire_time
            if self.trace is not None:
                self.trace.append((ev.fire_time, ev.kind))
            ev.callback()
            stats.processed += 1
        self.now = t_end
        return stats


# ---------------------------------------------------------------------------
# Link emulation
# ---------------------------------------------------------------------------

@dataclass
class LinkCounters:
    packets_sent: int = 0
    packets_delivered: int = 0
    retransmissions: int = 0
    duplicates_discarded: int = 0
    bits_offered: int = 0      # message payloads handed to the link
    bits_on_wire: int = 0      # includes retransmits and duplicates


class LinkState:
    """One directed link: FIFO serialization plus impairment effects.

    Transport on top of the raw link is a simplified reliable in-order
    contract: a lost or corrupted packet costs one retransmission timeout
    and is resent, a duplicate burns bandwidth but is discarded on
    receipt, a reordered packet is deferred by one in-flight position.
    The caller gets a single delivery completion time for the whole
    message (delivery completes when all fragments have arrived).
    """

    def __init__(self, spec: LinkSpec, distance_km: float, rng: np.random.Generator,
                 mtu_bits: int = 12_000, rto_factor: float = 2.0):
        spec.validate()
        self.spec = spec
        self.distance_km = distance_km
        self.rng = rng
        self.mtu_bits = mtu_bits
        self.rto_factor = rto_factor
        self.busy_until = 0  # ns; serialization queue tail
        self.counters = LinkCounters()
        self.prop_ns = distance_km * spec.delay_per_km_ms * 1e6

    def min_prop_ns(self) -> float:
        """Causality floor: fastest possible propagation (jitter at -3 sigma)."""
        return self.prop_ns * max(0.0, 1.0 - 3.0 * self.spec.jitter_frac)

    def transmit(self, now: int, size_bits: int) -> int:
        """Send one message; returns the delivery-complete time in ns."""
        if size_bits <= 0:
            raise ValueError("message size must be > 0")
        spec = self.spec
        c = self.counters
        n_pkts = math.ceil(size_bits / self.mtu_bits)
        sizes = np.full(n_pkts, self.mtu_bits, dtype=np.float64)
        last = size_bits - (n_pkts - 1) * self.mtu_bits
        sizes[-1] = last

        ser_ns = sizes / spec.bandwidth_bps * NS

        # attempts per packet: geometric in the combined loss/corrupt prob
        fail_p = 1.0 - (1.0 - spec.loss_rate) * (1.0 - spec.corrupt_rate)
        if fail_p > 0.0:
            attempts = self.rng.geometric(1.0 - fail_p, size=n_pkts)
        else:
            attempts = np.ones(n_pkts, dtype=np.int64)
        dups = (self.rng.random(n_pkts) < spec.dup_rate if spec.dup_rate > 0.0
                else np.zeros(n_pkts, dtype=bool))
        reorder = (self.rng.random(n_pkts) < spec.reorder_rate
                   if spec.reorder_rate > 0.0 else np.zeros(n_pkts, dtype=bool))
        if spec.jitter_frac > 0.0 and self.prop_ns > 0.0:
            j = self.rng.normal(0.0, spec.jitter_frac, size=n_pkts)
            np.clip(j, -3.0 * spec.jitter_frac, 3.0 * spec.jitter_frac, out=j)
        else:
            j = np.zeros(n_pkts)

        wire_copies = attempts + dups  # serializations consuming bandwidth
        start = max(self.busy_until, now)
        ser_end = start + np.cumsum(ser_ns * wire_copies)
        self.busy_until = int(round(ser_end[-1]))

        rto_ns = self.rto_factor * (self.prop_ns + ser_ns)
        penalty = (attempts - 1) * rto_ns
        prop = self.prop_ns * (1.0 + j)
        arrival = ser_end + penalty + prop
        # a reordered packet falls one in-flight position behind its successor
        arrival = arrival + reorder * ser_ns

        c.packets_sent += n_pkts
        c.packets_delivered += n_pkts
        c.retransmissions += int(attempts.sum()) - n_pkts
        c.duplicates_discarded += int(dups.sum())
        c.bits_offered += size_bits
        c.bits_on_wire += int((sizes * wire_copies).sum())

        return int(round(arrival.max()))


# ---------------------------------------------------------------------------
# Compute-capacity queueing
# ---------------------------------------------------------------------------

class NodeQueue:
    """FIFO work queue for one compute node.

    Service time is work_cost / effective cores; the memory capacity maps
    to a maximum queue length (mem / per-record footprint) and overflow is
    dropped and counted, never silently discarded. Tracks the time
    integral of queue length and cumulative busy time for metrics.
    """

    def __init__(self, node_id: str, spec: ComputeSpec, sim: Simulator,
                 record_footprint_bytes: int = 1024):
        spec.validate()
        self.node_id = node_id
        self.spec = spec
        self.sim = sim
        self.capacity = spec.effective_cores
        self.max_queue = max(1, int(spec.effective_mem_bytes // record_footprint_bytes))
        self.busy_until = 0
        self.qlen = 0
        self.drops = 0
        self.completed = 0
        self.busy_ns = 0
        self._q_integral = 0.0
        self._q_last_t = 0

    def _account(self, now: int) -> None:
        self._q_integral += self.qlen * (now - self._q_last_t)
        self._q_last_t = now

    def queue_integral(self) -> float:
        """Integral of queue length over time up to sim.now (ns units)."""
        now = self.sim.now
        return self._q_integral + self.qlen * (now - self._q_last_t)

    def queue_average(self, upto: int | None = None) -> float:
        """Time-averaged queue length from t=0 to `upto` (default: now)."""
        t = self.sim.now if upto is None else upto
        if t <= 0:
            return 0.0
        return (self._q_integral + self.qlen * (t - self._q_last_t)) / t

    def utilization(self, upto: int | None = None) -> float:
        t = self.sim.now if upto is None else upto
        if t <= 0:
            return 0.0
        busy = self.busy_ns - max(0, self.busy_until - t)
        return min(1.0, busy / t)

    def execute(self, work_cost: float, on_done=None) -> int | None:
        """Enqueue work costing `work_cost` core-seconds.

        Returns the completion time, or None if the queue is at its
        memory-derived limit (the drop is counted).
        """
        if work_cost < 0:
            raise ValueError("work_cost must be >= 0")
        now = self.sim.now
        if self.qlen >= self.max_queue:
            self.drops += 1
            return None
        service_ns = math.ceil(work_cost / self.capacity * NS)
        start = max(self.busy_until, now)
        done = start + service_ns
        self.busy_until = done
        self.busy_ns += service_ns
        self._account(now)
        self.qlen += 1
        if done == now:
            self._finish(now, on_done)
        else:
            self.sim.schedule(done, f"svc:{self.node_id}",
                              lambda t=done, cb=on_done: self._finish(t, cb))
        return done

    def _finish(self, t: int, on_done) -> None:
        self._account(t)
        self.qlen -= 1
        self.completed += 1
        if on_done is not None:
            on_done(t)
