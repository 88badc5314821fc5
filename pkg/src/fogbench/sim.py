"""End-to-end benchmark run: wires generators, links, services, store and
metric collection into one deterministic simulation.

Data path per aggregate record:
  sensor --(radio link)--> gateway [c_agg] --(uplink)--> on-premise
  [c_inf, annotation] --(fiber)--> cloud instance [c_ins] --> store, ack.

Quorum-triggered buffer dumps follow the same hops but skip annotation
and land as raw event archives (counted, not queryable).

Offline clients issue queries directly at the cloud; query service cost
is charged to every instance the query touches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .model import BenchConfig, derived_rates
from .metrics import (LatencySample, QueryRecord, percentile_block,
                      propagation_offset, staleness_violation_ratio)
from .netsim import NS, LinkState, NodeQueue, Simulator
from .services import GatewayService, InferenceService
from .store import StoreCluster
from .workload import QueryGenerator, SiteGenerator

SCHEMA_VERSION = 1


@dataclass
class OmniscientLog:
    """Ground truth for every annotated record the pipeline produced."""

    gens: list = field(default_factory=list)      # gen_time, append order = gen order
    sites: list = field(default_factory=list)
    probs: list = field(default_factory=list)     # filled at annotation
    acks: list = field(default_factory=list)      # insert ack sim-ns, -1 if never
    state: bytearray = field(default_factory=bytearray)  # 0=in flight 1=ingested 2=dropped 3=evicted

    def new_record(self, gen_time: int, site_id: str) -> int:
        rec_id = len(self.gens)
        self.gens.append(gen_time)
        self.sites.append(site_id)
        self.probs.append(float("nan"))
        self.acks.append(-1)
        self.state.append(0)
        return rec_id


@dataclass
class RunOutput:
    report: dict
    samples: list[LatencySample]
    query_log: list[QueryRecord]
    edge_first_half_avg: float
    edge_second_half_avg: float
    edge_drops: int
    cloud_utilization: float
    verify_failures: int


class VerificationError(AssertionError):
    pass


class BenchmarkRun:
    def __init__(self, config: BenchConfig, binding=None):
        config.validate()
        self.cfg = config
        self.params = config.effective_workload()
        self.run_s = config.run
        self.sim = Simulator()
        if config.run.trace:
            self.sim.trace = []
        self.duration_ns = int(config.run.duration_s * NS)
        self.warmup_ns = int(self.duration_ns * config.run.warmup_frac)
        self.tick_ns = int(round(NS / self.params.sampling_rate_hz))

        topo = config.topology
        rs = config.run
        ss = np.random.SeedSequence(rs.seed)
        n_sites = len(topo.sites)
        gen_seeds = ss.spawn(n_sites)
        link_seeds = ss.spawn(n_sites)
        cloud_seed, = ss.spawn(1)
        client_seeds = ss.spawn(self.params.n_clients)

        self.site_ids = [s.site_id for s in topo.sites]
        self.generators: dict[str, SiteGenerator] = {}
        self.gateways: dict[str, GatewayService] = {}
        self.gateway_queues: dict[str, NodeQueue] = {}
        self.sensor_links: dict[str, list[LinkState]] = {}
        self.uplinks: dict[str, LinkState] = {}
        self.offsets: dict[str, int] = {}
        for site, gs, ls in zip(topo.sites, gen_seeds, link_seeds):
            sid = site.site_id
            rng_gen = np.random.default_rng(gs)
            rng_link = np.random.default_rng(ls)
            self.generators[sid] = SiteGenerator(sid, self.params, rng_gen,
                                                rs.header_bits)
            self.gateways[sid] = GatewayService(sid, self.params.n_sensors,
                                               self.params.quorum_ratio)
            self.gateway_queues[sid] = NodeQueue(
                f"gw-{sid}", site.gateway_compute, self.sim,
                rs.record_footprint_bytes)
            self.sensor_links[sid] = [
                LinkState(site.sensor_link, site.sensor_distance_km, rng_link,
                          rs.mtu_bits, rs.rto_factor)
                for _ in range(self.params.n_sensors)]
            self.uplinks[sid] = LinkState(site.uplink, site.uplink_distance_km,
                                          rng_link, rs.mtu_bits, rs.rto_factor)
            self.offsets[sid] = propagation_offset(topo, sid)

        rng_cloud = np.random.default_rng(cloud_seed)
        self.cloud_link = LinkState(topo.onprem_cloud_link,
                                    topo.onprem_cloud_distance_km, rng_cloud,
                                    rs.mtu_bits, rs.rto_factor)
        self.onprem_queue = NodeQueue("onprem", topo.onprem, self.sim,
                                      rs.record_footprint_bytes)
        self.cloud_queues = [NodeQueue(f"cloud-{i}", spec, self.sim,
                                       rs.record_footprint_bytes)
                             for i, spec in enumerate(topo.cloud)]
        self.inference = InferenceService(
            self.params.lstm_window_s, rs.surrogate_a, rs.surrogate_b,
            rs.warning_threshold)

        max_records = int(min(c.effective_disk_bytes for c in topo.cloud)
                          // rs.record_footprint_bytes)
        if binding is None:
            from .adapter import InProcessBinding
            binding = InProcessBinding(StoreCluster(
                self.site_ids, self.params.n_cloud, max_records))
        self.binding = binding
        self._instance_index = {sid: i % self.params.n_cloud
                                for i, sid in enumerate(sorted(self.site_ids))}

        self.clients = [QueryGenerator(i, self.params,
                                       np.random.default_rng(cs),
                                       scan_theta=rs.scan_theta)
                        for i, cs in enumerate(client_seeds)]

        self.omni = OmniscientLog()
        self.samples: list[LatencySample] = []
        self.query_log: list[QueryRecord] = []
        self.event_reports = 0
        self.pipeline_drops = 0
        self.ingest_failures = 0
        self.query_failures = 0
        self.verify_failures = 0
        self._pending_collections: dict[tuple, list] = {}
        self._edge_half_integrals: dict[str, float] | None = None
        self._bw_snapshot: dict[str, int] | None = None
        self.stale_ns = int(self.params.stale_threshold_s * NS)
        self.delay_ns = int(rs.extra_pipeline_delay_s * NS)

    # -- pipeline stages ----------------------------------------------------

    def _sched(self, t: int, kind: str, cb) -> None:
        # deliveries past the horizon can never fire; keep them off the heap
        if t <= self.duration_ns:
            self.sim.schedule(t, kind, cb)

    def _on_tick(self, tick_id: int) -> None:
        now = self.sim.now
        for sid in self.site_ids:
            gen = self.generators[sid]
            exceeds, aggregates = gen.tick(now)
            count = int(exceeds.sum())
            gw = self.gateways[sid]
            trigger = gw.edge_on_exceed_batch(tick_id, count, now)
            links = self.sensor_links[sid]
            for rec in aggregates:
                rec_id = self.omni.new_record(rec.gen_time, rec.site_id)
                arrive = links[rec.sensor_id].transmit(now, rec.size_bits)
                self._sched(
                    arrive, "gw_arr",
                    lambda r=rec, i=rec_id: self._on_gateway_arrival(r, i))
            if trigger is not None:
                self._start_collection(sid, trigger, now)

    def _start_collection(self, sid: str, trigger, now: int) -> None:
        gen = self.generators[sid]
        links = self.sensor_links[sid]
        bits = gen.dump_bits_per_sensor()
        key = (sid, trigger.trigger_time)
        state = [self.params.n_sensors, 0, trigger]  # remaining, total bits
        self._pending_collections[key] = state
        for i in range(self.params.n_sensors):
            arrive = links[i].transmit(now, bits)
            self._sched(arrive, "dump_arr",
                              lambda k=key, b=bits: self._on_dump_arrival(k, b))

    def _on_dump_arrival(self, key, bits: int) -> None:
        state = self._pending_collections[key]
        state[0] -= 1
        state[1] += bits
        if state[0] == 0:
            del self._pending_collections[key]
            sid, _ = key
            trigger = state[2]
            gwq = self.gateway_queues[sid]
            done = gwq.execute(
                self.run_s.c_report,
                lambda t, s=sid, tr=trigger, b=state[1]:
                    self._forward_report(s, tr, b, t))
            if done is None:
                self.pipeline_drops += 1

    def _forward_report(self, sid: str, trigger, total_bits: int, now: int) -> None:
        report = self.gateways[sid].assemble_report(
            trigger, self.params.n_sensors, total_bits)
        arrive = self.uplinks[sid].transmit(now, total_bits + self.run_s.header_bits)
        self._sched(arrive, "report_onprem",
                          lambda r=report: self._report_at_onprem(r))

    def _report_at_onprem(self, report) -> None:
        # event archives bypass inference; forwarded raw to the cloud store
        arrive = self.cloud_link.transmit(self.sim.now,
                                          report.total_bits + self.run_s.header_bits)
        self._sched(arrive, "report_cloud",
                          lambda r=report: self._report_at_cloud(r))

    def _report_at_cloud(self, report) -> None:
        idx = self._instance_index[report.site_id]
        done = self.cloud_queues[idx].execute(
            self.run_s.c_ins,
            lambda t, r=report: self._report_acked(r, t))
        if done is None:
            self.ingest_failures += 1

    def _report_acked(self, report, now: int) -> None:
        self.event_reports += 1
        raw = now - report.trigger_time
        self.samples.append(LatencySample(
            "event_report", report.trigger_time, raw,
            raw - self.offsets[report.site_id], report.site_id))

    def _on_gateway_arrival(self, rec, rec_id: int) -> None:
        gw = self.gateways[rec.site_id]
        gw.edge_on_aggregate(rec)
        done = self.gateway_queues[rec.site_id].execute(
            self.run_s.c_agg,
            lambda t, r=rec, i=rec_id: self._after_gateway(r, i, t))
        if done is None:
            self.omni.state[rec_id] = 2
            self.pipeline_drops += 1

    def _after_gateway(self, rec, rec_id: int, now: int) -> None:
        arrive = self.uplinks[rec.site_id].transmit(now, rec.size_bits)
        self._sched(arrive, "onprem_arr",
                          lambda r=rec, i=rec_id: self._on_onprem_arrival(r, i))

    def _on_onprem_arrival(self, rec, rec_id: int) -> None:
        done = self.onprem_queue.execute(
            self.run_s.c_inf,
            lambda t, r=rec, i=rec_id: self._after_inference(r, i, t))
        if done is None:
            self.omni.state[rec_id] = 2
            self.pipeline_drops += 1

    def _after_inference(self, rec, rec_id: int, now: int) -> None:
        ann = self.inference.infer_annotate(rec, now)
        self.omni.probs[rec_id] = ann.event_probability
        if self.delay_ns > 0:
            self._sched(now + self.delay_ns, "inject_delay",
                              lambda a=ann, i=rec_id: self._to_cloud(a, i))
        else:
            self._to_cloud(ann, rec_id)

    def _to_cloud(self, ann, rec_id: int) -> None:
        arrive = self.cloud_link.transmit(self.sim.now, ann.size_bits)
        self._sched(arrive, "cloud_arr",
                          lambda a=ann, i=rec_id: self._on_cloud_arrival(a, i))

    def _on_cloud_arrival(self, ann, rec_id: int) -> None:
        idx = self._instance_index[ann.site_id]
        done = self.cloud_queues[idx].execute(
            self.run_s.c_ins,
            lambda t, a=ann, i=rec_id: self._on_ingest_ack(a, i, t))
        if done is None:
            self.omni.state[rec_id] = 2
            self.ingest_failures += 1

    def _on_ingest_ack(self, ann, rec_id: int, now: int) -> None:
        evicted = self.binding.ingest(ann, rec_id)
        if evicted is None:
            self.omni.state[rec_id] = 2
            self.ingest_failures += 1
            return
        self.omni.state[rec_id] = 1
        self.omni.acks[rec_id] = now
        for ev_id in evicted:
            self.omni.state[ev_id] = 3
        raw = now - ann.gen_time
        self.samples.append(LatencySample(
            "e2e_insert", ann.gen_time, raw, raw - self.offsets[ann.site_id],
            f"{ann.site_id}/{ann.sensor_id}"))

    # -- queries ------------------------------------------------------------

    def _on_query_tick(self, client_idx: int) -> None:
        now = self.sim.now
        q = self.clients[client_idx].next_query(now)
        res, touched = self.binding.query(q, self.stale_ns)
        if res is None:
            self.query_failures += 1
            self.query_log.append(QueryRecord(q.kind, now, q.interval,
                                              0, 0, 0, True))
            return
        completions = []
        failed = False
        for qnode, t in zip(self.cloud_queues, touched):
            cost = self.run_s.c_q_base + self.run_s.c_q_per_record * t
            done = qnode.execute(cost)
            if done is None:
                failed = True
            else:
                completions.append(done)
        if failed:
            self.query_failures += 1
            latency = 0
        else:
            completion = max(completions) if completions else now
            res.completion_time = completion
            latency = completion - now
            self.samples.append(LatencySample("query", now, latency, None,
                                              q.kind))
        self.query_log.append(QueryRecord(
            q.kind, now, q.interval, res.due_count, res.count, latency,
            failed, res.id_sum, res.id_xor))
        if self.run_s.verify:
            self._verify_query(q, res)

    def _verify_query(self, q, res) -> None:
        """Independent oracle: recompute the result from the omniscient log."""
        omni = self.omni
        count = 0
        id_sum = 0
        id_xor = 0
        for rec_id in range(len(omni.gens)):
            if omni.state[rec_id] != 1:
                continue
            if q.kind == "scan_filter":
                if not omni.probs[rec_id] > q.theta:
                    continue
            else:
                start, end = q.interval
                if not (start <= omni.gens[rec_id] < end):
                    continue
            count += 1
            id_sum += rec_id
            id_xor ^= rec_id
        if (count, id_sum, id_xor) != res.fingerprint():
            self.verify_failures += 1

    # -- run driver ---------------------------------------------------------

    def _snapshot_halves(self) -> None:
        self._edge_half_integrals = {
            sid: q.queue_integral() for sid, q in self.gateway_queues.items()}

    def _snapshot_warmup(self) -> None:
        self._bw_snapshot = self._bandwidth_counters()

    def _bandwidth_counters(self) -> dict[str, int]:
        out = {"sensor_offered": 0, "sensor_on_wire": 0,
               "uplink_offered": 0, "uplink_on_wire": 0,
               "cloud_offered": self.cloud_link.counters.bits_offered,
               "cloud_on_wire": self.cloud_link.counters.bits_on_wire}
        for sid in self.site_ids:
            for link in self.sensor_links[sid]:
                out["sensor_offered"] += link.counters.bits_offered
                out["sensor_on_wire"] += link.counters.bits_on_wire
            out["uplink_offered"] += self.uplinks[sid].counters.bits_offered
            out["uplink_on_wire"] += self.uplinks[sid].counters.bits_on_wire
        return out

    def run(self) -> RunOutput:
        if self.duration_ns <= self.warmup_ns:
            raise ValueError("duration shorter than warm-up window")
        n_ticks = math.ceil(self.duration_ns / self.tick_ns)
        for k in range(n_ticks):
            t = k * self.tick_ns
            if t >= self.duration_ns:
                break
            self.sim.schedule(t, "tick", lambda k=k: self._on_tick(k))
        period_ns = int(round(NS / self.params.request_rate_hz))
        for i in range(self.params.n_clients):
            phase = period_ns * (i + 1) // self.params.n_clients
            t = phase
            while t < self.duration_ns:
                self.sim.schedule(t, "query",
                                  lambda i=i: self._on_query_tick(i))
                t += period_ns
        self.sim.schedule(self.warmup_ns, "warmup_end",
                          lambda: self._snapshot_warmup())
        self.sim.schedule(self.duration_ns // 2, "half",
                          lambda: self._snapshot_halves())
        self.sim.run_until(self.duration_ns)
        return self._build_output()

    # -- reporting ----------------------------------------------------------

    def _edge_halves(self) -> tuple[float, float]:
        half = self.duration_ns // 2
        total_first = sum(self._edge_half_integrals.values())
        total_final = sum(q.queue_integral()
                          for q in self.gateway_queues.values())
        first_avg = total_first / half if half else 0.0
        second_avg = (total_final - total_first) / (self.duration_ns - half)
        return first_avg, second_avg

    def _build_output(self) -> RunOutput:
        rs = self.run_s
        meas_ns = self.duration_ns - self.warmup_ns
        bw_end = self._bandwidth_counters()
        bw0 = self._bw_snapshot or {k: 0 for k in bw_end}
        n_sensor_links = len(self.site_ids) * self.params.n_sensors

        def rate(key):
            return (bw_end[key] - bw0[key]) / (meas_ns / NS)

        gen_readings = sum(g.readings_total for g in self.generators.values())
        gen_exceeds = sum(g.exceeds_total for g in self.generators.values())

        def lat_block(kind, corrected=False):
            vals = [(s.corrected_ns if corrected else s.raw_ns)
                    for s in self.samples
                    if s.kind == kind and s.issue_time >= self.warmup_ns]
            return percentile_block(vals)

        first_avg, second_avg = self._edge_halves()
        edge_drops = sum(q.drops for q in self.gateway_queues.values())
        cloud_util = (sum(q.utilization() for q in self.cloud_queues)
                      / len(self.cloud_queues))
        mix = {k: 0 for k in ("recent_1h", "random_1h", "scan_filter")}
        for q in self.query_log:
            mix[q.kind] += 1
        ratio = staleness_violation_ratio(
            self.query_log, self.omni.gens, self.stale_ns, self.warmup_ns)
        rates = derived_rates(self.params, len(self.site_ids))

        ingested = sum(1 for s in self.omni.state if s == 1)
        report = {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "seed": rs.seed,
            "config_hash": self.cfg.config_hash(),
            "mode": rs.mode,
            "duration_s": rs.duration_s,
            "warmup_s": self.warmup_ns / NS,
            "n_sensors_effective": self.params.n_sensors,
            "latency": {
                "e2e_insert": lat_block("e2e_insert"),
                "e2e_insert_corrected": lat_block("e2e_insert", corrected=True),
                "event_report": lat_block("event_report"),
                "query": lat_block("query"),
            },
            "staleness_violation_ratio": ratio,
            "query_mix": mix,
            "failures": {
                "ingest": self.ingest_failures,
                "query": self.query_failures,
                "verify": self.verify_failures,
            },
            "bandwidth_bps": {
                "sensor_gateway_offered_per_link": rate("sensor_offered") / n_sensor_links,
                "sensor_gateway_on_wire_per_link": rate("sensor_on_wire") / n_sensor_links,
                "uplink_offered_per_site": rate("uplink_offered") / len(self.site_ids),
                "onprem_cloud_offered": rate("cloud_offered"),
            },
            "utilization": {
                **{f"gw-{sid}": round(q.utilization(), 6)
                   for sid, q in self.gateway_queues.items()},
                "onprem": round(self.onprem_queue.utilization(), 6),
                **{q.node_id: round(q.utilization(), 6)
                   for q in self.cloud_queues},
                "cloud_mean": round(cloud_util, 6),
            },
            "counters": {
                "readings_generated": gen_readings,
                "exceeds_generated": gen_exceeds,
                "exceed_fraction": (gen_exceeds / gen_readings
                                    if gen_readings else None),
                "aggregates_generated": len(self.omni.gens),
                "records_ingested": ingested,
                "pipeline_drops": self.pipeline_drops,
                "edge_queue_drops": edge_drops,
                "store_evictions": self.binding.evictions(),
                "event_triggers": sum(g.triggers for g in self.gateways.values()),
                "event_reports_stored": self.event_reports,
                "warnings": self.inference.warnings,
            },
            "edge_queue": {
                "first_half_avg": first_avg,
                "second_half_avg": second_avg,
            },
            "analytical": {
                "sensor_raw_bps": rates.sensor_raw_bps,
                "mean_sensor_gateway_bps": rates.mean_sensor_gateway_bps,
                "edge_ingress_bps": rates.edge_ingress_bps,
                "quorum_prob_per_tick": rates.quorum_prob_per_tick,
                "total_insert_rate_hz": rates.total_insert_rate_hz,
            },
            "slo_min_scale": None,
            "calibrated_request_rate": None,
        }
        return RunOutput(report, self.samples, self.query_log,
                         first_avg, second_avg, edge_drops, cloud_util,
                         self.verify_failures)


def run_benchmark(config: BenchConfig, binding=None) -> RunOutput:
    return BenchmarkRun(config, binding).run()
