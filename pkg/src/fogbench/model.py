"""Workload/infrastructure parameters and the closed-form traffic model.

Everything here is pure: the same parameter set always yields the same
rates, so these functions double as an analytical oracle for checking
simulation output.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, asdict

import numpy as np
from scipy.special import gammaln

KB = 1000
MB = 1000 ** 2
GB = 1000 ** 3
TB = 1000 ** 4


class ConfigError(ValueError):
    """Raised for parameter values outside their documented domain."""


@dataclass
class WorkloadParams:
    """Knobs governing sensor data generation and the offline query mix."""

    n_sensors: int = 300          # sensors per volcano site
    buffer_size: int = 1000       # readings held in the local sensor buffer
    n_agg: int = 25               # readings combined per aggregate record
    quorum_ratio: float = 0.20    # fraction of sensors that must report an event
    resolution_bits: int = 192    # total bits per reading across channels
    n_channels: int = 3
    sampling_rate_hz: float = 100.0
    exceed_prob: float = 0.15     # per-reading threshold exceedance probability
    lstm_window_s: float = 10.0   # inference sliding-window span
    q_recent: float = 0.50
    q_random: float = 0.30
    q_scan: float = 0.20
    n_clients: int = 100
    request_rate_hz: float = 1.0  # per-client open-loop request rate
    stale_threshold_s: float = 5.0
    n_cloud: int = 3

    def validate(self) -> None:
        if abs(self.q_recent + self.q_random + self.q_scan - 1.0) > 1e-9:
            raise ConfigError("query mix fractions must sum to 1")
        if not (0.0 <= self.exceed_prob <= 1.0):
            raise ConfigError("exceed_prob must be in [0, 1]")
        if not (0.0 < self.quorum_ratio <= 1.0):
            raise ConfigError("quorum_ratio must be in (0, 1]")
        if self.n_agg > self.buffer_size:
            raise ConfigError("n_agg cannot exceed buffer_size")
        for name in ("n_sensors", "buffer_size", "n_agg", "n_channels",
                     "n_clients", "n_cloud"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("sampling_rate_hz", "request_rate_hz"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("resolution_bits",):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("q_recent", "q_random", "q_scan"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.stale_threshold_s <= 0 or self.lstm_window_s <= 0:
            raise ConfigError("stale_threshold_s and lstm_window_s must be > 0")

    def scaled(self, factor: float) -> "WorkloadParams":
        """Copy with n_sensors scaled by `factor` (minimum 1)."""
        if factor <= 0:
            raise ConfigError("sensor scale factor must be > 0")
        p = WorkloadParams(**asdict(self))
        p.n_sensors = max(1, round(self.n_sensors * factor))
        return p


COMPONENT_CLASSES = ("sensor", "gateway", "onprem", "cloud")


@dataclass
class ComputeSpec:
    component_class: str
    cpu_cores: float
    mem_bytes: int
    disk_bytes: int
    resource_scale: float = 1.0

    def validate(self) -> None:
        if self.component_class not in COMPONENT_CLASSES:
            raise ConfigError(f"unknown component class {self.component_class!r}")
        if min(self.cpu_cores, self.mem_bytes, self.disk_bytes) <= 0:
            raise ConfigError("compute capacities must be > 0")
        if self.resource_scale <= 0:
            raise ConfigError("resource_scale must be > 0")

    @property
    def effective_cores(self) -> float:
        return self.cpu_cores * self.resource_scale

    @property
    def effective_mem_bytes(self) -> float:
        return self.mem_bytes * self.resource_scale

    @property
    def effective_disk_bytes(self) -> float:
        return self.disk_bytes * self.resource_scale

    def rescaled(self, scale: float) -> "ComputeSpec":
        return ComputeSpec(self.component_class, self.cpu_cores,
                           self.mem_bytes, self.disk_bytes, scale)


LINK_TYPES = ("lorawan", "lte_m", "fiber_1g", "fiber_10g")


@dataclass
class LinkSpec:
    link_type: str
    delay_per_km_ms: float
    bandwidth_bps: float
    jitter_frac: float = 0.10
    loss_rate: float = 0.0
    corrupt_rate: float = 0.0
    reorder_rate: float = 0.0
    dup_rate: float = 0.0

    def validate(self) -> None:
        if self.link_type not in LINK_TYPES:
            raise ConfigError(f"unknown link type {self.link_type!r}")
        if self.bandwidth_bps <= 0:
            raise ConfigError("bandwidth_bps must be > 0")
        if self.delay_per_km_ms < 0:
            raise ConfigError("delay_per_km_ms must be >= 0")
        for name in ("jitter_frac", "loss_rate", "corrupt_rate",
                     "reorder_rate", "dup_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1]")


@dataclass
class SiteSpec:
    site_id: str
    name: str
    gateway_compute: ComputeSpec
    uplink: LinkSpec
    uplink_distance_km: float
    sensor_link: LinkSpec
    sensor_distance_km: float
    sensor_compute: ComputeSpec


@dataclass
class Topology:
    sites: list[SiteSpec]
    onprem: ComputeSpec
    cloud: list[ComputeSpec]
    onprem_cloud_link: LinkSpec
    onprem_cloud_distance_km: float

    def validate(self, params: WorkloadParams) -> None:
        if not self.sites:
            raise ConfigError("topology needs at least one site")
        if len({s.site_id for s in self.sites}) != len(self.sites):
            raise ConfigError("duplicate site_id in topology")
        if len(self.cloud) != params.n_cloud:
            raise ConfigError(
                f"cloud list has {len(self.cloud)} entries, expected n_cloud={params.n_cloud}")
        for s in self.sites:
            s.gateway_compute.validate()
            s.sensor_compute.validate()
            s.uplink.validate()
            s.sensor_link.validate()
            if s.uplink_distance_km < 0 or s.sensor_distance_km < 0:
                raise ConfigError(f"site {s.site_id}: distances must be >= 0")
        self.onprem.validate()
        for c in self.cloud:
            c.validate()
        self.onprem_cloud_link.validate()
        if self.onprem_cloud_distance_km < 0:
            raise ConfigError("onprem_cloud_distance_km must be >= 0")

    def site(self, site_id: str) -> SiteSpec:
        for s in self.sites:
            if s.site_id == site_id:
                return s
        raise KeyError(site_id)


# ---------------------------------------------------------------------------
# Analytical model
# ---------------------------------------------------------------------------

def sensor_raw_rate(params: WorkloadParams) -> float:
    """Raw data production of a single sensor in bit/s (resolution x rate)."""
    return params.resolution_bits * params.sampling_rate_hz


def quorum_probability(n: int, y: float, p: float) -> float:
    """P[X > ceil(n*y)] for X ~ Binomial(n, p).

    Evaluated as a log-space sum over the upper tail so that n in the
    hundreds neither overflows (no naive factorials) nor loses the small
    probabilities this term typically takes.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if not (0.0 <= p <= 1.0):
        raise ConfigError("p must be in [0, 1]")
    if not (0.0 < y <= 1.0):
        raise ConfigError("y must be in (0, 1]")
    m = math.ceil(n * y)
    if m >= n:
        return 0.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    ks = np.arange(m + 1, n + 1, dtype=np.float64)
    log_pmf = (gammaln(n + 1) - gammaln(ks + 1) - gammaln(n - ks + 1)
               + ks * math.log(p) + (n - ks) * math.log1p(-p))
    # ascending pmf order would not matter much, but summing smallest-first
    # keeps the accumulation tight
    return float(np.sort(np.exp(log_pmf)).sum())


def mean_sensor_gateway_bandwidth(params: WorkloadParams) -> float:
    """Mean traffic from one sensor to its gateway in bit/s.

    Sum of the steady aggregate-record stream and the expected rate of
    full-buffer dumps triggered by site-wide exceedance quorums.
    """
    r = params.resolution_bits
    f = params.sampling_rate_hz
    agg_term = r * f / params.n_agg
    q = quorum_probability(params.n_sensors, params.quorum_ratio,
                           params.exceed_prob)
    event_term = q * r * params.buffer_size * f
    return agg_term + event_term


def edge_ingress_rate(params: WorkloadParams) -> float:
    """Mean ingress at one site's edge service in bit/s (all sensors)."""
    return params.n_sensors * mean_sensor_gateway_bandwidth(params)


@dataclass
class RateSummary:
    """Roll-up of every analytically derived rate, for `validate` output."""

    sensor_raw_bps: float
    quorum_prob_per_tick: float
    mean_sensor_gateway_bps: float
    edge_ingress_bps: float
    aggregate_rate_per_sensor_hz: float
    site_record_rate_hz: float
    total_insert_rate_hz: float
    event_trigger_rate_per_site_hz: float
    query_rate_total_hz: float
    query_rate_recent_hz: float
    query_rate_random_hz: float
    query_rate_scan_hz: float


def derived_rates(params: WorkloadParams, n_sites: int = 6) -> RateSummary:
    params.validate()
    agg_rate = params.sampling_rate_hz / params.n_agg
    site_records = params.n_sensors * agg_rate
    q = quorum_probability(params.n_sensors, params.quorum_ratio,
                           params.exceed_prob)
    queries = params.n_clients * params.request_rate_hz
    return RateSummary(
        sensor_raw_bps=sensor_raw_rate(params),
        quorum_prob_per_tick=q,
        mean_sensor_gateway_bps=mean_sensor_gateway_bandwidth(params),
        edge_ingress_bps=edge_ingress_rate(params),
        aggregate_rate_per_sensor_hz=agg_rate,
        site_record_rate_hz=site_records,
        total_insert_rate_hz=site_records * n_sites,
        event_trigger_rate_per_site_hz=q * params.sampling_rate_hz,
        query_rate_total_hz=queries,
        query_rate_recent_hz=queries * params.q_recent,
        query_rate_random_hz=queries * params.q_random,
        query_rate_scan_hz=queries * params.q_scan,
    )


# ---------------------------------------------------------------------------
# Default infrastructure
# ---------------------------------------------------------------------------

def default_link_specs() -> dict[str, LinkSpec]:
    """Published link-class parameters.

    Fiber 10G carries the published 1 Gbps figure verbatim despite its
    name; override `network.fiber_10g.bandwidth_bps` to change it.
    """
    return {
        "lorawan": LinkSpec("lorawan", 0.021, 22 * KB, 0.10, 0.05, 0.05, 0.05, 0.05),
        "lte_m": LinkSpec("lte_m", 0.017, 1 * MB, 0.10, 0.01, 0.01, 0.01, 0.01),
        "fiber_1g": LinkSpec("fiber_1g", 0.0085, 1 * GB, 0.10, 0.001, 0.001, 0.001, 0.001),
        "fiber_10g": LinkSpec("fiber_10g", 0.0085, 1 * GB, 0.10, 0.001, 0.001, 0.001, 0.001),
    }


def default_compute_specs() -> dict[str, ComputeSpec]:
    return {
        "sensor": ComputeSpec("sensor", 0.25, 256 * MB, 4 * GB),
        "gateway": ComputeSpec("gateway", 4.0, 4 * GB, 256 * GB),
        "onprem": ComputeSpec("onprem", 32.0, 48 * GB, 2 * TB),
        "cloud": ComputeSpec("cloud", 48.0, 96 * GB, 4 * TB),
    }


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km (mean Earth radius 6371 km)."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * 6371.0 * math.asin(math.sqrt(a))


# (site_id, display name, lat, lon, uplink class) for the six monitored
# volcanoes. Distances to the Hilo office are great-circle defaults, not
# survey data; override per site in the topology section.
HILO_COORDS = (19.705, -155.085)
DEFAULT_SITES = [
    ("kilauea", "Kilauea", 19.421, -155.287, "fiber_1g"),
    ("mauna_loa", "Mauna Loa", 19.475, -155.608, "fiber_1g"),
    ("mauna_kea", "Mauna Kea", 19.820, -155.468, "fiber_1g"),
    ("hualalai", "Hualalai", 19.692, -155.870, "fiber_1g"),
    ("haleakala", "Haleakala", 20.710, -156.253, "lte_m"),
    ("kamaehuakanaloa", "Kamaehuakanaloa", 18.920, -155.270, "lte_m"),
]
DEFAULT_SENSOR_DISTANCE_KM = 2.0
DEFAULT_ONPREM_CLOUD_KM = 4000.0  # Hilo to a US west-coast cloud region


def default_topology(params: WorkloadParams | None = None) -> Topology:
    params = params or WorkloadParams()
    links = default_link_specs()
    compute = default_compute_specs()
    sites = []
    for site_id, name, lat, lon, uplink_class in DEFAULT_SITES:
        sites.append(SiteSpec(
            site_id=site_id,
            name=name,
            gateway_compute=compute["gateway"],
            uplink=links[uplink_class],
            uplink_distance_km=round(haversine_km(lat, lon, *HILO_COORDS), 1),
            sensor_link=links["lorawan"],
            sensor_distance_km=DEFAULT_SENSOR_DISTANCE_KM,
            sensor_compute=compute["sensor"],
        ))
    return Topology(
        sites=sites,
        onprem=compute["onprem"],
        cloud=[compute["cloud"] for _ in range(params.n_cloud)],
        onprem_cloud_link=links["fiber_10g"],
        onprem_cloud_distance_km=DEFAULT_ONPREM_CLOUD_KM,
    )


# ---------------------------------------------------------------------------
# Run settings and whole-config handling
# ---------------------------------------------------------------------------

@dataclass
class RunSettings:
    """Experiment knobs that are harness policy rather than scenario data."""

    seed: int = 42
    duration_s: float = 300.0
    mode: str = "sim"             # sim | external
    warmup_frac: float = 0.10
    scale_sensors: float = 1.0
    out_dir: str = "out"
    verify: bool = False
    trace: bool = False
    # service cost model (core-seconds per item unless noted)
    c_agg: float = 10e-6
    c_inf: float = 1e-3
    c_ins: float = 50e-6
    c_report: float = 1e-3        # gateway cost to assemble an event report
    c_q_base: float = 2e-3
    c_q_per_record: float = 1e-7
    # plumbing knobs
    mtu_bits: int = 12_000
    header_bits: int = 256        # fixed per-message framing overhead
    record_footprint_bytes: int = 1024
    rto_factor: float = 2.0
    surrogate_a: float = 2.0
    surrogate_b: float = -4.0
    warning_threshold: float = 0.95
    scan_theta: float = 0.9
    extra_pipeline_delay_s: float = 0.0  # injected delay before cloud insert
    external_host: str = "127.0.0.1"
    external_port: int = 4710
    external_timeout_s: float = 5.0

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be > 0")
        if not (0.0 <= self.warmup_frac <= 0.5):
            raise ConfigError("warmup_frac must be in [0, 0.5]")
        if self.mode not in ("sim", "external"):
            raise ConfigError("mode must be 'sim' or 'external'")
        if self.scale_sensors <= 0:
            raise ConfigError("scale_sensors must be > 0")
        if self.mtu_bits <= 0:
            raise ConfigError("mtu_bits must be > 0")
        for name in ("c_agg", "c_inf", "c_ins", "c_report", "c_q_base",
                     "c_q_per_record", "extra_pipeline_delay_s"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not (0.0 < self.warning_threshold <= 1.0):
            raise ConfigError("warning_threshold must be in (0, 1]")


@dataclass
class BenchConfig:
    workload: WorkloadParams = field(default_factory=WorkloadParams)
    topology: Topology = None  # filled by __post_init__ when omitted
    run: RunSettings = field(default_factory=RunSettings)

    def __post_init__(self):
        if self.topology is None:
            self.topology = default_topology(self.workload)

    def validate(self) -> None:
        self.workload.validate()
        self.run.validate()
        self.topology.validate(self.workload)

    def effective_workload(self) -> WorkloadParams:
        """Workload with the sensor-count scale factor applied."""
        if self.run.scale_sensors == 1.0:
            return self.workload
        return self.workload.scaled(self.run.scale_sensors)

    def to_dict(self) -> dict:
        return {
            "workload": asdict(self.workload),
            "topology": asdict(self.topology),
            "run": asdict(self.run),
        }

    # fields that do not change what a run measures; the seed is reported
    # separately and the rest are operator plumbing
    _HASH_EXCLUDE = ("seed", "out_dir", "trace", "verify")

    def config_hash(self) -> str:
        d = self.to_dict()
        for name in self._HASH_EXCLUDE:
            d["run"].pop(name, None)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build_dataclass(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**data)


def config_from_dict(doc: dict) -> BenchConfig:
    """Build and validate a BenchConfig from a parsed config document.

    Sections: `workload`, `compute`, `network`, `topology`, `run`.
    Unknown sections or keys are an error; omitted ones take defaults.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    known_sections = {"workload", "compute", "network", "topology", "run"}
    unknown = set(doc) - known_sections
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")

    workload = _build_dataclass(WorkloadParams, doc.get("workload", {}) or {},
                                "workload")

    compute = dict(default_compute_specs())
    for cname, cdata in (doc.get("compute", {}) or {}).items():
        if cname not in compute:
            raise ConfigError(f"compute: unknown component class {cname!r}")
        base = asdict(compute[cname])
        extra = set(cdata) - (set(base) - {"component_class"})
        if extra:
            raise ConfigError(f"compute.{cname}: unknown keys {sorted(extra)}")
        base.update(cdata)
        compute[cname] = ComputeSpec(**base)

    network = dict(default_link_specs())
    for lname, ldata in (doc.get("network", {}) or {}).items():
        if lname not in network:
            raise ConfigError(f"network: unknown link type {lname!r}")
        base = asdict(network[lname])
        extra = set(ldata) - (set(base) - {"link_type"})
        if extra:
            raise ConfigError(f"network.{lname}: unknown keys {sorted(extra)}")
        base.update(ldata)
        network[lname] = LinkSpec(**base)

    run = _build_dataclass(RunSettings, doc.get("run", {}) or {}, "run")

    topo_doc = doc.get("topology")
    if topo_doc is None:
        topology = _topology_from_parts(None, compute, network, workload)
    else:
        topology = _topology_from_parts(topo_doc, compute, network, workload)

    cfg = BenchConfig(workload=workload, topology=topology, run=run)
    cfg.validate()
    return cfg


def _topology_from_parts(topo_doc, compute, network, params) -> Topology:
    if topo_doc is None:
        # default site list, but honoring compute/network overrides
        sites = []
        for site_id, name, lat, lon, uplink_class in DEFAULT_SITES:
            sites.append(SiteSpec(
                site_id, name, compute["gateway"], network[uplink_class],
                round(haversine_km(lat, lon, *HILO_COORDS), 1),
                network["lorawan"], DEFAULT_SENSOR_DISTANCE_KM,
                compute["sensor"]))
        return Topology(sites, compute["onprem"],
                        [compute["cloud"] for _ in range(params.n_cloud)],
                        network["fiber_10g"], DEFAULT_ONPREM_CLOUD_KM)

    known = {"sites", "onprem_cloud"}
    unknown = set(topo_doc) - known
    if unknown:
        raise ConfigError(f"topology: unknown keys {sorted(unknown)}")
    sites = []
    for sdoc in topo_doc.get("sites", []):
        allowed = {"site_id", "name", "uplink", "uplink_distance_km",
                   "sensor_link", "sensor_distance_km"}
        extra = set(sdoc) - allowed
        if extra:
            raise ConfigError(f"topology.sites: unknown keys {sorted(extra)}")
        uplink = sdoc.get("uplink", "fiber_1g")
        sensor_link = sdoc.get("sensor_link", "lorawan")
        if uplink not in network or sensor_link not in network:
            raise ConfigError(f"topology.sites: unknown link type")
        sites.append(SiteSpec(
            sdoc["site_id"], sdoc.get("name", sdoc["site_id"]),
            compute["gateway"], network[uplink],
            float(sdoc.get("uplink_distance_km", 10.0)),
            network[sensor_link],
            float(sdoc.get("sensor_distance_km", DEFAULT_SENSOR_DISTANCE_KM)),
            compute["sensor"]))
    oc = topo_doc.get("onprem_cloud", {}) or {}
    extra = set(oc) - {"link", "distance_km"}
    if extra:
        raise ConfigError(f"topology.onprem_cloud: unknown keys {sorted(extra)}")
    link = oc.get("link", "fiber_10g")
    if link not in network:
        raise ConfigError(f"topology.onprem_cloud: unknown link type {link!r}")
    return Topology(sites, compute["onprem"],
                    [compute["cloud"] for _ in range(params.n_cloud)],
                    network[link],
                    float(oc.get("distance_km", DEFAULT_ONPREM_CLOUD_KM)))


def load_config(path: str) -> BenchConfig:
    import yaml

    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    return config_from_dict(doc)
