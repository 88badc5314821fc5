"""Metric families: edge SLO resource search, offset-corrected end-to-end
latency, staleness violations, and cloud request latency, plus the
utilization-calibration procedure for the offline request rate.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

from .model import Topology

NS = 1_000_000_000


@dataclass
class LatencySample:
    kind: str          # e2e_insert | query | event_report
    issue_time: int    # generation / issue sim-ns
    raw_ns: int
    corrected_ns: int | None = None
    subject: str = ""


def percentile(samples, q: float):
    """Nearest-rank percentile over the sample set; None when empty."""
    if not len(samples):
        return None
    s = sorted(samples)
    rank = max(1, math.ceil(q / 100.0 * len(s)))
    return s[rank - 1]


def percentile_block(values) -> dict:
    s = sorted(values)
    if not s:
        return {"count": 0, "p50": None, "p90": None, "p99": None, "max": None}
    return {
        "count": len(s),
        "p50": percentile(s, 50),
        "p90": percentile(s, 90),
        "p99": percentile(s, 99),
        "max": s[-1],
    }


def propagation_offset(topology: Topology, site_id: str) -> int:
    """Constant sensor->cloud propagation delay for one site, in ns.

    Jitter-free sum of distance x delay-per-km over the three path hops;
    serialization time is excluded (it depends on message size).
    """
    site = topology.site(site_id)
    ms = (site.sensor_distance_km * site.sensor_link.delay_per_km_ms
          + site.uplink_distance_km * site.uplink.delay_per_km_ms
          + topology.onprem_cloud_distance_km
          * topology.onprem_cloud_link.delay_per_km_ms)
    return int(round(ms * 1e6))


@dataclass
class QueryRecord:
    """Per-query log row used for mix/staleness accounting."""
    kind: str
    issue_time: int
    interval: tuple[int, int] | None
    due_count_in_result: int
    count: int
    latency_ns: int
    failed: bool = False
    id_sum: int = 0
    id_xor: int = 0


def staleness_violation_ratio(query_log: list[QueryRecord],
                              omniscient_gens, t_stale_ns: int,
                              warmup_end_ns: int = 0) -> float | None:
    """Ratio of recent-interval queries missing a due record.

    A query violates iff the omniscient log holds a record generated at
    least t_stale before the query's issue time, inside the queried
    interval, that the result did not contain. Returns None when no
    recent-interval queries exist after warm-up.
    """
    n = 0
    violations = 0
    for q in query_log:
        if q.kind != "recent_1h" or q.issue_time < warmup_end_ns or q.failed:
            continue
        n += 1
        start, end = q.interval
        cutoff = q.issue_time - t_stale_ns
        lo = bisect_left(omniscient_gens, start)
        hi = bisect_left(omniscient_gens, end)
        due_truth = bisect_right(omniscient_gens, cutoff, lo, hi) - lo
        if due_truth > q.due_count_in_result:
            violations += 1
    if n == 0:
        return None
    return violations / n


# ---------------------------------------------------------------------------
# SLO resource search
# ---------------------------------------------------------------------------

class SloSearchError(RuntimeError):
    def __init__(self, message: str, probes: list[tuple[float, bool]]):
        super().__init__(message)
        self.probes = probes


@dataclass
class SloSearchResult:
    min_scale: float
    probes: list[tuple[float, bool]] = field(default_factory=list)

    @property
    def probe_count(self) -> int:
        return len(self.probes)


def stability_predicate(first_half_avg: float, second_half_avg: float,
                        drops: int, ratio_limit: float = 1.05) -> bool:
    """Edge-SLO stability check: queueing stays constant, nothing dropped.

    Stable iff the time-averaged edge queue length over the second half
    of the run is at most ratio_limit times the first-half average, and
    no overflow drops occurred.
    """
    if drops > 0:
        return False
    if first_half_avg <= 0.0:
        return second_half_avg <= ratio_limit  # both effectively empty
    return second_half_avg <= ratio_limit * first_half_avg


def slo_search(run_factory, predicate, scale_lo: float, scale_hi: float,
               tol: float = 0.05,
               probe_log: list[tuple[float, bool]] | None = None) -> SloSearchResult:
    """Minimal edge resource_scale at which `predicate` reports stable.

    Bisection between an unstable low bracket and a stable high bracket;
    every probe is a fresh run from `run_factory(scale)`. Resumes from
    `probe_log` entries if given (probes already recorded are not rerun).
    Non-monotone observations raise SloSearchError with the probe table.
    """
    if not (0 < scale_lo < scale_hi):
        raise ValueError("need 0 < scale_lo < scale_hi")
    probes: list[tuple[float, bool]] = []
    seen = {s: st for s, st in (probe_log or [])}

    def probe(scale: float) -> bool:
        if scale in seen:
            stable = seen[scale]
        else:
            stable = bool(predicate(run_factory(scale)))
            seen[scale] = stable
        probes.append((scale, stable))
        return stable

    def check_monotone():
        stables = [s for s, st in seen.items() if st]
        unstables = [s for s, st in seen.items() if not st]
        if stables and unstables and min(stables) < max(unstables):
            raise SloSearchError(
                f"non-monotone stability: stable at {min(stables)} but "
                f"unstable at {max(unstables)}", sorted(seen.items()))

    if probe(scale_lo):
        raise SloSearchError(
            f"scale_lo={scale_lo} is already stable; lower the bracket",
            probes)
    if not probe(scale_hi):
        raise SloSearchError(
            f"scale_hi={scale_hi} is not stable; raise the bracket", probes)

    lo, hi = scale_lo, scale_hi
    while hi - lo > lo * tol:
        mid = (lo + hi) / 2.0
        if probe(mid):
            hi = mid
        else:
            lo = mid
        check_monotone()
    return SloSearchResult(min_scale=hi, probes=probes)


def bisection_probe_bound(lo: float, hi: float, tol: float) -> int:
    """Worst-case probe count for slo_search's bracketing + bisection."""
    return math.ceil(math.log2((hi - lo) / (lo * tol))) + 2


# ---------------------------------------------------------------------------
# Request-rate calibration
# ---------------------------------------------------------------------------

@dataclass
class CalibrationResult:
    rate_hz: float
    utilization: float
    converged: bool
    probes: list[tuple[float, float]] = field(default_factory=list)


def calibrate_request_rate(run_factory, target_util: float = 0.80,
                           tol: float = 0.05, rate_0: float = 1.0,
                           rate_ceiling: float = 10_000.0,
                           max_iter: int = 20) -> CalibrationResult:
    """Find the per-client request rate yielding the target utilization.

    Secant iteration on measured mean cloud busy-fraction, assuming
    utilization is monotone in the rate over the search range. If the
    target is unreachable below `rate_ceiling`, reports the best
    achieved utilization with converged=False.
    """
    if not (0.0 < target_util < 1.0):
        raise ValueError("target_util must be in (0, 1)")
    probes: list[tuple[float, float]] = []

    def measure(r: float) -> float:
        u = float(run_factory(r))
        probes.append((r, u))
        return u

    r_prev = rate_0
    u_prev = measure(r_prev)
    if abs(u_prev - target_util) <= tol:
        return CalibrationResult(r_prev, u_prev, True, probes)
    # second point: proportional guess (exact under a linear cost model)
    if u_prev > 0:
        r_cur = min(rate_ceiling, r_prev * target_util / u_prev)
    else:
        r_cur = min(rate_ceiling, r_prev * 4.0)
    for _ in range(max_iter):
        u_cur = measure(r_cur)
        if abs(u_cur - target_util) <= tol:
            return CalibrationResult(r_cur, u_cur, True, probes)
        if u_cur == u_prev:
            # flat response: scale blindly, or give up at the ceiling
            if r_cur >= rate_ceiling:
                return CalibrationResult(r_cur, u_cur, False, probes)
            r_next = min(rate_ceiling, r_cur * 4.0)
        else:
            r_next = r_cur + (target_util - u_cur) * (r_cur - r_prev) / (u_cur - u_prev)
            r_next = max(r_cur * 0.1, min(r_next, rate_ceiling))
        r_prev, u_prev = r_cur, u_cur
        r_cur = r_next
    u_cur = measure(r_cur)
    return CalibrationResult(r_cur, u_cur, abs(u_cur - target_util) <= tol,
                             probes)
