"""Command-line orchestrator.

Subcommands: validate, run, generate, slo-search, calibrate, serve.
All behavior is reachable through documented flags; no environment
variables are consulted.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys

from .model import BenchConfig, ConfigError, derived_rates, load_config
from .metrics import (SloSearchError, bisection_probe_bound,
                      calibrate_request_rate, slo_search,
                      stability_predicate)
from .sim import BenchmarkRun, run_benchmark


def _load(args) -> BenchConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = BenchConfig()
    if getattr(args, "seed", None) is not None:
        cfg.run.seed = args.seed
    if getattr(args, "duration", None) is not None:
        cfg.run.duration_s = args.duration
    if getattr(args, "mode", None) is not None:
        cfg.run.mode = args.mode
    if getattr(args, "out", None) is not None:
        cfg.run.out_dir = args.out
    if getattr(args, "scale_sensors", None) is not None:
        cfg.run.scale_sensors = args.scale_sensors
    if getattr(args, "trace", False):
        cfg.run.trace = True
    if getattr(args, "verify", False):
        cfg.run.verify = True
    cfg.validate()
    return cfg


def cmd_validate(args) -> int:
    cfg = _load(args)
    params = cfg.effective_workload()
    rates = derived_rates(params, len(cfg.topology.sites))
    print(f"config hash: {cfg.config_hash()}")
    print(f"sensors per site (effective): {params.n_sensors}")
    print(f"sensor raw rate:              {rates.sensor_raw_bps:,.1f} bit/s")
    print(f"quorum probability per tick:  {rates.quorum_prob_per_tick:.6g}")
    print(f"mean sensor->gateway:         {rates.mean_sensor_gateway_bps:,.1f} bit/s")
    print(f"edge ingress per site:        {rates.edge_ingress_bps:,.1f} bit/s")
    print(f"aggregate rate per sensor:    {rates.aggregate_rate_per_sensor_hz:g} /s")
    print(f"total insert rate:            {rates.total_insert_rate_hz:g} /s")
    print(f"event trigger rate per site:  {rates.event_trigger_rate_per_site_hz:.4g} /s")
    print(f"offline query rate:           {rates.query_rate_total_hz:g} /s "
          f"(recent {rates.query_rate_recent_hz:g}, "
          f"random {rates.query_rate_random_hz:g}, "
          f"scan {rates.query_rate_scan_hz:g})")
    warnings = 0
    for site in cfg.topology.sites:
        if rates.mean_sensor_gateway_bps > site.sensor_link.bandwidth_bps:
            print(f"WARNING: site {site.site_id}: sensor link "
                  f"({site.sensor_link.link_type}, "
                  f"{site.sensor_link.bandwidth_bps:,.0f} bit/s) cannot carry "
                  f"mean demand {rates.mean_sensor_gateway_bps:,.1f} bit/s")
            warnings += 1
        if rates.edge_ingress_bps > site.uplink.bandwidth_bps:
            print(f"WARNING: site {site.site_id}: uplink "
                  f"({site.uplink.link_type}) cannot carry edge egress "
                  f"{rates.edge_ingress_bps:,.1f} bit/s")
            warnings += 1
    total = rates.edge_ingress_bps * len(cfg.topology.sites)
    if total > cfg.topology.onprem_cloud_link.bandwidth_bps:
        print(f"WARNING: onprem->cloud link cannot carry {total:,.1f} bit/s")
        warnings += 1
    if warnings == 0:
        print("all links feasible at mean rates")
    return 0


def _write_artifacts(cfg: BenchConfig, out) -> str:
    out_dir = cfg.run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w") as fh:
        json.dump(out.report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "samples.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "issue_time_ns", "raw_ns", "corrected_ns",
                    "subject"])
        for s in out.samples:
            w.writerow([s.kind, s.issue_time, s.raw_ns,
                        "" if s.corrected_ns is None else s.corrected_ns,
                        s.subject])
    return report_path


def cmd_run(args) -> int:
    cfg = _load(args)
    binding = None
    server = None
    if cfg.run.mode == "external":
        from .adapter import ExternalBinding
        if args.loopback:
            from .adapter import StoreServer
            from .store import StoreCluster
            params = cfg.effective_workload()
            max_records = int(
                min(c.effective_disk_bytes for c in cfg.topology.cloud)
                // cfg.run.record_footprint_bytes)
            server = StoreServer(StoreCluster(
                [s.site_id for s in cfg.topology.sites],
                params.n_cloud, max_records))
            server.start()
            cfg.run.external_port = server.port
        binding = ExternalBinding(cfg.run.external_host,
                                  cfg.run.external_port,
                                  cfg.run.external_timeout_s)
        try:
            binding.connect()
        except OSError as exc:
            print(f"error: external endpoint unreachable: {exc}",
                  file=sys.stderr)
            return 2
    try:
        run = BenchmarkRun(cfg, binding)
        out = run.run()
    finally:
        if binding is not None:
            binding.close()
        if server is not None:
            server.stop()
    report_path = _write_artifacts(cfg, out)
    if run.sim.trace is not None:
        with open(os.path.join(cfg.run.out_dir, "trace.csv"), "w") as fh:
            for t, kind in run.sim.trace:
                fh.write(f"{t},{kind}\n")
    print(f"report: {report_path}")
    print(f"ingested {out.report['counters']['records_ingested']} records, "
          f"{sum(out.report['query_mix'].values())} queries")
    if cfg.run.verify and out.verify_failures:
        print(f"VERIFY FAILED: {out.verify_failures} query results "
              f"disagree with the omniscient oracle", file=sys.stderr)
        return 1
    return 0


def cmd_generate(args) -> int:
    from .model import WorkloadParams
    from .workload import generate_stream

    base = _load(args)
    params = base.effective_workload()
    sites = [s.site_id for s in base.topology.sites[:args.n_sites]]
    out = open(args.output, "w") if args.output else sys.stdout
    try:
        n = generate_stream(params, base.run.seed, args.duration or 1.0,
                            sites, out, base.run.scan_theta)
    finally:
        if args.output:
            out.close()
    print(f"wrote {n} records", file=sys.stderr)
    return 0


def _rescale_edge(cfg: BenchConfig, scale: float) -> BenchConfig:
    """Fresh config with sensor+gateway compute scaled by `scale`."""
    c = copy.deepcopy(cfg)
    for site in c.topology.sites:
        site.gateway_compute = site.gateway_compute.rescaled(scale)
        site.sensor_compute = site.sensor_compute.rescaled(scale)
    return c


def cmd_slo_search(args) -> int:
    cfg = _load(args)
    os.makedirs(cfg.run.out_dir, exist_ok=True)
    probe_path = os.path.join(cfg.run.out_dir, "slo_probes.jsonl")
    probe_log = []
    if os.path.exists(probe_path) and args.resume:
        with open(probe_path) as fh:
            probe_log = [(d["scale"], d["stable"])
                         for d in map(json.loads, fh) ]

    def run_factory(scale: float):
        out = run_benchmark(_rescale_edge(cfg, scale))
        with open(probe_path, "a") as fh:
            stable = stability_predicate(out.edge_first_half_avg,
                                         out.edge_second_half_avg,
                                         out.edge_drops)
            fh.write(json.dumps({"scale": scale, "stable": stable,
                                 "first_half": out.edge_first_half_avg,
                                 "second_half": out.edge_second_half_avg,
                                 "drops": out.edge_drops}) + "\n")
        return out

    def predicate(out):
        return stability_predicate(out.edge_first_half_avg,
                                   out.edge_second_half_avg, out.edge_drops)

    if not (args.resume and os.path.exists(probe_path)):
        open(probe_path, "w").close()
    try:
        result = slo_search(run_factory, predicate, args.lo, args.hi,
                            args.tol, probe_log=probe_log)
    except SloSearchError as exc:
        print(f"slo-search failed: {exc}", file=sys.stderr)
        for scale, stable in exc.probes:
            print(f"  scale={scale:.4f} stable={stable}", file=sys.stderr)
        return 1
    bound = bisection_probe_bound(args.lo, args.hi, args.tol)
    print(f"minimal stable resource scale: {result.min_scale:.4f}")
    print(f"probes: {result.probe_count} (bound {bound})")
    for scale, stable in result.probes:
        print(f"  scale={scale:.4f} stable={stable}")
    with open(os.path.join(cfg.run.out_dir, "slo_result.json"), "w") as fh:
        json.dump({"slo_min_scale": result.min_scale,
                   "probes": result.probes,
                   "config_hash": cfg.config_hash(),
                   "seed": cfg.run.seed}, fh, sort_keys=True, indent=2)
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    if args.target <= 0 or args.target >= 1:
        print("error: --target must be in (0, 1)", file=sys.stderr)
        return 2

    def run_factory(rate: float):
        c = copy.deepcopy(cfg)
        c.workload.request_rate_hz = rate
        return run_benchmark(c).cloud_utilization

    result = calibrate_request_rate(run_factory, args.target, args.tol,
                                    rate_0=cfg.workload.request_rate_hz)
    os.makedirs(cfg.run.out_dir, exist_ok=True)
    with open(os.path.join(cfg.run.out_dir, "calibration.json"), "w") as fh:
        json.dump({"calibrated_request_rate_hz": result.rate_hz,
                   "utilization": result.utilization,
                   "converged": result.converged,
                   "probes": result.probes,
                   "config_hash": cfg.config_hash(),
                   "seed": cfg.run.seed}, fh, sort_keys=True, indent=2)
    derived_path = os.path.join(cfg.run.out_dir, "calibrated_config.yaml")
    import yaml
    doc = {"workload": {"request_rate_hz": result.rate_hz}}
    with open(derived_path, "w") as fh:
        yaml.safe_dump(doc, fh)
    if result.converged:
        print(f"calibrated request rate: {result.rate_hz:.4f} Hz "
              f"(utilization {result.utilization:.3f})")
        print(f"derived config: {derived_path}")
        return 0
    print(f"calibration did not converge: best utilization "
          f"{result.utilization:.3f} at {result.rate_hz:.4f} Hz",
          file=sys.stderr)
    return 1


def cmd_serve(args) -> int:
    from .adapter import StoreServer
    from .store import StoreCluster

    cfg = _load(args)
    params = cfg.effective_workload()
    max_records = int(min(c.effective_disk_bytes for c in cfg.topology.cloud)
                      // cfg.run.record_footprint_bytes)
    server = StoreServer(StoreCluster(
        [s.site_id for s in cfg.topology.sites], params.n_cloud, max_records),
        host=args.host, port=args.port)
    print(f"reference store serving on {args.host}:{server.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fogbench",
        description="Benchmark harness for fog data-processing systems")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, run_flags=True):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="override run.seed")
        if run_flags:
            p.add_argument("--duration", type=float,
                           help="override run.duration_s")
            p.add_argument("--mode", choices=["sim", "external"])
            p.add_argument("--out", help="output directory")
            p.add_argument("--trace", action="store_true",
                           help="dump an event trace")
            p.add_argument("--verify", action="store_true",
                           help="check query results against the oracle")
        p.add_argument("--scale-sensors", type=float, dest="scale_sensors",
                       help="scale factor applied to sensors per site")

    p = sub.add_parser("validate", help="print analytical rates, check links")
    common(p, run_flags=False)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="execute one benchmark run")
    common(p)
    p.add_argument("--loopback", action="store_true",
                   help="external mode: spawn an in-process loopback server")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("generate", help="emit a raw reading/query stream")
    common(p, run_flags=False)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--n-sites", type=int, default=1)
    p.add_argument("--output", help="file (default stdout)")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("slo-search", help="minimal stable edge resource scale")
    common(p)
    p.add_argument("--lo", type=float, default=0.5)
    p.add_argument("--hi", type=float, default=4.0)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--resume", action="store_true",
                   help="reuse probes from slo_probes.jsonl")
    p.set_defaults(fn=cmd_slo_search)

    p = sub.add_parser("calibrate", help="tune request rate to a target "
                                         "cloud utilization")
    common(p)
    p.add_argument("--target", type=float, default=0.80)
    p.add_argument("--tol", type=float, default=0.05)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("serve", help="host the reference store behind the "
                                     "wire protocol")
    common(p, run_flags=False)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=4710)
    p.set_defaults(fn=cmd_serve)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
