import json
import math

import pytest

from fogbench.cli import main
from fogbench.model import BenchConfig, RunSettings, WorkloadParams
from fogbench.sim import BenchmarkRun, run_benchmark

NS = 1_000_000_000


def small_config(seed=7, duration=10.0, **run_kw):
    """Two tiny sites, everything generously provisioned."""
    cfg = BenchConfig(
        workload=WorkloadParams(n_sensors=5, n_agg=10, sampling_rate_hz=20.0,
                                buffer_size=50, n_clients=4,
                                request_rate_hz=2.0, n_cloud=2),
        run=RunSettings(seed=seed, duration_s=duration, **run_kw))
    cfg.topology.sites = cfg.topology.sites[:2]
    for site in cfg.topology.sites:
        site.sensor_link.bandwidth_bps = 10e6   # no radio saturation
        site.sensor_link.loss_rate = 0.0
        site.sensor_link.corrupt_rate = 0.0
        site.sensor_link.reorder_rate = 0.0
        site.sensor_link.dup_rate = 0.0
    cfg.topology.cloud = cfg.topology.cloud[:2]
    return cfg


class TestRunDeterminism:
    def test_same_seed_byte_identical_report(self):
        a = run_benchmark(small_config(seed=11)).report
        b = run_benchmark(small_config(seed=11)).report
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_different_seed_differs(self):
        a = run_benchmark(small_config(seed=11)).report
        b = run_benchmark(small_config(seed=12)).report
        assert (a["counters"]["exceeds_generated"]
                != b["counters"]["exceeds_generated"])

    def test_samples_identical(self):
        a = run_benchmark(small_config(seed=3)).samples
        b = run_benchmark(small_config(seed=3)).samples
        assert [(s.kind, s.issue_time, s.raw_ns) for s in a] \
            == [(s.kind, s.issue_time, s.raw_ns) for s in b]


class TestFlowConservation:
    def test_every_record_accounted_for(self):
        run = BenchmarkRun(small_config(seed=5, duration=20.0))
        out = run.run()
        c = out.report["counters"]
        states = run.omni.state
        assert len(states) == c["aggregates_generated"]
        ingested = sum(1 for s in states if s == 1)
        dropped = sum(1 for s in states if s == 2)
        evicted = sum(1 for s in states if s == 3)
        in_flight = sum(1 for s in states if s == 0)
        assert ingested + dropped + evicted + in_flight == len(states)
        assert c["records_ingested"] == ingested
        assert dropped <= c["pipeline_drops"] + out.report["failures"]["ingest"]
        # with clean fast links, nearly everything lands
        assert ingested > 0.9 * len(states)

    def test_expected_volume(self):
        cfg = small_config(seed=5, duration=20.0)
        out = run_benchmark(cfg)
        c = out.report["counters"]
        # 2 sites x 5 sensors x 20 Hz x 20 s readings, 1 aggregate per 10
        assert c["readings_generated"] == 2 * 5 * 20 * 20
        assert c["aggregates_generated"] == c["readings_generated"] // 10

    def test_query_volume(self):
        cfg = small_config(seed=5, duration=20.0)
        out = run_benchmark(cfg)
        # 4 clients x 2 Hz x 20 s open loop, start phases staggered across
        # one period so the last client misses one slot
        period = NS // 2
        expected = sum(len(range(period * (i + 1) // 4, 20 * NS, period))
                       for i in range(4))
        assert sum(out.report["query_mix"].values()) == expected


class TestRunGuards:
    def test_excessive_warmup_frac_rejected(self):
        with pytest.raises(ValueError, match="warmup_frac"):
            small_config(duration=10.0, warmup_frac=1.0).validate()

    def test_duration_must_exceed_warmup(self):
        run = BenchmarkRun(small_config(duration=10.0))
        run.warmup_ns = run.duration_ns  # simulate a degenerate window
        with pytest.raises(ValueError, match="warm-up"):
            run.run()

    def test_verify_clean_run(self):
        cfg = small_config(seed=9, duration=10.0, verify=True)
        out = run_benchmark(cfg)
        assert out.verify_failures == 0


class TestOffsetCorrection:
    def test_corrected_subtracts_constant_propagation(self):
        run = BenchmarkRun(small_config(seed=2))
        out = run.run()
        inserts = [s for s in out.samples if s.kind == "e2e_insert"]
        assert inserts
        for s in inserts:
            sid = s.subject.split("/")[0]
            assert s.raw_ns - s.corrected_ns == run.offsets[sid]


class TestCli:
    def test_validate_prints_rates(self, capsys):
        assert main(["validate"]) == 0
        out = capsys.readouterr().out
        assert "19,200.0" in out
        assert "149,466.9" in out
        assert "WARNING" in out  # LoRaWAN cannot carry the default demand

    def test_run_writes_artifacts(self, tmp_path, capsys):
        rc = main(["run", "--config", str(self._cfg_file(tmp_path)),
                   "--out", str(tmp_path / "out")])
        assert rc == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["schema_version"] == 1
        header = (tmp_path / "out" / "samples.csv").read_text().splitlines()[0]
        assert header == "kind,issue_time_ns,raw_ns,corrected_ns,subject"

    def test_run_loopback_external_mode(self, tmp_path):
        rc = main(["run", "--config", str(self._cfg_file(tmp_path)),
                   "--mode", "external", "--loopback",
                   "--out", str(tmp_path / "out_ext")])
        assert rc == 0
        report = json.loads(
            (tmp_path / "out_ext" / "report.json").read_text())
        assert report["mode"] == "external"
        assert report["failures"]["ingest"] == 0

    def test_malformed_config_rejected(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("workload:\n  made_up_knob: 3\n")
        assert main(["validate", "--config", str(bad)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_generate_stream(self, tmp_path, capsys):
        out_file = tmp_path / "stream.ndjson"
        rc = main(["generate", "--duration", "0.5", "--n-sites", "1",
                   "--scale-sensors", "0.01", "--output", str(out_file)])
        assert rc == 0
        lines = out_file.read_text().splitlines()
        assert lines
        kinds = {json.loads(l)["type"] for l in lines}
        assert "reading" in kinds

    @staticmethod
    def _cfg_file(tmp_path):
        p = tmp_path / "cfg.yaml"
        p.write_text(
            "workload:\n"
            "  n_sensors: 5\n"
            "  n_agg: 10\n"
            "  sampling_rate_hz: 20.0\n"
            "  buffer_size: 50\n"
            "  n_clients: 4\n"
            "  request_rate_hz: 2.0\n"
            "run:\n"
            "  seed: 7\n"
            "  duration_s: 5.0\n")
        return p
