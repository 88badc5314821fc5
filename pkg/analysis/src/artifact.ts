/**
 * Run-artifact loading. An artifact directory holds the report.json and
 * samples.csv written by one benchmark run; analysis never writes into it.
 */

import * as fs from 'fs';
import * as path from 'path';
import Papa from 'papaparse';

export const SUPPORTED_SCHEMA = 1;

export interface PercentileBlock {
  count: number;
  p50: number | null;
  p90: number | null;
  p99: number | null;
  max: number | null;
}

export interface Report {
  schema_version: number;
  tool_version: string;
  seed: number;
  config_hash: string;
  mode: string;
  duration_s: number;
  warmup_s: number;
  n_sensors_effective: number;
  latency: Record<string, PercentileBlock>;
  staleness_violation_ratio: number | null;
  query_mix: Record<string, number>;
  failures: Record<string, number>;
  bandwidth_bps: Record<string, number>;
  utilization: Record<string, number>;
  counters: Record<string, number | null>;
  edge_queue: Record<string, number>;
  analytical: Record<string, number>;
  slo_min_scale: number | null;
  calibrated_request_rate: number | null;
}

export interface Sample {
  kind: string;
  issueTimeNs: number;
  rawNs: number;
  correctedNs: number | null;
  subject: string;
}

export interface RunArtifact {
  dir: string;
  label: string;
  report: Report;
  samples: Sample[];
  configHash: string;
  seed: number;
}

export class ArtifactError extends Error {}

export function loadArtifact(dir: string): RunArtifact {
  const reportPath = path.join(dir, 'report.json');
  const samplesPath = path.join(dir, 'samples.csv');
  if (!fs.existsSync(reportPath)) {
    throw new ArtifactError(`${dir}: no report.json`);
  }
  const report = JSON.parse(fs.readFileSync(reportPath, 'utf-8')) as Report;
  if (report.schema_version !== SUPPORTED_SCHEMA) {
    throw new ArtifactError(
      `${dir}: schema_version ${report.schema_version}, ` +
      `this tool reads ${SUPPORTED_SCHEMA}`);
  }
  const samples: Sample[] = [];
  if (fs.existsSync(samplesPath)) {
    const parsed = Papa.parse<Record<string, string>>(
      fs.readFileSync(samplesPath, 'utf-8'),
      { header: true, skipEmptyLines: true });
    if (parsed.errors.length > 0) {
      throw new ArtifactError(
        `${dir}: samples.csv parse error: ${parsed.errors[0].message}`);
    }
    for (const row of parsed.data) {
      samples.push({
        kind: row.kind,
        issueTimeNs: Number(row.issue_time_ns),
        rawNs: Number(row.raw_ns),
        correctedNs: row.corrected_ns === '' ? null : Number(row.corrected_ns),
        subject: row.subject,
      });
    }
  }
  return {
    dir,
    label: path.basename(path.resolve(dir)),
    report,
    samples,
    configHash: report.config_hash,
    seed: report.seed,
  };
}

/** Load several artifact directories; mixed schema versions are refused. */
export function loadArtifacts(dirs: string[]): RunArtifact[] {
  if (dirs.length === 0) {
    throw new ArtifactError('need at least one artifact directory');
  }
  return dirs.map(loadArtifact);
}
