/**
 * Side-by-side comparison of runs of the same benchmark configuration.
 *
 * Runs must share config hash and seed; anything else would compare
 * different experiments, so mismatches are hard errors naming the
 * fields that differ. Deltas are relative to the first run.
 */

import * as fs from 'fs';
import { ArtifactError, Report, RunArtifact } from './artifact.js';

const IDENTITY_FIELDS: (keyof Report)[] = [
  'schema_version', 'config_hash', 'seed', 'duration_s', 'warmup_s',
  'n_sensors_effective',
];

export function checkComparable(artifacts: RunArtifact[]): void {
  if (artifacts.length < 2) {
    throw new ArtifactError('compare needs at least two artifact directories');
  }
  const base = artifacts[0];
  for (const other of artifacts.slice(1)) {
    const differing = IDENTITY_FIELDS.filter(
      (f) => JSON.stringify(base.report[f]) !== JSON.stringify(other.report[f]));
    if (differing.length > 0) {
      throw new ArtifactError(
        `${other.dir} is not comparable to ${base.dir}: ` +
        `differing fields: ${differing.join(', ')}`);
    }
  }
}

export interface MetricRow {
  name: string;
  values: (number | null)[];
  deltas: (number | null)[];   // relative to the first run; null if undefined
}

function* numericMetrics(r: Report): Generator<[string, number | null]> {
  for (const [kind, block] of Object.entries(r.latency)) {
    yield [`latency.${kind}.count`, block.count];
    yield [`latency.${kind}.p50`, block.p50];
    yield [`latency.${kind}.p90`, block.p90];
    yield [`latency.${kind}.p99`, block.p99];
    yield [`latency.${kind}.max`, block.max];
  }
  yield ['staleness_violation_ratio', r.staleness_violation_ratio];
  for (const [k, v] of Object.entries(r.query_mix)) {
    yield [`query_mix.${k}`, v];
  }
  for (const [k, v] of Object.entries(r.failures)) {
    yield [`failures.${k}`, v];
  }
  for (const [k, v] of Object.entries(r.bandwidth_bps)) {
    yield [`bandwidth_bps.${k}`, v];
  }
  for (const [k, v] of Object.entries(r.utilization)) {
    yield [`utilization.${k}`, v];
  }
  for (const [k, v] of Object.entries(r.counters)) {
    yield [`counters.${k}`, v];
  }
  for (const [k, v] of Object.entries(r.edge_queue)) {
    yield [`edge_queue.${k}`, v];
  }
}

export function compareRuns(artifacts: RunArtifact[]): MetricRow[] {
  checkComparable(artifacts);
  const perRun = artifacts.map((a) => new Map(numericMetrics(a.report)));
  const names = [...perRun[0].keys()];
  return names.map((name) => {
    const values = perRun.map((m) => m.get(name) ?? null);
    const base = values[0];
    const deltas = values.map((v) => {
      if (v === null || base === null) return null;
      if (base === 0) return v === 0 ? 0 : null;
      return (v - base) / base;
    });
    return { name, values, deltas };
  });
}

function fmt(v: number | null): string {
  if (v === null) return '-';
  if (Number.isInteger(v)) return String(v);
  return v.toPrecision(6);
}

function fmtDelta(d: number | null): string {
  if (d === null) return '-';
  return `${(d * 100).toFixed(2)}%`;
}

export function renderComparison(artifacts: RunArtifact[],
                                 rows: MetricRow[]): string {
  const labels = artifacts.map((a) => a.label);
  const lines: string[] = [];
  lines.push('# Run comparison');
  lines.push('');
  lines.push(`Config hash \`${artifacts[0].configHash}\`, ` +
             `seed ${artifacts[0].seed}. Deltas are relative to ` +
             `\`${labels[0]}\`.`);
  lines.push('');
  const header = ['metric', ...labels,
                  ...labels.slice(1).map((l) => `delta(${l})`)];
  lines.push(`| ${header.join(' | ')} |`);
  lines.push(`| --- | ${header.slice(1).map(() => '---:').join(' | ')} |`);
  for (const row of rows) {
    const cells = [row.name, ...row.values.map(fmt),
                   ...row.deltas.slice(1).map(fmtDelta)];
    lines.push(`| ${cells.join(' | ')} |`);
  }
  lines.push('');
  return lines.join('\n');
}

export function writeComparison(artifacts: RunArtifact[],
                                outPath: string): MetricRow[] {
  const rows = compareRuns(artifacts);
  fs.writeFileSync(outPath, renderComparison(artifacts, rows));
  return rows;
}
