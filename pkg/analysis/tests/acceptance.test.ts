/**
 * Cross-check against the harness: percentile tables recomputed from
 * samples.csv must equal the report.json latency blocks, and a run
 * compared against itself must show all-zero deltas.
 */

import * as fs from 'fs';
import * as path from 'path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { RunArtifact, loadArtifact } from '../src/artifact.js';
import { compareRuns, checkComparable } from '../src/compare.js';
import { FAMILIES, plotLatency } from '../src/plot.js';
import { Fixtures, generateFixtures } from './fixtures.js';

let fx: Fixtures;
let runA: RunArtifact;
let runB: RunArtifact;

beforeAll(() => {
  fx = generateFixtures();
  runA = loadArtifact(fx.runA);
  runB = loadArtifact(fx.runB);
}, 120_000);

afterAll(() => {
  fs.rmSync(fx.root, { recursive: true, force: true });
});

describe('percentile tables vs report.json', () => {
  it('every family block equals the report latency block', () => {
    const outDir = path.join(fx.root, 'plots');
    const { blocks } = plotLatency([runA], outDir);
    for (const family of FAMILIES) {
      const fromSamples = blocks[family.id]['runA'];
      const fromReport = runA.report.latency[family.id];
      expect(fromSamples, family.id).toEqual(fromReport);
      expect(fromSamples.count).toBeGreaterThan(0);
    }
  });

  it('emits one CDF per family plus the table', () => {
    const outDir = path.join(fx.root, 'plots2');
    const out = plotLatency([runA, runB], outDir);
    expect(out.svgPaths).toHaveLength(FAMILIES.length);
    for (const p of out.svgPaths) {
      expect(fs.existsSync(p)).toBe(true);
      expect(fs.readFileSync(p, 'utf-8')).toContain('<svg');
    }
    const table = fs.readFileSync(out.tablePath, 'utf-8');
    expect(table).toContain('runA');
    expect(table).toContain('runB');
  });

  it('a family with no samples gets an explicit empty notice', () => {
    const dir = path.join(fx.root, 'no-events');
    fs.mkdirSync(dir, { recursive: true });
    fs.copyFileSync(path.join(fx.runA, 'report.json'),
                    path.join(dir, 'report.json'));
    const csv = fs.readFileSync(path.join(fx.runA, 'samples.csv'), 'utf-8')
      .split('\n')
      .filter((line) => !line.startsWith('event_report'))
      .join('\n');
    fs.writeFileSync(path.join(dir, 'samples.csv'), csv);
    const out = plotLatency([loadArtifact(dir)],
                            path.join(fx.root, 'plots3'));
    const svg = fs.readFileSync(
      out.svgPaths.find((p) => p.includes('event_report'))!, 'utf-8');
    expect(svg).toContain("no 'event_report' samples");
  });
});

describe('run comparison', () => {
  it('self-comparison yields all-zero deltas', () => {
    const again = loadArtifact(fx.runA);
    const rows = compareRuns([runA, again]);
    expect(rows.length).toBeGreaterThan(20);
    for (const row of rows) {
      for (const d of row.deltas) {
        if (d !== null) expect(d, row.name).toBe(0);
      }
    }
  });

  it('rejects mismatched seeds and names the field', () => {
    expect(() => checkComparable([runA, runB])).toThrow(/seed/);
  });

  it('needs at least two runs', () => {
    expect(() => compareRuns([runA])).toThrow(/two/);
  });
});
