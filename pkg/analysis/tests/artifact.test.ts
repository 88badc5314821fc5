import * as fs from 'fs';
import * as path from 'path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { ArtifactError, loadArtifact, loadArtifacts } from '../src/artifact.js';
import { Fixtures, generateFixtures } from './fixtures.js';

let fx: Fixtures;

beforeAll(() => {
  fx = generateFixtures();
}, 120_000);

afterAll(() => {
  fs.rmSync(fx.root, { recursive: true, force: true });
});

describe('loadArtifact', () => {
  it('parses report and samples', () => {
    const a = loadArtifact(fx.runA);
    expect(a.report.schema_version).toBe(1);
    expect(a.seed).toBe(7);
    expect(a.configHash).toMatch(/^[0-9a-f]{16}$/);
    expect(a.label).toBe('runA');
    expect(a.samples.length).toBeGreaterThan(0);
    const kinds = new Set(a.samples.map((s) => s.kind));
    expect(kinds.has('e2e_insert')).toBe(true);
    expect(kinds.has('query')).toBe(true);
  });

  it('query samples carry no corrected latency', () => {
    const a = loadArtifact(fx.runA);
    for (const s of a.samples) {
      if (s.kind === 'query') expect(s.correctedNs).toBeNull();
      if (s.kind === 'e2e_insert') expect(s.correctedNs).not.toBeNull();
    }
  });

  it('rejects a missing report', () => {
    expect(() => loadArtifact(path.join(fx.root, 'nowhere')))
      .toThrow(ArtifactError);
  });

  it('rejects an unsupported schema version', () => {
    const dir = path.join(fx.root, 'doctored');
    fs.mkdirSync(dir, { recursive: true });
    const report = JSON.parse(
      fs.readFileSync(path.join(fx.runA, 'report.json'), 'utf-8'));
    report.schema_version = 2;
    fs.writeFileSync(path.join(dir, 'report.json'), JSON.stringify(report));
    expect(() => loadArtifact(dir)).toThrow(/schema_version 2/);
  });

  it('loadArtifacts needs at least one directory', () => {
    expect(() => loadArtifacts([])).toThrow(ArtifactError);
  });
});
