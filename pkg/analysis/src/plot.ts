/**
 * Latency CDFs and percentile tables per metric family.
 *
 * Families map onto the sample kinds the harness emits; the e2e insert
 * family is plotted twice, raw and propagation-corrected. Samples inside
 * the warm-up window are excluded, matching the report's own filtering.
 */

import * as fs from 'fs';
import * as path from 'path';
import { RunArtifact, PercentileBlock } from './artifact.js';
import { percentileBlock } from './percentiles.js';

export interface Family {
  id: string;           // file stem
  kind: string;         // sample kind in samples.csv
  corrected: boolean;
  title: string;
}

export const FAMILIES: Family[] = [
  { id: 'e2e_insert', kind: 'e2e_insert', corrected: false,
    title: 'End-to-end insert latency (raw)' },
  { id: 'e2e_insert_corrected', kind: 'e2e_insert', corrected: true,
    title: 'End-to-end insert latency (propagation-corrected)' },
  { id: 'event_report', kind: 'event_report', corrected: false,
    title: 'Event report latency' },
  { id: 'query', kind: 'query', corrected: false,
    title: 'Query latency' },
];

export function familyValues(artifact: RunArtifact, family: Family): number[] {
  const warmupNs = artifact.report.warmup_s * 1e9;
  const out: number[] = [];
  for (const s of artifact.samples) {
    if (s.kind !== family.kind || s.issueTimeNs < warmupNs) continue;
    const v = family.corrected ? s.correctedNs : s.rawNs;
    if (v !== null) out.push(v);
  }
  return out;
}

const WIDTH = 640;
const HEIGHT = 400;
const MARGIN = { top: 30, right: 20, bottom: 45, left: 70 };
const COLORS = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e',
                '#8c564b'];

function esc(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}

/** Step-CDF polyline points for one sorted sample set, in plot space. */
function cdfPath(sorted: number[], xMax: number): string {
  const pw = WIDTH - MARGIN.left - MARGIN.right;
  const ph = HEIGHT - MARGIN.top - MARGIN.bottom;
  const pts: string[] = [];
  const n = sorted.length;
  const step = Math.max(1, Math.floor(n / 500)); // cap the point count
  for (let i = 0; i < n; i += step) {
    const x = MARGIN.left + (sorted[i] / xMax) * pw;
    const y = MARGIN.top + ph - ((i + 1) / n) * ph;
    pts.push(`${x.toFixed(1)},${y.toFixed(1)}`);
  }
  const last = MARGIN.left + (sorted[n - 1] / xMax) * pw;
  pts.push(`${last.toFixed(1)},${MARGIN.top.toFixed(1)}`);
  return pts.join(' ');
}

export function renderCdfSvg(
  family: Family, series: { label: string; values: number[] }[]): string {
  const nonEmpty = series.filter((s) => s.values.length > 0);
  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
             `height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`);
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  parts.push(`<text x="${WIDTH / 2}" y="18" text-anchor="middle" ` +
             `font-family="sans-serif" font-size="14">` +
             `${esc(family.title)}</text>`);
  if (nonEmpty.length === 0) {
    parts.push(`<text x="${WIDTH / 2}" y="${HEIGHT / 2}" ` +
               `text-anchor="middle" font-family="sans-serif" ` +
               `font-size="13" fill="#888">no '${esc(family.kind)}' samples ` +
               `in any input run</text>`);
    parts.push('</svg>');
    return parts.join('\n');
  }
  const xMax = Math.max(...nonEmpty.map((s) => Math.max(...s.values))) || 1;
  const ph = HEIGHT - MARGIN.top - MARGIN.bottom;
  const pw = WIDTH - MARGIN.left - MARGIN.right;
  // axes
  parts.push(`<line x1="${MARGIN.left}" y1="${MARGIN.top}" ` +
             `x2="${MARGIN.left}" y2="${MARGIN.top + ph}" stroke="black"/>`);
  parts.push(`<line x1="${MARGIN.left}" y1="${MARGIN.top + ph}" ` +
             `x2="${MARGIN.left + pw}" y2="${MARGIN.top + ph}" ` +
             `stroke="black"/>`);
  for (const frac of [0, 0.25, 0.5, 0.75, 1.0]) {
    const y = MARGIN.top + ph - frac * ph;
    parts.push(`<text x="${MARGIN.left - 8}" y="${y + 4}" ` +
               `text-anchor="end" font-family="sans-serif" font-size="11">` +
               `${frac.toFixed(2)}</text>`);
    const x = MARGIN.left + frac * pw;
    const ms = (frac * xMax) / 1e6;
    parts.push(`<text x="${x}" y="${MARGIN.top + ph + 18}" ` +
               `text-anchor="middle" font-family="sans-serif" ` +
               `font-size="11">${ms.toPrecision(3)}</text>`);
  }
  parts.push(`<text x="${MARGIN.left + pw / 2}" y="${HEIGHT - 8}" ` +
             `text-anchor="middle" font-family="sans-serif" ` +
             `font-size="12">latency (ms)</text>`);
  series.forEach((s, i) => {
    if (s.values.length === 0) return;
    const sorted = [...s.values].sort((a, b) => a - b);
    const color = COLORS[i % COLORS.length];
    parts.push(`<polyline fill="none" stroke="${color}" stroke-width="1.5" ` +
               `points="${cdfPath(sorted, xMax)}"/>`);
    parts.push(`<text x="${MARGIN.left + 10}" y="${MARGIN.top + 14 + 16 * i}" ` +
               `font-family="sans-serif" font-size="12" fill="${color}">` +
               `${esc(s.label)} (n=${s.values.length})</text>`);
  });
  const empty = series.filter((s) => s.values.length === 0);
  empty.forEach((s, i) => {
    parts.push(`<text x="${MARGIN.left + 10}" ` +
               `y="${MARGIN.top + ph - 10 - 14 * i}" ` +
               `font-family="sans-serif" font-size="11" fill="#888">` +
               `${esc(s.label)}: no samples</text>`);
  });
  parts.push('</svg>');
  return parts.join('\n');
}

function fmtNs(v: number | null): string {
  return v === null ? '-' : `${(v / 1e6).toFixed(3)} ms`;
}

export function percentileTable(
  family: Family, rows: { label: string; block: PercentileBlock }[]): string {
  const lines: string[] = [];
  lines.push(`### ${family.title}`);
  lines.push('');
  lines.push('| run | count | p50 | p90 | p99 | max |');
  lines.push('| --- | ---: | ---: | ---: | ---: | ---: |');
  for (const { label, block } of rows) {
    if (block.count === 0) {
      lines.push(`| ${label} | 0 | - | - | - | - |`);
    } else {
      lines.push(`| ${label} | ${block.count} | ${fmtNs(block.p50)} | ` +
                 `${fmtNs(block.p90)} | ${fmtNs(block.p99)} | ` +
                 `${fmtNs(block.max)} |`);
    }
  }
  lines.push('');
  return lines.join('\n');
}

export interface PlotOutput {
  svgPaths: string[];
  tablePath: string;
  /** family id -> label -> block, recomputed from samples.csv */
  blocks: Record<string, Record<string, PercentileBlock>>;
}

export function plotLatency(artifacts: RunArtifact[], outDir: string): PlotOutput {
  fs.mkdirSync(outDir, { recursive: true });
  const svgPaths: string[] = [];
  const tables: string[] = ['# Latency percentiles', ''];
  const blocks: PlotOutput['blocks'] = {};
  for (const family of FAMILIES) {
    const series = artifacts.map((a) => ({
      label: a.label,
      values: familyValues(a, family),
    }));
    const svg = renderCdfSvg(family, series);
    const svgPath = path.join(outDir, `cdf_${family.id}.svg`);
    fs.writeFileSync(svgPath, svg);
    svgPaths.push(svgPath);
    const rows = series.map((s) => ({
      label: s.label,
      block: percentileBlock(s.values),
    }));
    blocks[family.id] = Object.fromEntries(
      rows.map((r) => [r.label, r.block]));
    tables.push(percentileTable(family, rows));
  }
  const tablePath = path.join(outDir, 'percentiles.md');
  fs.writeFileSync(tablePath, tables.join('\n'));
  return { svgPaths, tablePath, blocks };
}
