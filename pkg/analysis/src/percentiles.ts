/**
 * Nearest-rank percentiles, mirroring the harness definition exactly so
 * tables recomputed from samples.csv are comparable to report.json.
 */

import { PercentileBlock } from './artifact.js';

export function percentile(values: number[], q: number): number | null {
  if (values.length === 0) return null;
  const s = [...values].sort((a, b) => a - b);
  const rank = Math.max(1, Math.ceil((q / 100) * s.length));
  return s[rank - 1];
}

export function percentileBlock(values: number[]): PercentileBlock {
  if (values.length === 0) {
    return { count: 0, p50: null, p90: null, p99: null, max: null };
  }
  const s = [...values].sort((a, b) => a - b);
  return {
    count: s.length,
    p50: percentile(s, 50),
    p90: percentile(s, 90),
    p99: percentile(s, 99),
    max: s[s.length - 1],
  };
}
