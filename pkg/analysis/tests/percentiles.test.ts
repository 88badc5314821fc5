import { describe, expect, it } from 'vitest';
import { percentile, percentileBlock } from '../src/percentiles.js';

// frozen against the harness implementation: nearest-rank,
// rank = max(1, ceil(q/100 * n))
describe('percentile', () => {
  it('matches the harness nearest-rank examples', () => {
    expect(percentile([1, 2, 3, 4], 50)).toBe(2);
    expect(percentile([1, 2, 3, 4], 90)).toBe(4);
    expect(percentile([3, 1, 2], 50)).toBe(2);
    expect(percentile([5], 99)).toBe(5);
  });

  it('handles empty input', () => {
    expect(percentile([], 50)).toBeNull();
  });

  it('does not mutate its input', () => {
    const v = [3, 1, 2];
    percentile(v, 50);
    expect(v).toEqual([3, 1, 2]);
  });

  it('p100 is the max', () => {
    expect(percentile([9, 1, 4], 100)).toBe(9);
  });
});

describe('percentileBlock', () => {
  it('computes all fields over 1..100', () => {
    const values = Array.from({ length: 100 }, (_, i) => i + 1);
    expect(percentileBlock(values)).toEqual(
      { count: 100, p50: 50, p90: 90, p99: 99, max: 100 });
  });

  it('empty block is all nulls', () => {
    expect(percentileBlock([])).toEqual(
      { count: 0, p50: null, p90: null, p99: null, max: null });
  });
});
