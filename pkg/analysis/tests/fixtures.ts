/** Generates real run artifacts through the harness CLI, once per suite. */

import { execFileSync } from 'child_process';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';

const CONFIG = `workload:
  n_sensors: 4
  sampling_rate_hz: 20.0
  n_agg: 10
  buffer_size: 50
  n_clients: 4
  request_rate_hz: 2.0
network:
  lorawan:
    bandwidth_bps: 100000000.0
    loss_rate: 0.0
    corrupt_rate: 0.0
    reorder_rate: 0.0
    dup_rate: 0.0
    jitter_frac: 0.0
run:
  duration_s: 6.0
`;

export interface Fixtures {
  root: string;
  runA: string;      // seed 7
  runB: string;      // seed 8
}

export function generateFixtures(): Fixtures {
  const root = fs.mkdtempSync(path.join(os.tmpdir(), 'analysis-fixtures-'));
  const cfgPath = path.join(root, 'cfg.yaml');
  fs.writeFileSync(cfgPath, CONFIG);
  const runA = path.join(root, 'runA');
  const runB = path.join(root, 'runB');
  for (const [dir, seed] of [[runA, 7], [runB, 8]] as const) {
    execFileSync('python3', ['-m', 'fogbench.cli', 'run',
                             '--config', cfgPath, '--seed', String(seed),
                             '--out', dir],
                 { stdio: 'pipe' });
  }
  return { root, runA, runB };
}
