/**
 * End-to-end scaffolding: spawn a platform server and seed it through the
 * documented HTTP surface only (auth, users, protocols, projects, and the
 * admin storage passthrough for volumes and model snapshots).
 */

import { spawn, type ChildProcess } from 'node:child_process';
import { once } from 'node:events';
import { mkdtempSync } from 'node:fs';
import { createServer } from 'node:net';
import { tmpdir } from 'node:os';
import path from 'node:path';
import { fileURLToPath } from 'node:url';

import type { AnnotationTemplate } from '../src/types.js';

const HERE = path.dirname(fileURLToPath(import.meta.url));
// compiled location: frontend/dist/tests -> repo src tree at ../../../src
const PY_SRC = path.resolve(HERE, '..', '..', '..', 'src');

export const ADMIN_PASSWORD = 'e2e-admin';

export interface TestServer {
  base: string;
  proc: ChildProcess;
  stop: () => Promise<void>;
}

async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.on('error', reject);
    srv.listen(0, '127.0.0.1', () => {
      const port = (srv.address() as { port: number }).port;
      srv.close(() => resolve(port));
    });
  });
}

export async function spawnServer(): Promise<TestServer> {
  const dataDir = mkdtempSync(path.join(tmpdir(), 'radstack-e2e-'));
  const port = await freePort();
  const proc = spawn(
    'python3',
    [
      '-m', 'radstack.cli', 'serve',
      '--data-dir', dataDir,
      '--bind', `127.0.0.1:${port}`,
      '--admin-password', ADMIN_PASSWORD,
      '--no-training-loops',
      '--log-level', 'warning',
    ],
    { env: { ...process.env, PYTHONPATH: PY_SRC }, stdio: 'ignore' },
  );
  const base = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 30_000;
  for (;;) {
    if (proc.exitCode !== null) throw new Error(`server exited with ${proc.exitCode}`);
    try {
      const res = await fetch(`${base}/healthz`);
      if (res.ok) break;
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) throw new Error('server did not become healthy');
    await new Promise((r) => setTimeout(r, 150));
  }
  return {
    base,
    proc,
    stop: async () => {
      proc.kill('SIGTERM');
      await Promise.race([once(proc, 'exit'), new Promise((r) => setTimeout(r, 5000))]);
      if (proc.exitCode === null) proc.kill('SIGKILL');
    },
  };
}

async function call(base: string, token: string | null, method: string, urlPath: string, body?: unknown) {
  const headers: Record<string, string> = { 'Content-Type': 'application/json' };
  if (token) headers['Authorization'] = `Bearer ${token}`;
  const res = await fetch(`${base}${urlPath}`, {
    method,
    headers,
    body: body === undefined ? undefined : JSON.stringify(body),
  });
  const data = await res.json().catch(() => null);
  if (!res.ok) throw new Error(`${method} ${urlPath} -> ${res.status}: ${JSON.stringify(data)}`);
  return data;
}

export async function adminToken(base: string): Promise<string> {
  const out = await call(base, null, 'POST', '/auth/login', {
    user_id: 'admin',
    password: ADMIN_PASSWORD,
  });
  return out.token as string;
}

export const E2E_TEMPLATE: AnnotationTemplate = {
  template_id: 'e2e-tpl',
  fields: [
    { field_id: 'priority', level: 'study', vocabulary: ['low', 'high'], required: false },
    { field_id: 'quality', level: 'series', vocabulary: ['good', 'bad'], required: true },
    { field_id: 'slice_ok', level: 'slice', vocabulary: ['yes', 'no'], required: false },
    { field_id: 'finding', level: 'region', vocabulary: ['lesion', 'nodule'], required: true },
  ],
};

export async function seedSite(base: string): Promise<{ token: string; projectId: string }> {
  const token = await adminToken(base);
  await call(base, token, 'POST', '/protocols', { id: 'e2e-proto', title: 'E2E' });
  await call(base, token, 'POST', '/projects', {
    id: 'e2e-proj',
    protocol_id: 'e2e-proto',
    template: E2E_TEMPLATE,
    maturity_threshold: 0.7,
  });
  for (const [uid, roles] of [
    ['rad-a', ['annotator']],
    ['rad-b', ['annotator']],
    ['lead-1', ['lead']],
  ] as const) {
    await call(base, token, 'POST', '/users', {
      id: uid,
      password: 'pw',
      roles,
      protocol_grants: ['e2e-proto'],
    });
  }
  return { token, projectId: 'e2e-proj' };
}

/** Volume with a bright centered ball on a dark background. */
export function sphereVolume(dims: [number, number, number]): {
  voxels: Int16Array;
  sphere: Uint8Array;
} {
  const [nz, ny, nx] = dims;
  const voxels = new Int16Array(nz * ny * nx);
  const sphere = new Uint8Array(nz * ny * nx);
  const r = 0.3 * Math.min(nz, ny, nx);
  for (let z = 0; z < nz; z++) {
    for (let y = 0; y < ny; y++) {
      for (let x = 0; x < nx; x++) {
        const i = z * ny * nx + y * nx + x;
        const d2 = (z - nz / 2) ** 2 + (y - ny / 2) ** 2 + (x - nx / 2) ** 2;
        if (d2 <= r * r) {
          voxels[i] = 400;
          sphere[i] = 1;
        } else {
          voxels[i] = -80 + ((z * 31 + y * 7 + x * 13) % 41); // deterministic texture
        }
      }
    }
  }
  return { voxels, sphere };
}

export const PHI_SENTINEL = 'ZZPHI_E2E_SENTINEL';

export async function seedSeries(
  base: string,
  token: string,
  seriesId: string,
  dims: [number, number, number],
  voxels: Int16Array,
): Promise<void> {
  const payload = voxels.buffer.slice(0) as ArrayBuffer;
  const res = await fetch(`${base}/storage/blobs/volumes/1/${seriesId}`, {
    method: 'PUT',
    headers: { Authorization: `Bearer ${token}` },
    body: payload,
  });
  if (!res.ok) throw new Error(`blob put failed: ${res.status}`);
  await call(base, token, 'PUT', '/storage/records/series', {
    record: {
      id: seriesId,
      study_id: `study-${seriesId}`,
      dims,
      spacing_mm: [3.0, 1.0, 1.0],
      orientation: [1, 0, 0, 0, 1, 0],
      rescale: [1.0, 0.0],
      volume_blob_version: 1,
      Modality: 'CT',
      protocol_id: 'e2e-proto',
      slice_count: dims[0],
    },
    phi: {
      PatientName: `${PHI_SENTINEL}^NAME`,
      PatientID: `${PHI_SENTINEL}-MRN`,
    },
  });
}

/** A mature reference-segmenter snapshot so proposals are served. */
export async function seedSnapshot(
  base: string,
  token: string,
  projectId: string,
  threshold: number,
  metric = 0.9,
): Promise<void> {
  const state = JSON.stringify({
    threshold,
    train_dice: metric,
    examples: [],
    label_counts: { lesion: 3 },
  });
  const res = await fetch(`${base}/storage/blobs/models/1/${projectId}/model`, {
    method: 'PUT',
    headers: { Authorization: `Bearer ${token}` },
    body: state,
  });
  if (!res.ok) throw new Error(`weights put failed: ${res.status}`);
  await call(base, token, 'PUT', '/storage/records/models', {
    record: {
      id: `${projectId}:model:v000001`,
      project_id: projectId,
      model_id: 'model',
      version: 1,
      metric_name: 'dice',
      metric_value: metric,
      weights_namespace: 'models',
      weights_id: `${projectId}/model`,
      weights_version: 1,
      trained_on: [],
      frozen: false,
      created_at: Date.now() / 1000,
    },
  });
}
