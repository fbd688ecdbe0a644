/**
 * Browser entry: canvas slice viewer with window/level, painting, template
 * form, proposal overlay, and QA panel. All state flows through the
 * controllers in the sibling modules; this file is DOM wiring only.
 */

import { ApiClient } from './api.js';
import { loadDashboard } from './dashboard.js';
import { brushStencil, paintStencil } from './painting.js';
import { fetchProposal, acceptProposal } from './proposal.js';
import { maskFromBase64, maskToBase64 } from './rle.js';
import { signOffUiState, uploadAndSignOff } from './signoff.js';
import { emptyAnnotation, type AnnotationDoc, type ProjectRecord, type SeriesRecord } from './types.js';
import { KEY_BINDINGS, ProgressiveVolume, ViewerState, loadVolumeProgressively } from './viewer.js';
import { CT_PRESETS, windowSlice } from './windowing.js';

interface AppState {
  api: ApiClient;
  project: ProjectRecord | null;
  series: SeriesRecord | null;
  viewer: ViewerState | null;
  working: AnnotationDoc | null;
  rgba: Uint8ClampedArray | null;
}

const state: AppState = {
  api: new ApiClient(location.origin),
  project: null,
  series: null,
  viewer: null,
  working: null,
  rgba: null,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function renderSlice(): void {
  const viewer = state.viewer;
  if (!viewer || !viewer.volume.interactive) return;
  const canvas = el<HTMLCanvasElement>('viewport');
  const [, ny, nx] = viewer.series.dims;
  canvas.width = nx;
  canvas.height = ny;
  const ctx = canvas.getContext('2d')!;
  const slice = viewer.volume.slice(viewer.sliceIndex);
  state.rgba = windowSlice(slice, viewer.windowCenter, viewer.windowWidth, state.rgba ?? undefined);
  const image = new ImageData(new Uint8ClampedArray(state.rgba), nx, ny);
  overlayMask(image);
  ctx.putImageData(image, 0, 0);
  el('slice-label').textContent =
    `slice ${viewer.sliceIndex + 1}/${viewer.series.dims[0]}` +
    (viewer.volume.progress.completeAt ? '' : ` (loaded ${viewer.volume.progress.slicesLoaded})`);
}

function overlayMask(image: ImageData): void {
  const viewer = state.viewer;
  const working = state.working;
  if (!viewer || !working || !viewer.overlays.myMasks) return;
  const [, ny, nx] = viewer.series.dims;
  const plane = ny * nx;
  const offset = viewer.sliceIndex * plane;
  for (const encoded of working.masks) {
    const mask = maskFromBase64(encoded);
    for (let i = 0; i < mask.runs.length; i += 2) {
      const start = mask.runs[i];
      const end = start + mask.runs[i + 1];
      const lo = Math.max(start, offset);
      const hi = Math.min(end, offset + plane);
      for (let v = lo; v < hi; v++) {
        const p = (v - offset) * 4;
        image.data[p] = Math.min(255, image.data[p] + 80); // red wash
      }
    }
  }
}

async function openSeries(seriesId: string): Promise<void> {
  const series = await state.api.getSeries(seriesId);
  state.series = series;
  const volume = new ProgressiveVolume(series.dims);
  state.viewer = new ViewerState(series, volume);
  state.working = emptyAnnotation(series.study_id, series.id, el<HTMLInputElement>('user').value);
  loadVolumeProgressively(state.api, series, (z, vol) => {
    if (z === 0 || z === state.viewer?.sliceIndex) renderSlice();
    el('progress').textContent = `${vol.progress.slicesLoaded}/${vol.progress.totalSlices}`;
  }).then(() => renderSlice());
  renderSlice();
  refreshProposal();
}

async function refreshProposal(): Promise<void> {
  if (!state.project || !state.series) return;
  const view = await fetchProposal(state.api, state.project.id, state.series.id);
  const button = el<HTMLButtonElement>('accept-proposal');
  button.hidden = !view.available;
  el('proposal-status').textContent = view.statusText;
  button.onclick = () => {
    if (view.proposal && state.working) {
      state.working = acceptProposal(state.working, view.proposal);
      renderSlice();
      refreshSignOff();
    }
  };
}

function refreshSignOff(): void {
  if (!state.project || !state.working || !state.series) return;
  const ui = signOffUiState(state.working, state.project.template, state.series.dims[0]);
  const button = el<HTMLButtonElement>('sign-off');
  button.disabled = !ui.enabled;
  button.title = Object.entries(ui.fieldProblems)
    .map(([fid, problem]) => `${fid}: ${problem}`)
    .join('\n');
}

function paintAtCursor(event: MouseEvent): void {
  const viewer = state.viewer;
  const working = state.working;
  if (!viewer || !working || viewer.activeTool !== 'paint') return;
  const canvas = el<HTMLCanvasElement>('viewport');
  const rect = canvas.getBoundingClientRect();
  const [, ny, nx] = viewer.series.dims;
  const cx = ((event.clientX - rect.left) / rect.width) * nx;
  const cy = ((event.clientY - rect.top) / rect.height) * ny;
  const stencil = brushStencil(ny, nx, cy, cx, Number(el<HTMLInputElement>('brush-size').value));
  const base = working.masks.length
    ? maskFromBase64(working.masks[working.masks.length - 1])
    : { dims: viewer.series.dims, runs: new Uint32Array(0), label: el<HTMLInputElement>('mask-label').value };
  const painted = paintStencil(base, viewer.sliceIndex, viewer.sliceIndex, stencil,
                               event.shiftKey ? 'erase' : 'add');
  working.masks = [...working.masks.slice(0, -1), maskToBase64(painted)];
  renderSlice();
  refreshSignOff();
}

async function boot(): Promise<void> {
  el<HTMLButtonElement>('login').onclick = async () => {
    await state.api.login(el<HTMLInputElement>('user').value, el<HTMLInputElement>('password').value);
    const projects = await state.api.listProjects();
    const select = el<HTMLSelectElement>('project');
    select.innerHTML = projects.map((p) => `<option value="${p.id}">${p.name}</option>`).join('');
    select.onchange = async () => {
      state.project = await state.api.getProject(select.value);
      const series = await state.api.listSeries();
      const list = el<HTMLSelectElement>('series');
      list.innerHTML = series.map((s) => `<option value="${s.id}">${s.id}</option>`).join('');
      list.onchange = () => openSeries(list.value);
    };
  };

  const presets = el<HTMLSelectElement>('preset');
  presets.innerHTML = CT_PRESETS.map((p, i) => `<option value="${i}">${p.name}</option>`).join('');
  presets.onchange = () => {
    const preset = CT_PRESETS[Number(presets.value)];
    state.viewer?.setWindow(preset.center, preset.width);
    renderSlice();
  };

  document.addEventListener('keydown', (e) => {
    const binding = KEY_BINDINGS[e.key];
    if (!binding || !state.viewer) return;
    if (binding === 'next-slice') state.viewer.goToSlice(state.viewer.sliceIndex + 1);
    else if (binding === 'prev-slice') state.viewer.goToSlice(state.viewer.sliceIndex - 1);
    else state.viewer.setTool(binding);
    renderSlice();
  });

  el<HTMLCanvasElement>('viewport').addEventListener('mousedown', paintAtCursor);

  el<HTMLButtonElement>('sign-off').onclick = async () => {
    if (!state.project || !state.working) return;
    const outcome = await uploadAndSignOff(state.api, state.project.id, state.working);
    el('signoff-status').textContent = outcome.ok
      ? `signed off v${outcome.version}`
      : `rejected: ${outcome.serverReport?.violations.map((v) => v.field_id).join(', ')}`;
  };

  el<HTMLButtonElement>('dashboard').onclick = async () => {
    if (!state.project) return;
    const view = await loadDashboard(state.api, state.project.id, null);
    el('dashboard-out').textContent = JSON.stringify(
      { management: view.managementVisible, progress: view.progress, snapshots: view.snapshots },
      null, 2,
    );
  };
}

document.addEventListener('DOMContentLoaded', boot);
