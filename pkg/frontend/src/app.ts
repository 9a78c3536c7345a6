// DOM wiring for the annotator: query panel, frame viewer with overlays,
// and the keyboard-driven create→label→train wizard.

import { ApiClient, ServiceError } from './api.js';
import { overlayStyle, renderCandidate, renderError, renderHits, renderJob, renderProgress } from './render.js';
import { AnnotateFlow, QueryView } from './state.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(baseUrl = ''): void {
  const api = new ApiClient(baseUrl);
  const queryView = new QueryView(api);
  let flow = new AnnotateFlow(api);

  const hitsPanel = el<HTMLDivElement>('hits');
  const statusPanel = el<HTMLDivElement>('status');
  const viewer = el<HTMLDivElement>('viewer');
  const wizard = el<HTMLDivElement>('wizard');
  const queryInput = el<HTMLInputElement>('query-input');
  const nameInput = el<HTMLInputElement>('virtual-name');
  let selectedParent = '';

  async function runQuery(): Promise<void> {
    await queryView.run(queryInput.value, 10);
    if (queryView.errorCode) {
      hitsPanel.innerHTML = renderError(queryView.errorCode, queryView.errorMessage);
      return;
    }
    hitsPanel.innerHTML = renderHits(queryView.hits);
    for (const chip of hitsPanel.querySelectorAll<HTMLButtonElement>('.chip')) {
      chip.addEventListener('click', () => {
        selectedParent = chip.dataset.synset ?? '';
        statusPanel.innerHTML = `<p>parent: <code>${selectedParent}</code></p>`;
      });
    }
    for (const thumb of hitsPanel.querySelectorAll<HTMLButtonElement>('.thumb')) {
      thumb.addEventListener('click', () =>
        showFrame(thumb.dataset.video ?? '', Number(thumb.dataset.frame)),
      );
    }
  }

  async function showFrame(videoId: string, frameIndex: number): Promise<void> {
    try {
      const frame = await api.frame(videoId, frameIndex);
      const overlays = frame.overlays
        .map(
          (o) =>
            `<div class="overlay overlay-${o.source}" style="${overlayStyle(o.box)}" ` +
            `title="${o.label} (${o.confidence})"></div>`,
        )
        .join('');
      viewer.innerHTML =
        `<div class="frame-wrap">` +
        `<img src="data:image/png;base64,${frame.image_png_base64}" ` +
        `alt="${videoId} frame ${frameIndex}">` +
        overlays +
        `</div>`;
    } catch (err) {
      if (err instanceof ServiceError) {
        viewer.innerHTML = renderError(err.code, err.message);
      } else {
        throw err;
      }
    }
  }

  function refreshWizard(): void {
    wizard.innerHTML =
      renderProgress(flow.labeled, flow.total) +
      renderCandidate(flow.current, flow.cursor, flow.total);
    const candidate = flow.current;
    if (candidate) {
      void showFrame(candidate.video_id, candidate.frame);
    }
  }

  async function startFlow(): Promise<void> {
    if (!selectedParent) {
      statusPanel.innerHTML = renderError('no-parent', 'click a matched synset chip first');
      return;
    }
    flow = new AnnotateFlow(api);
    try {
      await flow.start(selectedParent, nameInput.value, 50);
      refreshWizard();
    } catch (err) {
      if (err instanceof ServiceError) {
        statusPanel.innerHTML = renderError(err.code, err.message);
      } else {
        throw err;
      }
    }
  }

  async function train(): Promise<void> {
    const blocked = flow.trainBlockedReason();
    if (blocked !== null) {
      statusPanel.innerHTML = renderError('single-class-input', blocked);
      return;
    }
    try {
      const job = await flow.submitAndTrain({
        intervalMs: 1000,
        onProgress: (progress) => {
          statusPanel.innerHTML = renderJob(progress);
        },
      });
      statusPanel.innerHTML =
        renderJob(job) +
        `<p class="banner">concept trained · re-run your query to use it</p>`;
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      statusPanel.innerHTML =
        renderError('job-failed', message) +
        `<button id="retry-train">retry</button>`;
      document.getElementById('retry-train')?.addEventListener('click', () => void train());
    }
  }

  el<HTMLButtonElement>('query-button').addEventListener('click', () => void runQuery());
  queryInput.addEventListener('keydown', (event) => {
    if (event.key === 'Enter') void runQuery();
  });
  el<HTMLButtonElement>('create-button').addEventListener('click', () => void startFlow());
  el<HTMLButtonElement>('train-button').addEventListener('click', () => void train());

  document.addEventListener('keydown', (event) => {
    if (flow.phase !== 'labeling' || document.activeElement instanceof HTMLInputElement) return;
    if (event.key === 'y') flow.label('positive');
    else if (event.key === 'n') flow.label('negative');
    else if (event.key === 's') flow.skip();
    else return;
    refreshWizard();
  });
}

declare global {
  interface Window {
    videokgStart?: typeof startApp;
  }
}

if (typeof window !== 'undefined') {
  window.videokgStart = startApp;
  if (document.readyState !== 'loading') {
    startApp();
  } else {
    document.addEventListener('DOMContentLoaded', () => startApp());
  }
}
