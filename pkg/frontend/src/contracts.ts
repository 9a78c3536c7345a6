// Runtime validators for service payloads.  The UI displays only numbers that
// arrive through these guards; contract tests run them over recorded
// responses so drift in the service schema fails loudly here.

import type {
  ApiErrorBody,
  Candidate,
  CandidatesResponse,
  FrameRef,
  FrameResponse,
  Hit,
  JobStatus,
  LabelsAccepted,
  QueryResponse,
  TrainStarted,
  VideosResponse,
  VirtualCreated,
} from './types.js';

export class ContractError extends Error {
  constructor(where: string, detail: string) {
    super(`${where}: ${detail}`);
  }
}

function isObject(v: unknown): v is Record<string, unknown> {
  return typeof v === 'object' && v !== null && !Array.isArray(v);
}

function need(cond: boolean, where: string, detail: string): asserts cond {
  if (!cond) throw new ContractError(where, detail);
}

function needNumber(v: unknown, where: string): number {
  need(typeof v === 'number' && Number.isFinite(v), where, `expected number, got ${typeof v}`);
  return v;
}

function needString(v: unknown, where: string): string {
  need(typeof v === 'string', where, `expected string, got ${typeof v}`);
  return v;
}

function needArray(v: unknown, where: string): unknown[] {
  need(Array.isArray(v), where, 'expected array');
  return v;
}

function parseBox(v: unknown, where: string): number[] {
  const arr = needArray(v, where);
  need(arr.length === 4, where, `box needs 4 coordinates, got ${arr.length}`);
  return arr.map((c, i) => needNumber(c, `${where}[${i}]`));
}

function parseFrameRef(v: unknown, where: string): FrameRef {
  need(isObject(v), where, 'expected frame ref object');
  return {
    window: needNumber(v.window, `${where}.window`),
    frame: needNumber(v.frame, `${where}.frame`),
    t: needNumber(v.t, `${where}.t`),
  };
}

export function parseVideos(v: unknown): VideosResponse {
  need(isObject(v), 'videos', 'expected object');
  const videos = needArray(v.videos, 'videos.videos').map((entry, i) => {
    const where = `videos.videos[${i}]`;
    need(isObject(entry), where, 'expected object');
    return {
      video_id: needString(entry.video_id, `${where}.video_id`),
      graph_version: needNumber(entry.graph_version, `${where}.graph_version`),
      nodes: needNumber(entry.nodes, `${where}.nodes`),
      windows: needArray(entry.windows, `${where}.windows`).map((w, j) =>
        needNumber(w, `${where}.windows[${j}]`),
      ),
    };
  });
  return { videos };
}

function parseHit(v: unknown, where: string): Hit {
  need(isObject(v), where, 'expected hit object');
  const score = needNumber(v.score, `${where}.score`);
  need(score >= 0 && score <= 1, `${where}.score`, `score ${score} outside [0, 1]`);
  return {
    video_id: needString(v.video_id, `${where}.video_id`),
    score,
    specificity: needNumber(v.specificity, `${where}.specificity`),
    matched: needArray(v.matched, `${where}.matched`).map((m, i) =>
      needString(m, `${where}.matched[${i}]`),
    ),
    frames: needArray(v.frames, `${where}.frames`).map((f, i) =>
      parseFrameRef(f, `${where}.frames[${i}]`),
    ),
  };
}

export function parseQueryResponse(v: unknown): QueryResponse {
  need(isObject(v), 'query', 'expected object');
  return { hits: needArray(v.hits, 'query.hits').map((h, i) => parseHit(h, `query.hits[${i}]`)) };
}

export function parseApiError(v: unknown): ApiErrorBody {
  need(isObject(v), 'error', 'expected object');
  need(isObject(v.context), 'error.context', 'expected object');
  return {
    code: needString(v.code, 'error.code'),
    message: needString(v.message, 'error.message'),
    context: v.context as Record<string, unknown>,
  };
}

export function parseVirtualCreated(v: unknown): VirtualCreated {
  need(isObject(v), 'virtual', 'expected object');
  return {
    id: needString(v.id, 'virtual.id'),
    parent: needString(v.parent, 'virtual.parent'),
    name: needString(v.name, 'virtual.name'),
  };
}

function parseCandidate(v: unknown, where: string): Candidate {
  need(isObject(v), where, 'expected candidate object');
  return {
    video_id: needString(v.video_id, `${where}.video_id`),
    window: needNumber(v.window, `${where}.window`),
    frame: needNumber(v.frame, `${where}.frame`),
    t: needNumber(v.t, `${where}.t`),
    box: parseBox(v.box, `${where}.box`),
  };
}

export function parseCandidates(v: unknown): CandidatesResponse {
  need(isObject(v), 'candidates', 'expected object');
  return {
    candidates: needArray(v.candidates, 'candidates.candidates').map((c, i) =>
      parseCandidate(c, `candidates.candidates[${i}]`),
    ),
  };
}

export function parseLabelsAccepted(v: unknown): LabelsAccepted {
  need(isObject(v), 'labels', 'expected object');
  return {
    accepted: needNumber(v.accepted, 'labels.accepted'),
    total: needNumber(v.total, 'labels.total'),
  };
}

export function parseTrainStarted(v: unknown): TrainStarted {
  need(isObject(v), 'train', 'expected object');
  return { job_id: needString(v.job_id, 'train.job_id') };
}

export function parseJobStatus(v: unknown): JobStatus {
  need(isObject(v), 'job', 'expected object');
  const status = needString(v.status, 'job.status');
  need(
    status === 'queued' || status === 'running' || status === 'done' || status === 'failed',
    'job.status',
    `unknown status ${status}`,
  );
  need(isObject(v.progress), 'job.progress', 'expected object');
  const p = v.progress;
  need(isObject(v.new_versions), 'job.new_versions', 'expected object');
  const versions: Record<string, number> = {};
  for (const [key, value] of Object.entries(v.new_versions)) {
    versions[key] = needNumber(value, `job.new_versions.${key}`);
  }
  return {
    job_id: needString(v.job_id, 'job.job_id'),
    virtual_synset: needString(v.virtual_synset, 'job.virtual_synset'),
    status: status as JobStatus['status'],
    progress: {
      videos_done: needNumber(p.videos_done, 'job.progress.videos_done'),
      videos_total: needNumber(p.videos_total, 'job.progress.videos_total'),
      accepted: needNumber(p.accepted, 'job.progress.accepted'),
      rejected: needNumber(p.rejected, 'job.progress.rejected'),
    },
    new_versions: versions,
    error: needString(v.error, 'job.error'),
  };
}

export function parseFrameResponse(v: unknown): FrameResponse {
  need(isObject(v), 'frame', 'expected object');
  return {
    video_id: needString(v.video_id, 'frame.video_id'),
    frame_index: needNumber(v.frame_index, 'frame.frame_index'),
    width: needNumber(v.width, 'frame.width'),
    height: needNumber(v.height, 'frame.height'),
    image_png_base64: needString(v.image_png_base64, 'frame.image_png_base64'),
    overlays: needArray(v.overlays, 'frame.overlays').map((o, i) => {
      const where = `frame.overlays[${i}]`;
      need(isObject(o), where, 'expected overlay object');
      return {
        label: needString(o.label, `${where}.label`),
        box: parseBox(o.box, `${where}.box`),
        confidence: needNumber(o.confidence, `${where}.confidence`),
        source: needString(o.source, `${where}.source`),
      };
    }),
  };
}
