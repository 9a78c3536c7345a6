// Pure HTML-string renderers.  Every number below is taken verbatim from a
// service payload (formatting only, never computing); contract tests assert
// this by comparing rendered text against the recorded payloads.

import type { Candidate, Hit, JobStatus } from './types.js';

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function renderHits(hits: Hit[]): string {
  if (hits.length === 0) {
    return '<p class="empty">No videos matched. The store may be empty.</p>';
  }
  return hits
    .map((hit, index) => {
      const chips = hit.matched
        .map((sid) => `<button class="chip" data-synset="${escapeHtml(sid)}">${escapeHtml(sid)}</button>`)
        .join(' ');
      const frames = hit.frames
        .slice(0, 6)
        .map(
          (f) =>
            `<button class="thumb" data-video="${escapeHtml(hit.video_id)}" data-frame="${f.frame}">` +
            `w${f.window}/f${f.frame} @ ${f.t}s</button>`,
        )
        .join(' ');
      return (
        `<article class="hit" data-rank="${index + 1}">` +
        `<header><strong>${escapeHtml(hit.video_id)}</strong>` +
        ` <span class="score">score ${hit.score.toFixed(3)}</span>` +
        ` <span class="spec">specificity ${hit.specificity}</span></header>` +
        `<div class="chips">${chips}</div>` +
        `<div class="frames">${frames}</div>` +
        `</article>`
      );
    })
    .join('\n');
}

export function renderError(code: string, message: string): string {
  return `<p class="error"><strong>${escapeHtml(code)}</strong>: ${escapeHtml(message)}</p>`;
}

export function renderProgress(labeled: number, total: number): string {
  return `<span class="progress">${labeled} / ${total} labeled</span>`;
}

export function renderCandidate(candidate: Candidate | null, index: number, total: number): string {
  if (candidate === null) {
    return '<p class="empty">No more candidates. Submit your labels.</p>';
  }
  const [x0, y0, x1, y1] = [
    candidate.box[0] ?? 0,
    candidate.box[1] ?? 0,
    candidate.box[2] ?? 0,
    candidate.box[3] ?? 0,
  ];
  return (
    `<div class="candidate" data-index="${index}">` +
    `<p>candidate ${index + 1} of ${total} · ` +
    `${escapeHtml(candidate.video_id)} frame ${candidate.frame} @ ${candidate.t}s</p>` +
    `<p class="box">box [${x0}, ${y0}, ${x1}, ${y1}]</p>` +
    `<p class="keys">y = positive &middot; n = negative &middot; s = skip</p>` +
    `</div>`
  );
}

export function renderJob(job: JobStatus): string {
  const p = job.progress;
  return (
    `<div class="job" data-status="${job.status}">` +
    `<p>job ${escapeHtml(job.job_id)} · ${job.status}</p>` +
    `<p>videos ${p.videos_done} / ${p.videos_total}, ` +
    `accepted ${p.accepted}, rejected ${p.rejected}</p>` +
    (job.error ? `<p class="error">${escapeHtml(job.error)}</p>` : '') +
    `</div>`
  );
}

export function overlayStyle(box: number[]): string {
  const [x0, y0, x1, y1] = [box[0] ?? 0, box[1] ?? 0, box[2] ?? 0, box[3] ?? 0];
  return (
    `left:${(x0 * 100).toFixed(2)}%;top:${(y0 * 100).toFixed(2)}%;` +
    `width:${((x1 - x0) * 100).toFixed(2)}%;height:${((y1 - y0) * 100).toFixed(2)}%;`
  );
}
