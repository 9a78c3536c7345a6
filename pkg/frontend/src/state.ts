// Session state for the query view and the create→label→train→re-query flow.
// All numbers shown in the UI are carried from service responses; this module
// only sequences calls and tracks labeling progress.

import type { ApiClient, LabelSubmission } from './api.js';
import { pollJob, type PollOptions } from './poll.js';
import type { Candidate, Hit, JobStatus, LabelValue, VirtualCreated } from './types.js';

export type FlowPhase =
  | 'idle'
  | 'labeling'
  | 'submitting'
  | 'training'
  | 'done'
  | 'failed';

export interface LabeledCandidate {
  candidate: Candidate;
  label: LabelValue;
}

export class AnnotateFlow {
  phase: FlowPhase = 'idle';
  virtual: VirtualCreated | null = null;
  candidates: Candidate[] = [];
  labels: LabeledCandidate[] = [];
  cursor = 0;
  jobId: string | null = null;
  job: JobStatus | null = null;
  error = '';

  constructor(private api: ApiClient) {}

  get total(): number {
    return this.candidates.length;
  }

  get labeled(): number {
    return this.labels.length;
  }

  get current(): Candidate | null {
    return this.cursor < this.candidates.length ? this.candidates[this.cursor]! : null;
  }

  get exhausted(): boolean {
    return this.cursor >= this.candidates.length;
  }

  async start(parent: string, name: string, limit = 50): Promise<void> {
    this.virtual = await this.api.createVirtual(parent, name);
    const response = await this.api.candidates(this.virtual.id, limit);
    this.candidates = response.candidates;
    this.labels = [];
    this.cursor = 0;
    this.phase = 'labeling';
    this.assertProgressInvariant();
  }

  label(value: LabelValue): void {
    if (this.phase !== 'labeling' || this.current === null) return;
    this.labels.push({ candidate: this.current, label: value });
    this.cursor += 1;
    this.assertProgressInvariant();
  }

  skip(): void {
    if (this.phase !== 'labeling' || this.current === null) return;
    this.cursor += 1;
  }

  private assertProgressInvariant(): void {
    if (this.labeled > this.total) {
      throw new Error(`labeling progress ${this.labeled} exceeds candidate count ${this.total}`);
    }
  }

  /** Client-side mirror of the service's single-class-input rule. */
  trainBlockedReason(): string | null {
    const positives = this.labels.filter((l) => l.label === 'positive').length;
    const negatives = this.labels.length - positives;
    if (this.labels.length < 2) return 'label at least two candidates first';
    if (positives === 0) return 'need at least one positive';
    if (negatives === 0) return 'need at least one negative';
    return null;
  }

  async submitAndTrain(poll: PollOptions = {}): Promise<JobStatus> {
    if (this.virtual === null) throw new Error('no virtual synset in progress');
    const blocked = this.trainBlockedReason();
    if (blocked !== null) throw new Error(blocked);
    this.phase = 'submitting';
    try {
      const submissions: LabelSubmission[] = this.labels.map((l) => ({
        video_id: l.candidate.video_id,
        frame_index: l.candidate.frame,
        box: l.candidate.box,
        label: l.label,
      }));
      await this.api.submitLabels(this.virtual.id, submissions);
      const started = await this.api.train(this.virtual.id);
      this.jobId = started.job_id;
      this.phase = 'training';
      this.job = await pollJob(this.api, started.job_id, {
        ...poll,
        onProgress: (job) => {
          this.job = job;
          poll.onProgress?.(job);
        },
      });
      this.phase = 'done';
      return this.job;
    } catch (err) {
      this.phase = 'failed';
      this.error = err instanceof Error ? err.message : String(err);
      throw err;
    }
  }
}

export class QueryView {
  hits: Hit[] = [];
  lastQuery = '';
  errorCode = '';
  errorMessage = '';

  constructor(private api: ApiClient) {}

  async run(q: string, topK = 10): Promise<void> {
    this.lastQuery = q;
    this.errorCode = '';
    this.errorMessage = '';
    try {
      const response = await this.api.query(q, topK);
      this.hits = response.hits;
    } catch (err) {
      this.hits = [];
      if (err && typeof err === 'object' && 'code' in err) {
        this.errorCode = String((err as { code: unknown }).code);
        this.errorMessage = err instanceof Error ? err.message : String(err);
      } else {
        throw err;
      }
    }
  }
}
