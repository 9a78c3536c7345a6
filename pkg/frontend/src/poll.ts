// Poll a training job until it reaches a terminal state.

import type { ApiClient } from './api.js';
import type { JobStatus } from './types.js';

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onProgress?: (job: JobStatus) => void;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export async function pollJob(
  api: ApiClient,
  jobId: string,
  options: PollOptions = {},
): Promise<JobStatus> {
  const interval = options.intervalMs ?? 1000;
  const timeout = options.timeoutMs ?? 120000;
  const sleep = options.sleep ?? defaultSleep;
  const startedAt = Date.now();
  for (;;) {
    const job = await api.job(jobId);
    options.onProgress?.(job);
    if (job.status === 'done') return job;
    if (job.status === 'failed') {
      throw new Error(job.error || `job ${jobId} failed`);
    }
    if (Date.now() - startedAt > timeout) {
      throw new Error(`job ${jobId} timed out after ${timeout}ms`);
    }
    await sleep(interval);
  }
}
