// Thin typed client over fetch.  Non-2xx responses with a structured body
// become ServiceError so the UI can render {code, message} inline.

import {
  parseApiError,
  parseCandidates,
  parseFrameResponse,
  parseJobStatus,
  parseLabelsAccepted,
  parseQueryResponse,
  parseTrainStarted,
  parseVideos,
  parseVirtualCreated,
} from './contracts.js';
import type {
  CandidatesResponse,
  FrameResponse,
  JobStatus,
  LabelsAccepted,
  LabelValue,
  QueryResponse,
  TrainStarted,
  VideosResponse,
  VirtualCreated,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  code: string;
  context: Record<string, unknown>;

  constructor(code: string, message: string, context: Record<string, unknown> = {}) {
    super(message);
    this.code = code;
    this.context = context;
  }
}

export interface LabelSubmission {
  video_id: string;
  frame_index: number;
  box: number[];
  label: LabelValue;
}

export class ApiClient {
  constructor(
    private baseUrl: string = '',
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await response.json();
    if (!response.ok) {
      const err = parseApiError(body);
      throw new ServiceError(err.code, err.message, err.context);
    }
    return body;
  }

  private post(path: string, payload: unknown): Promise<unknown> {
    return this.request(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  async videos(): Promise<VideosResponse> {
    return parseVideos(await this.request('/videos'));
  }

  async query(q: string, topK = 10): Promise<QueryResponse> {
    return parseQueryResponse(await this.post('/query', { q, top_k: topK }));
  }

  async frame(videoId: string, frameIndex: number): Promise<FrameResponse> {
    return parseFrameResponse(await this.request(`/frames/${videoId}/${frameIndex}`));
  }

  async createVirtual(parent: string, name: string): Promise<VirtualCreated> {
    return parseVirtualCreated(await this.post('/virtual-synsets', { parent, name }));
  }

  async candidates(virtualId: string, limit = 50): Promise<CandidatesResponse> {
    return parseCandidates(
      await this.request(`/virtual-synsets/${virtualId}/candidates?limit=${limit}`),
    );
  }

  async submitLabels(virtualId: string, labels: LabelSubmission[]): Promise<LabelsAccepted> {
    return parseLabelsAccepted(
      await this.post(`/virtual-synsets/${virtualId}/labels`, { labels }),
    );
  }

  async train(virtualId: string): Promise<TrainStarted> {
    return parseTrainStarted(await this.post(`/virtual-synsets/${virtualId}/train`, {}));
  }

  async job(jobId: string): Promise<JobStatus> {
    return parseJobStatus(await this.request(`/jobs/${jobId}`));
  }
}
