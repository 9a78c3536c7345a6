// Payload shapes of the videokg service endpoints.

export interface FrameRef {
  window: number;
  frame: number;
  t: number;
}

export interface VideoEntry {
  video_id: string;
  graph_version: number;
  nodes: number;
  windows: number[];
}

export interface VideosResponse {
  videos: VideoEntry[];
}

export interface Hit {
  video_id: string;
  score: number;
  specificity: number;
  matched: string[];
  frames: FrameRef[];
}

export interface QueryResponse {
  hits: Hit[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
  context: Record<string, unknown>;
}

export interface VirtualCreated {
  id: string;
  parent: string;
  name: string;
}

export interface Candidate {
  video_id: string;
  window: number;
  frame: number;
  t: number;
  box: number[];
}

export interface CandidatesResponse {
  candidates: Candidate[];
}

export interface LabelsAccepted {
  accepted: number;
  total: number;
}

export interface TrainStarted {
  job_id: string;
}

export interface JobStatus {
  job_id: string;
  virtual_synset: string;
  status: 'queued' | 'running' | 'done' | 'failed';
  progress: {
    videos_done: number;
    videos_total: number;
    accepted: number;
    rejected: number;
  };
  new_versions: Record<string, number>;
  error: string;
}

export interface FrameResponse {
  video_id: string;
  frame_index: number;
  width: number;
  height: number;
  image_png_base64: string;
  overlays: Array<{ label: string; box: number[]; confidence: number; source: string }>;
}

export type LabelValue = 'positive' | 'negative';
