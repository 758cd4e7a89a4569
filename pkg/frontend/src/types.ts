// API payload shapes, matching the backend's JSON responses.

export interface SessionSummary {
  bundle_version: number;
  m: number;
  risk_bound: number;
  sequence_risk: number;
  triggered: boolean;
  annotation_open: boolean;
  queue: { pending: number; annotated: number; skipped: number };
  frames_seen: number;
}

export interface AnnotationRequest {
  request_id: string;
  frame_id: string;
  frame_risk: number;
  sequence_index: number;
  status: string;
  created_at: number;
}

export interface RiskSeriesPoint {
  frame_id: string;
  flr: number;
}

export interface RiskSeries {
  series: RiskSeriesPoint[];
  phi_s: number;
  epsilon: number;
  window: number;
  threshold: number;
  triggered: boolean;
  bundle_version: number;
}

export interface FrameRisk {
  frame_id: string;
  frame_risk: number;
  height: number;
  width: number;
  risk_b64: string;
}

export interface FrameSegmentation {
  frame_id: string;
  frame_risk: number;
  m: number;
  r_sigma: number;
  patch_count: number;
  phi_count: number;
  label_png_b64: string;
}

export interface AnchorPayload {
  cx: number;
  cy: number;
  w: number;
  h: number;
  label: number;
}

export interface AnnotationPayload {
  frame_id: string;
  anchors: AnchorPayload[];
}

export interface UpdateJob {
  job_id: string;
  status: "running" | "done" | "failed";
  new_version: number | null;
  error: string | null;
}
