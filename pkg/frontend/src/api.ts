// Thin fetch client; the console never computes risks or labels itself.

import type {
  AnnotationPayload,
  AnnotationRequest,
  FrameRisk,
  FrameSegmentation,
  RiskSeries,
  SessionSummary,
  UpdateJob,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // keep statusText
    }
    throw new ApiError(resp.status, detail);
  }
  return resp.json() as Promise<T>;
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private get(path: string) {
    return this.fetchFn(`${this.base}${path}`);
  }

  private post(path: string, body?: unknown) {
    return this.fetchFn(`${this.base}${path}`, {
      method: "POST",
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  }

  session(): Promise<SessionSummary> {
    return this.get("/api/session").then((r) => asJson<SessionSummary>(r));
  }

  queue(): Promise<AnnotationRequest[]> {
    return this.get("/api/queue").then((r) => asJson<AnnotationRequest[]>(r));
  }

  riskSeries(window?: number): Promise<RiskSeries> {
    const q = window ? `?window=${window}` : "";
    return this.get(`/api/risk-series${q}`).then((r) => asJson<RiskSeries>(r));
  }

  frameImageUrl(frameId: string): string {
    return `${this.base}/api/frames/${frameId}/image`;
  }

  frameRisk(frameId: string): Promise<FrameRisk> {
    return this.get(`/api/frames/${frameId}/risk`).then((r) => asJson<FrameRisk>(r));
  }

  frameSegmentation(frameId: string): Promise<FrameSegmentation> {
    return this.get(`/api/frames/${frameId}/segmentation`).then((r) =>
      asJson<FrameSegmentation>(r),
    );
  }

  submitAnnotations(payload: AnnotationPayload) {
    return this.post("/api/annotations", payload).then((r) =>
      asJson<{ request_id: string; frame_id: string; status: string }>(r),
    );
  }

  skip(requestId: string) {
    return this.post(`/api/requests/${requestId}/skip`).then((r) =>
      asJson<{ request_id: string; status: string }>(r),
    );
  }

  openBatch(): Promise<AnnotationRequest[]> {
    return this.post("/api/batch/open").then((r) => asJson<AnnotationRequest[]>(r));
  }

  startUpdate(): Promise<{ job_id: string }> {
    return this.post("/api/model/update").then((r) =>
      asJson<{ job_id: string }>(r),
    );
  }

  updateJob(jobId: string): Promise<UpdateJob> {
    return this.get(`/api/model/update/${jobId}`).then((r) => asJson<UpdateJob>(r));
  }
}
