import type { ProgressDoc, ReviewPayload, TaskDoc } from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export type SubmitResult = { ok: true } | { ok: false; status: number; message: string };

export class ApiClient {
  constructor(private readonly fetcher: FetchLike, private readonly base = "") {}

  async nextTask(reviewerId: string): Promise<TaskDoc | "done"> {
    const resp = await this.fetcher(
      `${this.base}/api/task/next?reviewer=${encodeURIComponent(reviewerId)}`
    );
    if (!resp.ok) throw new Error(`task fetch failed: HTTP ${resp.status}`);
    const doc = (await resp.json()) as TaskDoc;
    return doc.done ? "done" : doc;
  }

  async submitReview(payload: ReviewPayload): Promise<SubmitResult> {
    const resp = await this.fetcher(`${this.base}/api/review`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (resp.status === 204) return { ok: true };
    let message = `HTTP ${resp.status}`;
    try {
      const body = await resp.json();
      if (body && body.detail) message = `${message}: ${JSON.stringify(body.detail)}`;
    } catch {
      // keep the bare status line
    }
    return { ok: false, status: resp.status, message };
  }

  async progress(): Promise<ProgressDoc> {
    const resp = await this.fetcher(`${this.base}/api/progress`);
    if (!resp.ok) throw new Error(`progress fetch failed: HTTP ${resp.status}`);
    return (await resp.json()) as ProgressDoc;
  }
}
