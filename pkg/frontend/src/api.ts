/** Thin fetch wrapper over the annotation service API. */

import type { AnnotationBody, ApiError, TaskPayload } from "./types.js";

export type SubmitResult =
  | { ok: true }
  | { ok: false; status: number; error: ApiError };

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  /** Next task for this annotator, or null when none remain (204). */
  async nextTask(annotatorId: string): Promise<TaskPayload | null> {
    const response = await fetch(
      this.url(`/api/tasks/next?annotator=${encodeURIComponent(annotatorId)}`),
    );
    if (response.status === 204) {
      return null;
    }
    if (!response.ok) {
      throw new Error(`task fetch failed with status ${response.status}`);
    }
    return (await response.json()) as TaskPayload;
  }

  async submitAnnotation(body: AnnotationBody): Promise<SubmitResult> {
    const response = await fetch(this.url("/api/annotations"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (response.status === 201) {
      return { ok: true };
    }
    let error: ApiError = { error_code: "unknown", detail: `status ${response.status}` };
    try {
      error = (await response.json()) as ApiError;
    } catch {
      // keep the fallback error
    }
    return { ok: false, status: response.status, error };
  }

  guidelinesUrl(): string {
    return this.url("/api/guidelines");
  }
}
