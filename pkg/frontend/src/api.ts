/** Thin typed client over the annotation service HTTP API. */

import type { Answers, NextTaskResponse, Progress, Protocol, Task } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") {
      return body.error;
    }
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return response.statusText || `request failed with status ${response.status}`;
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url, { headers: { Accept: "application/json" } });
  if (!response.ok) {
    throw new ApiError(response.status, await errorMessage(response));
  }
  return (await response.json()) as T;
}

export interface Client {
  fetchProtocol(): Promise<Protocol>;
  nextTask(annotator: string): Promise<NextTaskResponse | null>;
  getTask(taskId: string): Promise<Task>;
  submitLabel(annotator: string, taskId: string, answers: Answers): Promise<Progress>;
  fetchReport(): Promise<Record<string, unknown>>;
}

export function createClient(baseUrl = ""): Client {
  const root = baseUrl.replace(/\/+$/, "");
  return {
    fetchProtocol: () => getJson<Protocol>(`${root}/api/protocol`),

    async nextTask(annotator: string) {
      const url = `${root}/api/tasks/next?annotator=${encodeURIComponent(annotator)}`;
      const response = await fetch(url, { headers: { Accept: "application/json" } });
      if (response.status === 204) {
        return null; // queue exhausted for this annotator
      }
      if (!response.ok) {
        throw new ApiError(response.status, await errorMessage(response));
      }
      return (await response.json()) as NextTaskResponse;
    },

    getTask: (taskId: string) =>
      getJson<Task>(`${root}/api/tasks/${encodeURIComponent(taskId)}`),

    async submitLabel(annotator: string, taskId: string, answers: Answers) {
      const response = await fetch(`${root}/api/labels`, {
        method: "POST",
        headers: { "Content-Type": "application/json", Accept: "application/json" },
        body: JSON.stringify({ annotator, task_id: taskId, answers }),
      });
      if (!response.ok) {
        throw new ApiError(response.status, await errorMessage(response));
      }
      const body = (await response.json()) as { progress: Progress };
      return body.progress;
    },

    fetchReport: () => getJson<Record<string, unknown>>(`${root}/api/report`),
  };
}
