/**
 * Typed client for the workspace HTTP API.
 *
 * The UI never mutates state except through these calls; mutations carry the
 * expected graph version so stale writes surface as 409 conflicts and the
 * canvas can reconcile from version events.
 */

import type { ChatEvent, DraftDoc, JobDoc, ProjectDoc } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class Api {
  constructor(public base: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.base + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const doc = (await response.json()) as { detail?: string };
        detail = doc.detail ?? detail;
      } catch {
        /* no JSON body */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  importProject(path: string) {
    return this.request<{ project_id: string; version: number; warnings: string[] }>(
      "POST", "/api/projects/import", { path },
    );
  }

  createProject(title: string) {
    return this.request<{ project_id: string; version: number }>("POST", "/api/projects", { title });
  }

  getProject(pid: string) {
    return this.request<ProjectDoc>("GET", `/api/projects/${pid}`);
  }

  addNode(pid: string, kind: string, title: string, label: string, version: number) {
    return this.request<{ node_id: string; version: number }>(
      "POST", `/api/projects/${pid}/nodes`, { kind, title, label, version },
    );
  }

  addEdge(pid: string, src: string, dst: string, version: number) {
    return this.request<{ version: number }>("POST", `/api/projects/${pid}/edges`, { src, dst, version });
  }

  setLock(pid: string, nid: string, locked: boolean) {
    return this.request<{ version: number }>("POST", `/api/projects/${pid}/nodes/${nid}/lock`, { locked });
  }

  run(pid: string, targets?: string[], canvasImage?: string) {
    return this.request<{ job_id: string }>("POST", `/api/projects/${pid}/run`, {
      targets,
      canvas_image: canvasImage,
    });
  }

  runChecks(pid: string, nodes?: string[]) {
    return this.request<{ job_id: string }>("POST", `/api/projects/${pid}/checks:run`, { nodes });
  }

  runTests(pid: string, nodes?: string[]) {
    return this.request<{ job_id: string }>("POST", `/api/projects/${pid}/tests:run`, { nodes });
  }

  fixNode(pid: string, nid: string) {
    return this.request<{ job_id: string }>("POST", `/api/projects/${pid}/nodes/${nid}/fix`);
  }

  job(jobId: string) {
    return this.request<JobDoc>("GET", `/api/jobs/${jobId}`);
  }

  /** Poll a job until it settles. */
  async waitJob(jobId: string, timeoutMs = 120_000, intervalMs = 100): Promise<JobDoc> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const doc = await this.job(jobId);
      if (doc.status !== "running") return doc;
      if (Date.now() > deadline) throw new Error(`job ${jobId} still running after ${timeoutMs}ms`);
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }

  addCheck(pid: string, nid: string, text: string, kind?: string) {
    return this.request<unknown>("POST", `/api/projects/${pid}/checks/${nid}`, { text, kind });
  }

  addTest(pid: string, nid: string, text: string) {
    return this.request<unknown>("POST", `/api/projects/${pid}/tests/${nid}`, { text });
  }

  suggestChecks(pid: string, nid: string) {
    return this.request<{ suggestions: string[] }>("GET", `/api/projects/${pid}/checks/${nid}/suggest`);
  }

  suggestTests(pid: string, nid: string) {
    return this.request<{ suggestions: string[] }>("GET", `/api/projects/${pid}/tests/${nid}/suggest`);
  }

  getDraft(pid: string, nid: string, reset = false) {
    return this.request<DraftDoc>("GET", `/api/projects/${pid}/nodes/${nid}/draft?reset=${reset}`);
  }

  editDraft(pid: string, nid: string, layer: string, content: unknown) {
    return this.request<DraftDoc>("POST", `/api/projects/${pid}/nodes/${nid}/draft/edit`, { layer, content });
  }

  propagateDraft(pid: string, nid: string, fromLayer: string) {
    return this.request<DraftDoc>("POST", `/api/projects/${pid}/nodes/${nid}/draft/propagate`, {
      from_layer: fromLayer,
    });
  }

  checkDraft(pid: string, nid: string) {
    return this.request<{ status: string; warnings: string[] }>(
      "POST", `/api/projects/${pid}/nodes/${nid}/draft/check`,
    );
  }

  regenerateDraft(pid: string, nid: string) {
    return this.request<DraftDoc>("POST", `/api/projects/${pid}/nodes/${nid}/draft/regenerate`);
  }

  saveDraft(pid: string, nid: string) {
    return this.request<{ invalidated: string[]; version: number }>(
      "POST", `/api/projects/${pid}/nodes/${nid}/draft/save`,
    );
  }

  uploadArtifact(bytes: Blob | ArrayBuffer) {
    return fetch(this.base + "/api/artifacts", { method: "POST", body: bytes }).then(
      (response) => response.json() as Promise<{ sha256: string }>,
    );
  }

  artifactUrl(sha: string): string {
    return `${this.base}/api/artifacts/${sha}`;
  }

  /**
   * POST a chat message and deliver parsed server-sent events to the sink.
   * Works in both browsers and node (fetch body streaming).
   */
  async chat(
    pid: string,
    message: string,
    onEvent: (event: ChatEvent) => void,
    scope = "graph",
    sessionId?: string,
  ): Promise<void> {
    const response = await fetch(`${this.base}/api/projects/${pid}/chat`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ message, scope, session_id: sessionId }),
    });
    if (!response.ok || !response.body) {
      throw new ApiError(response.status, "chat stream failed");
    }
    await readSse(response.body, onEvent);
  }

  /** Subscribe to project events (bounded variants available for tests). */
  async events(
    pid: string,
    onEvent: (event: ChatEvent) => void,
    options: { maxEvents?: number; timeoutS?: number } = {},
  ): Promise<void> {
    const params = new URLSearchParams();
    if (options.maxEvents !== undefined) params.set("max_events", String(options.maxEvents));
    if (options.timeoutS !== undefined) params.set("timeout_s", String(options.timeoutS));
    const query = params.toString() ? `?${params}` : "";
    const response = await fetch(`${this.base}/api/projects/${pid}/events${query}`);
    if (!response.ok || !response.body) {
      throw new ApiError(response.status, "event stream failed");
    }
    await readSse(response.body, onEvent);
  }
}

/** Minimal text/event-stream parser over a fetch body. */
export async function readSse(
  body: ReadableStream<Uint8Array>,
  onEvent: (event: ChatEvent) => void,
): Promise<void> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    let split;
    while ((split = buffer.indexOf("\n\n")) >= 0) {
      const block = buffer.slice(0, split);
      buffer = buffer.slice(split + 2);
      let type = "message";
      const dataLines: string[] = [];
      for (const line of block.split("\n")) {
        if (line.startsWith("event:")) type = line.slice(6).trim();
        else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
      }
      if (!dataLines.length) continue;
      let data: Record<string, unknown> = {};
      try {
        data = JSON.parse(dataLines.join("\n"));
      } catch {
        data = { raw: dataLines.join("\n") };
      }
      onEvent({ type, data });
    }
  }
}
