/**
 * The chat panel: streams assistant turns over server-sent events.
 *
 * Text deltas render incrementally; tool activity appears as collapsible
 * steps ("ran some code", arguments, results, any figures drawn); graph
 * edits made by the agent arrive as version events so the canvas can
 * refresh.
 */

import { Api } from "./api.js";
import type { ChatEvent } from "./types.js";

export class ChatPanel {
  root: HTMLElement;
  sessionId: string | undefined;
  busy = false;

  constructor(
    private api: Api,
    private projectId: string,
    private onGraphChanged: () => void,
  ) {
    this.root = document.createElement("div");
    this.root.className = "ama-panel";
    this.root.innerHTML = `
      <div class="ama-transcript"></div>
      <form class="ama-form">
        <input class="ama-input" placeholder="Ask Me Anything!">
        <button type="submit" class="ama-send">Send</button>
      </form>
      <div class="ama-busy hidden">thinking…</div>
    `;
    this.root.querySelector(".ama-form")!.addEventListener("submit", (event) => {
      event.preventDefault();
      const input = this.root.querySelector<HTMLInputElement>(".ama-input")!;
      if (input.value.trim() && !this.busy) {
        void this.send(input.value.trim());
        input.value = "";
      }
    });
  }

  private transcript(): HTMLElement {
    return this.root.querySelector(".ama-transcript")!;
  }

  private setBusy(flag: boolean) {
    this.busy = flag;
    this.root.querySelector(".ama-busy")!.classList.toggle("hidden", !flag);
  }

  async send(message: string): Promise<string> {
    this.setBusy(true);
    const transcript = this.transcript();

    const userLine = document.createElement("div");
    userLine.className = "turn user";
    userLine.textContent = message;
    transcript.appendChild(userLine);

    const answer = document.createElement("div");
    answer.className = "turn assistant";
    transcript.appendChild(answer);

    let finalText = "";
    const pendingTools = new Map<string, HTMLElement>();

    const handle = (event: ChatEvent) => {
      if (event.type === "session") {
        this.sessionId = String(event.data.session_id);
      } else if (event.type === "text_delta") {
        finalText += String(event.data.text ?? "");
        answer.textContent = finalText;
      } else if (event.type === "tool_started") {
        const step = document.createElement("details");
        step.className = `tool-step tool-${event.data.name}`;
        const summary = document.createElement("summary");
        summary.textContent =
          event.data.name === "run_snippet" ? "Okay, I ran some code" : `tool: ${event.data.name}`;
        step.appendChild(summary);
        const args = document.createElement("pre");
        args.className = "tool-args";
        args.textContent = JSON.stringify(event.data.arguments, null, 2);
        step.appendChild(args);
        transcript.insertBefore(step, answer);
        pendingTools.set(String(event.data.id), step);
      } else if (event.type === "tool_finished") {
        const step = pendingTools.get(String(event.data.id));
        if (step) {
          const result = document.createElement("pre");
          result.className = "tool-result";
          result.textContent = String(event.data.result ?? "");
          step.appendChild(result);
          this.attachFigures(step, String(event.data.result ?? ""));
        }
      } else if (event.type === "graph_version_changed") {
        this.onGraphChanged();
      } else if (event.type === "diagnostic" || event.type === "error") {
        const note = document.createElement("div");
        note.className = "turn diagnostic";
        note.textContent = String(event.data.message ?? "");
        transcript.appendChild(note);
      }
    };

    try {
      await this.api.chat(this.projectId, message, handle, "graph", this.sessionId);
    } finally {
      this.setBusy(false);
    }
    return finalText;
  }

  private attachFigures(step: HTMLElement, resultJson: string): void {
    try {
      const doc = JSON.parse(resultJson) as { figures?: string[] };
      for (const sha of doc.figures ?? []) {
        const img = document.createElement("img");
        img.className = "tool-figure";
        img.src = this.api.artifactUrl(sha);
        step.appendChild(img);
      }
    } catch {
      /* not JSON: nothing to attach */
    }
  }
}
