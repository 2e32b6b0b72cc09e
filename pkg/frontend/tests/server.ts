/** Spawns the workspace server with the scripted LLM backend for tests. */

import { ChildProcess, spawn } from "node:child_process";
import { copyFileSync, mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";

// Tests run from frontend/; the shipped fixtures sit beside it.
const FIXTURES = resolve(process.cwd(), "..", "fixtures");

export interface TestServer {
  base: string;
  workdir: string;
  stop: () => void;
}

export async function startServer(transcript = "ui_session.jsonl"): Promise<TestServer> {
  const workdir = mkdtempSync(join(tmpdir(), "flowstudio-ui-"));
  for (const name of ["beaks.flowco.json", "beaks.csv", transcript]) {
    copyFileSync(join(FIXTURES, name), join(workdir, name));
  }
  const port = 20000 + Math.floor(Math.random() * 20000);
  const base = `http://127.0.0.1:${port}`;
  const proc: ChildProcess = spawn(
    "python3",
    [
      "-m", "flowstudio.cli", "serve",
      "--workdir", workdir,
      "--llm", `scripted:${join(workdir, transcript)}`,
      "--port", String(port),
      "--host", "127.0.0.1",
      "--pool-size", "2",
    ],
    { stdio: ["ignore", "inherit", "inherit"] },
  );

  const deadline = Date.now() + 60_000;
  for (;;) {
    try {
      const response = await fetch(`${base}/api/projects`);
      if (response.ok) break;
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) {
      proc.kill("SIGKILL");
      throw new Error("server did not come up within 60s");
    }
    await new Promise((resolveSleep) => setTimeout(resolveSleep, 250));
  }
  return { base, workdir, stop: () => proc.kill("SIGKILL") };
}
