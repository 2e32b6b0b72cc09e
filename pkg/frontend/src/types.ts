/** Shared shapes for the workspace HTTP API documents. */

export type NodeKind = "load" | "compute" | "plot";

export type Phase =
  | "DIRTY"
  | "REQUIREMENTS_READY"
  | "CODE_READY"
  | "EVALUATED"
  | "FAILED";

export interface ValueSummary {
  kind: string;
  [key: string]: unknown;
}

export interface NodeDoc {
  id: string;
  kind: NodeKind;
  title: string;
  label: string;
  requirements: string[];
  output_type: unknown | null;
  code: string | null;
  phase: Phase;
  failure: { stage: string; message: string } | null;
  locked: boolean;
  result: { sha256: string; summary: ValueSummary | null } | null;
  figures: string[];
  precondition_issues: string[];
  repair_attempts: number;
}

export interface GraphDoc {
  title: string;
  version: number;
  nodes: NodeDoc[];
  edges: [string, string][];
}

export interface CheckDoc {
  id: string;
  node: string;
  text: string;
  kind: "quantitative" | "qualitative";
  last_result: { status: "pass" | "fail" | "error"; message: string; evidence: Record<string, unknown> } | null;
}

export interface TestDoc {
  id: string;
  node: string;
  text: string;
  last_result: CheckDoc["last_result"];
}

export interface ProjectDoc {
  id: string;
  schema_version: number;
  graph: GraphDoc;
  checks: Record<string, CheckDoc[]>;
  tests: Record<string, TestDoc[]>;
  slugs: Record<string, string>;
}

export interface DraftDoc {
  node: string;
  title: string;
  label: string;
  requirements: string[];
  code: string | null;
  dirty: string[];
  status: "consistent" | "unknown" | "warnings";
  warnings: string[];
}

export interface JobDoc {
  status: "running" | "done" | "error";
  result: unknown;
  error: string | null;
}

export type View = "edit" | "checks" | "tests";
export type Abstraction = "label" | "requirements" | "code";

export interface ChatEvent {
  type: string;
  data: Record<string, unknown>;
}
