/**
 * The canvas: an SVG rendering of the dataflow graph.
 *
 * Node shape encodes kind (oval = load, rounded rectangle = compute,
 * double-border rectangle = plot). Stale and failed nodes are visually
 * distinct from evaluated ones, every failure has a one-click path to its
 * diagnostics, and a pencil affordance appears on hover to open the editor
 * for the active view.
 */

import { layoutGraph, NODE_H, NODE_W } from "./layout.js";
import type { GraphDoc, NodeDoc, View } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface CanvasCallbacks {
  onSelect?: (nodeId: string) => void;
  onEdit?: (nodeId: string, view: View) => void;
  onFix?: (nodeId: string) => void;
}

export interface CanvasOptions {
  view: View;
  selected?: string | null;
  failingChecks?: Set<string>;
  busy?: Set<string>;
  artifactUrl?: (sha: string) => string;
}

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number> = {},
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    el.setAttribute(key, String(value));
  }
  return el;
}

function glyphFor(node: NodeDoc): SVGElement[] {
  if (node.kind === "load") {
    return [
      svgEl("ellipse", {
        class: "glyph",
        cx: NODE_W / 2,
        cy: NODE_H / 2,
        rx: NODE_W / 2,
        ry: NODE_H / 2,
      }),
    ];
  }
  if (node.kind === "plot") {
    // Double border: an outer and an inset rectangle.
    return [
      svgEl("rect", { class: "glyph", width: NODE_W, height: NODE_H }),
      svgEl("rect", {
        class: "glyph-inner",
        x: 4,
        y: 4,
        width: NODE_W - 8,
        height: NODE_H - 8,
        fill: "none",
      }),
    ];
  }
  return [svgEl("rect", { class: "glyph", width: NODE_W, height: NODE_H, rx: 12, ry: 12 })];
}

function summaryThumb(node: NodeDoc, artifactUrl?: (sha: string) => string): SVGElement | null {
  if (node.figures.length && artifactUrl) {
    const image = svgEl("image", {
      class: "thumb",
      x: 8,
      y: NODE_H + 6,
      width: NODE_W - 16,
      height: 80,
    });
    image.setAttribute("href", artifactUrl(node.figures[0]));
    return image;
  }
  const summary = node.result?.summary;
  if (!summary) return null;
  let text = "";
  if (summary.kind === "dataframe") {
    const cols = (summary.columns as { name: string }[] | undefined)?.length ?? 0;
    text = `${summary.row_count} × ${cols} table`;
  } else if (summary.kind === "list") {
    text = `list of ${summary.length}`;
  } else if (summary.kind === "scalar") {
    text = String(summary.value);
  } else if (summary.kind === "tuple") {
    const elements = (summary.elements as { value?: unknown }[] | undefined) ?? [];
    text = `(${elements.map((e) => e.value).join(", ")})`;
  }
  if (!text) return null;
  const label = svgEl("text", { class: "thumb-text", x: NODE_W / 2, y: NODE_H + 20, "text-anchor": "middle" });
  label.textContent = text;
  return label;
}

export function renderGraph(
  container: HTMLElement,
  graph: GraphDoc,
  options: CanvasOptions,
  callbacks: CanvasCallbacks = {},
): SVGSVGElement {
  const positions = layoutGraph(graph);
  const width = Math.max(600, ...[...positions.values()].map((p) => p.x + NODE_W + 80));
  const height = Math.max(400, ...[...positions.values()].map((p) => p.y + NODE_H + 140));

  const svg = svgEl("svg", { class: "canvas", viewBox: `0 0 ${width} ${height}` });
  svg.dataset.graphVersion = String(graph.version);

  const defs = svgEl("defs");
  const marker = svgEl("marker", {
    id: "arrow",
    viewBox: "0 0 10 10",
    refX: 9,
    refY: 5,
    markerWidth: 7,
    markerHeight: 7,
    orient: "auto-start-reverse",
  });
  marker.appendChild(svgEl("path", { d: "M 0 0 L 10 5 L 0 10 z" }));
  defs.appendChild(marker);
  svg.appendChild(defs);

  for (const [src, dst] of graph.edges) {
    const a = positions.get(src);
    const b = positions.get(dst);
    if (!a || !b) continue;
    svg.appendChild(
      svgEl("line", {
        class: "edge",
        "data-src": src,
        "data-dst": dst,
        x1: a.x + NODE_W,
        y1: a.y + NODE_H / 2,
        x2: b.x,
        y2: b.y + NODE_H / 2,
        "marker-end": "url(#arrow)",
      }),
    );
  }

  for (const node of graph.nodes) {
    const pos = positions.get(node.id)!;
    const failing = node.phase === "FAILED" || options.failingChecks?.has(node.id);
    const group = svgEl("g", { class: `node kind-${node.kind} phase-${node.phase}`, transform: `translate(${pos.x},${pos.y})` });
    group.setAttribute("data-node-id", node.id);
    if (node.id === options.selected) group.classList.add("selected");
    if (failing) group.classList.add("failing");
    if (node.locked) group.classList.add("locked");
    if (options.busy?.has(node.id)) group.classList.add("busy");

    glyphFor(node).forEach((glyph) => group.appendChild(glyph));

    const title = svgEl("text", { class: "title", x: NODE_W / 2, y: NODE_H / 2 - 6, "text-anchor": "middle" });
    title.textContent = node.title;
    group.appendChild(title);
    const label = svgEl("text", { class: "label", x: NODE_W / 2, y: NODE_H / 2 + 12, "text-anchor": "middle" });
    label.textContent = node.label.length > 28 ? node.label.slice(0, 27) + "…" : node.label;
    group.appendChild(label);

    if (node.locked) {
      const lock = svgEl("text", { class: "lock-badge", x: 10, y: 16 });
      lock.textContent = "\u{1F512}";
      group.appendChild(lock);
    }
    if (options.busy?.has(node.id)) {
      const spinner = svgEl("text", { class: "busy-badge", x: NODE_W - 48, y: 16 });
      spinner.textContent = "⏳";
      group.appendChild(spinner);
    }

    const thumb = summaryThumb(node, options.artifactUrl);
    if (thumb) group.appendChild(thumb);

    if (failing) {
      const badge = svgEl("g", { class: "error-badge" });
      const circle = svgEl("circle", { cx: NODE_W - 10, cy: 10, r: 9 });
      const mark = svgEl("text", { x: NODE_W - 10, y: 14, "text-anchor": "middle" });
      mark.textContent = "!";
      badge.appendChild(circle);
      badge.appendChild(mark);
      badge.addEventListener("click", (event) => {
        event.stopPropagation();
        callbacks.onSelect?.(node.id); // one-click path to diagnostics
      });
      group.appendChild(badge);

      const fix = svgEl("g", { class: "fix-button" });
      const pill = svgEl("rect", { x: NODE_W - 44, y: NODE_H - 20, width: 38, height: 16, rx: 8 });
      const text = svgEl("text", { x: NODE_W - 25, y: NODE_H - 8, "text-anchor": "middle" });
      text.textContent = "Fix";
      fix.appendChild(pill);
      fix.appendChild(text);
      fix.addEventListener("click", (event) => {
        event.stopPropagation();
        callbacks.onFix?.(node.id);
      });
      group.appendChild(fix);
    }

    const pencil = svgEl("g", { class: "pencil" });
    const hit = svgEl("circle", { cx: NODE_W - 12, cy: NODE_H - 36, r: 10 });
    const icon = svgEl("text", { x: NODE_W - 12, y: NODE_H - 32, "text-anchor": "middle" });
    icon.textContent = "✎";
    pencil.appendChild(hit);
    pencil.appendChild(icon);
    pencil.addEventListener("click", (event) => {
      event.stopPropagation();
      callbacks.onEdit?.(node.id, options.view);
    });
    group.appendChild(pencil);

    group.addEventListener("click", () => callbacks.onSelect?.(node.id));
    svg.appendChild(group);
  }

  enablePanning(svg, width, height);
  container.replaceChildren(svg);
  return svg;
}

function enablePanning(svg: SVGSVGElement, width: number, height: number): void {
  let panning = false;
  let start = { x: 0, y: 0 };
  let origin = { x: 0, y: 0 };
  svg.addEventListener("pointerdown", (event) => {
    if ((event.target as Element).closest(".node")) return;
    panning = true;
    start = { x: event.clientX, y: event.clientY };
    const [vx, vy] = (svg.getAttribute("viewBox") ?? "0 0 0 0").split(" ").map(Number);
    origin = { x: vx, y: vy };
  });
  svg.addEventListener("pointermove", (event) => {
    if (!panning) return;
    const dx = event.clientX - start.x;
    const dy = event.clientY - start.y;
    svg.setAttribute("viewBox", `${origin.x - dx} ${origin.y - dy} ${width} ${height}`);
  });
  svg.addEventListener("pointerup", () => {
    panning = false;
  });
}
