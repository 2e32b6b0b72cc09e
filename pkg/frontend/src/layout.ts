/** Layered DAG layout: longest-path ranks, creation order within a rank. */

import type { GraphDoc } from "./types.js";

export interface NodePosition {
  x: number;
  y: number;
}

export const NODE_W = 168;
export const NODE_H = 64;
const COL_GAP = 230;
const ROW_GAP = 120;

export function layoutGraph(graph: GraphDoc): Map<string, NodePosition> {
  const order = new Map(graph.nodes.map((node, index) => [node.id, index]));
  const parents = new Map<string, string[]>(graph.nodes.map((node) => [node.id, []]));
  for (const [src, dst] of graph.edges) {
    parents.get(dst)?.push(src);
  }

  const rank = new Map<string, number>();
  const resolve = (id: string): number => {
    const known = rank.get(id);
    if (known !== undefined) return known;
    rank.set(id, 0); // breaks accidental cycles defensively
    const above = (parents.get(id) ?? []).map(resolve);
    const r = above.length ? Math.max(...above) + 1 : 0;
    rank.set(id, r);
    return r;
  };
  graph.nodes.forEach((node) => resolve(node.id));

  const columns = new Map<number, string[]>();
  for (const node of graph.nodes) {
    const r = rank.get(node.id) ?? 0;
    if (!columns.has(r)) columns.set(r, []);
    columns.get(r)!.push(node.id);
  }
  const positions = new Map<string, NodePosition>();
  for (const [r, ids] of columns) {
    ids.sort((a, b) => (order.get(a) ?? 0) - (order.get(b) ?? 0));
    ids.forEach((id, row) => {
      positions.set(id, { x: 40 + r * COL_GAP, y: 40 + row * ROW_GAP });
    });
  }
  return positions;
}
