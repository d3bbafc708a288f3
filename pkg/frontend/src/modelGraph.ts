/**
 * Pointer-decision-list graph view.
 *
 * One node per list level plus the base model. Evaluation falls through
 * newest-to-oldest, drawn as chain edges; repair nodes are visually distinct
 * and carry a back-edge to the prefix level they restore.
 */

import { ModelDoc, PdlNodeDoc, PredictorDoc } from "./docs.js";

export interface GraphNode {
  level: number;
  kind: "base" | "model" | "repair";
  label: string;
  repairTarget?: number;
}

export interface GraphEdge {
  from: number;
  to: number;
  kind: "chain" | "repair";
}

export interface ModelGraph {
  nodes: GraphNode[];
  edges: GraphEdge[];
}

function describePredictor(doc: PredictorDoc): string {
  switch (doc.kind) {
    case "constant":
      return `always ${doc["label"]}`;
    case "stump":
      return `${doc["feature"]} ${doc["cmp"] === "le" ? "<=" : "=="} ${doc["value"]}`;
    case "conjunction": {
      const clauses = doc["clauses"] as { feature: string; cmp: string; value: number }[];
      if (clauses.length === 0) {
        return "everyone";
      }
      return clauses
        .map((c) => `${c.feature} ${c.cmp === "le" ? "<=" : "=="} ${c.value}`)
        .join(" & ");
    }
    case "tree":
      return `tree(${(doc["nodes"] as unknown[]).length} nodes)`;
    case "derived_group":
      return "learned non-deferral region";
    case "derived_model":
      return "learned patch model";
    case "ternary_from_costs":
      return "cost-thresholded rule";
    default:
      return doc.kind;
  }
}

function describeNode(node: PdlNodeDoc): string {
  const guard = describePredictor(node.group);
  if ("repair" in node.action) {
    return `if ${guard}: restore level ${node.action.repair}`;
  }
  return `if ${guard}: use ${describePredictor(node.action.model)}`;
}

export function buildModelGraph(doc: ModelDoc): ModelGraph {
  const nodes: GraphNode[] = [
    { level: 0, kind: "base", label: `base: ${describePredictor(doc.base)}` },
  ];
  const edges: GraphEdge[] = [];
  doc.nodes.forEach((node, index) => {
    const level = index + 1;
    const repair = "repair" in node.action ? node.action.repair : undefined;
    nodes.push({
      level,
      kind: repair === undefined ? "model" : "repair",
      label: describeNode(node),
      repairTarget: repair,
    });
    edges.push({ from: level, to: level - 1, kind: "chain" });
    if (repair !== undefined) {
      edges.push({ from: level, to: repair, kind: "repair" });
    }
  });
  return { nodes, edges };
}

const ROW_HEIGHT = 44;
const BOX_WIDTH = 340;
const BOX_HEIGHT = 32;
const LEFT = 16;

function rowY(graph: ModelGraph, level: number): number {
  // newest level on top, base at the bottom
  const top = graph.nodes.length - 1;
  return 12 + (top - level) * ROW_HEIGHT;
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Render the graph as standalone SVG markup. */
export function renderModelGraphSvg(graph: ModelGraph): string {
  const height = graph.nodes.length * ROW_HEIGHT + 24;
  const width = BOX_WIDTH + 140;
  const parts: string[] = [];
  for (const edge of graph.edges) {
    const fromY = rowY(graph, edge.from) + BOX_HEIGHT / 2;
    const toY = rowY(graph, edge.to) + BOX_HEIGHT / 2;
    if (edge.kind === "chain") {
      const x = LEFT + BOX_WIDTH / 2;
      parts.push(
        `<line data-edge="chain" data-from="${edge.from}" data-to="${edge.to}" ` +
          `x1="${x}" y1="${fromY + BOX_HEIGHT / 2}" x2="${x}" y2="${toY - BOX_HEIGHT / 2}" ` +
          `stroke="#8a8f98" stroke-width="1.5" marker-end="url(#arrow)"/>`,
      );
    } else {
      const x0 = LEFT + BOX_WIDTH;
      const bend = x0 + 60 + 8 * edge.from;
      parts.push(
        `<path data-edge="repair" data-from="${edge.from}" data-to="${edge.to}" ` +
          `d="M ${x0} ${fromY} C ${bend} ${fromY}, ${bend} ${toY}, ${x0} ${toY}" ` +
          `fill="none" stroke="#c2571a" stroke-width="1.5" stroke-dasharray="5 3" ` +
          `marker-end="url(#arrow)"/>`,
      );
    }
  }
  for (const node of graph.nodes) {
    const y = rowY(graph, node.level);
    const fill = node.kind === "repair" ? "#f4d8c4" : node.kind === "base" ? "#dbe4f0" : "#e7efe2";
    parts.push(
      `<g data-node-level="${node.level}" data-node-kind="${node.kind}">` +
        `<rect x="${LEFT}" y="${y}" width="${BOX_WIDTH}" height="${BOX_HEIGHT}" rx="6" ` +
        `fill="${fill}" stroke="#4b5563"/>` +
        `<text x="${LEFT + 10}" y="${y + 21}" font-size="12" font-family="monospace">` +
        `${escapeXml(`${node.level}: ${node.label}`)}</text></g>`,
    );
  }
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}">` +
    `<defs><marker id="arrow" viewBox="0 0 8 8" refX="7" refY="4" markerWidth="6" ` +
    `markerHeight="6" orient="auto"><path d="M0,0 L8,4 L0,8 z" fill="#6b7280"/></marker></defs>` +
    parts.join("") +
    `</svg>`
  );
}
