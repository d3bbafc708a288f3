/**
 * Typed views of the service's documents, with structural validators.
 *
 * Submissions are validated client-side before any network call, so a
 * malformed file never reaches the server.
 */

export interface PredictorDoc {
  kind: string;
  [key: string]: unknown;
}

export type NodeAction = { model: PredictorDoc } | { repair: number };

export interface PdlNodeDoc {
  group: PredictorDoc;
  action: NodeAction;
  introduced_round: number;
}

export interface ModelDoc {
  base: PredictorDoc;
  nodes: PdlNodeDoc[];
}

export interface ModelResponse {
  round: number;
  model: ModelDoc;
}

export interface GroupSeries {
  id: string;
  introduced_round: number;
  losses: (number | null)[];
}

export interface TestReport {
  rounds: number[];
  overall: number[];
  groups: GroupSeries[];
}

export interface TranscriptEntry {
  id: number;
  verdict: "accepted" | "rejected";
}

export interface LeaderboardRow {
  submitter: string;
  accepted: number;
  payout: number;
}

export interface SubmissionResponse {
  id: number;
  verdict: "accepted" | "rejected";
  round_after: number;
}

export class DocumentError extends Error {}

const PREDICTOR_KINDS = new Set([
  "constant",
  "stump",
  "conjunction",
  "tree",
  "regressor",
  "ternary_from_costs",
  "derived_group",
  "derived_model",
]);

function isObject(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

export function parsePredictorDoc(value: unknown): PredictorDoc {
  if (!isObject(value)) {
    throw new DocumentError("predictor document must be an object");
  }
  const kind = value["kind"];
  if (typeof kind !== "string" || !PREDICTOR_KINDS.has(kind)) {
    throw new DocumentError(`unknown predictor kind ${JSON.stringify(kind)}`);
  }
  return value as PredictorDoc;
}

/** Parse raw file text into a predictor document, or throw before any I/O. */
export function parsePredictorFile(text: string): PredictorDoc {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (error) {
    throw new DocumentError(`file is not valid JSON: ${String(error)}`);
  }
  return parsePredictorDoc(raw);
}

export function parseModelResponse(value: unknown): ModelResponse {
  if (!isObject(value) || typeof value["round"] !== "number" || !isObject(value["model"])) {
    throw new DocumentError("malformed model response");
  }
  const model = value["model"] as Record<string, unknown>;
  const base = parsePredictorDoc(model["base"]);
  const rawNodes = model["nodes"];
  if (!Array.isArray(rawNodes)) {
    throw new DocumentError("model document must carry a node list");
  }
  const nodes: PdlNodeDoc[] = rawNodes.map((item, index) => {
    if (!isObject(item) || !isObject(item["action"])) {
      throw new DocumentError(`node ${index + 1} is malformed`);
    }
    const action = item["action"] as Record<string, unknown>;
    let parsed: NodeAction;
    if ("model" in action) {
      parsed = { model: parsePredictorDoc(action["model"]) };
    } else if (typeof action["repair"] === "number") {
      const target = action["repair"];
      if (target < 0 || target > index) {
        throw new DocumentError(`node ${index + 1} repairs an invalid level ${target}`);
      }
      parsed = { repair: target };
    } else {
      throw new DocumentError(`node ${index + 1} has an unknown action`);
    }
    return {
      group: parsePredictorDoc(item["group"]),
      action: parsed,
      introduced_round: Number(item["introduced_round"]),
    };
  });
  return { round: value["round"] as number, model: { base, nodes } };
}

export function parseTestReport(value: unknown): TestReport {
  if (
    !isObject(value) ||
    !Array.isArray(value["rounds"]) ||
    !Array.isArray(value["overall"]) ||
    !Array.isArray(value["groups"])
  ) {
    throw new DocumentError("malformed test report");
  }
  return value as unknown as TestReport;
}
