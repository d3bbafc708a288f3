/** Page wiring: poll the service, render views, handle submissions. */

import { ApiClient, ApiError } from "./api.js";
import { DocumentError, parsePredictorFile } from "./docs.js";
import { buildErrorSeries, renderErrorChartSvg } from "./errorChart.js";
import { buildModelGraph, renderModelGraphSvg } from "./modelGraph.js";

const POLL_MS = 3000;

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

function toast(message: string, ok: boolean): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.className = ok ? "toast ok" : "toast bad";
  box.style.display = "block";
  window.setTimeout(() => {
    box.style.display = "none";
  }, 6000);
}

async function refresh(client: ApiClient): Promise<void> {
  const model = await client.model();
  el<HTMLSpanElement>("round").textContent = String(model.round);
  el<HTMLDivElement>("model-graph").innerHTML = renderModelGraphSvg(
    buildModelGraph(model.model),
  );

  const report = await client.testReport();
  el<HTMLDivElement>("error-chart").innerHTML = renderErrorChartSvg(buildErrorSeries(report));

  const transcript = await client.transcript();
  el<HTMLUListElement>("transcript").innerHTML = transcript
    .slice(-25)
    .reverse()
    .map((t) => `<li class="${t.verdict}">#${t.id} ${t.verdict}</li>`)
    .join("");

  const board = await client.leaderboard();
  el<HTMLTableSectionElement>("leaderboard").innerHTML = board
    .map((row) => `<tr><td>${row.submitter}</td><td>${row.accepted}</td><td>${row.payout}</td></tr>`)
    .join("");
}

async function readFile(input: HTMLInputElement): Promise<string> {
  const file = input.files?.[0];
  if (!file) {
    throw new DocumentError("choose a file first");
  }
  return file.text();
}

export function start(): void {
  const base = new URLSearchParams(window.location.search).get("api") ?? "http://127.0.0.1:8711";
  const client = new ApiClient(base);
  el<HTMLSpanElement>("api-base").textContent = base;

  el<HTMLFormElement>("submit-form").addEventListener("submit", async (event) => {
    event.preventDefault();
    try {
      const group = parsePredictorFile(await readFile(el<HTMLInputElement>("group-file")));
      const model = parsePredictorFile(await readFile(el<HTMLInputElement>("model-file")));
      const key = el<HTMLInputElement>("submitter-key").value.trim();
      if (!key) {
        throw new DocumentError("submitter key is required");
      }
      const result = await client.submit(group, model, key);
      toast(`submission #${result.id}: ${result.verdict}, round ${result.round_after}`,
            result.verdict === "accepted");
      await refresh(client);
    } catch (error) {
      if (error instanceof DocumentError) {
        toast(`rejected before upload: ${error.message}`, false);
      } else if (error instanceof ApiError) {
        toast(`server refused: ${error.detail}`, false);
      } else {
        toast(String(error), false);
      }
    }
  });

  const tick = () => {
    refresh(client).catch((error) => {
      el<HTMLSpanElement>("status").textContent = `offline (${String(error)})`;
    });
    el<HTMLSpanElement>("status").textContent = "connected";
  };
  tick();
  window.setInterval(tick, POLL_MS);
}

if (typeof document !== "undefined" && document.getElementById("model-graph")) {
  start();
}
