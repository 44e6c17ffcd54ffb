import { assignGroup } from "./assign.js";
import { ServeClient } from "./api.js";
import { AdvocateSession } from "./session.js";

// Minimal DOM console: live transcript on the left, suggestions (or the
// manual search fallback) on the right. Holdout sessions get the manual
// panel only; the suggestion pane is never populated for them.

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function newCaseId(): string {
  return `case-${Date.now().toString(36)}-${Math.floor(Math.random() * 1e6).toString(36)}`;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const serveUrl = params.get("serve") ?? "http://127.0.0.1:8080";
  const holdoutFraction = Number(params.get("holdout") ?? "0.02");
  const salt = params.get("salt") ?? "console";

  const client = new ServeClient(serveUrl);
  const caseId = newCaseId();
  const group = await assignGroup(caseId, holdoutFraction, salt);
  const session = new AdvocateSession({ caseId, group, client });

  const transcriptPane = el<HTMLDivElement>("transcript");
  const suggestionPane = el<HTMLDivElement>("suggestions");
  const statusLine = el<HTMLDivElement>("status");
  const input = el<HTMLInputElement>("customer-input");
  const manualInput = el<HTMLInputElement>("manual-template-id");
  const freehandInput = el<HTMLInputElement>("freehand-text");

  statusLine.textContent = `case ${caseId} — group: ${group}`;

  const renderTranscript = () => {
    transcriptPane.innerHTML = "";
    for (const m of session.transcript) {
      const row = document.createElement("div");
      row.className = `msg msg-${m.role.toLowerCase()}`;
      row.textContent = `<${m.role}>: ${m.text}`;
      transcriptPane.appendChild(row);
    }
  };

  const renderSuggestions = () => {
    suggestionPane.innerHTML = "";
    if (session.group === "holdout") {
      const note = document.createElement("div");
      note.className = "note";
      note.textContent = "manual template search only (holdout)";
      suggestionPane.appendChild(note);
      return;
    }
    if (session.pane === "degraded") {
      const note = document.createElement("div");
      note.className = "note degraded";
      note.textContent = "suggestions unavailable — search manually";
      suggestionPane.appendChild(note);
      return;
    }
    for (const s of session.visibleSuggestions()) {
      const btn = document.createElement("button");
      btn.className = "suggestion";
      btn.textContent = `template #${s.templateId} (${(s.probability * 100).toFixed(1)}%)`;
      btn.onclick = async () => {
        await session.commitTemplate(s.templateId, `template #${s.templateId}`);
        renderTranscript();
        renderSuggestions();
      };
      suggestionPane.appendChild(btn);
    }
  };

  el<HTMLButtonElement>("send-customer").onclick = async () => {
    const text = input.value.trim();
    if (!text) return;
    input.value = "";
    await session.onCustomerMessage(text);
    renderTranscript();
    renderSuggestions();
  };

  el<HTMLButtonElement>("commit-manual").onclick = async () => {
    const id = Number(manualInput.value);
    if (!Number.isInteger(id) || id < 0) return;
    await session.commitTemplate(id, `template #${id}`);
    renderTranscript();
    renderSuggestions();
  };

  el<HTMLButtonElement>("commit-freehand").onclick = async () => {
    const text = freehandInput.value.trim();
    if (!text) return;
    freehandInput.value = "";
    await session.commitFreehand(text);
    renderTranscript();
    renderSuggestions();
  };
}

boot().catch((e) => {
  const status = document.getElementById("status");
  if (status) status.textContent = `boot failed: ${e}`;
});
