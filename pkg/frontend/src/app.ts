/** Page wiring: keyboard teleop loop over the HTTP service.
 *
 * State flow is strictly server -> client. A keypress is translated to an
 * action request; the response snapshot replaces the rendered state. The
 * server-push stream keeps the view fresh if the session changes elsewhere.
 */

import { ApiError, TeleopClient } from "./api.js";
import { actionForKey, InputGate, KEY_BINDINGS } from "./controls.js";
import { bannerFor, describeObjects, renderGrid, statusLine } from "./render.js";
import type { ViewState } from "./types.js";

const client = new TeleopClient("");
const gate = new InputGate();

let state: ViewState | null = null;
let events: EventSource | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function showError(message: string): void {
  const banner = el<HTMLDivElement>("error");
  banner.textContent = message;
  banner.hidden = message === "";
}

function render(): void {
  if (!state) {
    return;
  }
  el<HTMLPreElement>("grid").textContent = renderGrid(state).join("\n");
  el<HTMLDivElement>("status").textContent = statusLine(state);
  el<HTMLUListElement>("objects").replaceChildren(
    ...describeObjects(state).map((line) => {
      const li = document.createElement("li");
      li.textContent = line;
      return li;
    }),
  );
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = bannerFor(state);
  banner.hidden = banner.textContent === "";
  el<HTMLButtonElement>("commit").disabled = state.status === "running" || state.committed;
}

function adopt(snapshot: ViewState): void {
  state = snapshot;
  showError("");
  render();
}

function subscribe(sessionId: string): void {
  events?.close();
  events = new EventSource(client.eventsUrl(sessionId));
  events.addEventListener("state", (ev) => {
    const snapshot = JSON.parse((ev as MessageEvent).data) as ViewState;
    if (state && snapshot.session_id === state.session_id) {
      adopt(snapshot);
    }
  });
}

async function newSession(): Promise<void> {
  await gate.run(async () => {
    try {
      adopt(await client.newSession());
      subscribe(state!.session_id);
    } catch (err) {
      showError(err instanceof ApiError ? err.detail : String(err));
    }
  });
}

async function act(key: string): Promise<void> {
  const action = actionForKey(key);
  if (!action || !state || state.status !== "running") {
    return;
  }
  const sessionId = state.session_id;
  await gate.run(async () => {
    try {
      adopt(await client.sendAction(sessionId, action));
    } catch (err) {
      showError(err instanceof ApiError ? err.detail : String(err));
    }
  });
}

async function commit(): Promise<void> {
  if (!state) {
    return;
  }
  const sessionId = state.session_id;
  await gate.run(async () => {
    try {
      const receipt = await client.commit(sessionId);
      showError("");
      if (state && state.session_id === sessionId) {
        state = { ...state, committed: true };
        render();
      }
      el<HTMLDivElement>("banner").textContent =
        `saved ${receipt.episode_id} (${receipt.steps} steps) to ${receipt.file}`;
      el<HTMLDivElement>("banner").hidden = false;
    } catch (err) {
      showError(err instanceof ApiError ? err.detail : String(err));
    }
  });
}

async function discard(): Promise<void> {
  if (!state) {
    return;
  }
  const sessionId = state.session_id;
  await gate.run(async () => {
    try {
      await client.discard(sessionId);
    } catch (err) {
      showError(err instanceof ApiError ? err.detail : String(err));
    }
  });
  events?.close();
  state = null;
  await newSession();
}

function bindUi(): void {
  el<HTMLButtonElement>("new").addEventListener("click", () => void newSession());
  el<HTMLButtonElement>("commit").addEventListener("click", () => void commit());
  el<HTMLButtonElement>("discard").addEventListener("click", () => void discard());
  document.addEventListener("keydown", (ev) => {
    if (ev.key in KEY_BINDINGS) {
      ev.preventDefault();
      void act(ev.key);
    }
  });
  const help = Object.entries(KEY_BINDINGS)
    .map(([key, action]) => `${key === " " ? "Space" : key} = ${action}`)
    .join("   ");
  el<HTMLDivElement>("help").textContent = help;
}

bindUi();
void newSession();
