/** Thin fetch client for the teleop service.
 *
 * The browser never simulates anything locally: every method returns the
 * service's own snapshot, and callers are expected to render exactly that.
 */

import type { ActionName, CommitReceipt, TrajectoryListing, ViewState } from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.status = status;
    this.detail = detail;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseOrThrow<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return (await resp.json()) as T;
  }
  let detail = resp.statusText || "request failed";
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (typeof body.detail === "string") {
      detail = body.detail;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, detail);
}

export class TeleopClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  newSession(): Promise<ViewState> {
    return this.fetchImpl(this.url("/api/session/new")).then((r) => parseOrThrow<ViewState>(r));
  }

  getState(sessionId: string): Promise<ViewState> {
    return this.fetchImpl(this.url(`/api/session/${sessionId}/state`)).then((r) =>
      parseOrThrow<ViewState>(r),
    );
  }

  sendAction(sessionId: string, action: ActionName): Promise<ViewState> {
    return this.fetchImpl(this.url(`/api/session/${sessionId}/action`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ action }),
    }).then((r) => parseOrThrow<ViewState>(r));
  }

  commit(sessionId: string): Promise<CommitReceipt> {
    return this.fetchImpl(this.url(`/api/session/${sessionId}/commit`), {
      method: "POST",
    }).then((r) => parseOrThrow<CommitReceipt>(r));
  }

  discard(sessionId: string): Promise<{ session_id: string; discarded: boolean }> {
    return this.fetchImpl(this.url(`/api/session/${sessionId}/discard`), {
      method: "POST",
    }).then((r) => parseOrThrow<{ session_id: string; discarded: boolean }>(r));
  }

  listTrajectories(): Promise<TrajectoryListing> {
    return this.fetchImpl(this.url("/api/trajectories")).then((r) =>
      parseOrThrow<TrajectoryListing>(r),
    );
  }

  /** URL for the server-push state stream of one session. */
  eventsUrl(sessionId: string): string {
    return this.url(`/api/session/${sessionId}/events`);
  }
}
