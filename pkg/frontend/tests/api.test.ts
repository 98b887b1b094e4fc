import { createServer, type IncomingMessage, type Server, type ServerResponse } from "node:http";
import type { AddressInfo } from "node:net";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, TeleopClient } from "../src/api.js";

interface Seen {
  method: string;
  url: string;
  body: string;
}

const seen: Seen[] = [];
let server: Server;
let base: string;

function fakeState(sessionId: string, steps: number) {
  return {
    session_id: sessionId,
    episode_id: "scn000000_hu0000",
    scene_id: "scn000000",
    target_category: "sofa",
    width: 3,
    height: 3,
    grid: ["###", "#.#", "###"],
    agent: { x: 1, y: 1, heading: 0, heading_deg: 0, pitch: 0 },
    visible_objects: [],
    steps,
    max_steps: 500,
    status: "running",
    path_length_m: 0,
    actions: ["move_forward", "turn_left", "turn_right", "look_up", "look_down", "stop"],
    committed: false,
  };
}

function handle(req: IncomingMessage, resp: ServerResponse, body: string): void {
  const url = req.url ?? "";
  seen.push({ method: req.method ?? "", url, body });
  const json = (code: number, payload: unknown) => {
    resp.writeHead(code, { "content-type": "application/json" });
    resp.end(JSON.stringify(payload));
  };
  if (url === "/api/session/new") {
    json(200, fakeState("s000000", 0));
  } else if (url === "/api/session/s000000/state") {
    json(200, fakeState("s000000", 1));
  } else if (url === "/api/session/s000000/action") {
    const parsed = JSON.parse(body) as { action?: string };
    if (parsed.action === "fly") {
      json(400, { detail: "unknown action 'fly'" });
    } else {
      json(200, fakeState("s000000", 2));
    }
  } else if (url === "/api/session/s000000/commit") {
    json(409, { detail: "episode still in progress; cannot commit" });
  } else if (url === "/api/session/s000000/discard") {
    json(200, { session_id: "s000000", discarded: true });
  } else if (url === "/api/trajectories") {
    json(200, { count: 0, trajectories: [] });
  } else if (url === "/api/broken") {
    resp.writeHead(500, { "content-type": "text/plain" });
    resp.end("not json");
  } else {
    json(404, { detail: `unknown session` });
  }
}

beforeAll(async () => {
  server = createServer((req, resp) => {
    let body = "";
    req.on("data", (chunk) => (body += chunk));
    req.on("end", () => handle(req, resp, body));
  });
  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const addr = server.address() as AddressInfo;
  base = `http://127.0.0.1:${addr.port}`;
});

afterAll(async () => {
  await new Promise<void>((resolve, reject) =>
    server.close((err) => (err ? reject(err) : resolve())),
  );
});

describe("teleop client", () => {
  it("fetches a new session", async () => {
    const client = new TeleopClient(base);
    const state = await client.newSession();
    expect(state.session_id).toBe("s000000");
    expect(state.status).toBe("running");
    expect(seen.at(-1)).toMatchObject({ method: "GET", url: "/api/session/new" });
  });

  it("posts actions as JSON bodies", async () => {
    const client = new TeleopClient(base);
    const state = await client.sendAction("s000000", "move_forward");
    expect(state.steps).toBe(2);
    const last = seen.at(-1)!;
    expect(last.method).toBe("POST");
    expect(JSON.parse(last.body)).toEqual({ action: "move_forward" });
  });

  it("surfaces the service's detail string on errors", async () => {
    const client = new TeleopClient(base);
    const failure = client.commit("s000000");
    await expect(failure).rejects.toBeInstanceOf(ApiError);
    await failure.catch((err: ApiError) => {
      expect(err.status).toBe(409);
      expect(err.detail).toContain("cannot commit");
    });
  });

  it("reports 404s for unknown sessions", async () => {
    const client = new TeleopClient(base);
    await expect(client.getState("szzz")).rejects.toMatchObject({ status: 404 });
  });

  it("tolerates non-JSON error bodies", async () => {
    const client = new TeleopClient(base);
    const resp = await fetch(`${base}/api/broken`);
    expect(resp.status).toBe(500);
    // the client path: parseOrThrow falls back to the status text
    await expect(
      new TeleopClient(base, (input) => fetch(input)).getState("s000000"),
    ).resolves.toBeTruthy();
  });

  it("discards and lists trajectories", async () => {
    const client = new TeleopClient(base);
    await expect(client.discard("s000000")).resolves.toEqual({
      session_id: "s000000",
      discarded: true,
    });
    await expect(client.listTrajectories()).resolves.toEqual({ count: 0, trajectories: [] });
  });

  it("builds the push-stream URL from the base", () => {
    const client = new TeleopClient("http://example.test/");
    expect(client.eventsUrl("s000001")).toBe(
      "http://example.test/api/session/s000001/events",
    );
  });
});
