import { describe, expect, it } from "vitest";

import { actionForKey, InputGate, KEY_BINDINGS } from "../src/controls.js";

describe("key bindings", () => {
  it("maps the six control keys onto the six actions", () => {
    expect(actionForKey("ArrowUp")).toBe("move_forward");
    expect(actionForKey("ArrowLeft")).toBe("turn_left");
    expect(actionForKey("ArrowRight")).toBe("turn_right");
    expect(actionForKey("PageUp")).toBe("look_up");
    expect(actionForKey("PageDown")).toBe("look_down");
    expect(actionForKey(" ")).toBe("stop");
    expect(new Set(Object.values(KEY_BINDINGS)).size).toBe(6);
  });

  it("ignores unbound keys", () => {
    expect(actionForKey("a")).toBeNull();
    expect(actionForKey("Enter")).toBeNull();
    expect(actionForKey("ArrowDown")).toBeNull();
  });
});

describe("input gate", () => {
  it("drops input while a request is in flight", async () => {
    const gate = new InputGate();
    let release: () => void = () => undefined;
    const pending = gate.run(
      () => new Promise<string>((resolve) => (release = () => resolve("first"))),
    );
    expect(gate.locked).toBe(true);
    // a second command during flight resolves to null without running
    let ran = false;
    const second = await gate.run(async () => {
      ran = true;
      return "second";
    });
    expect(second).toBeNull();
    expect(ran).toBe(false);
    release();
    expect(await pending).toBe("first");
    expect(gate.locked).toBe(false);
  });

  it("reopens after a failed request", async () => {
    const gate = new InputGate();
    await expect(
      gate.run(async () => {
        throw new Error("boom");
      }),
    ).rejects.toThrow("boom");
    expect(gate.locked).toBe(false);
    expect(await gate.run(async () => 7)).toBe(7);
  });
});
