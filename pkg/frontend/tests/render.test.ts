import { describe, expect, it } from "vitest";

import { bannerFor, describeObjects, headingArrow, renderGrid, statusLine } from "../src/render.js";
import type { ViewState } from "../src/types.js";

function snapshot(overrides: Partial<ViewState> = {}): ViewState {
  return {
    session_id: "s000000",
    episode_id: "scn000000_hu0000",
    scene_id: "scn000000",
    target_category: "sofa",
    width: 5,
    height: 4,
    grid: ["#####", "#..?#", "#.??#", "#####"],
    agent: { x: 1, y: 1, heading: 3, heading_deg: 90, pitch: 0 },
    visible_objects: [],
    steps: 2,
    max_steps: 500,
    status: "running",
    path_length_m: 0.5,
    actions: ["move_forward", "turn_left", "turn_right", "look_up", "look_down", "stop"],
    committed: false,
    ...overrides,
  };
}

describe("grid rendering", () => {
  it("overlays the agent arrow without disturbing other cells", () => {
    const rows = renderGrid(snapshot());
    expect(rows).toEqual(["#####", "#→.?#", "#.??#", "#####"]);
  });

  it("keeps unknown cells as question marks", () => {
    const rows = renderGrid(snapshot({ agent: { x: 2, y: 2, heading: 0, heading_deg: 0, pitch: 0 } }));
    expect(rows[2]).toBe("#.↑?#");
    expect(rows[1]).toBe("#..?#");
  });

  it("never mutates the snapshot it renders", () => {
    const state = snapshot();
    renderGrid(state);
    expect(state.grid[1]).toBe("#..?#");
  });
});

describe("heading arrows", () => {
  it("covers all twelve headings with eight glyphs", () => {
    expect(headingArrow(0)).toBe("↑");
    expect(headingArrow(3)).toBe("→");
    expect(headingArrow(6)).toBe("↓");
    expect(headingArrow(9)).toBe("←");
    expect(headingArrow(12)).toBe("↑");
    expect(headingArrow(-3)).toBe("←");
    for (let h = 0; h < 12; h += 1) {
      expect(headingArrow(h)).toHaveLength(1);
    }
  });
});

describe("status and banners", () => {
  it("summarises progress in one line", () => {
    const line = statusLine(snapshot());
    expect(line).toContain("target: sofa");
    expect(line).toContain("step 2/500");
    expect(line).toContain("0.50 m");
    expect(line).toContain("running");
  });

  it("describes visible objects or the empty view", () => {
    expect(describeObjects(snapshot())).toEqual(["nothing in view"]);
    const seen = describeObjects(
      snapshot({
        visible_objects: [{ category: "lamp", bearing_deg: -30, distance_cells: 2.24 }],
      }),
    );
    expect(seen).toHaveLength(1);
    expect(seen[0]).toContain("lamp");
    expect(seen[0]).toContain("2.2 cells");
  });

  it("prompts for commit only on uncommitted success", () => {
    expect(bannerFor(snapshot())).toBe("");
    expect(bannerFor(snapshot({ status: "success" }))).toContain("commit");
    expect(bannerFor(snapshot({ status: "success", committed: true }))).toContain("saved");
    expect(bannerFor(snapshot({ status: "failure_timeout" }))).toContain("budget");
    expect(bannerFor(snapshot({ status: "failure_stop" }))).toContain("away from the target");
  });
});
