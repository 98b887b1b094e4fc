/** Pure presentation helpers: ViewState in, strings out.
 *
 * Nothing here mutates or extrapolates the state; the page always shows the
 * exact last snapshot the service acknowledged.
 */

import type { ViewState } from "./types.js";

/** One arrow glyph per 30-degree heading, clockwise from north. */
const HEADING_ARROWS = ["↑", "↗", "↗", "→", "↘", "↘", "↓", "↙", "↙", "←", "↖", "↖"];

export function headingArrow(heading: number): string {
  const idx = ((heading % 12) + 12) % 12;
  return HEADING_ARROWS[idx];
}

/** Fog grid with the agent glyph overlaid on its cell. */
export function renderGrid(state: ViewState): string[] {
  const rows = state.grid.map((row) => row.split(""));
  const { x, y } = state.agent;
  if (y >= 0 && y < rows.length && x >= 0 && x < rows[y].length) {
    rows[y][x] = headingArrow(state.agent.heading);
  }
  return rows.map((row) => row.join(""));
}

export function statusLine(state: ViewState): string {
  const pitch = state.agent.pitch === 0 ? "level" : state.agent.pitch > 0 ? "up" : "down";
  return (
    `target: ${state.target_category} | step ${state.steps}/${state.max_steps} | ` +
    `path ${state.path_length_m.toFixed(2)} m | gaze ${pitch} | ${state.status}`
  );
}

export function describeObjects(state: ViewState): string[] {
  if (state.visible_objects.length === 0) {
    return ["nothing in view"];
  }
  return state.visible_objects.map(
    (o) => `${o.category} at ${o.distance_cells.toFixed(1)} cells, ${o.bearing_deg.toFixed(0)}°`,
  );
}

/** Terminal episodes keep the grid but switch the banner message. */
export function bannerFor(state: ViewState): string {
  switch (state.status) {
    case "running":
      return "";
    case "success":
      return state.committed
        ? "success - trajectory saved"
        : "success - commit to save this demonstration";
    case "failure_stop":
      return "stopped away from the target - discard and try a new session";
    case "failure_timeout":
      return "step budget exhausted - discard and try a new session";
  }
}
