/** Keyboard bindings and the in-flight input gate.
 *
 * While a request is pending the gate is closed and further keypresses are
 * dropped rather than queued, so the operator can never race ahead of the
 * acknowledged state.
 */

import type { ActionName } from "./types.js";

export const KEY_BINDINGS: Readonly<Record<string, ActionName>> = {
  ArrowUp: "move_forward",
  ArrowLeft: "turn_left",
  ArrowRight: "turn_right",
  PageUp: "look_up",
  PageDown: "look_down",
  " ": "stop",
};

export function actionForKey(key: string): ActionName | null {
  return KEY_BINDINGS[key] ?? null;
}

export class InputGate {
  private inFlight = false;

  get locked(): boolean {
    return this.inFlight;
  }

  /** Returns true when the caller acquired the gate; false means drop the input. */
  acquire(): boolean {
    if (this.inFlight) {
      return false;
    }
    this.inFlight = true;
    return true;
  }

  release(): void {
    this.inFlight = false;
  }

  /** Run one request while holding the gate; concurrent calls resolve to null. */
  async run<T>(task: () => Promise<T>): Promise<T | null> {
    if (!this.acquire()) {
      return null;
    }
    try {
      return await task();
    } finally {
      this.release();
    }
  }
}
