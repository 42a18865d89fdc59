import type { Outcome } from "./types.js";

/** Single-key verdict entry: throughput matters at 1000 clips per audit. */
const KEY_TO_OUTCOME: Record<string, Outcome> = {
  "1": "correct",
  "2": "wrong_onset",
  "3": "noise_dominated",
  "4": "no_bird",
};

export type NavAction = "next" | "prev" | "play" | "open_onset";

const KEY_TO_NAV: Record<string, NavAction> = {
  ArrowRight: "next",
  ArrowDown: "next",
  ArrowLeft: "prev",
  ArrowUp: "prev",
  " ": "play",
  o: "open_onset",
};

export function outcomeForKey(key: string): Outcome | undefined {
  return KEY_TO_OUTCOME[key];
}

export function navForKey(key: string): NavAction | undefined {
  return KEY_TO_NAV[key];
}
