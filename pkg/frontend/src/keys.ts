import type { InBoxAnswer, OutsideAnswer } from "./types";

export type KeyAction =
  | { kind: "in_box"; answer: InBoxAnswer }
  | { kind: "outside_box"; answer: OutsideAnswer }
  | { kind: "submit" };

const IN_BOX_KEYS: Record<string, InBoxAnswer> = {
  "1": "female",
  "2": "male",
  "3": "doubt",
  "4": "no_face",
};

const OUTSIDE_KEYS: Record<string, OutsideAnswer> = {
  y: "yes",
  n: "no",
  d: "doubt",
};

/** 1-4 answer the box question, y/n/d the rest-of-frame question, Enter submits. */
export function keyToAction(key: string): KeyAction | null {
  const inBox = IN_BOX_KEYS[key];
  if (inBox) return { kind: "in_box", answer: inBox };
  const outside = OUTSIDE_KEYS[key.toLowerCase()];
  if (outside) return { kind: "outside_box", answer: outside };
  if (key === "Enter") return { kind: "submit" };
  return null;
}
