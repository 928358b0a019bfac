import type { InBoxAnswer, OutsideAnswer, TaskDoc } from "./types";

export type Status =
  | "loading"
  | "answering"
  | "frame_error"
  | "submitting"
  | "submit_error"
  | "done";

export interface ReviewFormState {
  task: TaskDoc | null;
  inBox: InBoxAnswer | null;
  outsideBox: OutsideAnswer | null;
  status: Status;
  error: string | null;
}

export const initialState: ReviewFormState = {
  task: null,
  inBox: null,
  outsideBox: null,
  status: "loading",
  error: null,
};

/** Submit is possible only when both questions are answered. */
export function canSubmit(state: ReviewFormState): boolean {
  return (
    state.task !== null &&
    state.inBox !== null &&
    state.outsideBox !== null &&
    (state.status === "answering" || state.status === "submit_error")
  );
}

export function taskLoaded(state: ReviewFormState, task: TaskDoc): ReviewFormState {
  return { task, inBox: null, outsideBox: null, status: "answering", error: null };
}

export function allDone(state: ReviewFormState): ReviewFormState {
  return { ...state, task: null, status: "done", error: null };
}

export function frameFailed(state: ReviewFormState, message: string): ReviewFormState {
  return { ...state, status: "frame_error", error: message };
}

export function frameRetried(state: ReviewFormState): ReviewFormState {
  return { ...state, status: "answering", error: null };
}

export function selectInBox(state: ReviewFormState, answer: InBoxAnswer): ReviewFormState {
  if (state.status === "submitting" || state.status === "done") return state;
  return { ...state, inBox: answer };
}

export function selectOutside(state: ReviewFormState, answer: OutsideAnswer): ReviewFormState {
  if (state.status === "submitting" || state.status === "done") return state;
  return { ...state, outsideBox: answer };
}

export function submitStarted(state: ReviewFormState): ReviewFormState {
  return { ...state, status: "submitting", error: null };
}

/** Server rejection: surface the message inline, keep the answers. */
export function submitFailed(state: ReviewFormState, message: string): ReviewFormState {
  return { ...state, status: "submit_error", error: message };
}
