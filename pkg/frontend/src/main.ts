import { ApiClient } from "./api";
import { keyToAction } from "./keys";
import { overlayRect } from "./overlay";
import { getReviewerId } from "./reviewer";
import {
  ReviewFormState,
  allDone,
  canSubmit,
  frameFailed,
  frameRetried,
  initialState,
  selectInBox,
  selectOutside,
  submitFailed,
  submitStarted,
  taskLoaded,
} from "./state";
import { IN_BOX_ANSWERS, OUTSIDE_ANSWERS, InBoxAnswer, OutsideAnswer } from "./types";

const IN_BOX_LABELS: Record<InBoxAnswer, string> = {
  female: "1 · Female face",
  male: "2 · Male face",
  doubt: "3 · Can't tell",
  no_face: "4 · No face in the box",
};

const OUTSIDE_LABELS: Record<OutsideAnswer, string> = {
  yes: "y · Yes",
  no: "n · No",
  doubt: "d · Can't tell",
};

const api = new ApiClient((input, init) => fetch(input, init));
const reviewerId = getReviewerId(window.localStorage);
let state: ReviewFormState = initialState;

const el = {
  stage: document.getElementById("stage") as HTMLDivElement,
  image: document.getElementById("frame") as HTMLImageElement,
  overlay: document.getElementById("overlay") as HTMLDivElement,
  q1: document.getElementById("q1-options") as HTMLDivElement,
  q2: document.getElementById("q2-options") as HTMLDivElement,
  submit: document.getElementById("submit") as HTMLButtonElement,
  retry: document.getElementById("retry") as HTMLButtonElement,
  message: document.getElementById("message") as HTMLDivElement,
  progress: document.getElementById("progress") as HTMLDivElement,
  card: document.getElementById("card") as HTMLDivElement,
  doneScreen: document.getElementById("done") as HTMLDivElement,
};

function setState(next: ReviewFormState): void {
  state = next;
  render();
}

function positionOverlay(): void {
  if (!state.task) {
    el.overlay.style.display = "none";
    return;
  }
  const rect = overlayRect(state.task.bbox, el.image.clientWidth, el.image.clientHeight);
  el.overlay.style.display = "block";
  el.overlay.style.left = `${rect.left}px`;
  el.overlay.style.top = `${rect.top}px`;
  el.overlay.style.width = `${rect.width}px`;
  el.overlay.style.height = `${rect.height}px`;
}

function optionButtons<T extends string>(
  container: HTMLDivElement,
  answers: readonly T[],
  labels: Record<T, string>,
  selected: T | null,
  onPick: (answer: T) => void
): void {
  container.replaceChildren();
  for (const answer of answers) {
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = labels[answer];
    button.className = answer === selected ? "option selected" : "option";
    button.addEventListener("click", () => onPick(answer));
    container.appendChild(button);
  }
}

function render(): void {
  el.card.hidden = state.status === "done";
  el.doneScreen.hidden = state.status !== "done";
  el.retry.hidden = state.status !== "frame_error";
  el.submit.disabled = !canSubmit(state);
  el.message.textContent = state.error ?? "";
  el.message.className = state.error ? "message error" : "message";

  optionButtons(el.q1, IN_BOX_ANSWERS, IN_BOX_LABELS, state.inBox, (a) =>
    setState(selectInBox(state, a))
  );
  optionButtons(el.q2, OUTSIDE_ANSWERS, OUTSIDE_LABELS, state.outsideBox, (a) =>
    setState(selectOutside(state, a))
  );

  if (state.task && el.image.src !== new URL(state.task.frame_url, location.href).href) {
    el.image.src = state.task.frame_url;
  }
  positionOverlay();
}

async function loadNext(): Promise<void> {
  setState({ ...initialState });
  try {
    const result = await api.nextTask(reviewerId);
    if (result === "done") {
      setState(allDone(state));
    } else {
      setState(taskLoaded(state, result));
    }
  } catch (err) {
    setState(frameFailed(state, String(err)));
  }
  void refreshProgress();
}

async function refreshProgress(): Promise<void> {
  try {
    const p = await api.progress();
    el.progress.textContent =
      `${p.total_reviews} reviews across ${p.tasks_total} frames ` +
      `(avg ${p.mean_reviews_per_task.toFixed(2)} per frame)`;
  } catch {
    el.progress.textContent = "";
  }
}

async function submit(): Promise<void> {
  if (!canSubmit(state) || !state.task || !state.inBox || !state.outsideBox) return;
  const payload = {
    task_id: state.task.task_id,
    reviewer_id: reviewerId,
    in_box: state.inBox,
    outside_box: state.outsideBox,
  };
  setState(submitStarted(state));
  const result = await api.submitReview(payload);
  if (result.ok) {
    await loadNext();
  } else {
    setState(submitFailed(state, `submission rejected (${result.message})`));
  }
}

el.image.addEventListener("load", positionOverlay);
el.image.addEventListener("error", () => {
  if (state.task) setState(frameFailed(state, "frame image failed to load"));
});
el.retry.addEventListener("click", () => {
  if (!state.task) return;
  setState(frameRetried(state));
  const url = new URL(state.task.frame_url, location.href);
  url.searchParams.set("retry", String(Date.now()));
  el.image.src = url.toString();
});
el.submit.addEventListener("click", () => void submit());
window.addEventListener("resize", positionOverlay);
window.addEventListener("keydown", (event) => {
  const action = keyToAction(event.key);
  if (!action) return;
  event.preventDefault();
  if (action.kind === "in_box") setState(selectInBox(state, action.answer));
  else if (action.kind === "outside_box") setState(selectOutside(state, action.answer));
  else void submit();
});

void loadNext();
