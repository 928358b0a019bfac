export type InBoxAnswer = "female" | "male" | "doubt" | "no_face";
export type OutsideAnswer = "yes" | "no" | "doubt";

export const IN_BOX_ANSWERS: readonly InBoxAnswer[] = ["female", "male", "doubt", "no_face"];
export const OUTSIDE_ANSWERS: readonly OutsideAnswer[] = ["yes", "no", "doubt"];

export interface BBox {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface TaskDoc {
  done: boolean;
  task_id: string;
  movie_id: string;
  frame_ts_ms: number;
  bbox: BBox;
  detected_gender: "female" | "male";
  frame_url: string;
}

export interface ReviewPayload {
  task_id: string;
  reviewer_id: string;
  in_box: InBoxAnswer;
  outside_box: OutsideAnswer;
}

export interface ProgressDoc {
  tasks_total: number;
  total_reviews: number;
  mean_reviews_per_task: number;
}
