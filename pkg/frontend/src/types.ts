/** Wire types mirrored from the annotation service JSON payloads. */

export type SpanKind = "removed" | "added" | "incorrect_attribute";

export interface DiffSpan {
  field: string;
  kind: SpanKind;
  begin: number;
  end: number;
  text: string;
}

export interface Task {
  task_id: string;
  base_id: string;
  strategy: "correct" | "incorrect" | "unknown";
  category: string;
  attribute_key: string;
  original_value: string;
  new_value: string;
  negative_value: string | null;
  original_fields: Record<string, string>;
  synthetic_fields: Record<string, string>;
  diff: DiffSpan[];
}

export interface Question {
  id: string;
  text: string;
  options: string[];
}

export interface Protocol {
  version: number;
  annotators_per_task: number;
  majority_threshold: number;
  preamble?: string;
  questions: Question[];
}

export interface Progress {
  tasks: number;
  fully_labeled: number;
  labels: number;
}

export interface NextTaskResponse {
  task: Task;
  progress: Progress;
}

export type Answers = Record<string, string>;
