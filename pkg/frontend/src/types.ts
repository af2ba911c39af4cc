/** Wire types for the annotation service API. */

export interface AspectPayload {
  id: string;
  text: string;
}

export interface TaskPayload {
  task_id: string;
  query_id: string;
  system_id: string;
  query_text: string;
  response_text: string;
  required_annotators: number;
  aspects: {
    query_id: string;
    provenance: string;
    aspects: AspectPayload[];
  };
}

/** Code-point offsets into the task's response_text, end exclusive. */
export interface Span {
  start: number;
  end: number;
}

export interface JudgmentBody {
  present: boolean;
  evidence: Span[];
}

export interface AnnotationBody {
  task_id: string;
  annotator_id: string;
  judgments: Record<string, JudgmentBody>;
}

export interface ApiError {
  error_code: string;
  detail: string;
}
