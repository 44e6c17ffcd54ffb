export type Role = "CUSTOMER" | "SYSTEM" | "ADVOCATE";

export interface ChatMessage {
  role: Role;
  text: string;
}

export type Group = "treatment" | "holdout";

export interface PredictRequest {
  case_id: string;
  messages: ChatMessage[];
  k: number;
}

export interface PredictResponse {
  template_ids: number[];
  probabilities: number[];
  model_version: string;
  latency_ms: number;
}

export interface SelectionEvent {
  case_id: string;
  timestamp: string; // ISO-8601 UTC
  group: Group;
  shown_template_ids: number[];
  chosen_template_id: number;
  selection_time_sec: number;
  model_version: string;
}

export interface Suggestion {
  templateId: number;
  probability: number;
}
