/** JSON payload shapes of the anchoring service. */

export interface Span {
  start: number; // Unicode scalar offsets, half-open
  end: number;
}

export interface ContextWindowJson {
  level: "exact" | "sentence" | "paragraph" | "section" | "document";
  span: Span;
  text: string;
  ambiguity_flag: boolean;
}

export type AnchorStatus = "intact" | "shifted" | "modified" | "orphaned";

export interface AnchorJson {
  anchor_id: string;
  version_id: number;
  span: Span | null;
  anchor_text: string;
  acw: ContextWindowJson | null;
  status: AnchorStatus;
}

export interface MessageJson {
  author: "user" | "ai";
  text: string;
  at_version_id: number;
  timestamp: number;
  action?: "affirm" | "retract" | "update" | "acknowledge";
}

export interface ThreadJson {
  thread_id: string;
  anchor: AnchorJson;
  origin: { kind: string; query_id?: string };
  messages: MessageJson[];
  state: "open" | "resolved" | "orphaned";
}

export interface SessionView {
  session_id: string;
  head_version_id: number;
  text: string;
  config: {
    study_mode: boolean;
    snapshot_interval_s: number;
    refine_enabled: boolean;
  };
  threads: ThreadJson[];
}

export interface EditPayload {
  kind: "insert" | "delete" | "replace";
  at: Span;
  new_text: string;
}

export interface EditResponse {
  version_id: number;
  head_version_id: number;
  anchor_statuses: { thread_id: string; status: AnchorStatus }[];
}

export interface MetaQueryResponse {
  query_id: string;
  created_threads: string[];
  rejected: { reason: string; anchor_text: string; detail: string }[];
  raw_proposal_count: number;
  threads: ThreadJson[];
  head_version_id: number;
}

export interface ReplyResponse {
  message: MessageJson;
  thread_state: string;
  anchor_status: AnchorStatus;
  head_version_id: number;
}

export interface ApiErrorBody {
  code: "bad_request" | "not_found" | "feature_disabled" | "provider_error" | "conflict";
  message: string;
  detail: string;
}

export type PasteSource = "document" | "feedback-pane" | "external";
