/** Wire types mirroring the service API (see ../docs/api.md). */

export type QueryState = "queued" | "running" | "awaiting_feedback" | "done";

export interface SubmitResponse {
  query_id: string;
  position: number;
}

export interface TierEvent {
  query_id: string;
  tier_rank: number;
  seq: number;
}

export interface TurnEvent {
  query_id: string;
  tier_rank: number;
  turn_index: number;
  role: "user" | "assistant" | "executor";
  content: string;
  seq: number;
}

export interface AwaitingFeedbackEvent {
  query_id: string;
  tier_rank: number;
  seq: number;
}

export interface VerdictEvent {
  query_id: string;
  success: boolean;
  source: "human" | "judge";
  stored: boolean;
  cost_microusd: number;
  seq: number;
}

export type TranscriptEvent =
  | { type: "tier"; data: TierEvent }
  | { type: "turn"; data: TurnEvent }
  | { type: "awaiting_feedback"; data: AwaitingFeedbackEvent }
  | { type: "verdict"; data: VerdictEvent };

export interface Pending {
  query_id: string | null;
  tier_rank: number | null;
}

export interface Metrics {
  queries: number;
  successes: number;
  success_rate: number;
  total_cost_microusd: number;
  total_cost_usd: string;
  avg_model_calls_per_rank: Record<string, number>;
  total_runtime_s: number;
  curves: [number, number, number][];
}

export interface QueryStatus {
  query_id: string;
  state: QueryState;
  query: string;
  result?: {
    success: boolean;
    verdict_source: string;
    tiers_attempted: number[];
    cost_microusd: number;
    demo_used: string | null;
  };
}

export interface StoreRecord {
  query_id: string;
  query_text: string;
  code: string;
  solved_by_rank: number;
  created_at: number;
}
