/**
 * Console state for one human-feedback run.
 *
 * The transcript feed dedupes by event seq so a reconnect can never render
 * a turn twice. Verdict buttons are enabled strictly while the service
 * reports a pending decision for the displayed query, and dashboard
 * numbers are copied verbatim from the metrics endpoint, never derived
 * from transcripts.
 */

import type { ConsoleClient, Subscription } from "./client.js";
import { ApiError } from "./client.js";
import type { Metrics, TranscriptEvent, TurnEvent } from "./types.js";

export interface Toast {
  level: "info" | "error";
  message: string;
}

export class TranscriptFeed {
  readonly turns: TurnEvent[] = [];
  tierBadge = 0;
  awaitingTier: number | null = null;
  verdict: { success: boolean; source: string; stored: boolean } | null = null;
  lastSeq = -1;

  apply(event: TranscriptEvent): boolean {
    if (event.data.seq <= this.lastSeq) {
      return false; // replayed duplicate after a reconnect race
    }
    this.lastSeq = event.data.seq;
    switch (event.type) {
      case "tier":
        this.tierBadge = event.data.tier_rank;
        this.awaitingTier = null;
        break;
      case "turn":
        this.turns.push(event.data);
        break;
      case "awaiting_feedback":
        this.awaitingTier = event.data.tier_rank;
        break;
      case "verdict":
        this.verdict = {
          success: event.data.success,
          source: event.data.source,
          stored: event.data.stored,
        };
        this.awaitingTier = null;
        break;
    }
    return true;
  }

  hasDuplicateTurns(): boolean {
    const seen = new Set<string>();
    for (const turn of this.turns) {
      const key = `${turn.tier_rank}:${turn.turn_index}`;
      if (seen.has(key)) return true;
      seen.add(key);
    }
    return false;
  }
}

export interface Dashboard {
  queries: number;
  successes: number;
  totalCostMicrousd: number;
  totalCostUsd: string;
  perRankCalls: Record<string, number>;
}

export class ConsoleViewModel {
  queryId: string | null = null;
  queryText = "";
  apiName = "";
  feed = new TranscriptFeed();
  verdictPending = false;
  verdictPosting = false;
  revealKeys = false;
  dashboard: Dashboard | null = null;
  toasts: Toast[] = [];
  private subscription: Subscription | null = null;

  constructor(private readonly client: ConsoleClient) {}

  get verdictButtonsEnabled(): boolean {
    return this.verdictPending && !this.verdictPosting && this.queryId !== null;
  }

  get storedIndicator(): boolean {
    return this.feed.verdict?.stored === true;
  }

  /** Show a query card and start (or resume) its live transcript. */
  watch(queryId: string, queryText: string, apiName: string): Subscription {
    if (this.queryId !== queryId) {
      this.queryId = queryId;
      this.queryText = queryText;
      this.apiName = apiName;
      this.feed = new TranscriptFeed();
      this.verdictPending = false;
    }
    this.subscription = this.client.subscribeTranscript(
      queryId,
      {
        onEvent: (event) => this.onEvent(event),
        onError: (error) =>
          this.toast("error", `transcript stream dropped: ${String(error)}`),
      },
      this.feed.lastSeq,
    );
    return this.subscription;
  }

  /** Reconnect after a drop, resuming from the last seen seq. */
  reconnect(): Subscription | null {
    if (this.queryId === null) return null;
    return this.watch(this.queryId, this.queryText, this.apiName);
  }

  private onEvent(event: TranscriptEvent): void {
    if (!this.feed.apply(event)) return;
    if (event.type === "awaiting_feedback") {
      this.verdictPending = true;
    } else if (event.type === "verdict") {
      this.verdictPending = false;
      this.toast(
        "info",
        event.data.success
          ? event.data.stored
            ? "verdict recorded: success (solution stored)"
            : "verdict recorded: success"
          : "verdict recorded: failure",
      );
    } else if (event.type === "tier" && event.data.tier_rank > 0) {
      this.verdictPending = false; // escalation in progress
    }
  }

  async postVerdict(success: boolean): Promise<boolean> {
    if (!this.verdictButtonsEnabled || this.queryId === null) {
      return false;
    }
    this.verdictPosting = true;
    try {
      await this.client.postVerdict(this.queryId, success);
      this.verdictPending = false;
      return true;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // stale double-submit: non-destructive, the first decision stands
        this.toast("error", "verdict already recorded");
        this.verdictPending = false;
        return false;
      }
      this.toast("error", `failed to post verdict: ${String(error)}`);
      return false;
    } finally {
      this.verdictPosting = false;
    }
  }

  /**
   * Refresh the dashboard from the metrics endpoint. Values are mirrored
   * as-is: the endpoint is the single source of truth.
   */
  async refreshDashboard(): Promise<Dashboard> {
    const metrics: Metrics = await this.client.metrics();
    this.dashboard = {
      queries: metrics.queries,
      successes: metrics.successes,
      totalCostMicrousd: metrics.total_cost_microusd,
      totalCostUsd: metrics.total_cost_usd,
      perRankCalls: metrics.avg_model_calls_per_rank,
    };
    return this.dashboard;
  }

  stop(): void {
    this.subscription?.abort();
    this.subscription = null;
  }

  private toast(level: Toast["level"], message: string): void {
    this.toasts.push({ level, message });
  }
}
