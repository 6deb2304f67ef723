import { describe, expect, it } from "vitest";

import { ApiError, type ConsoleClient } from "../src/client.js";
import { ConsoleViewModel, TranscriptFeed } from "../src/console.js";
import { KEY_MASK, maskKeys, segmentContent } from "../src/format.js";
import type { Metrics, TranscriptEvent } from "../src/types.js";

function turn(seq: number, turnIndex: number, role = "assistant", tier = 0): TranscriptEvent {
  return {
    type: "turn",
    data: {
      query_id: "q1",
      tier_rank: tier,
      turn_index: turnIndex,
      role: role as "user" | "assistant" | "executor",
      content: `message ${turnIndex}`,
      seq,
    },
  };
}

describe("TranscriptFeed", () => {
  it("applies events in order and tracks the tier badge", () => {
    const feed = new TranscriptFeed();
    feed.apply({ type: "tier", data: { query_id: "q1", tier_rank: 0, seq: 0 } });
    feed.apply(turn(1, 0, "user"));
    feed.apply(turn(2, 1, "assistant"));
    feed.apply({ type: "tier", data: { query_id: "q1", tier_rank: 1, seq: 3 } });
    expect(feed.tierBadge).toBe(1);
    expect(feed.turns).toHaveLength(2);
  });

  it("drops replayed events by seq so reconnects cannot duplicate turns", () => {
    const feed = new TranscriptFeed();
    feed.apply(turn(0, 0));
    feed.apply(turn(1, 1));
    // reconnect replays the same events
    expect(feed.apply(turn(0, 0))).toBe(false);
    expect(feed.apply(turn(1, 1))).toBe(false);
    feed.apply(turn(2, 2));
    expect(feed.turns).toHaveLength(3);
    expect(feed.hasDuplicateTurns()).toBe(false);
  });

  it("records verdicts with the stored indicator", () => {
    const feed = new TranscriptFeed();
    feed.apply({
      type: "verdict",
      data: { query_id: "q1", success: true, source: "human", stored: true, cost_microusd: 10, seq: 0 },
    });
    expect(feed.verdict).toEqual({ success: true, source: "human", stored: true });
  });
});

function fakeClient(overrides: Partial<Record<keyof ConsoleClient, unknown>> = {}): ConsoleClient {
  const metrics: Metrics = {
    queries: 2,
    successes: 1,
    success_rate: 50,
    total_cost_microusd: 1234,
    total_cost_usd: "0.001234",
    avg_model_calls_per_rank: { "0": 2.5 },
    total_runtime_s: 1,
    curves: [[1, 1, 600], [2, 1, 1234]],
  };
  return {
    submitQuery: async () => ({ query_id: "q1", position: 0 }),
    queryStatus: async () => ({ query_id: "q1", state: "running", query: "x" }),
    pending: async () => ({ query_id: null, tier_rank: null }),
    metrics: async () => metrics,
    storeRecords: async () => [],
    postVerdict: async () => undefined,
    subscribeTranscript: () => ({ abort: () => undefined, done: Promise.resolve() }),
    ...overrides,
  } as unknown as ConsoleClient;
}

describe("ConsoleViewModel", () => {
  it("enables verdict buttons only while a decision is pending", async () => {
    const vm = new ConsoleViewModel(fakeClient());
    vm.watch("q1", "a question", "weather");
    expect(vm.verdictButtonsEnabled).toBe(false);

    vm["onEvent"]({ type: "awaiting_feedback", data: { query_id: "q1", tier_rank: 0, seq: 0 } });
    expect(vm.verdictButtonsEnabled).toBe(true);

    await vm.postVerdict(true);
    expect(vm.verdictButtonsEnabled).toBe(false);
  });

  it("escalation disables the buttons until the next pending event", () => {
    const vm = new ConsoleViewModel(fakeClient());
    vm.watch("q1", "a question", "weather");
    vm["onEvent"]({ type: "awaiting_feedback", data: { query_id: "q1", tier_rank: 0, seq: 0 } });
    expect(vm.verdictButtonsEnabled).toBe(true);
    vm["onEvent"]({ type: "tier", data: { query_id: "q1", tier_rank: 1, seq: 1 } });
    expect(vm.verdictButtonsEnabled).toBe(false);
    expect(vm.feed.tierBadge).toBe(1);
    vm["onEvent"]({ type: "awaiting_feedback", data: { query_id: "q1", tier_rank: 1, seq: 2 } });
    expect(vm.verdictButtonsEnabled).toBe(true);
  });

  it("treats a 409 double-submit as a non-destructive toast", async () => {
    const client = fakeClient({
      postVerdict: async () => {
        throw new ApiError(409, "no verdict pending for this query");
      },
    });
    const vm = new ConsoleViewModel(client);
    vm.watch("q1", "q", "weather");
    vm["onEvent"]({ type: "awaiting_feedback", data: { query_id: "q1", tier_rank: 0, seq: 0 } });
    const ok = await vm.postVerdict(true);
    expect(ok).toBe(false);
    expect(vm.toasts.at(-1)?.level).toBe("error");
    expect(vm.verdictButtonsEnabled).toBe(false);
  });

  it("ignores clicks while buttons are disabled", async () => {
    let posts = 0;
    const client = fakeClient({
      postVerdict: async () => {
        posts += 1;
      },
    });
    const vm = new ConsoleViewModel(client);
    vm.watch("q1", "q", "weather");
    expect(await vm.postVerdict(true)).toBe(false);
    expect(posts).toBe(0);
  });

  it("mirrors the metrics endpoint verbatim into the dashboard", async () => {
    const vm = new ConsoleViewModel(fakeClient());
    const dash = await vm.refreshDashboard();
    expect(dash.queries).toBe(2);
    expect(dash.successes).toBe(1);
    expect(dash.totalCostMicrousd).toBe(1234);
    expect(dash.totalCostUsd).toBe("0.001234");
    expect(dash.perRankCalls).toEqual({ "0": 2.5 });
  });
});

describe("content formatting", () => {
  it("splits fenced code into distinct panels", () => {
    const segments = segmentContent("look:\n```python\nprint(1)\n```\ndone");
    expect(segments).toEqual([
      { kind: "text", text: "look:" },
      { kind: "code", text: "print(1)" },
      { kind: "text", text: "done" },
    ]);
  });

  it("handles unterminated fences", () => {
    const segments = segmentContent("```py\nx = 1");
    expect(segments).toEqual([{ kind: "code", text: "x = 1" }]);
  });

  it("masks fake keys unless revealed", () => {
    const text = "The API key for weather is a1b2c3d4.";
    expect(maskKeys(text, false)).toBe(`The API key for weather is ${KEY_MASK}.`);
    expect(maskKeys(text, true)).toBe(text);
  });

  it("leaves non-key hex alone", () => {
    expect(maskKeys("deadbeef99 is too long", false)).toBe("deadbeef99 is too long");
  });
});
