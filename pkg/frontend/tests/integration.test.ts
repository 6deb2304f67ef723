/**
 * Integration tests against the real service binary (scripted backends,
 * no network beyond localhost). Covers the console feedback loop and
 * dashboard fidelity end to end.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ConsoleClient } from "../src/client.js";
import { ConsoleViewModel } from "../src/console.js";

const HUMAN_CONFIG = (port: number, ledgerPath: string) => `
seed: 0
verdict_mode: human
ledger_path: ${ledgerPath}
flags: {use_hierarchy: true, use_solution_demo: true, use_cot: false}
conversation: {max_turns: 5}
hierarchy:
  - name: cheap
    price_in: "0.5"
    price_out: "1.5"
    context_window: 100000
    backend:
      kind: scripted
      rules:
        - {match: "exit status", respond: "done, I believe. TERMINATE"}
      default: "trying\\n\`\`\`python\\nprint('attempt cheap')\\n\`\`\`"
  - name: strong
    price_in: "10"
    price_out: "30"
    context_window: 100000
    backend:
      kind: scripted
      rules:
        - {match: "exit status", respond: "verified answer. TERMINATE"}
      default: "solving\\n\`\`\`python\\nprint('attempt strong')\\n\`\`\`"
service: {host: 127.0.0.1, port: ${port}}
`;

const AUTONOMOUS_CONFIG = (port: number) => `
seed: 0
verdict_mode: autonomous
flags: {use_hierarchy: true, use_solution_demo: true, use_cot: false}
conversation: {max_turns: 5}
hierarchy:
  - name: solver
    price_in: "0.5"
    price_out: "1.5"
    context_window: 100000
    backend:
      kind: scripted
      rules:
        - {match: "exit status", respond: "there we go TERMINATE"}
      default: "attempt\\n\`\`\`python\\nprint('att')\\n\`\`\`"
judge:
  name: judge
  price_in: "10"
  price_out: "30"
  backend: {kind: scripted, rules: [], default: "yes"}
service: {host: 127.0.0.1, port: ${port}}
`;

interface Service {
  child: ChildProcess;
  base: string;
  dir: string;
}

async function startService(configText: (port: number, ledger: string) => string): Promise<Service> {
  const dir = mkdtempSync(join(tmpdir(), "console-itest-"));
  const port = 9100 + Math.floor(Math.random() * 500);
  const ledgerPath = join(dir, "ledger.jsonl");
  const configPath = join(dir, "run.yaml");
  writeFileSync(configPath, configText(port, ledgerPath));
  const child = spawn(
    "python3",
    ["-m", "codecascade.cli", "serve", "--config", configPath],
    { env: { ...process.env, WEATHER_API_KEY: "real-weather-secret" }, stdio: "ignore" },
  );
  const base = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 20_000;
  for (;;) {
    try {
      const response = await fetch(`${base}/health`);
      if (response.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      child.kill();
      throw new Error("service did not come up");
    }
    await sleep(100);
  }
  return { child, base, dir };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitFor(check: () => Promise<boolean>, timeoutMs = 15_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (await check()) return;
    await sleep(25);
  }
  throw new Error("condition not reached in time");
}

describe("console feedback loop against the live service", () => {
  let service: Service;
  let client: ConsoleClient;

  beforeAll(async () => {
    service = await startService(HUMAN_CONFIG);
    client = new ConsoleClient(service.base);
  }, 30_000);

  afterAll(() => {
    service.child.kill();
  });

  it("gates verdicts, escalates on failure, survives double-submit and reconnect", async () => {
    const vm = new ConsoleViewModel(client);
    const { query_id } = await client.submitQuery(
      "what is the cloud coverage in mumbai",
      "weather",
      "WEATHER_API_KEY",
    );
    const subscription = vm.watch(query_id, "what is the cloud coverage in mumbai", "weather");

    // buttons stay dark until the service asks for a verdict
    expect(vm.verdictButtonsEnabled).toBe(false);
    await waitFor(async () => vm.verdictPending);
    expect(vm.verdictButtonsEnabled).toBe(true);
    expect(vm.feed.tierBadge).toBe(0);

    // drop the stream while the tier-0 verdict is pending; tier-1 turns
    // must arrive over the resumed connection without any duplicates
    const turnsBefore = vm.feed.turns.length;
    subscription.abort();
    await subscription.done;
    const resumed = vm.reconnect();
    expect(resumed).not.toBeNull();

    // failure on a non-final tier visibly escalates: badge increments
    expect(await vm.postVerdict(false)).toBe(true);
    expect(vm.verdictButtonsEnabled).toBe(false);
    await waitFor(async () => vm.feed.tierBadge === 1 && vm.verdictPending);
    expect(vm.verdictButtonsEnabled).toBe(true);
    expect(vm.feed.turns.length).toBeGreaterThan(turnsBefore);

    // success finishes the query; a second click is a stale 409 toast
    expect(await vm.postVerdict(true)).toBe(true);
    await waitFor(async () => vm.feed.verdict !== null);
    expect(vm.feed.verdict?.success).toBe(true);
    expect(vm.storedIndicator).toBe(true);

    vm.verdictPending = true; // simulate a raced second click after decide
    expect(await vm.postVerdict(true)).toBe(false);
    expect(vm.toasts.at(-1)?.message).toContain("already recorded");
    expect(vm.feed.hasDuplicateTurns()).toBe(false);

    // exactly one ledger verdict entry for the query
    await waitFor(async () => (await client.queryStatus(query_id)).state === "done");
    const ledgerLines = readFileSync(join(service.dir, "ledger.jsonl"), "utf-8")
      .trim()
      .split("\n")
      .map((line) => JSON.parse(line) as { event: string; query_id: string });
    const verdicts = ledgerLines.filter(
      (entry) => entry.event === "verdict" && entry.query_id === query_id,
    );
    expect(verdicts).toHaveLength(1);

    vm.stop();
  }, 40_000);

  it("full reconnect from scratch replays without duplicates", async () => {
    const vm = new ConsoleViewModel(client);
    const { query_id } = await client.submitQuery(
      "humidity in osaka",
      "weather",
      "WEATHER_API_KEY",
    );
    vm.watch(query_id, "humidity in osaka", "weather");
    await waitFor(async () => vm.verdictPending);
    await vm.postVerdict(true);
    await waitFor(async () => vm.feed.verdict !== null);

    // a fresh subscription resuming from lastSeq delivers nothing new
    const seqBefore = vm.feed.lastSeq;
    const turnsBefore = vm.feed.turns.length;
    const resumed = vm.reconnect()!;
    await resumed.done;
    expect(vm.feed.lastSeq).toBe(seqBefore);
    expect(vm.feed.turns.length).toBe(turnsBefore);
    expect(vm.feed.hasDuplicateTurns()).toBe(false);
    vm.stop();
  }, 30_000);
});

describe("dashboard fidelity against the live service", () => {
  let service: Service;
  let client: ConsoleClient;

  beforeAll(async () => {
    service = await startService((port) => AUTONOMOUS_CONFIG(port));
    client = new ConsoleClient(service.base);
  }, 30_000);

  afterAll(() => {
    service.child.kill();
  });

  it("mirrors the metrics endpoint at every refresh across a 20-query run", async () => {
    const vm = new ConsoleViewModel(client);
    for (let i = 0; i < 20; i++) {
      const { query_id } = await client.submitQuery(
        `scripted question ${i}`,
        "weather",
        "WEATHER_API_KEY",
      );
      await waitFor(async () => (await client.queryStatus(query_id)).state === "done");

      const dash = await vm.refreshDashboard();
      const metrics = await client.metrics(); // independent fetch
      expect(dash.queries).toBe(metrics.queries);
      expect(dash.queries).toBe(i + 1);
      expect(dash.successes).toBe(metrics.successes);
      expect(dash.totalCostMicrousd).toBe(metrics.total_cost_microusd);
      expect(dash.totalCostUsd).toBe(metrics.total_cost_usd);
      expect(dash.perRankCalls).toEqual(metrics.avg_model_calls_per_rank);
    }
  }, 60_000);
});
