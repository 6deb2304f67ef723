/** DOM rendering for the console view model. */

import type { ConsoleViewModel } from "./console.js";
import { maskKeys, segmentContent } from "./format.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderQueryCard(vm: ConsoleViewModel, root: HTMLElement): void {
  root.replaceChildren();
  if (vm.queryId === null) {
    root.append(el("p", "placeholder", "No active query."));
    return;
  }
  const card = el("div", "query-card");
  card.append(el("h2", "query-text", vm.queryText));
  const meta = el("div", "query-meta");
  meta.append(el("span", "api-badge", vm.apiName));
  meta.append(el("span", "tier-badge", `tier ${vm.feed.tierBadge}`));
  if (vm.feed.verdict) {
    meta.append(
      el(
        "span",
        vm.feed.verdict.success ? "verdict-badge success" : "verdict-badge failure",
        vm.feed.verdict.success ? "success" : "failure",
      ),
    );
    if (vm.storedIndicator) {
      meta.append(el("span", "stored-badge", "solution stored"));
    }
  }
  card.append(meta);
  root.append(card);
}

export function renderTranscript(vm: ConsoleViewModel, root: HTMLElement): void {
  root.replaceChildren();
  for (const turn of vm.feed.turns) {
    const bubble = el("div", `bubble role-${turn.role}`);
    bubble.append(el("div", "bubble-role", `${turn.role} · tier ${turn.tier_rank}`));
    for (const segment of segmentContent(turn.content)) {
      if (segment.kind === "code") {
        const pre = el("pre", "code-panel");
        pre.append(el("code", undefined, maskKeys(segment.text, vm.revealKeys)));
        bubble.append(pre);
      } else if (turn.role === "executor") {
        const details = el("details", "executor-output");
        details.append(el("summary", undefined, "execution output"));
        details.append(el("pre", undefined, maskKeys(segment.text, vm.revealKeys)));
        bubble.append(details);
      } else {
        bubble.append(el("p", undefined, maskKeys(segment.text, vm.revealKeys)));
      }
    }
    root.append(bubble);
  }
  root.scrollTop = root.scrollHeight;
}

export function renderVerdictBanner(
  vm: ConsoleViewModel,
  root: HTMLElement,
  onVerdict: (success: boolean) => void,
): void {
  root.replaceChildren();
  const banner = el("div", vm.verdictPending ? "verdict-banner pending" : "verdict-banner");
  banner.append(
    el(
      "span",
      "banner-text",
      vm.verdictPending
        ? `Awaiting your verdict (tier ${vm.feed.awaitingTier ?? vm.feed.tierBadge})`
        : "No verdict pending",
    ),
  );
  const yes = el("button", "verdict-yes", "success");
  const no = el("button", "verdict-no", "failure");
  yes.disabled = no.disabled = !vm.verdictButtonsEnabled;
  yes.onclick = () => onVerdict(true);
  no.onclick = () => onVerdict(false);
  banner.append(yes, no);
  root.append(banner);
}

export function renderDashboard(vm: ConsoleViewModel, root: HTMLElement): void {
  root.replaceChildren();
  const dash = vm.dashboard;
  if (!dash) {
    root.append(el("p", "placeholder", "No metrics yet."));
    return;
  }
  const grid = el("div", "dashboard-grid");
  const cell = (label: string, value: string) => {
    const box = el("div", "stat");
    box.append(el("div", "stat-value", value));
    box.append(el("div", "stat-label", label));
    return box;
  };
  grid.append(cell("queries", String(dash.queries)));
  grid.append(cell("successes", String(dash.successes)));
  grid.append(cell("cost (USD)", dash.totalCostUsd));
  for (const [rank, calls] of Object.entries(dash.perRankCalls)) {
    grid.append(cell(`avg calls · tier ${rank}`, calls.toFixed(2)));
  }
  root.append(grid);
}

export function renderToasts(vm: ConsoleViewModel, root: HTMLElement): void {
  root.replaceChildren();
  for (const toast of vm.toasts.slice(-3)) {
    root.append(el("div", `toast ${toast.level}`, toast.message));
  }
}
