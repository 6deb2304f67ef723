/** Browser entry point: wires the view model to the page. */

import { ConsoleClient } from "./client.js";
import { ConsoleViewModel } from "./console.js";
import {
  renderDashboard,
  renderQueryCard,
  renderToasts,
  renderTranscript,
  renderVerdictBanner,
} from "./dom.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "http://127.0.0.1:8765";

const client = new ConsoleClient(baseUrl);
const vm = new ConsoleViewModel(client);

const queryCard = document.getElementById("query-card")!;
const transcript = document.getElementById("transcript")!;
const banner = document.getElementById("verdict-banner")!;
const dashboard = document.getElementById("dashboard")!;
const toasts = document.getElementById("toasts")!;
const revealToggle = document.getElementById("reveal-keys") as HTMLInputElement;

function render(): void {
  renderQueryCard(vm, queryCard);
  renderTranscript(vm, transcript);
  renderVerdictBanner(vm, banner, (success) => {
    void vm.postVerdict(success).then(render);
  });
  renderDashboard(vm, dashboard);
  renderToasts(vm, toasts);
}

revealToggle.onchange = () => {
  vm.revealKeys = revealToggle.checked;
  render();
};

async function followActiveQuery(): Promise<void> {
  const pending = await client.pending();
  const active = pending.query_id;
  if (active && active !== vm.queryId) {
    const status = await client.queryStatus(active);
    vm.stop();
    const sub = vm.watch(active, status.query, "");
    render();
    void sub.done.then(render);
  }
  render();
}

// dashboard polls independently of the transcript subscription
setInterval(() => {
  void vm.refreshDashboard().then(render);
}, 2000);
setInterval(() => {
  void followActiveQuery();
}, 1000);
void followActiveQuery();
