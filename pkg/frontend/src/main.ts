/** Page entry point: reads ?campaign= and optional ?service= from the URL
 * and mounts the annotator screen. */

import { CampaignApi } from "./api.js";
import { mountApp } from "./app.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const campaignId = params.get("campaign");
  const base = params.get("service") ?? window.location.origin;
  const root = document.querySelector<HTMLElement>("#app");
  if (!root) throw new Error("host page is missing the #app element");
  if (!campaignId) {
    root.textContent = "Missing ?campaign=<id> in the URL.";
    return;
  }
  await mountApp(root, new CampaignApi(base), campaignId);
}

void boot();
