/** Browser bootstrap: read service location and session from the query
 * string, creating a session from pasted text when none is given. */

import { ApiClient } from "./api.js";
import { mountApp } from "./app.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? "http://127.0.0.1:8765";
  const client = new ApiClient(base);
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");

  let sessionId = params.get("session");
  if (!sessionId) {
    const seed = window.prompt("Paste the document text to start a session:") ?? "";
    const created = await client.createSession(seed);
    sessionId = created.session_id;
    params.set("session", sessionId);
    window.history.replaceState(null, "", `?${params.toString()}`);
  }
  await mountApp(root, client, sessionId);
}

void boot();
