import { ApiClient } from "./api.js";
import { Outbox } from "./outbox.js";
import { GridView } from "./render.js";
import { AuditSession } from "./session.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const api = new ApiClient(params.get("service") ?? "", params.get("token"));
  const session = new AuditSession(api, new Outbox(window.localStorage),
                                   params.get("auditor") ?? "auditor");
  await session.load();
  await session.flushOutbox();
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  new GridView(root, session, api).start();
}

void boot();
