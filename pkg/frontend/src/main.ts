// Browser bootstrap: login screen, session-stored token, event delegation.

import { ApiClient } from "./api.js";
import { App } from "./app.js";
import { renderLogin } from "./render.js";

const root = document.getElementById("app")!;

function boot(base: string, token: string): void {
  const api = new ApiClient(base, token);
  const app = new App(api, (html) => {
    root.innerHTML = html;
  });

  root.addEventListener("click", (event) => {
    const el = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!el) return;
    event.preventDefault();
    const action = el.dataset.action!;
    switch (action) {
      case "home":
        void app.home();
        break;
      case "logout":
        sessionStorage.removeItem("textpipe_token");
        root.innerHTML = renderLogin();
        break;
      case "open-corpus":
        void app.openCorpus(el.dataset.id!);
        break;
      case "open-doc":
        void app.openDocument(el.dataset.id!);
        break;
      case "open-frequency":
        void app.openFrequency(el.dataset.id!);
        break;
      case "toggle-tag":
        app.toggleTag(el.dataset.tag!);
        break;
      case "set-k":
        app.setFrequencyK(Number(el.dataset.k));
        break;
      case "set-width":
        void app.setConcordanceWidth(Number(el.dataset.width));
        break;
      case "token":
        void app.openConcordance(el.dataset.token!);
        break;
      case "download-freqdist": {
        const blob = new Blob([app.rawFrequencyJson()], {
          type: "application/json",
        });
        const link = document.createElement("a");
        link.href = URL.createObjectURL(blob);
        link.download = "freqdist.json";
        link.click();
        URL.revokeObjectURL(link.href);
        break;
      }
    }
  });

  root.addEventListener("submit", (event) => {
    const form = (event.target as HTMLElement).closest<HTMLFormElement>("[data-form]");
    if (!form) return;
    event.preventDefault();
    const kind = form.dataset.form!;
    const fields = new FormData(form);
    if (kind === "search") {
      void app.search(String(fields.get("q") ?? ""));
    } else if (kind === "create-corpus") {
      const name = String(fields.get("name") ?? "").trim();
      if (name) void app.createCorpus(name);
    } else if (kind === "upload") {
      const input = form.querySelector<HTMLInputElement>("input[type=file]");
      const files = Array.from(input?.files ?? []).map((f) => ({
        name: f.name,
        body: f as BodyInit,
        type: f.type || undefined,
      }));
      if (files.length) void app.upload(files);
    }
  });

  void app.home();
}

function showLogin(): void {
  root.innerHTML = renderLogin();
  root.addEventListener("submit", function handler(event) {
    const form = (event.target as HTMLElement).closest<HTMLFormElement>(
      "[data-form=login]",
    );
    if (!form) return;
    event.preventDefault();
    const fields = new FormData(form);
    const token = String(fields.get("token") ?? "").trim();
    const base = String(fields.get("base") ?? "").trim();
    if (!token || !base) return;
    sessionStorage.setItem("textpipe_token", token);
    sessionStorage.setItem("textpipe_base", base);
    root.removeEventListener("submit", handler);
    boot(base, token);
  });
}

const storedToken = sessionStorage.getItem("textpipe_token");
const storedBase = sessionStorage.getItem("textpipe_base");
if (storedToken && storedBase) {
  boot(storedBase, storedToken);
} else {
  showLogin();
}
