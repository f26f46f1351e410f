// Pure HTML renderers. Everything here is a function from fetched API data
// to a string, so views can be tested without a browser.

import type {
  ConcordanceReply,
  CorpusDetail,
  CorpusSummary,
  DocumentMeta,
  FreqEntry,
  PosPair,
  RunReport,
  SearchReply,
} from "./api.js";

export const POS_TAGS = [
  "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET",
  "ADP", "NUM", "CONJ", "PRT", "PUNCT", "X",
];

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function attr(text: string): string {
  return escapeHtml(text);
}

export function renderLogin(message = ""): string {
  return `
<section class="login">
  <h1>textpipe</h1>
  <p>Paste an API token to explore your corpora.</p>
  ${message ? `<p class="error">${escapeHtml(message)}</p>` : ""}
  <form data-form="login">
    <label>API base URL <input name="base" value="http://127.0.0.1:8080"></label>
    <label>Token <input name="token" type="password" autocomplete="off"></label>
    <button type="submit">Enter</button>
  </form>
</section>`;
}

export function renderShell(content: string): string {
  return `
<header class="topbar">
  <span class="brand" data-action="home">textpipe</span>
  <form data-form="search" class="searchbox">
    <input name="q" placeholder="search all corpora…">
    <button type="submit">Search</button>
  </form>
  <button data-action="logout" class="quiet">log out</button>
</header>
<main>${content}</main>`;
}

export function renderCorpora(corpora: CorpusSummary[]): string {
  const rows = corpora
    .map(
      (c) => `
    <li>
      <a data-action="open-corpus" data-id="${attr(c.id)}">${escapeHtml(c.name)}</a>
      <span class="muted">${c.documents} document(s)</span>
    </li>`,
    )
    .join("");
  return `
<section>
  <h2>Corpora</h2>
  <ul class="corpora">${rows || "<li class='muted'>none yet</li>"}</ul>
  <form data-form="create-corpus" class="inline">
    <input name="name" placeholder="new corpus name">
    <button type="submit">Create</button>
  </form>
</section>`;
}

export interface UploadProgress {
  filename: string;
  run: string;
  document: string;
  report: RunReport | null;
}

export function renderRunProgress(upload: UploadProgress): string {
  const report = upload.report;
  if (!report) {
    return `<li>${escapeHtml(upload.filename)} <span class="muted">starting…</span></li>`;
  }
  const done = report.jobs.filter((j) => j.state === "done").length;
  const failed = report.jobs.filter((j) => j.state === "failed").length;
  const label = report.finished
    ? failed
      ? `finished, ${failed} job(s) failed`
      : "ready"
    : `${done}/${report.jobs.length} analyses`;
  const cls = report.finished ? (failed ? "error" : "ok") : "busy";
  const link = report.finished && !failed
    ? `<a data-action="open-doc" data-id="${attr(upload.document)}">open</a>`
    : "";
  return `<li>${escapeHtml(upload.filename)} <span class="${cls}">${label}</span> ${link}</li>`;
}

export function renderCorpusView(
  corpus: CorpusDetail,
  documents: DocumentMeta[],
  uploads: UploadProgress[],
): string {
  const rows = documents
    .map(
      (d) => `
    <li>
      <a data-action="open-doc" data-id="${attr(d.id)}">${escapeHtml(d.filename)}</a>
      <span class="muted">${d.result_keys.length} results</span>
    </li>`,
    )
    .join("");
  const uploading = uploads.map(renderRunProgress).join("");
  return `
<section>
  <h2>${escapeHtml(corpus.name)}</h2>
  <form data-form="upload" class="inline">
    <input type="file" name="files" multiple>
    <button type="submit">Upload</button>
  </form>
  ${uploading ? `<ul class="uploads">${uploading}</ul>` : ""}
  <ul class="documents">${rows || "<li class='muted'>empty corpus</li>"}</ul>
</section>`;
}

function tokenSpan(token: string, tag: string, active: Set<string>): string {
  const highlight = active.has(tag) ? " hl" : "";
  return (
    `<span class="tok tag-${attr(tag)}${highlight}" ` +
    `data-action="token" data-token="${attr(token)}">${escapeHtml(token)}</span>`
  );
}

export function renderDocumentView(
  meta: DocumentMeta,
  pos: PosPair[],
  activeTags: Set<string>,
): string {
  const legend = POS_TAGS.map(
    (tag) =>
      `<button data-action="toggle-tag" data-tag="${tag}" ` +
      `class="legend tag-${tag}${activeTags.has(tag) ? " on" : ""}">${tag}</button>`,
  ).join("");
  const body = pos.map(([token, tag]) => tokenSpan(token, tag, activeTags)).join(" ");
  return `
<section>
  <h2>${escapeHtml(meta.filename)}</h2>
  <p class="muted">uploaded ${escapeHtml(meta.uploaded_at)} ·
    <a data-action="open-frequency" data-id="${attr(meta.id)}">frequencies</a></p>
  <div class="legend-bar">${legend}</div>
  <article class="doc-text">${body || "<span class='muted'>no tokens</span>"}</article>
  <p class="muted">click any token for its concordance</p>
</section>`;
}

export function renderFrequencyView(
  meta: DocumentMeta,
  freqdist: FreqEntry[],
  k: number,
): string {
  const top = freqdist.slice(0, k);
  const max = top.length ? top[0][1] : 1;
  const bars = top
    .map(
      ([token, count]) => `
    <div class="bar-row">
      <span class="bar-label" data-action="token" data-token="${attr(token)}">${escapeHtml(token)}</span>
      <span class="bar" style="width:${Math.max(2, Math.round((count / max) * 100))}%"></span>
      <span class="bar-count">${count}</span>
    </div>`,
    )
    .join("");
  const selector = [10, 25, 50]
    .map(
      (n) =>
        `<button data-action="set-k" data-k="${n}" class="${n === k ? "on" : ""}">top ${n}</button>`,
    )
    .join(" ");
  return `
<section>
  <h2>Frequencies · ${escapeHtml(meta.filename)}</h2>
  <p>${selector}
     <a data-action="download-freqdist" data-id="${attr(meta.id)}">download raw result</a>
     <a data-action="open-doc" data-id="${attr(meta.id)}">back to text</a></p>
  <div class="chart">${bars || "<p class='muted'>no data</p>"}</div>
</section>`;
}

export function renderSearchView(reply: SearchReply): string {
  const rows = reply.hits
    .map(
      (hit) => `
    <li>
      <a data-action="open-doc" data-id="${attr(hit.document)}">${escapeHtml(hit.filename)}</a>
      <span class="muted">score ${hit.score}</span>
    </li>`,
    )
    .join("");
  return `
<section>
  <h2>Search: ${escapeHtml(reply.query.join(" "))}</h2>
  ${rows ? `<ul class="hits">${rows}</ul>` : "<p class='muted'>no results</p>"}
</section>`;
}

export function renderConcordanceView(reply: ConcordanceReply): string {
  const widths = [2, 5, 10, 25]
    .map(
      (w) =>
        `<button data-action="set-width" data-width="${w}" ` +
        `class="${w === reply.width ? "on" : ""}">±${w}</button>`,
    )
    .join(" ");
  const side = (tokens: string[]) =>
    tokens
      .map(
        (t) =>
          `<span data-action="token" data-token="${attr(t)}">${escapeHtml(t)}</span>`,
      )
      .join(" ");
  const rows = reply.lines
    .map(
      (line) => `
    <tr>
      <td class="ctx left">${side(line.left)}</td>
      <td class="kw" data-action="open-doc" data-id="${attr(line.document)}">${escapeHtml(line.keyword)}</td>
      <td class="ctx">${side(line.right)}</td>
    </tr>`,
    )
    .join("");
  return `
<section>
  <h2>Concordance: ${escapeHtml(reply.term)}</h2>
  <p>${widths}</p>
  ${rows
    ? `<table class="kwic"><tbody>${rows}</tbody></table>`
    : "<p class='muted'>no occurrences</p>"}
</section>`;
}

export function renderError(message: string): string {
  return `<section><p class="error">${escapeHtml(message)}</p></section>`;
}
