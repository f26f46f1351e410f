// Fixture-driven UI tests: a stubbed fetch serves responses recorded from a
// live server and logs every request, so the assertions cover both what the
// views render and exactly which endpoints the click paths hit.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { ApiClient, type PosPair } from "../src/api.js";
import { App } from "../src/app.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = JSON.parse(readFileSync(join(here, "fixture.json"), "utf-8"));

interface Recorded {
  status: number;
  body: unknown;
}

function makeStub() {
  const log: string[] = [];
  const responses: Record<string, Recorded> = fixture.responses;
  const fetchImpl = async (url: string, init?: RequestInit) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const key = `${method} ${path}`;
    log.push(key);
    const recorded = responses[key];
    if (!recorded) {
      throw new Error(`request outside the recorded fixture: ${key}`);
    }
    return new Response(JSON.stringify(recorded.body), {
      status: recorded.status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { log, fetchImpl };
}

function makeApp() {
  const stub = makeStub();
  const api = new ApiClient("http://api.test", "token", stub.fetchImpl);
  const app = new App(api, () => {}, async () => {});
  return { app, log: stub.log };
}

const docId: string = fixture.documents[0];
const posPairs: PosPair[] =
  fixture.responses[`GET /v1/documents/${docId}/results/pos`].body;

describe("document view", () => {
  it("renders one span per token with the tag class from the pos result", async () => {
    const { app } = makeApp();
    await app.openDocument(docId);
    const spans = [...app.view.matchAll(/<span class="tok tag-([A-Z]+)[^>]*>([^<]*)<\/span>/g)];
    expect(spans.length).toBe(posPairs.length);
    spans.forEach((match, i) => {
      expect(match[1]).toBe(posPairs[i][1]);
      expect(match[2]).toBe(posPairs[i][0]);
    });
  });

  it("issues only the documented GET requests", async () => {
    const { app, log } = makeApp();
    await app.openDocument(docId);
    expect(log).toEqual([
      `GET /v1/documents/${docId}`,
      `GET /v1/documents/${docId}/results/pos`,
    ]);
  });

  it("toggling a tag class highlights exactly its tokens", async () => {
    const { app } = makeApp();
    await app.openDocument(docId);
    expect(app.view).not.toContain(" hl");
    app.toggleTag("NOUN");
    const highlighted = [...app.view.matchAll(/tag-([A-Z]+) hl/g)].map((m) => m[1]);
    const nouns = posPairs.filter(([, tag]) => tag === "NOUN").length;
    expect(highlighted.length).toBe(nouns);
    expect(new Set(highlighted)).toEqual(new Set(["NOUN"]));
    app.toggleTag("NOUN");
    expect(app.view).not.toContain(" hl");
  });

  it("renders legend buttons for all twelve tag classes", async () => {
    const { app } = makeApp();
    await app.openDocument(docId);
    for (const tag of ["NOUN", "VERB", "ADJ", "ADV", "PRON", "DET",
                       "ADP", "NUM", "CONJ", "PRT", "PUNCT", "X"]) {
      expect(app.view).toContain(`data-tag="${tag}"`);
    }
  });
});

describe("search to concordance click-through", () => {
  it("issues exactly the documented GET sequence", async () => {
    const { app, log } = makeApp();

    await app.search("dogs");              // user types a query
    const hit = fixture.responses["GET /v1/search?q=dogs"].body.hits[0];
    await app.openDocument(hit.document);  // user clicks the first hit
    await app.openConcordance("dogs");     // user clicks a token

    expect(log).toEqual([
      "GET /v1/search?q=dogs",
      `GET /v1/documents/${hit.document}`,
      `GET /v1/documents/${hit.document}/results/pos`,
      "GET /v1/concordance?term=dogs&width=5",
    ]);
  });

  it("renders ranked hits and keyword rows", async () => {
    const { app } = makeApp();
    await app.search("dogs");
    const hits = fixture.responses["GET /v1/search?q=dogs"].body.hits;
    for (const hit of hits) {
      expect(app.view).toContain(`data-id="${hit.document}"`);
    }
    await app.openConcordance("dogs");
    const lines =
      fixture.responses["GET /v1/concordance?term=dogs&width=5"].body.lines;
    const kwCells = [...app.view.matchAll(/<td class="kw"/g)];
    expect(kwCells.length).toBe(lines.length);
  });

  it("adjusting the width refetches with the new width", async () => {
    const { app, log } = makeApp();
    await app.openConcordance("dogs");
    await app.setConcordanceWidth(10);
    expect(log).toEqual([
      "GET /v1/concordance?term=dogs&width=5",
      "GET /v1/concordance?term=dogs&width=10",
    ]);
  });
});

describe("empty search", () => {
  it("renders an inline no-results state instead of failing", async () => {
    const stub = makeStub();
    (fixture.responses as any)["GET /v1/search?q=zzznope"] = {
      status: 200,
      body: { query: ["zzznope"], hits: [] },
    };
    const api = new ApiClient("http://api.test", "token", stub.fetchImpl);
    const app = new App(api, () => {}, async () => {});
    await app.search("zzznope");
    expect(app.view).toContain("no results");
    expect(app.view).not.toContain("error");
  });
});

describe("frequency view", () => {
  it("renders top-k bars from the freqdist result", async () => {
    const { app } = makeApp();
    await app.openFrequency(docId, 10);
    const freq = fixture.responses[
      `GET /v1/documents/${docId}/results/freqdist`
    ].body as [string, number][];
    const bars = [...app.view.matchAll(/class="bar-row"/g)];
    expect(bars.length).toBe(Math.min(10, freq.length));
    expect(app.view).toContain(`download raw result`);
    expect(app.rawFrequencyJson()).toBe(JSON.stringify(freq));
  });
});

describe("corpus and upload progress", () => {
  it("lists documents from the corpus detail endpoint", async () => {
    const { app, log } = makeApp();
    await app.openCorpus(fixture.corpus);
    for (const doc of fixture.documents) {
      expect(app.view).toContain(`data-id="${doc}"`);
    }
    expect(log[0]).toBe(`GET /v1/corpora/${fixture.corpus}`);
  });

  it("upload error surfaces the API message", async () => {
    const stub = makeStub();
    (fixture.responses as any)[`POST /v1/corpora/${fixture.corpus}/documents`] = {
      status: 415,
      body: { error: "UnsupportedType", detail: "cannot analyze documents of type 'application/pdf'" },
    };
    const api = new ApiClient("http://api.test", "token", stub.fetchImpl);
    const app = new App(api, () => {}, async () => {});
    await app.openCorpus(fixture.corpus);
    await app.upload([{ name: "x.pdf", body: "%PDF", type: "application/pdf" }]);
    expect(app.view).toContain("415");
    expect(app.view).toContain("UnsupportedType");
  });
});
