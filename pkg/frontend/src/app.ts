// View controller: holds the current state, talks to the API client, and
// re-renders on every transition. No DOM access here; main.ts owns that.

import {
  ApiClient,
  ApiError,
  type CorpusDetail,
  type DocumentMeta,
  type FreqEntry,
  type PosPair,
} from "./api.js";
import {
  renderConcordanceView,
  renderCorpora,
  renderCorpusView,
  renderDocumentView,
  renderError,
  renderFrequencyView,
  renderSearchView,
  renderShell,
  type UploadProgress,
} from "./render.js";

const POLL_MS = 2000;

type Sleeper = (ms: number) => Promise<void>;

const realSleep: Sleeper = (ms) => new Promise((r) => setTimeout(r, ms));

export class App {
  view = "";
  activeTags = new Set<string>();
  currentCorpus: CorpusDetail | null = null;
  currentDocument: DocumentMeta | null = null;
  currentPos: PosPair[] = [];
  currentFreq: FreqEntry[] = [];
  freqK = 25;
  lastConcordanceTerm = "";
  concordanceWidth = 5;
  uploads: UploadProgress[] = [];

  constructor(
    private api: ApiClient,
    private onChange: (html: string) => void = () => {},
    private sleep: Sleeper = realSleep,
  ) {}

  private show(content: string): void {
    this.view = renderShell(content);
    this.onChange(this.view);
  }

  private async guard(action: () => Promise<void>): Promise<void> {
    try {
      await action();
    } catch (err) {
      if (err instanceof ApiError) {
        this.show(renderError(`${err.status} ${err.message}`));
      } else {
        this.show(renderError(String(err)));
      }
    }
  }

  async home(): Promise<void> {
    await this.guard(async () => {
      const corpora = await this.api.listCorpora();
      this.show(renderCorpora(corpora));
    });
  }

  async createCorpus(name: string): Promise<void> {
    await this.guard(async () => {
      const created = await this.api.createCorpus(name);
      await this.openCorpus(created.id);
    });
  }

  async openCorpus(id: string): Promise<void> {
    await this.guard(async () => {
      const corpus = await this.api.getCorpus(id);
      const documents = await Promise.all(
        corpus.documents.map((d) => this.api.getDocument(d)),
      );
      this.currentCorpus = corpus;
      this.show(renderCorpusView(corpus, documents, this.uploads));
    });
  }

  async upload(files: { name: string; body: BodyInit; type?: string }[]): Promise<void> {
    const corpus = this.currentCorpus;
    if (!corpus) return;
    await this.guard(async () => {
      this.uploads = [];
      for (const file of files) {
        const reply = await this.api.uploadDocument(
          corpus.id,
          file.name,
          file.body,
          file.type,
        );
        this.uploads.push({
          filename: file.name,
          run: reply.run,
          document: reply.document_id,
          report: null,
        });
      }
      await this.pollUploads();
    });
  }

  // Poll run reports every couple of seconds until every upload settles.
  private async pollUploads(): Promise<void> {
    while (this.uploads.some((u) => !u.report || !u.report.finished)) {
      for (const upload of this.uploads) {
        if (!upload.report || !upload.report.finished) {
          upload.report = await this.api.getRun(upload.run);
        }
      }
      if (this.currentCorpus) {
        await this.openCorpus(this.currentCorpus.id);
      }
      if (this.uploads.some((u) => !u.report || !u.report.finished)) {
        await this.sleep(POLL_MS);
      }
    }
  }

  async openDocument(id: string): Promise<void> {
    await this.guard(async () => {
      const meta = await this.api.getDocument(id);
      const pos = await this.api.getResult(id, "pos");
      this.currentDocument = meta;
      if (pos.status === "pending") {
        this.show(
          renderError(`part-of-speech tags still computing (${pos.state})`),
        );
        return;
      }
      this.currentPos = pos.value as PosPair[];
      this.show(renderDocumentView(meta, this.currentPos, this.activeTags));
    });
  }

  toggleTag(tag: string): void {
    if (this.activeTags.has(tag)) {
      this.activeTags.delete(tag);
    } else {
      this.activeTags.add(tag);
    }
    if (this.currentDocument) {
      this.show(
        renderDocumentView(this.currentDocument, this.currentPos, this.activeTags),
      );
    }
  }

  async openFrequency(id: string, k?: number): Promise<void> {
    await this.guard(async () => {
      if (k !== undefined) this.freqK = k;
      const meta = await this.api.getDocument(id);
      const result = await this.api.getResult(id, "freqdist");
      if (result.status === "pending") {
        this.show(renderError(`frequencies still computing (${result.state})`));
        return;
      }
      this.currentDocument = meta;
      this.currentFreq = result.value as FreqEntry[];
      this.show(renderFrequencyView(meta, this.currentFreq, this.freqK));
    });
  }

  setFrequencyK(k: number): void {
    this.freqK = k;
    if (this.currentDocument) {
      this.show(
        renderFrequencyView(this.currentDocument, this.currentFreq, this.freqK),
      );
    }
  }

  rawFrequencyJson(): string {
    return JSON.stringify(this.currentFreq);
  }

  async search(query: string): Promise<void> {
    const terms = query.split(/\s+/).filter((t) => t.length > 0);
    if (!terms.length) return;
    await this.guard(async () => {
      const reply = await this.api.search(terms);
      this.show(renderSearchView(reply));
    });
  }

  async openConcordance(term: string, width?: number): Promise<void> {
    if (width !== undefined) this.concordanceWidth = width;
    this.lastConcordanceTerm = term;
    await this.guard(async () => {
      const reply = await this.api.concordance(term, this.concordanceWidth);
      this.show(renderConcordanceView(reply));
    });
  }

  async setConcordanceWidth(width: number): Promise<void> {
    if (this.lastConcordanceTerm) {
      await this.openConcordance(this.lastConcordanceTerm, width);
    }
  }
}
