// Typed client for the textpipe REST API. Every view in the UI is fed
// exclusively through this module, so the fixture tests can stub fetch and
// watch exactly which endpoints get hit.

export interface CorpusSummary {
  id: string;
  name: string;
  created_at: string;
  documents: number;
}

export interface CorpusDetail {
  id: string;
  name: string;
  created_at: string;
  documents: string[];
}

export interface DocumentMeta {
  id: string;
  corpus: string;
  filename: string;
  declared_type: string | null;
  uploaded_at: string;
  size: number;
  result_keys: string[];
}

export type PosPair = [token: string, tag: string];
export type FreqEntry = [token: string, count: number];

export interface RunJob {
  worker: string;
  document: string;
  state: string;
  attempts: number;
}

export interface RunReport {
  run: string;
  jobs: RunJob[];
  finished: boolean;
}

export interface SearchHit {
  document: string;
  score: number;
  filename: string;
  corpus: string;
}

export interface SearchReply {
  query: string[];
  hits: SearchHit[];
}

export interface ConcordanceLine {
  document: string;
  position: number;
  left: string[];
  keyword: string;
  right: string[];
}

export interface ConcordanceReply {
  term: string;
  width: number;
  lines: ConcordanceLine[];
}

export interface UploadReply {
  document_id: string;
  run: string;
}

export type ResultState =
  | { status: "ready"; value: unknown }
  | { status: "pending"; state: string };

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

export class ApiClient {
  constructor(
    private base: string,
    private token: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.base = base.replace(/\/+$/, "");
  }

  private async request(
    method: string,
    path: string,
    body?: BodyInit,
    headers?: Record<string, string>,
  ): Promise<{ status: number; data: any }> {
    const res = await this.fetchImpl(this.base + path, {
      method,
      body,
      headers: { Authorization: `Bearer ${this.token}`, ...(headers ?? {}) },
    });
    const data = res.status === 204 ? null : await res.json();
    if (res.status >= 400) {
      throw new ApiError(
        res.status,
        data?.error ?? "Error",
        data?.detail ?? res.statusText,
      );
    }
    return { status: res.status, data };
  }

  listCorpora(): Promise<CorpusSummary[]> {
    return this.request("GET", "/v1/corpora").then((r) => r.data);
  }

  createCorpus(name: string): Promise<{ id: string; name: string }> {
    return this.request(
      "POST",
      "/v1/corpora",
      JSON.stringify({ name }),
      { "Content-Type": "application/json" },
    ).then((r) => r.data);
  }

  getCorpus(id: string): Promise<CorpusDetail> {
    return this.request("GET", `/v1/corpora/${id}`).then((r) => r.data);
  }

  uploadDocument(
    corpusId: string,
    filename: string,
    bytes: BodyInit,
    contentType?: string,
  ): Promise<UploadReply> {
    const headers: Record<string, string> = { "X-Filename": filename };
    if (contentType) headers["Content-Type"] = contentType;
    return this.request(
      "POST",
      `/v1/corpora/${corpusId}/documents`,
      bytes,
      headers,
    ).then((r) => r.data);
  }

  getDocument(id: string): Promise<DocumentMeta> {
    return this.request("GET", `/v1/documents/${id}`).then((r) => r.data);
  }

  async getResult(id: string, key: string): Promise<ResultState> {
    const { status, data } = await this.request(
      "GET",
      `/v1/documents/${id}/results/${key}`,
    );
    if (status === 202) return { status: "pending", state: data.state };
    return { status: "ready", value: data };
  }

  getRun(id: string): Promise<RunReport> {
    return this.request("GET", `/v1/runs/${id}`).then((r) => r.data);
  }

  search(terms: string[], corpus?: string): Promise<SearchReply> {
    const q = terms.map(encodeURIComponent).join("+");
    const suffix = corpus ? `&corpus=${corpus}` : "";
    return this.request("GET", `/v1/search?q=${q}${suffix}`).then(
      (r) => r.data,
    );
  }

  concordance(
    term: string,
    width: number,
    corpus?: string,
  ): Promise<ConcordanceReply> {
    const suffix = corpus ? `&corpus=${corpus}` : "";
    return this.request(
      "GET",
      `/v1/concordance?term=${encodeURIComponent(term)}&width=${width}${suffix}`,
    ).then((r) => r.data);
  }
}
