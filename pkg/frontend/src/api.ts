/**
 * Typed client for the evaluation service.
 *
 * The client also acts as the last line of blinding defence: any list
 * payload carrying origin or model information is rejected outright.
 */

export const CATEGORIES = [
  "form",
  "content",
  "register",
  "repetitive",
  "inappropriate",
  "factual",
] as const;

export type Category = (typeof CATEGORIES)[number];

export type CategoryFlags = Record<Category, boolean>;

export interface ViewItem {
  item_id: string;
  context: string;
  continuation: string;
  position: number;
  total: number;
}

export interface AnnotationPayload {
  item_id: string;
  evaluator_id: string;
  flags: CategoryFlags;
}

export interface ProgressPayload {
  evaluator: string;
  annotated: number;
  list: string | null;
  total: number | null;
}

export interface ReportPayload {
  categories: string[];
  conditions: string[];
  judgment_level: Record<string, Record<string, number>>;
  item_level: Record<string, Record<string, number>>;
  denominators: { judgments: Record<string, number>; items: Record<string, number> };
}

const FORBIDDEN_FIELDS = ["origin", "model_id", "model"];

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** The service already holds an annotation for this (item, evaluator). */
export class DuplicateSubmission extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export function emptyFlags(): CategoryFlags {
  return {
    form: false,
    content: false,
    register: false,
    repetitive: false,
    inappropriate: false,
    factual: false,
  };
}

export function assertBlinded(items: unknown[]): void {
  for (const item of items) {
    const record = item as Record<string, unknown>;
    for (const field of FORBIDDEN_FIELDS) {
      if (field in record) {
        throw new Error(`blinding violation: list payload exposes "${field}"`);
      }
    }
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async fetchList(listId: string): Promise<ViewItem[]> {
    const resp = await this.fetchFn(this.url(`/api/lists/${listId}`));
    if (!resp.ok) {
      throw new ApiError(resp.status, `cannot fetch list ${listId}`);
    }
    const items = (await resp.json()) as ViewItem[];
    assertBlinded(items);
    return items;
  }

  async submit(annotation: AnnotationPayload): Promise<void> {
    const resp = await this.fetchFn(this.url("/api/annotations"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(annotation),
    });
    if (resp.status === 409) {
      throw new DuplicateSubmission(`item ${annotation.item_id} already annotated`);
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, `submission failed with status ${resp.status}`);
    }
  }

  async progress(evaluatorId: string): Promise<ProgressPayload> {
    const resp = await this.fetchFn(this.url(`/api/progress/${evaluatorId}`));
    if (!resp.ok) {
      throw new ApiError(resp.status, "cannot fetch progress");
    }
    return (await resp.json()) as ProgressPayload;
  }

  async report(): Promise<ReportPayload> {
    const resp = await this.fetchFn(this.url("/api/report"));
    if (!resp.ok) {
      throw new ApiError(resp.status, "cannot fetch report");
    }
    return (await resp.json()) as ReportPayload;
  }
}
