/** Typed client for the wmir HTTP/JSON service.
 *
 * Every method maps to exactly one endpoint; response bodies are passed
 * through untouched so displayed values always equal what the service
 * returned. Errors carry the service's status code and `error` message.
 */

export type RegionName = "distal_radius" | "distal_ulna" | "ulnar_styloid";

export const REGIONS: readonly RegionName[] = [
  "distal_radius",
  "distal_ulna",
  "ulnar_styloid",
];

/** Modes the service accepts in a query request. */
export type ServiceMode = "single_stage" | "two_stage" | "region_only";

/** The two modes the console compares and rates. */
export type RatedMode = "single_stage" | "two_stage";

export interface HealthResponse {
  status: string;
  exams: number;
}

export interface ExamSummary {
  exam_id: string;
  global_caption: string;
  binary_label: boolean;
  region_labels: Record<RegionName, string>;
  regions_available: RegionName[];
  /** Optional pointer to pixels; cards fall back to captions without it. */
  image_path?: string;
}

export interface ExamPage {
  total: number;
  offset: number;
  items: ExamSummary[];
}

export interface QueryRequest {
  exam_id: string;
  mode: ServiceMode;
  region?: RegionName;
  k_global?: number;
  k_final?: number;
}

export interface ResultEntry {
  exam_id: string;
  score: number;
  global_caption?: string;
  binary_label?: boolean;
  region_label?: string;
  region_caption?: string;
  region_available?: boolean;
  image_path?: string;
}

export interface QueryResponse {
  mode: ServiceMode;
  region: RegionName | null;
  fallback_used: boolean;
  stage1: ResultEntry[];
  final: ResultEntry[];
}

export interface RatingPayload {
  query_exam_id: string;
  result_exam_id: string;
  mode: RatedMode;
  score: number;
  rater: string;
  region?: RegionName | null;
}

export interface RatingRecord extends RatingPayload {
  timestamp: string;
}

/** Mean score per region plus "overall"; null where nothing is rated. */
export type ModeSummary = Record<string, number | null>;

export interface RatingsSummary {
  single_stage: ModeSummary;
  two_stage: ModeSummary;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    private readonly baseUrl: string = "",
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (cause) {
      throw new ApiError(0, `service unreachable: ${String(cause)}`);
    }
    const body: unknown = await response.json().catch(() => null);
    if (!response.ok) {
      const message =
        body !== null &&
        typeof body === "object" &&
        typeof (body as { error?: unknown }).error === "string"
          ? (body as { error: string }).error
          : `request failed with status ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  health(): Promise<HealthResponse> {
    return this.request("/api/health");
  }

  listExams(offset = 0, limit = 50): Promise<ExamPage> {
    return this.request(`/api/exams?offset=${offset}&limit=${limit}`);
  }

  query(request: QueryRequest): Promise<QueryResponse> {
    return this.post("/api/query", request);
  }

  submitRating(rating: RatingPayload): Promise<{ stored: RatingRecord }> {
    return this.post("/api/ratings", rating);
  }

  listRatings(): Promise<{ ratings: RatingRecord[] }> {
    return this.request("/api/ratings");
  }

  ratingsSummary(): Promise<RatingsSummary> {
    return this.request("/api/ratings/summary");
  }
}

/** The slice of the client the session layer depends on (stubbable). */
export type ConsoleApi = Pick<
  ApiClient,
  "health" | "listExams" | "query" | "submitRating" | "ratingsSummary"
>;
