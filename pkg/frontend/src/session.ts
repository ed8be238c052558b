/** Client-side state for one clinician query session.
 *
 * Owns exam browsing, region/mode selection, query execution with
 * cancel-on-supersede, blinded side-by-side comparison, and rating
 * submission with optimistic updates. The session never computes or
 * re-orders scores: result entries are stored exactly as the service
 * returned them.
 *
 * Blinding is enforced at the data level: while a side-by-side run is
 * blinded and unrevealed, the public state carries no system identity —
 * columns are labeled A/B and `revealedMode` is null. The true
 * column-to-mode assignment lives only in private fields so submitted
 * ratings still record the real mode.
 */

import {
  ApiError,
  type ConsoleApi,
  type ExamPage,
  type QueryRequest,
  type RatedMode,
  type RatingsSummary,
  type RegionName,
  type ResultEntry,
} from "./api.js";

export type ConsoleMode = "single_stage" | "two_stage" | "side_by_side";

export interface ColumnState {
  columnId: string;
  label: string;
  /** Null while the column's system identity is hidden. */
  revealedMode: RatedMode | null;
  fallbackUsed: boolean;
  region: RegionName | null;
  /** The service's final ranking, verbatim. */
  results: ResultEntry[];
}

export type RatingStatus = "pending" | "saved";

export interface SubmittedRating {
  columnId: string;
  resultExamId: string;
  score: number;
  status: RatingStatus;
}

export interface SessionState {
  phase: "idle" | "loading" | "ready" | "error";
  banner: string | null;
  exams: ExamPage | null;
  selectedExamId: string | null;
  region: RegionName | null;
  mode: ConsoleMode;
  blinded: boolean;
  queryPending: boolean;
  columns: ColumnState[] | null;
  ratings: SubmittedRating[];
  canReveal: boolean;
  revealed: boolean;
  summary: RatingsSummary | null;
}

export interface SessionOptions {
  rater?: string;
  kFinal?: number;
  kGlobal?: number;
  pageSize?: number;
  /** Injectable randomness for the blinded column assignment. */
  random?: () => number;
}

const MODE_LABELS: Record<RatedMode, string> = {
  single_stage: "single stage (global only)",
  two_stage: "two stage (region reranked)",
};

interface InternalColumn {
  columnId: string;
  label: string;
  mode: RatedMode;
  fallbackUsed: boolean;
  region: RegionName | null;
  results: ResultEntry[];
}

export class QuerySession {
  private readonly rater: string;
  private readonly kFinal: number;
  private readonly kGlobal: number;
  private readonly pageSize: number;
  private readonly random: () => number;
  private readonly listeners = new Set<() => void>();

  private phase: SessionState["phase"] = "idle";
  private banner: string | null = null;
  private exams: ExamPage | null = null;
  private selectedExamId: string | null = null;
  private region: RegionName | null = null;
  private mode: ConsoleMode = "side_by_side";
  private blinded = false;
  private queryPending = false;
  private columns: InternalColumn[] | null = null;
  private hidden = false;
  private revealed = false;
  private ratings: SubmittedRating[] = [];
  private summary: RatingsSummary | null = null;
  private generation = 0;
  private browseGeneration = 0;

  constructor(
    private readonly client: ConsoleApi,
    options: SessionOptions = {},
  ) {
    this.rater = options.rater ?? "anonymous";
    this.kFinal = options.kFinal ?? 10;
    this.kGlobal = options.kGlobal ?? 100;
    this.pageSize = options.pageSize ?? 24;
    this.random = options.random ?? Math.random;
  }

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  getState(): SessionState {
    const identityHidden = this.hidden && !this.revealed;
    return {
      phase: this.phase,
      banner: this.banner,
      exams: this.exams,
      selectedExamId: this.selectedExamId,
      region: this.region,
      mode: this.mode,
      blinded: this.blinded,
      queryPending: this.queryPending,
      columns: this.columns
        ? this.columns.map((column) => ({
            columnId: column.columnId,
            label: column.label,
            revealedMode: identityHidden ? null : column.mode,
            fallbackUsed: column.fallbackUsed,
            region: column.region,
            results: column.results,
          }))
        : null,
      ratings: this.ratings.map((rating) => ({ ...rating })),
      canReveal: this.canReveal(),
      revealed: this.revealed,
      summary: this.summary,
    };
  }

  // --- browsing -------------------------------------------------------------

  async loadExams(offset = 0): Promise<void> {
    const generation = ++this.browseGeneration;
    this.phase = "loading";
    this.banner = null;
    this.emit();
    try {
      const page = await this.client.listExams(offset, this.pageSize);
      if (generation !== this.browseGeneration) return;
      this.exams = page;
      this.phase = "ready";
    } catch (error) {
      if (generation !== this.browseGeneration) return;
      this.phase = "error";
      this.banner = messageOf(error);
    }
    this.emit();
  }

  /** Seed the session with a query exam; clears any previous results. */
  selectExam(examId: string): void {
    this.generation += 1;
    this.selectedExamId = examId;
    this.clearResults();
    this.banner = null;
    this.emit();
  }

  // --- query configuration --------------------------------------------------

  selectRegion(region: RegionName | null): Promise<void> {
    this.generation += 1;
    this.region = region;
    return this.refetchOrClear();
  }

  setMode(mode: ConsoleMode): Promise<void> {
    this.generation += 1;
    this.mode = mode;
    return this.refetchOrClear();
  }

  setBlinded(on: boolean): void {
    this.generation += 1;
    this.blinded = on;
    // Assignment happens at query time; stale columns would carry the
    // wrong blinding, so drop them.
    this.clearResults();
    this.emit();
  }

  /** Results are displayed or loading: any selection change re-fetches them. */
  private refetchOrClear(): Promise<void> {
    const resultsWanted = this.columns !== null || this.queryPending;
    if (resultsWanted && this.prerequisiteProblem() === null) {
      return this.runQuery();
    }
    this.clearResults();
    this.emit();
    return Promise.resolve();
  }

  private clearResults(): void {
    this.columns = null;
    this.ratings = [];
    this.hidden = false;
    this.revealed = false;
    // Any in-flight query is superseded and its response will be dropped,
    // so nothing is pending from the caller's point of view.
    this.queryPending = false;
  }

  private prerequisiteProblem(): string | null {
    if (this.selectedExamId === null) {
      return "select a query exam first";
    }
    if (this.mode !== "single_stage" && this.region === null) {
      return "choose a region before running region-conditioned retrieval";
    }
    return null;
  }

  /** True once an exam is selected and the mode's inputs are complete. */
  canQuery(): boolean {
    return this.prerequisiteProblem() === null;
  }

  // --- querying -------------------------------------------------------------

  async runQuery(): Promise<void> {
    const problem = this.prerequisiteProblem();
    if (problem !== null) {
      this.banner = problem;
      this.emit();
      return;
    }
    const generation = ++this.generation;
    this.queryPending = true;
    this.banner = null;
    this.emit();

    const modes: RatedMode[] =
      this.mode === "side_by_side" ? ["single_stage", "two_stage"] : [this.mode];
    const requests: QueryRequest[] = modes.map((mode) => ({
      exam_id: this.selectedExamId as string,
      mode,
      ...(this.region !== null ? { region: this.region } : {}),
      k_global: this.kGlobal,
      k_final: this.kFinal,
    }));

    let responses;
    try {
      responses = await Promise.all(
        requests.map((request) => this.client.query(request)),
      );
    } catch (error) {
      if (generation !== this.generation) return;
      this.queryPending = false;
      this.banner = messageOf(error);
      this.clearResults();
      this.emit();
      return;
    }
    if (generation !== this.generation) return;

    const blind = this.mode === "side_by_side" && this.blinded;
    const order = blind && this.random() < 0.5 ? [1, 0] : [0, 1];
    const columns: InternalColumn[] = [];
    modes.forEach((_, slot) => {
      const pick = blind ? (order[slot] as number) : slot;
      const mode = modes[pick] as RatedMode;
      const response = responses[pick];
      if (response === undefined) return;
      const columnId = blind ? (slot === 0 ? "A" : "B") : mode;
      columns.push({
        columnId,
        label: blind ? `system ${columnId}` : MODE_LABELS[mode],
        mode,
        fallbackUsed: response.fallback_used,
        region: response.region,
        results: response.final,
      });
    });

    this.columns = columns;
    this.ratings = [];
    this.hidden = blind;
    this.revealed = false;
    this.queryPending = false;
    this.emit();
  }

  // --- rating ---------------------------------------------------------------

  async rate(
    columnId: string,
    resultExamId: string,
    score: number,
  ): Promise<void> {
    const column = this.columns?.find((c) => c.columnId === columnId);
    if (column === undefined) {
      this.banner = `no result column '${columnId}' is displayed`;
      this.emit();
      return;
    }
    if (!column.results.some((entry) => entry.exam_id === resultExamId)) {
      this.banner = "only displayed results can be rated";
      this.emit();
      return;
    }
    if (!Number.isInteger(score) || score < 1 || score > 5) {
      this.banner = "rating score must be an integer from 1 to 5";
      this.emit();
      return;
    }

    const entry: SubmittedRating = {
      columnId,
      resultExamId,
      score,
      status: "pending",
    };
    // Same (column, result) replaces the earlier rating, mirroring the
    // service's replace-on-rekey semantics.
    this.ratings = [
      ...this.ratings.filter(
        (r) => !(r.columnId === columnId && r.resultExamId === resultExamId),
      ),
      entry,
    ];
    this.banner = null;
    this.emit();

    try {
      await this.client.submitRating({
        query_exam_id: this.selectedExamId as string,
        result_exam_id: resultExamId,
        mode: column.mode,
        score,
        rater: this.rater,
        region: column.region,
      });
    } catch (error) {
      this.ratings = this.ratings.filter((r) => r !== entry);
      this.banner = messageOf(error);
      this.emit();
      return;
    }
    const stored = this.ratings.find((r) => r === entry);
    if (stored !== undefined) stored.status = "saved";
    this.emit();
  }

  // --- blinding -------------------------------------------------------------

  private canReveal(): boolean {
    if (!this.hidden || this.revealed || this.columns === null) return false;
    return this.columns.every((column) =>
      this.ratings.some(
        (r) => r.columnId === column.columnId && r.status === "saved",
      ),
    );
  }

  reveal(): void {
    if (!this.canReveal()) {
      this.banner = "rate at least one result in each column before revealing";
      this.emit();
      return;
    }
    this.revealed = true;
    this.banner = null;
    this.emit();
  }

  // --- ratings summary ------------------------------------------------------

  async refreshSummary(): Promise<void> {
    try {
      this.summary = await this.client.ratingsSummary();
      this.emit();
    } catch (error) {
      this.banner = messageOf(error);
      this.emit();
    }
  }
}

function messageOf(error: unknown): string {
  if (error instanceof ApiError) return error.message;
  if (error instanceof Error) return error.message;
  return String(error);
}
