/** HTML renderers for the console: pure functions from state to markup.
 *
 * Every dynamic value is escaped; scores are printed verbatim with
 * `String(score)` — the page shows exactly the numbers the service sent,
 * never a recomputed or re-rounded value. Interactive elements carry
 * `data-action` attributes that the bootstrap wires via event delegation.
 */

import { REGIONS, type ResultEntry } from "./api.js";
import type { ColumnState, SessionState, SubmittedRating } from "./session.js";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderBanner(state: SessionState): string {
  if (state.banner === null) return "";
  const retry =
    state.phase === "error"
      ? `<button data-action="retry">retry</button>`
      : "";
  return `<div class="banner" role="alert">${escapeHtml(state.banner)}${retry}</div>`;
}

export function renderGallery(state: SessionState): string {
  const page = state.exams;
  if (page === null) {
    return `<p class="muted">loading exams…</p>`;
  }
  if (page.total === 0) {
    return `<p class="empty-state">No exams ingested yet — the corpus is empty.</p>`;
  }
  const cards = page.items
    .map((exam) => {
      const selected = exam.exam_id === state.selectedExamId ? " selected" : "";
      const regions = exam.regions_available
        .map((r) => `<span class="chip">${escapeHtml(r)}</span>`)
        .join("");
      const label = exam.binary_label
        ? `<span class="chip positive">fracture</span>`
        : `<span class="chip">no fracture</span>`;
      return (
        `<button class="exam-card${selected}" data-action="select-exam" ` +
        `data-exam-id="${escapeHtml(exam.exam_id)}">` +
        `<strong>${escapeHtml(exam.exam_id)}</strong>` +
        `<p>${escapeHtml(exam.global_caption)}</p>` +
        `<div>${label}${regions}</div>` +
        `</button>`
      );
    })
    .join("");
  const prevOffset = Math.max(0, page.offset - page.items.length);
  const nextOffset = page.offset + page.items.length;
  const prev =
    page.offset > 0
      ? `<button data-action="page" data-offset="${prevOffset}">previous</button>`
      : "";
  const next =
    nextOffset < page.total
      ? `<button data-action="page" data-offset="${nextOffset}">next</button>`
      : "";
  return (
    `<div class="gallery">${cards}</div>` +
    `<div class="pager">${prev}` +
    `<span>${page.offset + 1}–${page.offset + page.items.length} of ${page.total}</span>` +
    `${next}</div>`
  );
}

export function renderQueryPanel(state: SessionState, canQuery: boolean): string {
  const regionOptions = [
    `<option value=""${state.region === null ? " selected" : ""}>choose a region…</option>`,
    ...REGIONS.map(
      (region) =>
        `<option value="${region}"${state.region === region ? " selected" : ""}>` +
        `${escapeHtml(region.replace("_", " "))}</option>`,
    ),
  ].join("");
  const modes: [SessionState["mode"], string][] = [
    ["single_stage", "single stage"],
    ["two_stage", "two stage"],
    ["side_by_side", "side by side"],
  ];
  const modeButtons = modes
    .map(
      ([mode, label]) =>
        `<button data-action="set-mode" data-mode="${mode}"` +
        `${state.mode === mode ? ' class="active"' : ""}>${label}</button>`,
    )
    .join("");
  const blind =
    `<label><input type="checkbox" data-action="toggle-blinded"` +
    `${state.blinded ? " checked" : ""}/> blinded comparison</label>`;
  const run =
    `<button data-action="run-query"${canQuery ? "" : " disabled"}>` +
    `run retrieval</button>`;
  const selected = state.selectedExamId
    ? `<span class="chip">query: ${escapeHtml(state.selectedExamId)}</span>`
    : `<span class="muted">select an exam from the gallery</span>`;
  return (
    `<div class="query-panel">${selected}` +
    `<select data-action="set-region">${regionOptions}</select>` +
    `<div class="mode-toggle">${modeButtons}</div>` +
    `${blind}${run}</div>`
  );
}

function renderRatingWidget(
  columnId: string,
  entry: ResultEntry,
  ratings: SubmittedRating[],
): string {
  const current = ratings.find(
    (r) => r.columnId === columnId && r.resultExamId === entry.exam_id,
  );
  const buttons = [1, 2, 3, 4, 5]
    .map((score) => {
      const active = current?.score === score ? ' class="active"' : "";
      return (
        `<button data-action="rate" data-column="${escapeHtml(columnId)}" ` +
        `data-result="${escapeHtml(entry.exam_id)}" data-score="${score}"${active}>` +
        `${score}</button>`
      );
    })
    .join("");
  const status =
    current === undefined
      ? ""
      : `<span class="rating-status">${current.status === "pending" ? "saving…" : "saved"}</span>`;
  return (
    `<div class="rating" title="5 = highest relevance">` +
    `${buttons}${status}</div>`
  );
}

function renderResultCard(
  column: ColumnState,
  entry: ResultEntry,
  rank: number,
  ratings: SubmittedRating[],
): string {
  const caption =
    entry.global_caption !== undefined
      ? `<p>${escapeHtml(entry.global_caption)}</p>`
      : "";
  const regionCaption =
    entry.region_caption !== undefined
      ? `<p class="muted">${escapeHtml(entry.region_caption)}</p>`
      : "";
  const regionLabel =
    entry.region_label !== undefined
      ? `<span class="chip">${escapeHtml(entry.region_label)}</span>`
      : "";
  const missing =
    entry.region_available === false
      ? `<span class="chip warn">no region embedding</span>`
      : "";
  const image =
    entry.image_path !== undefined
      ? `<img src="${escapeHtml(entry.image_path)}" alt="${escapeHtml(entry.exam_id)}"/>`
      : "";
  return (
    `<li class="result-card">` +
    `<span class="rank">${rank}</span>` +
    `<strong>${escapeHtml(entry.exam_id)}</strong>` +
    `<span class="score">${String(entry.score)}</span>` +
    `${image}${caption}${regionCaption}` +
    `<div>${regionLabel}${missing}</div>` +
    `${renderRatingWidget(column.columnId, entry, ratings)}` +
    `</li>`
  );
}

export function renderColumn(
  column: ColumnState,
  ratings: SubmittedRating[],
): string {
  const fallback = column.fallbackUsed
    ? `<span class="badge fallback">fell back to global ranking</span>`
    : "";
  const identity =
    column.revealedMode === null
      ? ""
      : `<span class="chip">${escapeHtml(column.revealedMode)}</span>`;
  const cards = column.results
    .map((entry, i) => renderResultCard(column, entry, i + 1, ratings))
    .join("");
  return (
    `<section class="column" data-column="${escapeHtml(column.columnId)}">` +
    `<h2>${escapeHtml(column.label)}${identity}${fallback}</h2>` +
    `<ol>${cards}</ol>` +
    `</section>`
  );
}

export function renderResults(state: SessionState): string {
  if (state.queryPending) {
    return `<p class="muted">querying…</p>`;
  }
  if (state.columns === null) {
    return "";
  }
  const columns = state.columns
    .map((column) => renderColumn(column, state.ratings))
    .join("");
  const reveal = state.canReveal
    ? `<button data-action="reveal">reveal which system is which</button>`
    : "";
  return `<div class="results">${columns}</div>${reveal}`;
}

export function renderSummary(state: SessionState): string {
  const summary = state.summary;
  if (summary === null) {
    return `<button data-action="refresh-summary">load rating summary</button>`;
  }
  const regions = [...REGIONS, "overall"];
  const rows = (["single_stage", "two_stage"] as const)
    .map((mode) => {
      const cells = regions
        .map((region) => {
          const value = summary[mode][region];
          return `<td>${value === null || value === undefined ? "—" : String(value)}</td>`;
        })
        .join("");
      return `<tr><th>${escapeHtml(mode)}</th>${cells}</tr>`;
    })
    .join("");
  const heads = regions
    .map((region) => `<th>${escapeHtml(region.replace("_", " "))}</th>`)
    .join("");
  return (
    `<table class="summary"><thead><tr><th>mean rating</th>${heads}</tr></thead>` +
    `<tbody>${rows}</tbody></table>` +
    `<button data-action="refresh-summary">refresh</button>`
  );
}

export function renderApp(state: SessionState, canQuery: boolean): string {
  return (
    `<header><h1>case retrieval console</h1></header>` +
    renderBanner(state) +
    renderQueryPanel(state, canQuery) +
    renderResults(state) +
    `<details class="summary-panel"><summary>rating summary</summary>` +
    renderSummary(state) +
    `</details>` +
    `<h2>corpus</h2>` +
    renderGallery(state)
  );
}
