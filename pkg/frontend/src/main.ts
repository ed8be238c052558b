/** Browser bootstrap: wires the session to the DOM via event delegation. */

import { ApiClient, type RegionName } from "./api.js";
import { renderApp } from "./render.js";
import { QuerySession, type ConsoleMode } from "./session.js";

function start(): void {
  const root = document.getElementById("app");
  if (root === null) throw new Error("missing #app container");

  const rater =
    window.localStorage.getItem("wmir-rater") ??
    window.prompt("rater id", "anonymous") ??
    "anonymous";
  window.localStorage.setItem("wmir-rater", rater);

  const session = new QuerySession(new ApiClient(""), { rater });
  const redraw = (): void => {
    root.innerHTML = renderApp(session.getState(), session.canQuery());
  };
  session.subscribe(redraw);

  root.addEventListener("click", (event) => {
    const target = (event.target as Element).closest("[data-action]");
    if (target === null) return;
    const action = target.getAttribute("data-action");
    switch (action) {
      case "select-exam":
        session.selectExam(target.getAttribute("data-exam-id") ?? "");
        break;
      case "set-mode":
        void session.setMode(
          (target.getAttribute("data-mode") ?? "side_by_side") as ConsoleMode,
        );
        break;
      case "run-query":
        void session.runQuery();
        break;
      case "rate":
        void session.rate(
          target.getAttribute("data-column") ?? "",
          target.getAttribute("data-result") ?? "",
          Number(target.getAttribute("data-score")),
        );
        break;
      case "reveal":
        session.reveal();
        break;
      case "refresh-summary":
        void session.refreshSummary();
        break;
      case "retry":
        void session.loadExams();
        break;
      case "page":
        void session.loadExams(Number(target.getAttribute("data-offset")));
        break;
      default:
        break;
    }
  });

  root.addEventListener("change", (event) => {
    const target = event.target as HTMLElement;
    const action = target.getAttribute("data-action");
    if (action === "set-region") {
      const value = (target as HTMLSelectElement).value;
      void session.selectRegion(value === "" ? null : (value as RegionName));
    } else if (action === "toggle-blinded") {
      session.setBlinded((target as HTMLInputElement).checked);
    }
  });

  redraw();
  void session.loadExams();
}

start();
