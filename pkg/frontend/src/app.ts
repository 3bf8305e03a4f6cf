/**
 * Single-page annotator. Identity comes from the URL:
 *   index.html?evaluator=<id>&list=<A|B>[&api=<base url>]
 */

import { ApiClient, CATEGORIES, type Category } from "./api.js";
import { CATEGORY_HELP, CATEGORY_LABELS } from "./categories.js";
import { FlagForm } from "./form.js";
import { AnnotationSession } from "./session.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function must<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const evaluator = params.get("evaluator");
  const listId = params.get("list");
  const root = must<HTMLDivElement>("app");
  if (!evaluator || !listId) {
    root.textContent =
      "Missing session parameters: open the link you received, e.g. ?evaluator=e1&list=A";
    return;
  }

  const client = new ApiClient(params.get("api") ?? "");
  const session = new AnnotationSession(client, listId, evaluator, window.localStorage);
  const form = new FlagForm();

  try {
    await session.load();
  } catch (err) {
    root.textContent = `Cannot reach the evaluation service: ${String(err)}`;
    const retry = el("button", "primary", "Retry");
    retry.addEventListener("click", () => window.location.reload());
    root.append(el("div"), retry);
    return;
  }

  const banner = el("div", "banner hidden");
  const progress = el("div", "progress");
  const contextPane = el("div", "pane context");
  const continuationPane = el("div", "pane continuation");
  const formPane = el("div", "form");
  root.replaceChildren(banner, progress, contextPane, continuationPane, formPane);

  function showBanner(text: string, kind: "info" | "error"): void {
    banner.textContent = text;
    banner.className = `banner ${kind}`;
  }

  function hideBanner(): void {
    banner.className = "banner hidden";
  }

  function renderDone(): void {
    progress.textContent = "";
    contextPane.textContent = "";
    continuationPane.textContent = "";
    formPane.replaceChildren(
      el("h2", undefined, "All items annotated"),
      el("p", undefined, `Thank you, ${evaluator}. You can close this window.`),
    );
  }

  function render(): void {
    const item = session.current();
    if (!item) {
      renderDone();
      return;
    }
    progress.textContent = `Item ${session.progressLabel()}`;

    contextPane.replaceChildren(el("h3", undefined, "Context"),
                                el("p", undefined, item.context));
    continuationPane.replaceChildren(
      el("h3", undefined, "Continuation to judge"),
      el("p", undefined, item.continuation),
    );

    const submit = el("button", "primary", "Submit judgment");
    submit.disabled = !form.canSubmit();

    const flagBoxes = new Map<Category, HTMLInputElement>();
    const flagList = el("div", "flags");
    for (const category of CATEGORIES) {
      const row = el("label", "flag-row");
      const box = el("input");
      box.type = "checkbox";
      box.checked = form.flags[category];
      box.addEventListener("change", () => {
        form.toggle(category);
        sync();
      });
      flagBoxes.set(category, box);
      const text = el("span", undefined, CATEGORY_LABELS[category]);
      const help = el("button", "help", "?");
      const helpText = el("div", "help-text hidden", CATEGORY_HELP[category]);
      help.addEventListener("click", (event) => {
        event.preventDefault();
        helpText.classList.toggle("hidden");
      });
      row.append(box, text, help);
      flagList.append(row, helpText);
    }

    const noErrorsRow = el("label", "flag-row no-errors");
    const noErrorsBox = el("input");
    noErrorsBox.type = "checkbox";
    noErrorsBox.checked = form.noErrorsConfirmed;
    noErrorsBox.addEventListener("change", () => {
      form.confirmNoErrors(noErrorsBox.checked);
      sync();
    });
    noErrorsRow.append(noErrorsBox, el("span", undefined, "I confirm: no errors of any kind"));

    function sync(): void {
      for (const category of CATEGORIES) {
        const box = flagBoxes.get(category);
        if (box) box.checked = form.flags[category];
      }
      noErrorsBox.checked = form.noErrorsConfirmed;
      submit.disabled = !form.canSubmit();
    }

    submit.addEventListener("click", async () => {
      submit.disabled = true;
      const outcome = await session.submit(form.snapshot());
      if (outcome === "accepted") {
        hideBanner();
      } else if (outcome === "already-submitted") {
        showBanner("This item was already submitted; moving on.", "info");
      } else {
        showBanner(
          "Offline: your judgment is saved locally and will be retried.",
          "error",
        );
        const retry = el("button", undefined, "Retry now");
        retry.addEventListener("click", async () => {
          if (await session.retryQueued()) {
            hideBanner();
            form.reset();
            render();
          }
        });
        banner.append(el("span", undefined, " "), retry);
        return;
      }
      form.reset();
      render();
    });

    formPane.replaceChildren(flagList, noErrorsRow, submit);
  }

  render();
}

start();
