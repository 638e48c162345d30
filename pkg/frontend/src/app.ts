// Explorer wiring: build the form from the served schema, validate inputs
// against the served dictionary, post one prediction per candidate with a
// shared seed, and render the per-item comparison.

import { Client, type ApiError, type Meta, type Prediction } from "./api.js";
import { renderDeltas, renderPanels, type CandidateSeries } from "./charts.js";
import {
  emptyForm,
  restoreForm,
  requestsFor,
  serializeForm,
  validate,
  type FormState,
} from "./state.js";

export interface Explorer {
  form: FormState;
  meta: Meta;
  submit(): Promise<void>;
  saveReplay(): string;
  loadReplay(text: string): void;
  refresh(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text) node.textContent = text;
  return node;
}

export async function startExplorer(root: HTMLElement, client: Client): Promise<Explorer> {
  root.textContent = "";
  let meta: Meta;
  let codes: Set<string>;
  try {
    meta = await client.meta();
    const catalog = await client.regimens();
    codes = new Set(catalog.drugs.map((d) => d.code));
  } catch {
    const banner = el("div", { class: "banner error", id: "connectivity" },
      "prediction service unreachable; the form is disabled");
    root.appendChild(banner);
    throw new Error("service unreachable");
  }

  const form = emptyForm(meta);

  const formBox = el("form", { id: "scenario-form" });
  formBox.addEventListener("submit", (ev) => ev.preventDefault());

  // covariate inputs from the served schema
  const covBox = el("fieldset", { class: "covariates" });
  covBox.appendChild(el("legend", {}, "covariates"));
  for (const name of meta.covariates) {
    const label = el("label", {}, name + " ");
    const input = el("input", {
      type: "text",
      name: `cov-${name}`,
      value: form.covariates[name] ?? "",
    });
    input.addEventListener("input", () => {
      form.covariates[name] = input.value;
      refresh();
    });
    label.appendChild(input);
    covBox.appendChild(label);
  }
  formBox.appendChild(covBox);

  // history editor
  const histBox = el("fieldset", { class: "history" });
  histBox.appendChild(el("legend", {}, "regimen history (episodes in order)"));
  const histList = el("ol", { id: "history-list" });
  histBox.appendChild(histList);
  const histInput = el("input", { type: "text", id: "history-input", placeholder: "AZT+LAM" });
  const histAdd = el("button", { type: "button", id: "history-add" }, "add episode");
  histAdd.addEventListener("click", () => {
    if (histInput.value.trim()) {
      form.history.push(histInput.value.trim());
      histInput.value = "";
      refresh();
    }
  });
  histBox.appendChild(histInput);
  histBox.appendChild(histAdd);
  formBox.appendChild(histBox);

  // candidate picker, capped by the served maximum
  const candBox = el("fieldset", { class: "candidates" });
  candBox.appendChild(el("legend", {}, `candidate regimens (up to ${meta.max_candidates})`));
  if (codes.size === 0) {
    candBox.appendChild(
      el("p", { id: "empty-dictionary", class: "problems" },
        "the service dictionary is empty; regimen entry is disabled"),
    );
  }
  const candList = el("ul", { id: "candidate-list" });
  candBox.appendChild(candList);
  const candInput = el("input", { type: "text", id: "candidate-input", placeholder: "FTC+TDF+EFV" });
  const candAdd = el("button", { type: "button", id: "candidate-add" }, "add candidate");
  if (codes.size === 0) {
    candInput.setAttribute("disabled", "");
    candAdd.setAttribute("disabled", "");
  }
  candAdd.addEventListener("click", () => {
    if (candInput.value.trim() && form.candidates.length < meta.max_candidates) {
      form.candidates.push(candInput.value.trim());
      candInput.value = "";
      refresh();
    }
  });
  candBox.appendChild(candInput);
  candBox.appendChild(candAdd);
  formBox.appendChild(candBox);

  // level and seed
  const optBox = el("fieldset", { class: "options" });
  optBox.appendChild(el("legend", {}, "interval and replay"));
  const levelInput = el("input", { type: "text", id: "level-input", value: String(form.level) });
  levelInput.addEventListener("input", () => {
    form.level = Number(levelInput.value);
    refresh();
  });
  const seedInput = el("input", { type: "text", id: "seed-input", value: String(form.seed) });
  seedInput.addEventListener("input", () => {
    form.seed = Number(seedInput.value);
    refresh();
  });
  const levelLabel = el("label", {}, "level ");
  levelLabel.appendChild(levelInput);
  const seedLabel = el("label", {}, "seed ");
  seedLabel.appendChild(seedInput);
  optBox.appendChild(levelLabel);
  optBox.appendChild(seedLabel);
  formBox.appendChild(optBox);

  const submitButton = el("button", { type: "button", id: "submit" }, "compare");
  formBox.appendChild(submitButton);
  const problemsBox = el("div", { id: "problems", class: "problems" });
  formBox.appendChild(problemsBox);
  root.appendChild(formBox);

  const chartBox = el("div", { id: "panels" });
  const deltaBox = el("div", { id: "deltas" });
  const chipBox = el("div", { id: "error-chips" });
  root.appendChild(chipBox);
  root.appendChild(chartBox);
  root.appendChild(deltaBox);

  function refresh(): void {
    histList.textContent = "";
    form.history.forEach((episode, idx) => {
      const item = el("li", {}, episode + " ");
      const drop = el("button", { type: "button", "data-episode": String(idx) }, "remove");
      drop.addEventListener("click", () => {
        form.history.splice(idx, 1);
        refresh();
      });
      item.appendChild(drop);
      histList.appendChild(item);
    });
    candList.textContent = "";
    form.candidates.forEach((candidate, idx) => {
      const item = el("li", {}, candidate + " ");
      const drop = el("button", { type: "button", "data-candidate": String(idx) }, "remove");
      drop.addEventListener("click", () => {
        form.candidates.splice(idx, 1);
        refresh();
      });
      item.appendChild(drop);
      candList.appendChild(item);
    });
    const state = validate(form, meta, codes);
    submitButton.toggleAttribute("disabled", !state.ok);
    problemsBox.textContent = state.problems.join("; ");
  }

  async function submit(): Promise<void> {
    const state = validate(form, meta, codes);
    if (!state.ok) return;
    chipBox.textContent = "";
    const requests = requestsFor(form, meta);
    const settled = await Promise.allSettled(
      requests.map((request) => client.predict(request)),
    );
    const series: CandidateSeries[] = [];
    settled.forEach((result, idx) => {
      const candidate = form.candidates[idx];
      if (result.status === "fulfilled") {
        series.push({ candidate, prediction: result.value as Prediction });
      } else {
        const err = result.reason as ApiError;
        const chip = el("span", { class: "chip error", "data-candidate": candidate });
        const body = err && err.body ? JSON.stringify(err.body) : "request failed";
        chip.textContent = `${candidate}: ${err?.status ?? "?"} ${body}`;
        chipBox.appendChild(chip);
      }
    });
    renderPanels(chartBox, series);
    renderDeltas(deltaBox, series);
  }

  submitButton.addEventListener("click", () => void submit());
  refresh();

  return {
    form,
    meta,
    submit,
    refresh,
    saveReplay: () => serializeForm(form),
    loadReplay: (text: string) => {
      const restored = restoreForm(text);
      Object.assign(form, restored);
      refresh();
    },
  };
}
