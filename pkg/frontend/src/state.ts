// Scenario form model: covariate inputs keyed by the served schema, a
// history editor, up to max_candidates candidate regimens, interval level,
// and the seed used for deterministic replay.

import type { Meta, PredictRequest } from "./api.js";

export interface FormState {
  covariates: Record<string, string>;
  history: string[];
  candidates: string[];
  level: number;
  seed: number;
  noise: "mean_only" | "with_omega_eps";
  individualId: string | null;
}

export function emptyForm(meta: Meta): FormState {
  const covariates: Record<string, string> = {};
  for (const name of meta.covariates) {
    covariates[name] = name === meta.covariates[0] ? "1" : "";
  }
  return {
    covariates,
    history: [],
    candidates: [],
    level: 0.95,
    seed: 0,
    noise: "with_omega_eps",
    individualId: null,
  };
}

export function covariateVector(form: FormState, meta: Meta): number[] | null {
  const values: number[] = [];
  for (const name of meta.covariates) {
    const raw = (form.covariates[name] ?? "").trim();
    if (raw === "") return null;
    const parsed = Number(raw);
    if (!Number.isFinite(parsed)) return null;
    values.push(parsed);
  }
  return values;
}

export function validRegimen(text: string, allowedCodes: Set<string>): boolean {
  const tokens = text.split("+").map((t) => t.trim());
  if (tokens.length === 0 || tokens.some((t) => t === "")) return false;
  const seen = new Set<string>();
  for (const tok of tokens) {
    if (!allowedCodes.has(tok) || seen.has(tok)) return false;
    seen.add(tok);
  }
  return true;
}

export interface ValidationReport {
  ok: boolean;
  problems: string[];
}

export function validate(form: FormState, meta: Meta, allowedCodes: Set<string>): ValidationReport {
  const problems: string[] = [];
  if (covariateVector(form, meta) === null) {
    problems.push("every covariate needs a numeric value");
  }
  if (form.candidates.length === 0) {
    problems.push("pick at least one candidate regimen");
  }
  if (form.candidates.length > meta.max_candidates) {
    problems.push(`at most ${meta.max_candidates} candidates`);
  }
  for (const cand of form.candidates) {
    if (!validRegimen(cand, allowedCodes)) problems.push(`invalid candidate: ${cand}`);
  }
  for (const episode of form.history) {
    if (!validRegimen(episode, allowedCodes)) problems.push(`invalid episode: ${episode}`);
  }
  if (form.individualId === null && form.history.length === 0) {
    problems.push("supply a history or pick a known individual");
  }
  if (!(form.level > 0 && form.level < 1)) {
    problems.push("level must be inside (0, 1)");
  }
  if (!Number.isInteger(form.seed)) {
    problems.push("seed must be an integer");
  }
  return { ok: problems.length === 0, problems };
}

export function requestsFor(form: FormState, meta: Meta): PredictRequest[] {
  const covariates = covariateVector(form, meta);
  if (covariates === null) throw new Error("form not valid");
  return form.candidates.map((candidate) => ({
    covariates,
    candidate,
    individual_id: form.individualId,
    history: form.history.length ? form.history : null,
    level: form.level,
    seed: form.seed, // shared across candidates so draws are comparable
    noise: form.noise,
  }));
}

// --- replay -----------------------------------------------------------------

function canonical(value: unknown): string {
  if (Array.isArray(value)) {
    return "[" + value.map(canonical).join(",") + "]";
  }
  if (value !== null && typeof value === "object") {
    const body = Object.keys(value as Record<string, unknown>)
      .sort()
      .map((k) => JSON.stringify(k) + ":" + canonical((value as Record<string, unknown>)[k]))
      .join(",");
    return "{" + body + "}";
  }
  return JSON.stringify(value);
}

export function serializeForm(form: FormState): string {
  return canonical(form);
}

export function restoreForm(text: string): FormState {
  const parsed = JSON.parse(text) as FormState;
  return {
    covariates: { ...parsed.covariates },
    history: [...parsed.history],
    candidates: [...parsed.candidates],
    level: parsed.level,
    seed: parsed.seed,
    noise: parsed.noise,
    individualId: parsed.individualId ?? null,
  };
}
