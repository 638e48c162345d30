// Typed client for the prediction service. Every number shown in the UI
// comes straight out of these response payloads.

export interface DrugEntry {
  code: string;
  class: string;
  name: string;
}

export interface Meta {
  q: number;
  s: number;
  items: string[];
  covariates: string[];
  individuals: string[];
  drugs: DrugEntry[];
  representatives: string[];
  eta: number;
  match_mode: string;
  kernel: string;
  n_draws: number;
  max_candidates: number;
}

export interface RegimenCatalog {
  drugs: DrugEntry[];
  classes: string[];
}

export interface PredictRequest {
  covariates: number[];
  candidate: string;
  individual_id?: string | null;
  history?: string[] | null;
  level: number;
  seed: number;
  noise: "mean_only" | "with_omega_eps";
}

export interface Prediction {
  items: string[];
  mean: number[];
  lower: number[];
  upper: number[];
  level: number;
  n_draws: number;
  noise: string;
}

export interface ApiError {
  status: number;
  body: Record<string, unknown>;
}

export class Client {
  constructor(private readonly base: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await fetch(this.base + path);
    if (!res.ok) {
      throw { status: res.status, body: await res.json() } as ApiError;
    }
    return (await res.json()) as T;
  }

  meta(): Promise<Meta> {
    return this.getJson<Meta>("/api/meta");
  }

  regimens(): Promise<RegimenCatalog> {
    return this.getJson<RegimenCatalog>("/api/regimens");
  }

  async predict(request: PredictRequest): Promise<Prediction> {
    const res = await fetch(this.base + "/api/predict", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!res.ok) {
      throw { status: res.status, body: await res.json() } as ApiError;
    }
    return (await res.json()) as Prediction;
  }
}
