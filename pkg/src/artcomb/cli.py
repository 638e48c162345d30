"""Command-line interface: simulate, fit, kernel, predict, diagnose, serve."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .data import load_visits_csv, save_visits_csv
from .drugs import DrugDictionary, parse_regimen
from .fit import fit_model
from .kernel import KernelConfig, history_similarity_matrix, regimen_gram
from .predict import FittedModel, Scenario, predict_scenario
from .sampler import McmcConfig
from .simulate import SimConfig, generate_dataset
from .trees import RegimenHistory


def _load_dictionary(path: str | None) -> DrugDictionary:
    return DrugDictionary.from_csv(path) if path else DrugDictionary.default()


def _mcmc_config(config_path, **overrides) -> McmcConfig:
    doc = {}
    if config_path:
        with open(config_path) as fh:
            doc = json.load(fh)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return McmcConfig.from_json(doc)


@click.group()
def main():
    """Drug-combination effect inference on longitudinal outcomes."""


@main.command()
@click.option("--out", required=True, type=click.Path(), help="output directory")
@click.option("--n", default=60, show_default=True)
@click.option("--q", default=3, show_default=True)
@click.option("--s", default=3, show_default=True)
@click.option("--eta", default=0.5, show_default=True)
@click.option("--rep-threshold", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--dict", "dict_path", type=click.Path(exists=True), default=None)
def simulate(out, n, q, s, eta, rep_threshold, seed, dict_path):
    """Generate a synthetic dataset with known truths."""
    dictionary = _load_dictionary(dict_path)
    cfg = SimConfig(n=n, q=q, s=s, eta_true=eta, rep_threshold=rep_threshold, seed=seed)
    dataset, truth = generate_dataset(cfg, dictionary)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_visits_csv(out_dir / "visits.csv", dataset)
    truth.save(out_dir / "truth.json")
    dictionary.to_csv(out_dir / "dictionary.csv")
    click.echo(
        f"wrote {dataset.n_visits} visits for {dataset.n} individuals "
        f"({truth.r_true} true clusters) to {out_dir}"
    )


@main.command()
@click.option("--visits", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--dict", "dict_path", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file mirroring the sampler config fields")
@click.option("--eta", type=float, default=None)
@click.option("--iters", "n_iter", type=int, default=None)
@click.option("--burn-in", type=int, default=None)
@click.option("--thin", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--baseline", type=click.Choice(["ddcrp_st", "dp_linear", "normal_linear"]),
              default=None)
@click.option("--rep-threshold", default=10, show_default=True)
@click.option("--variance-threshold", default=0.999, show_default=True)
def fit(visits, out, dict_path, config_path, eta, n_iter, burn_in, thin, seed,
        baseline, rep_threshold, variance_threshold):
    """Fit the model to a visits CSV and write a model bundle."""
    dictionary = _load_dictionary(dict_path)
    cfg = _mcmc_config(
        config_path, eta=eta, n_iter=n_iter, burn_in=burn_in, thin=thin,
        seed=seed, baseline_mode=baseline,
    )
    dataset = load_visits_csv(visits, dictionary)
    result = fit_model(dataset, dictionary, cfg, rep_threshold, variance_threshold)
    model = FittedModel(result.chain, result.basis, dictionary, result.histories)
    model.save(out)
    click.echo(
        f"stored {result.chain.n_draws} draws (acceptance: "
        f"permutation {result.chain.acceptance['permutation']:.2f}, "
        f"sigma_omega {result.chain.acceptance['sigma_omega']:.2f}) in {out}"
    )


@main.command()
@click.argument("regimens", nargs=-1)
@click.option("--dict", "dict_path", type=click.Path(exists=True), default=None)
@click.option("--eta", default=0.5, show_default=True)
@click.option("--match-mode", type=click.Choice(["strict", "class_relaxed"]), default="strict")
@click.option("--histories", "as_histories", is_flag=True,
              help="treat each argument as a comma-separated regimen sequence")
@click.option("--visits", "visits_path", type=click.Path(exists=True), default=None,
              help="compute the individual-level history-similarity matrix of a visits CSV")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="write the matrix as CSV instead of printing")
def kernel(regimens, dict_path, eta, match_mode, as_histories, visits_path, out_path):
    """Print the pairwise similarity matrix for regimens or histories."""
    dictionary = _load_dictionary(dict_path)
    cfg = KernelConfig(eta=eta, match_mode=match_mode)
    if visits_path is not None:
        dataset = load_visits_csv(visits_path, dictionary)
        gram = history_similarity_matrix(dataset.histories(), dictionary, cfg)
        header = ",".join(dataset.ids)
        lines = [header] + [",".join(f"{v:.10g}" for v in row) for row in gram]
        text = "\n".join(lines) + "\n"
        if out_path:
            Path(out_path).write_text(text)
            click.echo(f"wrote {gram.shape[0]}x{gram.shape[1]} similarity matrix to {out_path}")
        else:
            click.echo(text, nl=False)
        return
    if not regimens:
        raise click.UsageError("pass regimens, or --visits for a history matrix")
    if as_histories:
        hists = [
            RegimenHistory(
                f"h{k}", tuple(parse_regimen(tok, dictionary) for tok in text.split(","))
            )
            for k, text in enumerate(regimens)
        ]
        gram = history_similarity_matrix(hists, dictionary, cfg)
    else:
        parsed = [parse_regimen(text, dictionary) for text in regimens]
        gram = regimen_gram(parsed, dictionary, cfg)
    click.echo(",".join(regimens))
    for row in gram:
        click.echo(",".join(f"{v:.6f}" for v in row))


@main.command()
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True),
              help="JSON file with covariates, candidate, and history or individual_id")
@click.option("--level", default=0.95, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def predict(model_dir, scenario_path, level, seed, out):
    """Posterior-predictive scores for a hypothetical visit."""
    model = FittedModel.load(model_dir)
    with open(scenario_path) as fh:
        doc = json.load(fh)
    scenario = Scenario(
        covariates=doc["covariates"],
        candidate=doc["candidate"],
        individual_id=doc.get("individual_id"),
        history=doc.get("history"),
        noise=doc.get("noise", "with_omega_eps"),
    )
    prediction = predict_scenario(model, scenario, level=level, seed=seed)
    text = json.dumps(prediction.to_json(), sort_keys=True, indent=1)
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text)


@main.command()
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--level", default=0.95, show_default=True)
def diagnose(model_dir, truth_path, out, level):
    """Write co-clustering, interval, and trace reports for a fitted model."""
    from .diagnostics import save_reports
    from .simulate import GroundTruth

    model = FittedModel.load(model_dir)
    truth = GroundTruth.load(truth_path) if truth_path else None
    summary = save_reports(out, model.chain, truth=truth, level=level)
    click.echo(json.dumps(summary, sort_keys=True, indent=1))


@main.command()
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(), default=None,
              help="directory with the built explorer bundle")
def serve(model_dir, host, port, ui_dir):
    """Serve the prediction API (and the explorer UI when built)."""
    from .service import serve as run_service

    model = FittedModel.load(model_dir)
    if ui_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui_dir = str(bundled) if bundled.is_dir() else None
    run_service(model, host=host, port=port, ui_dir=ui_dir)


if __name__ == "__main__":
    main()
