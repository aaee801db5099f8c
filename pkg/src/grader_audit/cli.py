"""Command-line interface: simulate, fit, compare, agreement, calibrate, report.

Exit codes: 0 success, 2 usage or input error, 3 I/O failure,
4 sampler non-convergence (outputs retained).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, compare as compare_mod, simulate as simulate_mod
from .data import Dataset, DatasetKind, GraderType, load_pairwise, load_scores
from .design import CodingScheme, Likelihood, ModelSpec, preset, PRESET_NAMES
from .errors import GraderAuditError, SamplerError
from .inference import (
    PosteriorDraws,
    SamplerConfig,
    convergence_report,
    load_draws_csv,
    sample,
)
from .likelihoods import compile_model

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NONCONVERGED = 4


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_dataset_for_spec(spec: ModelSpec, data_path: str) -> Dataset:
    if spec.likelihood is Likelihood.BERNOULLI_LOGIT:
        return load_pairwise(data_path)
    return load_scores(data_path)


def _resolve_spec(args) -> ModelSpec:
    if bool(args.preset) == bool(args.spec):
        raise GraderAuditError("provide exactly one of --preset or --spec")
    if args.preset:
        return preset(args.preset)
    return ModelSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))


def _standard_contrasts(model) -> list[analysis.ContrastSpec]:
    """Headline contrasts derivable from the fitted design.

    Included when the design supports them: autograder-minus-human grader
    effect, first-versus-second LLM effect, and the grader-type hyper-mean
    difference for hierarchical fits.
    """
    layout = model.layout
    ds = model.dataset
    specs: list[analysis.ContrastSpec] = []
    for term in model.spec.terms:
        if term.factors == ("grader",) and term.continuous_covariate is None:
            levels = layout.factors["grader"].levels
            if (
                term.coding is CodingScheme.EFFECT
                and ds.grader_types is not None
                and len({t for t in ds.grader_types.values()}) == 2
            ):
                autos = [g for g in levels if ds.grader_types[g] is GraderType.AUTOGRADER]
                humans = [g for g in levels if ds.grader_types[g] is GraderType.HUMAN]
                parts = [
                    analysis.scale_weights(
                        analysis.effect_level_weights("grader", levels, g), 1.0 / len(autos)
                    )
                    for g in autos
                ] + [
                    analysis.scale_weights(
                        analysis.effect_level_weights("grader", levels, g), -1.0 / len(humans)
                    )
                    for g in humans
                ]
                specs.append(
                    analysis.ContrastSpec(
                        "autograder_minus_human", analysis.combine_weights(*parts)
                    )
                )
            if term.hierarchical == "grader_type" and layout.has_block("grader_mu"):
                labels = layout.block("grader_mu").labels
                if len(labels) == 2:
                    by_type = {lbl: lbl for lbl in labels}
                    human = next((l for l in labels if "human" in l), None)
                    auto = next((l for l in labels if "autograder" in l), None)
                    if human and auto:
                        specs.append(
                            analysis.ContrastSpec(
                                "mu_human_minus_autograder", {human: 1.0, auto: -1.0}
                            )
                        )
        if (
            term.factors == ("llm",)
            and term.coding is CodingScheme.EFFECT
            and layout.factors["llm"].n_levels >= 2
        ):
            levels = layout.factors["llm"].levels
            specs.append(
                analysis.ContrastSpec(
                    f"{levels[0]}_minus_{levels[1]}",
                    analysis.combine_weights(
                        analysis.effect_level_weights("llm", levels, levels[0]),
                        analysis.scale_weights(
                            analysis.effect_level_weights("llm", levels, levels[1]), -1.0
                        ),
                    ),
                )
            )
    return specs


def cmd_simulate(args) -> int:
    try:
        cfg = simulate_mod.default_scenario(args.scenario, seed=args.seed)
    except GraderAuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    ds, truth = simulate_mod.simulate(cfg)
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        name = "pairwise.csv" if ds.kind is DatasetKind.PAIRWISE else "scores.csv"
        ds.write_csv(out / name)
        (out / "truth.json").write_text(
            simulate_mod.truth_json(truth) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {name} and truth.json to {out}")
    return EXIT_OK


def _summary_payload(model, draws, contrasts, rope_low, rope_high, diag):
    pooled = draws.pooled()
    rhats = diag["rhat"]
    esses = diag["ess"]
    parameters = {}
    for j, name in enumerate(draws.param_names):
        s = analysis.summarize_samples(pooled[:, j])
        parameters[name] = {
            **s.to_dict(),
            "rhat": rhats.get(name),
            "ess": esses.get(name),
        }
    contrast_payload = {}
    for cs in contrasts:
        res = analysis.contrast(draws, cs)
        rope = analysis.rope_check(res.samples, rope_low, rope_high)
        contrast_payload[cs.name] = {**res.to_dict(), "rope": rope.to_dict()}
    return parameters, contrast_payload


def cmd_fit(args) -> int:
    try:
        spec = _resolve_spec(args)
        ds = _load_dataset_for_spec(spec, args.data)
        model = compile_model(spec, ds)
        cfg = SamplerConfig(
            chains=args.chains,
            warmup_iterations=args.warmup,
            sampling_iterations=args.draws,
            seed=args.seed,
        )
        draws = sample(spec, ds, cfg)
    except SamplerError as exc:
        print(f"sampler failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (GraderAuditError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    diag = draws.diagnostics()
    conv = convergence_report(draws)
    diag.update(conv)
    diag["dataset_fingerprint"] = ds.fingerprint()

    contrasts = _standard_contrasts(model)
    parameters, contrast_payload = _summary_payload(
        model, draws, contrasts, args.rope_low, args.rope_high, diag
    )
    summary = {
        "model": spec.name,
        "converged": conv["converged"],
        "dataset_fingerprint": ds.fingerprint(),
        "seed": args.seed,
        "n_categories": model.layout.n_categories,
        "parameters": parameters,
        "contrasts": contrast_payload,
    }

    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        ds.write_csv(out / "data.csv")
        (out / "model.json").write_text(spec.to_json() + "\n", encoding="utf-8")
        draws.write_csv(out / "draws.csv")
        _json_dump(diag, out / "diagnostics.json")
        _json_dump(summary, out / "summary.json")
        lines = ["parameter,mean,ci_low,ci_high"]
        for name, p in parameters.items():
            lines.append(f"{name},{p['mean']!r},{p['ci_low']!r},{p['ci_high']!r}")
        (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    if not conv["converged"]:
        print(
            "fit written but not converged: "
            + ", ".join(conv["non_converged_parameters"][:8]),
            file=sys.stderr,
        )
        return EXIT_NONCONVERGED
    print(f"fit written to {out}")
    return EXIT_OK


def _load_fit_dir(path: Path):
    spec = ModelSpec.from_json((path / "model.json").read_text(encoding="utf-8"))
    ds = _load_dataset_for_spec(spec, path / "data.csv")
    model = compile_model(spec, ds)
    summary = json.loads((path / "summary.json").read_text(encoding="utf-8"))
    draws = load_draws_csv(
        path / "draws.csv", model.layout, spec, seed=summary.get("seed", 0)
    )
    return spec, ds, model, draws


def cmd_compare(args) -> int:
    try:
        metrics = []
        for d in args.fits:
            path = Path(d)
            spec, ds, model, draws = _load_fit_dir(path)
            metrics.append(compare_mod.evaluate_model(path.name, spec, ds, draws))
        report = compare_mod.compare_models(metrics)
    except (GraderAuditError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (out / "comparison.csv").write_text(report.to_csv_text(), encoding="utf-8")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    best = report.ranked[0]
    print(f"best model by elpd_loo: {best.name} ({best.loo.elpd:.2f} +/- {best.loo.se:.2f})")
    return EXIT_OK


def cmd_agreement(args) -> int:
    try:
        path = Path(args.fit)
        spec, ds, model, draws = _load_fit_dir(path)
        if args.data:
            ds = _load_dataset_for_spec(spec, args.data)
        metric = analysis.AlphaMetric(args.alpha_metric)
        report = analysis.alpha_posterior(
            spec, draws, ds, metric=metric, n_replicates=args.alpha_reps, seed=args.seed
        )
    except (GraderAuditError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _json_dump(report.to_dict(), out / "agreement.json")
        lines = ["mode,replicate,alpha"]
        for i, a in enumerate(report.alpha_posterior):
            lines.append(f"full,{i},{float(a)!r}")
        for i, a in enumerate(report.alpha_counterfactual):
            lines.append(f"counterfactual,{i},{float(a)!r}")
        (out / "alpha_samples.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"agreement report written to {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        path = Path(args.fit)
        spec, ds, model, draws = _load_fit_dir(path)
        report = analysis.cutpoint_report(draws)
    except (GraderAuditError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _json_dump(report.to_dict(), out / "calibration.json")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"calibration report written to {out}")
    return EXIT_OK


def _report_markdown(run: Path) -> str:
    sections = ["# Run report", ""]
    found = False

    summary_path = run / "summary.json"
    if summary_path.exists():
        found = True
        s = json.loads(summary_path.read_text(encoding="utf-8"))
        sections += [
            "## Fit",
            "",
            f"- model: `{s.get('model')}`",
            f"- converged: {s.get('converged')}",
            f"- dataset fingerprint: `{str(s.get('dataset_fingerprint'))[:16]}...`",
            "",
        ]
        contrasts = s.get("contrasts", {})
        if contrasts:
            sections += ["| contrast | mean | 95% CI | ROPE verdict |", "|---|---|---|---|"]
            for name, c in sorted(contrasts.items()):
                sections.append(
                    f"| {name} | {c['mean']:.3f} | [{c['ci_low']:.3f}, {c['ci_high']:.3f}] "
                    f"| {c['rope']['verdict']} |"
                )
            sections.append("")

    diag_path = run / "diagnostics.json"
    if diag_path.exists():
        found = True
        d = json.loads(diag_path.read_text(encoding="utf-8"))
        rhats = d.get("rhat", {})
        esses = d.get("ess", {})
        worst_rhat = max(rhats.values()) if rhats else float("nan")
        min_ess = min(esses.values()) if esses else float("nan")
        sections += [
            "## Diagnostics",
            "",
            f"- divergences per chain: {d.get('divergences')}",
            f"- worst split R-hat: {worst_rhat:.4f}",
            f"- smallest ESS: {min_ess:.1f}",
            "",
        ]

    cmp_path = run / "comparison.json"
    if cmp_path.exists():
        found = True
        c = json.loads(cmp_path.read_text(encoding="utf-8"))
        sections += ["## Model comparison", "", "| model | elpd_loo | se | elpd_waic | se |", "|---|---|---|---|---|"]
        for m in c.get("models", []):
            sections.append(
                f"| {m['name']} | {m['elpd_loo']:.2f} | {m['se_loo']:.2f} "
                f"| {m['elpd_waic']:.2f} | {m['se_waic']:.2f} |"
            )
        sections.append("")

    agree_path = run / "agreement.json"
    if agree_path.exists():
        found = True
        a = json.loads(agree_path.read_text(encoding="utf-8"))
        post = a.get("alpha_posterior", {})
        counter = a.get("alpha_counterfactual", {})
        sections += [
            "## Agreement",
            "",
            f"- observed alpha: {a.get('alpha_observed'):.4f}",
            f"- model alpha: {post.get('mean'):.4f} [{post.get('ci_low'):.4f}, {post.get('ci_high'):.4f}]",
            f"- counterfactual alpha (grader baselines removed): "
            f"{counter.get('mean'):.4f} [{counter.get('ci_low'):.4f}, {counter.get('ci_high'):.4f}]",
            "",
        ]

    calib_path = run / "calibration.json"
    if calib_path.exists():
        found = True
        c = json.loads(calib_path.read_text(encoding="utf-8"))
        sections += ["## Scale calibration", "", "| cutpoint | latent value | interval | class |", "|---|---|---|---|"]
        for e in c.get("cutpoints", []):
            size = "" if e["interval_size"] is None else f"{e['interval_size']:.2f}"
            cls = e["classification"] or ""
            sections.append(f"| {e['cutpoint']} | {e['latent_value']:.2f} | {size} | {cls} |")
        sections.append("")

    if not found:
        return ""
    return "\n".join(sections)


def cmd_report(args) -> int:
    run = Path(args.run)
    if not run.is_dir():
        print(f"error: {run} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    text = _report_markdown(run)
    if not text:
        print(f"error: no report-able artifacts in {run}", file=sys.stderr)
        return EXIT_USAGE
    try:
        (run / "report.md").write_text(text, encoding="utf-8")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"report written to {run / 'report.md'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grader-audit",
        description="Bayesian GLM audit of grader behaviour in LLM evaluations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset with known truth")
    p_sim.add_argument("--scenario", required=True, help=f"one of {', '.join(simulate_mod.SCENARIOS)}")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="sample the posterior of one model on one dataset")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--preset", help=f"one of {', '.join(PRESET_NAMES)}")
    p_fit.add_argument("--spec", help="path to a model JSON file")
    p_fit.add_argument("--chains", type=int, default=4)
    p_fit.add_argument("--warmup", type=int, default=1000)
    p_fit.add_argument("--draws", type=int, default=1000)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--rope-low", type=float, default=analysis.ROPE_LOW)
    p_fit.add_argument("--rope-high", type=float, default=analysis.ROPE_HIGH)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_cmp = sub.add_parser("compare", help="rank fitted models by predictive fit")
    p_cmp.add_argument("fits", nargs="+", help="two or more fit directories")
    p_cmp.add_argument("--out", required=True)
    p_cmp.set_defaults(func=cmd_compare)

    p_agr = sub.add_parser("agreement", help="agreement distribution from a fitted model")
    p_agr.add_argument("--fit", required=True)
    p_agr.add_argument("--data", help="override the dataset stored with the fit")
    p_agr.add_argument("--alpha-metric", choices=["ordinal", "interval"], default="ordinal")
    p_agr.add_argument("--alpha-reps", type=int, default=500)
    p_agr.add_argument("--seed", type=int, default=0)
    p_agr.add_argument("--out", required=True)
    p_agr.set_defaults(func=cmd_agreement)

    p_cal = sub.add_parser("calibrate", help="cutpoint spacing report for an ordinal fit")
    p_cal.add_argument("--fit", required=True)
    p_cal.add_argument("--out", required=True)
    p_cal.set_defaults(func=cmd_calibrate)

    p_rep = sub.add_parser("report", help="human-readable digest of a run directory")
    p_rep.add_argument("--run", required=True)
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
