"""Command-line front end.

Every command runs inside a :class:`~fragscope.fragscope.Study`, which owns the
output directory, writes the reports and archives them in an HDF5 file.

Exit codes: 0 success, 1 a validation gate failed, 2 bad input, 3 numerical
failure.
"""

import argparse
import json
import sys
import warnings

import numpy as np
from termcolor import colored

from . import attribution, caa, data, fragility, models, pipeline, sharp, theorem
from ._version import __version__
from .audit import audit as run_audit, prune_by_audit
from .fragscope import FragscopeError, InputError, Study, ValidationError

MODEL_KINDS = {"ols": "linear_ols", "logistic": "logistic", "mlp": "mlp"}

# per-command overrides of the Study defaults
COMMAND_DEFAULTS = {"theorem-check": {"resamples": 200}}


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _common_parser():
    parser = argparse.ArgumentParser(add_help=False)
    add = parser.add_argument
    add("--data", help="CSV file with a header row")
    add("--schema", help="JSON file {label, categorical[], drop[]}")
    add("--out", help="output directory (default ./<command>)")
    add("--seed", type=int)
    add("--vif-thresh", type=float, dest="vif_thresh")
    add("--rho-thresh", type=float, dest="rho_thresh")
    add("--resamples", type=int)
    add("--sample-size", type=int, dest="sample_size")
    add("--sample-rows", type=int, dest="sample_rows", help="rows used for VIF")
    add("--model", choices=sorted(MODEL_KINDS))
    add("--hidden", type=_ints, help="hidden layer widths, e.g. 16,8")
    add("--lambda", type=float, dest="lam")
    add("--k-interval", type=int, dest="k_interval")
    add("--aggregation", choices=caa.AGGREGATIONS)
    add("--method", choices=("linear", "taylor", "kernel"))
    add("--epsilon", type=float)
    add("--epochs", type=int)
    add("--lr", type=float)
    add("--batch-size", type=int, dest="batch_size")
    add("--test-fraction", type=float, dest="test_fraction")
    add("--eval-rows", type=int, dest="eval_rows")
    add("--grid", type=_floats, help="lambda or rho grid, comma-separated")
    add("--model-file", dest="model_file", help="model JSON written by 'train'")
    add("--jobs", type=int)
    add("--quiet", action="store_true", default=None)
    return parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fragscope",
        description="Multicollinearity audits and attribution fragility.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()
    for name, (_, summary) in COMMANDS.items():
        commands.add_parser(name, parents=[common], help=summary)
    return parser


def _attrs(args):
    attrs = dict(COMMAND_DEFAULTS.get(args.command, {}))
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "out"):
            attrs[key] = value
    if "model" in attrs:
        attrs["model"] = MODEL_KINDS[attrs["model"]]
    return attrs


# -- shared steps ---------------------------------------------------------------


def _load(study):
    path = study.attrs.get("data")
    if not path:
        raise InputError("--data is required for this command.")
    schema = None
    if study.attrs.get("schema"):
        try:
            schema = data.DatasetSchema.from_json(study.attrs["schema"])
        except (OSError, json.JSONDecodeError) as err:
            raise InputError(f"Could not read schema: {err}") from err
    X, y = data.load_csv(path, schema)
    study.echo(f"Loaded {X.n_rows} rows x {X.n_features} features from {path}", "cyan")
    return data.standardize(X), y


def _split(study, X, y):
    return data.train_test_split(X, y, study.attrs["test_fraction"], study.attrs["seed"])


def _train_config(attrs):
    return models.TrainConfig(
        learning_rate=attrs["lr"],
        epochs=attrs["epochs"],
        batch_size=attrs["batch_size"],
        seed=attrs["seed"],
    )


def _model_spec(attrs):
    kind = attrs["model"]
    return models.ModelSpec(
        kind=kind,
        hidden=tuple(attrs["hidden"]) if kind == "mlp" else (),
        config=_train_config(attrs),
    )


def _sharp_config(attrs):
    return sharp.SharpConfig(
        lam=attrs["lam"],
        fragility_interval=attrs["k_interval"],
        base=_train_config(attrs),
        epsilon=attrs["epsilon"],
    )


def _plan(attrs, n_rows):
    plan = data.BootstrapPlan(attrs["resamples"], attrs["sample_size"], attrs["seed"])
    return plan.capped(n_rows)


def _eval_slice(study, X):
    return X.take(np.arange(min(study.attrs["eval_rows"], X.n_rows)))


def _fitted_model(study, train):
    if study.attrs.get("model_file"):
        try:
            return models.ModelParams.load(study.attrs["model_file"])
        except (OSError, KeyError, json.JSONDecodeError) as err:
            raise InputError(f"Could not read model file: {err}") from err
    return _model_spec(study.attrs).fit(*train)


def _kernel_config(attrs):
    return attribution.KernelConfig(seed=attrs["seed"])


# -- commands -------------------------------------------------------------------


def cmd_audit(study):
    X, _ = _load(study)
    a = study.attrs
    report = run_audit(X, a["vif_thresh"], a["rho_thresh"], a["sample_rows"], a["seed"], a["jobs"])

    study.write_json("audit.json", report.to_dict())
    study.write_frame("vif_table.csv", report.vif.to_frame())
    study.write_json(
        "clusters.json",
        {
            "clusters": report.to_dict()["clusters"],
            "threshold": a["rho_thresh"],
        },
    )
    study.keep_arrays("audit", correlation=report.correlation.values, vif=report.vif.vif)
    study.render(
        "vif_table.j2",
        "vif_table.txt",
        rows=report.vif.top(20),
        flagged=report.flagged_names(),
        n_features=X.n_features,
        sample_rows=report.vif.sample_rows,
        underdetermined=report.vif.underdetermined,
    )

    flagged = report.flagged_names()["high_vif"]
    if flagged:
        study.echo(f"flagged: {', '.join(flagged)}", "red")
        return ValidationError.exit_code
    return 0


def cmd_prune(study):
    X, y = _load(study)
    a = study.attrs
    report = run_audit(X, a["vif_thresh"], a["rho_thresh"], a["sample_rows"], a["seed"], a["jobs"])
    pruned = prune_by_audit(X, report, a["vif_thresh"], a["rho_thresh"])
    removed = [c for c in X.column_names if c not in pruned.column_names]

    path = data.write_csv(pruned, study.directory / "pruned.csv", y)
    study.register(path)
    study.write_json("pruned.json", {"kept": list(pruned.column_names), "removed": removed})
    return 0


def cmd_train(study):
    X, y = _load(study)
    train, (X_test, y_test) = _split(study, X, y)
    m = _model_spec(study.attrs).fit(*train)
    metrics = models.evaluate(m, X_test, y_test)

    study.register(m.save(study.directory / "model.json"))
    study.write_json(
        "metrics.json", {"metrics": metrics.to_dict(), "loss_history": m.loss_history}
    )
    return 0


def cmd_explain(study):
    X, y = _load(study)
    train, (X_test, _) = _split(study, X, y)
    m = _fitted_model(study, train)
    S = attribution.explain(
        m, _eval_slice(study, X_test), study.attrs["method"], kernel_config=_kernel_config(study.attrs)
    )

    study.write_frame("attributions.csv", S.to_frame())
    study.write_json("attributions.json", S.to_dict())
    return 0


def _fragility_rows(reports):
    """Side-by-side rows keyed by feature, one column per named report."""

    rows = {}
    for label, report in reports.items():
        for name, value in zip(report.feature_names, report.fragility):
            rows.setdefault(name, {"feature": name})[label] = float(value)
    ranked = sorted(rows.values(), key=lambda r: -max(v for k, v in r.items() if k != "feature"))
    return [{**{label: None for label in reports}, **row} for row in ranked]


def cmd_fragility(study):
    X, y = _load(study)
    a = study.attrs
    train, (X_test, _) = _split(study, X, y)
    plan = _plan(a, train[0].n_rows)
    samples = fragility.bootstrap_attributions(
        train,
        _eval_slice(study, X_test),
        _model_spec(a),
        plan,
        method=a["method"],
        kernel_config=_kernel_config(a),
        n_jobs=a["jobs"],
    )
    report = fragility.fragility_scores(samples, a["epsilon"], plan)
    stability = fragility.stability_report(samples)

    study.keep_arrays("fragility", attributions=np.stack([s.values for s in samples]))
    study.write_json("fragility.json", {"fragility": report.to_dict(), "stability": stability.to_dict()})
    study.write_frame("fragility.csv", report.to_frame())
    study.render(
        "fragility_table.j2",
        "fragility_table.txt",
        columns=["fragility"],
        rows=_fragility_rows({"fragility": report})[:20],
        taus={f"top{k}": v for k, v in stability.tau_by_k.items()},
    )
    return 0


def cmd_caa_filter(study):
    X, y = _load(study)
    a = study.attrs
    train, (X_test, _) = _split(study, X, y)
    m = _fitted_model(study, train)
    S = attribution.explain(m, _eval_slice(study, X_test), a["method"], kernel_config=_kernel_config(a))
    F, mapping = caa.caa_filter(S, train[0], a["rho_thresh"], a["aggregation"])

    study.write_frame("filtered_attributions.csv", F.to_frame())
    study.write_json("clusters.json", mapping.to_dict())
    study.write_json("cluster_ranking.json", {"ranking": caa.cluster_importance_ranking(F)})
    return 0


def cmd_sharp(study):
    X, y = _load(study)
    a = study.attrs
    train, (X_test, y_test) = _split(study, X, y)
    m = sharp.train_sharp(*train, _model_spec(a), _sharp_config(a))
    metrics = models.evaluate(m, X_test, y_test)

    study.register(m.save(study.directory / "model.json"))
    study.write_json(
        "sharp.json",
        {
            "metrics": metrics.to_dict(),
            "loss_history": m.loss_history,
            "penalty_history": m.penalty_history,
        },
    )
    return 0


def cmd_ablate(study):
    X, y = _load(study)
    a = study.attrs
    train, (X_test, y_test) = _split(study, X, y)
    result = sharp.lambda_ablation(
        *train,
        _model_spec(a),
        grid=a.get("grid") or sharp.LAMBDA_GRID,
        cfg=_sharp_config(a),
        plan=_plan(a, train[0].n_rows),
        X_test=X_test,
        y_test=y_test,
        eval_rows=a["eval_rows"],
        n_jobs=a["jobs"],
    )

    study.metadata["training_seconds"] = result.timings()
    study.write_json("ablation.json", result.to_dict())
    study.write_frame("ablation.csv", result.to_frame())
    study.render("ablation_table.j2", "ablation_table.txt", rows=result.to_dict()["rows"])
    return 0


def cmd_theorem_check(study):
    a = study.attrs
    template = theorem.SyntheticSpec(n=a["sample_size"], p=2, seed=a["seed"])
    plan = data.BootstrapPlan(a["resamples"], template.n, a["seed"])
    report = theorem.variance_bound_experiment(
        a.get("grid") or theorem.RHO_GRID, template, plan, n_jobs=a["jobs"]
    )
    identity = theorem.ols_variance_identity_check(
        theorem.SyntheticSpec(n=template.n, p=2, correlation_targets=((0, 1, 0.9),), seed=a["seed"])
    )
    null = theorem.non_identifiability_check(seed=a["seed"])
    passed = report.passed and identity["passed"] and null["passed"]

    study.write_json(
        "theorem.json",
        {"variance_bound": report.to_dict(), "identity": identity, "non_identifiability": null},
    )
    study.write_frame("theorem.csv", report.to_frame())
    study.render(
        "theorem_table.j2",
        "theorem_table.txt",
        **{**report.to_dict(), "passed": passed},
        identity_passed=identity["passed"],
        null_passed=null["passed"],
    )
    return 0 if passed else ValidationError.exit_code


def cmd_pipeline(study):
    X, y = _load(study)
    a = study.attrs
    keep = {}
    report = pipeline.run_pipeline(
        X,
        y,
        _model_spec(a),
        data.BootstrapPlan(a["resamples"], a["sample_size"], a["seed"]),
        vif_thresh=a["vif_thresh"],
        rho_thresh=a["rho_thresh"],
        method=a["method"],
        kernel_config=_kernel_config(a),
        test_fraction=a["test_fraction"],
        eval_rows=a["eval_rows"],
        sample_rows=a["sample_rows"],
        epsilon=a["epsilon"],
        seed=a["seed"],
        n_jobs=a["jobs"],
        keep=keep,
    )

    study.keep_arrays("pipeline", **keep)
    study.write_json("pipeline.json", report.to_dict())
    study.render(
        "drop_table.j2",
        "drop_table.txt",
        rows=report.drop_table,
        removed=report.removed,
        n_control=len(report.control.feature_names),
        n_hypothesis=len(report.hypothesis.feature_names),
    )
    study.render(
        "fragility_table.j2",
        "fragility_table.txt",
        columns=["control", "hypothesis"],
        rows=_fragility_rows(
            {"control": report.control.fragility, "hypothesis": report.hypothesis.fragility}
        )[:20],
        taus={
            f"{name} top{k}": tau
            for name, scenario in (("control", report.control), ("hypothesis", report.hypothesis))
            for k, tau in scenario.stability.tau_by_k.items()
        },
    )
    return 0


COMMANDS = {
    "audit": (cmd_audit, "correlations, clusters and VIF; exits 1 on severe VIF"),
    "prune": (cmd_prune, "drop high-VIF and highly correlated features"),
    "train": (cmd_train, "fit a model and report held-out metrics"),
    "explain": (cmd_explain, "attribute held-out rows"),
    "fragility": (cmd_fragility, "bootstrap Fragility Scores and Kendall's tau"),
    "caa-filter": (cmd_caa_filter, "aggregate attributions over correlated clusters"),
    "sharp": (cmd_sharp, "train with the fragility penalty"),
    "ablate": (cmd_ablate, "lambda ablation of the fragility penalty"),
    "theorem-check": (cmd_theorem_check, "synthetic checks of attribution variance vs VIF"),
    "pipeline": (cmd_pipeline, "control vs pruned feature set comparison"),
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    attrs = _attrs(args)
    command, _ = COMMANDS[args.command]

    try:
        with warnings.catch_warnings():
            if attrs.get("quiet"):
                warnings.simplefilter("ignore")
            study = Study(args.command, directory=args.out, **attrs)
            return study.execute(command)
    except FragscopeError as err:
        print(colored(f"error: {err}", "red"), file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
