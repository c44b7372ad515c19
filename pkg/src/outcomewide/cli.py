"""Command-line interface.

Subcommands: ``run`` (full pipeline), ``evalue`` (desk calculator),
``select-covariates`` (rule engine over tagged candidates), ``classify-design``
(evidence-hierarchy level), ``report`` (re-render a saved result).
Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .covariates import CovariateTag, classify_design_level, select_covariates
from .data_model import CONTINUOUS, load_table
from .errors import NumericalError, OutcomeWideError, ValidationError
from .imputation import load_imputed_dir
from .pipeline import run_interaction, run_lagged_exposure_wide, run_outcome_wide
from .report import emit_report, result_from_dict, write_result_json
from .sensitivity import EffectEstimate, OutcomeMeta, evalue_report
from .spec import AnalysisSpec

MODE_ALIASES = {
    "outcome-wide": "outcome_wide",
    "lagged": "lagged_exposure_wide",
    "interaction": "interaction",
}

EVALUE_SCALES = {
    "rr": "risk_ratio",
    "or-rare": "odds_ratio_rare",
    "or-common": "odds_ratio_common",
    "d": "mean_difference_standardized",
}


def _build_schema(spec: AnalysisSpec, raw_config: dict) -> dict:
    """Column kinds for loading: declared outcome kinds win; everything else
    comes from the config's data_kinds section, defaulting to continuous."""
    declared = dict(raw_config.get("data_kinds") or {})
    schema: dict[str, str] = {}

    def put(name: str, fallback: str = CONTINUOUS):
        schema[name] = declared.get(name, fallback)

    put(spec.exposure.column)
    for cov in spec.covariate_block():
        put(cov)
    for o in spec.outcomes:
        schema[o.column] = o.kind
    if spec.second_exposure:
        put(spec.second_exposure)
    if spec.lagged is not None:
        for c in spec.lagged.wave1_exposures:
            put(c)
        for e in spec.lagged.wave2_exposures:
            put(e.column)
        schema[spec.lagged.outcome.column] = spec.lagged.outcome.kind
    return schema


def _cmd_run(args) -> int:
    raw_config = yaml.safe_load(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(raw_config, dict):
        raise ValidationError(f"config {args.config} did not parse to a mapping")
    if args.mode:
        raw_config["mode"] = MODE_ALIASES[args.mode]
    if args.seed is not None:
        raw_config.setdefault("options", {})["seed"] = args.seed
    spec = AnalysisSpec.from_dict(raw_config)

    schema = _build_schema(spec, raw_config)
    delimiter = raw_config.get("delimiter", ",")
    data_path = Path(args.data)
    if data_path.is_dir():
        data = load_imputed_dir(data_path, schema, delimiter=delimiter)
    else:
        data = load_table(data_path, schema, delimiter=delimiter)

    if spec.mode == "outcome_wide":
        result = run_outcome_wide(data, spec, complete_case=args.complete_case)
    elif spec.mode == "lagged_exposure_wide":
        result = run_lagged_exposure_wide(data, spec)
    else:
        result = run_interaction(data, spec)

    files = emit_report(result, args.format, args.out,
                        include_conversion_table=args.conversion_table)
    files.append(write_result_json(result, args.out))
    for f in files:
        print(f)
    for note in result.notes:
        print(f"note: {note}", file=sys.stderr)
    return 0


def _cmd_evalue(args) -> int:
    scale = EVALUE_SCALES[args.scale]
    se = args.se
    est = EffectEstimate(args.estimate, (args.lo, args.hi), scale, se=se)
    report = evalue_report(est, OutcomeMeta())
    print(f"E-value (point estimate): {report.evalue_point:.2f}")
    print(f"E-value (CI limit):       {report.evalue_ci:.2f}")
    print(f"risk ratio used:          {report.rr_used:.4f}")
    print(f"conversion:               {report.conversion}")
    return 0


def _cmd_select_covariates(args) -> int:
    raw = yaml.safe_load(Path(args.tags).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValidationError("tags file must hold a list of covariate tag mappings")
    try:
        tags = [CovariateTag(**item) for item in raw]
    except TypeError as exc:
        raise ValidationError(f"malformed covariate tag: {exc}") from exc
    selection = select_covariates(tags)
    print("included:")
    for name in selection.included:
        print(f"  {name}")
    print("excluded:")
    for name, reason in selection.excluded:
        print(f"  {name}: {reason}")
    return 0


def _cmd_classify_design(args) -> int:
    level = classify_design_level(
        longitudinal=args.longitudinal,
        baseline_covariates=args.baseline_covariates,
        baseline_outcome_controlled=args.baseline_outcome,
        prior_exposure_controlled=args.prior_exposure,
        randomized=args.randomized,
    )
    print(f"level {level.level}: {level.label}")
    if level.caution:
        print(f"caution: {level.caution}")
    return 0


def _cmd_report(args) -> int:
    raw = json.loads(Path(args.result).read_text(encoding="utf-8"))
    result = result_from_dict(raw)
    files = emit_report(result, args.format, args.out,
                        include_conversion_table=args.conversion_table)
    for f in files:
        print(f)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="outcomewide",
                                     description="Outcome-wide longitudinal analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an analysis from a config file")
    run.add_argument("--config", required=True, help="YAML analysis spec")
    run.add_argument("--data", required=True,
                     help="delimited data file, or a directory of pre-imputed files")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    run.add_argument("--mode", choices=tuple(MODE_ALIASES), default=None,
                     help="override the config mode")
    run.add_argument("--complete-case", action="store_true",
                     help="drop incomplete rows per outcome instead of imputing")
    run.add_argument("--conversion-table", action="store_true",
                     help="also emit the risk-ratio conversion supplement")
    run.set_defaults(fn=_cmd_run)

    ev = sub.add_parser("evalue", help="E-value desk calculator")
    ev.add_argument("--estimate", type=float, required=True)
    ev.add_argument("--lo", type=float, required=True)
    ev.add_argument("--hi", type=float, required=True)
    ev.add_argument("--scale", choices=tuple(EVALUE_SCALES), default="rr")
    ev.add_argument("--se", type=float, default=None,
                    help="standard error (required for scale d)")
    ev.set_defaults(fn=_cmd_evalue)

    sel = sub.add_parser("select-covariates", help="apply the covariate selection rules")
    sel.add_argument("--tags", required=True, help="YAML list of covariate tags")
    sel.set_defaults(fn=_cmd_select_covariates)

    cd = sub.add_parser("classify-design", help="design-hierarchy level for a study")
    cd.add_argument("--longitudinal", action="store_true")
    cd.add_argument("--baseline-covariates", action="store_true")
    cd.add_argument("--baseline-outcome", action="store_true")
    cd.add_argument("--prior-exposure", action="store_true")
    cd.add_argument("--randomized", action="store_true")
    cd.set_defaults(fn=_cmd_classify_design)

    rep = sub.add_parser("report", help="re-render reports from a saved result.json")
    rep.add_argument("--result", required=True)
    rep.add_argument("--out", required=True)
    rep.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    rep.add_argument("--conversion-table", action="store_true")
    rep.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except OutcomeWideError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
