"""Table emission: the main association table, the E-value table, the
risk-ratio conversion supplement, and machine-readable JSON sidecars.

Continuous and binary outcomes are staggered into separate estimate columns
(B versus RR/OR).  Significance markers are a pure function of the p-value,
the nominal level, and the Bonferroni threshold: ``*`` p < alpha, ``**``
p < 0.01, ``***`` p below alpha/K.  E-values are stored at full precision and
rendered to two decimals.  Emission is deterministic: rerunning the same
result produces byte-identical files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .glm import FitResult
from .imputation import PooledResult
from .multiplicity import MultiplicityReport, NullIntervalReport
from .pipeline import (
    ContrastResult,
    InteractionResult,
    LaggedEntry,
    LaggedResult,
    OutcomeResult,
    OutcomeWideResult,
)
from .sensitivity import MEAN_DIFFERENCE_STANDARDIZED, EffectEstimate, EValueReport, convert_to_rr

FORMATS = ("markdown", "csv", "json")
_EXT = {"markdown": "md", "csv": "csv", "json": "json"}


def significance_stars(p: float, alpha: float, bonferroni_threshold: float) -> str:
    """Marker tiers from the main-table convention."""
    if p < bonferroni_threshold:
        return "***"
    if p < 0.01:
        return "**"
    if p < alpha:
        return "*"
    return ""


def format_p(p: float) -> str:
    if p < 1e-4:
        return "<0.0001"
    text = f"{p:.4f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def _is_ratio_scale(scale: str) -> bool:
    return scale in ("log_odds", "log_risk")


def _estimate_cells(fit) -> tuple[str, str, str]:
    """(B cell, RR/OR cell, CI cell) with ratio scales exponentiated."""
    lo, hi = fit.ci
    if _is_ratio_scale(fit.scale):
        return "", f"{math.exp(fit.estimate):.2f}", f"[{math.exp(lo):.2f}, {math.exp(hi):.2f}]"
    return f"{fit.estimate:.2f}", "", f"[{lo:.2f}, {hi:.2f}]"


def _fit_to_dict(fit) -> dict:
    base = {
        "estimate": fit.estimate,
        "se": fit.se,
        "ci": list(fit.ci),
        "p_value": fit.p_value,
        "scale": fit.scale,
        "family": fit.family,
        "n_used": fit.n_used,
        "term": fit.term,
    }
    if isinstance(fit, PooledResult):
        base.update({
            "pooled": True,
            "m": fit.m,
            "within_var": fit.within_var,
            "between_var": fit.between_var,
            "total_var": fit.total_var,
        })
    else:
        base.update({"pooled": False, "converged": fit.converged, "iterations": fit.iterations})
    return base


def _fit_from_dict(d: dict):
    if d.get("pooled"):
        return PooledResult(
            estimate=d["estimate"], within_var=d["within_var"], between_var=d["between_var"],
            total_var=d["total_var"], se=d["se"], ci=tuple(d["ci"]), p_value=d["p_value"],
            scale=d["scale"], family=d["family"], m=d["m"], n_used=d["n_used"], term=d["term"],
        )
    return FitResult(
        estimate=d["estimate"], se=d["se"], ci=tuple(d["ci"]), p_value=d["p_value"],
        scale=d["scale"], family=d["family"], n_used=d["n_used"],
        converged=d["converged"], iterations=d["iterations"], term=d["term"],
    )


def _evalue_to_dict(ev: EValueReport) -> dict:
    return {"evalue_point": ev.evalue_point, "evalue_ci": ev.evalue_ci,
            "rr_used": ev.rr_used, "conversion": ev.conversion}


def _multiplicity_to_dict(rep: MultiplicityReport) -> dict:
    return {
        "alpha": rep.alpha,
        "k": rep.k,
        "raw_p": [float(x) for x in rep.raw_p],
        "bonferroni_threshold": rep.bonferroni_threshold,
        "holm_adjusted": [float(x) for x in rep.holm_adjusted],
        "rejected_nominal": rep.rejected_nominal,
        "rejected_bonferroni": rep.rejected_bonferroni,
        "rejected_holm": rep.rejected_holm,
        "rw_adjusted": None if rep.rw_adjusted is None else [float(x) for x in rep.rw_adjusted],
        "rw_outcomes": rep.rw_outcomes,
        "rejected_rw": rep.rejected_rw,
    }


def _multiplicity_from_dict(d: dict) -> MultiplicityReport:
    return MultiplicityReport(
        alpha=d["alpha"], k=d["k"], raw_p=np.array(d["raw_p"]),
        bonferroni_threshold=d["bonferroni_threshold"],
        holm_adjusted=np.array(d["holm_adjusted"]),
        rejected_nominal=d["rejected_nominal"], rejected_bonferroni=d["rejected_bonferroni"],
        rejected_holm=d["rejected_holm"],
        rw_adjusted=None if d["rw_adjusted"] is None else np.array(d["rw_adjusted"]),
        rw_outcomes=d["rw_outcomes"], rejected_rw=d["rejected_rw"],
    )


def _null_interval_to_dict(rep: NullIntervalReport | None):
    if rep is None:
        return None
    return {
        "alpha": rep.alpha, "k": rep.k, "expected_rejections": rep.expected_rejections,
        "interval": list(rep.interval), "observed_rejections": rep.observed_rejections,
        "excess_hits": rep.excess_hits,
    }


def _null_interval_from_dict(d):
    if d is None:
        return None
    return NullIntervalReport(
        alpha=d["alpha"], k=d["k"], expected_rejections=d["expected_rejections"],
        interval=tuple(d["interval"]), observed_rejections=d["observed_rejections"],
        excess_hits=d["excess_hits"],
    )


def result_to_dict(result) -> dict:
    """Full-precision serialization of a run result (for re-rendering)."""
    if isinstance(result, OutcomeWideResult):
        return {
            "type": "outcome_wide",
            "outcomes": [
                {
                    "name": o.name, "kind": o.kind, "family": o.family, "n_used": o.n_used,
                    "prevalence": o.prevalence, "outcome_sd": o.outcome_sd,
                    "contrasts": [
                        {"term": c.term, "fit": _fit_to_dict(c.fit), "evalue": _evalue_to_dict(c.evalue)}
                        for c in o.contrasts
                    ],
                }
                for o in result.outcomes
            ],
            "multiplicity": {t: _multiplicity_to_dict(r) for t, r in result.multiplicity.items()},
            "null_interval": _null_interval_to_dict(result.null_interval),
            "metadata": result.metadata,
            "notes": result.notes,
        }
    if isinstance(result, LaggedResult):
        return {
            "type": "lagged_exposure_wide",
            "entries": [
                {"exposure": e.exposure, "fit": _fit_to_dict(e.fit),
                 "evalue": _evalue_to_dict(e.evalue), "n_used": e.n_used}
                for e in result.entries
            ],
            "multiplicity": _multiplicity_to_dict(result.multiplicity),
            "metadata": result.metadata,
            "notes": result.notes,
        }
    if isinstance(result, InteractionResult):
        return {
            "type": "interaction",
            "entries": [
                {"outcome": e.outcome, "family": e.family, "n_used": e.n_used,
                 "exposure_fit": _fit_to_dict(e.exposure_fit),
                 "second_fit": _fit_to_dict(e.second_fit),
                 "interaction_fit": _fit_to_dict(e.interaction_fit)}
                for e in result.entries
            ],
            "multiplicity": _multiplicity_to_dict(result.multiplicity),
            "metadata": result.metadata,
            "notes": result.notes,
        }
    raise ValidationError(f"cannot serialize result of type {type(result).__name__}")


def result_from_dict(raw: dict):
    kind = raw.get("type")
    if kind == "outcome_wide":
        outcomes = [
            OutcomeResult(
                name=o["name"], kind=o["kind"], family=o["family"],
                contrasts=[
                    ContrastResult(c["term"], _fit_from_dict(c["fit"]),
                                   EValueReport(**c["evalue"]))
                    for c in o["contrasts"]
                ],
                n_used=o["n_used"], prevalence=o["prevalence"], outcome_sd=o["outcome_sd"],
            )
            for o in raw["outcomes"]
        ]
        return OutcomeWideResult(
            outcomes,
            {t: _multiplicity_from_dict(r) for t, r in raw["multiplicity"].items()},
            _null_interval_from_dict(raw["null_interval"]),
            raw["metadata"],
            raw.get("notes", []),
        )
    if kind == "lagged_exposure_wide":
        entries = [
            LaggedEntry(e["exposure"], _fit_from_dict(e["fit"]),
                        EValueReport(**e["evalue"]), e["n_used"])
            for e in raw["entries"]
        ]
        return LaggedResult(entries, _multiplicity_from_dict(raw["multiplicity"]),
                            raw["metadata"], raw.get("notes", []))
    if kind == "interaction":
        from .pipeline import InteractionEntry

        entries = [
            InteractionEntry(
                outcome=e["outcome"], family=e["family"],
                exposure_fit=_fit_from_dict(e["exposure_fit"]),
                second_fit=_fit_from_dict(e["second_fit"]),
                interaction_fit=_fit_from_dict(e["interaction_fit"]),
                n_used=e["n_used"],
            )
            for e in raw["entries"]
        ]
        return InteractionResult(entries, _multiplicity_from_dict(raw["multiplicity"]),
                                 raw["metadata"], raw.get("notes", []))
    raise ValidationError(f"unknown result type {kind!r} in result file")


def _main_rows(result) -> list[dict]:
    rows = []
    if isinstance(result, OutcomeWideResult):
        alpha = result.metadata["alpha"]
        for o in result.outcomes:
            for c in o.contrasts:
                thr = result.multiplicity[c.term].bonferroni_threshold
                b, rr, ci = _estimate_cells(c.fit)
                rows.append({
                    "outcome": o.name, "term": c.term, "n": o.n_used,
                    "b": b, "rr_or": rr, "ci": ci,
                    "p": format_p(c.fit.p_value) + significance_stars(c.fit.p_value, alpha, thr),
                    "raw": c.fit,
                })
    elif isinstance(result, LaggedResult):
        alpha = result.metadata["alpha"]
        thr = result.multiplicity.bonferroni_threshold
        for e in result.entries:
            b, rr, ci = _estimate_cells(e.fit)
            rows.append({
                "outcome": result.metadata["outcome"], "term": e.exposure, "n": e.n_used,
                "b": b, "rr_or": rr, "ci": ci,
                "p": format_p(e.fit.p_value) + significance_stars(e.fit.p_value, alpha, thr),
                "raw": e.fit,
            })
    elif isinstance(result, InteractionResult):
        alpha = result.metadata["alpha"]
        thr = result.multiplicity.bonferroni_threshold
        for e in result.entries:
            # only the interaction terms form the corrected family
            for label, fit, use_thr in (("exposure", e.exposure_fit, 0.0),
                                        ("second exposure", e.second_fit, 0.0),
                                        ("interaction", e.interaction_fit, thr)):
                b, rr, ci = _estimate_cells(fit)
                rows.append({
                    "outcome": e.outcome, "term": f"{fit.term} ({label})", "n": e.n_used,
                    "b": b, "rr_or": rr, "ci": ci,
                    "p": format_p(fit.p_value) + significance_stars(fit.p_value, alpha, use_thr),
                    "raw": fit,
                })
    else:
        raise ValidationError(f"cannot render result of type {type(result).__name__}")
    return rows


def _evalue_rows(result) -> list[dict]:
    if isinstance(result, OutcomeWideResult):
        return [
            {"outcome": o.name, "term": c.term,
             "evalue_point": f"{c.evalue.evalue_point:.2f}",
             "evalue_ci": f"{c.evalue.evalue_ci:.2f}",
             "conversion": c.evalue.conversion}
            for o in result.outcomes for c in o.contrasts
        ]
    if isinstance(result, LaggedResult):
        return [
            {"outcome": e.exposure, "term": e.exposure,
             "evalue_point": f"{e.evalue.evalue_point:.2f}",
             "evalue_ci": f"{e.evalue.evalue_ci:.2f}",
             "conversion": e.evalue.conversion}
            for e in result.entries
        ]
    return []


def _conversion_rows(result: OutcomeWideResult) -> list[dict]:
    rows = []
    for o in result.outcomes:
        if o.kind != "continuous":
            continue
        for c in o.contrasts:
            est = EffectEstimate(c.fit.estimate, c.fit.ci, MEAN_DIFFERENCE_STANDARDIZED, se=c.fit.se)
            rr, _chain = convert_to_rr(est)
            rows.append({
                "outcome": o.name, "term": c.term,
                "rr": f"{rr.value:.2f}", "ci": f"[{rr.ci[0]:.2f}, {rr.ci[1]:.2f}]",
                "p": format_p(c.fit.p_value),
            })
    return rows


def _write_markdown_table(path: Path, headers: list[str], rows: list[list[str]], title: str) -> None:
    lines = [f"# {title}", ""]
    lines.append("| " + " | ".join(headers) + " |")
    lines.append("|" + "|".join([" --- "] * len(headers)) + "|")
    for r in rows:
        lines.append("| " + " | ".join(r) + " |")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_csv_table(path: Path, headers: list[str], rows: list[list[str]]) -> None:
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(headers)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_json_table(path: Path, headers: list[str], rows: list[list[str]]) -> None:
    data = [dict(zip(headers, r)) for r in rows]
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _emit_table(fmt: str, path: Path, headers, rows, title: str) -> None:
    if fmt == "markdown":
        _write_markdown_table(path, headers, rows, title)
    elif fmt == "csv":
        _write_csv_table(path, headers, rows)
    else:
        _write_json_table(path, headers, rows)


def emit_report(result, fmt: str, out_dir, *, include_conversion_table: bool = False) -> list[Path]:
    """Write the report files for a run result into ``out_dir``.

    Emits ``main_table`` and ``evalues`` in the requested format plus
    ``multiplicity.json`` and ``metadata.json``; optionally a supplementary
    table with continuous estimates converted to the risk-ratio scale.
    Returns the paths written.
    """
    if fmt not in FORMATS:
        raise ValidationError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    rows = _main_rows(result)
    if not rows:
        raise ValidationError("cannot emit a report for an empty result")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = _EXT[fmt]
    written = []

    headers = ["Outcome", "Term", "n", "B", "RR/OR", "95% CI", "p-value"]
    table = [[r["outcome"], r["term"], str(r["n"]), r["b"], r["rr_or"], r["ci"], r["p"]]
             for r in rows]
    path = out / f"main_table.{ext}"
    _emit_table(fmt, path, headers, table, "Outcome-wide associations")
    written.append(path)

    ev_rows = _evalue_rows(result)
    if ev_rows:
        headers = ["Outcome", "Term", "E-value (point)", "E-value (CI limit)", "Conversion"]
        table = [[r["outcome"], r["term"], r["evalue_point"], r["evalue_ci"], r["conversion"]]
                 for r in ev_rows]
        path = out / f"evalues.{ext}"
        _emit_table(fmt, path, headers, table, "Robustness to unmeasured confounding (E-values)")
        written.append(path)

    if include_conversion_table and isinstance(result, OutcomeWideResult):
        conv = _conversion_rows(result)
        if conv:
            headers = ["Outcome", "Term", "RR", "95% CI", "p-value"]
            table = [[r["outcome"], r["term"], r["rr"], r["ci"], r["p"]] for r in conv]
            path = out / f"conversion_table.{ext}"
            _emit_table(fmt, path, headers, table,
                        "Continuous estimates converted to the risk-ratio scale")
            written.append(path)

    if isinstance(result, OutcomeWideResult):
        mult = {t: _multiplicity_to_dict(r) for t, r in result.multiplicity.items()}
        mult_payload = {"contrasts": mult, "null_interval": _null_interval_to_dict(result.null_interval)}
    else:
        mult_payload = {"contrasts": {"(all)": _multiplicity_to_dict(result.multiplicity)},
                        "null_interval": None}
    path = out / "multiplicity.json"
    path.write_text(json.dumps(mult_payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)

    meta_payload = {"metadata": result.metadata, "notes": result.notes}
    path = out / "metadata.json"
    path.write_text(json.dumps(meta_payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)
    return written


def write_result_json(result, out_dir) -> Path:
    """Full-precision result dump used by the ``report`` subcommand."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "result.json"
    path.write_text(json.dumps(result_to_dict(result), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path
