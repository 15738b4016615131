"""Report documents: one canonical machine format, one aligned table format.

Every command produces a ReportDocument. The machine format is canonical
JSON - sorted keys, two-space indent, UTF-8, no NaN/Infinity literals,
trailing newline - so equal documents serialize to equal bytes, which is what
makes determinism checkable with a byte compare. The schema (versioned,
currently "1") is documented in docs/report_schema.json; parse_report rejects
documents from a different major version.

The table format is for eyes: fixed-order sections with aligned columns.
p-values print with 3 decimals, coverage values with 3, effects and
statistics with enough digits to re-derive the p-values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__
from .bias_tests import TestResult
from .coverage import CoverageEstimate, MseEstimate
from .errors import ValidationError
from .montecarlo import SimulationOutcome, VerificationCheck

SCHEMA_VERSION = "1"

__all__ = [
    "SCHEMA_VERSION",
    "ReportDocument",
    "build_document",
    "emit_machine",
    "emit_table",
    "parse_report",
    "test_result_row",
    "coverage_row",
    "mse_row",
    "outcome_row",
    "verification_row",
    "quantile_summary_row",
]


@dataclass
class ReportDocument:
    """A finished report: command, echoed config, warnings, typed result rows."""

    command: str
    config: dict
    results: list[dict]
    warnings: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def build_document(command: str, config: dict, results: list[dict],
                   warnings: list[str] | None = None) -> ReportDocument:
    return ReportDocument(
        command=command,
        config=config,
        results=results,
        warnings=list(warnings or []),
        meta={
            "generator": "indexaudit",
            "version": __version__,
            "schema_version": SCHEMA_VERSION,
        },
    )


def _json_safe(value):
    """Recursively replace non-finite floats (JSON has no literal for them)."""
    if isinstance(value, float):
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, (np.floating, np.integer)):
        return _json_safe(value.item())
    if isinstance(value, dict):
        return {str(key): _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    return value


def emit_machine(doc: ReportDocument) -> bytes:
    payload = {
        "command": doc.command,
        "config": _json_safe(doc.config),
        "meta": _json_safe(doc.meta),
        "results": _json_safe(doc.results),
        "warnings": list(doc.warnings),
    }
    text = json.dumps(payload, sort_keys=True, indent=2,
                      ensure_ascii=False, allow_nan=False)
    return (text + "\n").encode("utf-8")


def parse_report(data: bytes | str) -> ReportDocument:
    """Parse a machine report back into a document; round-trips byte-exactly."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        payload = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"not a machine report: {exc}") from exc
    for key in ("command", "config", "meta", "results", "warnings"):
        if key not in payload:
            raise ValidationError(f"machine report is missing {key!r}")
    version = str(payload["meta"].get("schema_version", ""))
    if version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise ValidationError(
            f"unsupported report schema version {version!r} "
            f"(this build reads {SCHEMA_VERSION})"
        )
    return ReportDocument(
        command=payload["command"],
        config=payload["config"],
        results=payload["results"],
        warnings=payload["warnings"],
        meta=payload["meta"],
    )


# --- result rows -------------------------------------------------------------


def test_result_row(result: TestResult) -> dict:
    return {
        "type": "test_result",
        "kind": result.kind.value,
        "effect": result.effect,
        "variance": result.variance,
        "statistic": result.statistic,
        "p_value": result.p_value,
        "metadata": dict(result.metadata),
    }


def coverage_row(period: str, role: str, estimate: CoverageEstimate) -> dict:
    return {
        "type": "coverage_estimate",
        "period": period,
        "role": role,
        "value": estimate.value,
        "variance": estimate.variance,
        "ci_low": estimate.ci_low,
        "ci_high": estimate.ci_high,
        "ci_clipped": estimate.ci_clipped,
        "inputs": dict(estimate.inputs),
    }


def mse_row(period: str, estimate: MseEstimate, theta_star: float,
            theta_audit: float, audit_variance: float) -> dict:
    return {
        "type": "mse_estimate",
        "period": period,
        "value": estimate.value,
        "is_negative": estimate.is_negative,
        "theta_star": theta_star,
        "theta_audit": theta_audit,
        "audit_variance": audit_variance,
    }


def outcome_row(outcome: SimulationOutcome) -> dict:
    return {
        "type": "simulation_outcome",
        "label": outcome.label,
        "point": outcome.point,
        "mc_stderr": outcome.mc_stderr,
        "target": outcome.target,
        "z_score": outcome.z_score,
        "replicates_used": outcome.replicates_used,
        "extras": dict(outcome.extras),
    }


def verification_row(check: VerificationCheck) -> dict:
    return {
        "type": "verification_check",
        "name": check.name,
        "scenario": check.plan.scenario,
        "replicates": check.plan.replicates,
        "seed": check.plan.seed,
        "parameters": dict(check.plan.parameters),
        "gate": check.gate,
        "passed": check.passed,
        "detail": check.detail,
        "outcomes": [outcome_row(outcome) for outcome in check.outcomes],
    }


_SUMMARY_STATS = ("minimum", "first_quartile", "median", "mean",
                  "third_quartile", "maximum")


def quantile_summary_row(column: str, values) -> dict:
    """Six-row summary (min, quartiles, median, mean, max) of one column."""
    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        raise ValidationError("cannot summarize an empty column")
    quartiles = np.quantile(data, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {
        "type": "coverage_summary",
        "column": column,
        "minimum": float(quartiles[0]),
        "first_quartile": float(quartiles[1]),
        "median": float(quartiles[2]),
        "mean": float(np.mean(data)),
        "third_quartile": float(quartiles[3]),
        "maximum": float(quartiles[4]),
    }


# --- table rendering ---------------------------------------------------------


def _fmt(value, spec: str) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    return format(value, spec)


def _render_table(headers: list[str], rows: list[list[str]]) -> list[str]:
    widths = [len(header) for header in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = ["  ".join(header.ljust(widths[i]) for i, header in enumerate(headers)).rstrip()]
    lines.append("  ".join("-" * widths[i] for i in range(len(headers))))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return lines


_SUMMARY_LABELS = {
    "minimum": "Minimum",
    "first_quartile": "First Quartile",
    "median": "Median",
    "mean": "Mean",
    "third_quartile": "Third Quartile",
    "maximum": "Maximum",
}


def emit_table(doc: ReportDocument) -> str:
    """Aligned, sectioned plain text for terminals."""
    lines = [f"indexaudit {doc.command} report (v{doc.meta.get('version', '?')})"]
    if doc.config:
        lines.append("")
        lines.append("configuration:")
        for key in sorted(doc.config):
            lines.append(f"  {key} = {doc.config[key]}")
    if doc.warnings:
        lines.append("")
        lines.append("warnings:")
        for warning in doc.warnings:
            lines.append(f"  ! {warning}")

    by_type: dict[str, list[dict]] = {}
    for row in doc.results:
        by_type.setdefault(row.get("type", "?"), []).append(row)

    if "test_result" in by_type:
        rows = [[
            row["metadata"].get("survey", ""),
            row["metadata"].get("proxy", ""),
            row["metadata"].get("periods", ""),
            row["kind"],
            _fmt(row["effect"], ".6f"),
            _fmt(row["statistic"], ".5f"),
            _fmt(row["p_value"], ".3f"),
        ] for row in by_type["test_result"]]
        lines.append("")
        lines += _render_table(
            ["survey", "proxy", "periods", "test", "effect", "statistic", "p-value"],
            rows,
        )

    if "coverage_estimate" in by_type:
        rows = [[
            row["period"],
            row["role"],
            _fmt(row["value"], ".3f"),
            _fmt(row["ci_low"], ".3f"),
            _fmt(row["ci_high"], ".3f"),
            "yes" if row["ci_clipped"] else "",
        ] for row in by_type["coverage_estimate"]]
        lines.append("")
        lines += _render_table(
            ["period", "estimator", "coverage", "ci low", "ci high", "clipped"],
            rows,
        )

    if "coverage_summary" in by_type:
        summaries = by_type["coverage_summary"]
        headers = ["statistic"] + [row["column"] for row in summaries]
        body = [
            [label] + [_fmt(row[stat], ".3f") for row in summaries]
            for stat, label in _SUMMARY_LABELS.items()
        ]
        lines.append("")
        lines += _render_table(headers, body)

    if "mse_estimate" in by_type:
        rows = [[
            row["period"],
            _fmt(row["theta_star"], ".4f"),
            _fmt(row["theta_audit"], ".4f"),
            format(row["value"], ".3e"),
            "yes" if row["is_negative"] else "",
        ] for row in by_type["mse_estimate"]]
        lines.append("")
        lines += _render_table(
            ["period", "published", "audit", "mse estimate", "negative"], rows,
        )

    if "verification_check" in by_type:
        rows = [[
            row["name"],
            row["gate"],
            "pass" if row["passed"] else "FAIL",
            row["detail"],
        ] for row in by_type["verification_check"]]
        lines.append("")
        lines += _render_table(["check", "gate", "status", "detail"], rows)
        lines.append("")
        outcome_rows = []
        for check in by_type["verification_check"]:
            for outcome in check["outcomes"]:
                z = outcome["z_score"]
                outcome_rows.append([
                    outcome["label"],
                    _fmt(outcome["point"], ".6g"),
                    _fmt(outcome["target"], ".6g"),
                    z if isinstance(z, str) else _fmt(z, ".3f"),
                ])
        lines += _render_table(["oracle", "empirical", "target", "z"], outcome_rows)

    if "simulation_outcome" in by_type:
        rows = [[
            row["label"],
            _fmt(row["point"], ".6g"),
            _fmt(row["target"], ".6g"),
            row["z_score"] if isinstance(row["z_score"], str) else _fmt(row["z_score"], ".3f"),
            str(row["replicates_used"]),
        ] for row in by_type["simulation_outcome"]]
        lines.append("")
        lines += _render_table(["scenario", "empirical", "target", "z", "replicates"], rows)

    if "file_output" in by_type:
        lines.append("")
        for row in by_type["file_output"]:
            lines.append(f"wrote {row['path']} ({row['rows']} rows, sha256 {row['sha256']})")

    return "\n".join(lines) + "\n"
