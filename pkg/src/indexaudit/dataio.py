"""CSV schemas for panels, weights, micro data, and weight estimates.

All files are plain UTF-8 CSV with a header row. Long (tidy) layouts
throughout:

* prices: ``period,group,index`` - every period/group cell exactly once.
* weights: ``source,group,weight`` - one weight vector per source label.
* households: ``household_id,group,expenditure`` plus an optional ``stratum``
  column; repeated (household, group) rows are summed, as diary data arrives
  in purchases.
* weight estimate: ``kind,row_group,col_group,value`` where kind is
  ``weight`` (row_group only), ``cov`` (both groups; either triangle may be
  given and mirrored values must agree), or ``households`` (an integer count,
  group columns empty).

Loaders raise ValidationError naming the file and line of the offense.
Writers emit full-precision floats (repr round-trip).
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import PriceSeries, WeightVector
from .errors import ConfigError, ValidationError
from .survey import HouseholdRecord, WeightEstimate

import numpy as np

__all__ = [
    "load_prices",
    "load_weights",
    "load_households",
    "load_weight_estimate",
    "write_prices",
    "write_weights",
    "write_households",
    "write_weight_estimate",
]


def _read_rows(path: str | Path, columns: Sequence[str],
               optional: Sequence[str] = ()) -> list[tuple[int, dict[str, str]]]:
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [cell.strip() for cell in header]
        required = set(columns)
        allowed = required | set(optional)
        if not required <= set(header) or not set(header) <= allowed:
            raise ValidationError(
                f"{path}: header must contain {', '.join(columns)}"
                + (f" (optionally {', '.join(optional)})" if optional else "")
                + f"; got {', '.join(header)}"
            )
        if len(set(header)) != len(header):
            raise ValidationError(f"{path}: duplicated header column")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                )
            rows.append((line_no, {key: cell.strip() for key, cell in zip(header, row)}))
        if not rows:
            raise ValidationError(f"{path}: no data rows")
        return rows


def _parse_float(path: Path, line_no: int, column: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValidationError(
            f"{path}:{line_no}: column {column!r} is not a number: {text!r}"
        ) from None


def load_prices(path: str | Path) -> PriceSeries:
    """Read a price panel; groups and periods keep first-appearance order."""
    path = Path(path)
    rows = _read_rows(path, ("period", "group", "index"))
    periods: list[str] = []
    groups: list[str] = []
    cells: dict[tuple[str, str], float] = {}
    for line_no, row in rows:
        key = (row["group"], row["period"])
        if key in cells:
            raise ValidationError(
                f"{path}:{line_no}: duplicate cell for group {key[0]!r}, "
                f"period {key[1]!r}"
            )
        if row["period"] not in periods:
            periods.append(row["period"])
        if row["group"] not in groups:
            groups.append(row["group"])
        cells[key] = _parse_float(path, line_no, "index", row["index"])
    missing = [(g, p) for g in groups for p in periods if (g, p) not in cells]
    if missing:
        g, p = missing[0]
        raise ValidationError(
            f"{path}: panel is not rectangular; {len(missing)} missing cell(s), "
            f"first is group {g!r}, period {p!r}"
        )
    values = np.array([[cells[(g, p)] for p in periods] for g in groups])
    try:
        return PriceSeries(values=values, group_labels=tuple(groups),
                           period_labels=tuple(periods))
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def load_weights(path: str | Path,
                 group_labels: Sequence[str]) -> dict[str, WeightVector]:
    """Read one weight vector per source, aligned to the given group order."""
    path = Path(path)
    rows = _read_rows(path, ("source", "group", "weight"))
    order = list(group_labels)
    by_source: dict[str, dict[str, float]] = {}
    for line_no, row in rows:
        source = row["source"]
        group = row["group"]
        if group not in order:
            raise ValidationError(
                f"{path}:{line_no}: unknown group {group!r} (price panel has "
                f"{', '.join(order)})"
            )
        entry = by_source.setdefault(source, {})
        if group in entry:
            raise ValidationError(
                f"{path}:{line_no}: duplicate weight for source {source!r}, "
                f"group {group!r}"
            )
        entry[group] = _parse_float(path, line_no, "weight", row["weight"])
    vectors = {}
    for source, entry in by_source.items():
        missing = [g for g in order if g not in entry]
        if missing:
            raise ValidationError(
                f"{path}: source {source!r} is missing weights for "
                f"{', '.join(missing)}"
            )
        try:
            vectors[source] = WeightVector(
                [entry[g] for g in order], label=source,
                group_labels=tuple(order),
            )
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
    return vectors


def load_households(path: str | Path,
                    group_labels: Sequence[str] | None = None) -> list[HouseholdRecord]:
    """Read household micro data; repeated (household, group) rows are summed.

    When ``group_labels`` is omitted, groups are taken in first-appearance
    order. Households keep file order. A household reported under two
    different strata is an error.
    """
    path = Path(path)
    rows = _read_rows(path, ("household_id", "group", "expenditure"),
                      optional=("stratum",))
    order = list(group_labels) if group_labels is not None else []
    known_groups = group_labels is not None
    household_order: list[str] = []
    spend: dict[str, dict[str, float]] = {}
    strata: dict[str, str | None] = {}
    for line_no, row in rows:
        household = row["household_id"]
        group = row["group"]
        if known_groups and group not in order:
            raise ValidationError(
                f"{path}:{line_no}: unknown group {group!r} (price panel has "
                f"{', '.join(order)})"
            )
        if not known_groups and group not in order:
            order.append(group)
        amount = _parse_float(path, line_no, "expenditure", row["expenditure"])
        if amount < 0.0:
            raise ValidationError(
                f"{path}:{line_no}: negative expenditure for household "
                f"{household!r}"
            )
        stratum = row.get("stratum") or None
        if household in strata and strata[household] != stratum:
            raise ValidationError(
                f"{path}:{line_no}: household {household!r} appears under two "
                f"strata ({strata[household]!r} and {stratum!r})"
            )
        if household not in spend:
            household_order.append(household)
            spend[household] = {}
            strata[household] = stratum
        spend[household][group] = spend[household].get(group, 0.0) + amount
    records = []
    for household in household_order:
        expenditures = [spend[household].get(g, 0.0) for g in order]
        records.append(HouseholdRecord(
            household_id=household,
            expenditures=np.array(expenditures),
            stratum_label=strata[household],
        ))
    return records


def load_weight_estimate(path: str | Path,
                         group_labels: Sequence[str]) -> WeightEstimate:
    """Read a precomputed weight estimate: point weights, covariance, count."""
    path = Path(path)
    rows = _read_rows(path, ("kind", "row_group", "col_group", "value"))
    order = list(group_labels)
    positions = {g: i for i, g in enumerate(order)}
    weights: dict[str, float] = {}
    cov_entries: dict[tuple[int, int], float] = {}
    n_households: int | None = None
    for line_no, row in rows:
        kind = row["kind"]
        if kind == "weight":
            group = row["row_group"]
            if group not in positions:
                raise ValidationError(f"{path}:{line_no}: unknown group {group!r}")
            if group in weights:
                raise ValidationError(f"{path}:{line_no}: duplicate weight for {group!r}")
            weights[group] = _parse_float(path, line_no, "value", row["value"])
        elif kind == "cov":
            row_group, col_group = row["row_group"], row["col_group"]
            for group in (row_group, col_group):
                if group not in positions:
                    raise ValidationError(f"{path}:{line_no}: unknown group {group!r}")
            key = (positions[row_group], positions[col_group])
            if key in cov_entries:
                raise ValidationError(
                    f"{path}:{line_no}: duplicate covariance entry "
                    f"({row_group!r}, {col_group!r})"
                )
            cov_entries[key] = _parse_float(path, line_no, "value", row["value"])
        elif kind == "households":
            try:
                n_households = int(row["value"])
            except ValueError:
                raise ValidationError(
                    f"{path}:{line_no}: households count is not an integer: "
                    f"{row['value']!r}"
                ) from None
        else:
            raise ValidationError(
                f"{path}:{line_no}: unknown kind {kind!r} "
                f"(expected weight, cov, or households)"
            )
    missing_weights = [g for g in order if g not in weights]
    if missing_weights:
        raise ValidationError(
            f"{path}: missing weight rows for {', '.join(missing_weights)}"
        )
    m = len(order)
    cov = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            direct = cov_entries.get((i, j))
            mirror = cov_entries.get((j, i))
            if direct is None and mirror is None:
                raise ValidationError(
                    f"{path}: missing covariance entry ({order[i]!r}, {order[j]!r})"
                )
            if direct is not None and mirror is not None and i != j:
                if abs(direct - mirror) > 1e-12 * max(1.0, abs(direct)):
                    raise ValidationError(
                        f"{path}: covariance entries ({order[i]!r}, {order[j]!r}) "
                        f"disagree across the diagonal"
                    )
            cov[i, j] = direct if direct is not None else mirror
    try:
        return WeightEstimate(
            point=WeightVector([weights[g] for g in order], label="survey",
                               group_labels=tuple(order)),
            covariance=cov,
            n_households=n_households,
        )
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def write_prices(path: str | Path, prices: PriceSeries) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["period", "group", "index"])
        for j, period in enumerate(prices.period_labels):
            for i, group in enumerate(prices.group_labels):
                writer.writerow([period, group, repr(float(prices.values[i, j]))])


def write_weights(path: str | Path, vectors: Mapping[str, WeightVector]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["source", "group", "weight"])
        for source, vector in vectors.items():
            labels = vector.group_labels or tuple(
                str(i) for i in range(vector.n_groups)
            )
            for group, weight in zip(labels, vector.w):
                writer.writerow([source, group, repr(float(weight))])


def write_households(path: str | Path, records: Iterable[HouseholdRecord],
                     group_labels: Sequence[str]) -> None:
    records = list(records)
    with_stratum = any(record.stratum_label is not None for record in records)
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        header = ["household_id", "group", "expenditure"]
        if with_stratum:
            header.append("stratum")
        writer.writerow(header)
        for record in records:
            for group, amount in zip(group_labels, record.expenditures):
                row = [record.household_id, group, repr(float(amount))]
                if with_stratum:
                    row.append(record.stratum_label or "")
                writer.writerow(row)


def write_weight_estimate(path: str | Path, estimate: WeightEstimate,
                          group_labels: Sequence[str]) -> None:
    order = list(group_labels)
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["kind", "row_group", "col_group", "value"])
        for group, weight in zip(order, estimate.point.w):
            writer.writerow(["weight", group, "", repr(float(weight))])
        for i, row_group in enumerate(order):
            for j, col_group in enumerate(order):
                if j < i:
                    continue
                writer.writerow([
                    "cov", row_group, col_group,
                    repr(float(estimate.covariance[i, j])),
                ])
        if estimate.n_households is not None:
            writer.writerow(["households", "", "", str(estimate.n_households)])
