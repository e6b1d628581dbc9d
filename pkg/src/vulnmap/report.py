"""Frequency analytics over ingested records and mapping results."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import IO, Iterable

from .ingest import CveRecord, PackageRecord, VersionRecord
from .match import MappingResult

OTHERS_LABEL = "Others"
UNSPECIFIED_LABEL = "(unspecified)"

DEFAULT_TOP_K_SHARE = 7
DEFAULT_TOP_K_RANKING = 10


class SinkWrite(OSError):
    """Writing a report to its sink failed."""


@dataclass(frozen=True)
class ReportRow:
    keys: tuple[str, ...]
    count: int
    share: Decimal | None = None


@dataclass
class Report:
    title: str
    group_columns: list[str]
    rows: list[ReportRow]
    metadata: dict = field(default_factory=dict)


def _shares(counts: list[int]) -> list[Decimal]:
    """Percentage shares in hundredths, apportioned to sum to exactly 100.00.

    Plain per-row rounding drifts by up to half a cent per row, which blows
    the documented 0.01 summation tolerance once a table has a handful of
    rows; largest-remainder apportionment keeps every share within half a
    cent of exact while pinning the sum.
    """
    total = sum(counts)
    if total == 0:
        return [Decimal("0.00") for _ in counts]
    exact = [Fraction(c * 10000, total) for c in counts]
    cents = [int(f) for f in exact]
    remainders = sorted(
        range(len(counts)),
        key=lambda i: (-(exact[i] - cents[i]), -counts[i], i),
    )
    for i in remainders[: 10000 - sum(cents)]:
        cents[i] += 1
    return [Decimal(c).scaleb(-2) for c in cents]


def _ranked(counter: Counter) -> list[tuple[str, int]]:
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))


def platform_project_share(
    packages: list[PackageRecord], top_k: int = DEFAULT_TOP_K_SHARE
) -> Report:
    """Project counts and percentage shares of the top-k package managers."""
    counter = Counter(pkg.platform for pkg in packages)
    ranked = _ranked(counter)
    head, tail = ranked[:top_k], ranked[top_k:]
    counts = [c for _, c in head]
    labels = [p for p, _ in head]
    if tail:
        labels.append(OTHERS_LABEL)
        counts.append(sum(c for _, c in tail))
    shares = _shares(counts)
    rows = [
        ReportRow(keys=(label,), count=count, share=share)
        for label, count, share in zip(labels, counts, shares)
    ]
    return Report(
        title="Projects per package manager",
        group_columns=["platform"],
        rows=rows,
        metadata={
            "top_k": top_k,
            "total_projects": sum(counter.values()),
            "aggregated_platforms": len(tail),
            "count_basis": "distinct package_key",
        },
    )


def license_distribution(
    packages: list[PackageRecord], top_k: int = DEFAULT_TOP_K_SHARE
) -> Report:
    """License counts and shares; unlicensed packages are reported unranked.

    Shares are computed over licensed packages only, so the "(unspecified)"
    row carries a count but no share.
    """
    counter: Counter = Counter()
    unspecified = 0
    for pkg in packages:
        if pkg.license:
            counter[pkg.license] += 1
        else:
            unspecified += 1
    ranked = _ranked(counter)
    head, tail = ranked[:top_k], ranked[top_k:]
    counts = [c for _, c in head]
    labels = [label for label, _ in head]
    if tail:
        labels.append(OTHERS_LABEL)
        counts.append(sum(c for _, c in tail))
    shares = _shares(counts)
    rows = [
        ReportRow(keys=(label,), count=count, share=share)
        for label, count, share in zip(labels, counts, shares)
    ]
    if unspecified:
        rows.append(ReportRow(keys=(UNSPECIFIED_LABEL,), count=unspecified, share=None))
    return Report(
        title="License distribution",
        group_columns=["license"],
        rows=rows,
        metadata={
            "top_k": top_k,
            "licensed_packages": sum(counter.values()),
            "unlicensed_packages": unspecified,
        },
    )


def versions_per_year(versions: Iterable[VersionRecord]) -> Report:
    """Published version counts grouped by (platform, year).

    Accepts any iterable, so a 30M-row versions dump can be aggregated
    straight off the streaming loader.
    """
    counter = Counter((v.platform, str(v.published.year)) for v in versions)
    rows = [
        ReportRow(keys=keys, count=count)
        for keys, count in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return Report(
        title="Published versions per package manager and year",
        group_columns=["platform", "year"],
        rows=rows,
        metadata={"total_versions": sum(counter.values())},
    )


def cve_per_year(cves: Iterable[CveRecord]) -> Report:
    """CVE entry counts per year (published date, falling back to id year)."""
    counter = Counter(str(cve.year) for cve in cves)
    rows = [
        ReportRow(keys=(year,), count=count)
        for year, count in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return Report(
        title="New CVE entries per year",
        group_columns=["year"],
        rows=rows,
        metadata={"total_cves": sum(counter.values())},
    )


def vulnerable_package_count(
    mappings: dict[str, list[MappingResult]], top_k: int = DEFAULT_TOP_K_RANKING
) -> Report:
    """Distinct vulnerable packages per (strategy, platform).

    Rows carry distinct package counts; (package, CVE) pair counts are
    exposed in metadata for comparison.
    """
    distinct: dict[str, dict[str, set[str]]] = {}
    pairs: dict[str, dict[str, int]] = {}
    for strategy_key, results in mappings.items():
        per_platform = distinct.setdefault(strategy_key, {})
        pair_counter = pairs.setdefault(strategy_key, {})
        for result in results:
            per_platform.setdefault(result.platform, set()).add(result.package_key)
            pair_counter[result.platform] = pair_counter.get(result.platform, 0) + 1

    ranked_rows: list[ReportRow] = []
    others_rows: list[ReportRow] = []
    for strategy_key in sorted(distinct):
        counter = Counter(
            {platform: len(keys) for platform, keys in distinct[strategy_key].items()}
        )
        ranked = _ranked(counter)
        head, tail = ranked[:top_k], ranked[top_k:]
        ranked_rows.extend(
            ReportRow(keys=(strategy_key, platform), count=count)
            for platform, count in head
        )
        if tail:
            others_rows.append(
                ReportRow(
                    keys=(strategy_key, OTHERS_LABEL),
                    count=sum(c for _, c in tail),
                )
            )
    ranked_rows.sort(key=lambda r: (-r.count, r.keys))
    others_rows.sort(key=lambda r: (-r.count, r.keys))
    return Report(
        title="Vulnerable package count per strategy and package manager",
        group_columns=["strategy", "platform"],
        rows=ranked_rows + others_rows,
        metadata={
            "top_k": top_k,
            "count_basis": "distinct packages",
            "pair_counts": {k: dict(sorted(v.items())) for k, v in pairs.items()},
        },
    )


def mapped_cve_per_year(
    mappings: list[MappingResult], cves: list[CveRecord]
) -> Report:
    """Distinct mapped CVE counts per (platform, year)."""
    year_of = {cve.cve_id: str(cve.year) for cve in cves}
    cells: dict[tuple[str, str], set[str]] = {}
    for result in mappings:
        year = year_of.get(result.cve_id)
        if year is None:
            continue
        cells.setdefault((result.platform, year), set()).add(result.cve_id)
    counter = Counter({keys: len(ids) for keys, ids in cells.items()})
    rows = [
        ReportRow(keys=keys, count=count)
        for keys, count in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return Report(
        title="Mapped CVE entries per package manager and year",
        group_columns=["platform", "year"],
        rows=rows,
        metadata={"count_basis": "distinct cve_id"},
    )


def top_repo_links(
    packages: list[PackageRecord], k: int = DEFAULT_TOP_K_RANKING
) -> Report:
    """The k most frequent repository links across packages."""
    counter = Counter(pkg.repo.repo_link for pkg in packages if pkg.repo is not None)
    rows = [
        ReportRow(keys=(link,), count=count) for link, count in _ranked(counter)[:k]
    ]
    return Report(
        title="Most common repository links",
        group_columns=["repo_link"],
        rows=rows,
        metadata={"k": k, "distinct_links": len(counter)},
    )


def _report_to_csv(report: Report, out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([*report.group_columns, "count", "share"])
    for row in report.rows:
        share = "" if row.share is None else str(row.share)
        writer.writerow([*row.keys, row.count, share])


def _report_to_json(report: Report, out: IO[str]) -> None:
    rows = []
    for row in report.rows:
        entry: dict = dict(zip(report.group_columns, row.keys))
        entry["count"] = row.count
        entry["share"] = None if row.share is None else float(row.share)
        rows.append(entry)
    doc = {
        "title": report.title,
        "group_columns": report.group_columns,
        "rows": rows,
        "metadata": report.metadata,
    }
    json.dump(doc, out, indent=2, ensure_ascii=False)
    out.write("\n")


def export_report(report: Report, format: str, sink: str | Path | IO[str]) -> None:
    """Write a report as CSV (RFC 4180, LF) or JSON; byte-stable across runs."""
    if format not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {format!r}")
    writer = _report_to_csv if format == "csv" else _report_to_json
    try:
        if isinstance(sink, (str, Path)):
            with open(sink, "w", encoding="utf-8", newline="") as fh:
                writer(report, fh)
        else:
            writer(report, sink)
    except OSError as exc:
        raise SinkWrite(f"cannot write report: {exc}") from exc
