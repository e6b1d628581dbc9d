"""vulnmap: map CVE entries to open-source packages and report the frequencies."""

from .cpe import CpeRecord, MalformedCpe, Part, normalize_component, parse_cpe23
from .fuzzy import EmptyInput, GramProfile, best_match, gram_profile, similarity
from .ingest import (
    CsvStructure,
    CveRecord,
    IndexSet,
    JsonStructure,
    PackageRecord,
    RepoRef,
    VersionRecord,
    build_indexes,
    extract_repo_ref,
    load_cves,
    load_packages,
    load_versions,
)
from .match import (
    Evidence,
    MappingResult,
    PlatformLookup,
    Strategy,
    default_lookup_config,
    extract_reference_links,
    infer_platform,
    load_lookup_config,
    partial_fuzzy_map,
    repository_map,
    run_all,
    strict_name_map,
)
from .report import (
    Report,
    ReportRow,
    cve_per_year,
    export_report,
    license_distribution,
    mapped_cve_per_year,
    platform_project_share,
    top_repo_links,
    versions_per_year,
    vulnerable_package_count,
)

__version__ = "0.1.0"

__all__ = [
    "CpeRecord",
    "MalformedCpe",
    "Part",
    "normalize_component",
    "parse_cpe23",
    "EmptyInput",
    "GramProfile",
    "best_match",
    "gram_profile",
    "similarity",
    "CsvStructure",
    "CveRecord",
    "IndexSet",
    "JsonStructure",
    "PackageRecord",
    "RepoRef",
    "VersionRecord",
    "build_indexes",
    "extract_repo_ref",
    "load_cves",
    "load_packages",
    "load_versions",
    "Evidence",
    "MappingResult",
    "PlatformLookup",
    "Strategy",
    "default_lookup_config",
    "extract_reference_links",
    "infer_platform",
    "load_lookup_config",
    "partial_fuzzy_map",
    "repository_map",
    "run_all",
    "strict_name_map",
    "Report",
    "ReportRow",
    "cve_per_year",
    "export_report",
    "license_distribution",
    "mapped_cve_per_year",
    "platform_project_share",
    "top_repo_links",
    "versions_per_year",
    "vulnerable_package_count",
]
