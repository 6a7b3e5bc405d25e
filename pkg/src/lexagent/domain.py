"""Shared domain types and controlled vocabularies.

Pure data structures plus the validation rules every other module relies on:
case records, the violation schema with old-article aliases, NACE sector
sections, and partial query vectors extracted from user questions.
"""

from __future__ import annotations

import datetime as _dt
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

JURISDICTIONS = ("EU", "Germany")

_URL_RE = re.compile(r"^[a-zA-Z][a-zA-Z0-9+.-]*://\S+$")


class DomainError(Exception):
    """Base class for domain validation failures."""


class UnknownViolation(DomainError):
    def __init__(self, raw: str):
        super().__init__(f"violation {raw!r} is neither a canonical value nor a known alias")
        self.raw = raw


class InvalidCaseRecord(DomainError):
    pass


class DuplicateCaseId(DomainError):
    def __init__(self, case_id: str):
        super().__init__(f"duplicate case_id {case_id!r}")
        self.case_id = case_id


@dataclass(frozen=True)
class ViolationSchema:
    """Canonical violation values plus a mapping of superseded article names."""

    canonical_values: frozenset[str]
    alias_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for alias, target in self.alias_map.items():
            if target not in self.canonical_values:
                raise ValueError(f"alias {alias!r} maps to non-canonical {target!r}")

    def is_valid(self, value: str) -> bool:
        return value in self.canonical_values


def normalize_violation(raw: str, schema: ViolationSchema) -> str:
    """Map a raw violation string to its canonical value.

    Aliases (superseded article names) resolve through the alias map;
    canonical values pass through unchanged.
    """
    raw = raw.strip()
    if raw in schema.alias_map:
        return schema.alias_map[raw]
    if raw in schema.canonical_values:
        return raw
    raise UnknownViolation(raw)


def parse_company_list(raw: str) -> list[str]:
    """Split a comma-separated company string, trimming and dropping empties."""
    return [part.strip() for part in raw.split(",") if part.strip()]


def normalize_company(name: str) -> str:
    """Normalization used for company membership checks: trim + casefold."""
    return name.strip().casefold()


def is_url(value: str) -> bool:
    return bool(_URL_RE.match(value))


@dataclass(frozen=True)
class CaseRecord:
    """One case's nine metadata fields; the unit of search results and session memory."""

    case_id: str
    case_title: str
    jurisdiction: str
    violation: str
    sector: str
    companies: tuple[str, ...]
    pdf_url: str
    language: str
    decision_date: Optional[_dt.date]

    @staticmethod
    def create(
        case_id: str,
        case_title: str,
        jurisdiction: str,
        violation: str,
        sector: str,
        companies: Iterable[str],
        pdf_url: str,
        language: str,
        decision_date,
        *,
        vocab: Optional["Vocabulary"] = None,
    ) -> "CaseRecord":
        """Validating constructor; raises InvalidCaseRecord on any broken invariant."""
        if not case_id or not case_id.strip():
            raise InvalidCaseRecord("case_id must be non-empty")
        if jurisdiction not in JURISDICTIONS:
            raise InvalidCaseRecord(f"jurisdiction {jurisdiction!r} not in {JURISDICTIONS}")
        if not pdf_url or not is_url(pdf_url):
            raise InvalidCaseRecord(f"pdf_url {pdf_url!r} is not a URL")
        cleaned = tuple(c.strip() for c in companies)
        if any(not c for c in cleaned):
            raise InvalidCaseRecord("companies must not contain empty entries")
        if isinstance(decision_date, str):
            decision_date = _dt.date.fromisoformat(decision_date)
        if vocab is not None:
            if not vocab.violations.is_valid(violation):
                raise InvalidCaseRecord(f"violation {violation!r} not in schema")
            if sector and sector not in vocab.sectors:
                raise InvalidCaseRecord(f"sector {sector!r} not in NACE section list")
        return CaseRecord(
            case_id=case_id.strip(),
            case_title=case_title,
            jurisdiction=jurisdiction,
            violation=violation,
            sector=sector,
            companies=cleaned,
            pdf_url=pdf_url,
            language=language,
            decision_date=decision_date,
        )

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "case_title": self.case_title,
            "jurisdiction": self.jurisdiction,
            "violation": self.violation,
            "sector": self.sector,
            "companies": list(self.companies),
            "pdf_url": self.pdf_url,
            "language": self.language,
            "decision_date": self.decision_date.isoformat() if self.decision_date else None,
        }

    @staticmethod
    def from_dict(d: dict) -> "CaseRecord":
        date = d.get("decision_date")
        return CaseRecord(
            case_id=d["case_id"],
            case_title=d.get("case_title", ""),
            jurisdiction=d["jurisdiction"],
            violation=d.get("violation", ""),
            sector=d.get("sector", ""),
            companies=tuple(d.get("companies", [])),
            pdf_url=d.get("pdf_url", ""),
            language=d.get("language", ""),
            decision_date=_dt.date.fromisoformat(date) if date else None,
        )


@dataclass(frozen=True)
class QueryVector:
    """Partial filter over six case fields, extracted from a user question."""

    case_id: Optional[str] = None
    case_title: Optional[str] = None
    jurisdiction: Optional[str] = None
    violation: Optional[str] = None
    sector: Optional[str] = None
    companies: Optional[tuple[str, ...]] = None

    DIMENSIONS = ("case_id", "case_title", "jurisdiction", "violation", "sector", "companies")

    def is_empty(self) -> bool:
        return all(getattr(self, dim) is None for dim in self.DIMENSIONS)

    def present_dimensions(self) -> list[str]:
        return [dim for dim in self.DIMENSIONS if getattr(self, dim) is not None]

    def to_dict(self) -> dict:
        out = {}
        for dim in self.DIMENSIONS:
            value = getattr(self, dim)
            if value is not None:
                out[dim] = list(value) if dim == "companies" else value
        return out


@dataclass
class Vocabulary:
    """Controlled vocabularies: violation schema, NACE sections, jurisdictions."""

    violations: ViolationSchema
    sectors: frozenset[str]

    def validate_query_vector(self, raw: dict) -> tuple[QueryVector, list[str]]:
        """Build a QueryVector from raw extracted fields, dropping any
        schema-constrained dimension whose value is outside its vocabulary.

        Returns the vector and the list of dropped dimension names.
        """
        dropped: list[str] = []
        fields: dict = {}
        for dim in QueryVector.DIMENSIONS:
            value = raw.get(dim)
            if value in (None, "", [], ()):
                continue
            if dim == "jurisdiction" and value not in JURISDICTIONS:
                dropped.append(dim)
                continue
            if dim == "violation":
                try:
                    value = normalize_violation(value, self.violations)
                except UnknownViolation:
                    dropped.append(dim)
                    continue
            if dim == "sector" and value not in self.sectors:
                dropped.append(dim)
                continue
            if dim == "companies":
                if isinstance(value, str):
                    value = parse_company_list(value)
                value = tuple(value)
                if not value:
                    continue
            fields[dim] = value
        return QueryVector(**fields), dropped


@dataclass(frozen=True)
class Embedding:
    """Fixed-length vector tagged with the profile it was produced under.

    Chunk indexing and title matching use different embedding models, so
    cross-profile comparisons are rejected.
    """

    values: tuple[float, ...]
    profile: str  # "chunk" or "title"


class CaseStore:
    """In-memory collection of CaseRecords, unique by case_id."""

    def __init__(self, records: Iterable[CaseRecord] = ()):
        self._by_id: dict[str, CaseRecord] = {}
        for record in records:
            self.add(record)

    def add(self, record: CaseRecord) -> None:
        if record.case_id in self._by_id:
            raise DuplicateCaseId(record.case_id)
        self._by_id[record.case_id] = record

    def get(self, case_id: str) -> Optional[CaseRecord]:
        return self._by_id.get(case_id)

    def __contains__(self, case_id: str) -> bool:
        return case_id in self._by_id

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(self._by_id.values())


# --- vocabulary loading ----------------------------------------------------

def _asset_path(name: str) -> Path:
    return Path(str(resources.files("lexagent").joinpath("assets", name)))


def load_violation_schema(
    canonical_file: Optional[Path] = None, alias_file: Optional[Path] = None
) -> ViolationSchema:
    """Load canonical violations (one per line) and aliases (alias<TAB>canonical)."""
    canonical_file = canonical_file or _asset_path("violations.txt")
    alias_file = alias_file or _asset_path("violation_aliases.tsv")
    canonical = frozenset(
        line.strip() for line in canonical_file.read_text("utf-8").splitlines() if line.strip()
    )
    aliases: dict[str, str] = {}
    if alias_file.exists():
        for line in alias_file.read_text("utf-8").splitlines():
            if not line.strip():
                continue
            alias, target = line.split("\t")
            aliases[alias.strip()] = target.strip()
    return ViolationSchema(canonical_values=canonical, alias_map=aliases)


def load_nace_sections(path: Optional[Path] = None) -> frozenset[str]:
    path = path or _asset_path("nace_sections.txt")
    return frozenset(
        line.strip() for line in path.read_text("utf-8").splitlines() if line.strip()
    )


def default_vocabulary() -> Vocabulary:
    return Vocabulary(violations=load_violation_schema(), sectors=load_nace_sections())
