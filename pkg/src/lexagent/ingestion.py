"""Builds the combined case dataset.

EU records come from endpoint snapshot files and are cleaned (empty decision
links dropped, violations normalized, company strings parsed, English only).
German case metadata is deduced from the structure of decision links via a
configurable URL grammar; the remaining fields are extracted by prompting a
chat provider with few-shot examples.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .domain import (
    CaseRecord,
    CaseStore,
    UnknownViolation,
    ViolationSchema,
    Vocabulary,
    normalize_violation,
    parse_company_list,
)
from .providers import ChatProvider


class IngestionError(Exception):
    pass


class UnrecognizedUrl(IngestionError):
    def __init__(self, url: str, reason: str):
        super().__init__(f"unrecognized decision URL {url!r}: {reason}")
        self.url = url


class ExtractionFailed(IngestionError):
    pass


@dataclass
class CleaningReport:
    """Counts of records dropped per cleaning rule; merged associatively."""

    total: int = 0
    kept: int = 0
    dropped_empty_link: int = 0
    dropped_non_english: int = 0
    dropped_invalid: int = 0
    notes: list[str] = field(default_factory=list)

    def merge(self, other: "CleaningReport") -> "CleaningReport":
        return CleaningReport(
            total=self.total + other.total,
            kept=self.kept + other.kept,
            dropped_empty_link=self.dropped_empty_link + other.dropped_empty_link,
            dropped_non_english=self.dropped_non_english + other.dropped_non_english,
            dropped_invalid=self.dropped_invalid + other.dropped_invalid,
            notes=self.notes + other.notes,
        )


def clean_eu_cases(
    raw_records: Sequence[dict],
    schema: ViolationSchema,
    vocab: Optional[Vocabulary] = None,
) -> tuple[list[CaseRecord], CleaningReport]:
    """Apply the EU cleaning rules, dropping (and counting) failing records.

    Rules: remove records with empty decision links, keep English only,
    normalize violations through the alias map, parse company strings.
    Order is preserved; failures never abort the batch.
    """
    report = CleaningReport()
    cleaned: list[CaseRecord] = []
    for raw in raw_records:
        report.total += 1
        pdf_url = (raw.get("pdf_url") or "").strip()
        if not pdf_url:
            report.dropped_empty_link += 1
            continue
        language = (raw.get("language") or "").strip()
        if language.lower() != "english":
            report.dropped_non_english += 1
            continue
        try:
            violation = normalize_violation(raw.get("violation", ""), schema)
        except UnknownViolation as exc:
            report.dropped_invalid += 1
            report.notes.append(f"{raw.get('case_id')}: {exc}")
            continue
        companies = raw.get("companies", "")
        if isinstance(companies, str):
            companies = parse_company_list(companies)
        try:
            record = CaseRecord.create(
                case_id=raw.get("case_id", ""),
                case_title=raw.get("case_title", ""),
                jurisdiction="EU",
                violation=violation,
                sector=raw.get("sector", ""),
                companies=companies,
                pdf_url=pdf_url,
                language="English",
                decision_date=raw.get("decision_date"),
                vocab=vocab,
            )
        except Exception as exc:
            report.dropped_invalid += 1
            report.notes.append(f"{raw.get('case_id')}: {exc}")
            continue
        cleaned.append(record)
        report.kept += 1
    return cleaned, report


# --- German decision-link grammar ------------------------------------------


@dataclass(frozen=True)
class BkaLinkMetadata:
    case_id: str
    violation: str
    year: int
    language: str


class UrlGrammar:
    """Ordered path-segment matchers mapping decision-link segments to the
    four fields deducible from a link alone (case id, violation, year,
    language). The anatomy is configuration, not code."""

    def __init__(self, prefix: str, segments: Sequence[dict]):
        self.prefix = prefix
        self.segments = list(segments)

    @staticmethod
    def load(path: Path) -> "UrlGrammar":
        data = json.loads(Path(path).read_text("utf-8"))
        return UrlGrammar(prefix=data["prefix"], segments=data["segments"])

    @staticmethod
    def default() -> "UrlGrammar":
        from .domain import _asset_path

        return UrlGrammar.load(_asset_path("bka_url_grammar.json"))

    def render(self, metadata: BkaLinkMetadata, scheme_host: str = "https://www.") -> str:
        """Inverse of parse_bka_url for metadata expressible in the grammar."""
        values = {
            "case_id": metadata.case_id,
            "violation": metadata.violation,
            "year": str(metadata.year),
            "language": metadata.language,
        }
        parts = []
        for seg in self.segments:
            if "literal" in seg:
                parts.append(seg["literal"])
                continue
            value = values[seg["field"]]
            if "map" in seg:
                inverse = {v: k for k, v in seg["map"].items()}
                parts.append(inverse[value])
            elif seg.get("kind") == "filename_stem":
                parts.append(f"{value}.pdf")
            else:
                parts.append(value)
        return f"{scheme_host}{self.prefix}" + "/".join(parts)


def parse_bka_url(url: str, grammar: Optional[UrlGrammar] = None) -> BkaLinkMetadata:
    """Deduce case id, violation, year, and language from a decision link."""
    grammar = grammar or UrlGrammar.default()
    stripped = re.sub(r"^[a-z]+://", "", url)
    stripped = re.sub(r"^www\.", "", stripped)
    if not stripped.startswith(grammar.prefix):
        raise UnrecognizedUrl(url, f"missing prefix {grammar.prefix!r}")
    path = stripped[len(grammar.prefix) :]
    segments = [s for s in path.split("/") if s]
    if len(segments) != len(grammar.segments):
        raise UnrecognizedUrl(
            url, f"expected {len(grammar.segments)} path segments, got {len(segments)}"
        )
    values: dict[str, str] = {}
    for seg, part in zip(grammar.segments, segments):
        if "literal" in seg:
            if part != seg["literal"]:
                raise UnrecognizedUrl(url, f"expected segment {seg['literal']!r}, got {part!r}")
            continue
        if seg.get("kind") == "filename_stem":
            part = part.rsplit(".", 1)[0]
        if "map" in seg:
            if part not in seg["map"]:
                raise UnrecognizedUrl(url, f"segment {part!r} not in {sorted(seg['map'])}")
            part = seg["map"][part]
        elif "pattern" in seg and not re.fullmatch(seg["pattern"], part):
            raise UnrecognizedUrl(url, f"segment {part!r} does not match {seg['pattern']!r}")
        values[seg["field"]] = part
    return BkaLinkMetadata(
        case_id=values["case_id"],
        violation=values["violation"],
        year=int(values["year"]),
        language=values["language"],
    )


# --- LLM field extraction ---------------------------------------------------


def extract_bka_fields(
    decision_text: str,
    chat: ChatProvider,
    vocab: Vocabulary,
    prompt_template: Optional[str] = None,
) -> dict:
    """Extract case_title, sector, and companies from a decision text.

    The sector must validate against the NACE section vocabulary; an invalid
    sector triggers exactly one re-prompt before giving up.
    """
    if not decision_text.strip():
        raise ValueError("decision_text must be non-empty")
    if prompt_template is None:
        from .domain import _asset_path

        prompt_template = _asset_path("bka_extraction_prompt.txt").read_text("utf-8")
    prompt = prompt_template.format(
        sectors="; ".join(sorted(vocab.sectors)), text=decision_text
    )
    last_error = "no attempt made"
    for attempt in range(2):
        messages = [{"role": "user", "content": prompt}]
        if attempt:
            messages.append(
                {
                    "role": "user",
                    "content": f"The previous output was invalid ({last_error}). "
                    "Reply again with valid JSON and a sector from the allowed list.",
                }
            )
        response = chat.complete(messages, temperature=0.0)
        try:
            data = _parse_json_object(response)
            title = data["case_title"]
            sector = data["sector"]
            companies = data["companies"]
        except (KeyError, TypeError, ValueError) as exc:
            last_error = f"unparseable output: {exc}"
            continue
        if sector not in vocab.sectors:
            last_error = f"sector {sector!r} not in NACE vocabulary"
            continue
        if isinstance(companies, str):
            companies = parse_company_list(companies)
        return {"case_title": title, "sector": sector, "companies": list(companies)}
    raise ExtractionFailed(last_error)


def _parse_json_object(text: str) -> dict:
    """Pull the first JSON object out of a chat response."""
    match = re.search(r"\{.*\}", text, re.DOTALL)
    if not match:
        raise ValueError("no JSON object in response")
    data = json.loads(match.group(0))
    if not isinstance(data, dict):
        raise ValueError("top-level JSON value is not an object")
    return data


def build_german_case(
    url: str,
    decision_text: str,
    chat: ChatProvider,
    vocab: Vocabulary,
    grammar: Optional[UrlGrammar] = None,
) -> CaseRecord:
    """Combine link-deduced and LLM-extracted fields into one record."""
    link_meta = parse_bka_url(url, grammar)
    extracted = extract_bka_fields(decision_text, chat, vocab)
    return CaseRecord.create(
        case_id=link_meta.case_id,
        case_title=extracted["case_title"],
        jurisdiction="Germany",
        violation=link_meta.violation,
        sector=extracted["sector"],
        companies=extracted["companies"],
        pdf_url=url,
        language=link_meta.language,
        decision_date=f"{link_meta.year}-01-01",
        vocab=vocab,
    )


def merge_datasets(eu: Sequence[CaseRecord], de: Sequence[CaseRecord]) -> CaseStore:
    """Union of both corpora; a case_id appearing in both is an error."""
    store = CaseStore(eu)
    for record in de:
        store.add(record)  # raises DuplicateCaseId on collision
    return store


def apply_overrides(records: Sequence[CaseRecord], overrides: dict[str, dict]) -> list[CaseRecord]:
    """Apply manual per-case field overrides (e.g. hand-filled sectors)."""
    out = []
    for record in records:
        patch = overrides.get(record.case_id)
        if patch:
            d = record.to_dict()
            d.update(patch)
            record = CaseRecord.from_dict(d)
        out.append(record)
    return out


def stratified_sample(records: Sequence[CaseRecord], n: int, seed: int = 0) -> list[CaseRecord]:
    """Random sample stratified by violation, for manual extraction review."""
    rng = random.Random(seed)
    by_violation: dict[str, list[CaseRecord]] = {}
    for record in records:
        by_violation.setdefault(record.violation, []).append(record)
    sample: list[CaseRecord] = []
    strata = sorted(by_violation.items())
    while len(sample) < min(n, len(records)):
        for _, bucket in strata:
            if bucket and len(sample) < n:
                sample.append(bucket.pop(rng.randrange(len(bucket))))
    return sample


# --- dataset interchange file ----------------------------------------------


def write_dataset(records: Sequence[CaseRecord], path: Path) -> None:
    """One JSON record per line, the nine metadata fields, dates ISO-8601."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def read_dataset(path: Path) -> list[CaseRecord]:
    records = []
    for line in Path(path).read_text("utf-8").splitlines():
        if line.strip():
            records.append(CaseRecord.from_dict(json.loads(line)))
    return records
