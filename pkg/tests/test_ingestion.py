import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_case
from lexagent.domain import DuplicateCaseId
from lexagent.ingestion import (
    BkaLinkMetadata,
    ExtractionFailed,
    UrlGrammar,
    UnrecognizedUrl,
    apply_overrides,
    build_german_case,
    clean_eu_cases,
    extract_bka_fields,
    merge_datasets,
    parse_bka_url,
    read_dataset,
    stratified_sample,
    write_dataset,
)
from lexagent.providers import ScriptedChatProvider


def raw_eu(case_id, pdf_url="https://example.org/d.pdf", language="English",
           violation="Article 101 TFEU", companies="Acme GmbH, Beta SA", **kw):
    record = {
        "case_id": case_id,
        "case_title": f"Case {case_id}",
        "violation": violation,
        "companies": companies,
        "sector": "C – Manufacturing",
        "pdf_url": pdf_url,
        "language": language,
        "decision_date": "2019-03-05",
    }
    record.update(kw)
    return record


class TestCleanEuCases:
    def test_empty_input(self, vocab):
        cleaned, report = clean_eu_cases([], vocab.violations)
        assert cleaned == [] and report.total == 0

    def test_empty_link_dropped(self, vocab):
        cleaned, report = clean_eu_cases([raw_eu("AT.1", pdf_url="")], vocab.violations)
        assert cleaned == []
        assert report.dropped_empty_link == 1

    def test_ten_record_fixture(self, vocab):
        # oracle: the three cleaning rules applied by hand to this fixture:
        # 3 empty links and 2 non-English records drop; the alias normalizes.
        raws = [
            raw_eu("AT.1"),
            raw_eu("AT.2", pdf_url=""),
            raw_eu("AT.3", violation="Article 85 EEC"),
            raw_eu("AT.4", language="German"),
            raw_eu("AT.5"),
            raw_eu("AT.6", pdf_url=""),
            raw_eu("AT.7", language="French"),
            raw_eu("AT.8"),
            raw_eu("AT.9", pdf_url=""),
            raw_eu("AT.10"),
        ]
        cleaned, report = clean_eu_cases(raws, vocab.violations, vocab)
        assert [c.case_id for c in cleaned] == ["AT.1", "AT.3", "AT.5", "AT.8", "AT.10"]
        assert report.kept == 5
        assert report.dropped_empty_link == 3
        assert report.dropped_non_english == 2
        by_id = {c.case_id: c for c in cleaned}
        assert by_id["AT.3"].violation == "Article 101 TFEU"

    def test_companies_parsed_and_invariants_hold(self, vocab):
        cleaned, _ = clean_eu_cases([raw_eu("AT.1", companies=" A ,, B ")], vocab.violations, vocab)
        assert cleaned[0].companies == ("A", "B")
        assert cleaned[0].language == "English"
        assert cleaned[0].jurisdiction == "EU"


GRAMMAR = UrlGrammar.default()
BKA_URL = (
    "https://www.bundeskartellamt.de/SharedDocs/Entscheidung/"
    "DE/Entscheidungen/Fusionskontrolle/2020/B4-21-20.pdf"
)


class TestParseBkaUrl:
    def test_deduces_four_fields(self):
        meta = parse_bka_url(BKA_URL, GRAMMAR)
        assert meta == BkaLinkMetadata(
            case_id="B4-21-20", violation="Section 35 GWB", year=2020, language="German"
        )

    def test_other_year(self):
        meta = parse_bka_url(BKA_URL.replace("2020", "1999", 1), GRAMMAR)
        assert meta.year == 1999

    def test_missing_prefix_rejected(self):
        with pytest.raises(UnrecognizedUrl):
            parse_bka_url("https://www.bundeskartellamt.de/OtherDocs/x.pdf", GRAMMAR)

    def test_bad_segment_rejected(self):
        with pytest.raises(UnrecognizedUrl):
            parse_bka_url(BKA_URL.replace("Fusionskontrolle", "Unknown"), GRAMMAR)

    @given(
        st.builds(
            BkaLinkMetadata,
            case_id=st.from_regex(r"B\d{1,2}-\d{1,3}-\d{2}", fullmatch=True),
            violation=st.sampled_from(["Section 35 GWB", "Section 1 GWB", "Section 19 GWB"]),
            year=st.integers(min_value=1990, max_value=2030),
            language=st.sampled_from(["German", "English"]),
        )
    )
    def test_render_parse_roundtrip(self, meta):
        assert parse_bka_url(GRAMMAR.render(meta), GRAMMAR) == meta


class TestExtractBkaFields:
    GOOD = json.dumps(
        {
            "case_title": "Merger of two regional banks",
            "sector": "K – Financial and insurance activities",
            "companies": ["BankHaus AG", "RegioBank"],
        }
    )

    def test_passthrough_of_valid_extraction(self, vocab):
        chat = ScriptedChatProvider([self.GOOD])
        fields = extract_bka_fields("decision text", chat, vocab)
        assert fields["sector"] == "K – Financial and insurance activities"
        assert fields["companies"] == ["BankHaus AG", "RegioBank"]

    def test_invalid_sector_twice_fails(self, vocab):
        bad = json.dumps({"case_title": "x", "sector": "Z – Nonexistent", "companies": []})
        chat = ScriptedChatProvider([bad, bad])
        with pytest.raises(ExtractionFailed):
            extract_bka_fields("decision text", chat, vocab)
        assert len(chat.calls) == 2  # exactly one re-prompt

    def test_invalid_then_valid_succeeds(self, vocab):
        bad = json.dumps({"case_title": "x", "sector": "Z – Nope", "companies": []})
        chat = ScriptedChatProvider([bad, self.GOOD])
        assert extract_bka_fields("text", chat, vocab)["case_title"] == "Merger of two regional banks"

    def test_empty_text_rejected(self, vocab):
        with pytest.raises(ValueError):
            extract_bka_fields("  ", ScriptedChatProvider(["x"]), vocab)

    def test_build_german_case(self, vocab):
        chat = ScriptedChatProvider([self.GOOD])
        record = build_german_case(BKA_URL, "decision text", chat, vocab, GRAMMAR)
        assert record.case_id == "B4-21-20"
        assert record.jurisdiction == "Germany"
        assert record.violation == "Section 35 GWB"
        assert record.language == "German"
        assert record.sector == "K – Financial and insurance activities"


class TestMergeDatasets:
    def test_disjoint_union(self):
        eu = [make_case("AT.1"), make_case("AT.2"), make_case("AT.3")]
        de = [make_case("B1-1-20", jurisdiction="Germany"), make_case("B2-2-20", jurisdiction="Germany")]
        store = merge_datasets(eu, de)
        assert len(store) == 5

    def test_collision(self):
        with pytest.raises(DuplicateCaseId):
            merge_datasets([make_case("AT.1")], [make_case("AT.1")])

    def test_union_cardinality(self):
        eu = [make_case(f"AT.{i}") for i in range(20)]
        de = [make_case(f"B1-{i}-20", jurisdiction="Germany") for i in range(15)]
        assert len(merge_datasets(eu, de)) == len(eu) + len(de)


class TestDatasetFile:
    def test_roundtrip(self, tmp_path):
        records = [make_case("AT.1"), make_case("B1-2-20", jurisdiction="Germany")]
        path = tmp_path / "cases.jsonl"
        write_dataset(records, path)
        assert read_dataset(path) == records
        first = json.loads(path.read_text().splitlines()[0])
        assert set(first) == {
            "case_id", "case_title", "jurisdiction", "violation", "sector",
            "companies", "pdf_url", "language", "decision_date",
        }
        assert isinstance(first["companies"], list)

    def test_overrides(self):
        records = [make_case("AT.1", sector="")]
        patched = apply_overrides(records, {"AT.1": {"sector": "C – Manufacturing"}})
        assert patched[0].sector == "C – Manufacturing"

    def test_stratified_sample_covers_strata(self):
        records = [make_case(f"AT.{i}", violation=v) for i, v in
                   enumerate(["Article 101 TFEU"] * 6 + ["Article 102 TFEU"] * 6)]
        sample = stratified_sample(records, 4, seed=1)
        assert len(sample) == 4
        assert {c.violation for c in sample} == {"Article 101 TFEU", "Article 102 TFEU"}
