import pytest
from hypothesis import given
from hypothesis import strategies as st

from lexagent.domain import (
    CaseRecord,
    InvalidCaseRecord,
    QueryVector,
    UnknownViolation,
    ViolationSchema,
    normalize_violation,
    parse_company_list,
)


@pytest.fixture
def schema(vocab):
    return vocab.violations


class TestNormalizeViolation:
    def test_alias_maps_to_canonical(self, schema):
        assert normalize_violation("Article 85 EEC", schema) == "Article 101 TFEU"

    def test_canonical_passes_through(self, schema):
        assert normalize_violation("Article 101 TFEU", schema) == "Article 101 TFEU"

    def test_unknown_raises(self, schema):
        with pytest.raises(UnknownViolation):
            normalize_violation("Article 99 Imaginary", schema)

    def test_idempotent(self, schema):
        for raw in list(schema.alias_map) + list(schema.canonical_values):
            once = normalize_violation(raw, schema)
            assert normalize_violation(once, schema) == once

    def test_alias_map_must_target_canonical(self):
        with pytest.raises(ValueError):
            ViolationSchema(canonical_values=frozenset({"A"}), alias_map={"B": "C"})


class TestParseCompanyList:
    def test_two_elements(self):
        assert parse_company_list("Acme GmbH, Beta SA") == ["Acme GmbH", "Beta SA"]

    def test_empty(self):
        assert parse_company_list("") == []

    def test_messy_input(self):
        # oracle: manual split/trim/filter of " Acme GmbH ,, Beta SA "
        assert parse_company_list(" Acme GmbH ,, Beta SA ") == ["Acme GmbH", "Beta SA"]

    @given(
        st.lists(
            st.text(
                alphabet=st.characters(blacklist_characters=",", blacklist_categories=("Cs", "Zs", "Cc")),
                min_size=1,
            ).map(str.strip).filter(bool),
            max_size=8,
        )
    )
    def test_join_roundtrip(self, names):
        assert parse_company_list(", ".join(names)) == names


class TestCaseRecord:
    def test_create_valid(self, vocab):
        record = CaseRecord.create(
            case_id="AT.1",
            case_title="t",
            jurisdiction="EU",
            violation="Article 101 TFEU",
            sector="K – Financial and insurance activities",
            companies=[" Acme "],
            pdf_url="https://example.org/a.pdf",
            language="English",
            decision_date="2021-05-04",
            vocab=vocab,
        )
        assert record.companies == ("Acme",)
        assert record.decision_date.isoformat() == "2021-05-04"

    @pytest.mark.parametrize(
        "patch",
        [
            {"case_id": "  "},
            {"jurisdiction": "Mars"},
            {"pdf_url": ""},
            {"pdf_url": "not a url"},
            {"companies": ["Acme", "  "]},
        ],
    )
    def test_invalid_rejected(self, patch):
        base = dict(
            case_id="AT.1",
            case_title="t",
            jurisdiction="EU",
            violation="Article 101 TFEU",
            sector="",
            companies=["Acme"],
            pdf_url="https://example.org/a.pdf",
            language="English",
            decision_date=None,
        )
        base.update(patch)
        with pytest.raises(InvalidCaseRecord):
            CaseRecord.create(**base)

    def test_dict_roundtrip(self):
        from conftest import make_case

        case = make_case("AT.42")
        assert CaseRecord.from_dict(case.to_dict()) == case


class TestQueryVectorValidation:
    def test_empty(self):
        assert QueryVector().is_empty()
        assert not QueryVector(case_id="AT.1").is_empty()

    def test_accepts_in_vocabulary(self, vocab):
        qv, dropped = vocab.validate_query_vector(
            {
                "jurisdiction": "EU",
                "violation": "Article 102 TFEU",
                "sector": "K – Financial and insurance activities",
            }
        )
        assert dropped == []
        assert qv.jurisdiction == "EU"
        assert qv.violation == "Article 102 TFEU"

    def test_alias_normalized(self, vocab):
        qv, dropped = vocab.validate_query_vector({"violation": "Article 85 EEC"})
        assert qv.violation == "Article 101 TFEU"
        assert dropped == []

    def test_rejects_out_of_vocabulary(self, vocab):
        qv, dropped = vocab.validate_query_vector(
            {"jurisdiction": "Mars", "violation": "Article 999", "sector": "Z – Nope", "case_id": "AT.1"}
        )
        assert sorted(dropped) == ["jurisdiction", "sector", "violation"]
        assert qv.case_id == "AT.1"
        assert qv.jurisdiction is None

    def test_companies_string_parsed(self, vocab):
        qv, _ = vocab.validate_query_vector({"companies": "Acme, Beta"})
        assert qv.companies == ("Acme", "Beta")
