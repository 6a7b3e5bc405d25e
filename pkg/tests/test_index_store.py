import io
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import httpx
from conftest import make_case
from lexagent.domain import Embedding
from lexagent.index_store import (
    CHUNK_COLLECTION,
    CHUNK_PROFILE,
    DocumentChunk,
    InProcessVectorStore,
    MalformedDocument,
    ProfileMismatch,
    RemoteVectorStore,
    TITLE_COLLECTION,
    TITLE_PROFILE,
    ZeroVector,
    chunk_document,
    cosine_similarity,
    embed_batch,
    extract_pdf_pages,
    index_case,
    query_chunks,
    tokenize,
)
from lexagent.providers import HashEmbeddingProvider


def make_pdf(pages_text):
    from reportlab.lib.pagesizes import A4
    from reportlab.pdfgen import canvas

    buf = io.BytesIO()
    c = canvas.Canvas(buf, pagesize=A4)
    for text in pages_text:
        y = 800
        for line in text.splitlines():
            c.drawString(40, y, line)
            y -= 14
        c.showPage()
    c.save()
    return buf.getvalue()


class TestExtractPdfPages:
    def test_single_page_known_text(self):
        pages = extract_pdf_pages(make_pdf(["Market definition follows."]))
        assert len(pages) == 1
        assert pages[0][0] == 1
        assert "Market definition follows." in pages[0][1]

    def test_empty_bytes_malformed(self):
        with pytest.raises(MalformedDocument):
            extract_pdf_pages(b"")

    def test_not_a_pdf(self):
        with pytest.raises(MalformedDocument):
            extract_pdf_pages(b"hello world")

    def test_three_pages_in_order(self):
        pages = extract_pdf_pages(make_pdf(["alpha one", "bravo two", "charlie three"]))
        assert [n for n, _ in pages] == [1, 2, 3]
        assert "alpha" in pages[0][1]
        assert "bravo" in pages[1][1]
        assert "charlie" in pages[2][1]


def words(n, start=0):
    return " ".join(f"w{start + i}" for i in range(n))


class TestChunkDocument:
    def test_under_chunk_size_single_chunk(self):
        chunks = chunk_document([(1, words(500))], case_id="C")
        assert len(chunks) == 1
        assert chunks[0].page == 1

    def test_2028_token_page_two_chunks(self):
        # oracle: token arithmetic with a 20-token overlap. Chunk 1 holds
        # tokens 1..1024 (1-based), chunk 2 holds tokens 1005..2028.
        chunks = chunk_document([(1, words(2028))], case_id="C")
        assert len(chunks) == 2
        t1, t2 = tokenize(chunks[0].text), tokenize(chunks[1].text)
        assert len(t1) == 1024
        assert t1[0] == "w0" and t1[-1] == "w1023"
        assert t2[0] == "w1004" and t2[-1] == "w2027"
        assert t1[-20:] == t2[:20]

    def test_page_of_first_token(self):
        chunks = chunk_document([(1, words(1030)), (2, words(600, start=1030))], case_id="C")
        # chunk 2 starts at token index 1004, still on page 1; a later chunk
        # starting past token 1030 would be on page 2
        assert chunks[0].page == 1
        assert chunks[1].page == 1
        single = chunk_document([(1, words(3)), (2, words(5, start=3))], case_id="C", chunk_size=4, overlap=1)
        assert single[1].page == 2  # first token of second chunk sits on page 2

    def test_empty_document(self):
        assert chunk_document([(1, "")]) == []

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            chunk_document([(1, "a")], chunk_size=10, overlap=10)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=1, max_value=5000), st.integers(min_value=0, max_value=3))
    def test_coverage_and_overlap_invariants(self, n_tokens, extra_pages):
        # split tokens across 1+extra_pages pages
        per_page = max(1, n_tokens // (extra_pages + 1))
        pages, start = [], 0
        page_no = 1
        while start < n_tokens:
            count = min(per_page, n_tokens - start)
            pages.append((page_no, words(count, start=start)))
            start += count
            page_no += 1
        chunks = chunk_document(pages, case_id="C")
        source = [f"w{i}" for i in range(n_tokens)]
        rebuilt = []
        for i, chunk in enumerate(chunks):
            toks = tokenize(chunk.text)
            assert len(toks) <= 1024
            if i > 0:
                prev = tokenize(chunks[i - 1].text)
                shared = min(20, len(toks))
                assert prev[-shared:] == toks[:shared]
                rebuilt.extend(toks[shared:])
            else:
                rebuilt.extend(toks)
        assert rebuilt == source


class TestCosineSimilarity:
    def test_identity(self):
        v = Embedding(values=(0.6, 0.8), profile=TITLE_PROFILE)
        assert cosine_similarity(v, v) == pytest.approx(1.0)

    def test_orthogonal(self):
        a = Embedding(values=(1.0, 0.0), profile=TITLE_PROFILE)
        b = Embedding(values=(0.0, 1.0), profile=TITLE_PROFILE)
        assert cosine_similarity(a, b) == pytest.approx(0.0)

    def test_hand_computed(self):
        # dot = 2+2+4 = 8; |a| = |b| = 3; 8/9
        a = Embedding(values=(1.0, 2.0, 2.0), profile=TITLE_PROFILE)
        b = Embedding(values=(2.0, 1.0, 2.0), profile=TITLE_PROFILE)
        assert cosine_similarity(a, b) == pytest.approx(8 / 9)

    def test_zero_vector(self):
        a = Embedding(values=(0.0, 0.0), profile=TITLE_PROFILE)
        b = Embedding(values=(1.0, 0.0), profile=TITLE_PROFILE)
        with pytest.raises(ZeroVector):
            cosine_similarity(a, b)

    def test_profile_mismatch(self):
        a = Embedding(values=(1.0,), profile=TITLE_PROFILE)
        b = Embedding(values=(1.0,), profile=CHUNK_PROFILE)
        with pytest.raises(ProfileMismatch):
            cosine_similarity(a, b)

    @given(st.lists(st.floats(min_value=-5, max_value=5), min_size=3, max_size=3),
           st.floats(min_value=0.1, max_value=10))
    def test_scale_invariance_and_symmetry(self, values, scale):
        if all(abs(v) < 1e-6 for v in values):
            return
        a = Embedding(values=tuple(values), profile=TITLE_PROFILE)
        b = Embedding(values=(1.0, 2.0, -1.0), profile=TITLE_PROFILE)
        scaled = Embedding(values=tuple(v * scale for v in values), profile=TITLE_PROFILE)
        assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a))
        assert cosine_similarity(scaled, b) == pytest.approx(cosine_similarity(a, b), abs=1e-6)


class TestEmbedBatch:
    def test_empty(self):
        assert embed_batch([], HashEmbeddingProvider(), CHUNK_PROFILE) == []

    def test_contract(self):
        provider = HashEmbeddingProvider()
        out = embed_batch(["a", "b"], provider, CHUNK_PROFILE)
        assert len(out) == 2
        assert all(len(e.values) == provider.dimension(CHUNK_PROFILE) for e in out)
        assert all(e.profile == CHUNK_PROFILE for e in out)

    def test_deterministic(self):
        provider = HashEmbeddingProvider()
        [a1] = embed_batch(["same text"], provider, CHUNK_PROFILE)
        [a2] = embed_batch(["same text"], HashEmbeddingProvider(), CHUNK_PROFILE)
        assert a1 == a2


def chunks_for(case_id, n, url="https://example.org/d.pdf"):
    return [
        DocumentChunk(chunk_id=f"{case_id}:{i}", case_id=case_id, text=f"chunk {i} text", page=i + 1,
                      source_url=url)
        for i in range(n)
    ]


@pytest.fixture
def store():
    return InProcessVectorStore()


@pytest.fixture
def embedder():
    return HashEmbeddingProvider()


class TestIndexAndQuery:
    def test_zero_chunks_title_still_written(self, store, embedder):
        case = make_case("AT.1")
        assert index_case(case, [], store, embedder) == 0
        assert store.count(TITLE_COLLECTION) == 1

    def test_reindex_idempotent(self, store, embedder):
        case = make_case("AT.1")
        chunks = chunks_for("AT.1", 4)
        index_case(case, chunks, store, embedder)
        before = store.count(CHUNK_COLLECTION)
        index_case(case, chunks, store, embedder)
        assert store.count(CHUNK_COLLECTION) == before

    def test_seven_chunk_count(self, store, embedder):
        case = make_case("AT.1")
        index_case(case, chunks_for("AT.1", 7), store, embedder)
        assert store.count(CHUNK_COLLECTION, {"case_id": "AT.1"}) == 7

    def test_payload_carries_citation_metadata(self, store, embedder):
        index_case(make_case("AT.1"), chunks_for("AT.1", 2), store, embedder)
        for entry in store.scan(CHUNK_COLLECTION):
            assert entry["payload"]["page"] >= 1
            assert entry["payload"]["source_url"]

    def test_chunk_ownership_enforced(self, store, embedder):
        with pytest.raises(ValueError):
            index_case(make_case("AT.1"), chunks_for("AT.2", 1), store, embedder)

    def test_query_filter_and_cap(self, store, embedder):
        index_case(make_case("AT.1"), chunks_for("AT.1", 20), store, embedder)
        index_case(make_case("AT.2"), chunks_for("AT.2", 4), store, embedder)
        [qvec] = embed_batch(["question"], embedder, CHUNK_PROFILE)
        results = query_chunks(store, qvec, "AT.1", top_k=8)
        assert len(results) == 8
        assert all(c.case_id == "AT.1" for c in results)
        assert query_chunks(store, qvec, "AT.9", top_k=8) == []

    def test_query_matches_bruteforce_order(self, store, embedder):
        index_case(make_case("AT.1"), chunks_for("AT.1", 5), store, embedder)
        [qvec] = embed_batch(["how was the market defined?"], embedder, CHUNK_PROFILE)
        results = query_chunks(store, qvec, "AT.1", top_k=5)

        def cos(u, v):
            dot = sum(a * b for a, b in zip(u, v))
            return dot / (math.sqrt(sum(a * a for a in u)) * math.sqrt(sum(b * b for b in v)))

        expected = sorted(
            store.scan(CHUNK_COLLECTION, {"case_id": "AT.1"}),
            key=lambda e: (-cos(qvec.values, e["vector"]), e["payload"]["page"], e["id"]),
        )
        assert [c.chunk_id for c in results] == [e["id"] for e in expected]


class TestPersistence:
    def test_save_load_roundtrip(self, tmp_path, embedder):
        store = InProcessVectorStore()
        store.declare_collection(CHUNK_COLLECTION, CHUNK_PROFILE, embedder.dimension(CHUNK_PROFILE))
        store.declare_collection(TITLE_COLLECTION, TITLE_PROFILE, embedder.dimension(TITLE_PROFILE))
        index_case(make_case("AT.1"), chunks_for("AT.1", 3), store, embedder)
        store.save(tmp_path / "store")

        loaded = InProcessVectorStore(tmp_path / "store")
        assert loaded.manifest()[CHUNK_COLLECTION]["dimension"] == embedder.dimension(CHUNK_PROFILE)
        assert loaded.count(CHUNK_COLLECTION) == 3
        assert sorted(e["id"] for e in loaded.scan(CHUNK_COLLECTION)) == sorted(
            e["id"] for e in store.scan(CHUNK_COLLECTION)
        )
        [qvec] = embed_batch(["q"], embedder, CHUNK_PROFILE)
        assert [r["id"] for r in loaded.query(CHUNK_COLLECTION, qvec.values, 3)] == [
            r["id"] for r in store.query(CHUNK_COLLECTION, qvec.values, 3)
        ]


class TestRemoteStore:
    def test_same_contract_over_http(self, embedder):
        from lexagent.service import create_store_app

        from fastapi.testclient import TestClient

        backend = InProcessVectorStore()
        app = create_store_app(backend)
        client = TestClient(app)
        remote = RemoteVectorStore("http://testserver", client=client)

        remote.upsert("chunks", [("a", [1.0, 0.0], {"case_id": "AT.1", "page": 1, "source_url": "u", "text": "t"})])
        remote.upsert("chunks", [("b", [0.0, 1.0], {"case_id": "AT.1", "page": 2, "source_url": "u", "text": "t2"})])
        assert remote.count("chunks", {"case_id": "AT.1"}) == 2
        results = remote.query("chunks", [1.0, 0.1], 2, {"case_id": "AT.1"})
        assert [r["id"] for r in results] == ["a", "b"]
        assert {e["id"] for e in remote.scan("chunks")} == {"a", "b"}
