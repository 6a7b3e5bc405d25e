"""Document indexing: PDF page extraction, token chunking, embeddings, and
the vector store with filtered similarity queries.

Tokenization is a fixed whitespace+punctuation scheme so chunk budgets are
deterministic and independent of any provider's tokenizer. The reference
vector store is an in-process flat index (linear scan) persisted as
length-prefixed binary records; a remote HTTP backend implements the same
contract.
"""

from __future__ import annotations

import json
import re
import struct
import threading
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .domain import CaseRecord, Embedding
from .providers import EmbeddingProvider

DEFAULT_CHUNK_SIZE = 1024
DEFAULT_OVERLAP = 20

CHUNK_PROFILE = "chunk"
TITLE_PROFILE = "title"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class IndexError_(Exception):
    pass


class MalformedDocument(IndexError_):
    pass


class ZeroVector(IndexError_):
    pass


class ProfileMismatch(IndexError_):
    pass


class StoreUnavailable(IndexError_):
    pass


def tokenize(text: str) -> list[str]:
    """Split text into word and punctuation tokens; the budgeting unit."""
    return _TOKEN_RE.findall(text)


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    if a.profile != b.profile:
        raise ProfileMismatch(f"{a.profile} vs {b.profile}")
    if len(a.values) != len(b.values):
        raise ProfileMismatch(f"length {len(a.values)} vs {len(b.values)}")
    va, vb = np.asarray(a.values), np.asarray(b.values)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for the zero vector")
    return float(np.dot(va, vb) / (na * nb))


# --- PDF page extraction ---------------------------------------------------
#
# No PDF library is available in this environment, so this is a minimal
# extractor sufficient for digitally-born PDFs: it walks the page tree,
# inflates Flate-compressed content streams, and collects the text shown by
# Tj/TJ/' operators. Pages without extractable text yield empty strings.

_OBJ_RE = re.compile(rb"(\d+)\s+(\d+)\s+obj\b(.*?)endobj", re.DOTALL)
_TJ_RE = re.compile(rb"\((?:\\.|[^\\()])*\)|TJ|Tj|'|\"|BT|ET|T\*|Td|TD")


def _parse_objects(data: bytes) -> dict[int, bytes]:
    return {int(m.group(1)): m.group(3) for m in _OBJ_RE.finditer(data)}


def _ref_list(body: bytes, key: bytes) -> list[int]:
    m = re.search(key + rb"\s*\[(.*?)\]", body, re.DOTALL)
    if not m:
        m2 = re.search(key + rb"\s*(\d+)\s+\d+\s+R", body)
        return [int(m2.group(1))] if m2 else []
    return [int(n) for n in re.findall(rb"(\d+)\s+\d+\s+R", m.group(1))]


def _decode_stream(body: bytes) -> bytes:
    m = re.search(rb"stream\r?\n(.*?)\s*endstream", body, re.DOTALL)
    if not m:
        return b""
    raw = m.group(1)
    filters = re.findall(rb"/(ASCII85Decode|ASCIIHexDecode|FlateDecode)\b", body)
    try:
        for name in filters:
            if name == b"ASCII85Decode":
                import base64

                payload = raw.strip()
                if payload.endswith(b"~>"):
                    payload = payload[:-2]
                raw = base64.a85decode(payload, adobe=False, ignorechars=b" \t\n\r")
            elif name == b"ASCIIHexDecode":
                raw = bytes.fromhex(raw.replace(b">", b"").decode("ascii").replace("\n", ""))
            elif name == b"FlateDecode":
                raw = zlib.decompress(raw)
    except Exception:
        return b""
    return raw


def _unescape_pdf_string(s: bytes) -> str:
    out = []
    i = 0
    while i < len(s):
        c = s[i : i + 1]
        if c == b"\\" and i + 1 < len(s):
            nxt = s[i + 1 : i + 2]
            mapping = {b"n": "\n", b"r": "\r", b"t": "\t", b"(": "(", b")": ")", b"\\": "\\"}
            if nxt in mapping:
                out.append(mapping[nxt])
                i += 2
                continue
            octal = re.match(rb"\\([0-7]{1,3})", s[i:])
            if octal:
                out.append(chr(int(octal.group(1), 8)))
                i += 1 + len(octal.group(1))
                continue
            i += 1
            continue
        out.append(c.decode("latin-1"))
        i += 1
    return "".join(out)


def _text_from_content(content: bytes) -> str:
    parts: list[str] = []
    pending: list[str] = []
    for m in _TJ_RE.finditer(content):
        tok = m.group(0)
        if tok.startswith(b"("):
            pending.append(_unescape_pdf_string(tok[1:-1]))
        elif tok in (b"Tj", b"TJ", b"'", b'"'):
            parts.extend(pending)
            pending = []
        elif tok in (b"Td", b"TD", b"T*"):
            if parts and not parts[-1].endswith("\n"):
                parts.append("\n")
            pending = []
        elif tok == b"ET":
            pending = []
    text = "".join(parts)
    return re.sub(r"\n{2,}", "\n", text).strip()


def _walk_pages(objects: dict[int, bytes], node_id: int, out: list[int]) -> None:
    body = objects.get(node_id, b"")
    if re.search(rb"/Type\s*/Pages\b", body):
        for kid in _ref_list(body, rb"/Kids"):
            _walk_pages(objects, kid, out)
    elif re.search(rb"/Type\s*/Page\b", body):
        out.append(node_id)


def extract_pdf_pages(pdf_bytes: bytes) -> list[tuple[int, str]]:
    """Extract (page_number, text) per page, in order, 1-based.

    Raises MalformedDocument for inputs that are not a PDF.
    """
    if not pdf_bytes or not pdf_bytes.startswith(b"%PDF"):
        raise MalformedDocument("input is not a PDF byte stream")
    objects = _parse_objects(pdf_bytes)
    root_ids = [
        oid for oid, body in objects.items() if re.search(rb"/Type\s*/Catalog\b", body)
    ]
    page_ids: list[int] = []
    for root in root_ids:
        for pages in _ref_list(objects[root], rb"/Pages"):
            _walk_pages(objects, pages, page_ids)
    if not page_ids:
        page_ids = [
            oid for oid, body in objects.items() if re.search(rb"/Type\s*/Page\b", body)
        ]
        page_ids.sort()
    if not page_ids:
        raise MalformedDocument("no pages found")
    results: list[tuple[int, str]] = []
    for number, oid in enumerate(page_ids, start=1):
        body = objects[oid]
        texts = []
        for content_id in _ref_list(body, rb"/Contents"):
            texts.append(_text_from_content(_decode_stream(objects.get(content_id, b""))))
        results.append((number, "\n".join(t for t in texts if t)))
    return results


# --- chunking --------------------------------------------------------------


@dataclass(frozen=True)
class DocumentChunk:
    """A token span of a decision document with the metadata citations need."""

    chunk_id: str
    case_id: str
    text: str
    page: int
    source_url: str
    embedding: Optional[Embedding] = None

    def payload(self) -> dict:
        return {
            "case_id": self.case_id,
            "page": self.page,
            "source_url": self.source_url,
            "text": self.text,
        }


def chunk_document(
    pages: Sequence[tuple[int, str]],
    case_id: str = "",
    source_url: str = "",
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> list[DocumentChunk]:
    """Split a paged document into overlapping token chunks.

    Consecutive chunks share exactly `overlap` tokens; each chunk's page is
    the page of its first token. Chunk text is the space-joined token
    sequence, which re-tokenizes to the identical tokens.
    """
    if not (chunk_size > overlap >= 0):
        raise ValueError("require chunk_size > overlap >= 0")
    tokens: list[str] = []
    token_pages: list[int] = []
    for page_number, text in pages:
        page_tokens = tokenize(text)
        tokens.extend(page_tokens)
        token_pages.extend([page_number] * len(page_tokens))
    if not tokens:
        return []
    stride = chunk_size - overlap
    chunks: list[DocumentChunk] = []
    start = 0
    index = 0
    while start < len(tokens):
        end = min(start + chunk_size, len(tokens))
        chunks.append(
            DocumentChunk(
                chunk_id=f"{case_id}:{index}",
                case_id=case_id,
                text=" ".join(tokens[start:end]),
                page=token_pages[start],
                source_url=source_url,
            )
        )
        index += 1
        if end == len(tokens):
            break
        start += stride
    return chunks


def embed_batch(
    texts: Sequence[str], provider: EmbeddingProvider, profile: str
) -> list[Embedding]:
    """Embed texts in order; enforces the provider's declared dimension."""
    vectors = provider.embed(list(texts), profile)
    expected = provider.dimension(profile)
    out = []
    for v in vectors:
        if len(v) != expected:
            from .providers import DimensionMismatch

            raise DimensionMismatch(f"expected {expected}, got {len(v)}")
        out.append(Embedding(values=tuple(v), profile=profile))
    return out


# --- vector store ----------------------------------------------------------


class VectorStore(ABC):
    """Named collections of (id, vector, payload); upsert idempotent by id."""

    @abstractmethod
    def upsert(self, collection: str, entries: Iterable[tuple[str, Sequence[float], dict]]) -> None: ...

    @abstractmethod
    def query(
        self,
        collection: str,
        vector: Sequence[float],
        top_k: int,
        filter_payload: Optional[dict] = None,
    ) -> list[dict]:
        """Top-k entries by descending cosine similarity, each as
        {id, score, payload}; filter_payload keys must match payload exactly."""

    @abstractmethod
    def count(self, collection: str, filter_payload: Optional[dict] = None) -> int: ...

    @abstractmethod
    def scan(self, collection: str, filter_payload: Optional[dict] = None) -> list[dict]:
        """All matching entries as {id, vector, payload}, unranked."""


class InProcessVectorStore(VectorStore):
    """Flat in-memory index with linear-scan queries; optional directory
    persistence (one length-prefixed binary file per collection plus a
    manifest recording embedding profile and dimension)."""

    def __init__(self, directory: Optional[Path] = None):
        self._collections: dict[str, dict[str, tuple[np.ndarray, dict]]] = {}
        self._manifest: dict[str, dict] = {}
        self._lock = threading.RLock()
        self._directory = Path(directory) if directory else None
        if self._directory and self._directory.exists():
            self._load()

    def declare_collection(self, collection: str, profile: str, dimension: int) -> None:
        with self._lock:
            self._manifest[collection] = {"profile": profile, "dimension": dimension}
            self._collections.setdefault(collection, {})

    def manifest(self) -> dict:
        return dict(self._manifest)

    def upsert(self, collection, entries) -> None:
        with self._lock:
            coll = self._collections.setdefault(collection, {})
            for entry_id, vector, payload in entries:
                arr = np.asarray(vector, dtype=np.float32)
                declared = self._manifest.get(collection)
                if declared and len(arr) != declared["dimension"]:
                    raise StoreUnavailable(
                        f"vector length {len(arr)} != declared dimension "
                        f"{declared['dimension']} for {collection!r}"
                    )
                coll[entry_id] = (arr, dict(payload))

    def _matches(self, payload: dict, filter_payload: Optional[dict]) -> bool:
        return not filter_payload or all(payload.get(k) == v for k, v in filter_payload.items())

    def query(self, collection, vector, top_k, filter_payload=None):
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        with self._lock:
            coll = self._collections.get(collection, {})
            q = np.asarray(vector, dtype=np.float32)
            qn = np.linalg.norm(q)
            scored = []
            for entry_id, (vec, payload) in coll.items():
                if not self._matches(payload, filter_payload):
                    continue
                denom = qn * np.linalg.norm(vec)
                score = float(np.dot(q, vec) / denom) if denom else 0.0
                scored.append({"id": entry_id, "score": score, "payload": dict(payload)})
            scored.sort(key=lambda e: (-e["score"], e["payload"].get("page", 0), e["id"]))
            return scored[:top_k]

    def count(self, collection, filter_payload=None) -> int:
        with self._lock:
            coll = self._collections.get(collection, {})
            return sum(1 for _, p in coll.values() if self._matches(p, filter_payload))

    def scan(self, collection, filter_payload=None):
        with self._lock:
            coll = self._collections.get(collection, {})
            return [
                {"id": entry_id, "vector": vec.tolist(), "payload": dict(payload)}
                for entry_id, (vec, payload) in coll.items()
                if self._matches(payload, filter_payload)
            ]

    # persistence: [u32 id_len][id][u32 dim][f32*dim][u32 payload_len][payload json]

    def save(self, directory: Optional[Path] = None) -> None:
        directory = Path(directory or self._directory)
        directory.mkdir(parents=True, exist_ok=True)
        with self._lock:
            (directory / "manifest.json").write_text(
                json.dumps(self._manifest, indent=2), "utf-8"
            )
            for name, coll in self._collections.items():
                with open(directory / f"{name}.bin", "wb") as fh:
                    for entry_id, (vec, payload) in coll.items():
                        id_bytes = entry_id.encode("utf-8")
                        payload_bytes = json.dumps(payload, ensure_ascii=False).encode("utf-8")
                        fh.write(struct.pack("<I", len(id_bytes)))
                        fh.write(id_bytes)
                        fh.write(struct.pack("<I", len(vec)))
                        fh.write(np.asarray(vec, dtype=np.float32).tobytes())
                        fh.write(struct.pack("<I", len(payload_bytes)))
                        fh.write(payload_bytes)

    def _load(self) -> None:
        manifest_path = self._directory / "manifest.json"
        if manifest_path.exists():
            self._manifest = json.loads(manifest_path.read_text("utf-8"))
        for path in sorted(self._directory.glob("*.bin")):
            coll: dict[str, tuple[np.ndarray, dict]] = {}
            data = path.read_bytes()
            offset = 0
            while offset < len(data):
                (id_len,) = struct.unpack_from("<I", data, offset)
                offset += 4
                entry_id = data[offset : offset + id_len].decode("utf-8")
                offset += id_len
                (dim,) = struct.unpack_from("<I", data, offset)
                offset += 4
                vec = np.frombuffer(data, dtype=np.float32, count=dim, offset=offset).copy()
                offset += 4 * dim
                (payload_len,) = struct.unpack_from("<I", data, offset)
                offset += 4
                payload = json.loads(data[offset : offset + payload_len].decode("utf-8"))
                offset += payload_len
                coll[entry_id] = (vec, payload)
            self._collections[path.stem] = coll


class RemoteVectorStore(VectorStore):
    """HTTP client speaking the store wire contract: POST /collections/{name}/upsert
    with {entries: [{id, vector, payload}]}, POST /collections/{name}/query with
    {vector, top_k, filter}, plus /count and /scan."""

    def __init__(self, base_url: str, client=None, timeout: float = 30.0):
        import httpx

        self._base = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)

    def _post(self, path: str, payload: dict) -> dict:
        import httpx

        try:
            response = self._client.post(f"{self._base}{path}", json=payload)
        except httpx.HTTPError as exc:
            raise StoreUnavailable(str(exc)) from exc
        if response.status_code >= 400:
            raise StoreUnavailable(f"{path} -> {response.status_code}")
        return response.json()

    def upsert(self, collection, entries):
        body = [
            {"id": entry_id, "vector": list(map(float, vector)), "payload": payload}
            for entry_id, vector, payload in entries
        ]
        self._post(f"/collections/{collection}/upsert", {"entries": body})

    def query(self, collection, vector, top_k, filter_payload=None):
        data = self._post(
            f"/collections/{collection}/query",
            {"vector": list(map(float, vector)), "top_k": top_k, "filter": filter_payload},
        )
        return data["results"]

    def count(self, collection, filter_payload=None) -> int:
        return self._post(f"/collections/{collection}/count", {"filter": filter_payload})["count"]

    def scan(self, collection, filter_payload=None):
        return self._post(f"/collections/{collection}/scan", {"filter": filter_payload})["results"]


CHUNK_COLLECTION = "chunks"
TITLE_COLLECTION = "titles"


def index_case(
    case: CaseRecord,
    chunks: Sequence[DocumentChunk],
    store: VectorStore,
    embed_provider: EmbeddingProvider,
) -> int:
    """Upsert a case's chunks and its title embedding; returns chunks indexed."""
    for chunk in chunks:
        if chunk.case_id != case.case_id:
            raise ValueError(f"chunk {chunk.chunk_id} does not belong to case {case.case_id}")
    if chunks:
        embeddings = embed_batch([c.text for c in chunks], embed_provider, CHUNK_PROFILE)
        store.upsert(
            CHUNK_COLLECTION,
            [
                (c.chunk_id, e.values, c.payload())
                for c, e in zip(chunks, embeddings)
            ],
        )
    [title_embedding] = embed_batch([case.case_title], embed_provider, TITLE_PROFILE)
    store.upsert(
        TITLE_COLLECTION,
        [(case.case_id, title_embedding.values, {"case_id": case.case_id, "case_title": case.case_title})],
    )
    return len(chunks)


def query_chunks(
    store: VectorStore,
    question_embedding: Embedding,
    case_id: str,
    top_k: int,
) -> list[DocumentChunk]:
    """Top-k chunks of one case by cosine similarity to the question embedding.

    Ties break by ascending page, then chunk_id.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    results = store.query(
        CHUNK_COLLECTION, question_embedding.values, top_k, {"case_id": case_id}
    )
    return [
        DocumentChunk(
            chunk_id=r["id"],
            case_id=r["payload"]["case_id"],
            text=r["payload"]["text"],
            page=r["payload"]["page"],
            source_url=r["payload"]["source_url"],
        )
        for r in results
    ]
