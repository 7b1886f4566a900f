"""Corpus ingestion: read records, embed in batches, assign topics and
probabilities, and populate a vector store.

Also contains the normalizers that flatten the three public multi-hop
QA datasets into the engine's corpus + QA JSONL forms.
"""

import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

from . import topic_model as tm
from .errors import CorpusFormatError, UnknownFormat
from .jsonio import canonical_dumps
from .vector_store import Document, VectorStore

CORPUS_KEYS_REQUIRED = {"id", "title", "text", "source"}
CORPUS_KEYS_OPTIONAL = {"timestamp", "extra"}

DATASET_FORMATS = ("hotpotqa", "musique", "2wikimultihop")


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    title: str
    text: str
    source: str
    timestamp: Optional[str] = None
    extra: dict[str, str] = field(default_factory=dict)

    def to_row(self) -> dict:
        row = {"id": self.id, "title": self.title, "text": self.text, "source": self.source}
        if self.timestamp is not None:
            row["timestamp"] = self.timestamp
        if self.extra:
            row["extra"] = self.extra
        return row


@dataclass
class IngestReport:
    docs_in: int = 0
    docs_stored: int = 0
    outlier_count: int = 0
    batches: int = 0
    skipped: int = 0  # malformed or duplicate lines dropped in lenient mode


def _record_from_row(row: dict) -> CorpusRecord:
    if not isinstance(row, dict):
        raise CorpusFormatError("corpus line is not a JSON object")
    keys = set(row.keys())
    missing = CORPUS_KEYS_REQUIRED - keys
    unknown = keys - CORPUS_KEYS_REQUIRED - CORPUS_KEYS_OPTIONAL
    if missing:
        raise CorpusFormatError(f"missing keys {sorted(missing)}")
    if unknown:
        raise CorpusFormatError(f"unknown keys {sorted(unknown)}")
    record = CorpusRecord(
        id=str(row["id"]),
        title=str(row["title"]),
        text=str(row["text"]),
        source=str(row["source"]),
        timestamp=row.get("timestamp"),
        extra={str(k): str(v) for k, v in (row.get("extra") or {}).items()},
    )
    if not record.id:
        raise CorpusFormatError("id is empty")
    if not record.text.strip():
        raise CorpusFormatError("text is empty")
    if record.timestamp is not None:
        try:
            datetime.fromisoformat(str(record.timestamp).replace("Z", "+00:00"))
        except ValueError as exc:
            raise CorpusFormatError(f"timestamp {record.timestamp!r} not ISO-8601") from exc
    return record


def read_corpus(path: str | Path, strict: bool = False) -> tuple[list[CorpusRecord], int]:
    """Parse a corpus JSONL file.

    Returns (records, skipped). Malformed lines and duplicate ids are
    skipped and counted by default; under strict they raise
    CorpusFormatError with the line number.
    """
    records: list[CorpusRecord] = []
    seen: set[str] = set()
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                record = _record_from_row(row)
                if record.id in seen:
                    raise CorpusFormatError(f"duplicate id {record.id!r}")
            except (json.JSONDecodeError, CorpusFormatError) as exc:
                if strict:
                    raise CorpusFormatError(f"{path}: line {lineno}: {exc}") from exc
                skipped += 1
                continue
            seen.add(record.id)
            records.append(record)
    return records, skipped


def embedding_text(title: str, text: str) -> str:
    """The text actually embedded for a record: title prepended when present.

    Shared by fitting, ingestion and verification so topic assignments
    recompute identically.
    """
    return f"{title}\n{text}" if title else text


def ingest_corpus(
    corpus_path: str | Path,
    store: VectorStore,
    topic_model: tm.TopicModel,
    embedder,
    batch_size: int = 64,
    strict: bool = False,
) -> IngestReport:
    """Embed a corpus in batches, assign topics, and upsert into the store.

    Every stored document carries the topic id and probability produced
    by the shared topic model on exactly the text that was embedded.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    records, skipped = read_corpus(corpus_path, strict=strict)
    report = IngestReport(docs_in=len(records), skipped=skipped)
    if not records:
        return report
    report.batches = math.ceil(len(records) / batch_size)
    for start in range(0, len(records), batch_size):
        batch = records[start : start + batch_size]
        vectors = embedder.embed_batch([embedding_text(r.title, r.text) for r in batch])
        docs = []
        for record, vector in zip(batch, vectors):
            assignment = tm.assign(topic_model, vector)
            docs.append(
                Document(
                    id=record.id,
                    title=record.title,
                    text=record.text,
                    embedding=vector,
                    topic_id=assignment.topic_id,
                    topic_probability=assignment.probability,
                    source=record.source,
                    timestamp=record.timestamp,
                    extra=record.extra,
                )
            )
            if assignment.topic_id == -1:
                report.outlier_count += 1
        store.upsert_batch(docs)
        report.docs_stored += len(docs)
    return report


# ---------------------------------------------------------------------------
# dataset normalizers


def _hotpot_style_items(raw_path: Path) -> list[dict]:
    # HotpotQA and 2WikiMultiHopQA ship as one JSON array of question items
    data = json.loads(raw_path.read_text("utf-8"))
    if not isinstance(data, list):
        raise CorpusFormatError(f"{raw_path}: expected a JSON array")
    return data


def _normalize_hotpot_style(raw_path: Path, dataset: str):
    for item in _hotpot_style_items(raw_path):
        qid = str(item.get("_id") or item.get("id") or "")
        if not qid or "question" not in item or "answer" not in item:
            raise CorpusFormatError(f"{raw_path}: item missing _id/question/answer")
        paragraphs = []
        for title, sentences in item.get("context") or []:
            text = "".join(sentences) if isinstance(sentences, list) else str(sentences)
            paragraphs.append((str(title), text))
        yield qid, item["question"], item["answer"], paragraphs


def _normalize_musique(raw_path: Path, dataset: str):
    # MuSiQue ships as JSONL with a paragraphs list per question
    with open(raw_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                item = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{raw_path}: line {lineno}: {exc}") from exc
            qid = str(item.get("id") or "")
            if not qid or "question" not in item or "answer" not in item:
                raise CorpusFormatError(f"{raw_path}: line {lineno} missing id/question/answer")
            paragraphs = [
                (str(p.get("title", "")), str(p.get("paragraph_text", "")))
                for p in item.get("paragraphs") or []
            ]
            yield qid, item["question"], item["answer"], paragraphs


def normalize_dataset(
    raw_path: str | Path,
    format: str,
    out_corpus_path: str | Path,
    out_qa_path: str | Path,
) -> dict:
    """Flatten a benchmark dataset file into corpus JSONL + QA JSONL.

    Context paragraphs become corpus records with ids of the form
    ``<format>-<question id>-<paragraph index>``; QA pairs keep their
    original ids. Output is deterministic in input order.
    """
    raw_path = Path(raw_path)
    if format == "hotpotqa" or format == "2wikimultihop":
        items = _normalize_hotpot_style(raw_path, format)
    elif format == "musique":
        items = _normalize_musique(raw_path, format)
    else:
        raise UnknownFormat(f"format must be one of {DATASET_FORMATS}, got {format!r}")

    counts = {"questions": 0, "corpus_records": 0, "empty_context_questions": 0}
    with open(out_corpus_path, "w", encoding="utf-8") as corpus_fh, open(
        out_qa_path, "w", encoding="utf-8"
    ) as qa_fh:
        for qid, question, answer, paragraphs in items:
            counts["questions"] += 1
            if not paragraphs:
                counts["empty_context_questions"] += 1
            for index, (title, text) in enumerate(paragraphs):
                if not text.strip():
                    continue
                record = CorpusRecord(
                    id=f"{format}-{qid}-{index}",
                    title=title,
                    text=text,
                    source=format,
                    extra={"question_id": qid},
                )
                corpus_fh.write(canonical_dumps(record.to_row()) + "\n")
                counts["corpus_records"] += 1
            qa_fh.write(
                canonical_dumps(
                    {"id": qid, "question": question, "answer": answer, "dataset": format}
                )
                + "\n"
            )
    return counts
