"""Question-answering pipelines.

``answer_query`` runs the topic-guided iterative loop: assign a topic
to the (possibly rewritten) query, retrieve with a topic filter,
generate reasoning, answer against the original question, and accept
only when both graders pass — up to a maximum number of iterations.
``one_step_rag`` and ``multi_step_rag`` are the ungraded single-shot
and unfiltered iterative baselines.
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import graders as graders_mod
from . import topic_model as tm
from .errors import EngineError, PipelineError
from .jsonio import canonical_pretty
from .llm_client import chat
from .templates import format_documents, load_default_templates
from .topic_model import TopicAssignment
from .vector_store import SearchHit, VectorStore

MODE_TOPIC = "atrag"
MODE_ONESTEP = "onestep"
MODE_MULTISTEP = "multistep"


@dataclass
class PipelineConfig:
    max_iterations: int = 3
    retrieval_k: int = 4
    topic_filtering: bool = True
    templates: Optional[dict] = None  # name -> PromptTemplate; None = package defaults
    parse_retries: int = graders_mod.DEFAULT_PARSE_RETRIES

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")

    def resolved_templates(self) -> dict:
        return self.templates if self.templates is not None else load_default_templates()


@dataclass
class IterationRecord:
    index: int  # 1-based
    refined_query: str
    topic: Optional[TopicAssignment]
    hits: list[SearchHit]
    duplicate_ids: list[str]
    cot: Optional[str]
    answer: str
    usefulness: Optional[graders_mod.GraderVerdict] = None
    hallucination: Optional[graders_mod.GraderVerdict] = None
    rewrite: Optional[str] = None


@dataclass
class PipelineState:
    original_query: str
    mode: str
    iterations: list[IterationRecord] = field(default_factory=list)
    final_answer: str = ""
    accepted: bool = False
    stop_reason: str = ""  # "accepted" | "max_iterations"
    template_ids: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def verdict_dict(v):
            if v is None:
                return None
            return {
                "satisfactory": v.satisfactory,
                "raw_response": v.raw_response,
                "attempts": v.attempts,
            }

        return {
            "original_query": self.original_query,
            "mode": self.mode,
            "final_answer": self.final_answer,
            "accepted": self.accepted,
            "stop_reason": self.stop_reason,
            "template_ids": self.template_ids,
            "iterations": [
                {
                    "index": it.index,
                    "refined_query": it.refined_query,
                    "topic": None
                    if it.topic is None
                    else {"topic_id": it.topic.topic_id, "probability": it.topic.probability},
                    "hits": [
                        {
                            "id": h.document.id,
                            "score": h.score,
                            "used_fallback": h.used_fallback,
                            "topic_id": h.document.topic_id,
                        }
                        for h in it.hits
                    ],
                    "duplicate_ids": it.duplicate_ids,
                    "cot": it.cot,
                    "answer": it.answer,
                    "usefulness": verdict_dict(it.usefulness),
                    "hallucination": verdict_dict(it.hallucination),
                    "rewrite": it.rewrite,
                }
                for it in self.iterations
            ],
        }


def write_trace(state: PipelineState, trace_dir: str | Path) -> Path:
    """One canonical JSON file per run; filename derived from mode and query."""
    directory = Path(trace_dir)
    directory.mkdir(parents=True, exist_ok=True)
    stem = hashlib.sha256(f"{state.mode}\n{state.original_query}".encode("utf-8")).hexdigest()[:16]
    path = directory / f"trace-{stem}.json"
    path.write_text(canonical_pretty(state.to_dict()), "utf-8")
    return path


def generate_cot(llm, query: str, docs, template=None) -> str:
    """Reasoning steps for the current query over the current documents."""
    template = template or load_default_templates()["cot"]
    prompt = template.render(question=query, documents=format_documents(docs))
    return chat(llm, prompt)


def _generate_answer(llm, question: str, docs, cots: list[str], template) -> str:
    # the answer prompt always carries the ORIGINAL question and the
    # accumulated reasoning of every iteration so far, in order
    prompt = template.render(
        question=question,
        documents=format_documents(docs),
        cot="\n\n".join(cots) if cots else "(none)",
    )
    return chat(llm, prompt)


def _template_ids(templates: dict) -> dict[str, str]:
    return {name: t.id for name, t in sorted(templates.items())}


def _run_loop(
    question: str,
    store: VectorStore,
    topic_model: Optional[tm.TopicModel],
    embedder,
    llm,
    config: PipelineConfig,
    mode: str,
) -> PipelineState:
    templates = config.resolved_templates()
    state = PipelineState(
        original_query=question, mode=mode, template_ids=_template_ids(templates)
    )
    use_topics = mode == MODE_TOPIC
    seen_ids: set[str] = set()
    cots: list[str] = []
    current_query = question

    try:
        for i in range(1, config.max_iterations + 1):
            topic: Optional[TopicAssignment] = None
            topic_filter: Optional[int] = None
            if use_topics:
                retrieval_text = current_query
                query_vec = embedder.embed_batch([retrieval_text])[0]
                topic = tm.assign(topic_model, query_vec)
                if topic.topic_id >= 0:
                    topic_filter = topic.topic_id
                # outlier queries fall back to unfiltered retrieval
            else:
                # unfiltered baseline: retrieve on the original question
                # plus the latest reasoning, once any exists
                retrieval_text = question if not cots else f"{question}\n{cots[-1]}"
                query_vec = embedder.embed_batch([retrieval_text])[0]

            raw_hits = store.search(query_vec, k=config.retrieval_k, topic_filter=topic_filter)
            hits = [h for h in raw_hits if h.document.id not in seen_ids]
            duplicate_ids = [h.document.id for h in raw_hits if h.document.id in seen_ids]
            seen_ids.update(h.document.id for h in hits)
            docs = [h.document for h in hits]

            cot = generate_cot(llm, current_query, docs, templates["cot"])
            cots.append(cot)
            answer = _generate_answer(llm, question, docs, cots, templates["answer"])

            record = IterationRecord(
                index=i,
                refined_query=current_query,
                topic=topic,
                hits=hits,
                duplicate_ids=duplicate_ids,
                cot=cot,
                answer=answer,
            )
            state.iterations.append(record)

            record.usefulness = graders_mod.grade_usefulness(
                llm, question, answer, templates["usefulness"], config.parse_retries
            )
            if record.usefulness.satisfactory:
                record.hallucination = graders_mod.grade_hallucination(
                    llm, answer, docs, templates["hallucination"], config.parse_retries
                )
                if record.hallucination.satisfactory:
                    state.final_answer = answer
                    state.accepted = True
                    state.stop_reason = "accepted"
                    return state

            if i < config.max_iterations:
                record.rewrite = graders_mod.rewrite_query(
                    llm, current_query, answer, cot, templates["rewrite"]
                )
                current_query = record.rewrite

        state.final_answer = state.iterations[-1].answer
        state.accepted = False
        state.stop_reason = "max_iterations"
        return state
    except EngineError as exc:
        raise PipelineError(f"{mode} run failed at iteration {len(state.iterations) + 1}: {exc}",
                            state=state) from exc


def answer_query(
    question: str,
    store: VectorStore,
    topic_model: tm.TopicModel,
    embedder,
    llm,
    config: Optional[PipelineConfig] = None,
) -> PipelineState:
    """Topic-guided iterative answering with grader-gated acceptance."""
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    config = config or PipelineConfig()
    if not config.topic_filtering:
        return multi_step_rag(question, store, embedder, llm, config)
    return _run_loop(question, store, topic_model, embedder, llm, config, MODE_TOPIC)


def multi_step_rag(
    question: str,
    store: VectorStore,
    embedder,
    llm,
    config: Optional[PipelineConfig] = None,
) -> PipelineState:
    """Iterative baseline: no topic assignment, retrieval never filtered."""
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    config = config or PipelineConfig()
    return _run_loop(question, store, None, embedder, llm, config, MODE_MULTISTEP)


def one_step_rag(
    question: str,
    store: VectorStore,
    embedder,
    llm,
    config: Optional[PipelineConfig] = None,
) -> PipelineState:
    """Single unfiltered retrieval and one answer call; no reasoning, no graders."""
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    config = config or PipelineConfig()
    templates = config.resolved_templates()
    state = PipelineState(
        original_query=question, mode=MODE_ONESTEP, template_ids=_template_ids(templates)
    )
    try:
        query_vec = embedder.embed_batch([question])[0]
        hits = store.search(query_vec, k=config.retrieval_k, topic_filter=None)
        docs = [h.document for h in hits]
        answer = _generate_answer(llm, question, docs, [], templates["answer"])
    except EngineError as exc:
        raise PipelineError(f"onestep run failed: {exc}", state=state) from exc
    state.iterations.append(
        IterationRecord(
            index=1,
            refined_query=question,
            topic=None,
            hits=hits,
            duplicate_ids=[],
            cot=None,
            answer=answer,
        )
    )
    state.final_answer = answer
    state.accepted = True
    state.stop_reason = "accepted"
    return state
