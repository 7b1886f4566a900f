"""Prompt-based answer graders and the query rewriter.

The usefulness grader checks that an answer serves the question; the
grounding (hallucination) grader checks that it is supported by the
retrieved documents. Both demand a strict one-key JSON verdict and
re-ask a bounded number of times on malformed output. All three
operations are stateless: given the LLM's responses they are pure.
"""

import json
from dataclasses import dataclass
from typing import Optional

from .errors import EmptyRewrite, GraderParseError
from .llm_client import chat
from .templates import PromptTemplate, format_documents, load_default_templates

DEFAULT_PARSE_RETRIES = 1

_RETRY_NUDGE = (
    'Your previous reply was not valid. Respond with only {"verdict": "yes"} '
    'or {"verdict": "no"}.'
)


@dataclass(frozen=True)
class GraderVerdict:
    satisfactory: bool
    raw_response: str
    attempts: int


def parse_verdict(text: str) -> Optional[bool]:
    """Strict verdict parse.

    Accepts exactly a JSON object with a single "verdict" key whose
    value is "yes" or "no" (case-insensitive); surrounding whitespace is
    tolerated, anything else fails. Returns None on failure.
    """
    try:
        obj = json.loads(text.strip())
    except (ValueError, AttributeError):
        return None
    if not isinstance(obj, dict) or set(obj.keys()) != {"verdict"}:
        return None
    value = obj["verdict"]
    if not isinstance(value, str):
        return None
    lowered = value.strip().lower()
    if lowered == "yes":
        return True
    if lowered == "no":
        return False
    return None


def _graded_call(llm, prompt: str, parse_retries: int) -> GraderVerdict:
    attempts = 0
    raw = ""
    current = prompt
    while attempts < 1 + parse_retries:
        attempts += 1
        raw = llm_response = chat(llm, current)
        verdict = parse_verdict(llm_response)
        if verdict is not None:
            return GraderVerdict(satisfactory=verdict, raw_response=raw, attempts=attempts)
        current = prompt + "\n\n" + _RETRY_NUDGE
    raise GraderParseError(f"unparseable verdict after {attempts} attempts: {raw[:200]!r}")


def grade_usefulness(
    llm,
    question: str,
    answer: str,
    template: Optional[PromptTemplate] = None,
    parse_retries: int = DEFAULT_PARSE_RETRIES,
) -> GraderVerdict:
    """Is the answer relevant and valuable for the question?"""
    if not question or not answer:
        raise ValueError("question and answer must be non-empty")
    template = template or load_default_templates()["usefulness"]
    prompt = template.render(question=question, answer=answer)
    return _graded_call(llm, prompt, parse_retries)


def grade_hallucination(
    llm,
    answer: str,
    docs,
    template: Optional[PromptTemplate] = None,
    parse_retries: int = DEFAULT_PARSE_RETRIES,
) -> GraderVerdict:
    """Is the answer grounded in the documents? satisfactory=True means grounded.

    An answer with no supporting documents is treated as hallucinated
    outright: no LLM call is made and attempts is 0.
    """
    if not answer:
        raise ValueError("answer must be non-empty")
    docs = list(docs)
    if not docs:
        return GraderVerdict(satisfactory=False, raw_response="", attempts=0)
    template = template or load_default_templates()["hallucination"]
    prompt = template.render(answer=answer, documents=format_documents(docs))
    return _graded_call(llm, prompt, parse_retries)


def rewrite_query(
    llm,
    query: str,
    answer: str,
    cot: str,
    template: Optional[PromptTemplate] = None,
) -> str:
    """Reformulate the query after a failed grading round."""
    if not query:
        raise ValueError("query must be non-empty")
    template = template or load_default_templates()["rewrite"]
    prompt = template.render(question=query, answer=answer, cot=cot)
    for _ in range(2):  # one retry on blank output
        rewritten = chat(llm, prompt).strip()
        if rewritten:
            return rewritten
    raise EmptyRewrite("rewriter returned blank output twice")
