"""Versioned prompt templates.

Templates are plain text files with {{placeholder}} slots. Each loaded
template carries a content hash so traces can record exactly which
prompt version ran. Loading validates that every required placeholder
is present; that makes a missing slot a startup error rather than a
silent bad prompt at call time.
"""

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import TemplateError

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")

# required placeholders per template name
REQUIRED_PLACEHOLDERS: dict[str, tuple[str, ...]] = {
    "usefulness": ("question", "answer"),
    "hallucination": ("answer", "documents"),
    "rewrite": ("question", "answer", "cot"),
    "cot": ("question", "documents"),
    "answer": ("question", "documents", "cot"),
    "judge": ("question", "ground_truth", "answer"),
}


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    @property
    def id(self) -> str:
        return f"{self.name}@{self.sha256[:12]}"

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER.findall(self.text))

    def render(self, **values: str) -> str:
        present = self.placeholders()
        missing = present - values.keys()
        if missing:
            raise TemplateError(
                f"template {self.name!r} needs values for {sorted(missing)}"
            )
        rendered = self.text
        for key in present:
            rendered = rendered.replace("{{" + key + "}}", values[key])
        return rendered


def _validate(template: PromptTemplate) -> PromptTemplate:
    required = REQUIRED_PLACEHOLDERS.get(template.name, ())
    missing = [p for p in required if p not in template.placeholders()]
    if missing:
        raise TemplateError(
            f"template {template.name!r} is missing placeholders {missing}"
        )
    return template


def load_template_file(name: str, path: str | Path) -> PromptTemplate:
    return _validate(PromptTemplate(name=name, text=Path(path).read_text("utf-8")))


def load_default_templates() -> dict[str, PromptTemplate]:
    """The template set shipped with the package."""
    templates = {}
    for name in REQUIRED_PLACEHOLDERS:
        text = resources.files("topicrag").joinpath(f"prompts/{name}.txt").read_text("utf-8")
        templates[name] = _validate(PromptTemplate(name=name, text=text))
    return templates


def format_documents(docs) -> str:
    """Numbered blocks with each document's text verbatim."""
    docs = list(docs)
    if not docs:
        return "(no documents retrieved)"
    blocks = []
    for i, doc in enumerate(docs, start=1):
        header = f"[{i}] {doc.title}".rstrip()
        blocks.append(f"{header}\n{doc.text}")
    return "\n\n".join(blocks)
