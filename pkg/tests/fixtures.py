"""Deterministic corpora shared between module tests and the acceptance suite."""

import numpy as np

CLUSTER_VOCABS = [
    [f"astro{i:02d}" for i in range(25)],
    [f"marine{i:02d}" for i in range(25)],
    [f"railway{i:02d}" for i in range(25)],
]


def three_cluster_corpus(doc_seed: int = 123, docs_per_cluster: int = 20):
    """60 documents over three pairwise-disjoint vocabularies.

    Each document repeats its cluster's three core tokens twice and adds
    six random tokens from the same vocabulary, so clusters are tight
    and mutually orthogonal under hash embeddings.
    """
    rng = np.random.default_rng(doc_seed)
    docs, labels = [], []
    for cluster, vocab in enumerate(CLUSTER_VOCABS):
        core = vocab[:3]
        for _ in range(docs_per_cluster):
            words = list(core) * 2 + list(rng.choice(vocab, size=6, replace=True))
            rng.shuffle(words)
            docs.append(" ".join(words))
            labels.append(cluster)
    return docs, labels


def store_from_texts(texts, embedder, model, ids=None):
    """Embed texts, assign topics, and load them into a fresh store."""
    from topicrag import topic_model as tm
    from topicrag.vector_store import Document, VectorStore

    store = VectorStore(embedder.dimension)
    vectors = embedder.embed_batch(texts)
    docs = []
    for i, (text, vec) in enumerate(zip(texts, vectors)):
        assignment = tm.assign(model, vec)
        doc_id = ids[i] if ids else f"doc{i:04d}"
        docs.append(
            Document(
                id=doc_id,
                title="",
                text=text,
                embedding=vec,
                topic_id=assignment.topic_id,
                topic_probability=assignment.probability,
                source="fixture",
            )
        )
    store.upsert_batch(docs)
    return store


class RecordingEmbedder:
    """Wraps an embedder and logs every text it is asked to embed."""

    def __init__(self, inner):
        self.inner = inner
        self.texts: list[str] = []

    @property
    def dimension(self):
        return self.inner.dimension

    def embed_batch(self, texts):
        self.texts.extend(texts)
        return self.inner.embed_batch(texts)


# --- medical separation fixture ---------------------------------------------
# Ten time-based questions over a two-type record corpus. Evidence lives in
# the question's gold record type; each question also has lexically loud
# distractors of the other type, so unfiltered cosine retrieval drowns in
# them while topic-filtered retrieval stays homogeneous.

LAB_LEXICON = ["lab", "result", "hba1c", "glucose", "panel", "serum", "mmol", "assay"]
NOTE_LEXICON = ["note", "visit", "clinic", "doctor", "reason", "followup", "complaint", "exam"]

LAB_MARKER = "labresult"
NOTE_MARKER = "clinicalnote"


def medical_questions():
    """(question text, gold marker, case token) per question; even = lab."""
    questions = []
    for j in range(10):
        case = f"case{j:02d}"
        key_a, key_b = f"alpha{j:02d}", f"beta{j:02d}"
        if j % 2 == 0:
            text = f"{case} hba1c history past two years {key_a} {key_b}"
            marker = LAB_MARKER
        else:
            text = f"{case} visit history past two years {key_a} {key_b}"
            marker = NOTE_MARKER
        questions.append((text, marker, case))
    return questions


def medical_corpus():
    """Corpus records as (id, text, timestamp); 2 evidence + 4 distractors per question."""
    records = []
    for j in range(10):
        case = f"case{j:02d}"
        key_a, key_b = f"alpha{j:02d}", f"beta{j:02d}"
        gold_lab = j % 2 == 0
        gold_lexicon = LAB_LEXICON if gold_lab else NOTE_LEXICON
        other_lexicon = NOTE_LEXICON if gold_lab else LAB_LEXICON
        gold_marker = LAB_MARKER if gold_lab else NOTE_MARKER
        other_marker = NOTE_MARKER if gold_lab else LAB_MARKER
        for e in range(2):
            text = " ".join(
                [gold_marker, "record", case, key_a, key_b]
                + gold_lexicon * 2
                + [f"value{e}", "recorded", "2024"]
            )
            records.append((f"ev-{j:02d}-{e}", text, f"2024-0{e + 1}-15T09:00:00Z"))
        for d in range(4):
            text = " ".join(
                [other_marker, "record"]
                + other_lexicon * 2
                + [case, key_a, key_b] * 3
                + [f"noise{d}"]
            )
            records.append((f"dx-{j:02d}-{d}", text, "2019-06-01T09:00:00Z"))
    return records


class MedicalScriptedLlm:
    """Deterministic stand-in model for the separation fixture.

    Answer calls return the question's gold answer exactly when every
    document block in the prompt carries the gold record-type marker;
    anything else returns a refusal. Grader calls always pass, reasoning
    and rewrite calls return fixed text.
    """

    def __init__(self):
        self.default_model = "mock"
        self.calls = []
        self._gold = {case: marker for _, marker, case in medical_questions()}

    def complete(self, request):
        self.calls.append(request)
        prompt = "\n".join(m.content for m in request.messages)
        if "usefulness grader" in prompt or "grounding grader" in prompt:
            return '{"verdict":"yes"}'
        if "careful reasoner" in prompt:
            return "locate the matching records first"
        if "query rewriter" in prompt:
            return "retry with different words"
        if "accumulated reasoning below" in prompt:
            return self._answer(prompt)
        return "UNMATCHED"

    def _answer(self, prompt):
        question_part, _, rest = prompt.partition("Documents:")
        case = next((c for c in self._gold if c in question_part), None)
        if case is None:
            return "unknown question"
        docs_part = rest.partition("Accumulated reasoning:")[0]
        blocks = [b for b in docs_part.strip().split("\n\n") if b.strip()]
        if not blocks or blocks == ["(no documents retrieved)"]:
            return "no evidence found"
        marker = self._gold[case]
        if all(marker in block for block in blocks):
            return f"gold-answer-{case}"
        return "cannot tell from the records"


def gold_answer(case: str) -> str:
    return f"gold-answer-{case}"


def cluster_purity(model_topics, construction_labels) -> float:
    """Independent purity computation from plain counting."""
    from collections import Counter

    total = 0
    for cluster in set(model_topics):
        members = [
            construction_labels[i]
            for i, assigned in enumerate(model_topics)
            if assigned == cluster
        ]
        total += Counter(members).most_common(1)[0][1]
    return total / len(construction_labels)
