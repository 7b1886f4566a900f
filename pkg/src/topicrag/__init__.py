"""Topic-guided iterative retrieval-augmented question answering.

The engine answers multi-hop questions by assigning a topic to each
(possibly rewritten) query, retrieving topic-filtered documents from an
embedded vector store, reasoning step by step, and accepting an answer
only once usefulness and grounding graders both pass. Baseline one-step
and unfiltered multi-step pipelines plus an LLM-as-judge evaluation
harness live alongside.
"""

__version__ = "0.1.0"
