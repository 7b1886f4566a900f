"""Shared fixtures and the acceptance summary hook."""

import numpy as np
import pytest

from topicrag.embedding_client import make_hash_mock
from topicrag.llm_client import ChatMessage, CompletionRequest


@pytest.fixture
def embedder():
    return make_hash_mock(dimension=512, seed=7)


@pytest.fixture
def request_factory():
    def make(prompt: str, model: str = "mock") -> CompletionRequest:
        return CompletionRequest(model=model, messages=(ChatMessage("user", prompt),))

    return make


def random_unit_vectors(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    matrix = rng.normal(size=(n, dim))
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


# --- acceptance summary -----------------------------------------------------
# tests named test_criterion_* in test_acceptance.py get one PASS/FAIL line
# each at the end of the session

_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    name = report.location[2]
    if "test_acceptance" in report.nodeid and name.startswith("test_criterion_"):
        _acceptance_results[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        terminalreporter.write_line(f"{name}: {_acceptance_results[name]}")
