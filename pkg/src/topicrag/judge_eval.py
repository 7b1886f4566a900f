"""LLM-as-judge evaluation: per-answer rubric scoring on a 0-10 scale,
dataset-level runs with seeded sampling, and a one-way ANOVA for
significance testing between systems.

The F-distribution tail probability is computed from scratch through
the regularized incomplete beta function (continued fraction), so the
statistics hold without a stats dependency.
"""

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import DegenerateInput, JudgeParseError, ScoreOutOfRange
from .jsonio import canonical_pretty, read_jsonl, write_jsonl
from .llm_client import chat
from .templates import PromptTemplate, load_default_templates

JUDGE_PARSE_RETRIES = 1

_SCORE_KEYS = ("correctness", "completeness", "relevance")

_RETRY_NUDGE = (
    "Your previous reply was not valid. Respond with only a JSON object holding "
    'the numeric keys "correctness", "completeness" and "relevance".'
)


@dataclass(frozen=True)
class QAExample:
    id: str
    question: str
    ground_truth: str
    dataset: str = ""

    def __post_init__(self):
        if not self.question or not self.ground_truth:
            raise ValueError("question and ground_truth must be non-empty")


@dataclass(frozen=True)
class JudgeScore:
    correctness: float
    completeness: float
    relevance: float
    overall: float
    attempts: int = 1


@dataclass
class EvalReport:
    system: str
    seed: int
    sample_size: int
    judged: int
    failures: int
    mean_correctness: Optional[float]
    mean_completeness: Optional[float]
    mean_relevance: Optional[float]
    mean_overall: Optional[float]
    rows: list[dict] = field(default_factory=list)
    failure_ids: list[str] = field(default_factory=list)

    def aggregates(self) -> dict:
        return {
            "system": self.system,
            "seed": self.seed,
            "sample_size": self.sample_size,
            "judged": self.judged,
            "failures": self.failures,
            "failure_ids": self.failure_ids,
            "mean_correctness": self.mean_correctness,
            "mean_completeness": self.mean_completeness,
            "mean_relevance": self.mean_relevance,
            "mean_overall": self.mean_overall,
        }


def overall(correctness: float, completeness: float, relevance: float) -> float:
    """Arithmetic mean of the three criteria."""
    for value in (correctness, completeness, relevance):
        if not 0.0 <= value <= 10.0:
            raise ScoreOutOfRange(f"score {value} outside [0, 10]")
    return (correctness + completeness + relevance) / 3.0


def _parse_scores(text: str) -> Optional[dict]:
    import json

    try:
        obj = json.loads(text.strip())
    except (ValueError, AttributeError):
        return None
    if not isinstance(obj, dict) or set(obj.keys()) != set(_SCORE_KEYS):
        return None
    values = {}
    for key in _SCORE_KEYS:
        value = obj[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None
        values[key] = float(value)
    return values


def judge_answer(
    judge_llm,
    question: str,
    ground_truth: str,
    generated: str,
    template: Optional[PromptTemplate] = None,
) -> JudgeScore:
    """Score a generated answer against the ground truth on the fixed rubric."""
    if not question or not ground_truth or not generated:
        raise ValueError("question, ground_truth and generated must be non-empty")
    template = template or load_default_templates()["judge"]
    prompt = template.render(question=question, ground_truth=ground_truth, answer=generated)
    attempts = 0
    raw = ""
    current = prompt
    while attempts < 1 + JUDGE_PARSE_RETRIES:
        attempts += 1
        raw = chat(judge_llm, current)
        values = _parse_scores(raw)
        if values is not None:
            for key, value in values.items():
                if not 0.0 <= value <= 10.0:
                    raise ScoreOutOfRange(f"{key}={value} outside [0, 10]")
            return JudgeScore(
                correctness=values["correctness"],
                completeness=values["completeness"],
                relevance=values["relevance"],
                overall=overall(values["correctness"], values["completeness"], values["relevance"]),
                attempts=attempts,
            )
        current = prompt + "\n\n" + _RETRY_NUDGE
    raise JudgeParseError(f"unparseable judge response after {attempts} attempts: {raw[:200]!r}")


def load_qa_file(path: str | Path) -> list[QAExample]:
    """QA JSONL: one {id, question, answer, dataset} object per line."""
    examples = []
    for lineno, row in read_jsonl(path):
        try:
            examples.append(
                QAExample(
                    id=str(row["id"]),
                    question=row["question"],
                    ground_truth=row["answer"],
                    dataset=row.get("dataset", ""),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: line {lineno} is not a valid QA row: {exc}") from exc
    return examples


def run_eval(
    qa_path: str | Path,
    system: Callable[[str], str],
    judge_llm,
    sample_n: int,
    seed: int,
    system_label: str = "system",
    out_dir: Optional[str | Path] = None,
    judge_template: Optional[PromptTemplate] = None,
) -> EvalReport:
    """Judge a seeded sample of QA examples answered by ``system``.

    The sample is a deterministic function of (file, seed); one failing
    example is counted and skipped, never aborting the run. Per-example
    rows land in rows.jsonl and aggregates in report.json when out_dir
    is given.
    """
    if sample_n < 1:
        raise ValueError("sample_n must be >= 1")
    examples = load_qa_file(qa_path)
    if not examples:
        raise ValueError(f"{qa_path} holds no QA examples")
    rng = random.Random(seed)
    size = min(sample_n, len(examples))
    sampled = rng.sample(examples, size)
    sampled.sort(key=lambda ex: ex.id)

    rows: list[dict] = []
    failure_ids: list[str] = []
    for example in sampled:
        try:
            generated = system(example.question)
            score = judge_answer(
                judge_llm, example.question, example.ground_truth, generated, judge_template
            )
        except Exception as exc:  # per-example isolation
            failure_ids.append(example.id)
            rows_error = {"id": example.id, "error": f"{type(exc).__name__}: {exc}"}
            rows.append(rows_error)
            continue
        rows.append(
            {
                "id": example.id,
                "question": example.question,
                "ground_truth": example.ground_truth,
                "generated": generated,
                "correctness": score.correctness,
                "completeness": score.completeness,
                "relevance": score.relevance,
                "overall": score.overall,
                "attempts": score.attempts,
            }
        )

    scored = [r for r in rows if "overall" in r]

    def mean_of(key: str) -> Optional[float]:
        if not scored:
            return None
        return sum(r[key] for r in scored) / len(scored)

    report = EvalReport(
        system=system_label,
        seed=seed,
        sample_size=size,
        judged=len(scored),
        failures=len(failure_ids),
        mean_correctness=mean_of("correctness"),
        mean_completeness=mean_of("completeness"),
        mean_relevance=mean_of("relevance"),
        mean_overall=mean_of("overall"),
        rows=rows,
        failure_ids=failure_ids,
    )
    if out_dir is not None:
        directory = Path(out_dir)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(canonical_pretty(report.aggregates()), "utf-8")
        write_jsonl(directory / "rows.jsonl", rows)
    return report


# ---------------------------------------------------------------------------
# one-way ANOVA with an in-house F-distribution tail


@dataclass(frozen=True)
class AnovaResult:
    F: float
    df_between: int
    df_within: int
    p_value: float


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified
    Lentz's method)."""
    max_iter = 300
    eps = 3e-14
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must be in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # use the continued fraction on the side where it converges fast
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - math.exp(
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + b * math.log1p(-x)
        + a * math.log(x)
    ) * _betacf(b, a, 1.0 - x) / b


def f_distribution_sf(f_value: float, df1: int, df2: int) -> float:
    """Upper tail P(F > f) of the F(df1, df2) distribution."""
    if f_value <= 0.0:
        return 1.0
    x = df2 / (df2 + df1 * f_value)
    return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, x)


def anova_oneway(groups) -> AnovaResult:
    """Standard one-way ANOVA over two or more groups of reals.

    F = MSB / MSW from the usual sums of squares; the p-value is the
    upper F-tail via the regularized incomplete beta function. Raises
    DegenerateInput when every group has zero within-group variance
    (F undefined).
    """
    groups = [list(map(float, g)) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least 2 groups")
    for g in groups:
        if len(g) < 2:
            raise ValueError("every group needs at least 2 values")
    n_total = sum(len(g) for g in groups)
    grand_mean = sum(sum(g) for g in groups) / n_total
    ss_between = sum(len(g) * (sum(g) / len(g) - grand_mean) ** 2 for g in groups)
    ss_within = sum(sum((v - sum(g) / len(g)) ** 2 for v in g) for g in groups)
    df_between = len(groups) - 1
    df_within = n_total - len(groups)
    if ss_within == 0.0:
        raise DegenerateInput("zero within-group variance everywhere; F undefined")
    msb = ss_between / df_between
    msw = ss_within / df_within
    f_value = msb / msw
    return AnovaResult(
        F=f_value,
        df_between=df_between,
        df_within=df_within,
        p_value=f_distribution_sf(f_value, df_between, df_within),
    )
