"""LLM-as-judge evaluation: three judge runs per item, majority verdict,
per-class accuracy."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import prompts
from .benchgen import TIME_CLASSES, QAItem
from .corpus import ChunkStore
from .errors import EmptyResponseError, JudgeError, ProviderError, TGRAGError
from .generate import ABSTENTION, FinalAnswer, answer_subquery, assemble_context
from .providers.base import ChatProvider, ChatRequest, EmbeddingProvider
from .retriever import ChunkRetriever
from .tqd import SubQuery

logger = logging.getLogger(__name__)

_SCORE = re.compile(r"Correctness\s*:\s*\**\s*([01])(?!\d)", re.IGNORECASE)
MODES = ("tgrag", "norag", "vanilla")


@dataclass
class EvalVerdict:
    qa_id: str
    time_class: str
    runs: list[int | None]
    verdict: int
    system_answer: str
    error: str = ""

    def to_record(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "time_class": self.time_class,
            "runs": self.runs,
            "verdict": self.verdict,
            "system_answer": self.system_answer,
            "error": self.error,
        }

    @classmethod
    def from_record(cls, r: dict) -> "EvalVerdict":
        return cls(r["qa_id"], r["time_class"], list(r["runs"]), int(r["verdict"]), r["system_answer"], r.get("error", ""))


@dataclass
class EvalReport:
    accuracy: dict[str, float] = field(default_factory=dict)
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "counts": self.counts, "failures": self.failures}

    def table(self) -> str:
        lines = ["| class | correct | total | accuracy |", "| --- | --- | --- | --- |"]
        for cls in TIME_CLASSES:
            if cls in self.accuracy:
                c = self.counts[cls]
                lines.append(f"| {cls} | {c['correct']} | {c['total']} | {self.accuracy[cls]:.1f} |")
        return "\n".join(lines)


def parse_judge_output(raw: str) -> int:
    """Score from the last ``Correctness: 0|1`` in the judge's answer."""
    found = _SCORE.findall(raw)
    if not found:
        raise JudgeError("no 'Correctness: 0|1' in judge output", raw)
    return int(found[-1])


def _reference_text(qa: QAItem) -> str:
    return "\n\n".join(f"[{year}] {text}" for year, text in sorted(qa.evidence.items()))


def judge_once(qa: QAItem, sys_ans: str, llm: ChatProvider, temperature: float = 0.0) -> int:
    if not sys_ans.strip():
        return 0
    user = prompts.render_named(
        "judge", question=qa.question, sys_ans=sys_ans, ref_ans=qa.answer, ref_text=_reference_text(qa)
    )
    try:
        raw = llm.chat(ChatRequest("", user, 64, temperature))
    except EmptyResponseError as exc:
        raise JudgeError("judge returned nothing", "") from exc
    return parse_judge_output(raw)


def majority_verdict(runs: Sequence[int | None]) -> int:
    """1 when at least two valid runs say 1. Errored runs (``None``) are
    missing, not wrong; two or more of them make the item unscorable."""
    if sum(r is None for r in runs) >= 2:
        raise JudgeError(f"too many judge errors in runs {list(runs)}")
    return int(sum(r for r in runs if r is not None) >= 2)


def judge_majority(
    qa: QAItem, sys_ans: str, llm: ChatProvider, n_runs: int = 3, temperature: float = 0.0
) -> EvalVerdict:
    if not sys_ans.strip():
        return EvalVerdict(qa.qa_id, qa.time_class, [0] * n_runs, 0, sys_ans)
    runs: list[int | None] = []
    errors = []
    for _ in range(n_runs):
        try:
            runs.append(judge_once(qa, sys_ans, llm, temperature))
        except (JudgeError, ProviderError) as exc:
            runs.append(None)
            errors.append(str(exc))
    try:
        verdict = majority_verdict(runs)
    except JudgeError as exc:
        raise JudgeError(f"{qa.qa_id}: {exc}; " + "; ".join(errors)) from exc
    return EvalVerdict(qa.qa_id, qa.time_class, runs, verdict, sys_ans)


def aggregate(verdicts: Sequence[EvalVerdict]) -> EvalReport:
    """Per-class accuracy over the scored items. Items whose judging failed
    (``error`` set and no runs) are listed in ``failures`` and not counted."""
    total: Counter = Counter()
    correct: Counter = Counter()
    failures = []
    for v in verdicts:
        if v.error:
            failures.append(v.qa_id)
        if v.error and not any(r is not None for r in v.runs):
            continue
        total[v.time_class] += 1
        correct[v.time_class] += v.verdict
    report = EvalReport(failures=failures)
    for cls in TIME_CLASSES:
        if total[cls]:
            report.counts[cls] = {"correct": correct[cls], "total": total[cls]}
            report.accuracy[cls] = 100.0 * correct[cls] / total[cls]
    return report


Answerer = Callable[[str], "FinalAnswer | str"]


def evaluate(
    dataset: Sequence[QAItem],
    answerer: Answerer,
    judge_llm: ChatProvider,
    n_runs: int = 3,
    temperature: float = 0.0,
    max_workers: int = 1,
) -> tuple[EvalReport, list[EvalVerdict]]:
    """Answer and judge every item. A failed answer is judged as an empty
    answer (0) and listed as a failure; a failed judgement is listed and
    left out of the accuracy."""
    if not dataset:
        raise ValueError("dataset must be non-empty")

    def one(qa: QAItem) -> EvalVerdict:
        error = ""
        try:
            out = answerer(qa.question)
            sys_ans = out.answer if isinstance(out, FinalAnswer) else str(out)
        except (TGRAGError, ValueError) as exc:
            logger.warning("answering %s failed: %s", qa.qa_id, exc)
            sys_ans, error = "", f"answer: {exc}"
        try:
            v = judge_majority(qa, sys_ans, judge_llm, n_runs, temperature)
        except JudgeError as exc:
            logger.warning("judging %s failed: %s", qa.qa_id, exc)
            return EvalVerdict(qa.qa_id, qa.time_class, [None] * n_runs, 0, sys_ans, f"judge: {exc}")
        v.error = error
        return v

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        verdicts = list(pool.map(one, dataset))
    return aggregate(verdicts), verdicts


def save_results(report: EvalReport, verdicts: Sequence[EvalVerdict], outdir: str | Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(
        json.dumps(report.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (outdir / "verdicts.jsonl").write_text(
        "".join(json.dumps(v.to_record(), ensure_ascii=False, sort_keys=True) + "\n" for v in verdicts),
        encoding="utf-8",
    )


def load_verdicts(path: str | Path) -> list[EvalVerdict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [EvalVerdict.from_record(json.loads(ln)) for ln in lines if ln.strip()]


# -- comparison modes --------------------------------------------------------------


def norag_answerer(llm: ChatProvider, temperature: float = 0.2) -> Answerer:
    """Bare model, no retrieval."""

    def answer(question: str) -> str:
        raw = llm.chat(ChatRequest("", prompts.render_named("base_llm", question=question), 1024, temperature))
        return raw.strip() or ABSTENTION

    return answer


def vanilla_answerer(
    chunks: ChunkStore, llm: ChatProvider, em: EmbeddingProvider, t: int = 5, temperature: float = 0.2
) -> Answerer:
    """Cosine top-``t`` chunks as the only context."""
    retriever = ChunkRetriever(chunks, em, t)

    def answer(question: str) -> FinalAnswer:
        ctx = assemble_context(retriever.search(question))
        sa = answer_subquery(SubQuery(question), ctx, llm, temperature)
        return FinalAnswer(question, sa.answer, [sa])

    return answer
