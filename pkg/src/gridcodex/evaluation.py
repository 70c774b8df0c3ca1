"""Three-metric evaluation harness with judge models.

Answer Quality is a judge-scored composite (accuracy gated), Faithfulness is
the supported fraction of decomposed answer claims, and Recall@k checks gold
clause paths against the top retrieved chunks (summaries count through their
descendant leaves). Benchmarks run per item and mode, are resumable via
per-item result files, and render a per-region, per-system text table.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import GridCodexError, MissingGold, ParseError
from .kb import KnowledgeBase
from .providers import ChatMessage
from .qa import PromptLibrary, QueryTrace

COMPOSITE_WEIGHTS = {"accuracy": 0.5, "completeness": 0.3, "usefulness": 0.2}

_SCORE_RE = re.compile(
    r"accuracy\s*:\s*([0-9.]+)\s+completeness\s*:\s*([0-9.]+)\s+usefulness\s*:\s*([0-9.]+)"
)
_CLAIM_LABEL_RE = re.compile(r"^\s*(\d+)\s*:\s*(supported|unsupported)\s*$", re.MULTILINE)


@dataclass
class EvalItem:
    item_id: str
    region: str
    question: str
    reference_answer: str
    gold_evidence: list[list[str]] = field(default_factory=list)  # clause-path label patterns

    @classmethod
    def from_dict(cls, d: dict) -> "EvalItem":
        return cls(
            item_id=d["item_id"],
            region=d["region"],
            question=d["question"],
            reference_answer=d["reference_answer"],
            gold_evidence=[list(p) for p in d.get("gold_evidence", [])],
        )

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "region": self.region,
            "question": self.question,
            "reference_answer": self.reference_answer,
            "gold_evidence": [list(p) for p in self.gold_evidence],
        }


def load_dataset(path: str | Path) -> list[EvalItem]:
    items = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                items.append(EvalItem.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"bad dataset record: {exc}", source=str(path), line=lineno)
    return items


@dataclass
class JudgeScore:
    accuracy: float
    completeness: float
    usefulness: float
    rationale: str = ""
    parse_failed: bool = False


def parse_judge_scores(text: str) -> JudgeScore | None:
    m = _SCORE_RE.search(text)
    if not m:
        return None
    vals = [float(g) for g in m.groups()]
    if any(not 0.0 <= v <= 1.0 for v in vals):
        return None
    return JudgeScore(accuracy=vals[0], completeness=vals[1], usefulness=vals[2], rationale=text)


def judge_answer(
    question: str, answer: str, reference_answer: str, judge, prompts: PromptLibrary
) -> JudgeScore:
    """One judge call with a strict parseable rubric block; a malformed
    response is retried once, then scored (0,0,0) with a parse flag."""
    if not reference_answer:
        raise ValueError("reference_answer must be non-empty")
    prompt = prompts.render("judge", question=question, reference=reference_answer, answer=answer)
    for _ in range(2):
        text = judge.chat([ChatMessage("user", prompt)]).content
        score = parse_judge_scores(text)
        if score is not None:
            return score
    return JudgeScore(0.0, 0.0, 0.0, rationale=text, parse_failed=True)


def composite_quality(score: JudgeScore) -> float:
    """Accuracy-gated composite: completeness and usefulness only count in
    proportion to accuracy, so a wrong answer scores zero regardless of how
    complete or fluent it is."""
    w = COMPOSITE_WEIGHTS
    return (
        w["accuracy"] * score.accuracy
        + score.accuracy * (w["completeness"] * score.completeness + w["usefulness"] * score.usefulness)
    )


def faithfulness(
    answer: str, retrieval_hits: list[dict], judge, prompts: PromptLibrary
) -> tuple[float, list[str]]:
    """Supported-claim fraction. Two judge calls: decompose the answer into
    atomic claims, then label each claim against the hit texts only. Zero
    extractable claims count as vacuously consistent (1.0, flagged)."""
    if not retrieval_hits:
        raise ValueError("faithfulness requires retrieval hits")
    flags: list[str] = []
    decomp = judge.chat(
        [ChatMessage("user", prompts.render("claims_decompose", answer=answer))]
    ).content
    claims = [
        line.strip()[2:].strip()
        for line in decomp.splitlines()
        if line.strip().startswith("- ")
    ]
    if not claims:
        return 1.0, ["no_extractable_claims"]

    evidence = "\n\n".join(h["text"] for h in retrieval_hits)
    numbered = "\n".join(f"{i}. {c}" for i, c in enumerate(claims, 1))
    labels_text = judge.chat(
        [ChatMessage("user", prompts.render("claims_support", evidence=evidence, claims=numbered))]
    ).content
    labels = {int(n): verdict for n, verdict in _CLAIM_LABEL_RE.findall(labels_text)}
    supported = sum(1 for i in range(1, len(claims) + 1) if labels.get(i) == "supported")
    if len(labels) < len(claims):
        flags.append("claim_labels_incomplete")
    return supported / len(claims), flags


def _path_matches(pattern: list[str], labels: list[str]) -> bool:
    """Gold pattern matches when it is a prefix of the chunk's label path."""
    if len(pattern) > len(labels):
        return False
    return all(p == l for p, l in zip(pattern, labels))


def _chunk_label_paths(chunk_id: str, kb: KnowledgeBase) -> list[list[str]]:
    chunk = kb.chunks.get(chunk_id)
    if chunk is None:
        return []
    if chunk.level == 0:
        paths = [list(p) for p in chunk.covered_paths]
        if not paths:
            paths = [[label for label, _ in chunk.clause_path]]
        return paths
    # Summary chunk: it carries the information of its descendant leaves.
    paths = []
    if kb.tree is not None:
        for leaf_id in kb.tree.descendant_leaves(chunk_id):
            paths.extend(_chunk_label_paths(leaf_id, kb))
    return paths


@dataclass
class RecallResult:
    fraction: float
    strict: bool
    covered: list[bool]


def recall_at_k(
    trace: QueryTrace, gold_evidence: list[list[str]], k: int, kb: KnowledgeBase
) -> RecallResult:
    """Coverage of gold clause-path patterns by the top-k retrieved chunks.

    A pattern is covered if any top-k hit (or, for summary hits, any of
    their descendant leaves) has a clause label path with the pattern as a
    prefix. Fractional score = covered / total; strict = all covered.
    """
    if not gold_evidence:
        raise MissingGold(f"trace {trace.trace_id}: no gold evidence patterns")
    top = trace.retrieval_hits[:k]
    hit_paths: list[list[str]] = []
    for hit in top:
        hit_paths.extend(_chunk_label_paths(hit["chunk_id"], kb))
    covered = [
        any(_path_matches(pattern, labels) for labels in hit_paths)
        for pattern in gold_evidence
    ]
    fraction = sum(covered) / len(covered)
    return RecallResult(fraction=fraction, strict=all(covered), covered=covered)


RETRIEVAL_MODES = ("vanilla_rag", "gridcodex")

MODE_LABELS = {
    "plain_llm": "General LLMs",
    "vanilla_rag": "Vanilla RAG",
    "gridcodex": "Optimized RAG (GridCodex)",
}


@dataclass
class MetricsReport:
    k: int
    config: dict
    models: dict
    rows: list[dict]  # per (region, mode) aggregates
    items: list[dict]  # per (item, mode) results
    composite_formula: str = "0.5*acc + acc*(0.3*comp + 0.2*use)"

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "config": self.config,
            "models": self.models,
            "composite_formula": self.composite_formula,
            "rows": self.rows,
            "items": self.items,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            k=d["k"],
            config=d.get("config", {}),
            models=d.get("models", {}),
            rows=d["rows"],
            items=d["items"],
            composite_formula=d.get("composite_formula", ""),
        )


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def aggregate(items: list[dict], k: int, config: dict, models: dict) -> MetricsReport:
    """Fold per-item results into per (region, mode) rows. Means are plain
    arithmetic over the stored per-item values so reports can always be
    recomputed exactly from their own rows."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for item in items:
        groups.setdefault((item["region"], item["mode"]), []).append(item)
    rows = []
    for (region, mode), members in sorted(groups.items()):
        ok = [m for m in members if not m.get("failed")]
        row = {
            "region": region,
            "mode": mode,
            "system": MODE_LABELS.get(mode, mode),
            "items": len(members),
            "failed_items": len(members) - len(ok),
            "answer_quality": _mean([m["answer_quality"] for m in ok if m.get("answer_quality") is not None]),
            "faithfulness": None,
            "recall_fraction": None,
            "recall_strict": None,
        }
        if mode in RETRIEVAL_MODES:
            row["faithfulness"] = _mean([m["faithfulness"] for m in ok if m.get("faithfulness") is not None])
            row["recall_fraction"] = _mean([m["recall_fraction"] for m in ok if m.get("recall_fraction") is not None])
            strict_vals = [1.0 if m["recall_strict"] else 0.0 for m in ok if m.get("recall_strict") is not None]
            row["recall_strict"] = _mean(strict_vals)
        rows.append(row)
    return MetricsReport(k=k, config=config, models=models, rows=rows, items=items)


def run_benchmark(
    dataset: list[EvalItem],
    modes: list[str],
    engine,
    out_dir: str | Path | None = None,
) -> MetricsReport:
    """Evaluate every item under every mode. Per-item results are written to
    out_dir as they complete, and reruns resume from those files. Item
    failures are recorded and the run continues."""
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        (out_dir / "items").mkdir(parents=True, exist_ok=True)

    items_results: list[dict] = []
    for item in sorted(dataset, key=lambda it: it.item_id):
        for mode in modes:
            result_path = out_dir / "items" / f"{item.item_id}__{mode}.json" if out_dir else None
            if result_path and result_path.is_file():
                items_results.append(json.loads(result_path.read_text(encoding="utf-8")))
                continue
            result = evaluate_item(item, mode, engine)
            items_results.append(result)
            if result_path:
                result_path.write_text(
                    json.dumps(result, ensure_ascii=False, indent=2), encoding="utf-8"
                )

    report = aggregate(
        items_results,
        k=engine.config.retrieval_k,
        config=engine.config.snapshot(),
        models={role: (chat.cfg.model_name if hasattr(chat, "cfg") else "scripted")
                for role, chat in engine.providers.chats.items()},
    )
    if out_dir:
        (out_dir / "report.json").write_text(
            json.dumps(report.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8"
        )
        (out_dir / "report.txt").write_text(render_table(report), encoding="utf-8")
    return report


def evaluate_item(item: EvalItem, mode: str, engine) -> dict:
    """Answer one item in one mode and score it. Retrieval-dependent metrics
    only apply to retrieval modes; the plain baseline reports only quality."""
    result = {
        "item_id": item.item_id,
        "region": item.region,
        "mode": mode,
        "failed": False,
        "answer_quality": None,
        "judge": None,
        "faithfulness": None,
        "recall_fraction": None,
        "recall_strict": None,
        "abstained": None,
        "trace_id": None,
        "flags": [],
    }
    try:
        trace = engine.answer_query(item.question, item.region, mode)
        result["trace_id"] = trace.trace_id
        result["abstained"] = trace.abstained

        score = judge_answer(
            item.question, trace.answer, item.reference_answer,
            engine.providers.chat("judge"), engine.prompts,
        )
        result["judge"] = {
            "accuracy": score.accuracy,
            "completeness": score.completeness,
            "usefulness": score.usefulness,
            "parse_failed": score.parse_failed,
        }
        if score.parse_failed:
            result["flags"].append("judge_parse_failed")
        result["answer_quality"] = composite_quality(score)

        if mode in RETRIEVAL_MODES:
            kb = engine.factual_kb(item.region)
            if item.gold_evidence:
                recall = recall_at_k(trace, item.gold_evidence, engine.config.retrieval_k, kb)
                result["recall_fraction"] = recall.fraction
                result["recall_strict"] = recall.strict
            if not trace.abstained and trace.retrieval_hits:
                value, flags = faithfulness(
                    trace.answer, trace.retrieval_hits,
                    engine.providers.chat("judge"), engine.prompts,
                )
                result["faithfulness"] = value
                result["flags"].extend(flags)
    except GridCodexError as exc:
        result["failed"] = True
        result["error"] = f"{type(exc).__name__}: {exc}"
    return result


def _fmt(value: float | None) -> str:
    return "--" if value is None else f"{value:.3f}"


def render_table(report: MetricsReport) -> str:
    """Text table with one row per (region, system): Answer Quality,
    Faithfulness, Recall@k (strict rate as the headline; plain-LLM rows show
    "--" for retrieval metrics)."""
    header = ["Region", "Model", "Answer Quality", "Faithfulness", f"Recall@{report.k}"]
    table_rows = [
        [
            row["region"],
            row["system"],
            _fmt(row["answer_quality"]),
            _fmt(row["faithfulness"]),
            _fmt(row["recall_strict"]),
        ]
        for row in report.rows
    ]
    widths = [max(len(h), *(len(r[i]) for r in table_rows)) if table_rows else len(h)
              for i, h in enumerate(header)]
    def line(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths))
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), sep] + [line(r) for r in table_rows]) + "\n"
