import json

import pytest

from gridcodex.errors import MissingGold, ParseError
from gridcodex.evaluation import (
    EvalItem,
    JudgeScore,
    MetricsReport,
    aggregate,
    composite_quality,
    faithfulness,
    judge_answer,
    load_dataset,
    parse_judge_scores,
    recall_at_k,
    render_table,
    run_benchmark,
)
from gridcodex.kb import KnowledgeBase
from gridcodex.providers import ChatResponse, ScriptedChatProvider, ScriptRule
from gridcodex.qa import PromptLibrary, QueryTrace
from gridcodex.raptor import RaptorTree


@pytest.fixture
def prompts():
    return PromptLibrary()


class TestParseJudgeScores:
    def test_valid_line(self):
        s = parse_judge_scores("accuracy:0.8 completeness:0.5 usefulness:1.0\nbecause reasons")
        assert (s.accuracy, s.completeness, s.usefulness) == (0.8, 0.5, 1.0)

    def test_whitespace_tolerant(self):
        assert parse_judge_scores("accuracy : 1 completeness: 0 usefulness :0.5") is not None

    def test_missing_dimension(self):
        assert parse_judge_scores("accuracy:0.8 usefulness:1.0") is None

    def test_out_of_range_rejected(self):
        assert parse_judge_scores("accuracy:1.5 completeness:0.5 usefulness:0.5") is None

    def test_garbage(self):
        assert parse_judge_scores("the answer looks fine to me") is None


class SequenceJudge:
    """Judge stub that replays canned responses in order."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def chat(self, messages):
        self.calls += 1
        return ChatResponse(content=self.responses.pop(0))


class TestJudgeAnswer:
    def test_single_call_on_clean_response(self, prompts):
        judge = SequenceJudge(["accuracy:1.0 completeness:1.0 usefulness:1.0"])
        score = judge_answer("q", "a", "ref", judge, prompts)
        assert score.accuracy == 1.0 and not score.parse_failed and judge.calls == 1

    def test_retry_once_then_zero(self, prompts):
        judge = SequenceJudge(["garbled", "still garbled"])
        score = judge_answer("q", "a", "ref", judge, prompts)
        assert (score.accuracy, score.completeness, score.usefulness) == (0.0, 0.0, 0.0)
        assert score.parse_failed and judge.calls == 2

    def test_retry_recovers(self, prompts):
        judge = SequenceJudge(["oops", "accuracy:0.5 completeness:0.5 usefulness:0.5"])
        score = judge_answer("q", "a", "ref", judge, prompts)
        assert score.accuracy == 0.5 and not score.parse_failed and judge.calls == 2

    def test_empty_reference_rejected(self, prompts):
        with pytest.raises(ValueError):
            judge_answer("q", "a", "", SequenceJudge([]), prompts)


class TestCompositeQuality:
    def test_perfect(self):
        assert composite_quality(JudgeScore(1, 1, 1)) == pytest.approx(1.0)

    def test_zero_accuracy_gates_everything(self):
        assert composite_quality(JudgeScore(0, 1, 1)) == 0.0

    def test_half_accuracy(self):
        # 0.5*0.5 + 0.5*(0.3*1 + 0.2*1) = 0.5
        assert composite_quality(JudgeScore(0.5, 1, 1)) == pytest.approx(0.5)

    def test_accuracy_only(self):
        assert composite_quality(JudgeScore(0.8, 0, 0)) == pytest.approx(0.4)


class SubstringJudge:
    """Deterministic claim pipeline: decompose splits the answer into
    sentences, support labels a claim supported iff it appears verbatim in
    the evidence text."""

    def chat(self, messages):
        prompt = messages[-1].content
        if "TASK: decompose-claims" in prompt:
            answer = prompt.split("ANSWER:\n", 1)[1]
            claims = [s.strip() for s in answer.split(".") if s.strip()]
            return ChatResponse(content="\n".join(f"- {c}." for c in claims))
        if "TASK: label-claims" in prompt:
            evidence, claims_block = prompt.split("EVIDENCE:\n", 1)[1].split("\n\nCLAIMS:\n", 1)
            lines = []
            for line in claims_block.strip().splitlines():
                n, _, claim = line.partition(". ")
                verdict = "supported" if claim.strip() in evidence else "unsupported"
                lines.append(f"{n}: {verdict}")
            return ChatResponse(content="\n".join(lines))
        return ChatResponse(content="ok")


class TestFaithfulness:
    def hits(self, *texts):
        return [{"text": t} for t in texts]

    def test_all_supported(self, prompts):
        answer = "Units shall remain connected. The droop is four percent."
        hits = self.hits("Units shall remain connected. The droop is four percent.")
        value, flags = faithfulness(answer, hits, SubstringJudge(), prompts)
        assert value == 1.0 and flags == []

    def test_half_supported_matches_oracle(self, prompts):
        answer = "Units shall remain connected. The moon is made of cheese."
        hits = self.hits("Units shall remain connected.")
        value, _ = faithfulness(answer, hits, SubstringJudge(), prompts)
        assert value == pytest.approx(0.5)

    def test_no_claims_vacuous_with_flag(self, prompts):
        judge = SequenceJudge(["NONE"])
        value, flags = faithfulness("...", self.hits("evidence"), judge, prompts)
        assert value == 1.0 and flags == ["no_extractable_claims"]

    def test_incomplete_labels_flagged(self, prompts):
        judge = SequenceJudge(["- claim one.\n- claim two.", "1: supported"])
        value, flags = faithfulness("x", self.hits("e"), judge, prompts)
        assert value == pytest.approx(0.5) and "claim_labels_incomplete" in flags

    def test_requires_hits(self, prompts):
        with pytest.raises(ValueError):
            faithfulness("a", [], SubstringJudge(), prompts)


def leaf(chunk_id, labels, covered=None, level=0):
    from gridcodex.corpus import Chunk

    return Chunk(
        chunk_id=chunk_id, kb_id="kb", doc_id="d",
        clause_path=[(l, l) for l in labels], text="t", token_count=1,
        level=level, covered_paths=covered or [],
    )


def fake_kb(chunks, tree=None):
    return KnowledgeBase(
        kb_id="kb", kind="factual", region="NL", language="en", meta={},
        index=None, chunks={c.chunk_id: c for c in chunks}, tree=tree,
    )


def trace_with_hits(chunk_ids):
    return QueryTrace(
        trace_id="t", mode="gridcodex", original_query="q",
        retrieval_hits=[{"chunk_id": cid} for cid in chunk_ids],
    )


class TestRecallAtK:
    def test_prefix_match(self):
        kb = fake_kb([leaf("c1", ["3", "3.2", "3.2.1"])])
        result = recall_at_k(trace_with_hits(["c1"]), [["3", "3.2"]], 10, kb)
        assert result.fraction == 1.0 and result.strict

    def test_non_prefix_no_match(self):
        kb = fake_kb([leaf("c1", ["3", "3.2"])])
        result = recall_at_k(trace_with_hits(["c1"]), [["3.2"]], 10, kb)
        assert result.fraction == 0.0 and not result.strict

    def test_merged_chunk_covered_paths(self):
        kb = fake_kb([leaf("m1", ["1", "1.1..1.3"], covered=[["1", "1.1"], ["1", "1.2"], ["1", "1.3"]])])
        result = recall_at_k(trace_with_hits(["m1"]), [["1", "1.2"]], 10, kb)
        assert result.strict

    def test_summary_expands_to_descendants(self):
        tree = RaptorTree(
            levels=[["c1", "c2"], ["s1"]],
            edges={"s1": ["c1", "c2"]},
            config={},
        )
        kb = fake_kb(
            [leaf("c1", ["2", "2.1"]), leaf("c2", ["2", "2.2"]),
             leaf("s1", ["s"], level=1)],
            tree=tree,
        )
        result = recall_at_k(trace_with_hits(["s1"]), [["2", "2.2"]], 10, kb)
        assert result.strict

    def test_k_truncates_hits(self):
        kb = fake_kb([leaf("c1", ["1"]), leaf("c2", ["2"])])
        result = recall_at_k(trace_with_hits(["c1", "c2"]), [["2"]], 1, kb)
        assert result.fraction == 0.0

    def test_partial_coverage_fraction(self):
        kb = fake_kb([leaf("c1", ["1", "1.1"])])
        result = recall_at_k(trace_with_hits(["c1"]), [["1", "1.1"], ["9"]], 10, kb)
        assert result.fraction == pytest.approx(0.5)
        assert result.covered == [True, False]

    def test_monotone_in_k(self):
        kb = fake_kb([leaf(f"c{i}", [str(i)]) for i in range(5)])
        trace = trace_with_hits([f"c{i}" for i in range(5)])
        gold = [["0"], ["4"]]
        fractions = [recall_at_k(trace, gold, k, kb).fraction for k in (1, 3, 5)]
        assert fractions == sorted(fractions)

    def test_missing_gold(self):
        with pytest.raises(MissingGold):
            recall_at_k(trace_with_hits([]), [], 10, fake_kb([]))


class TestAggregate:
    def items(self):
        return [
            {"region": "NL", "mode": "gridcodex", "answer_quality": 0.8,
             "faithfulness": 1.0, "recall_fraction": 1.0, "recall_strict": True},
            {"region": "NL", "mode": "gridcodex", "answer_quality": 0.4,
             "faithfulness": 0.5, "recall_fraction": 0.5, "recall_strict": False},
            {"region": "NL", "mode": "plain_llm", "answer_quality": 0.6,
             "faithfulness": None, "recall_fraction": None, "recall_strict": None},
            {"region": "NL", "mode": "gridcodex", "failed": True, "answer_quality": None},
        ]

    def test_means_exact(self):
        report = aggregate(self.items(), k=30, config={}, models={})
        row = next(r for r in report.rows if r["mode"] == "gridcodex")
        assert row["answer_quality"] == pytest.approx(0.6)
        assert row["faithfulness"] == pytest.approx(0.75)
        assert row["recall_strict"] == pytest.approx(0.5)
        assert row["items"] == 3 and row["failed_items"] == 1

    def test_plain_mode_has_no_retrieval_metrics(self):
        report = aggregate(self.items(), k=30, config={}, models={})
        row = next(r for r in report.rows if r["mode"] == "plain_llm")
        assert row["faithfulness"] is None and row["recall_strict"] is None

    def test_render_table_dashes(self):
        report = aggregate(self.items(), k=30, config={}, models={})
        table = render_table(report)
        assert "Recall@30" in table
        plain_row = next(l for l in table.splitlines() if "General LLMs" in l)
        assert plain_row.count("--") == 2
        assert "Optimized RAG (GridCodex)" in table

    def test_round_trip_dict(self):
        report = aggregate(self.items(), k=30, config={"a": 1}, models={"judge": "m"})
        again = MetricsReport.from_dict(json.loads(json.dumps(report.to_dict())))
        assert again.rows == report.rows and again.k == 30


class TestDataset:
    def test_load_jsonl(self, tmp_path):
        path = tmp_path / "bench.jsonl"
        path.write_text(json.dumps({
            "item_id": "i1", "region": "NL", "question": "q",
            "reference_answer": "r", "gold_evidence": [["1", "1.1"]],
        }) + "\n\n", encoding="utf-8")
        items = load_dataset(path)
        assert len(items) == 1 and items[0].gold_evidence == [["1", "1.1"]]

    def test_bad_record_reports_line(self, tmp_path):
        path = tmp_path / "bench.jsonl"
        path.write_text('{"item_id": "i1"}\n', encoding="utf-8")
        with pytest.raises(ParseError) as err:
            load_dataset(path)
        assert err.value.line == 1


@pytest.fixture
def dataset():
    return [
        EvalItem(
            item_id="i1", region="NL",
            question="fault ride through requirements for generating units",
            reference_answer="Units shall remain connected during dips to 20 percent for 250 ms.",
            gold_evidence=[["1", "1.1"]],
        ),
        EvalItem(
            item_id="i2", region="NL",
            question="droop setting default value",
            reference_answer="The default droop setting is four percent.",
            gold_evidence=[["2", "2.1"]],
        ),
    ]


class TestRunBenchmark:
    def test_end_to_end_report(self, engine, dataset, tmp_path):
        out = tmp_path / "run"
        report = run_benchmark(dataset, ["plain_llm", "vanilla_rag", "gridcodex"], engine, out)
        assert len(report.items) == 6
        assert {r["mode"] for r in report.rows} == {"plain_llm", "vanilla_rag", "gridcodex"}
        for row in report.rows:
            assert row["answer_quality"] is not None
            if row["mode"] == "plain_llm":
                assert row["recall_strict"] is None
        assert (out / "report.json").is_file() and (out / "report.txt").is_file()
        assert (out / "items" / "i1__gridcodex.json").is_file()

    def test_scripted_judge_quality_exact(self, engine, dataset, tmp_path):
        # judge rule always says accuracy:0.8 completeness:0.5 usefulness:0.5
        report = run_benchmark(dataset[:1], ["gridcodex"], engine, tmp_path / "run")
        expected = 0.5 * 0.8 + 0.8 * (0.3 * 0.5 + 0.2 * 0.5)
        assert report.rows[0]["answer_quality"] == pytest.approx(expected)

    def test_resumes_from_item_files(self, engine, dataset, tmp_path):
        out = tmp_path / "run"
        run_benchmark(dataset, ["gridcodex"], engine, out)
        marker = out / "items" / "i1__gridcodex.json"
        doctored = json.loads(marker.read_text(encoding="utf-8"))
        doctored["answer_quality"] = 0.123
        marker.write_text(json.dumps(doctored), encoding="utf-8")
        report = run_benchmark(dataset, ["gridcodex"], engine, out)
        stored = next(i for i in report.items if i["item_id"] == "i1")
        assert stored["answer_quality"] == 0.123  # reused, not recomputed

    def test_item_failure_recorded_not_fatal(self, engine, dataset, tmp_path):
        bad = EvalItem(item_id="i0", region="XX", question="q",
                       reference_answer="r", gold_evidence=[["1"]])
        report = run_benchmark([bad] + dataset[:1], ["gridcodex"], engine, tmp_path / "run")
        failed = next(i for i in report.items if i["item_id"] == "i0")
        assert failed["failed"] and "UnknownRegion" in failed["error"]
        ok = next(i for i in report.items if i["item_id"] == "i1")
        assert not ok["failed"]

    def test_recall_hits_gold_clause(self, engine, dataset, tmp_path):
        report = run_benchmark(dataset[:1], ["gridcodex"], engine, tmp_path / "run")
        item = report.items[0]
        assert item["recall_fraction"] == 1.0 and item["recall_strict"] is True

    def test_deterministic_reruns(self, engine, dataset, tmp_path):
        r1 = run_benchmark(dataset, ["gridcodex"], engine, None)
        r2 = run_benchmark(dataset, ["gridcodex"], engine, None)
        strip = lambda items: [
            {k: v for k, v in i.items() if k != "trace_id"} for i in items
        ]
        assert strip(r1.items) == strip(r2.items)
