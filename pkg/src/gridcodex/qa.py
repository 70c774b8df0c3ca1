"""Multi-stage query refinement and guarded answer synthesis.

The full mode runs terminology enrichment, English translation, collapsed
retrieval over all summary-tree levels, and guarded synthesis; the two
baseline modes (plain LLM, vanilla retrieval) share the same synthesis
prompt skeleton so evaluation differences isolate refinement and retrieval.
Every query produces a complete audit trace.
"""

from __future__ import annotations

import importlib.resources
import json
import re
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .config import EngineConfig, GuardrailPolicy
from .errors import EmptyIndex, GridCodexError, UnknownMode
from .index import SearchHit
from .kb import KnowledgeBase, lookup_terms
from .providers import ChatMessage

MODES = ("plain_llm", "vanilla_rag", "gridcodex")

REFUSAL_TEXT = (
    "The retrieved regulations do not contain sufficient evidence to answer "
    "this question; no answer is given to avoid speculation."
)

_CITATION_RE = re.compile(r"\[(\d+)\]")


class PromptLibrary:
    """Versioned prompt templates; shipped files, overridable per deployment."""

    NAMES = (
        "refine",
        "translate",
        "synthesize",
        "guardrail",
        "judge",
        "claims_decompose",
        "claims_support",
    )

    def __init__(self, override_dir: str | Path | None = None):
        self._templates: dict[str, str] = {}
        package_dir = importlib.resources.files("gridcodex").joinpath("prompts")
        for name in self.NAMES:
            text = package_dir.joinpath(f"{name}.txt").read_text(encoding="utf-8")
            if override_dir:
                candidate = Path(override_dir) / f"{name}.txt"
                if candidate.is_file():
                    text = candidate.read_text(encoding="utf-8")
            self._templates[name] = text

    def render(self, name: str, **kwargs) -> str:
        return self._templates[name].format(**kwargs)

    def raw(self, name: str) -> str:
        return self._templates[name]


def is_english(text: str, ascii_ratio: float = 0.9) -> bool:
    """Heuristic language detector: fraction of words made purely of ASCII
    letters. Deterministic and provider-free; pluggable via config."""
    words = [w for w in re.findall(r"[^\W\d_]+", text) if w]
    if not words:
        return True
    ascii_words = sum(1 for w in words if all(ord(ch) < 128 for ch in w))
    return ascii_words / len(words) >= ascii_ratio


@dataclass
class QueryTrace:
    trace_id: str
    mode: str
    original_query: str
    detected_language: str = "en"
    region: str = ""
    term_hits: list[dict] = field(default_factory=list)  # {term, definition, score}
    enriched_query: str = ""
    translated_query: str = ""
    retrieval_hits: list[dict] = field(default_factory=list)  # hit + text + clause_path
    final_prompt: str = ""
    answer: str = ""
    cited_chunk_ids: list[str] = field(default_factory=list)
    abstained: bool = False
    flags: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "QueryTrace":
        return cls(**d)


class TraceStore:
    def __init__(self, data_dir: str | Path):
        self.dir = Path(data_dir) / "traces"
        self.dir.mkdir(parents=True, exist_ok=True)

    def save(self, trace: QueryTrace) -> Path:
        path = self.dir / f"{trace.trace_id}.json"
        path.write_text(json.dumps(trace.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
        return path

    def load(self, trace_id: str) -> QueryTrace:
        path = self.dir / f"{trace_id}.json"
        if not path.is_file():
            raise KeyError(trace_id)
        return QueryTrace.from_dict(json.loads(path.read_text(encoding="utf-8")))


def refine_query(
    query: str,
    term_kb: KnowledgeBase,
    embedder,
    chat,
    prompts: PromptLibrary,
    k: int = 5,
    floor: float = 0.25,
) -> tuple[str, list[dict], list[str]]:
    """Enrich the query with matched terminology. With zero term hits the
    original query passes through without a model call; on provider failure
    the original query is kept and the trace is flagged."""
    hits = lookup_terms(query, term_kb, embedder, k=k, floor=floor)
    term_hits = [
        {"term": e.term, "definition": e.definition, "score": score, "translations": e.translations}
        for e, score in hits
    ]
    if not hits:
        return query, term_hits, []
    definitions = "\n".join(
        f"- {e.term}: {e.definition}"
        + (f" (English term: {e.translations.get('en')})" if e.translations.get("en") else "")
        for e, _ in hits
    )
    prompt = prompts.render("refine", query=query, definitions=definitions)
    try:
        enriched = chat.chat([ChatMessage("user", prompt)]).content.strip()
    except GridCodexError:
        return query, term_hits, ["refinement_skipped"]
    return enriched or query, term_hits, []


def translate_query(
    enriched_query: str,
    chat,
    prompts: PromptLibrary,
    term_hits: list[dict] | None = None,
    ascii_ratio: float = 0.9,
) -> tuple[str, list[str]]:
    """Translate into English unless the detector already says English; on
    provider failure the input passes through with a trace flag."""
    if is_english(enriched_query, ascii_ratio):
        return enriched_query, ["translation_skipped_english"]
    glossary_lines = []
    for hit in term_hits or []:
        en = (hit.get("translations") or {}).get("en")
        if en:
            glossary_lines.append(f"- {hit['term']} -> {en}")
    prompt = prompts.render(
        "translate", query=enriched_query, glossary="\n".join(glossary_lines) or "(none)"
    )
    try:
        translated = chat.chat([ChatMessage("user", prompt)]).content.strip()
    except GridCodexError:
        return enriched_query, ["translation_skipped_error"]
    return translated or enriched_query, []


def retrieve_factual(
    english_query: str, factual_kb: KnowledgeBase, embedder, k: int = 30
) -> list[SearchHit]:
    """Collapsed retrieval: leaf chunks and summaries ranked in one pool."""
    if len(factual_kb.index) == 0:
        raise EmptyIndex(f"factual KB {factual_kb.kb_id} has an empty index")
    vector = embedder.embed_batch([english_query])[0]
    if vector.degenerate:
        return []
    return factual_kb.index.search(vector, k)


def _evidence_blocks(hits: list[dict]) -> str:
    blocks = []
    for i, hit in enumerate(hits, 1):
        labels = ".".join(label for label, _ in hit["clause_path"]) or "-"
        blocks.append(
            f"[{i}] (chunk {hit['chunk_id']}, clause {labels}, level {hit['level']})\n{hit['text']}"
        )
    return "\n\n".join(blocks)


def synthesize_answer(
    english_query: str,
    hits: list[dict],
    chat,
    guardrail: GuardrailPolicy,
    prompts: PromptLibrary,
    require_evidence: bool = True,
) -> tuple[str, list[str], bool, str, list[str]]:
    """Guarded synthesis. Returns (answer, cited_chunk_ids, abstained,
    final_prompt, flags). Abstention never touches the chat provider."""
    flags: list[str] = []
    if require_evidence:
        top_score = hits[0]["score"] if hits else float("-inf")
        if len(hits) < guardrail.min_hits or top_score < guardrail.min_top_score:
            return REFUSAL_TEXT, [], True, "", ["guardrail_abstained"]

    guardrail_text = prompts.raw("guardrail").strip() + "\n" + guardrail.abstain_instruction
    evidence = _evidence_blocks(hits) if hits else "(no evidence provided)"
    prompt = prompts.render(
        "synthesize", guardrail=guardrail_text, evidence=evidence, query=english_query
    )
    answer = chat.chat([ChatMessage("user", prompt)]).content.strip()

    cited: list[str] = []
    try:
        for ref in _CITATION_RE.findall(answer):
            idx = int(ref)
            if 1 <= idx <= len(hits):
                cid = hits[idx - 1]["chunk_id"]
                if cid not in cited:
                    cited.append(cid)
    except Exception:
        cited = []
        flags.append("citation_parse_failed")
    return answer, cited, False, prompt, flags


def hit_payload(hit: SearchHit, kb: KnowledgeBase) -> dict:
    chunk = kb.chunk(hit.chunk_id)
    return {
        "chunk_id": hit.chunk_id,
        "score": hit.score,
        "level": hit.level,
        "clause_path": [list(p) for p in chunk.clause_path],
        "covered_paths": [list(p) for p in chunk.covered_paths],
        "text": chunk.text,
    }


def run_query(
    query: str,
    mode: str,
    cfg: EngineConfig,
    prompts: PromptLibrary,
    embedder,
    chats: dict,
    term_kb: KnowledgeBase | None,
    factual_kb: KnowledgeBase | None,
    region: str = "",
    k: int | None = None,
) -> QueryTrace:
    """Execute one query in the given mode and return its full trace."""
    if mode not in MODES:
        raise UnknownMode(f"unknown mode {mode!r}; expected one of {MODES}")
    k = k or cfg.retrieval_k
    trace = QueryTrace(
        trace_id=uuid.uuid4().hex,
        mode=mode,
        original_query=query,
        detected_language="en" if is_english(query, cfg.english_ascii_ratio) else "non-en",
        region=region,
        config=cfg.snapshot(),
        models={
            role: (chat.cfg.model_name if hasattr(chat, "cfg") else "scripted")
            for role, chat in chats.items()
        },
    )

    def timed(stage: str, fn):
        start = time.perf_counter()
        result = fn()
        trace.timings[stage] = time.perf_counter() - start
        return result

    retrieval_query = query
    if mode == "gridcodex":
        enriched, term_hits, flags = timed(
            "refine",
            lambda: refine_query(
                query, term_kb, embedder, chats["refiner"], prompts,
                k=cfg.term_k, floor=cfg.term_floor,
            ),
        )
        trace.term_hits = term_hits
        trace.enriched_query = enriched
        trace.flags.extend(flags)

        translated, flags = timed(
            "translate",
            lambda: translate_query(
                enriched, chats["translator"], prompts,
                term_hits=term_hits, ascii_ratio=cfg.english_ascii_ratio,
            ),
        )
        trace.translated_query = translated
        trace.flags.extend(flags)
        retrieval_query = translated

    hits_payload: list[dict] = []
    if mode in ("gridcodex", "vanilla_rag"):
        raw_hits = timed(
            "retrieve", lambda: retrieve_factual(retrieval_query, factual_kb, embedder, k=k)
        )
        hits_payload = [hit_payload(h, factual_kb) for h in raw_hits]
        trace.retrieval_hits = hits_payload

    answer, cited, abstained, final_prompt, flags = timed(
        "synthesize",
        lambda: synthesize_answer(
            retrieval_query,
            hits_payload,
            chats["synthesizer"],
            cfg.guardrail,
            prompts,
            require_evidence=(mode != "plain_llm"),
        ),
    )
    trace.answer = answer
    trace.cited_chunk_ids = cited
    trace.abstained = abstained
    trace.final_prompt = final_prompt
    trace.flags.extend(flags)
    return trace
