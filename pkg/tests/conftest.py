import pytest

from gridcodex.providers import HashEmbedder, ScriptedChatProvider, ScriptRule

GLOSSARY_MD = """# Grid Terminology

## Frequency
- **fault ride through** (also: FRT, dipbestendigheid; nl: dipbestendigheid; en: fault ride through): capability of a generating unit to remain connected during voltage dips.
- **droop** (nl: statiek): proportional relation between frequency deviation and active power response.

## Voltage
- **reactive capability** (also: Q-capability): reactive power range a unit must sustain at its connection point.
"""

REGULATION_MD = """# 1 Connection Requirements
General connection provisions apply to all generating units.
## 1.1 Fault Ride Through
Generating units shall remain connected during voltage dips down to twenty percent of nominal voltage for durations up to 250 milliseconds.
## 1.2 Reactive Capability
Units shall sustain a reactive power range of 0.95 leading to 0.95 lagging at the connection point.
# 2 Frequency Response
Frequency response obligations cover primary and secondary reserves.
## 2.1 Droop Settings
The droop setting shall be adjustable between two and twelve percent with a default of four percent.
## 2.2 Reserve Activation
Primary reserve shall be fully activated within thirty seconds of a frequency deviation.
"""


def scripted_rules():
    return [
        ScriptRule(
            name="refine", kind="template", contains="TASK: refine-query",
            pattern=r"<original_query>\n((?:.|\n)*?)\n</original_query>(?:.|\n)*?<definitions>\n((?:.|\n)*?)\n</definitions>",
            response="\\1\n\\2",
        ),
        ScriptRule(
            name="translate", kind="template", contains="TASK: translate-query",
            pattern=r"<query>\n((?:.|\n)*?)\n</query>",
            response="\\1",
        ),
        ScriptRule(
            name="synthesize", contains="TASK: synthesize-answer",
            response="The requirement applies as stated in the provisions [1].",
        ),
        ScriptRule(
            name="summarize", kind="template", contains="REGULATION EXCERPTS:",
            pattern=r"REGULATION EXCERPTS:\n((?:.|\n){0,400})",
            response="Summary: \\1",
        ),
        ScriptRule(
            name="judge", contains="TASK: judge-answer",
            response="accuracy:0.8 completeness:0.5 usefulness:0.5\nmatches the reference closely.",
        ),
        ScriptRule(
            name="decompose", contains="TASK: decompose-claims",
            response="- The requirement applies as stated.",
        ),
        ScriptRule(
            name="label", contains="TASK: label-claims",
            response="1: supported",
        ),
        ScriptRule(name="default", response="ok"),
    ]


def write_scripted_fixture(fixture_dir, summarize_delay_ms=0, dim=128):
    import json

    fixture_dir.mkdir(parents=True, exist_ok=True)
    rules = []
    for rule in scripted_rules():
        d = {"name": rule.name, "kind": rule.kind, "response": rule.response}
        if rule.contains is not None:
            d["contains"] = rule.contains
        if rule.pattern is not None:
            d["pattern"] = rule.pattern
        if rule.name == "summarize" and summarize_delay_ms:
            d["delay_ms"] = summarize_delay_ms
        rules.append(d)
    (fixture_dir / "chat_rules.json").write_text(json.dumps({"rules": rules}), encoding="utf-8")
    (fixture_dir / "embedder.yaml").write_text(f"dim: {dim}\n", encoding="utf-8")


@pytest.fixture
def embedder():
    return HashEmbedder(dim=256)


@pytest.fixture
def scripted_chat():
    return ScriptedChatProvider(scripted_rules())


@pytest.fixture
def glossary_path(tmp_path):
    path = tmp_path / "glossary.md"
    path.write_text(GLOSSARY_MD, encoding="utf-8")
    return path


@pytest.fixture
def engine(tmp_path, glossary_path, regulation_doc):
    from gridcodex.config import EngineConfig, Providers
    from gridcodex.engine import Engine
    from gridcodex.raptor import RaptorConfig

    cfg = EngineConfig.scripted(tmp_path, tmp_path / "data", chunk_budget=64,
                                raptor=RaptorConfig(seed=1, min_cluster_size=2))
    providers = Providers(
        embedder=HashEmbedder(dim=256),
        chats={role: ScriptedChatProvider(scripted_rules())
               for role in ("refiner", "translator", "synthesizer", "summarizer", "judge")},
    )
    eng = Engine(cfg, providers=providers)
    eng.ingest_terminology([glossary_path], kb_id="t-nl", region="NL")
    eng.ingest_factual([regulation_doc], kb_id="f-nl", region="NL")
    return eng


@pytest.fixture
def regulation_doc():
    from gridcodex.corpus import SourceDocument

    return SourceDocument(
        doc_id="nl-grid", region="NL", language="en",
        title="Grid Connection Regulation", body=REGULATION_MD,
    )
