#!/usr/bin/env python3
"""Generate the bundled synthetic bilingual benchmark fixtures.

The corpus is English; benchmark queries use Dutch or Cantonese jargon plus
the bait words "grid code" that appear in most non-gold clauses but never in
gold clauses. Retrieval on the raw query therefore cannot reach the gold
clauses, while the glossary definitions (pure signature vocabulary shared
with exactly one gold clause each) bridge the gap after refinement. The
deterministic hash embedder turns that vocabulary design directly into
cosine ranks, so the recall gap is forced by construction.

Run with --verify to rebuild the KBs in a temp directory and check the
strict Recall@30 targets empirically before committing the fixtures.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from gridcodex.tokens import count_tokens  # noqa: E402

OUT_DIR = REPO / "fixtures"

PREFIXES = [
    "sub", "inter", "over", "under", "auto", "tele", "ferro", "electro",
    "synchro", "quadri", "retro", "anti", "multi", "semi", "iso",
]
SUFFIXES = [
    "harmonic", "resonance", "magnetizing", "fluxing", "damping",
    "coupling", "compensation", "excitation", "commutation", "restrike",
]

DUTCH_JARGON = [
    "dipvastheid netkoppeling", "blindlastregeling vermogensbereik",
    "statiekinstelling draaiende", "eilandbedrijf herinschakeling",
    "spanningsdip doorstaanvermogen", "kortsluitvastheid railsysteem",
    "wervelstroom demping", "faseverschuiving compensatie",
    "nullastverliezen beperking", "inschakelstroom begrenzing",
    "vermogensgradient bewaking", "frequentiezakking reactie",
    "overbelastbaarheid transformatoren", "aardfoutdetectie gevoeligheid",
    "pendeldemping stabilisatie",
]

CJK_CHARS = (
    "低頻減載孤島運轉過激磁護寬帶振盪切機联鎖差動保衛距離闭環重合閘週期"
    "諧波畸變率阻尼控制器短路容量計算備用裕度調派黑啟航能力"
)

GOLD_FILLER = [
    "Compliance shall be demonstrated during commissioning and verified periodically thereafter.",
    "Records of each test shall be retained and made available on request.",
    "The relevant operator shall be notified before any setting is changed.",
    "Deviations require prior written approval from the system operator.",
    "The applicable thresholds are stated in the connection agreement.",
]

BAIT_FILLER = [
    "The grid code stipulates the obligations applicable at the connection point.",
    "Operators shall comply with the grid code provisions at all times.",
    "This grid code section applies to all connected generating facilities.",
    "Non-compliance with the grid code shall be reported without delay.",
    "The grid code defines the procedure for demonstrating conformity.",
]

GENERIC = [
    "voltage", "frequency", "reactive", "active", "power", "operator",
    "facility", "connection", "generating", "unit", "setting", "response",
    "threshold", "procedure", "protection", "control", "measurement",
    "agreement", "notification", "verification",
]

PART_NAMES = ["General Provisions", "Connection Conditions", "Operational Rules",
              "Protection Requirements", "Testing And Records"]
ARTICLE_NAMES = ["Scope", "Technical Conditions", "Obligations"]
CLAUSE_NAMES = ["Applicability", "Performance", "Limits", "Procedures"]


def signature_pool() -> list[str]:
    pool = [p + s for p, s in itertools.product(PREFIXES, SUFFIXES)]
    assert len(pool) == len(set(pool)) and len(pool) >= 150
    return pool[:150]


def pad_to_tokens(sentences: list[str], target: int, extra: list[str]) -> str:
    """Append filler sentences until the body reaches the target size."""
    i = 0
    while count_tokens(" ".join(sentences)) < target:
        sentences.append(extra[i % len(extra)])
        i += 1
    return " ".join(sentences)


def gold_body(sig: list[str], idx: int) -> str:
    w1, w2, w3, w4, w5 = sig
    sentences = [
        f"The {w1} withstand capability shall remain engaged whenever {w2} conditions occur.",
        f"Where {w3} behaviour coincides with {w4} events, the {w5} margin applies.",
        f"Settings for {w1} supervision and {w2} limitation shall follow the stated values.",
        f"The {w3} study shall cover {w4} interaction and the resulting {w5} duty.",
        f"Evidence of adequate {w1} performance, {w2} reserve, {w3} response, {w4} endurance and {w5} headroom shall be filed.",
        f"A value of {5 + idx} percent applies for a duration of {100 + 10 * idx} milliseconds.",
    ]
    return pad_to_tokens(sentences, 140, GOLD_FILLER)


def bait_body(slot: int) -> str:
    words = [GENERIC[(slot + j) % len(GENERIC)] for j in range(4)]
    sentences = [
        BAIT_FILLER[slot % len(BAIT_FILLER)],
        f"Requirements concerning {words[0]} and {words[1]} apply to every {words[2]} {words[3]}.",
        BAIT_FILLER[(slot + 2) % len(BAIT_FILLER)],
        f"The {words[1]} {words[2]} shall be recorded together with the agreed {words[0]} values.",
    ]
    return pad_to_tokens(sentences, 140, BAIT_FILLER)


def intro_body(slot: int) -> str:
    return " ".join([
        BAIT_FILLER[slot % len(BAIT_FILLER)],
        "The following articles set out the detailed provisions.",
    ])


def build_doc(region: str, n_parts: int, gold_slots: dict[tuple, list[str]]) -> tuple[str, list[list[str]]]:
    """Render one regulation document; returns (markdown, leaf label paths)."""
    lines = []
    leaf_paths = []
    slot = 0
    for p in range(1, n_parts + 1):
        lines.append(f"# {p} {PART_NAMES[(p - 1) % len(PART_NAMES)]}")
        lines.append(intro_body(slot))
        for a in range(1, 4):
            label_a = f"{p}.{a}"
            lines.append(f"## {label_a} {ARTICLE_NAMES[(a - 1) % len(ARTICLE_NAMES)]}")
            lines.append(intro_body(slot + a))
            for c in range(1, 5):
                label_c = f"{p}.{a}.{c}"
                lines.append(f"### {label_c} {CLAUSE_NAMES[(c - 1) % len(CLAUSE_NAMES)]}")
                sig = gold_slots.get((p, a, c))
                if sig is not None:
                    lines.append(gold_body(sig, slot))
                else:
                    lines.append(bait_body(slot))
                leaf_paths.append([str(p), label_a, label_c])
                slot += 1
    return "\n".join(lines) + "\n", leaf_paths


def gold_positions() -> list[tuple[int, int, int]]:
    """15 clause slots spread over a 5x3x4 document."""
    positions = []
    for i in range(15):
        p = i % 5 + 1
        a = (i // 5) % 3 + 1
        c = (i * 7) % 4 + 1
        positions.append((p, a, c))
    assert len(set(positions)) == 15
    return positions


def nl_glossary(terms: list[dict]) -> str:
    lines = ["# Dutch Grid Terminology", ""]
    for t in terms:
        jargon = t["jargon"]
        lines.append(
            f"- **{t['name']}** (also: {jargon}; nl: {jargon}; en: {t['name']}): {t['definition']}"
        )
    return "\n".join(lines) + "\n"


def hk_glossary(terms: list[dict]) -> str:
    lines = ["# Cantonese Grid Terminology", ""]
    for t in terms:
        lines.append(
            f"- **{t['name']}** (zh: {t['jargon']}; en: {t['name']}): {t['definition']}"
        )
    return "\n".join(lines) + "\n"


def make_region(region: str, sigs: list[list[str]], jargons: list[str], language: str):
    positions = gold_positions()
    gold_slots = {pos: sig for pos, sig in zip(positions, sigs)}
    doc, leaf_paths = build_doc(region, 5, gold_slots)

    terms, items = [], []
    for i, (pos, sig, jargon) in enumerate(zip(positions, sigs, jargons)):
        name = f"{sig[0]} capability"
        definition = " ".join(sig)
        terms.append({"name": name, "definition": definition, "jargon": jargon})
        p, a, c = pos
        gold_path = [str(p), f"{p}.{a}", f"{p}.{a}.{c}"]
        items.append({
            "item_id": f"{region.lower()}-{i + 1:02d}",
            "region": region,
            "question": f"grid code {jargon}" if language == "nl" else f"grid code {jargon}",
            "reference_answer": (
                f"Clause {p}.{a}.{c} requires {sig[0]} withstand capability with "
                f"{sig[1]} limitation and an adequate {sig[4]} margin."
            ),
            "gold_evidence": [gold_path],
        })
    return doc, terms, items, leaf_paths


def chat_rules(hk_items: list[dict], hk_terms: list[dict]) -> dict:
    rules = [
        {
            "name": "refine", "kind": "template", "contains": "TASK: refine-query",
            "pattern": r"<original_query>\n((?:.|\n)*?)\n</original_query>(?:.|\n)*?<definitions>\n((?:.|\n)*?)\n</definitions>",
            "response": "\\1\n\\2",
        },
    ]
    for item, term in zip(hk_items, hk_terms):
        rules.append({
            "name": f"translate-{item['item_id']}", "kind": "literal",
            "contains": "TASK: translate-query", "pattern": term["jargon"],
            "response": f"grid code {term['definition']}",
        })
    rules.extend([
        {
            "name": "translate-echo", "kind": "template", "contains": "TASK: translate-query",
            "pattern": r"<query>\n((?:.|\n)*?)\n</query>", "response": "\\1",
        },
        {
            "name": "synthesize", "kind": "literal", "contains": "TASK: synthesize-answer",
            "response": "Based on the provisions, the stated obligations apply [1].",
        },
        {
            "name": "summarize", "kind": "template", "contains": "REGULATION EXCERPTS:",
            "pattern": r"REGULATION EXCERPTS:\n\[([^\]\n]*)\]",
            "response": "Synopsis segment \\1",
        },
        {
            "name": "judge", "kind": "literal", "contains": "TASK: judge-answer",
            "response": "accuracy:0.9 completeness:0.8 usefulness:0.8\nconsistent with the reference.",
        },
        {
            "name": "decompose", "kind": "literal", "contains": "TASK: decompose-claims",
            "response": "- The cited obligations apply.",
        },
        {
            "name": "label", "kind": "literal", "contains": "TASK: label-claims",
            "response": "1: supported",
        },
        {"name": "default", "kind": "literal", "response": "ok"},
    ])
    return {"rules": rules}


def generate() -> dict:
    pool = signature_pool()
    nl_sigs = [pool[i * 5:(i + 1) * 5] for i in range(15)]
    hk_sigs = [pool[75 + i * 5:75 + (i + 1) * 5] for i in range(15)]
    assert len(CJK_CHARS) >= 60 and len(set(CJK_CHARS)) == len(CJK_CHARS)
    hk_jargon = [CJK_CHARS[i * 4:(i + 1) * 4] for i in range(15)]

    nl_doc, nl_terms, nl_items, nl_paths = make_region("NL", nl_sigs, DUTCH_JARGON, "nl")
    hk_doc, hk_terms, hk_items, hk_paths = make_region("HK", hk_sigs, hk_jargon, "zh")
    eu_doc, eu_paths = build_doc("EU", 2, {})

    corpus_dir = OUT_DIR / "corpus"
    glossary_dir = OUT_DIR / "glossary"
    scripted_dir = OUT_DIR / "scripted"
    for d in (corpus_dir, glossary_dir, scripted_dir):
        d.mkdir(parents=True, exist_ok=True)

    (corpus_dir / "nl_gridcode.md").write_text(nl_doc, encoding="utf-8")
    (corpus_dir / "hk_gridcode.md").write_text(hk_doc, encoding="utf-8")
    (corpus_dir / "eu_gridcode.md").write_text(eu_doc, encoding="utf-8")
    (glossary_dir / "nl_terms.md").write_text(nl_glossary(nl_terms), encoding="utf-8")
    (glossary_dir / "hk_terms.md").write_text(hk_glossary(hk_terms), encoding="utf-8")

    items = nl_items + hk_items
    (OUT_DIR / "bench_bilingual.jsonl").write_text(
        "\n".join(json.dumps(i, ensure_ascii=False) for i in items) + "\n", encoding="utf-8"
    )
    (scripted_dir / "chat_rules.json").write_text(
        json.dumps(chat_rules(hk_items, hk_terms), ensure_ascii=False, indent=2), encoding="utf-8"
    )
    (scripted_dir / "embedder.yaml").write_text("dim: 512\n", encoding="utf-8")

    manifest = {
        "corpus": {
            "nl_gridcode.md": {"region": "NL", "leaf_clauses": len(nl_paths)},
            "hk_gridcode.md": {"region": "HK", "leaf_clauses": len(hk_paths)},
            "eu_gridcode.md": {"region": "EU", "leaf_clauses": len(eu_paths)},
        },
        "glossaries": {"nl_terms.md": {"region": "NL", "entries": len(nl_terms)},
                       "hk_terms.md": {"region": "HK", "entries": len(hk_terms)}},
        "benchmark": {"file": "bench_bilingual.jsonl", "items": len(items),
                      "regions": {"NL": len(nl_items), "HK": len(hk_items)}},
        "scripted": {"chat_rules": "scripted/chat_rules.json",
                     "embedder": "scripted/embedder.yaml"},
        "targets": {"vanilla_rag_strict_recall_at_30_max": 0.30,
                    "gridcodex_strict_recall_at_30_min": 0.90},
    }
    (OUT_DIR / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest


def verify() -> None:
    from gridcodex.config import EngineConfig
    from gridcodex.corpus import SourceDocument
    from gridcodex.engine import Engine
    from gridcodex.evaluation import load_dataset, recall_at_k

    with tempfile.TemporaryDirectory() as tmp:
        cfg = EngineConfig.scripted(OUT_DIR / "scripted", Path(tmp) / "data")
        engine = Engine(cfg)
        for region, doc_file, gloss_file in (
            ("NL", "nl_gridcode.md", "nl_terms.md"),
            ("HK", "hk_gridcode.md", "hk_terms.md"),
        ):
            body = (OUT_DIR / "corpus" / doc_file).read_text(encoding="utf-8")
            doc = SourceDocument(doc_id=doc_file[:-3], region=region, language="en",
                                 title=f"{region} Grid Connection Regulation", body=body)
            engine.ingest_factual([doc], kb_id=f"factual-{region.lower()}", region=region)
            engine.ingest_terminology([OUT_DIR / "glossary" / gloss_file],
                                      kb_id=f"terms-{region.lower()}", region=region)

        items = load_dataset(OUT_DIR / "bench_bilingual.jsonl")
        stats = {}
        for mode in ("vanilla_rag", "gridcodex"):
            strict = []
            for item in items:
                trace = engine.answer_query(item.question, item.region, mode)
                kb = engine.factual_kb(item.region)
                result = recall_at_k(trace, item.gold_evidence, 30, kb)
                strict.append(result.strict)
                marker = "hit " if result.strict else "MISS"
                print(f"  {mode:<12} {item.item_id}: {marker}")
            stats[mode] = sum(strict) / len(strict)
        print(f"vanilla_rag strict Recall@30: {stats['vanilla_rag']:.3f} (target <= 0.30)")
        print(f"gridcodex   strict Recall@30: {stats['gridcodex']:.3f} (target >= 0.90)")
        if stats["vanilla_rag"] > 0.30 or stats["gridcodex"] < 0.90:
            sys.exit("FIXTURE TARGETS NOT MET")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--verify", action="store_true",
                        help="rebuild the KBs in a temp dir and check recall targets")
    args = parser.parse_args()
    manifest = generate()
    total = sum(d["leaf_clauses"] for d in manifest["corpus"].values())
    print(f"wrote fixtures: {total} leaf clauses, {manifest['benchmark']['items']} benchmark items")
    if args.verify:
        verify()


if __name__ == "__main__":
    main()
