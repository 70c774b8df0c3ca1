"""Knowledge-base assembly, registry, and terminology lookup.

Two KB kinds are kept strictly separate: terminology KBs hold one chunk per
term entry (definitions must stay precise, so entries are never budget-
merged) and never get a summary tree; factual KBs hold clause chunks plus
the recursive summary levels. Region is a hard attribute of every KB so
cross-region retrieval is structurally impossible.
"""

from __future__ import annotations

import datetime as _dt
import json
import os
import re
import shutil
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Chunk, SourceDocument, chunk_tree, parse_document
from .errors import DuplicateKb, EmptyIndex, ParseError
from .index import IndexEntry, VectorIndex
from .raptor import RaptorConfig, RaptorTree, build_tree
from .tokens import count_tokens

META_FILE = "meta.json"
CHUNKS_FILE = "chunks.jsonl"
RAPTOR_FILE = "raptor.json"
TERMS_FILE = "terms.json"

DEFAULT_TERM_FLOOR = 0.25


@dataclass
class TermEntry:
    term: str
    definition: str
    translations: dict[str, str] = field(default_factory=dict)
    aliases: list[str] = field(default_factory=list)
    source_path: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if not self.term or not self.definition:
            raise ParseError(f"term entry missing term/definition: {self.term!r}")

    def chunk_text(self) -> str:
        parts = [self.term, self.definition]
        if self.aliases:
            parts.append("aliases: " + "; ".join(self.aliases))
        if self.translations:
            parts.append(
                "translations: "
                + "; ".join(f"{lang}: {text}" for lang, text in sorted(self.translations.items()))
            )
        return " — ".join(parts)

    def to_dict(self) -> dict:
        return {
            "term": self.term,
            "definition": self.definition,
            "translations": dict(self.translations),
            "aliases": list(self.aliases),
            "source_path": list(self.source_path),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TermEntry":
        return cls(
            term=d["term"],
            definition=d["definition"],
            translations=dict(d.get("translations", {})),
            aliases=list(d.get("aliases", [])),
            source_path=list(d.get("source_path", [])),
        )


@dataclass
class KnowledgeBase:
    kb_id: str
    kind: str  # terminology | factual
    region: str
    language: str
    meta: dict
    index: VectorIndex
    chunks: dict[str, Chunk]
    entries: dict[str, TermEntry] = field(default_factory=dict)  # chunk_id -> entry
    tree: RaptorTree | None = None

    def chunk(self, chunk_id: str) -> Chunk:
        return self.chunks[chunk_id]


def parse_terminology_json(path: str | Path) -> list[TermEntry]:
    """Nested object file: interior keys form the category path, leaves are
    entry objects carrying at least a definition."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", source=str(path), line=exc.lineno)

    entries: list[TermEntry] = []

    def visit(node: dict, prefix: list[str]) -> None:
        if "definition" in node:
            entry = TermEntry(
                term=node.get("term", prefix[-1] if prefix else ""),
                definition=node["definition"],
                translations=dict(node.get("translations", {})),
                aliases=list(node.get("aliases", [])),
                source_path=prefix[:-1] if "term" not in node else list(prefix),
            )
            entry.validate()
            entries.append(entry)
            return
        for key, value in node.items():
            if not isinstance(value, dict):
                raise ParseError(f"unexpected value under {'/'.join(prefix + [key])}", source=str(path))
            visit(value, prefix + [key])

    visit(data, [])
    return entries


_TERM_LINE_RE = re.compile(r"^[-*]\s+\*\*(?P<term>[^*]+)\*\*(?:\s+\((?P<meta>[^)]*)\))?:\s*(?P<definition>.+)$")


def parse_terminology_markdown(path: str | Path) -> list[TermEntry]:
    """Markdown glossary: heading hierarchy = category path, definition list
    items = entries, e.g. `- **Term** (also: a, b; nl: X): definition`."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    entries: list[TermEntry] = []
    category: list[str] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        heading = re.match(r"^(#{1,6})\s+(.*\S)\s*$", line)
        if heading:
            depth = len(heading.group(1))
            category = category[: depth - 1] + [heading.group(2)]
            continue
        m = _TERM_LINE_RE.match(line.strip())
        if not m:
            if line.strip().startswith(("-", "*")):
                raise ParseError("unparseable glossary item", source=str(path), line=lineno)
            continue
        aliases: list[str] = []
        translations: dict[str, str] = {}
        meta = m.group("meta") or ""
        for part in filter(None, (p.strip() for p in meta.split(";"))):
            key, _, value = part.partition(":")
            key, value = key.strip(), value.strip()
            if key == "also":
                aliases = [a.strip() for a in value.split(",") if a.strip()]
            elif value:
                translations[key] = value
        entry = TermEntry(
            term=m.group("term").strip(),
            definition=m.group("definition").strip(),
            aliases=aliases,
            translations=translations,
            source_path=list(category),
        )
        entry.validate()
        entries.append(entry)
    return entries


def load_term_entries(paths: list[str | Path]) -> list[TermEntry]:
    entries: list[TermEntry] = []
    for path in paths:
        path = Path(path)
        if path.suffix.lower() == ".json":
            entries.extend(parse_terminology_json(path))
        else:
            entries.extend(parse_terminology_markdown(path))
    return entries


@dataclass
class KbBuildConfig:
    kb_id: str
    region: str
    language: str = "en"
    chunk_budget: int = 256
    term_floor: float = DEFAULT_TERM_FLOOR
    raptor: RaptorConfig = field(default_factory=RaptorConfig)


class KbRegistry:
    """File-backed registry; a KB exists iff its directory holds a complete
    meta.json. Builds stage into a temp directory and move into place on
    success, so interrupted builds are invisible."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.kb_root = self.data_dir / "kb"
        self.kb_root.mkdir(parents=True, exist_ok=True)

    def kb_dir(self, kb_id: str) -> Path:
        return self.kb_root / kb_id

    def exists(self, kb_id: str) -> bool:
        return (self.kb_dir(kb_id) / META_FILE).is_file()

    def list(self) -> list[dict]:
        metas = []
        for meta_path in sorted(self.kb_root.glob(f"*/{META_FILE}")):
            metas.append(json.loads(meta_path.read_text(encoding="utf-8")))
        return metas

    def find(self, region: str, kind: str) -> dict | None:
        for meta in self.list():
            if meta["region"] == region and meta["kind"] == kind:
                return meta
        return None

    def open(self, kb_id: str) -> KnowledgeBase:
        kb_dir = self.kb_dir(kb_id)
        meta = json.loads((kb_dir / META_FILE).read_text(encoding="utf-8"))
        index = VectorIndex.load(kb_dir)
        chunks: dict[str, Chunk] = {}
        with (kb_dir / CHUNKS_FILE).open(encoding="utf-8") as fh:
            for line in fh:
                chunk = Chunk.from_dict(json.loads(line))
                chunks[chunk.chunk_id] = chunk
        entries: dict[str, TermEntry] = {}
        terms_path = kb_dir / TERMS_FILE
        if terms_path.is_file():
            raw = json.loads(terms_path.read_text(encoding="utf-8"))
            entries = {cid: TermEntry.from_dict(d) for cid, d in raw.items()}
        tree = None
        tree_path = kb_dir / RAPTOR_FILE
        if tree_path.is_file():
            tree = RaptorTree.load(tree_path)
        return KnowledgeBase(
            kb_id=kb_id,
            kind=meta["kind"],
            region=meta["region"],
            language=meta.get("language", "en"),
            meta=meta,
            index=index,
            chunks=chunks,
            entries=entries,
            tree=tree,
        )

    def stage_dir(self) -> Path:
        staging = self.data_dir / "staging" / uuid.uuid4().hex
        staging.mkdir(parents=True)
        return staging

    def commit(self, kb_id: str, staging: Path, force: bool = False) -> None:
        target = self.kb_dir(kb_id)
        if target.exists():
            if not force:
                raise DuplicateKb(f"kb {kb_id} already exists")
            shutil.rmtree(target)
        os.replace(staging, target)

    def remove(self, kb_id: str) -> None:
        target = self.kb_dir(kb_id)
        if target.exists():
            shutil.rmtree(target)


def _write_kb_files(
    staging: Path,
    meta: dict,
    index: VectorIndex,
    chunks: list[Chunk],
    entries: dict[str, TermEntry] | None = None,
    tree: RaptorTree | None = None,
) -> None:
    index.persist(staging)
    with (staging / CHUNKS_FILE).open("w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(json.dumps(chunk.to_dict(), ensure_ascii=False) + "\n")
    if entries is not None:
        (staging / TERMS_FILE).write_text(
            json.dumps({cid: e.to_dict() for cid, e in entries.items()}, ensure_ascii=False, indent=2),
            encoding="utf-8",
        )
    if tree is not None:
        tree.save(staging / RAPTOR_FILE)
    # meta.json written last: its presence marks the KB complete.
    (staging / META_FILE).write_text(json.dumps(meta, ensure_ascii=False, indent=2), encoding="utf-8")


def _base_meta(cfg: KbBuildConfig, kind: str, embedder, extra: dict) -> dict:
    meta = {
        "kb_id": cfg.kb_id,
        "kind": kind,
        "region": cfg.region,
        "language": cfg.language,
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "embedder": getattr(embedder, "describe", lambda: type(embedder).__name__)(),
        "chunk_budget": cfg.chunk_budget,
        "term_floor": cfg.term_floor,
    }
    meta.update(extra)
    return meta


def build_terminology_kb(
    entries: list[TermEntry],
    cfg: KbBuildConfig,
    embedder,
    registry: KbRegistry,
    force: bool = False,
) -> tuple[KnowledgeBase, list[str]]:
    """One chunk per entry; duplicates (same term + path) keep the last
    occurrence and record a warning. Returns (kb, warnings)."""
    if not entries:
        raise ParseError("terminology KB requires at least one entry")
    if registry.exists(cfg.kb_id) and not force:
        raise DuplicateKb(f"kb {cfg.kb_id} already exists")

    warnings: list[str] = []
    by_key: dict[tuple, TermEntry] = {}
    for entry in entries:
        entry.validate()
        key = (entry.term, tuple(entry.source_path))
        if key in by_key:
            warnings.append(f"duplicate term {entry.term!r} at {'/'.join(entry.source_path) or '<root>'}; later entry wins")
        by_key[key] = entry

    chunks: list[Chunk] = []
    chunk_entries: dict[str, TermEntry] = {}
    for i, entry in enumerate(by_key.values()):
        text = entry.chunk_text()
        chunk = Chunk(
            chunk_id=f"{cfg.kb_id}:t{i:04d}",
            kb_id=cfg.kb_id,
            doc_id="terminology",
            clause_path=[(p, p) for p in entry.source_path] or [(entry.term, entry.term)],
            text=text,
            token_count=count_tokens(text),
            level=0,
        )
        chunks.append(chunk)
        chunk_entries[chunk.chunk_id] = entry

    index = VectorIndex(kb_id=cfg.kb_id)
    vectors = embedder.embed_batch([c.text for c in chunks])
    index.upsert(
        [
            IndexEntry(chunk_id=c.chunk_id, vector=v, level=0, kb_id=cfg.kb_id)
            for c, v in zip(chunks, vectors)
            if not v.degenerate
        ]
    )

    staging = registry.stage_dir()
    meta = _base_meta(cfg, "terminology", embedder, {"entry_count": len(chunks), "warnings": warnings})
    _write_kb_files(staging, meta, index, chunks, entries=chunk_entries)
    registry.commit(cfg.kb_id, staging, force=force)
    return registry.open(cfg.kb_id), warnings


def build_factual_kb(
    docs: list[SourceDocument],
    cfg: KbBuildConfig,
    embedder,
    chat,
    registry: KbRegistry,
    force: bool = False,
    progress=None,
) -> KnowledgeBase:
    """Full factual pipeline: parse -> chunk -> embed -> index -> summary
    tree. Registration is atomic; a failed build leaves nothing behind."""
    if not docs:
        raise ParseError("factual KB requires at least one document")
    regions = {d.region for d in docs}
    if regions != {cfg.region}:
        raise ParseError(f"factual KB {cfg.kb_id} is region {cfg.region}, documents are {sorted(regions)}")
    for doc in docs:
        if doc.kind != "regulation":
            raise ParseError(f"factual KB accepts only regulation documents, got {doc.kind!r} ({doc.doc_id})")
    if registry.exists(cfg.kb_id) and not force:
        raise DuplicateKb(f"kb {cfg.kb_id} already exists")

    def report(stage: str) -> None:
        if progress:
            progress(stage)

    leaf_chunks: list[Chunk] = []
    for doc in docs:
        report(f"parsing {doc.doc_id}")
        tree = parse_document(doc)
        for chunk in chunk_tree(tree, cfg.chunk_budget, kb_id=cfg.kb_id):
            leaf_chunks.append(chunk)

    report("embedding leaf chunks")
    index = VectorIndex(kb_id=cfg.kb_id)
    vectors = embedder.embed_batch([c.text for c in leaf_chunks])
    index.upsert(
        [
            IndexEntry(chunk_id=c.chunk_id, vector=v, level=0, kb_id=cfg.kb_id)
            for c, v in zip(leaf_chunks, vectors)
            if not v.degenerate
        ]
    )

    report("building summary tree")
    tree, summaries = build_tree(leaf_chunks, embedder, chat, index, cfg.raptor, cfg.kb_id)

    staging = registry.stage_dir()
    meta = _base_meta(
        cfg,
        "factual",
        embedder,
        {
            "doc_ids": [d.doc_id for d in docs],
            "leaf_chunks": len(leaf_chunks),
            "summary_chunks": len(summaries),
            "levels": len(tree.levels),
            "raptor": cfg.raptor.to_dict(),
        },
    )
    _write_kb_files(staging, meta, index, leaf_chunks + summaries, tree=tree)
    report("registering")
    registry.commit(cfg.kb_id, staging, force=force)
    return registry.open(cfg.kb_id)


def lookup_terms(
    query: str,
    kb: KnowledgeBase,
    embedder,
    k: int = 5,
    floor: float = DEFAULT_TERM_FLOOR,
) -> list[tuple[TermEntry, float]]:
    """Embed the query and return the best-matching term entries; hits with
    cosine below the floor are dropped."""
    if kb.kind != "terminology":
        raise ParseError(f"lookup_terms requires a terminology KB, got {kb.kind}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(kb.index) == 0:
        raise EmptyIndex(f"terminology KB {kb.kb_id} has an empty index")
    vector = embedder.embed_batch([query])[0]
    if vector.degenerate:
        return []
    hits = kb.index.search(vector, k)
    results = []
    for hit in hits:
        if hit.score < floor:
            continue
        entry = kb.entries.get(hit.chunk_id)
        if entry is not None:
            results.append((entry, hit.score))
    return results
