"""Engine core shared by the CLI and the HTTP service: owns the KB registry,
provider instances, prompt library, and trace store."""

from __future__ import annotations

import threading
from pathlib import Path

from .config import EngineConfig, Providers, build_providers
from .corpus import SourceDocument
from .errors import DuplicateKb, UnknownRegion
from .kb import (
    KbBuildConfig,
    KbRegistry,
    KnowledgeBase,
    build_factual_kb,
    build_terminology_kb,
    load_term_entries,
)
from .qa import MODES, PromptLibrary, QueryTrace, TraceStore, run_query


class Engine:
    def __init__(self, config: EngineConfig, providers: Providers | None = None):
        self.config = config
        self.providers = providers or build_providers(config)
        self.registry = KbRegistry(config.data_dir)
        self.prompts = PromptLibrary(config.prompts_dir)
        self.traces = TraceStore(config.data_dir)
        self._kb_cache: dict[str, KnowledgeBase] = {}
        self._build_lock = threading.Lock()
        self._building: set[str] = set()

    # -- KB access ---------------------------------------------------------

    def _open_kb(self, kb_id: str) -> KnowledgeBase:
        if kb_id not in self._kb_cache:
            self._kb_cache[kb_id] = self.registry.open(kb_id)
        return self._kb_cache[kb_id]

    def kb_for_region(self, region: str, kind: str) -> KnowledgeBase:
        meta = self.registry.find(region, kind)
        if meta is None:
            raise UnknownRegion(f"no {kind} knowledge base registered for region {region!r}")
        return self._open_kb(meta["kb_id"])

    def factual_kb(self, region: str) -> KnowledgeBase:
        return self.kb_for_region(region, "factual")

    def terminology_kb(self, region: str) -> KnowledgeBase:
        return self.kb_for_region(region, "terminology")

    # -- ingestion ---------------------------------------------------------

    def acquire_build(self, kb_id: str) -> bool:
        with self._build_lock:
            if kb_id in self._building:
                return False
            self._building.add(kb_id)
            return True

    def release_build(self, kb_id: str) -> None:
        with self._build_lock:
            self._building.discard(kb_id)

    def ingest_factual(
        self,
        docs: list[SourceDocument],
        kb_id: str,
        region: str,
        language: str = "en",
        force: bool = False,
        progress=None,
        acquire: bool = True,
    ) -> KnowledgeBase:
        # acquire=False lets callers (the HTTP service) take the build lock
        # at request time so concurrent submissions get a synchronous 409.
        if acquire and not self.acquire_build(kb_id):
            raise DuplicateKb(f"kb {kb_id} is already building")
        try:
            cfg = KbBuildConfig(
                kb_id=kb_id,
                region=region,
                language=language,
                chunk_budget=self.config.chunk_budget,
                term_floor=self.config.term_floor,
                raptor=self.config.raptor,
            )
            kb = build_factual_kb(
                docs, cfg, self.providers.embedder, self.providers.chat("summarizer"),
                self.registry, force=force, progress=progress,
            )
            self._kb_cache[kb_id] = kb
            return kb
        finally:
            self.release_build(kb_id)

    def ingest_terminology(
        self,
        files: list[str | Path],
        kb_id: str,
        region: str,
        language: str = "en",
        force: bool = False,
        acquire: bool = True,
    ) -> tuple[KnowledgeBase, list[str]]:
        if acquire and not self.acquire_build(kb_id):
            raise DuplicateKb(f"kb {kb_id} is already building")
        try:
            entries = load_term_entries(files)
            cfg = KbBuildConfig(
                kb_id=kb_id,
                region=region,
                language=language,
                chunk_budget=self.config.chunk_budget,
                term_floor=self.config.term_floor,
            )
            kb, warnings = build_terminology_kb(
                entries, cfg, self.providers.embedder, self.registry, force=force
            )
            self._kb_cache[kb_id] = kb
            return kb, warnings
        finally:
            self.release_build(kb_id)

    def rebuild_raptor(self, kb_id: str, progress=None) -> KnowledgeBase:
        """Full rebuild of a factual KB from its stored documents is not
        tracked; rebuild re-runs the tree over the stored leaf chunks."""
        kb = self._open_kb(kb_id)
        if kb.kind != "factual":
            raise UnknownRegion(f"kb {kb_id} is not factual")
        from .index import IndexEntry, VectorIndex
        from .kb import _base_meta, _write_kb_files, KbBuildConfig
        from .raptor import build_tree

        leaves = [c for c in kb.chunks.values() if c.level == 0]
        leaves.sort(key=lambda c: c.chunk_id)
        index = VectorIndex(kb_id=kb_id)
        vectors = self.providers.embedder.embed_batch([c.text for c in leaves])
        index.upsert(
            [IndexEntry(chunk_id=c.chunk_id, vector=v, level=0, kb_id=kb_id)
             for c, v in zip(leaves, vectors) if not v.degenerate]
        )
        tree, summaries = build_tree(
            leaves, self.providers.embedder, self.providers.chat("summarizer"),
            index, self.config.raptor, kb_id,
        )
        cfg = KbBuildConfig(kb_id=kb_id, region=kb.region, language=kb.language,
                            chunk_budget=self.config.chunk_budget, raptor=self.config.raptor)
        staging = self.registry.stage_dir()
        meta = dict(kb.meta)
        meta.update({"summary_chunks": len(summaries), "levels": len(tree.levels),
                     "raptor": self.config.raptor.to_dict()})
        _write_kb_files(staging, meta, index, leaves + summaries, tree=tree)
        self.registry.commit(kb_id, staging, force=True)
        self._kb_cache.pop(kb_id, None)
        return self._open_kb(kb_id)

    # -- querying ----------------------------------------------------------

    def answer_query(self, question: str, region: str, mode: str, k: int | None = None) -> QueryTrace:
        term_kb = factual_kb = None
        if mode in ("gridcodex", "vanilla_rag"):
            factual_kb = self.factual_kb(region)
        if mode == "gridcodex":
            term_kb = self.terminology_kb(region)
        trace = run_query(
            question,
            mode,
            self.config,
            self.prompts,
            self.providers.embedder,
            self.providers.chats,
            term_kb,
            factual_kb,
            region=region,
            k=k,
        )
        self.traces.save(trace)
        return trace
