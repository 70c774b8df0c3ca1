"""Parsing of regulatory markdown into clause trees and clause-safe chunks.

Regulations are deeply nested (clauses, sub-clauses, sub-sub-clauses); the
parser keeps the written hierarchy authoritative and the chunker never cuts
a clause: sibling clauses are merged greedily up to the token budget, and a
clause that alone exceeds the budget is split only at paragraph boundaries,
falling back to sentence boundaries, never mid-sentence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import BudgetTooSmall, EmptyDocument, EncodingError
from .tokens import count_tokens

MIN_BUDGET = 32

_HEADING_RE = re.compile(r"^(#{1,6})\s+(.*\S)\s*$")
_LABEL_RE = re.compile(r"^(\d+(?:\.\d+)*)\.?\s+(.*\S)\s*$")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?;:])\s+")


@dataclass
class SourceDocument:
    doc_id: str
    region: str
    language: str
    title: str
    body: str
    kind: str = "regulation"  # regulation | terminology

    def validate(self) -> None:
        if not self.doc_id:
            raise EmptyDocument("doc_id must be non-empty")
        if not self.region or not self.language:
            raise EncodingError(f"document {self.doc_id} missing region/language")
        if not isinstance(self.body, str):
            raise EncodingError(f"document {self.doc_id} body is not text")


@dataclass
class ClauseNode:
    node_id: str
    label: str
    heading: str
    depth: int
    body_text: str = ""
    children: list["ClauseNode"] = field(default_factory=list)

    def walk(self):
        """Yield nodes in document order (self first)."""
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class ClauseTree:
    doc_id: str
    root: ClauseNode

    def nodes(self) -> list[ClauseNode]:
        return list(self.root.walk())

    def max_depth(self) -> int:
        return max(n.depth for n in self.root.walk())


@dataclass
class Chunk:
    chunk_id: str
    kb_id: str
    doc_id: str
    clause_path: list[tuple[str, str]]  # (label, heading) root -> owning node
    text: str
    token_count: int
    level: int = 0
    child_chunk_ids: list[str] = field(default_factory=list)
    # All leaf clause label-paths this chunk covers (merged chunks cover
    # several); used for recall matching and round-trip checks.
    covered_paths: list[list[str]] = field(default_factory=list)
    covered_node_ids: list[str] = field(default_factory=list)
    fragment_index: int | None = None

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "kb_id": self.kb_id,
            "doc_id": self.doc_id,
            "clause_path": [list(p) for p in self.clause_path],
            "text": self.text,
            "token_count": self.token_count,
            "level": self.level,
            "child_chunk_ids": list(self.child_chunk_ids),
            "covered_paths": [list(p) for p in self.covered_paths],
            "covered_node_ids": list(self.covered_node_ids),
            "fragment_index": self.fragment_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Chunk":
        return cls(
            chunk_id=d["chunk_id"],
            kb_id=d["kb_id"],
            doc_id=d["doc_id"],
            clause_path=[tuple(p) for p in d["clause_path"]],
            text=d["text"],
            token_count=d["token_count"],
            level=d.get("level", 0),
            child_chunk_ids=list(d.get("child_chunk_ids", [])),
            covered_paths=[list(p) for p in d.get("covered_paths", [])],
            covered_node_ids=list(d.get("covered_node_ids", [])),
            fragment_index=d.get("fragment_index"),
        )


def _normalize_body(lines: list[str]) -> str:
    """Collapse raw lines into paragraphs separated by exactly one blank line."""
    paragraphs: list[str] = []
    current: list[str] = []
    for line in lines:
        if line.strip():
            current.append(line.rstrip())
        elif current:
            paragraphs.append("\n".join(current))
            current = []
    if current:
        paragraphs.append("\n".join(current))
    return "\n\n".join(paragraphs)


def parse_document(doc: SourceDocument) -> ClauseTree:
    """Parse markdown into a clause tree rooted at the document title.

    Heading depth is kept exactly as written (a jump from # to ### yields
    depth 3 under a depth-1 parent) because regulatory numbering is
    authoritative; no synthetic intermediate nodes are inserted.
    """
    doc.validate()
    if not doc.body.strip():
        raise EmptyDocument(f"document {doc.doc_id} has no content")

    counter = 0

    def new_node(label: str, heading: str, depth: int) -> ClauseNode:
        nonlocal counter
        node = ClauseNode(
            node_id=f"{doc.doc_id}:n{counter:04d}",
            label=label,
            heading=heading,
            depth=depth,
        )
        counter += 1
        return node

    root = new_node("", doc.title, 0)
    stack = [root]  # strictly increasing depths
    pending: list[str] = []
    ordinals: dict[str, int] = {}

    def flush(node: ClauseNode) -> None:
        nonlocal pending
        if pending:
            node.body_text = _normalize_body(pending)
            pending = []

    for line in doc.body.splitlines():
        m = _HEADING_RE.match(line)
        if not m:
            pending.append(line)
            continue
        flush(stack[-1])
        depth = len(m.group(1))
        title = m.group(2)
        lm = _LABEL_RE.match(title)
        while stack[-1].depth >= depth:
            stack.pop()
        parent = stack[-1]
        if lm:
            label, heading = lm.group(1), lm.group(2)
        else:
            ordinals[parent.node_id] = ordinals.get(parent.node_id, 0) + 1
            label, heading = f"s{ordinals[parent.node_id]}", title
        node = new_node(label, heading, depth)
        parent.children.append(node)
        stack.append(node)
    flush(stack[-1])

    return ClauseTree(doc_id=doc.doc_id, root=root)


def _node_paths(tree: ClauseTree) -> dict[str, list[tuple[str, str]]]:
    paths: dict[str, list[tuple[str, str]]] = {}

    def visit(node: ClauseNode, prefix: list[tuple[str, str]]) -> None:
        path = prefix + [(node.label, node.heading)] if node.depth > 0 else []
        paths[node.node_id] = path
        for child in node.children:
            visit(child, path)

    visit(tree.root, [])
    return paths


def _split_exact(text: str, boundaries: list[int]) -> list[str]:
    """Slice text at boundary offsets; concatenation reproduces text."""
    cuts = [0] + boundaries + [len(text)]
    return [text[a:b] for a, b in zip(cuts, cuts[1:]) if a < b]


def _pack_pieces(pieces: list[str], budget: int) -> list[list[str]]:
    """Greedily pack consecutive pieces into groups within the budget."""
    groups: list[list[str]] = []
    current: list[str] = []
    current_tokens = 0
    for piece in pieces:
        t = count_tokens(piece)
        if current and current_tokens + t > budget:
            groups.append(current)
            current, current_tokens = [], 0
        current.append(piece)
        current_tokens += t
    if current:
        groups.append(current)
    return groups


def _split_oversized(body: str, budget: int, clause_path) -> list[str]:
    """Split a clause body into fragments within budget.

    Fragments are exact substrings of the body (separators stay attached to
    the preceding fragment) so that "".join(fragments) == body. Splits occur
    only at paragraph boundaries, then sentence boundaries inside a single
    oversized paragraph.
    """
    # Paragraph boundaries: offsets at the start of each paragraph.
    para_starts = [m.end() for m in re.finditer(r"\n\n", body)]
    paragraphs = _split_exact(body, para_starts)

    pieces: list[str] = []
    for para in paragraphs:
        if count_tokens(para) <= budget:
            pieces.append(para)
            continue
        sent_starts = [m.end() for m in _SENTENCE_SPLIT_RE.finditer(para)]
        sentences = _split_exact(para, sent_starts)
        for sent in sentences:
            t = count_tokens(sent)
            if t > budget:
                raise BudgetTooSmall(clause_path, t, budget)
            pieces.append(sent)

    return ["".join(group) for group in _pack_pieces(pieces, budget)]


def chunk_tree(tree: ClauseTree, budget: int, kb_id: str = "") -> list[Chunk]:
    """Produce level-0 chunks from a clause tree.

    Every node with non-empty body text is an atomic unit. Consecutive
    sibling units are merged while the merged text stays within budget; an
    oversized unit is split at paragraph (then sentence) boundaries with a
    fragment ordinal appended to its clause path.
    """
    if budget < MIN_BUDGET:
        raise BudgetTooSmall([], budget, MIN_BUDGET)

    paths = _node_paths(tree)
    # Units in document order; root body (preamble) is a unit too.
    units = [n for n in tree.root.walk() if n.body_text]

    parents: dict[str, str | None] = {}
    for node in tree.root.walk():
        for child in node.children:
            parents[child.node_id] = node.node_id
    parents[tree.root.node_id] = None

    chunks: list[Chunk] = []
    seq = 0

    def emit(nodes: list[ClauseNode], text: str, clause_path, frag: int | None = None) -> None:
        nonlocal seq
        chunks.append(
            Chunk(
                chunk_id=f"{tree.doc_id}:c{seq:04d}",
                kb_id=kb_id,
                doc_id=tree.doc_id,
                clause_path=list(clause_path),
                text=text,
                token_count=count_tokens(text),
                level=0,
                covered_paths=[[label for label, _ in paths[n.node_id]] or [""] for n in nodes],
                covered_node_ids=[n.node_id for n in nodes],
                fragment_index=frag,
            )
        )
        seq += 1

    def flush_run(run: list[ClauseNode]) -> None:
        # Greedy merge over whole node bodies (joined with a blank line).
        i = 0
        while i < len(run):
            group = [run[i]]
            text = run[i].body_text
            j = i + 1
            while j < len(run):
                candidate = text + "\n\n" + run[j].body_text
                if count_tokens(candidate) > budget:
                    break
                text = candidate
                group.append(run[j])
                j += 1
            if len(group) == 1 and count_tokens(text) > budget:
                node = group[0]
                fragments = _split_oversized(text, budget, paths[node.node_id])
                for fi, frag_text in enumerate(fragments):
                    frag_path = paths[node.node_id] + [(f"#{fi + 1}", f"part {fi + 1}")]
                    emit([node], frag_text, frag_path, frag=fi)
            else:
                if len(group) == 1:
                    clause_path = paths[group[0].node_id]
                else:
                    parent_path = paths[group[0].node_id][:-1]
                    first = group[0].label
                    last = group[-1].label
                    clause_path = parent_path + [(f"{first}..{last}", "merged clauses")]
                emit(group, text, clause_path)
            i = j if j > i + 1 else i + 1

    run: list[ClauseNode] = []
    for unit in units:
        if run and parents[unit.node_id] == parents[run[-1].node_id]:
            run.append(unit)
        else:
            if run:
                flush_run(run)
            run = [unit]
    if run:
        flush_run(run)

    return chunks


def canonical_document_text(tree: ClauseTree) -> str:
    """All clause bodies in document order, blank-line separated."""
    return "\n\n".join(n.body_text for n in tree.root.walk() if n.body_text)


def reconstruct_document_text(chunks: list[Chunk]) -> str:
    """Rebuild the canonical document text from level-0 chunks.

    Fragments of one clause are exact substrings and concatenate directly;
    all other chunk boundaries correspond to blank-line joints. Used by
    round-trip tests: the result must equal canonical_document_text(tree).
    """
    pieces: list[str] = []
    for chunk in chunks:
        if chunk.level != 0:
            continue
        continuation = chunk.fragment_index is not None and chunk.fragment_index > 0
        if pieces and not continuation:
            pieces.append("\n\n")
        pieces.append(chunk.text)
    return "".join(pieces)
