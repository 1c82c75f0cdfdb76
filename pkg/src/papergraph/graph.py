"""Hierarchical + sequential document graph construction.

Nodes are the document root, headings, sub-headings, passages, and
sentences. Hierarchical edges form a tree (root -> heading -> sub-heading
-> passage -> sentence); sequential edges chain consecutive passages under
one parent and consecutive sentences within one passage. The graph is
undirected; every edge is stored once with src < dst.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .docmodel import Passage, Section, SegmentedDocument

__all__ = [
    "NodeKind",
    "EdgeKind",
    "Node",
    "Edge",
    "DocGraph",
    "GraphStats",
    "build_graph",
    "graph_stats",
    "validate_graph",
    "dump_graph",
]


class NodeKind(Enum):
    PAPER = "paper"
    HEADING = "heading"
    SUB_HEADING = "sub_heading"
    PASSAGE = "passage"
    SENTENCE = "sentence"


class EdgeKind(Enum):
    HIER = "hier"
    SEQ = "seq"


@dataclass(frozen=True)
class Node:
    node_id: int
    kind: NodeKind
    # doc_id for the root, heading text for (sub-)headings, and the
    # segmentation-assigned integer id for passages and sentences.
    ref: str | int


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: EdgeKind


@dataclass(frozen=True)
class DocGraph:
    doc_id: str
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]

    def kind_counts(self) -> dict[NodeKind, int]:
        counts = {kind: 0 for kind in NodeKind}
        for node in self.nodes:
            counts[node.kind] += 1
        return counts

    def nodes_of_kind(self, kind: NodeKind) -> list[Node]:
        return [n for n in self.nodes if n.kind is kind]

    def adjacency(self) -> list[list[int]]:
        """Symmetric neighbor lists (no self-loops), sorted per node."""
        neighbors: list[list[int]] = [[] for _ in self.nodes]
        for e in self.edges:
            neighbors[e.src].append(e.dst)
            neighbors[e.dst].append(e.src)
        for lst in neighbors:
            lst.sort()
        return neighbors

    def hier_parents(self) -> list[int]:
        """Parent node id per node under the hierarchical tree; root is -1."""
        parents = [-1] * len(self.nodes)
        for e in self.edges:
            if e.kind is EdgeKind.HIER:
                parents[e.dst] = e.src  # construction guarantees src < dst
        return parents


@dataclass(frozen=True)
class GraphStats:
    doc_id: str
    counts: dict[NodeKind, int]
    n_hier: int
    n_seq: int
    max_depth: int


def build_graph(
    seg: SegmentedDocument,
    sections: tuple[Section, ...],
    chain_across_sections: bool = False,
) -> DocGraph:
    """Construct the document graph from a segmentation and its section tree.

    Node ids are assigned in depth-first document order starting at the
    root (id 0), so identical inputs always produce identical node/edge
    lists. `chain_across_sections` additionally links the last passage of
    each parent group to the first passage of the next group; this is an
    extension not covered by the core edge rules and defaults to off.
    """
    passages_by_path: dict[tuple[str, ...], list[Passage]] = {}
    for passage in seg.passages:
        passages_by_path.setdefault(passage.section_path, []).append(passage)

    nodes: list[Node] = [Node(0, NodeKind.PAPER, seg.doc_id)]
    hier: list[Edge] = []
    seq: list[Edge] = []
    group_first_last: list[tuple[int, int]] = []  # passage-node spans per parent group

    def new_node(kind: NodeKind, ref: str | int) -> int:
        node_id = len(nodes)
        nodes.append(Node(node_id, kind, ref))
        return node_id

    def attach_passages(path: tuple[str, ...], parent_node: int) -> None:
        group = passages_by_path.pop(path, [])
        if not group:
            return
        passage_nodes: list[int] = []
        for passage in group:
            p_node = new_node(NodeKind.PASSAGE, passage.passage_id)
            hier.append(Edge(parent_node, p_node, EdgeKind.HIER))
            passage_nodes.append(p_node)
            sentence_nodes = []
            for sentence in passage.sentences:
                s_node = new_node(NodeKind.SENTENCE, sentence.sentence_id)
                hier.append(Edge(p_node, s_node, EdgeKind.HIER))
                sentence_nodes.append(s_node)
            for a, b in zip(sentence_nodes, sentence_nodes[1:]):
                seq.append(Edge(a, b, EdgeKind.SEQ))
        for a, b in zip(passage_nodes, passage_nodes[1:]):
            seq.append(Edge(a, b, EdgeKind.SEQ))
        group_first_last.append((passage_nodes[0], passage_nodes[-1]))

    for heading in sections:
        h_node = new_node(NodeKind.HEADING, heading.heading_text)
        hier.append(Edge(0, h_node, EdgeKind.HIER))
        attach_passages((heading.heading_text,), h_node)
        for sub in heading.children:
            s_node = new_node(NodeKind.SUB_HEADING, sub.heading_text)
            hier.append(Edge(h_node, s_node, EdgeKind.HIER))
            attach_passages((heading.heading_text, sub.heading_text), s_node)

    if passages_by_path:
        unknown = sorted(passages_by_path)
        raise ValueError(f"passages reference section paths absent from the tree: {unknown}")

    if chain_across_sections:
        for (_, last), (first, _) in zip(group_first_last, group_first_last[1:]):
            seq.append(Edge(last, first, EdgeKind.SEQ))

    return DocGraph(seg.doc_id, tuple(nodes), tuple(hier) + tuple(seq))


def graph_stats(g: DocGraph) -> GraphStats:
    counts = g.kind_counts()
    n_hier = sum(1 for e in g.edges if e.kind is EdgeKind.HIER)
    n_seq = len(g.edges) - n_hier

    parents = g.hier_parents()
    depth = [0] * len(g.nodes)
    max_depth = 0
    # node ids are topologically ordered (parent < child), so one pass works
    for node in g.nodes:
        if parents[node.node_id] >= 0:
            depth[node.node_id] = depth[parents[node.node_id]] + 1
            max_depth = max(max_depth, depth[node.node_id])
    return GraphStats(g.doc_id, counts, n_hier, n_seq, max_depth)


def validate_graph(g: DocGraph, allow_cross_group_seq: bool = False) -> list[str]:
    """Check every structural invariant; returns one message per breach.

    `allow_cross_group_seq` suppresses the shared-parent requirement on
    sequential edges, for graphs built with chain_across_sections.
    """
    violations: list[str] = []
    n = len(g.nodes)
    counts = g.kind_counts()
    if counts[NodeKind.PAPER] != 1:
        violations.append(f"expected exactly one root node, found {counts[NodeKind.PAPER]}")
    if any(node.node_id != i for i, node in enumerate(g.nodes)):
        violations.append("node ids are not 0..|V|-1 in order")
    for e in g.edges:
        if not (0 <= e.src < e.dst < n):
            violations.append(f"edge ({e.src},{e.dst}) not stored with src < dst in range")

    hier = [e for e in g.edges if e.kind is EdgeKind.HIER]
    if len(hier) != n - 1:
        violations.append(f"|E_hier| = {len(hier)}, expected |V| - 1 = {n - 1}")
    parent_count = [0] * n
    for e in hier:
        parent_count[e.dst] += 1
    for node in g.nodes[1:]:
        if parent_count[node.node_id] != 1:
            violations.append(f"node {node.node_id} has {parent_count[node.node_id]} hier parents")

    # connectivity over the hier tree alone
    seen = {0}
    for e in sorted(hier, key=lambda e: e.dst):
        if e.src in seen:
            seen.add(e.dst)
    if len(seen) != n:
        violations.append("hier edges do not connect all nodes to the root")

    parents = g.hier_parents()
    for e in g.edges:
        if e.kind is EdgeKind.SEQ:
            kinds = (g.nodes[e.src].kind, g.nodes[e.dst].kind)
            if kinds not in ((NodeKind.PASSAGE, NodeKind.PASSAGE), (NodeKind.SENTENCE, NodeKind.SENTENCE)):
                violations.append(f"seq edge ({e.src},{e.dst}) joins {kinds[0].value} and {kinds[1].value}")
            elif not allow_cross_group_seq and parents[e.src] != parents[e.dst]:
                violations.append(f"seq edge ({e.src},{e.dst}) crosses hier parents")

    stats = graph_stats(g)
    if stats.max_depth > 4:
        violations.append(f"hierarchical depth {stats.max_depth} exceeds 4")
    return violations


def dump_graph(g: DocGraph, path: str | Path) -> None:
    """Write the node and edge lists as stable, line-oriented text."""
    lines = [f"graph\t{g.doc_id}"]
    for node in g.nodes:
        lines.append(f"node\t{node.node_id}\t{node.kind.value}\t{node.ref}")
    for e in sorted(g.edges, key=lambda e: (e.kind.value, e.src, e.dst)):
        lines.append(f"edge\t{e.src}\t{e.dst}\t{e.kind.value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
