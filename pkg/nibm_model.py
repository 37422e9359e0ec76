"""
NIBM（表記非依存ビジネスメタモデル）コア

プロセスグラフ（ノード・遷移・実行者）をメモリ上で表現し、
整合性検証・正規化・同型判定を提供する。トランスパイラの中間表現。

モデルは生成後に変更しない（frozen dataclass）。すべての操作は純粋関数。
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Any

import networkx as nx
from networkx.algorithms import isomorphism

from document_codec import (
    check_endpoint,
    check_unique,
    dump_document,
    load_document,
    optional_text,
    parse_enum,
    require_list,
    require_object,
    require_text,
)
from exceptions import StructuralError
from validation_report import ReportBuilder, ValidationReport

NOTATION = "nibm"
ELSE_GUARD = "else"


class NodeKind(str, Enum):
    """NIBMノード種別"""
    TASK = "Task"
    DECISION = "Decision"
    FORK = "Fork"
    MERGE = "Merge"
    JOIN = "Join"
    START = "Start"
    STOP = "Stop"


class TransitionKind(str, Enum):
    """NIBM遷移種別（Pass / Incoming / Outgoing）"""
    PASS = "Pass"
    INCOMING = "Incoming"
    OUTGOING = "Outgoing"


class PerformerKind(str, Enum):
    """実行者が指す実体の種別"""
    RESOURCE = "Resource"
    ORGANIZATIONAL_UNIT = "OrganizationalUnit"
    ROLE = "Role"
    QUALIFICATION = "Qualification"


UNIFICATION_KINDS = frozenset({NodeKind.MERGE, NodeKind.JOIN})
SPLIT_KINDS = frozenset({NodeKind.DECISION, NodeKind.FORK})
CONTROL_KINDS = UNIFICATION_KINDS | SPLIT_KINDS

# 正規化時の並び順
_KIND_RANK = {kind: rank for rank, kind in enumerate(NodeKind)}

# ルールID
RULE_TASK_LABEL = "task-label"
RULE_PERFORMER_PLACEMENT = "performer-placement"
RULE_GUARD_PLACEMENT = "guard-placement"
RULE_ELSE_GUARD = "else-guard"
RULE_INCOMING_ENDPOINTS = "incoming-endpoints"
RULE_OUTGOING_ENDPOINTS = "outgoing-endpoints"
RULE_PASS_ENDPOINTS = "pass-endpoints"
RULE_START_COUNT = "start-count"
RULE_STOP_COUNT = "stop-count"
RULE_START_DEGREE = "start-degree"
RULE_STOP_DEGREE = "stop-degree"
RULE_TASK_FAN_IN = "task-fan-in"
RULE_TASK_FAN_OUT = "task-fan-out"
RULE_TASK_DANGLING = "task-dangling"
RULE_UNIFICATION_INFLOWS = "unification-inflows"
RULE_UNIFICATION_OUTFLOW = "unification-outflow"
RULE_SPLIT_INFLOW = "split-inflow"
RULE_SPLIT_OUTFLOWS = "split-outflows"
RULE_UNREACHABLE = "unreachable"
RULE_NO_STOP_PATH = "no-stop-path"


@dataclass(frozen=True)
class Performer:
    """実行者（Resource / OrganizationalUnit / Role / Qualification のいずれか1つを指す参照）"""
    id: str
    kind: PerformerKind
    name: str


@dataclass(frozen=True)
class EnterpriseContext:
    """Enterprise / Input / Output のコンテキスト"""
    enterprise: str | None = None
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()


@dataclass(frozen=True)
class NibmNode:
    """NIBMノード（performer は Task のみ）"""
    id: str
    kind: NodeKind
    label: str | None = None
    performer: str | None = None


@dataclass(frozen=True)
class NibmTransition:
    """NIBM遷移（guard は Decision から出る遷移のみ）"""
    id: str
    kind: TransitionKind
    source: str
    target: str
    guard: str | None = None


@dataclass(frozen=True)
class NibmProcess:
    """表記非依存のプロセスグラフ"""
    id: str
    name: str
    nodes: tuple[NibmNode, ...] = ()
    transitions: tuple[NibmTransition, ...] = ()
    performers: tuple[Performer, ...] = ()
    context: EnterpriseContext | None = None

    @cached_property
    def _node_index(self) -> dict[str, NibmNode]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def _flow_index(self) -> tuple[dict[str, list[NibmTransition]], dict[str, list[NibmTransition]]]:
        inflows: dict[str, list[NibmTransition]] = defaultdict(list)
        outflows: dict[str, list[NibmTransition]] = defaultdict(list)
        for t in self.transitions:
            outflows[t.source].append(t)
            inflows[t.target].append(t)
        return inflows, outflows

    def node(self, node_id: str) -> NibmNode:
        return self._node_index[node_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._node_index

    def inflows(self, node_id: str) -> list[NibmTransition]:
        return self._flow_index[0].get(node_id, [])

    def outflows(self, node_id: str) -> list[NibmTransition]:
        return self._flow_index[1].get(node_id, [])

    def nodes_of(self, *kinds: NodeKind) -> list[NibmNode]:
        return [n for n in self.nodes if n.kind in kinds]

    def element_ids(self) -> list[str]:
        """ノード・遷移・実行者のID一覧"""
        return (
            [n.id for n in self.nodes]
            + [t.id for t in self.transitions]
            + [p.id for p in self.performers]
        )


def classify_transition(source_kind: NodeKind, target_kind: NodeKind) -> TransitionKind:
    """
    端点の種別から遷移種別を導出する

    Merge/Join → Task は Incoming、Task → Decision/Fork は Outgoing、それ以外は Pass。
    """
    if source_kind in UNIFICATION_KINDS and target_kind == NodeKind.TASK:
        return TransitionKind.INCOMING
    if source_kind == NodeKind.TASK and target_kind in SPLIT_KINDS:
        return TransitionKind.OUTGOING
    return TransitionKind.PASS


def check_structure(model: NibmProcess) -> None:
    """
    構造チェック（ID重複・参照切れ）。検証の前提条件。

    Raises:
        StructuralError: IDが解決できない場合
    """
    check_unique([(n.id, f"nodes[{i}]") for i, n in enumerate(model.nodes)])
    check_unique([(t.id, f"transitions[{i}]") for i, t in enumerate(model.transitions)])
    check_unique([(p.id, f"performers[{i}]") for i, p in enumerate(model.performers)])

    node_ids = {n.id for n in model.nodes}
    performer_ids = {p.id for p in model.performers}
    for i, t in enumerate(model.transitions):
        check_endpoint(node_ids, t.source, "source", f"transitions[{i}]")
        check_endpoint(node_ids, t.target, "target", f"transitions[{i}]")
    for i, n in enumerate(model.nodes):
        if n.performer is not None:
            check_endpoint(performer_ids, n.performer, "performer", f"nodes[{i}]")


def validate_nibm(model: NibmProcess) -> ValidationReport:
    """
    NIBMモデルの整合性を検証する

    Args:
        model: 検証対象

    Returns:
        違反レポート（空なら妥当）

    Raises:
        StructuralError: IDが解決できない場合（検証前の構造エラー）
    """
    check_structure(model)
    report = ReportBuilder()

    for node in model.nodes:
        if node.kind == NodeKind.TASK and not node.label:
            report.add(node.id, RULE_TASK_LABEL, "task requires a non-empty label")
        if node.performer is not None and node.kind != NodeKind.TASK:
            report.add(node.id, RULE_PERFORMER_PLACEMENT, f"performer on {node.kind.value} (tasks only)")

    for t in model.transitions:
        source = model.node(t.source)
        target = model.node(t.target)
        if t.guard is not None and source.kind != NodeKind.DECISION:
            report.add(t.id, RULE_GUARD_PLACEMENT, "guard only on transitions leaving a decision")
        if t.kind == TransitionKind.INCOMING:
            if source.kind not in UNIFICATION_KINDS or target.kind != NodeKind.TASK:
                report.add(t.id, RULE_INCOMING_ENDPOINTS, "incoming must lead from merge/join to a task")
        elif t.kind == TransitionKind.OUTGOING:
            if source.kind != NodeKind.TASK or target.kind not in SPLIT_KINDS:
                report.add(t.id, RULE_OUTGOING_ENDPOINTS, "outgoing must lead from a task to decision/fork")
        else:
            derived = classify_transition(source.kind, target.kind)
            if derived != TransitionKind.PASS:
                report.add(t.id, RULE_PASS_ENDPOINTS, f"pass between {source.kind.value} and {target.kind.value} must be {derived.value}")

    starts = model.nodes_of(NodeKind.START)
    stops = model.nodes_of(NodeKind.STOP)
    if len(starts) != 1:
        report.add(model.id, RULE_START_COUNT, f"exactly one start required, found {len(starts)}")
    if not stops:
        report.add(model.id, RULE_STOP_COUNT, "at least one stop required")

    for node in model.nodes:
        _check_degree(model, node, report)

    if len(starts) == 1:
        reachable = _reachable(model, [starts[0].id], forward=True)
        for node in model.nodes:
            if node.id not in reachable:
                report.add(node.id, RULE_UNREACHABLE, "unreachable from start")
    if stops:
        reaching = _reachable(model, [s.id for s in stops], forward=False)
        for node in model.nodes:
            if node.id not in reaching:
                report.add(node.id, RULE_NO_STOP_PATH, "cannot reach any stop")

    return report.build()


def _check_degree(model: NibmProcess, node: NibmNode, report: ReportBuilder) -> None:
    inflows = model.inflows(node.id)
    outflows = model.outflows(node.id)
    n_in, n_out = len(inflows), len(outflows)
    kind = node.kind

    if kind == NodeKind.TASK:
        if n_in > 1:
            report.add(node.id, RULE_TASK_FAN_IN, "task fan-in without unification node")
        if n_out > 1:
            report.add(node.id, RULE_TASK_FAN_OUT, "task fan-out without split node")
        if n_in == 0 or n_out == 0:
            report.add(node.id, RULE_TASK_DANGLING, "task requires exactly one inflow and one outflow")
    elif kind in UNIFICATION_KINDS:
        if n_in < 2:
            report.add(node.id, RULE_UNIFICATION_INFLOWS, f"{kind.value.lower()} requires ≥2 inflows")
        if n_out != 1:
            report.add(node.id, RULE_UNIFICATION_OUTFLOW, f"{kind.value.lower()} requires exactly 1 outflow")
    elif kind in SPLIT_KINDS:
        if n_in != 1:
            report.add(node.id, RULE_SPLIT_INFLOW, f"{kind.value.lower()} requires exactly 1 inflow")
        if n_out < 2:
            report.add(node.id, RULE_SPLIT_OUTFLOWS, f"{kind.value.lower()} requires ≥2 outflows")
        if kind == NodeKind.DECISION:
            elses = [t for t in outflows if t.guard == ELSE_GUARD]
            if len(elses) > 1:
                report.add(node.id, RULE_ELSE_GUARD, "at most one else outflow per decision")
    elif kind == NodeKind.START:
        if n_in != 0 or n_out != 1:
            report.add(node.id, RULE_START_DEGREE, "start requires 0 inflows and exactly 1 outflow")
    elif kind == NodeKind.STOP:
        if n_in < 1 or n_out != 0:
            report.add(node.id, RULE_STOP_DEGREE, "stop requires ≥1 inflow and 0 outflows")


def _reachable(model: NibmProcess, roots: list[str], forward: bool) -> set[str]:
    seen = set(roots)
    queue = deque(roots)
    while queue:
        current = queue.popleft()
        flows = model.outflows(current) if forward else model.inflows(current)
        for t in flows:
            nxt = t.target if forward else t.source
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


# ---------------------------------------------------------------------------
# 正規化
# ---------------------------------------------------------------------------

def normalize(model: NibmProcess) -> NibmProcess:
    """
    決定的な正規形に変換する（冪等）

    ノードは Start からの幅優先順（同順位は種別・ラベル・構造ハッシュで決定）、
    遷移は (始点順位, 終点順位, 種別, ガード) 順に並べてIDを振り直す。
    新しいIDは種類ごとの接頭辞付き連番で、ノード n1, n2, ..、遷移 f1, f2, ..、
    実行者 p1, p2, .. となる（接頭辞なしの 1, 2, 3 ではない）。
    要素の削除は行わない。
    """
    normalized, _ = normalize_with_mapping(model)
    return normalized


def normalize_with_mapping(model: NibmProcess) -> tuple[NibmProcess, dict[str, str]]:
    """
    正規化し、旧ID → 新ID の対応も返す

    Returns:
        (正規化済みモデル, ID対応表)
    """
    check_structure(model)

    order = _canonical_node_order(model)
    node_ids = {node_id: f"n{i}" for i, node_id in enumerate(order, 1)}
    rank = {node_id: i for i, node_id in enumerate(order)}

    performer_order: list[str] = []
    for node_id in order:
        ref = model.node(node_id).performer
        if ref is not None and ref not in performer_order:
            performer_order.append(ref)
    unused = [p for p in model.performers if p.id not in performer_order]
    position = {p.id: i for i, p in enumerate(model.performers)}
    unused.sort(key=lambda p: (p.kind.value, p.name, position[p.id]))
    performer_order.extend(p.id for p in unused)
    performer_ids = {pid: f"p{i}" for i, pid in enumerate(performer_order, 1)}
    performer_index = {p.id: p for p in model.performers}

    def transition_key(item: tuple[int, NibmTransition]) -> tuple[int, int, str, str, int]:
        index, t = item
        return (rank[t.source], rank[t.target], t.kind.value, t.guard or "", index)

    ordered_transitions = [t for _, t in sorted(enumerate(model.transitions), key=transition_key)]
    transition_ids = {t.id: f"f{i}" for i, t in enumerate(ordered_transitions, 1)}

    nodes = tuple(
        replace(
            model.node(node_id),
            id=node_ids[node_id],
            performer=performer_ids.get(model.node(node_id).performer or "")
        )
        for node_id in order
    )
    transitions = tuple(
        replace(t, id=transition_ids[t.id], source=node_ids[t.source], target=node_ids[t.target])
        for t in ordered_transitions
    )
    performers = tuple(replace(performer_index[pid], id=performer_ids[pid]) for pid in performer_order)

    mapping = {**node_ids, **transition_ids, **performer_ids}
    return replace(model, nodes=nodes, transitions=transitions, performers=performers), mapping


def _canonical_node_order(model: NibmProcess) -> list[str]:
    colors = _refinement_colors(model)
    position = {n.id: i for i, n in enumerate(model.nodes)}

    def key(node: NibmNode) -> tuple[int, str, str, int]:
        return (_KIND_RANK[node.kind], node.label or "", colors[node.id], position[node.id])

    seen: set[str] = set()
    order: list[str] = []
    queue: deque[str] = deque()
    for start in sorted(model.nodes_of(NodeKind.START), key=key):
        seen.add(start.id)
        order.append(start.id)
        queue.append(start.id)

    while queue:
        current = queue.popleft()
        successors = {t.target for t in model.outflows(current)}
        for nxt in sorted((model.node(s) for s in successors), key=key):
            if nxt.id not in seen:
                seen.add(nxt.id)
                order.append(nxt.id)
                queue.append(nxt.id)

    rest = sorted((n for n in model.nodes if n.id not in seen), key=key)
    order.extend(n.id for n in rest)
    return order


def _refinement_colors(model: NibmProcess) -> dict[str, str]:
    """前方・後方の Weisfeiler-Lehman ハッシュでノードを構造的に区別する"""
    graph = nx.DiGraph()
    for node in model.nodes:
        graph.add_node(node.id, sig=_ascii_sig(node.kind.value, node.label or ""))
    parallel: dict[tuple[str, str], list[str]] = defaultdict(list)
    for t in model.transitions:
        parallel[(t.source, t.target)].append(_ascii_sig(t.kind.value, t.guard or ""))
    for (source, target), sigs in parallel.items():
        graph.add_edge(source, target, sig=_ascii_sig(*sorted(sigs)))

    iterations = max(1, len(model.nodes))
    forward = nx.weisfeiler_lehman_subgraph_hashes(
        graph, edge_attr="sig", node_attr="sig", iterations=iterations
    )
    backward = nx.weisfeiler_lehman_subgraph_hashes(
        graph.reverse(copy=True), edge_attr="sig", node_attr="sig", iterations=iterations
    )
    return {
        node_id: (forward[node_id][-1] if forward.get(node_id) else "")
        + (backward[node_id][-1] if backward.get(node_id) else "")
        for node_id in graph.nodes
    }


def _ascii_sig(*parts: str) -> str:
    # networkx はラベルを ASCII でエンコードしてハッシュするため非ASCII文字はエスケープする
    return json.dumps(list(parts), ensure_ascii=True)


# ---------------------------------------------------------------------------
# 同型判定
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsomorphismResult:
    """同型判定の結果（対応表 or 最初の不一致）"""
    isomorphic: bool
    mapping: dict[str, str] | None = None
    mismatch: str | None = None

    def __bool__(self) -> bool:
        return self.isomorphic


def isomorphic(a: NibmProcess, b: NibmProcess) -> IsomorphismResult:
    """
    ラベル・種別・構造を保存する全単射が存在するかを判定する

    VF2（networkx）のバックトラック探索を使う。分岐の順序は同一性に含めない。

    Args:
        a: モデルA
        b: モデルB

    Returns:
        IsomorphismResult（mapping は a のノードID → b のノードID）
    """
    if len(a.nodes) != len(b.nodes):
        return IsomorphismResult(False, mismatch=f"node count differs: {len(a.nodes)} != {len(b.nodes)}")
    if len(a.transitions) != len(b.transitions):
        return IsomorphismResult(
            False, mismatch=f"transition count differs: {len(a.transitions)} != {len(b.transitions)}"
        )

    nodes_a = Counter((n.kind.value, n.label or "") for n in a.nodes)
    nodes_b = Counter((n.kind.value, n.label or "") for n in b.nodes)
    if nodes_a != nodes_b:
        kind, label = sorted((nodes_a - nodes_b) or (nodes_b - nodes_a))[0]
        return IsomorphismResult(False, mismatch=f"unmatched node {kind} {label!r}")

    flows_a = Counter((t.kind.value, t.guard or "") for t in a.transitions)
    flows_b = Counter((t.kind.value, t.guard or "") for t in b.transitions)
    if flows_a != flows_b:
        kind, guard = sorted((flows_a - flows_b) or (flows_b - flows_a))[0]
        return IsomorphismResult(False, mismatch=f"unmatched transition {kind} guard={guard!r}")

    matcher = isomorphism.MultiDiGraphMatcher(
        _as_multigraph(a), _as_multigraph(b), node_match=_node_match, edge_match=_edge_match
    )
    witness = next(matcher.isomorphisms_iter(), None)
    if witness is None:
        return IsomorphismResult(False, mismatch="no label-, kind- and structure-preserving bijection")
    return IsomorphismResult(True, mapping=dict(witness))


def _as_multigraph(model: NibmProcess) -> nx.MultiDiGraph:
    graph = nx.MultiDiGraph()
    for node in model.nodes:
        graph.add_node(node.id, kind=node.kind.value, label=node.label or "")
    for t in model.transitions:
        graph.add_edge(t.source, t.target, kind=t.kind.value, guard=t.guard or "")
    return graph


def _node_match(a: dict[str, Any], b: dict[str, Any]) -> bool:
    return bool(a["kind"] == b["kind"] and a["label"] == b["label"])


def _edge_match(a: dict[Any, dict[str, Any]], b: dict[Any, dict[str, Any]]) -> bool:
    # 多重辺は属性の多重集合で比較する
    return sorted((d["kind"], d["guard"]) for d in a.values()) == sorted(
        (d["kind"], d["guard"]) for d in b.values()
    )


# ---------------------------------------------------------------------------
# JSON交換形式
# ---------------------------------------------------------------------------

def read_nibm(document: str) -> NibmProcess:
    """
    NIBM交換ドキュメントを読み込む

    Raises:
        StructuralError: 形式不正・ID重複・参照切れ・列挙値不正
    """
    process = load_document(document, NOTATION)
    name = require_text(process, "name", "process")

    nodes: list[NibmNode] = []
    for i, raw in enumerate(require_list(process, "nodes", "process")):
        path = f"nodes[{i}]"
        obj = require_object(raw, path)
        nodes.append(NibmNode(
            id=require_text(obj, "id", path),
            kind=parse_enum(NodeKind, obj.get("kind"), "kind", path),
            label=optional_text(obj, "label", path),
            performer=optional_text(obj, "performer", path)
        ))

    transitions: list[NibmTransition] = []
    for i, raw in enumerate(require_list(process, "transitions", "process")):
        path = f"transitions[{i}]"
        obj = require_object(raw, path)
        transitions.append(NibmTransition(
            id=require_text(obj, "id", path),
            kind=parse_enum(TransitionKind, obj.get("kind"), "kind", path),
            source=require_text(obj, "source", path),
            target=require_text(obj, "target", path),
            guard=optional_text(obj, "guard", path)
        ))

    performers: list[Performer] = []
    for i, raw in enumerate(require_list(process, "performers", "process", required=False)):
        path = f"performers[{i}]"
        obj = require_object(raw, path)
        performers.append(Performer(
            id=require_text(obj, "id", path),
            kind=parse_enum(PerformerKind, obj.get("kind"), "kind", path),
            name=require_text(obj, "name", path)
        ))

    context = None
    if process.get("context") is not None:
        obj = require_object(process["context"], "context")
        context = EnterpriseContext(
            enterprise=optional_text(obj, "enterprise", "context"),
            inputs=tuple(_names(obj, "inputs")),
            outputs=tuple(_names(obj, "outputs"))
        )

    model = NibmProcess(
        id=optional_text(process, "id", "process") or name,
        name=name,
        nodes=tuple(nodes),
        transitions=tuple(transitions),
        performers=tuple(performers),
        context=context
    )
    check_structure(model)
    return model


def _names(obj: dict[str, Any], key: str) -> list[str]:
    names = require_list(obj, key, f"context.{key}", required=False)
    for i, value in enumerate(names):
        if not isinstance(value, str) or not value:
            raise StructuralError(f"empty name at context.{key}[{i}]", f"context.{key}[{i}]")
    return names


def write_nibm(model: NibmProcess) -> str:
    """NIBMモデルを交換ドキュメントに書き出す（構造チェックあり）"""
    check_structure(model)
    process: dict[str, Any] = {
        "id": model.id,
        "name": model.name,
        "nodes": [
            {"id": n.id, "kind": n.kind.value, "label": n.label, "performer": n.performer}
            for n in model.nodes
        ],
        "transitions": [
            {"id": t.id, "kind": t.kind.value, "source": t.source, "target": t.target, "guard": t.guard}
            for t in model.transitions
        ],
        "performers": [
            {"id": p.id, "kind": p.kind.value, "name": p.name} for p in model.performers
        ],
    }
    if model.context is not None:
        process["context"] = {
            "enterprise": model.context.enterprise,
            "inputs": list(model.context.inputs),
            "outputs": list(model.context.outputs),
        }
    return dump_document(NOTATION, process)


@dataclass
class NibmBuilder:
    """
    NIBMモデルを手続き的に組み立てるヘルパー

    遷移種別を省略すると端点の種別から導出する。
    """
    name: str
    nodes: list[NibmNode] = field(default_factory=list)
    transitions: list[NibmTransition] = field(default_factory=list)
    performers: list[Performer] = field(default_factory=list)

    def node(self, node_id: str, kind: NodeKind, label: str | None = None, performer: str | None = None) -> str:
        self.nodes.append(NibmNode(node_id, kind, label, performer))
        return node_id

    def flow(
        self,
        source: str,
        target: str,
        guard: str | None = None,
        kind: TransitionKind | None = None,
        transition_id: str | None = None
    ) -> str:
        kinds = {n.id: n.kind for n in self.nodes}
        if kind is None:
            kind = classify_transition(kinds[source], kinds[target])
        tid = transition_id or f"t{len(self.transitions) + 1}"
        self.transitions.append(NibmTransition(tid, kind, source, target, guard))
        return tid

    def performer(self, performer_id: str, kind: PerformerKind, name: str) -> str:
        self.performers.append(Performer(performer_id, kind, name))
        return performer_id

    def build(self, context: EnterpriseContext | None = None) -> NibmProcess:
        return NibmProcess(
            id=self.name,
            name=self.name,
            nodes=tuple(self.nodes),
            transitions=tuple(self.transitions),
            performers=tuple(self.performers),
            context=context
        )
