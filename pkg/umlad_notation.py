"""
UML 2.0 アクティビティ図（制御ノードのみの断片）

制御ノード（DecisionNode / MergeNode / ForkNode / JoinNode）を明示する表記の
メタモデル・リーダー・ライター・検証器。パーティションが実行者参照を担う。
"""

from __future__ import annotations

from collections import defaultdict, deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any

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
from nibm_model import ELSE_GUARD, PerformerKind
from source_view import SourceElement
from validation_report import ReportBuilder, ValidationReport

NOTATION = "uml-ad"

RULE_ACTION_NAME = "action-name"
RULE_ACTION_FAN_IN = "action-fan-in"
RULE_ACTION_FAN_OUT = "action-fan-out"
RULE_ACTION_DANGLING = "action-dangling"
RULE_PARTITION_PLACEMENT = "partition-placement"
RULE_SPLIT_DEGREE = "split-degree"
RULE_UNIFICATION_DEGREE = "unification-degree"
RULE_ELSE_GUARD = "else-guard"
RULE_INITIAL_COUNT = "initial-count"
RULE_INITIAL_DEGREE = "initial-degree"
RULE_FINAL_COUNT = "final-count"
RULE_FINAL_DEGREE = "final-degree"
RULE_UNREACHABLE = "unreachable"
RULE_NO_FINAL_PATH = "no-final-path"


class UmlNodeKind(str, Enum):
    """アクティビティノード種別"""
    ACTION = "Action"
    DECISION = "DecisionNode"
    MERGE = "MergeNode"
    FORK = "ForkNode"
    JOIN = "JoinNode"
    INITIAL = "InitialNode"
    FINAL = "ActivityFinalNode"


_SPLITS = frozenset({UmlNodeKind.DECISION, UmlNodeKind.FORK})
_UNIFICATIONS = frozenset({UmlNodeKind.MERGE, UmlNodeKind.JOIN})


@dataclass(frozen=True)
class UmlNode:
    id: str
    kind: UmlNodeKind
    name: str | None = None
    partition: str | None = None


@dataclass(frozen=True)
class UmlControlFlow:
    """制御フロー（guard は DecisionNode から出るエッジのみ）"""
    id: str
    source: str
    target: str
    guard: str | None = None


@dataclass(frozen=True)
class UmlPartition:
    """パーティション（実行者参照）"""
    id: str
    name: str
    kind: PerformerKind


@dataclass(frozen=True)
class UmlActivity:
    """アクティビティ"""
    name: str
    nodes: tuple[UmlNode, ...] = ()
    edges: tuple[UmlControlFlow, ...] = ()
    partitions: tuple[UmlPartition, ...] = ()

    @cached_property
    def _node_index(self) -> dict[str, UmlNode]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def _edge_index(self) -> tuple[dict[str, list[UmlControlFlow]], dict[str, list[UmlControlFlow]]]:
        incoming: dict[str, list[UmlControlFlow]] = defaultdict(list)
        outgoing: dict[str, list[UmlControlFlow]] = defaultdict(list)
        for e in self.edges:
            outgoing[e.source].append(e)
            incoming[e.target].append(e)
        return incoming, outgoing

    def node(self, node_id: str) -> UmlNode:
        return self._node_index[node_id]

    def incoming(self, node_id: str) -> list[UmlControlFlow]:
        return self._edge_index[0].get(node_id, [])

    def outgoing(self, node_id: str) -> list[UmlControlFlow]:
        return self._edge_index[1].get(node_id, [])

    def nodes_of(self, *kinds: UmlNodeKind) -> list[UmlNode]:
        return [n for n in self.nodes if n.kind in kinds]

    def element_ids(self) -> list[str]:
        return [n.id for n in self.nodes] + [e.id for e in self.edges] + [p.id for p in self.partitions]


def check_structure(model: UmlActivity) -> None:
    """
    構造チェック（ID重複・参照切れ・ガード位置）

    Raises:
        StructuralError: 構造が不正な場合
    """
    check_unique(
        [(n.id, f"nodes[{i}]") for i, n in enumerate(model.nodes)]
        + [(e.id, f"edges[{i}]") for i, e in enumerate(model.edges)]
        + [(p.id, f"partitions[{i}]") for i, p in enumerate(model.partitions)]
    )
    node_ids = {n.id for n in model.nodes}
    for i, e in enumerate(model.edges):
        check_endpoint(node_ids, e.source, "source", f"edges[{i}]")
        check_endpoint(node_ids, e.target, "target", f"edges[{i}]")
        if e.guard is not None and model.node(e.source).kind != UmlNodeKind.DECISION:
            raise StructuralError(f"guard only on decision edges at edges[{i}]", f"edges[{i}]")

    partition_ids = {p.id for p in model.partitions}
    for i, n in enumerate(model.nodes):
        if n.partition is not None:
            check_endpoint(partition_ids, n.partition, "partition", f"nodes[{i}]")


def read_umlad(document: str) -> UmlActivity:
    """
    UML-AD 交換ドキュメントを読み込む

    Args:
        document: notation "uml-ad" のJSONテキスト

    Returns:
        構造的に妥当な UmlActivity

    Raises:
        StructuralError: 形式不正・ID重複・参照切れ・種別不正・ガード位置不正
    """
    process = load_document(document, NOTATION)
    name = require_text(process, "name", "process")

    nodes: list[UmlNode] = []
    for i, raw in enumerate(require_list(process, "nodes", "process")):
        path = f"nodes[{i}]"
        obj = require_object(raw, path)
        nodes.append(UmlNode(
            id=require_text(obj, "id", path),
            kind=parse_enum(UmlNodeKind, obj.get("kind"), "kind", path),
            name=optional_text(obj, "name", path),
            partition=optional_text(obj, "partition", path)
        ))

    edges: list[UmlControlFlow] = []
    for i, raw in enumerate(require_list(process, "edges", "process")):
        path = f"edges[{i}]"
        obj = require_object(raw, path)
        edges.append(UmlControlFlow(
            id=require_text(obj, "id", path),
            source=require_text(obj, "source", path),
            target=require_text(obj, "target", path),
            guard=optional_text(obj, "guard", path)
        ))

    partitions: list[UmlPartition] = []
    for i, raw in enumerate(require_list(process, "partitions", "process", required=False)):
        path = f"partitions[{i}]"
        obj = require_object(raw, path)
        partitions.append(UmlPartition(
            id=require_text(obj, "id", path),
            name=require_text(obj, "name", path),
            kind=parse_enum(PerformerKind, obj.get("kind"), "kind", path)
        ))

    model = UmlActivity(name=name, nodes=tuple(nodes), edges=tuple(edges), partitions=tuple(partitions))
    check_structure(model)
    return model


def write_umlad(model: UmlActivity) -> str:
    """UML-AD 交換ドキュメントに書き出す（書き出し前に構造を再チェック）"""
    check_structure(model)
    process: dict[str, Any] = {
        "name": model.name,
        "nodes": [
            {"id": n.id, "kind": n.kind.value, "name": n.name, "partition": n.partition}
            for n in model.nodes
        ],
        "edges": [
            {"id": e.id, "source": e.source, "target": e.target, "guard": e.guard}
            for e in model.edges
        ],
        "partitions": [
            {"id": p.id, "name": p.name, "kind": p.kind.value} for p in model.partitions
        ],
    }
    return dump_document(NOTATION, process)


def validate_umlad(model: UmlActivity) -> ValidationReport:
    """
    アクティビティを検証する（次数制約と到達可能性）

    Args:
        model: 検証対象

    Returns:
        違反レポート（空なら妥当）
    """
    check_structure(model)
    report = ReportBuilder()

    for node in model.nodes:
        n_in = len(model.incoming(node.id))
        n_out = len(model.outgoing(node.id))
        label = node.kind.value

        if node.partition is not None and node.kind != UmlNodeKind.ACTION:
            report.add(node.id, RULE_PARTITION_PLACEMENT, f"partition on {label} (actions only)")

        if node.kind == UmlNodeKind.ACTION:
            if not node.name:
                report.add(node.id, RULE_ACTION_NAME, "action requires a non-empty name")
            if n_in > 1:
                report.add(node.id, RULE_ACTION_FAN_IN, "action fan-in")
            if n_out > 1:
                report.add(node.id, RULE_ACTION_FAN_OUT, "action fan-out")
            if n_in == 0 or n_out == 0:
                report.add(node.id, RULE_ACTION_DANGLING, "action requires exactly 1 in-edge and 1 out-edge")
        elif node.kind in _SPLITS:
            if n_in != 1 or n_out < 2:
                report.add(node.id, RULE_SPLIT_DEGREE, f"{label} requires 1 in-edge and ≥2 out-edges")
            if node.kind == UmlNodeKind.DECISION:
                elses = [e for e in model.outgoing(node.id) if e.guard == ELSE_GUARD]
                if len(elses) > 1:
                    report.add(node.id, RULE_ELSE_GUARD, "at most one else edge per decision")
        elif node.kind in _UNIFICATIONS:
            if n_in < 2 or n_out != 1:
                report.add(node.id, RULE_UNIFICATION_DEGREE, f"{label} requires ≥2 in-edges and 1 out-edge")
        elif node.kind == UmlNodeKind.INITIAL:
            if n_in != 0 or n_out != 1:
                report.add(node.id, RULE_INITIAL_DEGREE, "initial node requires 0 in-edges and 1 out-edge")
        elif node.kind == UmlNodeKind.FINAL:
            if n_in < 1 or n_out != 0:
                report.add(node.id, RULE_FINAL_DEGREE, "final node requires ≥1 in-edge and 0 out-edges")

    initials = model.nodes_of(UmlNodeKind.INITIAL)
    finals = model.nodes_of(UmlNodeKind.FINAL)
    if len(initials) != 1:
        report.add(model.name, RULE_INITIAL_COUNT, f"exactly one initial node required, found {len(initials)}")
    if not finals:
        report.add(model.name, RULE_FINAL_COUNT, "at least one activity final node required")

    if len(initials) == 1:
        reachable = _reachable(model, [initials[0].id], forward=True)
        for node in model.nodes:
            if node.id not in reachable:
                report.add(node.id, RULE_UNREACHABLE, "unreachable from start")
    if finals:
        reaching = _reachable(model, [f.id for f in finals], forward=False)
        for node in model.nodes:
            if node.id not in reaching:
                report.add(node.id, RULE_NO_FINAL_PATH, "cannot reach any final node")

    return report.build()


def _reachable(model: UmlActivity, roots: list[str], forward: bool) -> set[str]:
    seen = set(roots)
    queue = deque(roots)
    while queue:
        current = queue.popleft()
        edges = model.outgoing(current) if forward else model.incoming(current)
        for e in edges:
            nxt = e.target if forward else e.source
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


class UmlAdapter:
    """UMLアクティビティ ⇔ 汎用要素列（クラス名はノード種別そのもの）"""

    notation = NOTATION
    classes: Mapping[str, frozenset[str]] = {
        **{kind.value: frozenset() for kind in UmlNodeKind if kind != UmlNodeKind.ACTION},
        UmlNodeKind.ACTION.value: frozenset({"name", "partition"}),
        "ControlFlow": frozenset({"source", "target", "guard"}),
        "Partition": frozenset({"kind", "name"}),
    }
    references: Mapping[str, frozenset[str]] = {
        UmlNodeKind.ACTION.value: frozenset({"partition"}),
        "ControlFlow": frozenset({"source", "target"}),
    }

    def model_type(self) -> type[UmlActivity]:
        return UmlActivity

    def validate(self, model: UmlActivity) -> ValidationReport:
        return validate_umlad(model)

    def elements(self, model: UmlActivity) -> list[SourceElement]:
        elements = [
            SourceElement(n.id, n.kind.value, {"name": n.name, "partition": n.partition}
                          if n.kind == UmlNodeKind.ACTION else {})
            for n in model.nodes
        ]
        elements += [
            SourceElement(e.id, "ControlFlow", {"source": e.source, "target": e.target, "guard": e.guard})
            for e in model.edges
        ]
        elements += [
            SourceElement(p.id, "Partition", {"kind": p.kind.value, "name": p.name})
            for p in model.partitions
        ]
        return elements

    def build(self, name: str, elements: Sequence[SourceElement]) -> UmlActivity:
        node_kinds = {kind.value for kind in UmlNodeKind}
        model = UmlActivity(
            name=name,
            nodes=tuple(
                UmlNode(e.id, UmlNodeKind(e.cls), e.get("name"), e.get("partition"))
                for e in elements if e.cls in node_kinds
            ),
            edges=tuple(
                UmlControlFlow(e.id, e.get("source") or "", e.get("target") or "", e.get("guard"))
                for e in elements if e.cls == "ControlFlow"
            ),
            partitions=tuple(
                UmlPartition(e.id, e.get("name") or "", PerformerKind(e.get("kind")))
                for e in elements if e.cls == "Partition"
            )
        )
        check_structure(model)
        return model
