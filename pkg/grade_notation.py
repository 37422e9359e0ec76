"""
GRADE BM 表記

タスクの属性として起動条件（triggering）と分岐（branching）を持つ表記の
メタモデル・リーダー・ライター・検証器。

- branching=OR は排他的選択、branching=AND は並列分岐
- triggering=OR は排他的合流、triggering=AND は同期合流
"""

from __future__ import annotations

from collections import defaultdict, deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
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

NOTATION = "grade-bm"

RULE_TASK_NAME = "task-name"
RULE_TRIGGERING_ARITY = "triggering-arity"
RULE_BRANCHING_ARITY = "branching-arity"
RULE_GUARD_PLACEMENT = "guard-placement"
RULE_ELSE_GUARD = "else-guard"
RULE_FLOW_FROM_END = "flow-from-end"
RULE_FLOW_INTO_START = "flow-into-start"
RULE_START_COUNT = "start-count"
RULE_START_OUTFLOW = "start-outflow"
RULE_END_INFLOW = "end-inflow"
RULE_TASK_DANGLING = "task-dangling"
RULE_UNREACHABLE = "unreachable"
RULE_NO_END_PATH = "no-end-path"


class Condition(str, Enum):
    """起動条件・分岐の属性値"""
    OR = "OR"
    AND = "AND"
    NONE = "NONE"


@dataclass(frozen=True)
class GradePerformerRef:
    """実行者参照"""
    id: str
    kind: PerformerKind
    name: str


@dataclass(frozen=True)
class GradeTask:
    """GRADEタスク（起動条件・分岐を内包する）"""
    id: str
    name: str
    triggering: Condition = Condition.NONE
    branching: Condition = Condition.NONE
    performer: str | None = None
    # 出力フローID → ガード文字列
    guards: Mapping[str, str | None] = field(default_factory=dict)


@dataclass(frozen=True)
class GradeStart:
    id: str


@dataclass(frozen=True)
class GradeEnd:
    id: str


@dataclass(frozen=True)
class GradeFlow:
    id: str
    source: str
    target: str


@dataclass(frozen=True)
class GradeProcess:
    """GRADE BM プロセス"""
    name: str
    tasks: tuple[GradeTask, ...] = ()
    starts: tuple[GradeStart, ...] = ()
    ends: tuple[GradeEnd, ...] = ()
    flows: tuple[GradeFlow, ...] = ()
    performers: tuple[GradePerformerRef, ...] = ()

    @cached_property
    def _flow_index(self) -> tuple[dict[str, list[GradeFlow]], dict[str, list[GradeFlow]]]:
        inflows: dict[str, list[GradeFlow]] = defaultdict(list)
        outflows: dict[str, list[GradeFlow]] = defaultdict(list)
        for f in self.flows:
            outflows[f.source].append(f)
            inflows[f.target].append(f)
        return inflows, outflows

    def inflows(self, element_id: str) -> list[GradeFlow]:
        return self._flow_index[0].get(element_id, [])

    def outflows(self, element_id: str) -> list[GradeFlow]:
        return self._flow_index[1].get(element_id, [])

    def task(self, task_id: str) -> GradeTask:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def element_ids(self) -> list[str]:
        return (
            [s.id for s in self.starts]
            + [t.id for t in self.tasks]
            + [e.id for e in self.ends]
            + [f.id for f in self.flows]
            + [p.id for p in self.performers]
        )


def check_structure(model: GradeProcess) -> None:
    """
    構造チェック（ID重複・参照切れ）

    Raises:
        StructuralError: IDが解決できない場合
    """
    check_unique(
        [(s.id, f"starts[{i}]") for i, s in enumerate(model.starts)]
        + [(t.id, f"tasks[{i}]") for i, t in enumerate(model.tasks)]
        + [(e.id, f"ends[{i}]") for i, e in enumerate(model.ends)]
        + [(f.id, f"flows[{i}]") for i, f in enumerate(model.flows)]
        + [(p.id, f"performers[{i}]") for i, p in enumerate(model.performers)]
    )
    endpoints = (
        {s.id for s in model.starts} | {t.id for t in model.tasks} | {e.id for e in model.ends}
    )
    for i, f in enumerate(model.flows):
        check_endpoint(endpoints, f.source, "source", f"flows[{i}]")
        check_endpoint(endpoints, f.target, "target", f"flows[{i}]")

    performers = {p.id for p in model.performers}
    flows = {f.id for f in model.flows}
    for i, t in enumerate(model.tasks):
        if t.performer is not None:
            check_endpoint(performers, t.performer, "performer", f"tasks[{i}]")
        for flow_id in t.guards:
            check_endpoint(flows, flow_id, "guard flow", f"tasks[{i}].guards")


def read_grade(document: str) -> GradeProcess:
    """
    GRADE BM 交換ドキュメントを読み込む

    Args:
        document: notation "grade-bm" のJSONテキスト

    Returns:
        構造的に妥当な GradeProcess

    Raises:
        StructuralError: 形式不正・ID重複・参照切れ・属性値不正（パス付き）
    """
    process = load_document(document, NOTATION)
    name = require_text(process, "name", "process")

    tasks: list[GradeTask] = []
    for i, raw in enumerate(require_list(process, "tasks", "process")):
        path = f"tasks[{i}]"
        obj = require_object(raw, path)
        guards_raw = obj.get("guards") or {}
        if not isinstance(guards_raw, dict):
            raise StructuralError(f"guards must be an object at {path}", path)
        guards: dict[str, str | None] = {}
        for flow_id, guard in guards_raw.items():
            if guard is not None and not isinstance(guard, str):
                raise StructuralError(f"guard must be text at {path}.guards.{flow_id}", path)
            guards[flow_id] = guard
        tasks.append(GradeTask(
            id=require_text(obj, "id", path),
            name=require_text(obj, "name", path),
            triggering=parse_enum(Condition, obj.get("triggering", "NONE"), "triggering", path),
            branching=parse_enum(Condition, obj.get("branching", "NONE"), "branching", path),
            performer=optional_text(obj, "performer", path),
            guards=guards
        ))

    starts = [
        GradeStart(require_text(require_object(raw, f"starts[{i}]"), "id", f"starts[{i}]"))
        for i, raw in enumerate(require_list(process, "starts", "process"))
    ]
    ends = [
        GradeEnd(require_text(require_object(raw, f"ends[{i}]"), "id", f"ends[{i}]"))
        for i, raw in enumerate(require_list(process, "ends", "process"))
    ]

    flows: list[GradeFlow] = []
    for i, raw in enumerate(require_list(process, "flows", "process")):
        path = f"flows[{i}]"
        obj = require_object(raw, path)
        flows.append(GradeFlow(
            id=require_text(obj, "id", path),
            source=require_text(obj, "source", path),
            target=require_text(obj, "target", path)
        ))

    performers: list[GradePerformerRef] = []
    for i, raw in enumerate(require_list(process, "performers", "process", required=False)):
        path = f"performers[{i}]"
        obj = require_object(raw, path)
        performers.append(GradePerformerRef(
            id=require_text(obj, "id", path),
            kind=parse_enum(PerformerKind, obj.get("kind"), "kind", path),
            name=require_text(obj, "name", path)
        ))

    model = GradeProcess(
        name=name,
        tasks=tuple(tasks),
        starts=tuple(starts),
        ends=tuple(ends),
        flows=tuple(flows),
        performers=tuple(performers)
    )
    check_structure(model)
    return model


def write_grade(model: GradeProcess) -> str:
    """
    GRADE BM 交換ドキュメントに書き出す

    Raises:
        StructuralError: ID重複などの構造不正（書き出し前に再チェックする）
    """
    check_structure(model)
    process: dict[str, Any] = {
        "name": model.name,
        "tasks": [
            {
                "id": t.id,
                "name": t.name,
                "triggering": t.triggering.value,
                "branching": t.branching.value,
                "performer": t.performer,
                "guards": dict(t.guards),
            }
            for t in model.tasks
        ],
        "starts": [{"id": s.id} for s in model.starts],
        "ends": [{"id": e.id} for e in model.ends],
        "flows": [{"id": f.id, "source": f.source, "target": f.target} for f in model.flows],
        "performers": [{"id": p.id, "kind": p.kind.value, "name": p.name} for p in model.performers],
    }
    return dump_document(NOTATION, process)


def validate_grade(model: GradeProcess) -> ValidationReport:
    """
    GRADEモデルを検証する

    Args:
        model: 検証対象

    Returns:
        違反レポート（空なら妥当）
    """
    check_structure(model)
    report = ReportBuilder()
    start_ids = {s.id for s in model.starts}
    end_ids = {e.id for e in model.ends}

    for task in model.tasks:
        n_in = len(model.inflows(task.id))
        n_out = len(model.outflows(task.id))
        if not task.name:
            report.add(task.id, RULE_TASK_NAME, "task requires a non-empty name")
        if task.triggering == Condition.NONE and n_in > 1:
            report.add(task.id, RULE_TRIGGERING_ARITY, "triggering NONE admits at most 1 inflow")
        if task.triggering != Condition.NONE and n_in < 2:
            report.add(task.id, RULE_TRIGGERING_ARITY, f"triggering {task.triggering.value} requires ≥2 inflows")
        if task.branching == Condition.NONE and n_out > 1:
            report.add(task.id, RULE_BRANCHING_ARITY, "branching NONE admits at most 1 outflow")
        if task.branching != Condition.NONE and n_out < 2:
            report.add(task.id, RULE_BRANCHING_ARITY, f"branching {task.branching.value} requires ≥2 outflows")
        if n_in == 0 or n_out == 0:
            report.add(task.id, RULE_TASK_DANGLING, "task requires at least one inflow and one outflow")

        guarded = {k: v for k, v in task.guards.items() if v is not None}
        if guarded and task.branching != Condition.OR:
            report.add(task.id, RULE_GUARD_PLACEMENT, "guards only on branching OR tasks")
        own = {f.id for f in model.outflows(task.id)}
        foreign = [k for k in task.guards if k not in own]
        if foreign:
            report.add(task.id, RULE_GUARD_PLACEMENT, f"guard on foreign flow {foreign[0]}")
        if sum(1 for v in guarded.values() if v == ELSE_GUARD) > 1:
            report.add(task.id, RULE_ELSE_GUARD, "at most one else outflow per task")

    for f in model.flows:
        if f.source in end_ids:
            report.add(f.id, RULE_FLOW_FROM_END, "no flow may leave an end")
        if f.target in start_ids:
            report.add(f.id, RULE_FLOW_INTO_START, "no flow may enter a start")

    if len(model.starts) != 1:
        report.add(model.name, RULE_START_COUNT, f"exactly one start required, found {len(model.starts)}")
    for start in model.starts:
        if len(model.outflows(start.id)) != 1:
            report.add(start.id, RULE_START_OUTFLOW, "start requires exactly 1 outflow")
    for end in model.ends:
        if not model.inflows(end.id):
            report.add(end.id, RULE_END_INFLOW, "end requires ≥1 inflow")

    endpoints = [s.id for s in model.starts] + [t.id for t in model.tasks] + [e.id for e in model.ends]
    if len(model.starts) == 1:
        reachable = _reachable(model, [model.starts[0].id], forward=True)
        for element_id in endpoints:
            if element_id not in reachable:
                report.add(element_id, RULE_UNREACHABLE, "unreachable from start")
    if model.ends:
        reaching = _reachable(model, list(end_ids), forward=False)
        for element_id in endpoints:
            if element_id not in reaching:
                report.add(element_id, RULE_NO_END_PATH, "cannot reach any end")

    return report.build()


def _reachable(model: GradeProcess, roots: list[str], forward: bool) -> set[str]:
    seen = set(roots)
    queue = deque(roots)
    while queue:
        current = queue.popleft()
        flows = model.outflows(current) if forward else model.inflows(current)
        for f in flows:
            nxt = f.target if forward else f.source
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


class GradeAdapter:
    """GRADEモデル ⇔ 汎用要素列"""

    notation = NOTATION
    classes: Mapping[str, frozenset[str]] = {
        "Task": frozenset({"name", "triggering", "branching", "performer"}),
        "Start": frozenset(),
        "End": frozenset(),
        "Flow": frozenset({"source", "target", "guard"}),
        "PerformerRef": frozenset({"kind", "name"}),
    }
    references: Mapping[str, frozenset[str]] = {
        "Task": frozenset({"performer"}),
        "Flow": frozenset({"source", "target"}),
    }

    def model_type(self) -> type[GradeProcess]:
        return GradeProcess

    def validate(self, model: GradeProcess) -> ValidationReport:
        return validate_grade(model)

    def elements(self, model: GradeProcess) -> list[SourceElement]:
        guards: dict[str, str | None] = {}
        for task in model.tasks:
            guards.update(task.guards)

        elements = [SourceElement(s.id, "Start") for s in model.starts]
        elements += [
            SourceElement(t.id, "Task", {
                "name": t.name,
                "triggering": t.triggering.value,
                "branching": t.branching.value,
                "performer": t.performer,
            })
            for t in model.tasks
        ]
        elements += [SourceElement(e.id, "End") for e in model.ends]
        elements += [
            SourceElement(f.id, "Flow", {"source": f.source, "target": f.target, "guard": guards.get(f.id)})
            for f in model.flows
        ]
        elements += [
            SourceElement(p.id, "PerformerRef", {"kind": p.kind.value, "name": p.name})
            for p in model.performers
        ]
        return elements

    def build(self, name: str, elements: Sequence[SourceElement]) -> GradeProcess:
        guards: dict[str, dict[str, str | None]] = defaultdict(dict)
        for e in elements:
            if e.cls == "Flow" and e.get("guard") is not None:
                guards[e.get("source") or ""][e.id] = e.get("guard")

        tasks = tuple(
            GradeTask(
                id=e.id,
                name=e.get("name") or "",
                triggering=Condition(e.get("triggering") or Condition.NONE.value),
                branching=Condition(e.get("branching") or Condition.NONE.value),
                performer=e.get("performer"),
                guards=dict(guards.get(e.id, {}))
            )
            for e in elements if e.cls == "Task"
        )
        model = GradeProcess(
            name=name,
            tasks=tasks,
            starts=tuple(GradeStart(e.id) for e in elements if e.cls == "Start"),
            ends=tuple(GradeEnd(e.id) for e in elements if e.cls == "End"),
            flows=tuple(
                GradeFlow(e.id, e.get("source") or "", e.get("target") or "")
                for e in elements if e.cls == "Flow"
            ),
            performers=tuple(
                GradePerformerRef(e.id, PerformerKind(e.get("kind")), e.get("name") or "")
                for e in elements if e.cls == "PerformerRef"
            )
        )
        check_structure(model)
        return model
