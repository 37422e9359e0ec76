"""
マッピング定義とトレース

表記クラス → NIBM クラスの対応表をデータとして表す。ルールは
ガード述語・生成テンプレート・入口/出口ポートを持ち、エンジンが解釈する。

テンプレートの端点式:
    "merge"           同じルール（同じ元要素）のロール
    "@source.exit"    参照属性 source が指す要素の出口ポート
    "@target.entry"   参照属性 target が指す要素の入口ポート
    "@performer.performer"  参照先要素のロール

コピー式は属性名（"name"）か参照式（"@performer.performer"）。
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, TypedDict

from exceptions import GuardSyntaxError, MappingDefinitionError
from guard_predicate import TRUE_GUARD, parse_guard
from nibm_model import NodeKind, TransitionKind
from validation_report import ReportBuilder, ValidationReport

PERFORMER_KIND = "Performer"
ENTRY_PORT = "entry"
EXIT_PORT = "exit"

NODE_KINDS = frozenset(k.value for k in NodeKind)
TRANSITION_KINDS = frozenset(k.value for k in TransitionKind)
TEMPLATE_KINDS = NODE_KINDS | TRANSITION_KINDS | {PERFORMER_KIND}

# テンプレート種別ごとにコピー可能な NIBM 属性
COPY_TARGETS: Mapping[str, frozenset[str]] = {
    **{kind: frozenset({"label"}) for kind in NODE_KINDS},
    NodeKind.TASK.value: frozenset({"label", "performer"}),
    **{kind: frozenset({"guard"}) for kind in TRANSITION_KINDS},
    PERFORMER_KIND: frozenset({"kind", "name"}),
}


class TraceDirection(str, Enum):
    TO_NIBM = "toNibm"
    FROM_NIBM = "fromNibm"
    DERIVED = "derived"


@dataclass(frozen=True)
class ElementTemplate:
    """ルールが生成する NIBM 要素1つ分のテンプレート"""
    role: str
    kind: str
    source: str | None = None
    target: str | None = None
    copy: Mapping[str, str] = field(default_factory=dict)

    @property
    def is_transition(self) -> bool:
        return self.kind in TRANSITION_KINDS

    @property
    def is_node(self) -> bool:
        return self.kind in NODE_KINDS


@dataclass(frozen=True)
class MappingRule:
    """条件付きクラス対応"""
    id: str
    source_class: str
    guard: str = TRUE_GUARD
    produces: tuple[ElementTemplate, ...] = ()
    entry: str | None = None
    exit: str | None = None
    consumes: tuple[str, ...] = ()

    def template(self, role: str) -> ElementTemplate | None:
        for t in self.produces:
            if t.role == role:
                return t
        return None

    def roles(self) -> list[str]:
        return [t.role for t in self.produces]


@dataclass(frozen=True)
class MappingDefinition:
    """表記 ⇔ NIBM のマッピング定義"""
    source_notation: str
    rules: tuple[MappingRule, ...]
    xor_groups: tuple[tuple[str, ...], ...] = ()

    def rule(self, rule_id: str) -> MappingRule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)

    def rules_for(self, source_class: str) -> list[MappingRule]:
        return [r for r in self.rules if r.source_class == source_class]

    def group_of(self, rule_id: str) -> int | None:
        for i, group in enumerate(self.xor_groups):
            if rule_id in group:
                return i
        return None

    def source_classes(self) -> list[str]:
        classes: list[str] = []
        for r in self.rules:
            if r.source_class not in classes:
                classes.append(r.source_class)
        return classes


@dataclass(frozen=True)
class MappingLink:
    """
    インスタンスレベルの対応リンク

    source は入力モデルの要素ID、produced は出力モデルの要素ID。
    folded は新しい要素を生成せずに同じ要素へ寄与したルール。
    """
    source: str
    rule: str
    produced: tuple[str, ...]
    via: tuple[str, ...] = ()
    folded: tuple[str, ...] = ()


@dataclass(frozen=True)
class MappingTrace:
    """射影が出力するトレース"""
    direction: TraceDirection
    links: tuple[MappingLink, ...]
    source_notation: str
    target_notation: str

    def sources(self) -> list[str]:
        seen: list[str] = []
        for link in self.links:
            if link.source not in seen:
                seen.append(link.source)
        return seen

    def links_for(self, source_id: str) -> list[MappingLink]:
        return [link for link in self.links if link.source == source_id]

    def produced_by(self, source_id: str) -> list[str]:
        return [p for link in self.links_for(source_id) for p in link.produced]

    def remap_produced(self, mapping: Mapping[str, str]) -> MappingTrace:
        """出力側IDを付け替える（正規化の後など）"""
        links = tuple(
            MappingLink(
                link.source, link.rule, tuple(mapping.get(p, p) for p in link.produced), link.via, link.folded
            )
            for link in self.links
        )
        return MappingTrace(self.direction, links, self.source_notation, self.target_notation)

    def remap_sources(self, mapping: Mapping[str, str]) -> MappingTrace:
        """入力側IDを付け替える"""
        links = tuple(
            MappingLink(mapping.get(link.source, link.source), link.rule, link.produced, link.via, link.folded)
            for link in self.links
        )
        return MappingTrace(self.direction, links, self.source_notation, self.target_notation)


# ---------------------------------------------------------------------------
# 組み込み定義
# ---------------------------------------------------------------------------

_FLOW_PASS = ElementTemplate(
    "pass", TransitionKind.PASS.value, source="@source.exit", target="@target.entry", copy={"guard": "guard"}
)


def builtin_grade_mapping() -> MappingDefinition:
    """
    GRADE BM ⇔ NIBM の組み込み定義

    タスクは起動条件で Merge/Join + Incoming を、分岐で Outgoing + Decision/Fork を伴う。
    起動条件の3ルールと分岐の3ルールがそれぞれ XOR グループを成す。
    """
    task = ElementTemplate(
        "task", NodeKind.TASK.value, copy={"label": "name", "performer": "@performer.performer"}
    )

    def triggering(rule_id: str, literal: str, unification: NodeKind | None) -> MappingRule:
        if unification is None:
            return MappingRule(rule_id, "Task", f"triggering={literal}", (task,), entry="task",
                               consumes=("triggering", "name", "performer"))
        role = unification.value.lower()
        return MappingRule(
            rule_id, "Task", f"triggering={literal}",
            (
                ElementTemplate(role, unification.value),
                ElementTemplate("incoming", TransitionKind.INCOMING.value, source=role, target="task"),
                task,
            ),
            entry=role,
            consumes=("triggering", "name", "performer")
        )

    def branching(rule_id: str, literal: str, split: NodeKind | None) -> MappingRule:
        if split is None:
            return MappingRule(rule_id, "Task", f"branching={literal}", (task,), exit="task",
                               consumes=("branching",))
        role = split.value.lower()
        return MappingRule(
            rule_id, "Task", f"branching={literal}",
            (
                task,
                ElementTemplate("outgoing", TransitionKind.OUTGOING.value, source="task", target=role),
                ElementTemplate(role, split.value),
            ),
            exit=role,
            consumes=("branching",)
        )

    rules = (
        triggering("trig-or", "OR", NodeKind.MERGE),
        triggering("trig-and", "AND", NodeKind.JOIN),
        triggering("trig-none", "NONE", None),
        branching("branch-or", "OR", NodeKind.DECISION),
        branching("branch-and", "AND", NodeKind.FORK),
        branching("branch-none", "NONE", None),
        MappingRule("start", "Start", produces=(ElementTemplate("start", NodeKind.START.value),), exit="start"),
        MappingRule("end", "End", produces=(ElementTemplate("stop", NodeKind.STOP.value),), entry="stop"),
        MappingRule("flow", "Flow", produces=(_FLOW_PASS,), consumes=("source", "target", "guard")),
        MappingRule(
            "performer", "PerformerRef",
            produces=(ElementTemplate("performer", PERFORMER_KIND, copy={"kind": "kind", "name": "name"}),),
            consumes=("kind", "name")
        ),
    )
    return MappingDefinition(
        source_notation="grade-bm",
        rules=rules,
        xor_groups=(("trig-or", "trig-and", "trig-none"), ("branch-or", "branch-and", "branch-none"))
    )


def builtin_umlad_mapping() -> MappingDefinition:
    """UML-AD ⇔ NIBM の組み込み定義（1対1）"""

    def one_one(rule_id: str, source_class: str, kind: NodeKind, copy: Mapping[str, str] | None = None) -> MappingRule:
        template = ElementTemplate(kind.value.lower(), kind.value, copy=dict(copy or {}))
        return MappingRule(rule_id, source_class, produces=(template,), entry=template.role, exit=template.role)

    rules = (
        one_one("action", "Action", NodeKind.TASK, {"label": "name", "performer": "@partition.performer"}),
        one_one("decision", "DecisionNode", NodeKind.DECISION),
        one_one("merge", "MergeNode", NodeKind.MERGE),
        one_one("fork", "ForkNode", NodeKind.FORK),
        one_one("join", "JoinNode", NodeKind.JOIN),
        one_one("initial", "InitialNode", NodeKind.START),
        one_one("final", "ActivityFinalNode", NodeKind.STOP),
        MappingRule("control-flow", "ControlFlow", produces=(_FLOW_PASS,), consumes=("source", "target", "guard")),
        MappingRule(
            "partition", "Partition",
            produces=(ElementTemplate("performer", PERFORMER_KIND, copy={"kind": "kind", "name": "name"}),),
            consumes=("kind", "name")
        ),
    )
    return MappingDefinition(source_notation="uml-ad", rules=rules)


# ---------------------------------------------------------------------------
# 定義の検証
# ---------------------------------------------------------------------------

def validate_definition(
    definition: MappingDefinition,
    classes: Mapping[str, frozenset[str]],
    references: Mapping[str, frozenset[str]]
) -> ValidationReport:
    """
    マッピング定義を表記のクラス情報に照らして検証する

    Args:
        definition: 検証対象
        classes: クラス名 → 属性名
        references: クラス名 → 参照属性名

    Returns:
        違反レポート（element はルールIDまたはクラス名）
    """
    report = ReportBuilder()
    seen: set[str] = set()
    role_kinds: dict[tuple[str, str], str] = {}

    for rule in definition.rules:
        if rule.id in seen:
            report.add(rule.id, "duplicate-rule", f"duplicate rule id {rule.id}")
        seen.add(rule.id)

        if rule.source_class not in classes:
            report.add(rule.id, "unknown-class", f"unknown source class {rule.source_class}")
            continue
        available = classes[rule.source_class]
        refs = references.get(rule.source_class, frozenset())

        try:
            predicate = parse_guard(rule.guard)
            unknown = sorted(predicate.attributes() - available)
            if unknown:
                report.add(rule.id, "guard-attribute", f"guard references unknown attribute {unknown[0]}")
        except GuardSyntaxError as e:
            report.add(rule.id, "guard-syntax", str(e))

        for attr in rule.consumes:
            if attr not in available:
                report.add(rule.id, "consumes-attribute", f"consumes unknown attribute {attr}")

        roles = rule.roles()
        if len(set(roles)) != len(roles):
            report.add(rule.id, "duplicate-role", "role names must be unique within a rule")
        node_roles = {t.role for t in rule.produces if t.is_node}

        for template in rule.produces:
            _check_template(rule, template, node_roles, available, refs, report)
            key = (rule.source_class, template.role)
            if key in role_kinds and role_kinds[key] != template.kind:
                report.add(rule.id, "role-kind", f"role {template.role} changes kind across rules")
            role_kinds.setdefault(key, template.kind)

        for port in (rule.entry, rule.exit):
            if port is not None and port not in node_roles:
                report.add(rule.id, "port-role", f"port {port} is not a node role of the rule")

    grouped: set[str] = set()
    for group in definition.xor_groups:
        classes_in_group = set()
        for rule_id in group:
            if rule_id not in seen:
                report.add(rule_id, "xor-group", f"xor group names unknown rule {rule_id}")
                continue
            if rule_id in grouped:
                report.add(rule_id, "xor-group", f"rule {rule_id} is in more than one xor group")
            grouped.add(rule_id)
            classes_in_group.add(definition.rule(rule_id).source_class)
        if len(classes_in_group) > 1:
            report.add(",".join(group), "xor-group", "xor group spans several source classes")

    covered = {r.source_class for r in definition.rules}
    for cls in classes:
        if cls not in covered:
            report.add(cls, "class-coverage", f"no rule for class {cls}")

    return report.build()


def _check_template(
    rule: MappingRule,
    template: ElementTemplate,
    node_roles: set[str],
    available: frozenset[str],
    refs: frozenset[str],
    report: ReportBuilder
) -> None:
    if template.kind not in TEMPLATE_KINDS:
        report.add(rule.id, "template-kind", f"unknown template kind {template.kind}")
        return

    if template.is_transition:
        if template.source is None or template.target is None:
            report.add(rule.id, "template-endpoints", f"transition role {template.role} needs source and target")
        for expr in (template.source, template.target):
            if expr is not None and not _endpoint_ok(expr, node_roles, refs):
                report.add(rule.id, "endpoint-expression", f"unresolvable endpoint {expr}")
    elif template.source is not None or template.target is not None:
        report.add(rule.id, "template-endpoints", f"role {template.role} is not a transition")

    allowed = COPY_TARGETS[template.kind]
    for target, expr in template.copy.items():
        if target not in allowed:
            report.add(rule.id, "copy-target", f"{template.kind} has no attribute {target}")
        attribute = expr[1:].split(".", 1)[0] if expr.startswith("@") else expr
        if attribute not in available:
            report.add(rule.id, "copy-source", f"copy reads unknown attribute {attribute}")
        if expr.startswith("@") and attribute not in refs:
            report.add(rule.id, "copy-source", f"{attribute} is not a reference attribute")


def _endpoint_ok(expr: str, node_roles: set[str], refs: frozenset[str]) -> bool:
    if not expr.startswith("@"):
        return expr in node_roles
    attribute, _, port = expr[1:].partition(".")
    return attribute in refs and bool(port)


# ---------------------------------------------------------------------------
# シリアライズ
# ---------------------------------------------------------------------------

class TemplateDict(TypedDict, total=False):
    role: str
    kind: str
    source: str
    target: str
    copy: dict[str, str]


class LinkDict(TypedDict, total=False):
    src: str
    rule: str
    out: list[str]
    via: list[str]
    folded: list[str]


def definition_to_dict(definition: MappingDefinition) -> dict[str, Any]:
    rules: list[dict[str, Any]] = []
    for r in definition.rules:
        obj: dict[str, Any] = {"id": r.id, "class": r.source_class, "guard": r.guard}
        produces: list[TemplateDict] = []
        for t in r.produces:
            template: TemplateDict = {"role": t.role, "kind": t.kind}
            if t.source is not None:
                template["source"] = t.source
            if t.target is not None:
                template["target"] = t.target
            if t.copy:
                template["copy"] = dict(t.copy)
            produces.append(template)
        obj["produces"] = produces
        if r.entry is not None:
            obj["entry"] = r.entry
        if r.exit is not None:
            obj["exit"] = r.exit
        if r.consumes:
            obj["consumes"] = list(r.consumes)
        rules.append(obj)
    return {
        "source": definition.source_notation,
        "rules": rules,
        "xor": [list(g) for g in definition.xor_groups],
    }


def dump_definition(definition: MappingDefinition) -> str:
    """マッピング定義をJSONに書き出す"""
    return json.dumps(definition_to_dict(definition), ensure_ascii=False, indent=2) + "\n"


def load_definition(text: str) -> MappingDefinition:
    """
    JSONからマッピング定義を読み込む

    Raises:
        MappingDefinitionError: 形式不正
    """
    try:
        data = json.loads(text)
        rules = tuple(
            MappingRule(
                id=str(obj["id"]),
                source_class=str(obj["class"]),
                guard=str(obj.get("guard", TRUE_GUARD)),
                produces=tuple(
                    ElementTemplate(
                        role=str(t["role"]),
                        kind=str(t["kind"]),
                        source=t.get("source"),
                        target=t.get("target"),
                        copy=dict(t.get("copy", {}))
                    )
                    for t in obj.get("produces", [])
                ),
                entry=obj.get("entry"),
                exit=obj.get("exit"),
                consumes=tuple(obj.get("consumes", []))
            )
            for obj in data["rules"]
        )
        return MappingDefinition(
            source_notation=str(data["source"]),
            rules=rules,
            xor_groups=tuple(tuple(str(r) for r in g) for g in data.get("xor", []))
        )
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as e:
        raise MappingDefinitionError(f"malformed mapping definition: {e}") from e


def trace_to_dict(trace: MappingTrace) -> dict[str, Any]:
    links: list[LinkDict] = []
    for link in trace.links:
        obj: LinkDict = {"src": link.source, "rule": link.rule, "out": list(link.produced)}
        if link.via:
            obj["via"] = list(link.via)
        if link.folded:
            obj["folded"] = list(link.folded)
        links.append(obj)
    return {
        "direction": trace.direction.value,
        "source": trace.source_notation,
        "target": trace.target_notation,
        "links": links,
    }


def dump_trace(trace: MappingTrace) -> str:
    """トレースをJSONに書き出す"""
    return json.dumps(trace_to_dict(trace), ensure_ascii=False, indent=2) + "\n"


def load_trace(text: str) -> MappingTrace:
    """
    JSONからトレースを読み込む

    Raises:
        MappingDefinitionError: 形式不正
    """
    try:
        data = json.loads(text)
        return MappingTrace(
            direction=TraceDirection(data["direction"]),
            links=tuple(
                MappingLink(
                    source=str(obj["src"]),
                    rule=str(obj["rule"]),
                    produced=tuple(obj["out"]),
                    via=tuple(obj.get("via", [])),
                    folded=tuple(obj.get("folded", []))
                )
                for obj in data["links"]
            ),
            source_notation=str(data.get("source", "")),
            target_notation=str(data.get("target", ""))
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise MappingDefinitionError(f"malformed mapping trace: {e}") from e
