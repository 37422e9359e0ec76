"""
マッピングエンジン

MappingDefinition を解釈して、表記モデル ⇔ NIBM の射影と
表記間の導出マッピングを行い、インスタンスレベルのトレースを出力する。

- project_to_nibm: ルールを定義順に発火し、テンプレートから NIBM 要素を合成する
- project_from_nibm: アンカー要素ごとに XOR グループ内で最大のパターンを選んで吸収する
- derive: 2つの射影を NIBM 正規化を挟んで合成する
"""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Callable, Mapping
from dataclasses import dataclass, replace
from typing import Any

from exceptions import (
    InvalidModelError,
    MappingDefinitionError,
    MappingError,
    NonTotalMappingError,
    SynthesisError,
    UnabsorbableControlError,
    XorViolationError,
)
from grade_notation import GradeAdapter
from guard_predicate import parse_guard
from logger import get_logger
from mapping_definition import (
    ENTRY_PORT,
    EXIT_PORT,
    NODE_KINDS,
    PERFORMER_KIND,
    TRANSITION_KINDS,
    ElementTemplate,
    MappingDefinition,
    MappingLink,
    MappingRule,
    MappingTrace,
    TraceDirection,
    builtin_grade_mapping,
    builtin_umlad_mapping,
    validate_definition,
)
from nibm_model import (
    CONTROL_KINDS,
    NOTATION as NIBM_NOTATION,
    NibmNode,
    NibmProcess,
    NibmTransition,
    NodeKind,
    Performer,
    PerformerKind,
    TransitionKind,
    classify_transition,
    normalize_with_mapping,
    validate_nibm,
)
from source_view import NotationAdapter, SourceElement
from umlad_notation import UmlAdapter
from validation_report import ReportBuilder, ValidationReport

log = get_logger("mapping_engine")

RULE_TRACE_TOTALITY = "trace-totality"

ADAPTERS: dict[str, NotationAdapter] = {
    GradeAdapter.notation: GradeAdapter(),
    UmlAdapter.notation: UmlAdapter(),
}

BUILTIN_MAPPINGS: dict[str, Callable[[], MappingDefinition]] = {
    GradeAdapter.notation: builtin_grade_mapping,
    UmlAdapter.notation: builtin_umlad_mapping,
}


@dataclass(frozen=True)
class ProjectionOptions:
    """射影オプション"""
    # 吸収できない制御ノードを空タスクなどで合成するか
    allow_synthetic: bool = False


def adapter_for(notation: str) -> NotationAdapter:
    """表記IDからアダプタを取得する"""
    try:
        return ADAPTERS[notation]
    except KeyError:
        raise MappingError(f"unknown notation {notation!r}") from None


def adapter_for_model(model: Any) -> NotationAdapter:
    """モデルの型からアダプタを取得する"""
    for adapter in ADAPTERS.values():
        if isinstance(model, adapter.model_type()):
            return adapter
    raise MappingError(f"no notation adapter for {type(model).__name__}")


def builtin_mapping(notation: str) -> MappingDefinition:
    """表記の組み込みマッピング定義"""
    try:
        return BUILTIN_MAPPINGS[notation]()
    except KeyError:
        raise MappingError(f"no builtin mapping for {notation!r}") from None


def _checked_adapter(definition: MappingDefinition) -> NotationAdapter:
    adapter = adapter_for(definition.source_notation)
    report = validate_definition(definition, adapter.classes, adapter.references)
    if not report.ok:
        raise MappingDefinitionError(f"invalid mapping definition for {definition.source_notation}", report)
    return adapter


# ---------------------------------------------------------------------------
# 表記 → NIBM
# ---------------------------------------------------------------------------

def project_to_nibm(model: Any, definition: MappingDefinition) -> tuple[NibmProcess, MappingTrace]:
    """
    表記モデルを NIBM に射影する

    Args:
        model: 表記モデル（definition.source_notation のもの）
        definition: マッピング定義

    Returns:
        (NIBMモデル, toNibm トレース)

    Raises:
        InvalidModelError: 入力モデルが検証を通らない
        NonTotalMappingError: どのルールにもマッチしない要素がある
        XorViolationError: 同一XORグループの複数ルールがマッチした
        SynthesisError: 合成した NIBM が validate_nibm を通らない
    """
    adapter = _checked_adapter(definition)
    if not isinstance(model, adapter.model_type()):
        raise MappingError(f"model is not a {adapter.notation} model")
    report = adapter.validate(model)
    if not report.ok:
        raise InvalidModelError(f"{adapter.notation} model failed validation", report)

    elements = adapter.elements(model)
    synth = _Synthesis()

    for element in elements:
        for rule in _fire(element, definition):
            synth.apply(element, rule)

    process = synth.build(model.name)
    trace = MappingTrace(
        TraceDirection.TO_NIBM, tuple(synth.links), adapter.notation, NIBM_NOTATION
    )
    result = validate_nibm(process)
    if not result.ok:
        raise SynthesisError("synthesized NIBM model is not well-formed", result, trace)
    log.info(f"{adapter.notation} → nibm: {len(elements)} elements, {len(process.nodes)} nodes")
    return process, trace


def _fire(element: SourceElement, definition: MappingDefinition) -> list[MappingRule]:
    fired = [
        rule for rule in definition.rules_for(element.cls)
        if parse_guard(rule.guard).evaluate(element.attributes)
    ]
    if not fired:
        raise NonTotalMappingError(element.id, element.cls)

    by_group: dict[int, list[str]] = defaultdict(list)
    for rule in fired:
        group = definition.group_of(rule.id)
        if group is not None:
            by_group[group].append(rule.id)
    for rule_ids in by_group.values():
        if len(rule_ids) > 1:
            raise XorViolationError(element.id, rule_ids)

    log.debug(f"{element.cls} {element.id}: {', '.join(r.id for r in fired)}")
    return fired


class _Synthesis:
    """テンプレートから NIBM 要素を積み上げる作業領域"""

    def __init__(self) -> None:
        # (元要素ID, ロール) → NIBM要素ID。同じロールは同じ要素を共有する（多重度 0..1）
        self.roles: dict[tuple[str, str], str] = {}
        self.kinds: dict[str, str] = {}
        self.order: list[str] = []
        self.ports: dict[str, dict[str, str]] = defaultdict(dict)
        self.pending: list[tuple[SourceElement, ElementTemplate]] = []
        self.links: list[MappingLink] = []
        self._last_link: dict[str, int] = {}

    def apply(self, element: SourceElement, rule: MappingRule) -> None:
        created: list[str] = []
        for i, template in enumerate(rule.produces):
            key = (element.id, template.role)
            if key not in self.roles:
                nibm_id = f"{element.id}.{rule.id}.{i}"
                self.roles[key] = nibm_id
                self.kinds[nibm_id] = template.kind
                self.order.append(nibm_id)
                created.append(nibm_id)
            self.pending.append((element, template))

        for port, role in ((ENTRY_PORT, rule.entry), (EXIT_PORT, rule.exit)):
            if role is None:
                continue
            nibm_id = self.roles[(element.id, role)]
            current = self.ports[element.id].get(port)
            if current is not None and current != nibm_id:
                raise MappingError(f"conflicting {port} ports on {element.id}", rule.id)
            self.ports[element.id][port] = nibm_id

        last = self._last_link.get(element.id)
        if created or last is None:
            self._last_link[element.id] = len(self.links)
            self.links.append(MappingLink(element.id, rule.id, tuple(created)))
        else:
            link = self.links[last]
            self.links[last] = replace(link, folded=link.folded + (rule.id,))

    def resolve(self, element: SourceElement, expr: str) -> str:
        """端点式・参照式を NIBM 要素IDに解決する"""
        if not expr.startswith("@"):
            return self.roles[(element.id, expr)]
        attribute, _, port = expr[1:].partition(".")
        ref = element.get(attribute)
        if ref is None:
            raise MappingError(f"{element.id} has no {attribute}", expr)
        if port in (ENTRY_PORT, EXIT_PORT):
            try:
                return self.ports[ref][port]
            except KeyError:
                raise MappingError(f"{ref} exposes no {port} port", expr) from None
        try:
            return self.roles[(ref, port)]
        except KeyError:
            raise MappingError(f"{ref} has no {port} role", expr) from None

    def build(self, name: str) -> NibmProcess:
        attrs: dict[str, dict[str, str]] = defaultdict(dict)
        endpoints: dict[str, tuple[str, str]] = {}
        for element, template in self.pending:
            nibm_id = self.roles[(element.id, template.role)]
            for target, expr in template.copy.items():
                value = self._copy_value(element, expr)
                if value is not None:
                    attrs[nibm_id][target] = value
            if template.is_transition and nibm_id not in endpoints:
                assert template.source is not None and template.target is not None
                endpoints[nibm_id] = (self.resolve(element, template.source), self.resolve(element, template.target))

        nodes: list[NibmNode] = []
        transitions: list[NibmTransition] = []
        performers: list[Performer] = []
        for nibm_id in self.order:
            kind = self.kinds[nibm_id]
            values = attrs.get(nibm_id, {})
            if kind in NODE_KINDS:
                nodes.append(NibmNode(nibm_id, NodeKind(kind), values.get("label"), values.get("performer")))
            elif kind in TRANSITION_KINDS:
                source, target = endpoints[nibm_id]
                transition_kind = TransitionKind(kind)
                if transition_kind == TransitionKind.PASS:
                    transition_kind = classify_transition(
                        NodeKind(self.kinds[source]), NodeKind(self.kinds[target])
                    )
                transitions.append(NibmTransition(nibm_id, transition_kind, source, target, values.get("guard")))
            else:
                performers.append(Performer(nibm_id, PerformerKind(values.get("kind")), values.get("name", "")))

        return NibmProcess(
            id=name, name=name, nodes=tuple(nodes), transitions=tuple(transitions), performers=tuple(performers)
        )

    def _copy_value(self, element: SourceElement, expr: str) -> str | None:
        if not expr.startswith("@"):
            return element.get(expr)
        attribute = expr[1:].partition(".")[0]
        if element.get(attribute) is None:
            return None
        return self.resolve(element, expr)


# ---------------------------------------------------------------------------
# NIBM → 表記
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Anchor:
    source_class: str
    role: str
    kind: str


def _anchors(definition: MappingDefinition) -> dict[str, _Anchor]:
    """
    クラスごとのアンカー（そのクラスの全ルールに現れるロール）を求める

    Returns:
        アンカーの NIBM 種別 → _Anchor

    Raises:
        MappingDefinitionError: アンカーがない、または種別が複数クラスで重複する
    """
    anchors: dict[str, _Anchor] = {}
    for cls in definition.source_classes():
        rules = definition.rules_for(cls)
        common = [t for t in rules[0].produces if all(_same_role(r, t) for r in rules)]
        if not common:
            raise MappingDefinitionError(f"class {cls} has no inverse anchor")
        template = common[0]
        if template.kind in anchors:
            raise MappingDefinitionError(f"ambiguous inverse anchor {template.kind}")
        anchors[template.kind] = _Anchor(cls, template.role, template.kind)
    return anchors


def _same_role(rule: MappingRule, template: ElementTemplate) -> bool:
    other = rule.template(template.role)
    return other is not None and other.kind == template.kind


def _selection_groups(definition: MappingDefinition, cls: str) -> list[list[MappingRule]]:
    """クラスのルールを XOR グループ単位にまとめる（グループ外のルールは単独）"""
    groups: list[list[MappingRule]] = []
    seen: dict[int, int] = {}
    for rule in definition.rules_for(cls):
        group = definition.group_of(rule.id)
        if group is None:
            groups.append([rule])
        elif group in seen:
            groups[seen[group]].append(rule)
        else:
            seen[group] = len(groups)
            groups.append([rule])
    return groups


def _kind_matches(template_kind: str, actual: str) -> bool:
    # Pass テンプレートは Incoming / Outgoing にもマッチする（種別は端点から導出されるため）
    return template_kind == TransitionKind.PASS.value or template_kind == actual


class _Projection:
    """NIBM からの逆射影の作業領域"""

    def __init__(self, model: NibmProcess) -> None:
        self.model = model
        self.claimed: dict[str, str] = {}
        self.classes: dict[str, str] = {}
        self.attrs: dict[str, dict[str, str | None]] = {}
        self.order: list[str] = []
        self.entry_owner: dict[str, str] = {}
        self.exit_owner: dict[str, str] = {}
        self.links: list[MappingLink] = []
        self._link_index: dict[str, int] = {}
        self._transitions = {t.id: t for t in model.transitions}
        self._performers = {p.id: p for p in model.performers}

    def create(self, element_id: str, cls: str) -> None:
        self.classes[element_id] = cls
        self.attrs[element_id] = {}
        self.order.append(element_id)

    def available(self, nibm_id: str, owner: str) -> bool:
        return self.claimed.get(nibm_id, owner) == owner

    def bind(self, nibm_id: str, owner: str, rule_id: str) -> None:
        self.claimed[nibm_id] = owner
        index = self._link_index.get(nibm_id)
        if index is None:
            self._link_index[nibm_id] = len(self.links)
            self.links.append(MappingLink(nibm_id, rule_id, (owner,)))
        else:
            link = self.links[index]
            if rule_id != link.rule and rule_id not in link.folded:
                self.links[index] = replace(link, folded=link.folded + (rule_id,))

    def nibm_value(self, nibm_id: str, attribute: str) -> str | None:
        if self.model.has_node(nibm_id):
            node = self.model.node(nibm_id)
            return {"label": node.label, "performer": node.performer}.get(attribute)
        if nibm_id in self._transitions:
            return self._transitions[nibm_id].guard if attribute == "guard" else None
        performer = self._performers.get(nibm_id)
        if performer is None:
            return None
        return {"kind": performer.kind.value, "name": performer.name}.get(attribute)

    def apply(self, element_id: str, rule: MappingRule, binding: Mapping[str, str]) -> None:
        """マッチしたルールを要素に適用する（属性復元・ポート・コピーの逆写像）"""
        values = self.attrs[element_id]
        values.update(parse_guard(rule.guard).equalities())
        for nibm_id in binding.values():
            self.bind(nibm_id, element_id, rule.id)
        if rule.entry is not None:
            self.entry_owner[binding[rule.entry]] = element_id
        if rule.exit is not None:
            self.exit_owner[binding[rule.exit]] = element_id
        for template in rule.produces:
            if template.role in binding:
                self.invert_copies(element_id, template, binding[template.role])

    def invert_copies(self, element_id: str, template: ElementTemplate, nibm_id: str) -> None:
        values = self.attrs[element_id]
        for target, expr in template.copy.items():
            value = self.nibm_value(nibm_id, target)
            if not expr.startswith("@"):
                if value is not None:
                    values[expr] = value
                continue
            attribute = expr[1:].partition(".")[0]
            values[attribute] = self.claimed.get(value, value) if value is not None else None

    def match(self, rule: MappingRule, anchor: _Anchor, anchor_id: str, owner: str) -> dict[str, str] | None:
        """
        アンカーから局所テンプレートの遷移を辿ってルールのパターンを照合する

        Returns:
            ロール → NIBM要素ID（マッチしない場合は None）
        """
        binding = {anchor.role: anchor_id}
        role_kinds = {t.role: t.kind for t in rule.produces}
        local = [
            t for t in rule.produces
            if t.is_transition and t.source is not None and t.target is not None
            and not t.source.startswith("@") and not t.target.startswith("@")
        ]
        required = {t.role for t in rule.produces if not t.is_transition} | {t.role for t in local}

        changed = True
        while changed:
            changed = False
            for template in local:
                if template.role in binding:
                    continue
                assert template.source is not None and template.target is not None
                source_id, target_id = binding.get(template.source), binding.get(template.target)
                if source_id is None and target_id is None:
                    continue
                forward = source_id is not None
                flows = self.model.outflows(source_id) if source_id is not None else self.model.inflows(target_id or "")
                other_role = template.target if forward else template.source
                for flow in flows:
                    if not _kind_matches(template.kind, flow.kind.value) or not self.available(flow.id, owner):
                        continue
                    other_id = flow.target if forward else flow.source
                    if other_role in binding:
                        if binding[other_role] != other_id:
                            continue
                    elif (
                        self.model.node(other_id).kind.value != role_kinds[other_role]
                        or not self.available(other_id, owner)
                        or other_id in binding.values()
                    ):
                        continue
                    binding[template.role] = flow.id
                    binding[other_role] = other_id
                    changed = True
                    break

        if not required <= binding.keys():
            return None
        return binding


def project_from_nibm(
    model: NibmProcess,
    definition: MappingDefinition,
    options: ProjectionOptions | None = None
) -> tuple[Any, MappingTrace]:
    """
    NIBM モデルを表記モデルに逆射影する

    GRADE では Merge/Join → Incoming → Task をタスクの起動条件に、
    Task → Outgoing → Decision/Fork を分岐に吸収する。
    吸収できない制御ノードは allow_synthetic 指定時のみ合成要素に展開する。

    Args:
        model: validate_nibm を通る NIBM モデル
        definition: マッピング定義
        options: 射影オプション

    Returns:
        (表記モデル, fromNibm トレース)

    Raises:
        InvalidModelError: NIBM モデルが検証を通らない
        UnabsorbableControlError: 吸収できない制御ノード（allow_synthetic なし）
        NonTotalMappingError: 逆写像の対象がない NIBM 要素
    """
    options = options or ProjectionOptions()
    adapter = _checked_adapter(definition)
    report = validate_nibm(model)
    if not report.ok:
        raise InvalidModelError("NIBM model failed validation", report)

    anchors = _anchors(definition)
    work = _Projection(model)

    # 実行者 → ノード → 合成 → 遷移 の順に確定させる
    performer_anchor = anchors.get(PERFORMER_KIND)
    for performer in model.performers:
        if performer_anchor is None:
            raise NonTotalMappingError(performer.id, PERFORMER_KIND)
        _absorb(work, definition, performer_anchor, performer.id)

    for node in model.nodes:
        anchor = anchors.get(node.kind.value)
        if anchor is not None:
            _absorb(work, definition, anchor, node.id)

    for node in model.nodes:
        if node.id in work.claimed:
            continue
        if not options.allow_synthetic:
            if node.kind in CONTROL_KINDS:
                raise UnabsorbableControlError(node.id, node.kind.value)
            raise NonTotalMappingError(node.id, node.kind.value)
        _synthesize(work, definition, anchors, node)

    transition_anchors = [a for kind, a in anchors.items() if kind in TRANSITION_KINDS]
    for transition in model.transitions:
        if transition.id in work.claimed:
            continue
        anchor = next((a for a in transition_anchors if _kind_matches(a.kind, transition.kind.value)), None)
        if anchor is None:
            raise NonTotalMappingError(transition.id, transition.kind.value)
        _absorb_transition(work, definition, anchor, transition)

    elements = [
        SourceElement(element_id, work.classes[element_id], dict(work.attrs[element_id]))
        for element_id in work.order
    ]
    trace = MappingTrace(TraceDirection.FROM_NIBM, tuple(work.links), NIBM_NOTATION, adapter.notation)
    result = adapter.build(model.name, elements)
    report = adapter.validate(result)
    if not report.ok:
        raise SynthesisError(f"projected {adapter.notation} model is not valid", report, trace)
    log.info(f"nibm → {adapter.notation}: {len(model.nodes)} nodes, {len(elements)} elements")
    return result, trace


def _absorb(work: _Projection, definition: MappingDefinition, anchor: _Anchor, anchor_id: str) -> None:
    owner = anchor_id
    work.create(owner, anchor.source_class)
    for group in _selection_groups(definition, anchor.source_class):
        matches = [
            (rule, binding) for rule in group
            if (binding := work.match(rule, anchor, anchor_id, owner)) is not None
        ]
        if not matches:
            raise NonTotalMappingError(anchor_id, anchor.kind)
        # 最大のパターンを優先（同数なら定義順）
        rule, binding = max(matches, key=lambda m: len(m[1]))
        log.debug(f"{anchor.kind} {anchor_id}: {rule.id}")
        work.apply(owner, rule, binding)


def _synthesize(
    work: _Projection,
    definition: MappingDefinition,
    anchors: Mapping[str, _Anchor],
    node: NibmNode
) -> None:
    rule = next(
        (r for r in definition.rules
         if any(t.kind == node.kind.value for t in r.produces)
         and any(a.source_class == r.source_class and a.kind in NODE_KINDS for a in anchors.values())),
        None
    )
    if rule is None:
        raise UnabsorbableControlError(node.id, node.kind.value)

    anchor = next(a for a in anchors.values() if a.source_class == rule.source_class)
    owner = f"syn-{node.id}"
    work.create(owner, rule.source_class)
    values = work.attrs[owner]
    for group in _selection_groups(definition, rule.source_class):
        chosen = rule if rule in group else min(group, key=lambda r: len(r.produces))
        values.update(parse_guard(chosen.guard).equalities())

    anchor_template = rule.template(anchor.role)
    if anchor_template is not None:
        for target, expr in anchor_template.copy.items():
            if target == "label" and not expr.startswith("@"):
                values[expr] = owner

    work.entry_owner[node.id] = owner
    work.exit_owner[node.id] = owner
    work.bind(node.id, owner, rule.id)
    log.warning(f"synthesized {rule.source_class} {owner} for unabsorbable {node.kind.value} {node.id}")


def _absorb_transition(
    work: _Projection,
    definition: MappingDefinition,
    anchor: _Anchor,
    transition: NibmTransition
) -> None:
    owner = transition.id
    rule = next(
        r for r in definition.rules_for(anchor.source_class)
        if (t := r.template(anchor.role)) is not None and _kind_matches(t.kind, transition.kind.value)
    )
    template = rule.template(anchor.role)
    assert template is not None

    work.create(owner, anchor.source_class)
    values = work.attrs[owner]
    values.update(parse_guard(rule.guard).equalities())
    for expr, node_id, owners in (
        (template.source, transition.source, work.exit_owner),
        (template.target, transition.target, work.entry_owner),
    ):
        if expr is None or not expr.startswith("@"):
            continue
        attribute = expr[1:].partition(".")[0]
        if node_id not in owners:
            raise UnabsorbableControlError(node_id, work.model.node(node_id).kind.value)
        values[attribute] = owners[node_id]
    work.invert_copies(owner, template, transition.id)
    work.bind(transition.id, owner, rule.id)


# ---------------------------------------------------------------------------
# 導出マッピング・totality
# ---------------------------------------------------------------------------

def derive(
    model: Any,
    definition_a: MappingDefinition,
    definition_b: MappingDefinition,
    options: ProjectionOptions | None = None
) -> tuple[Any, MappingTrace]:
    """
    表記A → NIBM → 表記B の導出マッピング

    Returns:
        (表記Bモデル, derived トレース（A要素とB要素を共有 NIBM 要素で対応付ける）)
    """
    nibm, trace_a = project_to_nibm(model, definition_a)
    normalized, mapping = normalize_with_mapping(nibm)
    result, trace_b = project_from_nibm(normalized, definition_b, options)
    return result, compose_traces(trace_a.remap_produced(mapping), trace_b)


def compose_traces(first: MappingTrace, second: MappingTrace) -> MappingTrace:
    """
    2つのトレースの関係合成

    first の出力IDと second の入力IDが一致するリンク同士を対応付け、
    (A要素, B要素) ごとに1リンクを作る。via には共有した中間要素IDを入れる。
    """
    by_source: dict[str, list[MappingLink]] = defaultdict(list)
    for link in second.links:
        by_source[link.source].append(link)

    pairs: dict[tuple[str, str], tuple[str, list[str]]] = {}
    for link_a in first.links:
        for shared in link_a.produced:
            for link_b in by_source.get(shared, []):
                for out in link_b.produced:
                    key = (link_a.source, out)
                    if key not in pairs:
                        pairs[key] = (f"{link_a.rule}>{link_b.rule}", [])
                    via = pairs[key][1]
                    if shared not in via:
                        via.append(shared)

    links = tuple(
        MappingLink(source, rule, (out,), via=tuple(via))
        for (source, out), (rule, via) in pairs.items()
    )
    return MappingTrace(TraceDirection.DERIVED, links, first.source_notation, second.target_notation)


def check_totality(trace: MappingTrace, source: Any) -> ValidationReport:
    """
    入力モデルの全要素がトレースのリンク元に現れるかを検査する

    Args:
        trace: 射影のトレース
        source: 射影の入力モデル（NIBM または表記モデル）

    Returns:
        リンクのない要素ごとに1件の違反
    """
    if isinstance(source, NibmProcess):
        element_ids = source.element_ids()
    else:
        element_ids = [e.id for e in adapter_for_model(source).elements(source)]

    linked = set(trace.sources())
    report = ReportBuilder()
    for element_id in element_ids:
        if element_id not in linked:
            report.add(element_id, RULE_TRACE_TOTALITY, f"no trace link for {element_id}")
    return report.build()
