"""
ガード述語

マッピングルールの適用条件を表す小さな述語言語。

    guard       := conjunction EOF
    conjunction := unary (("and" | "∧") unary)*
    unary       := negation | group | "true" | equality
    negation    := ("not" | "¬") unary
    group       := "(" conjunction ")"
    equality    := identifier "=" literal

属性と列挙リテラルの等値比較・論理積・否定のみを持ち、副作用はない。
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Union

from arpeggio import EOF, NoMatch, ParserPython, PTNodeVisitor, Terminal, ZeroOrMore, visit_parse_tree
from arpeggio import RegExMatch as _

from exceptions import GuardSyntaxError

TRUE_GUARD = "true"


@dataclass(frozen=True)
class Equality:
    attribute: str
    literal: str


@dataclass(frozen=True)
class Negation:
    operand: GuardNode


@dataclass(frozen=True)
class Conjunction:
    operands: tuple[GuardNode, ...]


@dataclass(frozen=True)
class Always:
    pass


GuardNode = Union[Equality, Negation, Conjunction, Always]
_NODE_TYPES = (Equality, Negation, Conjunction, Always)


# ---------------------------------------------------------------------------
# 文法
# ---------------------------------------------------------------------------

def identifier():  # type: ignore[no-untyped-def]
    return _(r"(?!(and|not|true)\b)[A-Za-z_][A-Za-z0-9_]*")


def literal():  # type: ignore[no-untyped-def]
    return _(r"[A-Za-z0-9_][A-Za-z0-9_\-]*")


def equality():  # type: ignore[no-untyped-def]
    return identifier, "=", literal


def constant():  # type: ignore[no-untyped-def]
    return _(r"true\b")


def negation():  # type: ignore[no-untyped-def]
    return [_(r"not\b"), "¬"], unary


def group():  # type: ignore[no-untyped-def]
    return "(", conjunction, ")"


def unary():  # type: ignore[no-untyped-def]
    return [negation, group, constant, equality]


def conjunction():  # type: ignore[no-untyped-def]
    return unary, ZeroOrMore([_(r"and\b"), "∧"], unary)


def guard():  # type: ignore[no-untyped-def]
    return conjunction, EOF


class _GuardBuilder(PTNodeVisitor):
    """構文木 → GuardNode"""

    def visit__default__(self, node: Any, children: Any) -> Any:
        # 無名の繰り返し・選択は GuardNode のリストとして親に渡す
        if isinstance(node, Terminal):
            return super().visit__default__(node, children)
        return _nodes(children)

    def visit_identifier(self, node: Any, children: Any) -> str:
        return str(node.value)

    def visit_literal(self, node: Any, children: Any) -> str:
        return str(node.value)

    def visit_equality(self, node: Any, children: Any) -> Equality:
        # "=" が抑制されるかどうかに依存しないよう両端を取る
        return Equality(children[0], children[-1])

    def visit_constant(self, node: Any, children: Any) -> Always:
        return Always()

    def visit_negation(self, node: Any, children: Any) -> Negation:
        return Negation(_nodes(children)[-1])

    def visit_group(self, node: Any, children: Any) -> GuardNode:
        return _nodes(children)[0]

    def visit_unary(self, node: Any, children: Any) -> GuardNode:
        return _nodes(children)[0]

    def visit_conjunction(self, node: Any, children: Any) -> GuardNode:
        operands = _nodes(children)
        if len(operands) == 1:
            return operands[0]
        return Conjunction(tuple(operands))

    def visit_guard(self, node: Any, children: Any) -> GuardNode:
        return _nodes(children)[0]


def _nodes(children: Any) -> list[GuardNode]:
    found: list[GuardNode] = []
    for c in children:
        if isinstance(c, _NODE_TYPES):
            found.append(c)
        elif isinstance(c, list):
            found.extend(_nodes(c))
    return found


@lru_cache(maxsize=1)
def _parser() -> ParserPython:
    return ParserPython(guard)


# ---------------------------------------------------------------------------
# 公開API
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GuardPredicate:
    """パース済みのガード述語"""
    expression: str
    root: GuardNode

    def evaluate(self, attributes: Mapping[str, str | None]) -> bool:
        """属性値に対して評価する（存在しない属性は一致しない）"""
        return _evaluate(self.root, attributes)

    def equalities(self) -> dict[str, str]:
        """
        述語が真であるために必須の等値条件

        トップレベルの論理積に現れる肯定の等値比較だけを返す。
        逆方向の射影で元の属性値を復元するのに使う。
        """
        if isinstance(self.root, Equality):
            return {self.root.attribute: self.root.literal}
        if isinstance(self.root, Conjunction):
            return {
                op.attribute: op.literal for op in self.root.operands if isinstance(op, Equality)
            }
        return {}

    def attributes(self) -> set[str]:
        """参照している属性名"""
        return _attributes(self.root)


@lru_cache(maxsize=256)
def parse_guard(expression: str) -> GuardPredicate:
    """
    ガード式をパースする

    Args:
        expression: 例 "triggering=OR", "not branching=NONE and triggering=AND"

    Returns:
        GuardPredicate

    Raises:
        GuardSyntaxError: 構文エラー（位置付き）
    """
    text = expression.strip() or TRUE_GUARD
    try:
        tree = _parser().parse(text)
    except NoMatch as e:
        position = int(getattr(e, "position", 0))
        raise GuardSyntaxError(expression, position, "unexpected input") from None
    return GuardPredicate(expression, visit_parse_tree(tree, _GuardBuilder()))


def _evaluate(node: GuardNode, attributes: Mapping[str, str | None]) -> bool:
    if isinstance(node, Always):
        return True
    if isinstance(node, Equality):
        return attributes.get(node.attribute) == node.literal
    if isinstance(node, Negation):
        return not _evaluate(node.operand, attributes)
    return all(_evaluate(op, attributes) for op in node.operands)


def _attributes(node: GuardNode) -> set[str]:
    if isinstance(node, Equality):
        return {node.attribute}
    if isinstance(node, Negation):
        return _attributes(node.operand)
    if isinstance(node, Conjunction):
        return set().union(*(_attributes(op) for op in node.operands))
    return set()
