"""
検証レポート

3つの検証器（NIBM / GRADE / UML-AD）と totality チェックが共通で返す
違反リストを定義する。
"""

from dataclasses import dataclass, field
from typing import TypedDict


class ViolationDict(TypedDict):
    """違反のシリアライズ形式"""
    element: str
    rule: str
    message: str


@dataclass(frozen=True)
class Violation:
    """1件のルール違反"""
    element_id: str
    rule: str
    message: str

    def describe(self) -> str:
        return f"[{self.rule}] {self.element_id}: {self.message}"

    def to_dict(self) -> ViolationDict:
        return {"element": self.element_id, "rule": self.rule, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    """違反のリスト（空なら妥当）"""
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> list[str]:
        """違反したルールIDの一覧（出現順）"""
        return [v.rule for v in self.violations]

    def messages(self) -> list[str]:
        return [v.message for v in self.violations]

    def for_element(self, element_id: str) -> list[Violation]:
        return [v for v in self.violations if v.element_id == element_id]

    def to_dict(self) -> list[ViolationDict]:
        return [v.to_dict() for v in self.violations]


class ReportBuilder:
    """検証器が違反を積み上げるためのヘルパー"""

    def __init__(self) -> None:
        self._violations: list[Violation] = []

    def add(self, element_id: str, rule: str, message: str) -> None:
        self._violations.append(Violation(element_id, rule, message))

    def build(self) -> ValidationReport:
        return ValidationReport(tuple(self._violations))
