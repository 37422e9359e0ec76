"""
表記モデルの汎用ビュー

マッピングエンジンは各表記のモデルを「クラス名 + 属性」を持つ要素の並びとして扱う。
表記ごとのアダプタがモデル ⇔ 要素列の変換を担う。
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Protocol

from validation_report import ValidationReport


@dataclass(frozen=True)
class SourceElement:
    """
    表記モデルの1要素

    attributes にはスカラー属性（列挙値・名前・ガード）と
    参照属性（source / target / performer などの要素ID）を同居させる。
    """
    id: str
    cls: str
    attributes: Mapping[str, str | None] = field(default_factory=dict)

    def get(self, name: str) -> str | None:
        return self.attributes.get(name)


class NotationAdapter(Protocol):
    """表記アダプタのプロトコル"""

    notation: str
    # クラス名 → 利用可能な属性名
    classes: Mapping[str, frozenset[str]]
    # クラス名 → 参照属性名（値が要素ID）
    references: Mapping[str, frozenset[str]]

    def model_type(self) -> type[Any]:
        ...

    def elements(self, model: Any) -> list[SourceElement]:
        ...

    def build(self, name: str, elements: Sequence[SourceElement]) -> Any:
        ...

    def validate(self, model: Any) -> ValidationReport:
        ...
