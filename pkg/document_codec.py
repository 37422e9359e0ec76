"""
交換ドキュメントの共通コーデック

各表記（nibm / grade-bm / uml-ad）のJSON交換形式に共通する
読み込み・書き出し・構造チェックのヘルパー。
エラーは問題のあるパス（例: tasks[0]）を含む StructuralError で返す。
"""

import json
from enum import Enum
from typing import Any, TypeVar

from exceptions import StructuralError

E = TypeVar("E", bound=Enum)


def load_document(document: str, notation: str) -> dict[str, Any]:
    """
    ドキュメントを読み込み、"process" オブジェクトを返す

    Args:
        document: JSONテキスト
        notation: 期待する表記タグ

    Returns:
        process オブジェクト
    """
    try:
        data = json.loads(document)
    except json.JSONDecodeError as e:
        raise StructuralError(f"malformed document: {e.msg} (line {e.lineno})", "$") from e

    if not isinstance(data, dict):
        raise StructuralError("malformed document: top level must be an object", "$")

    tag = data.get("notation")
    if tag != notation:
        raise StructuralError(f"expected notation {notation!r}, got {tag!r}", "notation")

    process = data.get("process")
    if not isinstance(process, dict):
        raise StructuralError("malformed document: missing process object", "process")
    return process


def dump_document(notation: str, process: dict[str, Any]) -> str:
    """表記タグ付きでシリアライズする（キー順は挿入順、末尾改行あり）"""
    return json.dumps({"notation": notation, "process": process}, ensure_ascii=False, indent=2) + "\n"


def require_list(obj: dict[str, Any], key: str, path: str, required: bool = True) -> list[Any]:
    value = obj.get(key)
    if value is None and not required:
        return []
    if not isinstance(value, list):
        raise StructuralError(f"malformed document: {key} must be a list at {path}", path)
    return value


def require_object(value: Any, path: str) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise StructuralError(f"malformed document: object expected at {path}", path)
    return value


def require_text(obj: dict[str, Any], key: str, path: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise StructuralError(f"missing {key} at {path}", path)
    return value


def optional_text(obj: dict[str, Any], key: str, path: str) -> str | None:
    value = obj.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise StructuralError(f"{key} must be text at {path}", path)
    return value


def parse_enum(enum_cls: type[E], value: Any, attribute: str, path: str) -> E:
    """閉じた列挙値をパースする（不正値は "illegal <attr> value at <path>"）"""
    try:
        return enum_cls(value)
    except ValueError:
        raise StructuralError(f"illegal {attribute} value at {path}", path) from None


def check_unique(ids: list[tuple[str, str]]) -> None:
    """
    ID重複をチェックする

    Args:
        ids: (id, パス) のリスト
    """
    seen: set[str] = set()
    for element_id, path in ids:
        if element_id in seen:
            raise StructuralError(f"duplicate id {element_id} at {path}", path)
        seen.add(element_id)


def check_endpoint(known: set[str], element_id: str, end: str, path: str) -> None:
    """フローの端点が解決できることを確認する"""
    if element_id not in known:
        raise StructuralError(f"dangling {end} {element_id} at {path}", path)
