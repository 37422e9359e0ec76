"""
モデル入出力

交換ドキュメントの表記タグ（"notation"）を見て読み込み・書き出し・検証を振り分ける。
"""

from __future__ import annotations

import json
from collections.abc import Callable
from pathlib import Path
from typing import Any

from exceptions import DataFormatError, StructuralError
from grade_notation import NOTATION as GRADE_NOTATION, GradeProcess, read_grade, validate_grade, write_grade
from logger import get_logger
from mapping_engine import builtin_mapping, project_to_nibm
from nibm_model import NOTATION as NIBM_NOTATION, NibmProcess, read_nibm, validate_nibm, write_nibm
from umlad_notation import NOTATION as UMLAD_NOTATION, UmlActivity, read_umlad, validate_umlad, write_umlad
from validation_report import ValidationReport

log = get_logger("model_io")

NOTATIONS = (GRADE_NOTATION, UMLAD_NOTATION, NIBM_NOTATION)

READERS: dict[str, Callable[[str], Any]] = {
    GRADE_NOTATION: read_grade,
    UMLAD_NOTATION: read_umlad,
    NIBM_NOTATION: read_nibm,
}

_MODEL_TYPES: dict[type, str] = {
    GradeProcess: GRADE_NOTATION,
    UmlActivity: UMLAD_NOTATION,
    NibmProcess: NIBM_NOTATION,
}


def detect_notation(document: str) -> str:
    """
    ドキュメントの表記タグを読む

    Raises:
        StructuralError: JSONとして読めない、タグがない
        DataFormatError: 未知の表記
    """
    try:
        data = json.loads(document)
    except json.JSONDecodeError as e:
        raise StructuralError(f"malformed document: {e.msg} (line {e.lineno})", "$") from e
    if not isinstance(data, dict) or not isinstance(data.get("notation"), str):
        raise StructuralError("malformed document: missing notation tag", "notation")
    return check_notation(data["notation"])


def check_notation(notation: str) -> str:
    if notation not in READERS:
        raise DataFormatError(f"unknown notation {notation!r} (expected one of {', '.join(NOTATIONS)})")
    return notation


def notation_of(model: Any) -> str:
    """モデルの型から表記IDを求める"""
    for model_type, notation in _MODEL_TYPES.items():
        if isinstance(model, model_type):
            return notation
    raise DataFormatError(f"not a process model: {type(model).__name__}")


def read_model(document: str, notation: str | None = None) -> tuple[str, Any]:
    """
    ドキュメントを読み込む

    Args:
        document: 交換ドキュメント
        notation: 表記（None なら自動判定）

    Returns:
        (表記ID, モデル)
    """
    resolved = check_notation(notation) if notation else detect_notation(document)
    return resolved, READERS[resolved](document)


def load_model(path: str | Path, notation: str | None = None) -> tuple[str, Any]:
    """
    ファイルからモデルを読み込む

    Raises:
        DataFormatError: ファイルが読めない、未知の表記
        StructuralError: ドキュメントの構造エラー
    """
    text = read_text(path)
    resolved, model = read_model(text, notation)
    log.info(f"{path}: {resolved}")
    return resolved, model


def read_text(path: str | Path) -> str:
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except FileNotFoundError:
        raise DataFormatError("ファイルが見つかりません", str(path)) from None
    except (OSError, UnicodeDecodeError) as e:
        raise DataFormatError(f"ファイル読み込みエラー: {e}", str(path)) from e


def write_text(path: str | Path, text: str) -> None:
    """UTF-8・LF 改行で書き出す（親ディレクトリは作成する）"""
    output = Path(path)
    try:
        output.parent.mkdir(parents=True, exist_ok=True)
        with open(output, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise DataFormatError(f"ファイル書き込みエラー: {e}", str(path)) from e


def write_model(model: Any) -> str:
    """モデルを交換ドキュメントに書き出す"""
    if isinstance(model, GradeProcess):
        return write_grade(model)
    if isinstance(model, UmlActivity):
        return write_umlad(model)
    if isinstance(model, NibmProcess):
        return write_nibm(model)
    raise DataFormatError(f"not a process model: {type(model).__name__}")


def validate_model(model: Any) -> ValidationReport:
    """モデルの表記に応じた検証器を呼ぶ"""
    if isinstance(model, GradeProcess):
        return validate_grade(model)
    if isinstance(model, UmlActivity):
        return validate_umlad(model)
    if isinstance(model, NibmProcess):
        return validate_nibm(model)
    raise DataFormatError(f"not a process model: {type(model).__name__}")


def to_nibm(model: Any) -> NibmProcess:
    """任意の表記モデルを組み込みマッピングで NIBM に射影する（NIBM はそのまま）"""
    if isinstance(model, NibmProcess):
        return model
    nibm, _ = project_to_nibm(model, builtin_mapping(notation_of(model)))
    return nibm
