"""
カスタム例外クラス

プロジェクト固有のエラーを定義する。
検証ルール違反は例外ではなく ValidationReport のエントリとして返す。
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from mapping_definition import MappingTrace
    from validation_report import ValidationReport


class BmxError(Exception):
    """プロジェクト基底例外クラス"""

    def __init__(self, message: str, details: str | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def __str__(self) -> str:
        if self.details:
            return f"{self.message}: {self.details}"
        return self.message


class ConfigurationError(BmxError):
    """設定エラー（環境変数の値が不正など）"""
    pass


class DataFormatError(BmxError):
    """入出力ファイルのエラー（ファイルなし、読み込み失敗など）"""

    def __init__(self, message: str, file_path: str | None = None) -> None:
        super().__init__(message, file_path)
        self.file_path = file_path


class StructuralError(BmxError):
    """構造解析エラー（ID重複、参照切れ、列挙値の不正など）"""

    def __init__(self, message: str, path: str | None = None) -> None:
        super().__init__(message)
        self.path = path


class GuardSyntaxError(BmxError):
    """ガード述語の構文エラー"""

    def __init__(self, expression: str, position: int, reason: str) -> None:
        super().__init__(f"guard syntax error at {position}: {reason}", expression)
        self.expression = expression
        self.position = position


class InvalidModelError(BmxError):
    """前提条件となる検証に失敗したモデル"""

    def __init__(self, message: str, report: ValidationReport) -> None:
        super().__init__(message, f"{len(report.violations)} violation(s)")
        self.report = report


class MappingError(BmxError):
    """マッピング処理エラー"""
    pass


class MappingDefinitionError(MappingError):
    """マッピング定義そのものが不正"""

    def __init__(self, message: str, report: ValidationReport | None = None) -> None:
        super().__init__(message)
        self.report = report


class NonTotalMappingError(MappingError):
    """どのルールにもマッチしない要素がある"""

    def __init__(self, element_id: str, element_class: str) -> None:
        super().__init__(f"no rule matches {element_class} {element_id}")
        self.element_id = element_id
        self.element_class = element_class


class XorViolationError(MappingError):
    """同一XORグループの複数ルールが同時にマッチした"""

    def __init__(self, element_id: str, rules: list[str]) -> None:
        super().__init__(
            f"xor violation on {element_id}",
            ", ".join(rules)
        )
        self.element_id = element_id
        self.rules = rules


class UnabsorbableControlError(MappingError):
    """タスク属性に吸収できない制御ノード（allow_synthetic なし）"""

    def __init__(self, node_id: str, kind: str) -> None:
        super().__init__(f"unabsorbable control chain at {kind} {node_id}")
        self.node_id = node_id
        self.kind = kind


class SynthesisError(MappingError):
    """合成したモデルが検証を通らない（トレース付き）"""

    def __init__(
        self,
        message: str,
        report: ValidationReport,
        trace: MappingTrace | None = None
    ) -> None:
        super().__init__(message, "; ".join(v.describe() for v in report.violations))
        self.report = report
        self.trace = trace


def format_error_for_user(error: Exception) -> str:
    """
    ユーザー向けのエラーメッセージをフォーマットする

    Args:
        error: 例外オブジェクト

    Returns:
        ユーザー向けのエラーメッセージ
    """
    if isinstance(error, ConfigurationError):
        return f"❌ 設定エラー: {error}\n   解決方法: BMX_MAX_STATES などの環境変数を確認してください"

    if isinstance(error, DataFormatError):
        msg = f"❌ 入出力エラー: {error.message}"
        if error.file_path:
            msg += f"\n   ファイル: {error.file_path}"
        return msg

    if isinstance(error, StructuralError):
        return f"❌ 構造エラー: {error.message}"

    if isinstance(error, InvalidModelError):
        lines = [f"❌ モデル検証エラー: {error.message}"]
        lines.extend(f"   - {v.describe()}" for v in error.report.violations)
        return "\n".join(lines)

    if isinstance(error, UnabsorbableControlError):
        return (
            f"❌ マッピングエラー: {error.message}\n"
            "   解決方法: --allow-synthetic を指定すると空タスクを合成して変換します"
        )

    if isinstance(error, SynthesisError):
        lines = [f"❌ 合成モデルが不正です: {error.message}"]
        lines.extend(f"   - {v.describe()}" for v in error.report.violations)
        return "\n".join(lines)

    if isinstance(error, MappingError):
        return f"❌ マッピングエラー: {error}"

    if isinstance(error, BmxError):
        return f"❌ エラー: {error}"

    # 想定外のエラー
    return f"❌ 予期しないエラー: {type(error).__name__}: {error}"
