"""
exceptions.py / logger.py のユニットテスト
"""

import logging
import tempfile
import unittest
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from exceptions import (
    BmxError,
    ConfigurationError,
    DataFormatError,
    GuardSyntaxError,
    InvalidModelError,
    MappingError,
    NonTotalMappingError,
    StructuralError,
    UnabsorbableControlError,
    format_error_for_user,
)
from logger import get_logger, parse_log_level
from validation_report import ReportBuilder


class TestExceptions(unittest.TestCase):
    """例外クラスのテスト"""

    def test_hierarchy(self) -> None:
        self.assertTrue(issubclass(NonTotalMappingError, MappingError))
        self.assertTrue(issubclass(MappingError, BmxError))
        self.assertTrue(issubclass(StructuralError, BmxError))

    def test_details_in_message(self) -> None:
        self.assertEqual(str(BmxError("失敗", "詳細")), "失敗: 詳細")
        self.assertEqual(str(BmxError("失敗")), "失敗")

    def test_guard_syntax_error(self) -> None:
        error = GuardSyntaxError("a==b", 2, "unexpected input")
        self.assertEqual(error.position, 2)
        self.assertEqual(str(error), "guard syntax error at 2: unexpected input: a==b")


class TestFormatErrorForUser(unittest.TestCase):
    """format_error_for_user のテスト"""

    def test_data_format_error_with_file(self) -> None:
        message = format_error_for_user(DataFormatError("ファイルが見つかりません", "in.json"))
        self.assertIn("❌ 入出力エラー", message)
        self.assertIn("ファイル: in.json", message)

    def test_configuration_error(self) -> None:
        message = format_error_for_user(ConfigurationError("BMX_MAX_STATES must be positive", "0"))
        self.assertIn("設定エラー", message)

    def test_invalid_model_lists_violations(self) -> None:
        builder = ReportBuilder()
        builder.add("t", "task-label", "task requires a non-empty label")
        message = format_error_for_user(InvalidModelError("invalid", builder.build()))
        self.assertIn("[task-label] t: task requires a non-empty label", message)

    def test_unabsorbable_suggests_synthetic(self) -> None:
        message = format_error_for_user(UnabsorbableControlError("n2", "Decision"))
        self.assertIn("unabsorbable control chain at Decision n2", message)
        self.assertIn("--allow-synthetic", message)

    def test_unexpected_error(self) -> None:
        message = format_error_for_user(ValueError("boom"))
        self.assertEqual(message, "❌ 予期しないエラー: ValueError: boom")


class TestLogger(unittest.TestCase):
    """logger のテスト"""

    def test_names_are_under_root(self) -> None:
        self.assertEqual(get_logger("mapping_engine").name, "bmx.mapping_engine")
        self.assertEqual(get_logger("bmx.cli").name, "bmx.cli")

    def test_parse_log_level(self) -> None:
        self.assertEqual(parse_log_level("DEBUG"), logging.DEBUG)
        self.assertEqual(parse_log_level("unknown"), logging.INFO)

    def test_log_file(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "logs" / "bmx.log"
            log = get_logger("test", level=logging.INFO, log_file=str(path))
            log.info("書き込みテスト")
            root = logging.getLogger("bmx")
            for handler in list(root.handlers):
                if isinstance(handler, logging.FileHandler):
                    handler.flush()
                    handler.close()
                    root.removeHandler(handler)
            root.setLevel(logging.WARNING)
            content = path.read_text(encoding="utf-8")
        self.assertIn("書き込みテスト", content)


if __name__ == "__main__":
    unittest.main()
