"""
ロギングモジュール

プロジェクト共通のロガー設定を提供する。
標準出力はコマンドの結果（決定的な出力）に使うため、ログは標準エラーに出す。
"""

import logging
import sys
from pathlib import Path

ROOT_LOGGER_NAME = "bmx"


def get_logger(
    name: str,
    level: int | None = None,
    log_file: str | None = None
) -> logging.Logger:
    """
    ロガーを取得する

    Args:
        name: ロガー名（"bmx." 配下に作成される）
        level: ログレベル（省略時はルートロガーの設定に従う）
        log_file: ログファイルパス（省略時はファイル出力なし）

    Returns:
        設定済みのロガー
    """
    root = logging.getLogger(ROOT_LOGGER_NAME)
    if not root.handlers:
        root.setLevel(logging.WARNING)
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(_formatter())
        root.addHandler(console_handler)
        root.propagate = False

    if level is not None:
        root.setLevel(level)
        for handler in root.handlers:
            handler.setLevel(level)

    # ファイルハンドラ（オプション）
    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        already = any(
            isinstance(h, logging.FileHandler) and Path(h.baseFilename) == log_path.resolve()
            for h in root.handlers
        )
        if not already:
            file_handler = logging.FileHandler(log_path, encoding="utf-8")
            file_handler.setFormatter(_formatter())
            root.addHandler(file_handler)

    if name == ROOT_LOGGER_NAME or name.startswith(ROOT_LOGGER_NAME + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")


def _formatter() -> logging.Formatter:
    return logging.Formatter(
        fmt="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )


# プロジェクト共通のログレベル設定
LOG_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
    "critical": logging.CRITICAL
}


def parse_log_level(level_str: str) -> int:
    """
    ログレベル文字列をパースする

    Args:
        level_str: "debug", "info", "warning", "error", "critical"

    Returns:
        logging.LEVEL 定数
    """
    return LOG_LEVELS.get(level_str.lower(), logging.INFO)
