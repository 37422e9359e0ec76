"""
bmx コマンドラインツール

読み込み・検証・射影・トレース・等価性オラクルをコマンドとしてまとめる。

終了コード:
    0  成功
    1  検証・構造・マッピング・等価性の失敗
    2  使い方・入出力のエラー（ファイルなし、未知の表記、設定値不正）
    3  判定不能（列挙の上限に到達）
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

from exceptions import BmxError, ConfigurationError, DataFormatError, format_error_for_user
from logger import LOG_LEVELS, get_logger, parse_log_level
from mapping_definition import MappingTrace, dump_definition, dump_trace, trace_to_dict
from mapping_engine import (
    ProjectionOptions,
    builtin_mapping,
    check_totality,
    derive,
    project_from_nibm,
    project_to_nibm,
)
from model_io import (
    NOTATIONS,
    check_notation,
    load_model,
    notation_of,
    to_nibm,
    validate_model,
    write_model,
    write_text,
)
from nibm_model import NOTATION as NIBM_NOTATION, isomorphic, normalize, normalize_with_mapping
from token_game import OracleBounds, Verdict, equivalent
from trace_report import TraceReportGenerator

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INCONCLUSIVE = 3

AUTO = "auto"
MAPPED_NOTATIONS = tuple(n for n in NOTATIONS if n != NIBM_NOTATION)

log = get_logger("cli")


@dataclass
class CommandOutcome:
    """コマンドの実行結果"""
    exit_code: int
    messages: list[str] = field(default_factory=list)
    report: dict[str, Any] = field(default_factory=dict)
    report_path: str | None = None

    def say(self, message: str) -> None:
        self.messages.append(message)


# ---------------------------------------------------------------------------
# 変換の共通処理
# ---------------------------------------------------------------------------

def convert_model(
    model: Any,
    target: str,
    options: ProjectionOptions | None = None
) -> tuple[Any, MappingTrace | None]:
    """
    モデルを別表記に変換する

    - nibm → nibm: 正規化のみ（トレースなし）
    - X → nibm: 射影して正規化（トレースは正規化後のIDに付け替え）
    - nibm → X: 正規化して逆射影（トレースは入力のIDに付け替え）
    - X → Y: 導出マッピング
    """
    source = notation_of(model)
    if source == NIBM_NOTATION and target == NIBM_NOTATION:
        return normalize(model), None

    if target == NIBM_NOTATION:
        nibm, trace = project_to_nibm(model, builtin_mapping(source))
        normalized, mapping = normalize_with_mapping(nibm)
        return normalized, trace.remap_produced(mapping)

    if source == NIBM_NOTATION:
        normalized, mapping = normalize_with_mapping(model)
        result, trace = project_from_nibm(normalized, builtin_mapping(target), options)
        original = {new: old for old, new in mapping.items()}
        return result, trace.remap_sources(original)

    return derive(model, builtin_mapping(source), builtin_mapping(target), options)


def _notation_arg(value: str) -> str | None:
    return None if value == AUTO else check_notation(value)


# ---------------------------------------------------------------------------
# コマンド
# ---------------------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> CommandOutcome:
    """モデルを読み込んで検証する"""
    notation, model = load_model(args.input, _notation_arg(args.notation))
    report = validate_model(model)

    outcome = CommandOutcome(EXIT_OK if report.ok else EXIT_FAILURE)
    outcome.report = {"notation": notation, "input": args.input, "violations": report.to_dict()}
    if report.ok:
        outcome.say(f"✅ {args.input} ({notation}): 違反なし")
    else:
        outcome.say(f"❌ {args.input} ({notation}): {len(report.violations)}件の違反")
        outcome.messages.extend(f"   - {v.describe()}" for v in report.violations)
    return outcome


def cmd_convert(args: argparse.Namespace) -> CommandOutcome:
    """表記を変換して書き出す"""
    source, model = load_model(args.input, _notation_arg(args.source))
    target = check_notation(args.target)
    result, trace = convert_model(model, target, ProjectionOptions(allow_synthetic=args.allow_synthetic))

    document = write_model(result)
    outcome = CommandOutcome(EXIT_OK)
    if args.output:
        write_text(args.output, document)
        outcome.say(f"✅ {source} → {target}: {args.output}")
    else:
        outcome.say(document.rstrip("\n"))

    if trace is not None:
        if args.trace:
            write_text(args.trace, dump_trace(trace))
            outcome.say(f"📄 トレース: {args.trace}")
        if args.trace_csv:
            TraceReportGenerator(trace).generate_csv_report(args.trace_csv)
            outcome.say(f"📄 トレースCSV: {args.trace_csv}")

    outcome.report = {
        "source": source,
        "target": target,
        "input": args.input,
        "output": args.output,
        "links": len(trace.links) if trace is not None else 0,
    }
    return outcome


def cmd_trace(args: argparse.Namespace) -> CommandOutcome:
    """変換トレースを表として表示する"""
    source, model = load_model(args.input, _notation_arg(args.source))
    target = check_notation(args.target)
    _, trace = convert_model(model, target, ProjectionOptions(allow_synthetic=args.allow_synthetic))
    if trace is None:
        raise DataFormatError("trace requires a notation change (nibm → nibm only normalizes)")

    generator = TraceReportGenerator(trace)
    outcome = CommandOutcome(EXIT_OK)
    outcome.say(generator.render_table().rstrip("\n"))
    outcome.say("")
    outcome.messages.extend(generator.summary_lines())

    totality = check_totality(trace, model)
    if not totality.ok:
        outcome.exit_code = EXIT_FAILURE
        outcome.messages.extend(f"❌ {v.describe()}" for v in totality.violations)

    if args.json:
        write_text(args.json, dump_trace(trace))
        outcome.say(f"📄 トレース: {args.json}")
    if args.csv:
        generator.generate_csv_report(args.csv)
        outcome.say(f"📄 トレースCSV: {args.csv}")

    outcome.report = {"source": source, "target": target, "trace": trace_to_dict(trace)}
    return outcome


def cmd_check_equiv(args: argparse.Namespace) -> CommandOutcome:
    """2つのモデルのトレース集合を比較する"""
    base = OracleBounds.from_env()
    bounds = OracleBounds(
        max_states=args.max_states if args.max_states is not None else base.max_states,
        max_trace_len=args.max_len if args.max_len is not None else base.max_trace_len
    )
    _, model_a = load_model(args.a)
    _, model_b = load_model(args.b)
    result = equivalent(model_a, model_b, bounds)

    outcome = CommandOutcome(EXIT_OK)
    outcome.report = {"a": args.a, "b": args.b, **result.to_dict()}
    if result.verdict == Verdict.EQUAL:
        count = len(result.traces_a.traces) if result.traces_a else 0
        outcome.say(f"✅ 等価です（トレース {count}件）")
    elif result.verdict == Verdict.DIFFERENT:
        outcome.exit_code = EXIT_FAILURE
        side = args.a if result.side == "a" else args.b
        shown = " → ".join(result.counterexample or ()) or "(空)"
        outcome.say("❌ 等価ではありません")
        outcome.say(f"   反例（{side} のみ）: {shown}")
    else:
        outcome.exit_code = EXIT_INCONCLUSIVE
        outcome.say(
            f"⚠️ 判定不能: 列挙の上限に到達しました "
            f"(max_states={bounds.max_states}, max_trace_len={bounds.max_trace_len})"
        )
    return outcome


def cmd_roundtrip(args: argparse.Namespace) -> CommandOutcome:
    """A → B → A と変換して NIBM 上で同型か確かめる"""
    source, model = load_model(args.input, _notation_arg(args.source))
    via = check_notation(args.via) if args.via else (
        "uml-ad" if source == "grade-bm" else "grade-bm"
    )
    options = ProjectionOptions(allow_synthetic=args.allow_synthetic)
    middle, _ = convert_model(model, via, options)
    back, _ = convert_model(middle, source, options)

    result = isomorphic(normalize(to_nibm(model)), normalize(to_nibm(back)))
    outcome = CommandOutcome(EXIT_OK if result else EXIT_FAILURE)
    outcome.report = {"source": source, "via": via, "isomorphic": bool(result), "mismatch": result.mismatch}
    if result:
        outcome.say(f"✅ {source} → {via} → {source}: 同型")
    else:
        outcome.say(f"❌ {source} → {via} → {source}: 同型ではありません ({result.mismatch})")
    return outcome


def cmd_mapping(args: argparse.Namespace) -> CommandOutcome:
    """組み込みマッピング定義をJSONで出力する"""
    document = dump_definition(builtin_mapping(args.notation))
    outcome = CommandOutcome(EXIT_OK)
    if args.output:
        write_text(args.output, document)
        outcome.say(f"✅ {args.notation}: {args.output}")
    else:
        outcome.say(document.rstrip("\n"))
    outcome.report = {"notation": args.notation, "output": args.output}
    return outcome


# ---------------------------------------------------------------------------
# エントリポイント
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bmx",
        description="ビジネスプロセスモデル変換ツール（GRADE BM ⇔ NIBM ⇔ UML-AD）",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
例:
  # 検証
  bmx validate process.json

  # GRADE → UML-AD（トレース付き）
  bmx convert --from grade-bm --to uml-ad -i process.json -o activity.json --trace trace.json

  # 変換前後の振る舞い比較
  bmx check-equiv -a process.json -b activity.json
""")
    parser.add_argument("--log-level", default="warning", choices=sorted(LOG_LEVELS), help="ログレベル")
    parser.add_argument("--log-file", help="ログファイル")
    parser.add_argument("--report", help="JSONレポートの出力先")

    commands = parser.add_subparsers(dest="command", required=True)
    notation_choices = [AUTO, *NOTATIONS]

    p = commands.add_parser("validate", help="モデルを検証する")
    p.add_argument("input")
    p.add_argument("--notation", default=AUTO, choices=notation_choices)
    p.set_defaults(handler=cmd_validate)

    p = commands.add_parser("convert", help="表記を変換する")
    p.add_argument("--from", dest="source", default=AUTO, choices=notation_choices)
    p.add_argument("--to", dest="target", required=True, choices=list(NOTATIONS))
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output")
    p.add_argument("--trace", help="トレースJSONの出力先")
    p.add_argument("--trace-csv", help="トレースCSVの出力先")
    p.add_argument("--allow-synthetic", action="store_true", help="吸収できない制御ノードを合成タスクで展開する")
    p.set_defaults(handler=cmd_convert)

    p = commands.add_parser("trace", help="変換トレースを表示する")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--from", dest="source", default=AUTO, choices=notation_choices)
    p.add_argument("--to", dest="target", required=True, choices=list(NOTATIONS))
    p.add_argument("--json", help="トレースJSONの出力先")
    p.add_argument("--csv", help="トレースCSVの出力先")
    p.add_argument("--allow-synthetic", action="store_true")
    p.set_defaults(handler=cmd_trace)

    p = commands.add_parser("check-equiv", help="振る舞いの等価性を判定する")
    p.add_argument("-a", required=True)
    p.add_argument("-b", required=True)
    p.add_argument("--max-states", type=int)
    p.add_argument("--max-len", type=int)
    p.set_defaults(handler=cmd_check_equiv)

    p = commands.add_parser("roundtrip", help="A → B → A の往復変換を検査する")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--from", dest="source", default=AUTO, choices=notation_choices)
    p.add_argument("--via", choices=list(NOTATIONS))
    p.add_argument("--allow-synthetic", action="store_true")
    p.set_defaults(handler=cmd_roundtrip)

    p = commands.add_parser("mapping", help="組み込みマッピング定義を出力する")
    p.add_argument("notation", choices=list(MAPPED_NOTATIONS))
    p.add_argument("-o", "--output")
    p.set_defaults(handler=cmd_mapping)

    return parser


def run(args: argparse.Namespace) -> CommandOutcome:
    """コマンドを実行し、例外を終了コードに変換する"""
    log.info(f"{args.command} 開始")
    try:
        outcome: CommandOutcome = args.handler(args)
    except (DataFormatError, ConfigurationError) as e:
        outcome = CommandOutcome(EXIT_USAGE, report={"error": str(e)})
        print(format_error_for_user(e), file=sys.stderr)
    except BmxError as e:
        outcome = CommandOutcome(EXIT_FAILURE, report={"error": str(e)})
        print(format_error_for_user(e), file=sys.stderr)
    log.info(f"{args.command} 終了 (exit {outcome.exit_code})")

    if args.report:
        outcome.report_path = args.report
        payload = {"command": args.command, "exit_code": outcome.exit_code, **outcome.report}
        try:
            write_text(args.report, json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n")
        except DataFormatError as e:
            print(format_error_for_user(e), file=sys.stderr)
            outcome.exit_code = EXIT_USAGE
    return outcome


def main(argv: Sequence[str] | None = None) -> int:
    """メイン処理"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    get_logger("cli", level=parse_log_level(args.log_level), log_file=args.log_file)
    outcome = run(args)
    for message in outcome.messages:
        print(message)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
