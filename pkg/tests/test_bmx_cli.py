"""
bmx_cli.py のユニットテスト
"""

import io
import json
import tempfile
import unittest
import sys
from contextlib import redirect_stderr, redirect_stdout
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from bmx_cli import EXIT_FAILURE, EXIT_INCONCLUSIVE, EXIT_OK, EXIT_USAGE, main
from mapping_definition import builtin_grade_mapping, load_definition, load_trace
from model_io import load_model, write_model, write_text
from nibm_model import NibmBuilder, NodeKind
from umlad_notation import UmlNodeKind
from tests.model_factory import grade_choice, grade_loop, umlad_choice, umlad_leading_decision


class CliTestCase(unittest.TestCase):
    """一時ディレクトリにモデルを書き出して main() を呼ぶ"""

    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.addCleanup(self._tmp.cleanup)

    def save(self, name: str, model: object) -> str:
        path = self.tmp / name
        write_text(path, write_model(model))
        return str(path)

    def run_cli(self, *argv: str) -> tuple[int, str, str]:
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = main(list(argv))
        return code, out.getvalue(), err.getvalue()


class TestValidateCommand(CliTestCase):
    """validate コマンド"""

    def test_valid_model(self) -> None:
        code, out, _ = self.run_cli("validate", self.save("choice.json", grade_choice()))
        self.assertEqual(code, EXIT_OK)
        self.assertIn("違反なし", out)

    def test_invalid_model(self) -> None:
        b = NibmBuilder("broken")
        b.node("s", NodeKind.START)
        b.node("e", NodeKind.STOP)
        code, out, _ = self.run_cli("validate", self.save("broken.json", b.build()))
        self.assertEqual(code, EXIT_FAILURE)
        self.assertIn("件の違反", out)

    def test_merge_with_one_inflow(self) -> None:
        """入力1本の Merge は違反1件として表示される"""
        b = NibmBuilder("merge-one")
        b.node("s", NodeKind.START)
        b.node("m", NodeKind.MERGE)
        b.node("t", NodeKind.TASK, "T")
        b.node("e", NodeKind.STOP)
        b.flow("s", "m")
        b.flow("m", "t")
        b.flow("t", "e")
        code, out, _ = self.run_cli("validate", self.save("merge.json", b.build()))

        self.assertEqual(code, EXIT_FAILURE)
        self.assertIn("1件の違反", out)
        lines = [line for line in out.splitlines() if line.startswith("   - ")]
        self.assertEqual(len(lines), 1)
        self.assertIn("[unification-inflows] m:", lines[0])

    def test_missing_file(self) -> None:
        code, _, err = self.run_cli("validate", str(self.tmp / "none.json"))
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("ファイルが見つかりません", err)

    def test_unknown_target_is_usage_error(self) -> None:
        path = self.save("choice.json", grade_choice())
        code, _, _ = self.run_cli("convert", "--to", "bpmn", "-i", path)
        self.assertEqual(code, EXIT_USAGE)


class TestConvertCommand(CliTestCase):
    """convert / trace コマンド"""

    def test_grade_to_umlad(self) -> None:
        source = self.save("choice.json", grade_choice())
        output = str(self.tmp / "out" / "activity.json")
        trace_path = str(self.tmp / "trace.json")
        code, out, _ = self.run_cli(
            "convert", "--from", "grade-bm", "--to", "uml-ad",
            "-i", source, "-o", output, "--trace", trace_path
        )
        self.assertEqual(code, EXIT_OK)
        self.assertIn("grade-bm → uml-ad", out)

        notation, activity = load_model(output)
        self.assertEqual(notation, "uml-ad")
        kinds = [node.kind for node in activity.nodes]
        self.assertEqual(kinds.count(UmlNodeKind.MERGE), 1)
        self.assertEqual(kinds.count(UmlNodeKind.DECISION), 1)

        trace = load_trace(Path(trace_path).read_text(encoding="utf-8"))
        self.assertIn("b", trace.sources())
        via = {v for link in trace.links_for("a") for v in link.via}
        self.assertGreaterEqual(len(via), 3)

    def test_output_is_deterministic(self) -> None:
        source = self.save("choice.json", grade_choice())
        first = self.run_cli("convert", "--to", "uml-ad", "-i", source)
        second = self.run_cli("convert", "--to", "uml-ad", "-i", source)
        self.assertEqual(first[0], EXIT_OK)
        self.assertEqual(first[1], second[1])

    def test_convert_to_stdout(self) -> None:
        code, out, _ = self.run_cli("convert", "--to", "nibm", "-i", self.save("a.json", umlad_choice()))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(json.loads(out)["notation"], "nibm")

    def test_leading_decision_needs_synthesis(self) -> None:
        source = self.save("lead.json", umlad_leading_decision())
        code, _, err = self.run_cli("convert", "--to", "grade-bm", "-i", source)
        self.assertEqual(code, EXIT_FAILURE)
        self.assertIn("--allow-synthetic", err)

        output = str(self.tmp / "lead-grade.json")
        code, _, _ = self.run_cli("convert", "--to", "grade-bm", "-i", source, "-o", output, "--allow-synthetic")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(self.run_cli("validate", output)[0], EXIT_OK)

    def test_trace_table_and_csv(self) -> None:
        csv_path = self.tmp / "trace.csv"
        code, out, _ = self.run_cli(
            "trace", "-i", self.save("choice.json", grade_choice()), "--to", "uml-ad", "--csv", str(csv_path)
        )
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(out.startswith("# derived: grade-bm → uml-ad"))
        self.assertTrue(csv_path.read_bytes().startswith(b"\xef\xbb\xbf"))

    def test_trace_prints_summary_after_table(self) -> None:
        code, out, _ = self.run_cli("trace", "-i", self.save("choice.json", grade_choice()), "--to", "uml-ad")
        self.assertEqual(code, EXIT_OK)
        table, _, summary = out.partition("📊 トレースサマリー")
        self.assertTrue(table.startswith("# derived: grade-bm → uml-ad"))
        self.assertIn("🔗 trig-none>action:", summary)
        self.assertIn("   最大展開: ", summary)

    def test_trace_requires_notation_change(self) -> None:
        b = NibmBuilder("chain")
        b.node("s", NodeKind.START)
        b.node("t", NodeKind.TASK, "T")
        b.node("e", NodeKind.STOP)
        b.flow("s", "t")
        b.flow("t", "e")
        code, _, _ = self.run_cli("trace", "-i", self.save("n.json", b.build()), "--to", "nibm")
        self.assertEqual(code, EXIT_USAGE)


class TestEquivalenceCommands(CliTestCase):
    """check-equiv / roundtrip コマンド"""

    def test_equal(self) -> None:
        code, out, _ = self.run_cli(
            "check-equiv", "-a", self.save("g.json", grade_choice()), "-b", self.save("u.json", umlad_choice())
        )
        self.assertEqual(code, EXIT_OK)
        self.assertIn("等価です（トレース 2件）", out)

    def test_different(self) -> None:
        a = self.save("or.json", grade_choice("OR", "OR"))
        b = self.save("and.json", grade_choice("AND", "AND"))
        code, out, _ = self.run_cli("check-equiv", "-a", a, "-b", b)
        self.assertEqual(code, EXIT_FAILURE)
        self.assertIn("申請 → 差戻し → 記録", out)

    def test_swapped_labels_in_conversion(self) -> None:
        """変換結果のタスク名を入れ替えると反例付きで失敗する"""
        source = self.save("g.json", grade_choice())
        output = self.tmp / "u.json"
        self.assertEqual(self.run_cli("convert", "--to", "uml-ad", "-i", source, "-o", str(output))[0], EXIT_OK)

        _, activity = load_model(str(output))
        swap = {"承認": "記録", "記録": "承認"}
        nodes = tuple(replace(n, name=swap.get(n.name or "", n.name)) for n in activity.nodes)
        mutated = self.save("mutated.json", replace(activity, nodes=nodes))

        code, out, _ = self.run_cli("check-equiv", "-a", source, "-b", mutated)
        self.assertEqual(code, EXIT_FAILURE)
        self.assertIn("等価ではありません", out)
        self.assertIn("反例", out)
        self.assertIn("申請 → ", out)

    def test_inconclusive(self) -> None:
        loop = self.save("loop.json", grade_loop())
        code, _, _ = self.run_cli("check-equiv", "-a", loop, "-b", loop, "--max-len", "3")
        self.assertEqual(code, EXIT_INCONCLUSIVE)

    def test_invalid_bound(self) -> None:
        path = self.save("g.json", grade_choice())
        code, _, err = self.run_cli("check-equiv", "-a", path, "-b", path, "--max-states", "0")
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("設定エラー", err)

    def test_roundtrip(self) -> None:
        for name, model in (("g.json", grade_choice()), ("u.json", umlad_choice())):
            with self.subTest(name=name):
                code, out, _ = self.run_cli("roundtrip", "-i", self.save(name, model))
                self.assertEqual(code, EXIT_OK)
                self.assertIn("同型", out)


class TestMappingAndReport(CliTestCase):
    """mapping コマンドと --report"""

    def test_mapping_to_stdout(self) -> None:
        code, out, _ = self.run_cli("mapping", "grade-bm")
        self.assertEqual(code, EXIT_OK)
        definition = load_definition(out)
        self.assertEqual(len(definition.rules), len(builtin_grade_mapping().rules))

    def test_report_file(self) -> None:
        report = self.tmp / "report.json"
        path = self.save("g.json", grade_choice())
        code, _, _ = self.run_cli("--report", str(report), "validate", path)
        self.assertEqual(code, EXIT_OK)
        data = json.loads(report.read_text(encoding="utf-8"))
        self.assertEqual(data["command"], "validate")
        self.assertEqual(data["exit_code"], 0)
        self.assertEqual(data["violations"], [])

    def test_report_records_failures(self) -> None:
        report = self.tmp / "report.json"
        code, _, _ = self.run_cli("--report", str(report), "validate", str(self.tmp / "none.json"))
        self.assertEqual(code, EXIT_USAGE)
        self.assertEqual(json.loads(report.read_text(encoding="utf-8"))["exit_code"], EXIT_USAGE)

    def test_argparse_errors(self) -> None:
        code, _, _ = self.run_cli("convert", "-i", "x.json")
        self.assertEqual(code, EXIT_USAGE)


if __name__ == "__main__":
    unittest.main()
