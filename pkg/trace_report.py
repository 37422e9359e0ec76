"""
トレースレポート

MappingTrace を人が読める表（元要素・ルール・生成要素）と CSV に出力する。
"""

from __future__ import annotations

import csv
import io
from collections import Counter

from mapping_definition import MappingLink, MappingTrace

HEADERS = ["source", "rule", "produced", "via", "folded"]


class TraceReportGenerator:
    """トレースレポート生成"""

    def __init__(self, trace: MappingTrace) -> None:
        self.trace = trace

    def rows(self) -> list[list[str]]:
        """リンク1件 = 1行"""
        return [_row(link) for link in self.trace.links]

    def render_table(self) -> str:
        """
        固定幅のテキスト表を生成する

        via / folded 列は値のあるリンクが1件もなければ省略する。
        """
        rows = self.rows()
        used = [
            i for i in range(len(HEADERS))
            if i < 3 or any(row[i] for row in rows)
        ]
        table = [[HEADERS[i] for i in used]] + [[row[i] for i in used] for row in rows]
        widths = [max(len(r[c]) for r in table) for c in range(len(used))]

        lines = [
            f"# {self.trace.direction.value}: {self.trace.source_notation} → {self.trace.target_notation}"
        ]
        for n, row in enumerate(table):
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
            if n == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(HEADERS)
        writer.writerows(self.rows())
        return buffer.getvalue()

    def generate_csv_report(self, output_path: str) -> str:
        """CSVレポートを書き出す"""
        with open(output_path, "w", encoding="utf-8-sig", newline="") as f:
            f.write(self.to_csv())
        return output_path

    def summary_lines(self) -> list[str]:
        """ルール別・元要素別の集計"""
        rules = Counter(link.rule for link in self.trace.links)
        produced = sum(len(link.produced) for link in self.trace.links)
        widest = max(
            ((len(self.trace.produced_by(s)), s) for s in self.trace.sources()),
            key=lambda item: item[0],
            default=(0, "")
        )
        lines = [
            "📊 トレースサマリー",
            f"   リンク: {len(self.trace.links)}件",
            f"   元要素: {len(self.trace.sources())}件",
            f"   生成要素: {produced}件",
            "   ルール別:",
        ]
        lines.extend(f"      🔗 {rule}: {count}件" for rule, count in sorted(rules.items()))
        if widest[0] > 1:
            lines.append(f"   最大展開: {widest[1]} → {widest[0]}要素")
        return lines


def _row(link: MappingLink) -> list[str]:
    return [
        link.source,
        link.rule,
        " ".join(link.produced),
        " ".join(link.via),
        " ".join(link.folded),
    ]
