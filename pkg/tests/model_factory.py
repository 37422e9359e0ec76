"""
テスト用モデルファクトリ

手書きのフィクスチャ（GRADE / UML-AD / NIBM）と、
ブロック構造文法からランダムな GRADE モデルを作る hypothesis 戦略。
"""

import sys
from pathlib import Path
from typing import Any

import hypothesis.strategies as st

sys.path.insert(0, str(Path(__file__).parent.parent))

from grade_notation import Condition, GradeEnd, GradeFlow, GradePerformerRef, GradeProcess, GradeStart, GradeTask
from nibm_model import NibmBuilder, NibmProcess, NodeKind, PerformerKind
from umlad_notation import UmlActivity, UmlControlFlow, UmlNode, UmlNodeKind, UmlPartition


class GradeSketch:
    """GRADEモデルを手続き的に組み立てる"""

    def __init__(self, name: str = "process") -> None:
        self.name = name
        self.tasks: dict[str, dict[str, Any]] = {}
        self.starts: list[str] = []
        self.ends: list[str] = []
        self.flows: list[GradeFlow] = []
        self.guards: dict[str, str] = {}
        self.performers: list[GradePerformerRef] = []

    def start(self, start_id: str = "s") -> str:
        self.starts.append(start_id)
        return start_id

    def end(self, end_id: str = "e") -> str:
        self.ends.append(end_id)
        return end_id

    def task(
        self,
        task_id: str,
        name: str | None = None,
        triggering: str = "NONE",
        branching: str = "NONE",
        performer: str | None = None
    ) -> str:
        self.tasks[task_id] = {
            "name": name if name is not None else task_id,
            "triggering": Condition(triggering),
            "branching": Condition(branching),
            "performer": performer,
        }
        return task_id

    def flow(self, source: str, target: str, guard: str | None = None, flow_id: str | None = None) -> str:
        fid = flow_id or f"f{len(self.flows) + 1}"
        self.flows.append(GradeFlow(fid, source, target))
        if guard is not None:
            self.guards[fid] = guard
        return fid

    def performer(self, performer_id: str, name: str, kind: PerformerKind = PerformerKind.ROLE) -> str:
        self.performers.append(GradePerformerRef(performer_id, kind, name))
        return performer_id

    def build(self) -> GradeProcess:
        tasks = tuple(
            GradeTask(
                id=task_id,
                guards={f.id: self.guards[f.id] for f in self.flows if f.source == task_id and f.id in self.guards},
                **attrs
            )
            for task_id, attrs in self.tasks.items()
        )
        return GradeProcess(
            name=self.name,
            tasks=tasks,
            starts=tuple(GradeStart(s) for s in self.starts),
            ends=tuple(GradeEnd(e) for e in self.ends),
            flows=tuple(self.flows),
            performers=tuple(self.performers)
        )


def grade_chain() -> GradeProcess:
    """Start → T → End"""
    g = GradeSketch("chain")
    g.start("s")
    g.task("t", "T")
    g.end("e")
    g.flow("s", "t")
    g.flow("t", "e")
    return g.build()


def grade_choice(branching: str = "OR", triggering: str = "OR") -> GradeProcess:
    """
    申請 → (承認 | 差戻し) → 記録

    branching / triggering を変えると分岐・合流の種類が変わる。
    """
    g = GradeSketch("approval")
    g.start("s")
    g.task("a", "申請", branching=branching, performer="clerk")
    g.task("b", "承認")
    g.task("c", "差戻し")
    g.task("d", "記録", triggering=triggering)
    g.end("e")
    g.performer("clerk", "窓口担当")
    guarded = branching == "OR"
    g.flow("s", "a", flow_id="f0")
    g.flow("a", "b", guard="approved" if guarded else None, flow_id="f1")
    g.flow("a", "c", guard="else" if guarded else None, flow_id="f2")
    g.flow("b", "d", flow_id="f3")
    g.flow("c", "d", flow_id="f4")
    g.flow("d", "e", flow_id="f5")
    return g.build()


def grade_loop() -> GradeProcess:
    """自己ループを持つタスク（トレースは無限）"""
    g = GradeSketch("loop")
    g.start("s")
    g.task("a", "繰り返し", triggering="OR", branching="OR")
    g.end("e")
    g.flow("s", "a")
    g.flow("a", "a", guard="again")
    g.flow("a", "e", guard="else")
    return g.build()


def umlad_leading_decision() -> UmlActivity:
    """Initial → Decision → (A | B) → Final（Decision の前にタスクがない）"""
    return UmlActivity(
        name="leading-decision",
        nodes=(
            UmlNode("i", UmlNodeKind.INITIAL),
            UmlNode("d", UmlNodeKind.DECISION),
            UmlNode("x", UmlNodeKind.ACTION, "A"),
            UmlNode("y", UmlNodeKind.ACTION, "B"),
            UmlNode("f1", UmlNodeKind.FINAL),
            UmlNode("f2", UmlNodeKind.FINAL),
        ),
        edges=(
            UmlControlFlow("e1", "i", "d"),
            UmlControlFlow("e2", "d", "x", "big"),
            UmlControlFlow("e3", "d", "y", "else"),
            UmlControlFlow("e4", "x", "f1"),
            UmlControlFlow("e5", "y", "f2"),
        )
    )


def umlad_choice() -> UmlActivity:
    """grade_choice と同じ振る舞いの UML-AD（パーティション付き）"""
    return UmlActivity(
        name="approval",
        nodes=(
            UmlNode("init", UmlNodeKind.INITIAL),
            UmlNode("apply", UmlNodeKind.ACTION, "申請", "lane"),
            UmlNode("dec", UmlNodeKind.DECISION),
            UmlNode("ok", UmlNodeKind.ACTION, "承認"),
            UmlNode("ng", UmlNodeKind.ACTION, "差戻し"),
            UmlNode("mrg", UmlNodeKind.MERGE),
            UmlNode("log", UmlNodeKind.ACTION, "記録"),
            UmlNode("fin", UmlNodeKind.FINAL),
        ),
        edges=(
            UmlControlFlow("c1", "init", "apply"),
            UmlControlFlow("c2", "apply", "dec"),
            UmlControlFlow("c3", "dec", "ok", "approved"),
            UmlControlFlow("c4", "dec", "ng", "else"),
            UmlControlFlow("c5", "ok", "mrg"),
            UmlControlFlow("c6", "ng", "mrg"),
            UmlControlFlow("c7", "mrg", "log"),
            UmlControlFlow("c8", "log", "fin"),
        ),
        partitions=(UmlPartition("lane", "窓口担当", PerformerKind.ROLE),)
    )


def nibm_chain() -> NibmProcess:
    b = NibmBuilder("chain")
    b.node("s", NodeKind.START)
    b.node("t", NodeKind.TASK, "T")
    b.node("e", NodeKind.STOP)
    b.flow("s", "t")
    b.flow("t", "e")
    return b.build()


def nibm_parallel(first: str = "B", second: str = "C") -> NibmProcess:
    """A → Fork → (B ∥ C) → Join → D"""
    b = NibmBuilder("parallel")
    b.node("s", NodeKind.START)
    b.node("a", NodeKind.TASK, "A")
    b.node("fork", NodeKind.FORK)
    b.node("b", NodeKind.TASK, first)
    b.node("c", NodeKind.TASK, second)
    b.node("join", NodeKind.JOIN)
    b.node("d", NodeKind.TASK, "D")
    b.node("e", NodeKind.STOP)
    b.flow("s", "a")
    b.flow("a", "fork")
    b.flow("fork", "b")
    b.flow("fork", "c")
    b.flow("b", "join")
    b.flow("c", "join")
    b.flow("join", "d")
    b.flow("d", "e")
    return b.build()


# ---------------------------------------------------------------------------
# ブロック構造文法
# ---------------------------------------------------------------------------

Block = tuple[Any, ...]

_leaf: st.SearchStrategy[Block] = st.just(("task",))

blocks: st.SearchStrategy[Block] = st.recursive(
    _leaf,
    lambda children: st.one_of(
        st.tuples(st.just("seq"), st.lists(children, min_size=2, max_size=3)),
        st.tuples(st.just("xor"), st.lists(children, min_size=2, max_size=3)),
        st.tuples(st.just("and"), st.lists(children, min_size=2, max_size=2)),
    ),
    max_leaves=5
)


def grade_from_block(block: Block, name: str = "generated") -> GradeProcess:
    """
    ブロック木から妥当な GRADE モデルを組み立てる

    xor / and ブロックは分岐タスクと合流タスクで囲む。
    """
    g = GradeSketch(name)
    counter = iter(range(1, 10_000))

    def new_task(**attrs: str) -> str:
        task_id = f"T{next(counter)}"
        return g.task(task_id, **attrs)

    def compile_block(node: Block) -> tuple[str, str]:
        kind = node[0]
        if kind == "task":
            task_id = new_task()
            return task_id, task_id
        parts = [compile_block(child) for child in node[1]]
        if kind == "seq":
            for (_, last), (first, _) in zip(parts, parts[1:]):
                g.flow(last, first)
            return parts[0][0], parts[-1][1]

        condition = "OR" if kind == "xor" else "AND"
        split = new_task(branching=condition)
        join = new_task(triggering=condition)
        for i, (first, last) in enumerate(parts):
            guard = None
            if kind == "xor":
                guard = "else" if i == len(parts) - 1 else f"c{i + 1}"
            g.flow(split, first, guard=guard)
            g.flow(last, join)
        return split, join

    start = g.start()
    end = g.end()
    first, last = compile_block(block)
    g.flow(start, first)
    g.flow(last, end)
    return g.build()
