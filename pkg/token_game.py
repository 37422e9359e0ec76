"""
トークンゲーム

NIBM プロセス上の有界トークンゲームで、完了したタスク発火列（トレース）を
網羅的に列挙する。マッピングが制御フローの振る舞いを保存することを確かめるオラクル。

- トークンは遷移（エッジ）上に置く
- Stop はトークンを生成と同時に吸収する
- Decision のガードは無視し、全分岐を列挙する
"""

from __future__ import annotations

import os
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from exceptions import ConfigurationError, InvalidModelError
from logger import get_logger
from model_io import to_nibm
from nibm_model import NibmNode, NibmProcess, NodeKind, validate_nibm

log = get_logger("token_game")

ENV_MAX_STATES = "BMX_MAX_STATES"
ENV_MAX_TRACE_LEN = "BMX_MAX_TRACE_LEN"

# (遷移ID, トークン数) のソート済みタプル
Marking = tuple[tuple[str, int], ...]
Trace = tuple[str, ...]


@dataclass(frozen=True)
class OracleBounds:
    """列挙の上限"""
    max_states: int = 100000
    max_trace_len: int = 200

    def __post_init__(self) -> None:
        if self.max_states < 1 or self.max_trace_len < 1:
            raise ConfigurationError(
                "oracle bounds must be positive",
                f"max_states={self.max_states}, max_trace_len={self.max_trace_len}"
            )

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> OracleBounds:
        """
        環境変数から上限を読み込む（未設定なら既定値）

        Raises:
            ConfigurationError: 正の整数でない値
        """
        env = os.environ if environ is None else environ
        defaults = cls()
        return cls(
            max_states=_positive_int(env, ENV_MAX_STATES, defaults.max_states),
            max_trace_len=_positive_int(env, ENV_MAX_TRACE_LEN, defaults.max_trace_len)
        )


def _positive_int(env: Mapping[str, str], name: str, default: int) -> int:
    raw = env.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer", raw) from None
    if value < 1:
        raise ConfigurationError(f"{name} must be positive", raw)
    return value


@dataclass(frozen=True)
class TraceSet:
    """完了トレースの集合"""
    traces: frozenset[Trace]
    complete: bool
    deadlocks: frozenset[Marking] = field(default_factory=frozenset)
    states: int = 0

    def sorted_traces(self) -> list[Trace]:
        return sorted(self.traces, key=lambda t: (len(t), t))

    def to_dict(self) -> dict[str, Any]:
        return {
            "complete": self.complete,
            "traces": [list(t) for t in self.sorted_traces()],
            "deadlocks": len(self.deadlocks),
        }


def _freeze(tokens: Counter[str]) -> Marking:
    return tuple(sorted((tid, n) for tid, n in tokens.items() if n > 0))


def initial_marking(model: NibmProcess) -> Marking:
    """Start の出力遷移に1トークンを置いた初期マーキング"""
    tokens: Counter[str] = Counter()
    for start in model.nodes_of(NodeKind.START):
        for t in model.outflows(start.id):
            _produce(model, tokens, t.id, t.target)
    return _freeze(tokens)


def _produce(model: NibmProcess, tokens: Counter[str], transition_id: str, target: str) -> None:
    if model.node(target).kind != NodeKind.STOP:
        tokens[transition_id] += 1


def step_rules(model: NibmProcess, marking: Marking) -> list[tuple[str, Marking]]:
    """
    マーキングから1ステップで到達できる (発火ノードID, 後続マーキング) の一覧

    重複を除き、決定的な順序（ノードID・マーキング順）で返す。
    """
    tokens = Counter(dict(marking))
    steps: set[tuple[str, Marking]] = set()

    for node in model.nodes:
        inflows = model.inflows(node.id)
        if node.kind in (NodeKind.START, NodeKind.STOP) or not inflows:
            continue
        if node.kind == NodeKind.JOIN:
            if all(tokens[t.id] >= 1 for t in inflows):
                steps.add((node.id, _fire(model, node, tokens, [t.id for t in inflows], branch=None)))
            continue
        for t in inflows:
            if tokens[t.id] < 1:
                continue
            if node.kind == NodeKind.DECISION:
                for out in model.outflows(node.id):
                    steps.add((node.id, _fire(model, node, tokens, [t.id], branch=out.id)))
            else:
                steps.add((node.id, _fire(model, node, tokens, [t.id], branch=None)))

    return sorted(steps)


def _fire(
    model: NibmProcess,
    node: NibmNode,
    tokens: Counter[str],
    consumed: list[str],
    branch: str | None
) -> Marking:
    after = Counter(tokens)
    for tid in consumed:
        after[tid] -= 1
    for out in model.outflows(node.id):
        if branch is None or out.id == branch:
            _produce(model, after, out.id, out.target)
    return _freeze(after)


def enumerate_traces(model: NibmProcess, bounds: OracleBounds | None = None) -> TraceSet:
    """
    完了トレースを深さ優先で網羅的に列挙する

    Args:
        model: validate_nibm を通る NIBM モデル
        bounds: 状態数・トレース長の上限（超えたら complete=False で部分結果）

    Returns:
        TraceSet

    Raises:
        InvalidModelError: モデルが検証を通らない
    """
    bounds = bounds or OracleBounds()
    report = validate_nibm(model)
    if not report.ok:
        raise InvalidModelError("model must be well-formed before enumeration", report)

    labels = {n.id: n.label or "" for n in model.nodes if n.kind == NodeKind.TASK}
    start = (initial_marking(model), ())
    visited: set[tuple[Marking, Trace]] = {start}
    stack: list[tuple[Marking, Trace]] = [start]
    traces: set[Trace] = set()
    deadlocks: set[Marking] = set()
    complete = True

    while stack:
        marking, prefix = stack.pop()
        steps = step_rules(model, marking)
        if not steps:
            if marking:
                deadlocks.add(marking)
            else:
                traces.add(prefix)
            continue

        for node_id, successor in reversed(steps):
            label = labels.get(node_id)
            extended = prefix + (label,) if label is not None else prefix
            if len(extended) > bounds.max_trace_len:
                complete = False
                continue
            state = (successor, extended)
            if state in visited:
                continue
            if len(visited) >= bounds.max_states:
                complete = False
                stack.clear()
                break
            visited.add(state)
            stack.append(state)

    if not complete:
        log.warning(f"enumeration bound hit on {model.name}: {len(visited)} states, {len(traces)} traces so far")
    if deadlocks:
        log.info(f"{len(deadlocks)} deadlocked marking(s) in {model.name}")
    return TraceSet(frozenset(traces), complete, frozenset(deadlocks), len(visited))


class Verdict(str, Enum):
    EQUAL = "equal"
    DIFFERENT = "different"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class EquivalenceResult:
    """振る舞い等価性の判定結果"""
    verdict: Verdict
    counterexample: Trace | None = None
    # 反例を持つ側（"a" / "b"）
    side: str | None = None
    traces_a: TraceSet | None = None
    traces_b: TraceSet | None = None

    @property
    def equal(self) -> bool:
        return self.verdict == Verdict.EQUAL

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "equal": self.equal,
            "counterexample": list(self.counterexample) if self.counterexample is not None else None,
            "side": self.side,
            "a": self.traces_a.to_dict() if self.traces_a else None,
            "b": self.traces_b.to_dict() if self.traces_b else None,
        }


def equivalent(a: Any, b: Any, bounds: OracleBounds | None = None) -> EquivalenceResult:
    """
    2つのモデル（任意の表記）のトレース集合を比較する

    表記モデルは組み込みマッピングで NIBM に射影してから列挙する。
    どちらかの列挙が上限に達した場合は判定せず INCONCLUSIVE を返す。

    Returns:
        EquivalenceResult（DIFFERENT の場合は最短の反例トレース付き）
    """
    traces_a = enumerate_traces(to_nibm(a), bounds)
    traces_b = enumerate_traces(to_nibm(b), bounds)

    if not (traces_a.complete and traces_b.complete):
        return EquivalenceResult(Verdict.INCONCLUSIVE, traces_a=traces_a, traces_b=traces_b)

    only_a = traces_a.traces - traces_b.traces
    only_b = traces_b.traces - traces_a.traces
    if not only_a and not only_b:
        return EquivalenceResult(Verdict.EQUAL, traces_a=traces_a, traces_b=traces_b)

    candidates = [(len(t), t, "a") for t in only_a] + [(len(t), t, "b") for t in only_b]
    _, counterexample, side = min(candidates)
    return EquivalenceResult(Verdict.DIFFERENT, counterexample, side, traces_a, traces_b)
