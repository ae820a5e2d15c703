"""Single steps, reachability graphs and replayable traces.

A step applies exactly one transition rule, chosen by a fixed precedence:
pending expiry signals first (all of them in one step, order being the only
source of nondeterminism), then release of one recorded activation, then the
scheduling signal, then the running task's next statement, then dispatch,
then idle time.  States whose status is no longer normal are fixpoints: they
stutter, so that every explored dead end carries an infinite run for the
temporal logic layer.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from . import kernel_core, timing
from .model import (ALLIDLE, DEADLOCK, NORMAL, SCHEDULE_SIGNAL, SUSPENDED,
                    KernelState, canonical_label, canonical_snapshot,
                    label_text, state_hash, stutterize)
from .oil_config import KernelConfig
from .task_lang import TaskBody


class ResourceLimit(Exception):
    """Raised when exploration exceeds the configured node budget."""


class ReplayMismatch(Exception):
    """Raised when replaying a trace diverges from its recorded states."""

    def __init__(self, index: int, expected: str, actual: str):
        super().__init__(f"replay diverged at step {index}")
        self.index = index
        self.expected = expected
        self.actual = actual


@dataclass(frozen=True)
class Choice:
    """Resolved nondeterminism of one step: the expiry handling order."""

    order: tuple[str, ...]

    def __str__(self) -> str:
        return "alarms:" + ",".join(self.order)


def choice_text(choice: Choice | None) -> str:
    return str(choice) if choice is not None else "-"


@dataclass(frozen=True)
class Stuck:
    """No rule applies: the scheduler is stuck or the system went idle."""

    kind: str  # ALLIDLE | DEADLOCK


# ---------------------------------------------------------------------------
# the step function
# ---------------------------------------------------------------------------


def step(state: KernelState, choice: Choice | None = None, *,
         strict: bool = False, idle_mode: str = timing.JUMP
         ) -> KernelState | Stuck:
    """Apply one transition rule; ``choice`` fixes the expiry order.

    Returns the successor state, or :class:`Stuck` when nothing is enabled.
    Non-normal states return their own stutter twin.
    """
    if state.status != NORMAL:
        return stutterize(state)
    pending = kernel_core.pending_expiries(state)
    if pending:
        if choice is None:
            order = pending
        else:
            if sorted(choice.order) != sorted(pending):
                raise ValueError(
                    f"choice {choice} does not cover pending expiries "
                    f"{pending}")
            order = choice.order
        return kernel_core.handle_expiries(state, order, strict=strict)
    if kernel_core.multiactivation_candidate(state) is not None:
        return kernel_core.handle_multiactivation(state)
    if SCHEDULE_SIGNAL in state.signals:
        return kernel_core.handle_schedule_signal(state)
    if state.running is not None:
        return kernel_core.exec_running_statement(state, strict=strict)
    if state.ready:
        state = replace(state, signals=state.signals | {SCHEDULE_SIGNAL})
        return kernel_core.handle_schedule_signal(state)
    if state.working_alarms:
        return timing.idle_advance(state, idle_mode)
    if all(c.state == SUSPENDED for c in state.tasks):
        return Stuck(ALLIDLE)
    return Stuck(DEADLOCK)


def successors(state: KernelState, *, strict: bool = False,
               idle_mode: str = timing.JUMP
               ) -> list[tuple[Choice | None, KernelState]]:
    """All one-step successors; stuck states yield their stutter twin."""
    if state.status != NORMAL:
        return [(None, stutterize(state))]
    pending = kernel_core.pending_expiries(state)
    if len(pending) > 1:
        return [(Choice(order),
                 kernel_core.handle_expiries(state, order, strict=strict))
                for order in itertools.permutations(pending)]
    result = step(state, strict=strict, idle_mode=idle_mode)
    if isinstance(result, Stuck):
        return [(None, stutterize(state, result.kind))]
    return [(None, result)]


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trace:
    """A replayable run: states plus the choices taken between them.

    For a lasso, ``lasso_start`` marks the state the run loops back to and
    ``choices`` carries one extra closing entry.
    """

    states: tuple[KernelState, ...]
    choices: tuple[Choice | None, ...]
    lasso_start: int | None = None
    strict: bool = False
    idle_mode: str = timing.JUMP

    @property
    def final(self) -> KernelState:
        return self.states[-1]


def replay(trace: Trace) -> None:
    """Re-execute a trace step by step; raises ReplayMismatch on divergence."""
    expected_count = len(trace.states) - 1
    if trace.lasso_start is not None:
        expected_count += 1
    if len(trace.choices) != expected_count:
        raise ReplayMismatch(0, f"{expected_count} choices",
                             f"{len(trace.choices)} choices")
    for index in range(len(trace.states) - 1):
        result = step(trace.states[index], trace.choices[index],
                      strict=trace.strict, idle_mode=trace.idle_mode)
        actual = (stutterize(trace.states[index], result.kind)
                  if isinstance(result, Stuck) else result)
        if canonical_snapshot(actual) != canonical_snapshot(
                trace.states[index + 1]):
            raise ReplayMismatch(index,
                                 canonical_snapshot(trace.states[index + 1]),
                                 canonical_snapshot(actual))
    if trace.lasso_start is not None:
        result = step(trace.states[-1], trace.choices[-1],
                      strict=trace.strict, idle_mode=trace.idle_mode)
        actual = (stutterize(trace.states[-1], result.kind)
                  if isinstance(result, Stuck) else result)
        if canonical_snapshot(actual) != canonical_snapshot(
                trace.states[trace.lasso_start]):
            raise ReplayMismatch(len(trace.states) - 1,
                                 canonical_snapshot(
                                     trace.states[trace.lasso_start]),
                                 canonical_snapshot(actual))


def render_trace(trace: Trace, fmt: str = "text") -> str:
    """Render a trace: per-step lines plus a snapshot section."""
    lines = [f"# trace steps={len(trace.states) - 1} "
             f"strict={'yes' if trace.strict else 'no'} "
             f"idle={trace.idle_mode}"]
    for index, state in enumerate(trace.states):
        choice = trace.choices[index - 1] if index > 0 else None
        if fmt == "machine":
            lines.append(f"{index} {choice_text(choice)} "
                         f"{canonical_label(state.last_label)} "
                         f"{state_hash(state)[:12]}")
        else:
            mark = " <- loop target" if index == trace.lasso_start else ""
            lines.append(f"step {index:4d}  [{choice_text(choice)}]  "
                         f"{label_text(state.last_label)}  "
                         f"(counter={state.counter_value}, "
                         f"hash={state_hash(state)[:12]}){mark}")
    if trace.lasso_start is not None:
        lines.append(f"# lasso: closes back to step {trace.lasso_start} "
                     f"via [{choice_text(trace.choices[-1])}]")
    lines.append("# snapshots")
    for index, state in enumerate(trace.states):
        lines.append(f"--- state {index} {state_hash(state)[:12]}")
        lines.append(canonical_snapshot(state))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# final-state search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TerminalRecord:
    state: KernelState
    trace: Trace
    kind: str  # ALLIDLE | DEADLOCK


@dataclass
class SearchResult:
    finals: tuple[TerminalRecord, ...]
    deadlocks: tuple[TerminalRecord, ...]
    visited: int
    truncated: bool


@dataclass
class StateGraph:
    """Deduplicated reachability graph keyed by state hash."""

    initial: str
    nodes: dict[str, KernelState]
    edges: dict[str, tuple[tuple[Choice | None, str], ...]]
    parents: dict[str, tuple[str, Choice | None]]
    depths: dict[str, int]
    truncated: bool
    strict: bool
    idle_mode: str

    def state(self, node: str) -> KernelState:
        return self.nodes[node]

    def successors_of(self, node: str) -> tuple[tuple[Choice | None, str], ...]:
        return self.edges[node]

    def trace_to(self, node: str) -> Trace:
        """Shortest breadth-first trace from the initial state."""
        path: list[str] = [node]
        choices: list[Choice | None] = []
        while path[-1] != self.initial:
            parent, choice = self.parents[path[-1]]
            choices.append(choice)
            path.append(parent)
        path.reverse()
        choices.reverse()
        return Trace(tuple(self.nodes[h] for h in path), tuple(choices),
                     strict=self.strict, idle_mode=self.idle_mode)

    def terminal_nodes(self) -> list[str]:
        """Dead-end entry nodes: non-normal states first reached from a
        normal state (their stutter twins are implementation detail)."""
        out = []
        for h, s in self.nodes.items():
            if s.status == NORMAL:
                continue
            if h == self.initial:
                out.append(h)
                continue
            parent, _ = self.parents[h]
            if self.nodes[parent].status == NORMAL:
                out.append(h)
        return out


def _expand_frontier(states: list[KernelState], *, strict: bool,
                     idle_mode: str, workers: int
                     ) -> list[list[tuple[Choice | None, KernelState]]]:
    """Successor lists for a whole frontier, in frontier order."""
    def expand(state: KernelState):
        return successors(state, strict=strict, idle_mode=idle_mode)

    if workers <= 1 or len(states) < 2:
        return [expand(s) for s in states]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(expand, states))


def build_graph(config: KernelConfig, bodies: dict[str, TaskBody], *,
                bound: int = 10_000, strict: bool = False,
                idle_mode: str = timing.JUMP, workers: int = 1,
                max_nodes: int = 500_000) -> StateGraph:
    """Layer-synchronous breadth-first exploration up to ``bound`` steps.

    Nodes are deduplicated by canonical snapshot hash, so the graph is
    insensitive to the path that first reached a state.  Non-normal states
    receive their stutter self-loop and are not expanded further.
    """
    init = kernel_core.boot(config, bodies)
    init_hash = state_hash(init)
    nodes: dict[str, KernelState] = {init_hash: init}
    edges: dict[str, tuple[tuple[Choice | None, str], ...]] = {}
    parents: dict[str, tuple[str, Choice | None]] = {}
    depths: dict[str, int] = {init_hash: 0}
    frontier: list[str] = [init_hash]
    truncated = False
    depth = 0
    while frontier:
        if depth >= bound:
            truncated = True
            break
        expansions = _expand_frontier([nodes[h] for h in frontier],
                                      strict=strict, idle_mode=idle_mode,
                                      workers=workers)
        next_frontier: list[str] = []
        for source, succ in zip(frontier, expansions):
            out: list[tuple[Choice | None, str]] = []
            for choice, target_state in succ:
                target = state_hash(target_state)
                out.append((choice, target))
                if target not in nodes:
                    nodes[target] = target_state
                    parents[target] = (source, choice)
                    depths[target] = depth + 1
                    if len(nodes) > max_nodes:
                        raise ResourceLimit(
                            f"exploration exceeded {max_nodes} states")
                    next_frontier.append(target)
            edges[source] = tuple(out)
        frontier = next_frontier
        depth += 1
    for h in frontier:
        edges.setdefault(h, ())
    return StateGraph(init_hash, nodes, edges, parents, depths, truncated,
                      strict, idle_mode)


def search_final(config: KernelConfig, bodies: dict[str, TaskBody], *,
                 bound: int = 10_000, strict: bool = True,
                 idle_mode: str = timing.JUMP, workers: int = 1,
                 max_nodes: int = 500_000) -> SearchResult:
    """Find every reachable final: intended completions and dead ends.

    States that go all-idle (every task suspended, no armed alarm) are
    intended finals; scheduler dead ends and, in strict mode, frozen service
    errors are deadlocks.  Witness traces are shortest by construction.
    """
    graph = build_graph(config, bodies, bound=bound, strict=strict,
                        idle_mode=idle_mode, workers=workers,
                        max_nodes=max_nodes)
    finals: list[TerminalRecord] = []
    deadlocks: list[TerminalRecord] = []
    terminal = sorted(graph.terminal_nodes(), key=lambda h: graph.depths[h])
    for node in terminal:
        state = graph.nodes[node]
        record = TerminalRecord(state, graph.trace_to(node),
                                ALLIDLE if state.status == ALLIDLE
                                else DEADLOCK)
        if record.kind == ALLIDLE:
            finals.append(record)
        else:
            deadlocks.append(record)
    return SearchResult(tuple(finals), tuple(deadlocks), len(graph.nodes),
                        graph.truncated)
