"""Property catalog, verification drivers and conformance adjudication.

Six properties are checked against the reachability graph: four generic
kernel-behavior properties (deadlock freedom, mutual exclusion, priority
inversion freedom, starvation freedom) and two application-timing properties
(periodic execution, multiple-activation freedom).  Verification verdicts are
then combined with test-execution verdicts: when verification and testing
disagree, the fault is attributed to the kernel implementation; when both
fail, the application itself is at fault.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import explorer, ltl, timing
from .model import (E_OK, E_OS_LIMIT, NORMAL, READY, RUNNING, KernelState,
                    TransitionLabel)
from .oil_config import FULL, KernelConfig
from .task_lang import TaskBody

PROPERTY_ORDER = ("DF", "ME", "PIF", "SF", "PE", "MAF")

_DESCRIPTIONS = {
    "DF": "deadlock freedom: no reachable state gets stuck before all idle",
    "ME": "mutual exclusion: at most one task occupies the processor",
    "PIF": "priority inversion freedom: at scheduling rest the running task "
           "is never outprioritized by a ready one",
    "SF": "starvation freedom: a task waiting for an event eventually "
          "receives it",
    "PE": "periodic execution: between consecutive activations of a "
          "periodic task it completes exactly once",
    "MAF": "multiple activation freedom: activation requests never exceed "
           "a task's activation limit",
}

_ORIGINS = {"DF": "standard", "ME": "standard", "PIF": "standard",
            "SF": "standard", "PE": "application", "MAF": "application"}


@dataclass(frozen=True)
class PropertySpec:
    id: str
    origin: str
    description: str


def standard_catalog() -> tuple[PropertySpec, ...]:
    return tuple(PropertySpec(pid, _ORIGINS[pid], _DESCRIPTIONS[pid])
                 for pid in PROPERTY_ORDER)


@dataclass
class PropertyResult:
    property_id: str
    verdict: str  # "pass" | "fail" | "bounded_pass"
    witness: explorer.Trace | None = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict in ("pass", "bounded_pass")


class AdjudicationError(Exception):
    """Conformance inputs are malformed or incomplete."""


# ---------------------------------------------------------------------------
# witnesses
# ---------------------------------------------------------------------------


def lasso_to_trace(graph: explorer.StateGraph,
                   result: ltl.LtlResult) -> explorer.Trace:
    """Turn a model-checker lasso over graph nodes into a replayable trace."""
    nodes = list(result.prefix) + list(result.cycle[1:])
    choices = list(result.prefix_choices) + list(result.cycle_choices)
    states = tuple(graph.state(h) for h in nodes)
    return explorer.Trace(states, tuple(choices),
                          lasso_start=len(result.prefix) - 1,
                          strict=graph.strict, idle_mode=graph.idle_mode)


# ---------------------------------------------------------------------------
# individual property checks
# ---------------------------------------------------------------------------


def _check_deadlock_freedom(config: KernelConfig, bodies: dict[str, TaskBody],
                            *, bound: int, idle_mode: str,
                            workers: int) -> PropertyResult:
    """Strict-error search: service errors freeze and count as dead ends."""
    search = explorer.search_final(config, bodies, bound=bound, strict=True,
                                   idle_mode=idle_mode, workers=workers)
    if search.deadlocks:
        shortest = search.deadlocks[0]
        return PropertyResult(
            "DF", "fail", shortest.trace,
            f"{len(search.deadlocks)} dead end(s); shortest witness has "
            f"{len(shortest.trace.states) - 1} steps and halts at counter "
            f"{shortest.state.counter_value}")
    verdict = "bounded_pass" if search.truncated else "pass"
    return PropertyResult("DF", verdict, None,
                          f"{search.visited} states, "
                          f"{len(search.finals)} all-idle final(s)")


def _check_mutual_exclusion(graph: explorer.StateGraph) -> PropertyResult:
    for node, state in graph.nodes.items():
        running_cells = [c.id for c in state.tasks if c.state == RUNNING]
        consistent = (state.running is None and not running_cells) or (
            len(running_cells) == 1 and running_cells[0] == state.running)
        if len(running_cells) > 1 or not consistent:
            return PropertyResult("ME", "fail", graph.trace_to(node),
                                  f"running cells: {running_cells}")
    verdict = "bounded_pass" if graph.truncated else "pass"
    return PropertyResult("ME", verdict, None,
                          f"{len(graph.nodes)} states scanned")


def _check_priority_inversion(graph: explorer.StateGraph) -> PropertyResult:
    """At quiescent states (no pending signals) a full-preemptive running
    task must hold the highest current priority."""
    config = graph.state(graph.initial).config
    for node, state in graph.nodes.items():
        if state.status != NORMAL or state.signals or state.running is None:
            continue
        if config.tasks[state.running].schedule != FULL:
            continue
        running_priority = state.task_cell(state.running).current_priority
        for cell in state.tasks:
            if cell.state == READY and cell.current_priority > running_priority:
                return PropertyResult(
                    "PIF", "fail", graph.trace_to(node),
                    f"ready task {cell.id} (priority "
                    f"{cell.current_priority}) outranks running "
                    f"{state.running} (priority {running_priority})")
    verdict = "bounded_pass" if graph.truncated else "pass"
    return PropertyResult("PIF", verdict, None,
                          f"{len(graph.nodes)} states scanned")


def _starvation_pairs(config: KernelConfig) -> list[tuple[str, str]]:
    return [(event, task.id) for task in config.tasks.values()
            if task.is_extended for event in sorted(task.events)]


def starvation_formula(event: str, task: str) -> ltl.Formula:
    return ltl.Globally(ltl.Implies(ltl.Prop("wait", (event, task)),
                                    ltl.Future(ltl.Prop("set",
                                                        (event, task)))))


def _check_starvation_freedom(graph: explorer.StateGraph) -> PropertyResult:
    config = graph.state(graph.initial).config
    pairs = _starvation_pairs(config)
    view = ltl.KernelGraphView(graph)
    bounded = False
    for event, task in pairs:
        result = ltl.model_check(view, starvation_formula(event, task))
        if result.verdict == "violated":
            return PropertyResult(
                "SF", "fail", lasso_to_trace(graph, result),
                f"task {task} can wait for {event} forever")
        if result.verdict == "bounded_holds":
            bounded = True
    detail = f"{len(pairs)} wait/set pair(s) checked"
    return PropertyResult("SF", "bounded_pass" if bounded else "pass", None,
                          detail)


def _edge_completes(label: TransitionLabel, task: str) -> bool:
    return (label.kind == "service" and label.task == task
            and label.service in ("TerminateTask", "ChainTask")
            and label.status == E_OK)


def _edge_activates(label: TransitionLabel, alarm_id: str) -> bool:
    return any(f.alarm == alarm_id and f.action == "activatetask"
               and f.status == E_OK for f in label.firings)


def _check_periodic_execution(graph: explorer.StateGraph) -> PropertyResult:
    """Monitor composition: count completions of the activated task between
    consecutive successful expiry activations of each alarm."""
    config = graph.state(graph.initial).config
    monitored = [a for a in config.alarms.values()
                 if a.action.kind == "activatetask"]
    for alarm in monitored:
        task = alarm.action.task
        start = (graph.initial, "pre")
        seen = {start}
        parents: dict = {start: None}
        queue = [start]
        while queue:
            current = queue.pop(0)
            node, count = current
            for choice, target in graph.successors_of(node):
                label = graph.state(target).last_label
                nxt = count
                bad = None
                if _edge_activates(label, alarm.id):
                    if count == 0:
                        bad = (f"alarm {alarm.id}: window closed with no "
                               f"completion of {task}")
                    nxt = 0
                elif _edge_completes(label, task) and count != "pre":
                    nxt = count + 1
                    if nxt > 1:
                        bad = (f"alarm {alarm.id}: {task} completed twice "
                               "within one activation window")
                succ = (target, nxt)
                if bad is not None:
                    path_nodes = [target]
                    walk = current
                    while walk is not None:
                        path_nodes.append(walk[0])
                        walk = parents[walk]
                    path_nodes.reverse()
                    witness = _path_trace(graph, path_nodes)
                    return PropertyResult("PE", "fail", witness, bad)
                if succ not in seen:
                    seen.add(succ)
                    parents[succ] = current
                    queue.append(succ)
    verdict = "bounded_pass" if graph.truncated else "pass"
    return PropertyResult("PE", verdict, None,
                          f"{len(monitored)} alarm(s) monitored")


def _path_trace(graph: explorer.StateGraph,
                nodes: list[str]) -> explorer.Trace:
    """Trace along an explicit node path, looking up the edge choices."""
    choices = []
    for source, target in zip(nodes, nodes[1:]):
        for choice, dst in graph.successors_of(source):
            if dst == target:
                choices.append(choice)
                break
        else:
            raise ValueError("path does not follow graph edges")
    states = tuple(graph.state(h) for h in nodes)
    return explorer.Trace(states, tuple(choices), strict=graph.strict,
                          idle_mode=graph.idle_mode)


def _check_multiple_activation(graph: explorer.StateGraph) -> PropertyResult:
    """Activation overflow on single-activation tasks must never happen."""
    config = graph.state(graph.initial).config

    def overflow(label: TransitionLabel) -> str | None:
        if (label.kind == "service" and label.status == E_OS_LIMIT
                and label.service in ("ActivateTask", "ChainTask")):
            target = label.args[0]
            if config.tasks[target].max_activations == 1:
                return f"{label.service} overflowed task {target}"
        for firing in label.firings:
            if (firing.action == "activatetask"
                    and firing.status == E_OS_LIMIT
                    and config.tasks[firing.target].max_activations == 1):
                return (f"alarm {firing.alarm} overflowed task "
                        f"{firing.target}")
        return None

    for node, state in graph.nodes.items():
        reason = overflow(state.last_label)
        if reason is not None:
            return PropertyResult("MAF", "fail", graph.trace_to(node),
                                  reason)
    verdict = "bounded_pass" if graph.truncated else "pass"
    return PropertyResult("MAF", verdict, None,
                          f"{len(graph.nodes)} states scanned")


# ---------------------------------------------------------------------------
# verification driver
# ---------------------------------------------------------------------------


def verify_all(config: KernelConfig, bodies: dict[str, TaskBody], *,
               bound: int = 10_000, idle_mode: str = timing.JUMP,
               workers: int = 1,
               properties: tuple[str, ...] | None = None
               ) -> dict[str, PropertyResult]:
    """Run the selected property checks, sharing one exploration per mode.

    Deadlock freedom explores with strict error handling (a service error is
    a dead end); the other properties observe error labels on the default
    continue-on-error semantics.
    """
    selected = tuple(properties) if properties is not None else PROPERTY_ORDER
    unknown = [p for p in selected if p not in PROPERTY_ORDER]
    if unknown:
        raise AdjudicationError(f"unknown properties: {', '.join(unknown)}")
    results: dict[str, PropertyResult] = {}
    graph: explorer.StateGraph | None = None
    if any(p != "DF" for p in selected):
        graph = explorer.build_graph(config, bodies, bound=bound,
                                     strict=False, idle_mode=idle_mode,
                                     workers=workers)
    for pid in selected:
        if pid == "DF":
            results[pid] = _check_deadlock_freedom(
                config, bodies, bound=bound, idle_mode=idle_mode,
                workers=workers)
        elif pid == "ME":
            results[pid] = _check_mutual_exclusion(graph)
        elif pid == "PIF":
            results[pid] = _check_priority_inversion(graph)
        elif pid == "SF":
            results[pid] = _check_starvation_freedom(graph)
        elif pid == "PE":
            results[pid] = _check_periodic_execution(graph)
        elif pid == "MAF":
            results[pid] = _check_multiple_activation(graph)
    return results


# ---------------------------------------------------------------------------
# adjudication
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerdictRow:
    property_id: str
    origin: str
    verification: str  # "pass" | "fail"
    testing: str       # "pass" | "fail"
    kernel_conform: bool
    app_conform: bool
    bounded: bool


def parse_test_report(text: str) -> dict[str, str]:
    """Parse ``property = pass|fail`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise AdjudicationError(
                f"test report line {lineno}: expected 'property = verdict'")
        name, verdict = (part.strip() for part in line.split("=", 1))
        if verdict not in ("pass", "fail"):
            raise AdjudicationError(
                f"test report line {lineno}: verdict must be pass or fail, "
                f"got {verdict!r}")
        if name in out:
            raise AdjudicationError(
                f"test report line {lineno}: duplicate entry for {name}")
        out[name] = verdict
    return out


def adjudicate(verification: dict[str, PropertyResult],
               testing: dict[str, str]) -> tuple[VerdictRow, ...]:
    """Cross the two verdict sources into conformance attributions.

    Agreement on pass clears both kernel and application.  Verification
    pass with testing fail blames the kernel implementation.  Verification
    fail with testing pass means the kernel masks an application fault, so
    both are inconformant.  Agreement on fail blames the application alone.
    """
    rows = []
    for pid, result in verification.items():
        if pid not in testing:
            raise AdjudicationError(f"test report has no entry for {pid}")
        verified = result.passed
        tested = testing[pid] == "pass"
        if verified and tested:
            kernel, app = True, True
        elif verified and not tested:
            kernel, app = False, True
        elif not verified and tested:
            kernel, app = False, False
        else:
            kernel, app = True, False
        rows.append(VerdictRow(
            pid, _ORIGINS.get(pid, "application"),
            "pass" if verified else "fail",
            "pass" if tested else "fail", kernel, app,
            result.verdict == "bounded_pass"))
    return tuple(rows)


def emit_report(rows: tuple[VerdictRow, ...],
                results: dict[str, PropertyResult] | None = None,
                witness_paths: dict[str, str] | None = None) -> str:
    """Render the adjudication as a human table plus machine-readable lines."""
    out = ["conformance report", "==================", ""]
    header = (f"{'property':<9} {'origin':<12} {'verification':<13} "
              f"{'testing':<8} {'kernel':<7} application")
    out.append(header)
    out.append("-" * len(header))
    for row in rows:
        verification = row.verification + ("*" if row.bounded else "")
        out.append(f"{row.property_id:<9} {row.origin:<12} "
                   f"{verification:<13} {row.testing:<8} "
                   f"{'ok' if row.kernel_conform else 'FAULT':<7} "
                   f"{'ok' if row.app_conform else 'FAULT'}")
    if any(row.bounded for row in rows):
        out.append("(* verified only up to the exploration bound)")
    out.append("")
    kernel_bad = [r.property_id for r in rows if not r.kernel_conform]
    app_bad = [r.property_id for r in rows if not r.app_conform]
    out.append("kernel implementation: "
               + (f"inconformant ({', '.join(kernel_bad)})" if kernel_bad
                  else "conformant"))
    out.append("application: "
               + (f"inconformant ({', '.join(app_bad)})" if app_bad
                  else "conformant"))
    out.append("")
    if results:
        out.append("details:")
        for pid in sorted(results):
            out.append(f"  {pid}: {results[pid].detail}")
        out.append("")
    machine = []
    for row in rows:
        machine.append(f"verdict.{row.property_id}.verification = "
                       f"{row.verification}")
        machine.append(f"verdict.{row.property_id}.testing = {row.testing}")
        machine.append(f"verdict.{row.property_id}.kernel = "
                       f"{'conformant' if row.kernel_conform else 'inconformant'}")
        machine.append(f"verdict.{row.property_id}.application = "
                       f"{'conformant' if row.app_conform else 'inconformant'}")
        machine.append(f"verdict.{row.property_id}.bounded = "
                       f"{'yes' if row.bounded else 'no'}")
        if witness_paths and row.property_id in witness_paths:
            machine.append(f"witness.{row.property_id} = "
                           f"{witness_paths[row.property_id]}")
    out.extend(sorted(machine))
    return "\n".join(out) + "\n"
