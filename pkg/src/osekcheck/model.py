"""Immutable kernel state and its canonical textual snapshot.

The state mirrors a configuration-style cell layout: one cell per task, a
priority-ordered ready structure, the running task, a pending-signal set, the
system counter, the list of armed alarms and the label of the transition that
produced the state.  States are frozen dataclasses; every transition builds a
new state.  ``canonical_snapshot`` renders all semantic cells into a stable
text form used for deduplication, hashing and replay comparison.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

from .oil_config import AlarmAction, KernelConfig
from .task_lang import Statement, TaskBody, compact_statement

# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

SUSPENDED = "suspended"
READY = "ready"
RUNNING = "running"
WAITING = "waiting"

NORMAL = "normal"
ALLIDLE = "allidle"
DEADLOCK = "deadlock"

E_OK = "E_OK"
E_OS_ACCESS = "E_OS_ACCESS"
E_OS_LIMIT = "E_OS_LIMIT"
E_OS_NOFUNC = "E_OS_NOFUNC"
E_OS_RESOURCE = "E_OS_RESOURCE"
E_OS_STATE = "E_OS_STATE"
E_OS_VALUE = "E_OS_VALUE"

ERROR_CODES = (E_OS_ACCESS, E_OS_LIMIT, E_OS_NOFUNC, E_OS_RESOURCE,
               E_OS_STATE, E_OS_VALUE)

SCHEDULE_SIGNAL = ("schedule",)


def alarmed_signal(alarm_id: str) -> tuple[str, str]:
    return ("alarmed", alarm_id)


def error_status(code: str) -> str:
    return f"error:{code}"


# ---------------------------------------------------------------------------
# runtime program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoopBack:
    """Marker closing a while(true) body; expands back to the body."""

    body: tuple[Statement, ...]


RuntimeStatement = Statement | LoopBack


def normalize_program(program: tuple) -> tuple:
    """Expand loop-back markers until the front is a real statement."""
    while program and isinstance(program[0], LoopBack):
        back = program[0]
        program = back.body + (back,) + program[1:]
    return program


def render_program(program: tuple) -> str:
    parts = []
    for stmt in program:
        if isinstance(stmt, LoopBack):
            parts.append("@{" + ";".join(compact_statement(s)
                                         for s in stmt.body) + "}")
        else:
            parts.append(compact_statement(stmt))
    return ";".join(parts) if parts else "-"


# ---------------------------------------------------------------------------
# cells
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskCell:
    id: str
    state: str
    static_priority: int
    current_priority: int
    max_activations: int
    pending_activations: int
    set_events: frozenset[str]
    waiting_for: str | None
    held_resources: tuple[str, ...]
    program: tuple


@dataclass(frozen=True)
class AlarmCell:
    id: str
    alarm_time: int | None  # None until first armed
    cycle_time: int
    action: AlarmAction

    @property
    def cyclic(self) -> bool:
        return self.cycle_time != 0


# ---------------------------------------------------------------------------
# transition labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlarmFiring:
    """Outcome of a single alarm expiry within an expiry-handling step."""

    alarm: str
    action: str  # "activatetask" | "setevent" | "alarmcallback"
    target: str | None
    event: str | None
    status: str


@dataclass(frozen=True)
class TransitionLabel:
    kind: str  # "boot" | "service" | "alarm" | "signal" | "time"
    task: str | None = None
    service: str | None = None
    args: tuple = ()
    status: str | None = None
    firings: tuple[AlarmFiring, ...] = ()
    amount: int = 0
    reason: str | None = None  # time: "interval" | "idle" | "loop" | "stutter"
    detail: str | None = None


BOOT_LABEL = TransitionLabel(kind="boot")
STUTTER_LABEL = TransitionLabel(kind="time", reason="stutter")


def canonical_label(label: TransitionLabel) -> str:
    """Stable one-line form; time-advance amounts are left out so that the
    jump and unit idle modes agree on snapshots."""
    if label.kind == "boot":
        return "boot"
    if label.kind == "service":
        args = ",".join(str(a) for a in label.args)
        text = f"svc:{label.task}:{label.service}({args}):{label.status}"
        if label.detail:
            text += f":{label.detail}"
        return text
    if label.kind == "alarm":
        parts = []
        for f in label.firings:
            target = f.target or f.event or ""
            if f.action == "setevent":
                target = f"{f.target}:{f.event}"
            parts.append(f"{f.alarm}>{f.action}:{target}={f.status}")
        return "alarm:" + ";".join(parts)
    if label.kind == "signal":
        return f"sig:{label.detail}"
    if label.kind == "time":
        return f"time:{label.reason}"
    raise ValueError(f"unknown label kind {label.kind!r}")


def label_text(label: TransitionLabel) -> str:
    """Human-readable label for trace listings."""
    if label.kind == "boot":
        return "boot"
    if label.kind == "service":
        args = ", ".join(str(a) for a in label.args)
        text = f"{label.task}: {label.service}({args}) -> {label.status}"
        if label.detail:
            text += f" [{label.detail}]"
        return text
    if label.kind == "alarm":
        parts = [f"{f.alarm} expired: {f.action}"
                 + (f" {f.target}" if f.target else "")
                 + (f"/{f.event}" if f.event else "")
                 + f" -> {f.status}" for f in label.firings]
        return "; ".join(parts)
    if label.kind == "signal":
        return f"scheduler: {label.detail}"
    if label.kind == "time":
        if label.reason == "stutter":
            return "stutter"
        return f"time +{label.amount} ({label.reason})"
    return canonical_label(label)


# ---------------------------------------------------------------------------
# kernel state
# ---------------------------------------------------------------------------

ReadyQueues = tuple[tuple[int, tuple[str, ...]], ...]


@dataclass(frozen=True)
class KernelState:
    config: KernelConfig = field(compare=False)
    bodies: dict[str, TaskBody] = field(compare=False)
    tasks: tuple[TaskCell, ...] = ()
    ready: ReadyQueues = ()
    running: str | None = None
    signals: frozenset = frozenset()
    counter_value: int = 0
    working_alarms: tuple[str, ...] = ()
    alarms: tuple[AlarmCell, ...] = ()
    last_label: TransitionLabel = BOOT_LABEL
    status: str = NORMAL

    # -- cell access -------------------------------------------------------

    def task_cell(self, task_id: str) -> TaskCell:
        for cell in self.tasks:
            if cell.id == task_id:
                return cell
        raise KeyError(task_id)

    def alarm_cell(self, alarm_id: str) -> AlarmCell:
        for cell in self.alarms:
            if cell.id == alarm_id:
                return cell
        raise KeyError(alarm_id)

    def with_task(self, cell: TaskCell) -> "KernelState":
        tasks = tuple(cell if c.id == cell.id else c for c in self.tasks)
        return replace(self, tasks=tasks)

    def with_alarm(self, cell: AlarmCell) -> "KernelState":
        alarms = tuple(cell if c.id == cell.id else c for c in self.alarms)
        return replace(self, alarms=alarms)

    @property
    def max_allowed_value(self) -> int:
        return self.config.system_counter.max_allowed_value

    @property
    def min_cycle(self) -> int:
        return self.config.system_counter.min_cycle


def is_deadlocked(state: KernelState) -> bool:
    """True on explored dead ends: scheduler stuck or a frozen error state."""
    return state.status == DEADLOCK or state.status.startswith("error:")


def stutterize(state: KernelState, status: str | None = None) -> KernelState:
    """Terminal fixpoint twin of ``state``: same cells, stutter label."""
    return replace(state, status=status if status is not None else state.status,
                   last_label=STUTTER_LABEL)


# ---------------------------------------------------------------------------
# ready-queue helpers (queues keyed by priority, highest first)
# ---------------------------------------------------------------------------


def enqueue(ready: ReadyQueues, priority: int, task_id: str,
            at_head: bool = False) -> ReadyQueues:
    queues = {prio: list(q) for prio, q in ready}
    queue = queues.setdefault(priority, [])
    if at_head:
        queue.insert(0, task_id)
    else:
        queue.append(task_id)
    return tuple((prio, tuple(queues[prio]))
                 for prio in sorted(queues, reverse=True) if queues[prio])


def peek_highest(ready: ReadyQueues) -> tuple[int, str] | None:
    for prio, queue in ready:
        if queue:
            return prio, queue[0]
    return None


def pop_highest(ready: ReadyQueues) -> tuple[int, str, ReadyQueues]:
    top = peek_highest(ready)
    if top is None:
        raise ValueError("ready structure is empty")
    prio, task_id = top
    queues = [(p, q[1:] if p == prio else q) for p, q in ready]
    return prio, task_id, tuple((p, q) for p, q in queues if q)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------


def canonical_snapshot(state: KernelState) -> str:
    """Deterministic textual form of every semantic cell."""
    lines = [
        f"counter={state.counter_value}",
        f"status={state.status}",
        f"running={state.running or '-'}",
    ]
    if state.signals:
        sig_texts = sorted(":".join(sig) for sig in state.signals)
        lines.append("signals=" + "|".join(sig_texts))
    else:
        lines.append("signals=-")
    if state.ready:
        parts = [f"{prio}:{','.join(queue)}" for prio, queue in state.ready]
        lines.append("ready=" + ";".join(parts))
    else:
        lines.append("ready=-")
    lines.append("working=" + ("|".join(state.working_alarms) or "-"))
    lines.append("label=" + canonical_label(state.last_label))
    for cell in state.tasks:
        events = "|".join(sorted(cell.set_events)) or "-"
        resources = "|".join(cell.held_resources) or "-"
        lines.append(
            f"task={cell.id} st={cell.state} sp={cell.static_priority} "
            f"cp={cell.current_priority} act={cell.max_activations}/"
            f"{cell.pending_activations} ev={events} "
            f"w={cell.waiting_for or '-'} res={resources} "
            f"pgm={render_program(cell.program)}")
    for cell in state.alarms:
        at = "-" if cell.alarm_time is None else str(cell.alarm_time)
        lines.append(f"alarm={cell.id} at={at} ct={cell.cycle_time}")
    return "\n".join(lines)


def state_hash(state: KernelState) -> str:
    return hashlib.sha256(canonical_snapshot(state).encode()).hexdigest()


def short_hash(state: KernelState) -> str:
    return state_hash(state)[:12]
