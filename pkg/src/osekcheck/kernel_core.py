"""Task, event and resource services plus scheduler signal handling.

Service functions take a state and return the successor state; nothing is
mutated.  Every service charges one counter tick through
:func:`timing.finish_service`, including failing calls, whose error code is
recorded in the transition label (and, under strict error handling, freezes
the state).  Scheduler signal handling (expiry actions, pending-activation
release, rescheduling) consumes no time.
"""

from __future__ import annotations

from dataclasses import replace

from . import timing
from .model import (BOOT_LABEL, E_OK, E_OS_ACCESS, E_OS_LIMIT, E_OS_NOFUNC,
                    E_OS_RESOURCE, E_OS_STATE, NORMAL, READY, RUNNING,
                    SCHEDULE_SIGNAL, SUSPENDED, WAITING, AlarmCell,
                    AlarmFiring, KernelState, TaskCell, TransitionLabel,
                    alarmed_signal, enqueue, error_status, normalize_program,
                    peek_highest, pop_highest)
from .oil_config import FULL, KernelConfig
from .task_lang import (CallService, TaskBody, TimeInterval, WhileTrue)


class BootError(Exception):
    """Raised when the configuration cannot produce an initial state."""


# ---------------------------------------------------------------------------
# boot
# ---------------------------------------------------------------------------


def boot(config: KernelConfig, bodies: dict[str, TaskBody]) -> KernelState:
    """Build the initial state: autostart tasks ready, highest dispatched.

    Autostart alarms are armed relative to counter zero, so an offset of zero
    raises its expiry signal immediately.
    """
    missing = [t for t in config.tasks if t not in bodies]
    if missing:
        raise BootError(f"tasks without bodies: {', '.join(missing)}")
    modulus = config.system_counter.max_allowed_value + 1

    cells = []
    for task in config.tasks.values():
        cells.append(TaskCell(
            id=task.id, state=SUSPENDED, static_priority=task.priority,
            current_priority=task.priority,
            max_activations=task.max_activations, pending_activations=0,
            set_events=frozenset(), waiting_for=None, held_resources=(),
            program=tuple(bodies[task.id].statements)))

    autostart = [c for c in cells if config.tasks[c.id].autostart]
    if not autostart:
        raise BootError("no autostart task; nothing would ever run")
    ready: tuple = ()
    for cell in autostart:
        ready = enqueue(ready, cell.static_priority, cell.id)
    _, first, ready = pop_highest(ready)
    cells = [replace(c, state=RUNNING if c.id == first else READY)
             if config.tasks[c.id].autostart else c for c in cells]

    alarm_cells = []
    working: list[str] = []
    signals: set = set()
    for alarm in config.alarms.values():
        alarm_time = None
        cycle = 0
        if alarm.autostart:
            offset = alarm.autostart_offset or 0
            cycle = alarm.autostart_cycle or 0
            alarm_time = offset % modulus
            working.append(alarm.id)
            if offset == 0:
                signals.add(alarmed_signal(alarm.id))
        alarm_cells.append(AlarmCell(alarm.id, alarm_time, cycle,
                                     alarm.action))

    return KernelState(
        config=config, bodies=bodies, tasks=tuple(cells), ready=ready,
        running=first, signals=frozenset(signals), counter_value=0,
        working_alarms=tuple(working), alarms=tuple(alarm_cells),
        last_label=BOOT_LABEL, status=NORMAL)


# ---------------------------------------------------------------------------
# activation and event delivery helpers (shared with alarm expiry actions)
# ---------------------------------------------------------------------------


def _fresh_cell(state: KernelState, cell: TaskCell) -> TaskCell:
    """Reset a cell for a new activation: full body, no events, base priority."""
    return replace(cell, set_events=frozenset(), waiting_for=None,
                   current_priority=cell.static_priority,
                   program=tuple(state.bodies[cell.id].statements))


def activation_status(cell: TaskCell) -> str:
    """Would one more activation request be accepted for this cell?

    The live instance (any non-suspended state) and recorded pending requests
    together may not exceed the task's activation limit.
    """
    live = 0 if cell.state == SUSPENDED else 1
    if live + cell.pending_activations + 1 <= cell.max_activations:
        return E_OK
    return E_OS_LIMIT


def _apply_activation(state: KernelState, target: str
                      ) -> tuple[KernelState, str]:
    """Activate ``target``: make it ready now or record the request."""
    cell = state.task_cell(target)
    status = activation_status(cell)
    if status != E_OK:
        return state, status
    if cell.state == SUSPENDED and cell.pending_activations == 0:
        fresh = replace(_fresh_cell(state, cell), state=READY)
        state = state.with_task(fresh)
        state = replace(
            state,
            ready=enqueue(state.ready, fresh.current_priority, target),
            signals=state.signals | {SCHEDULE_SIGNAL})
    else:
        state = state.with_task(replace(
            cell, pending_activations=cell.pending_activations + 1))
    return state, E_OK


def _apply_set_event(state: KernelState, target: str, event: str
                     ) -> tuple[KernelState, str]:
    """Deliver an event to ``target``, waking it if it waits for the event."""
    cell = state.task_cell(target)
    task_def = state.config.tasks[target]
    if not task_def.is_extended or event not in task_def.events:
        return state, E_OS_ACCESS
    if cell.state == SUSPENDED:
        return state, E_OS_STATE
    cell = replace(cell, set_events=cell.set_events | {event})
    if cell.state == WAITING and cell.waiting_for == event:
        cell = replace(cell, state=READY, waiting_for=None)
        state = state.with_task(cell)
        state = replace(
            state,
            ready=enqueue(state.ready, cell.current_priority, target),
            signals=state.signals | {SCHEDULE_SIGNAL})
    else:
        state = state.with_task(cell)
    return state, E_OK


# ---------------------------------------------------------------------------
# task services
# ---------------------------------------------------------------------------


def svc_activate_task(state: KernelState, caller: str, target: str, *,
                      strict: bool = False) -> KernelState:
    state, status = _apply_activation(state, target)
    return timing.finish_service(state, caller, "ActivateTask", (target,),
                                 status, strict=strict)


def svc_terminate_task(state: KernelState, caller: str, *,
                       strict: bool = False,
                       implicit: bool = False) -> KernelState:
    """End the running task's current activation.

    With resources still held the call fails and the task keeps running.  An
    implicit terminate (body ran out of statements) carries a detail marker.
    """
    detail = "implicit" if implicit else None
    cell = state.task_cell(caller)
    if cell.held_resources:
        return timing.finish_service(state, caller, "TerminateTask", (),
                                     E_OS_RESOURCE, consume=not implicit,
                                     detail=detail, strict=strict)
    state = state.with_task(replace(_fresh_cell(state, cell),
                                    state=SUSPENDED))
    state = replace(state, running=None,
                    signals=state.signals | {SCHEDULE_SIGNAL})
    return timing.finish_service(state, caller, "TerminateTask", (), E_OK,
                                 consume=False, detail=detail, strict=strict)


def svc_chain_task(state: KernelState, caller: str, target: str, *,
                   strict: bool = False) -> KernelState:
    """Terminate the caller and activate ``target`` in one atomic service.

    Chaining the caller itself records a pending activation without raising a
    scheduling signal.  If the activation would exceed the target's limit the
    whole call fails and the caller keeps running.
    """
    cell = state.task_cell(caller)
    if cell.held_resources:
        return timing.finish_service(state, caller, "ChainTask", (target,),
                                     E_OS_RESOURCE, strict=strict)
    if target == caller:
        if cell.pending_activations + 1 > cell.max_activations:
            return timing.finish_service(state, caller, "ChainTask",
                                         (target,), E_OS_LIMIT,
                                         strict=strict)
        fresh = replace(_fresh_cell(state, cell), state=SUSPENDED,
                        pending_activations=cell.pending_activations + 1)
        state = replace(state.with_task(fresh), running=None)
        return timing.finish_service(state, caller, "ChainTask", (target,),
                                     E_OK, consume=False, strict=strict)
    if activation_status(state.task_cell(target)) != E_OK:
        return timing.finish_service(state, caller, "ChainTask", (target,),
                                     E_OS_LIMIT, strict=strict)
    state, _ = _apply_activation(state, target)
    cell = state.task_cell(caller)
    state = state.with_task(replace(_fresh_cell(state, cell),
                                    state=SUSPENDED))
    state = replace(state, running=None,
                    signals=state.signals | {SCHEDULE_SIGNAL})
    return timing.finish_service(state, caller, "ChainTask", (target,),
                                 E_OK, consume=False, strict=strict)


def svc_schedule(state: KernelState, caller: str, *,
                 strict: bool = False) -> KernelState:
    """Voluntary scheduling point; lets higher-priority ready tasks in."""
    state = replace(state, signals=state.signals | {SCHEDULE_SIGNAL})
    return timing.finish_service(state, caller, "Schedule", (), E_OK,
                                 strict=strict)


# ---------------------------------------------------------------------------
# event services
# ---------------------------------------------------------------------------


def svc_set_event(state: KernelState, caller: str, target: str, event: str,
                  *, strict: bool = False) -> KernelState:
    state, status = _apply_set_event(state, target, event)
    return timing.finish_service(state, caller, "SetEvent", (target, event),
                                 status, strict=strict)


def svc_clear_event(state: KernelState, caller: str, event: str, *,
                    strict: bool = False) -> KernelState:
    task_def = state.config.tasks[caller]
    if not task_def.is_extended or event not in task_def.events:
        return timing.finish_service(state, caller, "ClearEvent", (event,),
                                     E_OS_ACCESS, strict=strict)
    cell = state.task_cell(caller)
    state = state.with_task(replace(cell,
                                    set_events=cell.set_events - {event}))
    return timing.finish_service(state, caller, "ClearEvent", (event,),
                                 E_OK, strict=strict)


def svc_wait_event(state: KernelState, caller: str, event: str, *,
                   strict: bool = False) -> KernelState:
    """Wait until ``event`` is set for the caller.

    If the event is pending the call returns at once.  Otherwise the caller
    blocks and the statement stays in its program: the call is re-issued
    (and charged again) when the task resumes, which is when it consumes.
    """
    task_def = state.config.tasks[caller]
    if not task_def.is_extended or event not in task_def.events:
        return timing.finish_service(state, caller, "WaitEvent", (event,),
                                     E_OS_ACCESS, strict=strict)
    cell = state.task_cell(caller)
    if cell.held_resources:
        return timing.finish_service(state, caller, "WaitEvent", (event,),
                                     E_OS_RESOURCE, strict=strict)
    if event in cell.set_events:
        return timing.finish_service(state, caller, "WaitEvent", (event,),
                                     E_OK, strict=strict)
    state = state.with_task(replace(cell, state=WAITING, waiting_for=event))
    state = replace(state, running=None,
                    signals=state.signals | {SCHEDULE_SIGNAL})
    return timing.finish_service(state, caller, "WaitEvent", (event,), E_OK,
                                 consume=False, detail="blocked",
                                 strict=strict)


# ---------------------------------------------------------------------------
# resource services (immediate priority ceiling)
# ---------------------------------------------------------------------------


def svc_get_resource(state: KernelState, caller: str, resource: str, *,
                     strict: bool = False) -> KernelState:
    """Occupy a resource and raise the caller to its ceiling priority."""
    task_def = state.config.tasks[caller]
    held_anywhere = any(resource in c.held_resources for c in state.tasks)
    if resource not in task_def.resources or held_anywhere:
        return timing.finish_service(state, caller, "GetResource",
                                     (resource,), E_OS_ACCESS, strict=strict)
    cell = state.task_cell(caller)
    ceiling = state.config.ceiling(resource)
    cell = replace(cell, held_resources=cell.held_resources + (resource,),
                   current_priority=max(cell.current_priority, ceiling))
    return timing.finish_service(state.with_task(cell), caller,
                                 "GetResource", (resource,), E_OK,
                                 strict=strict)


def svc_release_resource(state: KernelState, caller: str, resource: str, *,
                         strict: bool = False) -> KernelState:
    """Release the most recently taken resource and drop back in priority."""
    cell = state.task_cell(caller)
    if not cell.held_resources or cell.held_resources[-1] != resource:
        return timing.finish_service(state, caller, "ReleaseResource",
                                     (resource,), E_OS_NOFUNC, strict=strict)
    held = cell.held_resources[:-1]
    priority = max([cell.static_priority]
                   + [state.config.ceiling(r) for r in held])
    cell = replace(cell, held_resources=held, current_priority=priority)
    state = state.with_task(cell)
    top = peek_highest(state.ready)
    if top is not None and top[0] > priority:
        state = replace(state, signals=state.signals | {SCHEDULE_SIGNAL})
    return timing.finish_service(state, caller, "ReleaseResource",
                                 (resource,), E_OK, strict=strict)


# ---------------------------------------------------------------------------
# signal handling (no time passes here)
# ---------------------------------------------------------------------------


def pending_expiries(state: KernelState) -> tuple[str, ...]:
    """Armed alarms whose expiry signal is pending, in arming order."""
    return tuple(a for a in state.working_alarms
                 if alarmed_signal(a) in state.signals)


def handle_expiries(state: KernelState, order: tuple[str, ...], *,
                    strict: bool = False) -> KernelState:
    """Apply all pending expiry actions in the given order, then rearm.

    Cyclic alarms advance their alarm time by the cycle even when the action
    fails; one-shot alarms disarm.  Under strict error handling a failing
    action freezes the state after the whole batch is applied.
    """
    modulus = state.max_allowed_value + 1
    firings: list[AlarmFiring] = []
    signals = set(state.signals)
    for alarm_id in order:
        signals.discard(alarmed_signal(alarm_id))
    state = replace(state, signals=frozenset(signals))
    for alarm_id in order:
        cell = state.alarm_cell(alarm_id)
        action = cell.action
        if action.kind == "activatetask":
            state, status = _apply_activation(state, action.task)
        elif action.kind == "setevent":
            state, status = _apply_set_event(state, action.task, action.event)
        else:
            status = E_OK
        firings.append(AlarmFiring(alarm_id, action.kind, action.task,
                                   action.event, status))
        cell = state.alarm_cell(alarm_id)
        if cell.cyclic:
            state = state.with_alarm(replace(
                cell, alarm_time=(cell.alarm_time + cell.cycle_time)
                % modulus))
        else:
            state = replace(state, working_alarms=tuple(
                a for a in state.working_alarms if a != alarm_id))
    label = TransitionLabel(kind="alarm", firings=tuple(firings))
    state = replace(state, last_label=label)
    if strict:
        bad = [f.status for f in firings if f.status != E_OK]
        if bad:
            state = replace(state, status=error_status(bad[0]))
    return state


def multiactivation_candidate(state: KernelState) -> str | None:
    """Suspended task with recorded activations, highest priority first."""
    best: TaskCell | None = None
    best_index = -1
    for index, cell in enumerate(state.tasks):
        if cell.state == SUSPENDED and cell.pending_activations > 0:
            if best is None or cell.static_priority > best.static_priority:
                best, best_index = cell, index
    return best.id if best is not None else None


def handle_multiactivation(state: KernelState) -> KernelState:
    """Turn one recorded activation into a ready task instance."""
    target = multiactivation_candidate(state)
    if target is None:
        raise ValueError("no pending activation to release")
    cell = state.task_cell(target)
    fresh = replace(_fresh_cell(state, cell), state=READY,
                    pending_activations=cell.pending_activations - 1)
    state = state.with_task(fresh)
    state = replace(
        state,
        ready=enqueue(state.ready, fresh.current_priority, target),
        signals=state.signals | {SCHEDULE_SIGNAL},
        last_label=TransitionLabel(kind="signal",
                                   detail=f"multiactivation:{target}"))
    return state


def handle_schedule_signal(state: KernelState) -> KernelState:
    """Consume the scheduling signal: dispatch, preempt or keep running.

    A full-preemptive running task is displaced only by a strictly higher
    current priority; the displaced task re-enters its queue at the head.
    """
    state = replace(state, signals=state.signals - {SCHEDULE_SIGNAL})
    top = peek_highest(state.ready)
    if state.running is None:
        if top is None:
            detail = "idle"
        else:
            _, task_id, ready = pop_highest(state.ready)
            state = replace(state.with_task(replace(
                state.task_cell(task_id), state=RUNNING)),
                ready=ready, running=task_id)
            detail = f"dispatch:{task_id}"
    else:
        running_cell = state.task_cell(state.running)
        policy = state.config.tasks[state.running].schedule
        if (policy == FULL and top is not None
                and top[0] > running_cell.current_priority):
            _, task_id, ready = pop_highest(state.ready)
            ready = enqueue(ready, running_cell.current_priority,
                            state.running, at_head=True)
            state = state.with_task(replace(running_cell, state=READY))
            state = state.with_task(replace(state.task_cell(task_id),
                                            state=RUNNING))
            state = replace(state, ready=ready, running=task_id)
            detail = f"preempt:{running_cell.id}>{task_id}"
        else:
            detail = "keep"
    return replace(state, last_label=TransitionLabel(kind="signal",
                                                     detail=detail))


# ---------------------------------------------------------------------------
# statement dispatch
# ---------------------------------------------------------------------------


def exec_running_statement(state: KernelState, *,
                           strict: bool = False) -> KernelState:
    """Execute the front statement of the running task."""
    caller = state.running
    if caller is None:
        raise ValueError("no running task")
    program = normalize_program(state.task_cell(caller).program)
    state = state.with_task(replace(state.task_cell(caller),
                                    program=program))
    if not program:
        return svc_terminate_task(state, caller, strict=strict,
                                  implicit=True)
    stmt = program[0]
    if isinstance(stmt, TimeInterval):
        return timing.exec_time_interval(state, caller, stmt.ticks)
    if isinstance(stmt, WhileTrue):
        return timing.exec_loop_entry(state, caller)
    assert isinstance(stmt, CallService)
    name, args = stmt.name, stmt.args
    if name == "ActivateTask":
        return svc_activate_task(state, caller, args[0], strict=strict)
    if name == "TerminateTask":
        return svc_terminate_task(state, caller, strict=strict)
    if name == "ChainTask":
        return svc_chain_task(state, caller, args[0], strict=strict)
    if name == "Schedule":
        return svc_schedule(state, caller, strict=strict)
    if name == "SetEvent":
        return svc_set_event(state, caller, args[0], args[1], strict=strict)
    if name == "ClearEvent":
        return svc_clear_event(state, caller, args[0], strict=strict)
    if name == "WaitEvent":
        return svc_wait_event(state, caller, args[0], strict=strict)
    if name == "GetResource":
        return svc_get_resource(state, caller, args[0], strict=strict)
    if name == "ReleaseResource":
        return svc_release_resource(state, caller, args[0], strict=strict)
    if name == "SetRelAlarm":
        return timing.svc_set_rel_alarm(state, caller, args[0], args[1],
                                        args[2], strict=strict)
    if name == "SetAbsAlarm":
        return timing.svc_set_abs_alarm(state, caller, args[0], args[1],
                                        args[2], strict=strict)
    if name == "CancelAlarm":
        return timing.svc_cancel_alarm(state, caller, args[0], strict=strict)
    raise ValueError(f"unknown service {name}")
