"""Linear temporal logic over kernel state graphs.

Formulas are checked with the automata-theoretic recipe: the negation is
translated into a Buchi automaton (tableau expansion, generalized acceptance
per until-subformula, counting degeneralization, then a small merge pass),
the automaton is composed with the reachability graph, and a nested
depth-first search looks for a reachable accepting cycle.  A found cycle is
returned as a lasso and refutes the formula; absence of cycles proves it on
the explored graph.

Atomic propositions are evaluated on a single state and its entry label, so
the product needs no extra bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (E_OK, ERROR_CODES, KernelState, alarmed_signal,
                    error_status, is_deadlocked)
from .oil_config import KernelConfig

# ---------------------------------------------------------------------------
# formula AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrueF:
    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class FalseF:
    def __str__(self) -> str:
        return "false"


@dataclass(frozen=True)
class Prop:
    name: str
    args: tuple = ()

    def __str__(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Not:
    sub: "Formula"

    def __str__(self) -> str:
        return f"!{_wrap(self.sub)}"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} & {_wrap(self.right)}"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} | {_wrap(self.right)}"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} -> {_wrap(self.right)}"


@dataclass(frozen=True)
class Next:
    sub: "Formula"

    def __str__(self) -> str:
        return f"X {_wrap(self.sub)}"


@dataclass(frozen=True)
class Future:
    sub: "Formula"

    def __str__(self) -> str:
        return f"<> {_wrap(self.sub)}"


@dataclass(frozen=True)
class Globally:
    sub: "Formula"

    def __str__(self) -> str:
        return f"[] {_wrap(self.sub)}"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} U {_wrap(self.right)}"


@dataclass(frozen=True)
class Release:
    """Dual of until; produced internally by negation normal form."""

    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} R {_wrap(self.right)}"


Formula = (TrueF | FalseF | Prop | Not | And | Or | Implies | Next | Future
           | Globally | Until | Release)

_ATOMIC = (TrueF, FalseF, Prop)


def _wrap(f: Formula) -> str:
    if isinstance(f, _ATOMIC) or isinstance(f, (Not, Next, Future, Globally)):
        return str(f)
    return f"({f})"


def unparse_formula(f: Formula) -> str:
    return str(f)


class LtlError(Exception):
    """Formula parse or validation failure."""


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_SYMBOLS = ("->", "[]", "<>", "||", "&&", "(", ")", ",", "!", "&", "|")


def _lex(text: str) -> list[str]:
    tokens: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append({"||": "|", "&&": "&"}.get(sym, sym))
                i += len(sym)
                break
        else:
            if ch.isalpha() or ch == "_":
                j = i + 1
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                tokens.append(text[i:j])
                i = j
            elif ch.isdigit():
                j = i + 1
                while j < n and text[j].isdigit():
                    j += 1
                tokens.append(text[i:j])
                i = j
            else:
                raise LtlError(f"unexpected character {ch!r} in formula")
    tokens.append("<eof>")
    return tokens


class _FCursor:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> str:
        return self.tokens[self.pos]

    def next(self) -> str:
        tok = self.tokens[self.pos]
        if tok != "<eof>":
            self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.next()
        if got != tok:
            raise LtlError(f"expected {tok!r}, found {got!r}")


def parse_ltl(text: str) -> Formula:
    """Parse a formula.  Operators, loosest first: ``->``, ``|``, ``&``,
    ``U`` (right associative), then ``!``/``X``/``F``/``G``/``[]``/``<>``."""
    cur = _FCursor(_lex(text))
    formula = _parse_implies(cur)
    if cur.peek() != "<eof>":
        raise LtlError(f"unexpected trailing {cur.peek()!r}")
    return formula


def _parse_implies(cur: _FCursor) -> Formula:
    left = _parse_or(cur)
    if cur.peek() == "->":
        cur.next()
        return Implies(left, _parse_implies(cur))
    return left


def _parse_or(cur: _FCursor) -> Formula:
    left = _parse_and(cur)
    while cur.peek() == "|":
        cur.next()
        left = Or(left, _parse_and(cur))
    return left


def _parse_and(cur: _FCursor) -> Formula:
    left = _parse_until(cur)
    while cur.peek() == "&":
        cur.next()
        left = And(left, _parse_until(cur))
    return left


def _parse_until(cur: _FCursor) -> Formula:
    left = _parse_unary(cur)
    if cur.peek() == "U":
        cur.next()
        return Until(left, _parse_until(cur))
    return left


def _parse_unary(cur: _FCursor) -> Formula:
    tok = cur.peek()
    if tok == "!":
        cur.next()
        return Not(_parse_unary(cur))
    if tok in ("X",):
        cur.next()
        return Next(_parse_unary(cur))
    if tok in ("F", "<>"):
        cur.next()
        return Future(_parse_unary(cur))
    if tok in ("G", "[]"):
        cur.next()
        return Globally(_parse_unary(cur))
    return _parse_atom(cur)


def _parse_atom(cur: _FCursor) -> Formula:
    tok = cur.next()
    if tok == "(":
        inner = _parse_implies(cur)
        cur.expect(")")
        return inner
    if tok == "true":
        return TrueF()
    if tok == "false":
        return FalseF()
    if tok == "<eof>" or not (tok[0].isalpha() or tok[0] == "_"):
        raise LtlError(f"expected a proposition, found {tok!r}")
    name = tok
    args: list = []
    if cur.peek() == "(":
        cur.next()
        if cur.peek() != ")":
            while True:
                arg = cur.next()
                if arg == "<eof>":
                    raise LtlError("unterminated argument list")
                args.append(int(arg) if arg.isdigit() else arg)
                if cur.peek() != ",":
                    break
                cur.next()
        cur.expect(")")
    return Prop(name, tuple(args))


# ---------------------------------------------------------------------------
# propositions
# ---------------------------------------------------------------------------

PROP_ARGS: dict[str, tuple[str, ...]] = {
    "running": ("task",),
    "ready": ("task",),
    "suspended": ("task",),
    "waiting": ("task",),
    "wait": ("event", "task"),
    "set": ("event", "task"),
    "expired": ("alarm",),
    "error": ("code",),
    "counter_eq": ("int",),
    "deadlocked": (),
}


def validate_formula(formula: Formula, config: KernelConfig) -> None:
    """Check proposition names, arities and identifiers against the
    configuration; raises LtlError."""
    for prop in iter_props(formula):
        kinds = PROP_ARGS.get(prop.name)
        if kinds is None:
            raise LtlError(f"unknown proposition {prop.name!r}")
        if len(prop.args) != len(kinds):
            raise LtlError(f"{prop.name} expects {len(kinds)} argument(s), "
                           f"got {len(prop.args)}")
        for kind, arg in zip(kinds, prop.args):
            if kind == "int":
                if not isinstance(arg, int):
                    raise LtlError(f"{prop}: expected an integer")
            elif kind == "task":
                if arg not in config.tasks:
                    raise LtlError(f"{prop}: unknown task {arg!r}")
            elif kind == "event":
                if arg not in config.events:
                    raise LtlError(f"{prop}: unknown event {arg!r}")
            elif kind == "alarm":
                if arg not in config.alarms:
                    raise LtlError(f"{prop}: unknown alarm {arg!r}")
            elif kind == "code":
                if arg not in ERROR_CODES:
                    raise LtlError(f"{prop}: unknown error code {arg!r}")


def iter_props(formula: Formula):
    if isinstance(formula, Prop):
        yield formula
    elif isinstance(formula, (Not, Next, Future, Globally)):
        yield from iter_props(formula.sub)
    elif isinstance(formula, (And, Or, Implies, Until, Release)):
        yield from iter_props(formula.left)
        yield from iter_props(formula.right)


def mentions_deadlock(formula: Formula) -> bool:
    return any(p.name == "deadlocked" for p in iter_props(formula))


def eval_prop(prop: Prop, state: KernelState) -> bool:
    """Evaluate one proposition on a state and its entry label."""
    name, args = prop.name, prop.args
    label = state.last_label
    if name == "running":
        return state.running == args[0]
    if name in ("ready", "suspended", "waiting"):
        return state.task_cell(args[0]).state == name
    if name == "wait":
        event, task = args
        return (label.kind == "service" and label.service == "WaitEvent"
                and label.task == task and label.args[:1] == (event,)
                and label.status == E_OK)
    if name == "set":
        event, task = args
        if (label.kind == "service" and label.service == "SetEvent"
                and label.args == (task, event) and label.status == E_OK):
            return True
        return any(f.action == "setevent" and f.target == task
                   and f.event == event and f.status == E_OK
                   for f in label.firings)
    if name == "expired":
        return alarmed_signal(args[0]) in state.signals
    if name == "error":
        code = args[0]
        return (label.status == code
                or any(f.status == code for f in label.firings)
                or state.status == error_status(code))
    if name == "counter_eq":
        return state.counter_value == args[0]
    if name == "deadlocked":
        return is_deadlocked(state)
    raise LtlError(f"unknown proposition {name!r}")


# ---------------------------------------------------------------------------
# negation normal form
# ---------------------------------------------------------------------------


def _nnf(f: Formula, negated: bool) -> Formula:
    if isinstance(f, TrueF):
        return FalseF() if negated else f
    if isinstance(f, FalseF):
        return TrueF() if negated else f
    if isinstance(f, Prop):
        return Not(f) if negated else f
    if isinstance(f, Not):
        return _nnf(f.sub, not negated)
    if isinstance(f, Implies):
        return _nnf(Or(Not(f.left), f.right), negated)
    if isinstance(f, And):
        cls = Or if negated else And
        return cls(_nnf(f.left, negated), _nnf(f.right, negated))
    if isinstance(f, Or):
        cls = And if negated else Or
        return cls(_nnf(f.left, negated), _nnf(f.right, negated))
    if isinstance(f, Next):
        return Next(_nnf(f.sub, negated))
    if isinstance(f, Future):
        return _nnf(Until(TrueF(), f.sub), negated)
    if isinstance(f, Globally):
        return _nnf(Release(FalseF(), f.sub), negated)
    if isinstance(f, Until):
        cls = Release if negated else Until
        return cls(_nnf(f.left, negated), _nnf(f.right, negated))
    if isinstance(f, Release):
        cls = Until if negated else Release
        return cls(_nnf(f.left, negated), _nnf(f.right, negated))
    raise LtlError(f"cannot normalize {f!r}")


def _negate_literal(f: Formula) -> Formula:
    return f.sub if isinstance(f, Not) else Not(f)


# ---------------------------------------------------------------------------
# tableau expansion into a generalized Buchi automaton
# ---------------------------------------------------------------------------

_INIT = -1


class _Node:
    __slots__ = ("id", "incoming", "new", "old", "next")

    def __init__(self, id: int, incoming: set[int], new: set, old: frozenset,
                 next_: frozenset):
        self.id = id
        self.incoming = incoming
        self.new = new
        self.old = set(old)
        self.next = set(next_)


def _expand_tableau(formula: Formula) -> list[_Node]:
    nodes: list[_Node] = []
    counter = [0]

    def fresh(incoming: set[int], new: set, old: set, next_: set) -> _Node:
        counter[0] += 1
        return _Node(counter[0], set(incoming), set(new), frozenset(old),
                     frozenset(next_))

    def expand(node: _Node) -> None:
        if not node.new:
            for existing in nodes:
                if (existing.old == node.old and existing.next == node.next):
                    existing.incoming |= node.incoming
                    return
            nodes.append(node)
            expand(fresh({node.id}, set(node.next), set(), set()))
            return
        f = node.new.pop()
        if isinstance(f, FalseF):
            return
        if isinstance(f, TrueF):
            expand(node)
            return
        if isinstance(f, (Prop, Not)):
            if _negate_literal(f) in node.old:
                return
            node.old.add(f)
            expand(node)
            return
        if isinstance(f, And):
            node.old.add(f)
            for part in (f.left, f.right):
                if part not in node.old:
                    node.new.add(part)
            expand(node)
            return
        if isinstance(f, Next):
            node.old.add(f)
            node.next.add(f.sub)
            expand(node)
            return
        if isinstance(f, (Or, Until, Release)):
            if isinstance(f, Or):
                first_new, first_next = {f.left}, set()
                second_new, second_next = {f.right}, set()
            elif isinstance(f, Until):
                first_new, first_next = {f.right}, set()
                second_new, second_next = {f.left}, {f}
            else:  # Release
                first_new, first_next = {f.left, f.right}, set()
                second_new, second_next = {f.right}, {f}
            left_node = fresh(node.incoming,
                              node.new | (first_new - node.old),
                              node.old | {f}, node.next | first_next)
            right_node = fresh(node.incoming,
                               node.new | (second_new - node.old),
                               node.old | {f}, node.next | second_next)
            expand(left_node)
            expand(right_node)
            return
        raise LtlError(f"cannot expand {f!r}")

    expand(fresh({_INIT}, {formula}, set(), set()))
    return nodes


# ---------------------------------------------------------------------------
# Buchi automata with guards on edges
# ---------------------------------------------------------------------------

Guard = frozenset  # of (Prop, bool) pairs; empty guard means "true"


@dataclass(frozen=True)
class BuchiEdge:
    guard: Guard
    dst: int


@dataclass
class BuchiAutomaton:
    states: tuple[int, ...]
    init_edges: tuple[BuchiEdge, ...]
    edges: dict[int, tuple[BuchiEdge, ...]]
    accepting: frozenset

    @property
    def state_count(self) -> int:
        return len(self.states)


def _node_guard(node: _Node) -> Guard:
    literals = []
    for f in node.old:
        if isinstance(f, Prop):
            literals.append((f, True))
        elif isinstance(f, Not):
            literals.append((f.sub, False))
    return frozenset(literals)


def guard_satisfied(guard: Guard, value_of) -> bool:
    return all(value_of(prop) == positive for prop, positive in guard)


def _collect_untils(f: Formula, out: list) -> None:
    if isinstance(f, Until) and f not in out:
        out.append(f)
    if isinstance(f, (Not, Next, Future, Globally)):
        _collect_untils(f.sub, out)
    elif isinstance(f, (And, Or, Implies, Until, Release)):
        _collect_untils(f.left, out)
        _collect_untils(f.right, out)


def to_buchi(formula: Formula) -> BuchiAutomaton:
    """Automaton accepting exactly the infinite words violating ``formula``."""
    nnf = _nnf(formula, True)
    nodes = _expand_tableau(nnf)
    untils: list[Until] = []
    _collect_untils(nnf, untils)

    guards = {n.id: _node_guard(n) for n in nodes}
    successors: dict[int, list[int]] = {n.id: [] for n in nodes}
    init_targets: list[int] = []
    for node in nodes:
        for src in node.incoming:
            if src == _INIT:
                init_targets.append(node.id)
            else:
                successors[src].append(node.id)

    acceptance_sets = []
    for until in untils:
        acceptance_sets.append(frozenset(
            n.id for n in nodes
            if until.right in n.old or until not in n.old))

    # Degeneralize: layer counter cycles through acceptance sets.
    layers = max(1, len(acceptance_sets))

    def advance(state: int, layer: int) -> int:
        if not acceptance_sets:
            return layer
        return (layer + 1) % layers if state in acceptance_sets[layer] else layer

    edges: dict[tuple[int, int], list[BuchiEdge]] = {}
    init_edges: list[BuchiEdge] = []
    states: set[tuple[int, int]] = set()
    for target in init_targets:
        states.add((target, 0))
        init_edges.append(BuchiEdge(guards[target], (target, 0)))
    queue = list(states)
    while queue:
        q, layer = queue.pop()
        out = []
        next_layer = advance(q, layer)
        for dst in successors[q]:
            key = (dst, next_layer)
            out.append(BuchiEdge(guards[dst], key))
            if key not in states:
                states.add(key)
                queue.append(key)
        edges[(q, layer)] = out
    if acceptance_sets:
        accepting = frozenset(s for s in states
                              if s[1] == 0 and s[0] in acceptance_sets[0])
    else:
        accepting = frozenset(states)

    renamed = {s: i for i, s in enumerate(sorted(states))}
    automaton = BuchiAutomaton(
        states=tuple(sorted(renamed.values())),
        init_edges=tuple(BuchiEdge(e.guard, renamed[e.dst])
                         for e in init_edges),
        edges={renamed[s]: tuple(BuchiEdge(e.guard, renamed[e.dst])
                                 for e in edges[s]) for s in states},
        accepting=frozenset(renamed[s] for s in accepting))
    return _simplify(automaton)


def _simplify(aut: BuchiAutomaton) -> BuchiAutomaton:
    """Prune unreachable and dead states, then merge equivalent ones."""
    states = set(aut.states)
    init_edges = list(aut.init_edges)
    edges = {s: list(aut.edges.get(s, ())) for s in states}
    accepting = set(aut.accepting)

    changed = True
    while changed:
        changed = False
        # reachable from an initial edge
        reach = set()
        queue = [e.dst for e in init_edges if e.dst in states]
        while queue:
            s = queue.pop()
            if s in reach:
                continue
            reach.add(s)
            queue.extend(e.dst for e in edges.get(s, ())
                         if e.dst in states and e.dst not in reach)
        # able to reach an accepting cycle
        live_accepting = set()
        for a in accepting & reach:
            seen: set = set()
            queue = [e.dst for e in edges.get(a, ()) if e.dst in states]
            while queue:
                s = queue.pop()
                if s in seen:
                    continue
                seen.add(s)
                queue.extend(e.dst for e in edges.get(s, ()) if e.dst in states)
            if a in seen:
                live_accepting.add(a)
        useful = set()
        queue = list(live_accepting)
        back: dict[int, set[int]] = {s: set() for s in states}
        for s in states:
            for e in edges.get(s, ()):
                if e.dst in states:
                    back[e.dst].add(s)
        while queue:
            s = queue.pop()
            if s in useful:
                continue
            useful.add(s)
            queue.extend(back[s])
        keep = reach & useful
        if keep != states:
            states = keep
            init_edges = [e for e in init_edges if e.dst in states]
            edges = {s: [e for e in edges[s] if e.dst in states]
                     for s in states}
            accepting &= states
            changed = True
            continue
        # merge states with identical outgoing behavior and acceptance
        signature: dict[tuple, int] = {}
        rename: dict[int, int] = {}
        for s in sorted(states):
            sig = (s in accepting,
                   frozenset((e.guard, e.dst) for e in edges[s]))
            if sig in signature:
                rename[s] = signature[sig]
            else:
                signature[sig] = s
        if rename:
            changed = True
            states -= set(rename)
            accepting -= set(rename)

            def target(x: int) -> int:
                return rename.get(x, x)

            init_edges = [BuchiEdge(e.guard, target(e.dst))
                          for e in init_edges]
            edges = {s: [BuchiEdge(e.guard, target(e.dst)) for e in edges[s]]
                     for s in states}
        # dedupe edges
        init_edges = list(dict.fromkeys(init_edges))
        edges = {s: list(dict.fromkeys(edges[s])) for s in states}

    renamed = {s: i for i, s in enumerate(sorted(states))}
    return BuchiAutomaton(
        states=tuple(sorted(renamed.values())),
        init_edges=tuple(BuchiEdge(e.guard, renamed[e.dst])
                         for e in init_edges),
        edges={renamed[s]: tuple(BuchiEdge(e.guard, renamed[e.dst])
                                 for e in edges[s]) for s in states},
        accepting=frozenset(renamed[s] for s in accepting))


# ---------------------------------------------------------------------------
# graph views
# ---------------------------------------------------------------------------


class KernelGraphView:
    """Adapter exposing a reachability graph to the product construction."""

    def __init__(self, graph):
        self.graph = graph
        self._cache: dict[tuple[str, Prop], bool] = {}

    @property
    def initial(self):
        return self.graph.initial

    @property
    def truncated(self) -> bool:
        return self.graph.truncated

    def successors(self, node):
        return self.graph.successors_of(node)

    def prop_value(self, node, prop: Prop) -> bool:
        key = (node, prop)
        value = self._cache.get(key)
        if value is None:
            value = eval_prop(prop, self.graph.state(node))
            self._cache[key] = value
        return value


# ---------------------------------------------------------------------------
# product and nested depth-first search
# ---------------------------------------------------------------------------


@dataclass
class LtlResult:
    verdict: str  # "holds" | "violated" | "bounded_holds"
    prefix: tuple = ()
    prefix_choices: tuple = ()
    cycle: tuple = ()
    cycle_choices: tuple = ()

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"


def model_check(view, formula: Formula) -> LtlResult:
    """Check ``formula`` over all infinite runs from the view's initial node.

    On a truncated graph a missing counterexample yields ``bounded_holds``;
    a found lasso is definitive either way.
    """
    aut = to_buchi(formula)
    if not aut.init_edges:
        return LtlResult("holds")

    succ_cache: dict[tuple, tuple] = {}

    def product_successors(pnode):
        cached = succ_cache.get(pnode)
        if cached is not None:
            return cached
        gnode, astate = pnode
        ba_edges = aut.init_edges if astate == _INIT else aut.edges[astate]
        out = []
        for edge in ba_edges:
            if guard_satisfied(edge.guard,
                               lambda p: view.prop_value(gnode, p)):
                for choice, gnext in view.successors(gnode):
                    out.append(((gnext, edge.dst), choice))
        result = tuple(out)
        succ_cache[pnode] = result
        return result

    def accepting(pnode) -> bool:
        return pnode[1] in aut.accepting

    found = _nested_dfs((view.initial, _INIT), product_successors, accepting)
    if found is None:
        return LtlResult("bounded_holds" if view.truncated else "holds")
    prefix, prefix_choices, cycle, cycle_choices = found
    return LtlResult("violated",
                     tuple(p[0] for p in prefix), tuple(prefix_choices),
                     tuple(p[0] for p in cycle), tuple(cycle_choices))


def _nested_dfs(root, succ, accepting):
    """Iterative nested depth-first search for a reachable accepting cycle.

    Returns ``(prefix_nodes, prefix_choices, cycle_nodes, cycle_choices)``
    with the cycle starting at the accepting seed and the last choice closing
    it, or None when no accepting cycle exists.
    """
    blue: set = set()
    red: set = set()

    # Stack frames: [node, choice_into_node, iterator over successors].
    stack: list[list] = [[root, None, iter(succ(root))]]
    blue.add(root)
    on_path = {root: 0}  # node -> index in stack

    while stack:
        frame = stack[-1]
        advanced = False
        for child, choice in frame[2]:
            if child not in blue:
                blue.add(child)
                stack.append([child, choice, iter(succ(child))])
                on_path[child] = len(stack) - 1
                advanced = True
                break
        if advanced:
            continue
        # post-order: pop and, if accepting, run the inner search
        node, in_choice, _ = stack.pop()
        del on_path[node]
        if accepting(node):
            hit = _red_search(node, succ, red, on_path)
            if hit is not None:
                red_nodes, red_choices, target = hit
                prefix_nodes = [f[0] for f in stack] + [node]
                prefix_choices = [f[1] for f in stack[1:]] + [in_choice]
                cycle_nodes = list(red_nodes)
                cycle_choices = list(red_choices)
                if target != node:
                    # close through the outer path: target .. stack top, seed
                    index = on_path[target]
                    cycle_nodes.append(target)
                    for f in stack[index + 1:]:
                        cycle_nodes.append(f[0])
                        cycle_choices.append(f[1])
                    cycle_choices.append(in_choice)
                return (tuple(prefix_nodes), tuple(prefix_choices),
                        tuple(cycle_nodes), tuple(cycle_choices))
    return None


def _red_search(seed, succ, red, on_path):
    """Inner search: can ``seed`` reach itself or a node on the outer path?

    Returns ``(nodes, choices, target)`` where nodes runs from seed to the
    predecessor of ``target`` and choices has one entry per edge including
    the final edge into ``target``.
    """
    parent: dict = {}
    red.add(seed)
    stack = [seed]
    while stack:
        node = stack.pop()
        for child, choice in succ(node):
            if child == seed or child in on_path:
                nodes = [node]
                choices = [choice]
                while nodes[-1] != seed:
                    pnode, pchoice = parent[nodes[-1]]
                    nodes.append(pnode)
                    choices.append(pchoice)
                nodes.reverse()
                choices.reverse()
                return nodes, choices, child
            if child not in red:
                red.add(child)
                parent[child] = (node, choice)
                stack.append(child)
    return None


# ---------------------------------------------------------------------------
# direct evaluation on ultimately periodic words (testing and witnesses)
# ---------------------------------------------------------------------------


def eval_on_lasso(formula: Formula, prefix: tuple, cycle: tuple,
                  prop_value) -> bool:
    """Evaluate a formula on the word ``prefix . cycle^omega``.

    ``prop_value(element, prop)`` supplies atomic values.  Runs in time
    polynomial in formula size times word length; used as an independent
    semantics for counterexample checking.
    """
    if not cycle:
        raise ValueError("cycle must be nonempty")
    plen, total = len(prefix), len(prefix) + len(cycle)

    def elem(i: int):
        return prefix[i] if i < plen else cycle[i - plen]

    def nxt(i: int) -> int:
        return i + 1 if i + 1 < total else plen

    def reachable(i: int):
        return list(range(i, total)) + [j for j in range(plen, i)]

    memo: dict[tuple, bool] = {}

    def ev(f: Formula, i: int) -> bool:
        key = (f, i)
        if key in memo:
            return memo[key]
        if isinstance(f, TrueF):
            value = True
        elif isinstance(f, FalseF):
            value = False
        elif isinstance(f, Prop):
            value = prop_value(elem(i), f)
        elif isinstance(f, Not):
            value = not ev(f.sub, i)
        elif isinstance(f, And):
            value = ev(f.left, i) and ev(f.right, i)
        elif isinstance(f, Or):
            value = ev(f.left, i) or ev(f.right, i)
        elif isinstance(f, Implies):
            value = (not ev(f.left, i)) or ev(f.right, i)
        elif isinstance(f, Next):
            value = ev(f.sub, nxt(i))
        elif isinstance(f, Future):
            value = any(ev(f.sub, j) for j in reachable(i))
        elif isinstance(f, Globally):
            value = all(ev(f.sub, j) for j in reachable(i))
        elif isinstance(f, Until):
            value = False
            seen = set()
            j = i
            while j not in seen:
                seen.add(j)
                if ev(f.right, j):
                    value = True
                    break
                if not ev(f.left, j):
                    break
                j = nxt(j)
        elif isinstance(f, Release):
            value = True
            seen = set()
            j = i
            while j not in seen:
                seen.add(j)
                if not ev(f.right, j):
                    value = False
                    break
                if ev(f.left, j):
                    break
                j = nxt(j)
        else:
            raise LtlError(f"cannot evaluate {f!r}")
        memo[key] = value
        return value

    return ev(formula, 0)


def automaton_accepts_lasso(aut: BuchiAutomaton, prefix: tuple, cycle: tuple,
                            prop_value) -> bool:
    """Does the automaton accept ``prefix . cycle^omega``?

    Decided by composing the word (as a one-cycle graph) with the automaton
    and looking for a reachable accepting cycle.
    """
    if not cycle:
        raise ValueError("cycle must be nonempty")
    plen, total = len(prefix), len(prefix) + len(cycle)

    def elem(i: int):
        return prefix[i] if i < plen else cycle[i - plen]

    def nxt(i: int) -> int:
        return i + 1 if i + 1 < total else plen

    def successors(pnode):
        pos, astate = pnode
        ba_edges = aut.init_edges if astate == _INIT else aut.edges[astate]
        for edge in ba_edges:
            if guard_satisfied(edge.guard, lambda p: prop_value(elem(pos), p)):
                yield (nxt(pos), edge.dst), None

    def accepting(pnode) -> bool:
        return pnode[1] in aut.accepting

    def succ_list(pnode):
        return tuple(successors(pnode))

    return _nested_dfs((0, _INIT), succ_list, accepting) is not None


# ---------------------------------------------------------------------------
# formula files
# ---------------------------------------------------------------------------


def parse_formula_file(text: str) -> list[tuple[str, Formula]]:
    """Parse ``name: formula`` lines; ``#`` starts a comment."""
    out: list[tuple[str, Formula]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise LtlError(f"line {lineno}: expected 'name: formula'")
        name, body = line.split(":", 1)
        name = name.strip()
        if not name:
            raise LtlError(f"line {lineno}: empty formula name")
        try:
            out.append((name, parse_ltl(body.strip())))
        except LtlError as exc:
            raise LtlError(f"line {lineno} ({name}): {exc}") from None
    return out
