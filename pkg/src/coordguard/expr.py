"""A small closed expression language for policy predicates.

Expressions are JSON/YAML trees of single-key mappings::

    {"and": [{"gt": [{"var": "amount"}, 50000]},
             {"in": [{"label": "cfo"}, ["approve"]]}]}

Terms:
    ``{"var": name}``              state variable (``step_index`` is built in)
    ``{"label": agent}``           the agent's action label
    ``{"attr": [agent, name]}``    attribute of the agent's action
    ``{"coord": [agent, i]}``      i-th coordinate of a continuous action
    literals (numbers, strings, booleans, null, lists of literals)

Operators: ``and or not implies eq ne lt le gt ge in not_in add sub mul``.

Evaluation is total. A missing agent, attribute or variable yields ``None``;
ordering comparisons and arithmetic involving ``None`` or mismatched types
are false / ``None``. A predicate holds only when its value is exactly truthy.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Any, Callable, Mapping

Evaluator = Callable[[Any, Mapping[str, Any]], Any]

_ORDER = {"lt": operator.lt, "le": operator.le, "gt": operator.gt, "ge": operator.ge}
_ARITH = {"add": operator.add, "sub": operator.sub, "mul": operator.mul}


class ExpressionError(ValueError):
    def __init__(self, message: str, path: tuple = ()):
        self.path = path
        super().__init__(message)


@dataclass(frozen=True)
class Compiled:
    fn: Evaluator
    agents: frozenset[str]
    variables: frozenset[str]

    def __call__(self, state, joint: Mapping[str, Any]) -> bool:
        return bool_value(self.fn(state, joint))


def bool_value(v: Any) -> bool:
    if v is None:
        return False
    return bool(v)


def _num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def compile_expr(tree: Any, path: tuple = ()) -> Compiled:
    """Compile ``tree`` into a closure ``fn(state, joint_map)``."""
    agents: set[str] = set()
    variables: set[str] = set()
    fn = _compile(tree, path, agents, variables)
    return Compiled(fn, frozenset(agents), frozenset(variables))


def _arity(args: Any, n: int, op: str, path: tuple) -> list:
    if not isinstance(args, list) or len(args) != n:
        raise ExpressionError(f"{op!r} takes a list of {n} operands", path)
    return args


def _compile(tree: Any, path: tuple, agents: set, variables: set) -> Evaluator:
    if isinstance(tree, (str, int, float, bool)) or tree is None:
        return lambda s, j, v=tree: v
    if isinstance(tree, list):
        items = [_compile(t, path + (i,), agents, variables) for i, t in enumerate(tree)]
        return lambda s, j: [f(s, j) for f in items]
    if not isinstance(tree, Mapping) or len(tree) != 1:
        raise ExpressionError("expression nodes must be single-key mappings", path)
    (op, args), = tree.items()
    sub = path + (op,)

    if op == "var":
        if not isinstance(args, str):
            raise ExpressionError("'var' takes a variable name", sub)
        variables.add(args)
        if args == "step_index":
            return lambda s, j: s.step_index
        return lambda s, j: s.variables.get(args)
    if op == "label":
        if not isinstance(args, str):
            raise ExpressionError("'label' takes an agent id", sub)
        agents.add(args)

        def label(s, j):
            a = j.get(args)
            return None if a is None else a.label

        return label
    if op == "attr":
        agent, name = _arity(args, 2, op, sub)
        agents.add(agent)

        def attr(s, j):
            a = j.get(agent)
            return None if a is None else a.get(name)

        return attr
    if op == "coord":
        agent, idx = _arity(args, 2, op, sub)
        if not isinstance(idx, int):
            raise ExpressionError("'coord' index must be an integer", sub)
        agents.add(agent)

        def coord(s, j):
            a = j.get(agent)
            if a is None or a.vector is None or not (0 <= idx < len(a.vector)):
                return None
            return a.vector[idx]

        return coord
    if op in ("and", "or"):
        if not isinstance(args, list):
            raise ExpressionError(f"{op!r} takes a list", sub)
        parts = [_compile(t, sub + (i,), agents, variables) for i, t in enumerate(args)]
        if op == "and":
            return lambda s, j: all(bool_value(f(s, j)) for f in parts)
        return lambda s, j: any(bool_value(f(s, j)) for f in parts)
    if op == "not":
        inner = _compile(args, sub, agents, variables)
        return lambda s, j: not bool_value(inner(s, j))
    if op == "implies":
        a, b = (_compile(t, sub + (i,), agents, variables) for i, t in enumerate(_arity(args, 2, op, sub)))
        return lambda s, j: (not bool_value(a(s, j))) or bool_value(b(s, j))
    if op in ("eq", "ne"):
        a, b = (_compile(t, sub + (i,), agents, variables) for i, t in enumerate(_arity(args, 2, op, sub)))
        if op == "eq":
            return lambda s, j: _eq(a(s, j), b(s, j))
        return lambda s, j: not _eq(a(s, j), b(s, j))
    if op in _ORDER:
        cmp = _ORDER[op]
        a, b = (_compile(t, sub + (i,), agents, variables) for i, t in enumerate(_arity(args, 2, op, sub)))

        def order(s, j):
            x, y = a(s, j), b(s, j)
            if _num(x) and _num(y) or isinstance(x, str) and isinstance(y, str):
                return cmp(x, y)
            return False

        return order
    if op in ("in", "not_in"):
        a, b = (_compile(t, sub + (i,), agents, variables) for i, t in enumerate(_arity(args, 2, op, sub)))

        def member(s, j):
            x, coll = a(s, j), b(s, j)
            if not isinstance(coll, list):
                return False
            return any(_eq(x, c) for c in coll)

        if op == "in":
            return member
        return lambda s, j: not member(s, j)
    if op in _ARITH:
        fn = _ARITH[op]
        if not isinstance(args, list) or len(args) < 2:
            raise ExpressionError(f"{op!r} takes at least two operands", sub)
        if op == "sub" and len(args) != 2:
            raise ExpressionError("'sub' takes exactly two operands", sub)
        parts = [_compile(t, sub + (i,), agents, variables) for i, t in enumerate(args)]

        def arith(s, j):
            vals = [f(s, j) for f in parts]
            if not all(_num(v) for v in vals):
                return None
            acc = vals[0]
            for v in vals[1:]:
                acc = fn(acc, v)
            return acc

        return arith
    raise ExpressionError(f"unknown operator {op!r}", sub)


def _eq(x: Any, y: Any) -> bool:
    # bools are not numbers here: True must not equal 1
    if isinstance(x, bool) != isinstance(y, bool):
        return False
    return x == y
