"""Exact-rational belief propagation on rooted 2-SAT tree factor graphs.

Every node is a variable; each child hangs below a clause of one of the
four types (s, s'): the parent appears in the clause with sign s, the child
with sign s'. The root marginal of such a tree is always a rational in
(0,1), and conversely `construct_rational_tree` realizes any target
fraction as a root marginal. Sub-structures may be shared (the recursions
only look downward), which keeps the constructed trees polynomial-size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import NamedTuple

import numpy as np

from .util import ResourceLimitError


class ClauseType(NamedTuple):
    s: int
    s_prime: int


CLAUSE_TYPES = (
    ClauseType(+1, +1),
    ClauseType(+1, -1),
    ClauseType(-1, +1),
    ClauseType(-1, -1),
)


@dataclass(frozen=True, eq=False)
class TreeFormula:
    """Rooted tree node; children are (clause type, subtree) pairs."""

    children: tuple = ()


def leaf() -> TreeFormula:
    return TreeFormula()


def bp_root_marginal(root) -> Fraction:
    """Bottom-up marginal recursion; works on any node with `.children`.

    The weight of setting a variable to +1 is the product, over clauses in
    which it appears negated, of the probability that the child variable
    satisfies the clause on its own; symmetrically for -1.
    """
    memo: dict[int, Fraction] = {}
    stack = [root]
    while stack:
        node = stack[-1]
        if id(node) in memo:
            stack.pop()
            continue
        pending = [c for _, c in node.children if id(c) not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        w_plus = Fraction(1)
        w_minus = Fraction(1)
        for (s, sp), child in node.children:
            p = memo[id(child)]
            satisfies = p if sp > 0 else 1 - p
            if s < 0:
                w_plus *= satisfies
            else:
                w_minus *= satisfies
        memo[id(node)] = w_plus / (w_plus + w_minus)
    return memo[id(root)]


def root_marginal(t: TreeFormula) -> Fraction:
    return bp_root_marginal(t)


def negate(t: TreeFormula, _cache: dict | None = None) -> TreeFormula:
    """Flip every edge sign on both sides; sends marginal q to 1-q.

    A caller constructing many overlapping trees can pass a shared cache so
    each node is negated at most once; the cache must outlive the inputs.
    """
    memo = _cache if _cache is not None else {}
    stack = [t]
    while stack:
        node = stack[-1]
        if id(node) in memo:
            stack.pop()
            continue
        pending = [c for _, c in node.children if id(c) not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        memo[id(node)] = TreeFormula(
            children=tuple(
                (ClauseType(-s, -sp), memo[id(c)]) for (s, sp), c in node.children
            )
        )
    return memo[id(t)]


def join(t1: TreeFormula, t2: TreeFormula) -> TreeFormula:
    """New root with a (-,+) edge to t1 and a (+,+) edge to t2.

    Sends marginals (p, q) to p/(p+q).
    """
    return TreeFormula(
        children=((ClauseType(-1, +1), t1), (ClauseType(+1, +1), t2))
    )


def construct_rational_tree(a: int, b: int) -> TreeFormula:
    """A tree whose root marginal is exactly a/b, for any 0 < a < b.

    Recursion on the reduced fraction: 1/2 is a bare root; 1/b chains one
    (-,+) edge onto 1/(b-1); fractions above 1/2 are negations; the rest is
    join(a/(b-1), 1 - (a-1)/(b-1)) which joins to exactly a/b. Shared
    subtrees are memoized per reduced fraction, so the representation stays
    polynomial in b even though the expanded tree is not.
    """
    if not (isinstance(a, int) and isinstance(b, int)):
        raise ValueError("numerator and denominator must be integers")
    if a <= 0 or a >= b:
        raise ValueError(f"need 0 < a < b, got {a}/{b}")
    memo: dict[tuple[int, int], TreeFormula] = {}
    neg_cache: dict[int, TreeFormula] = {}

    def build(a: int, b: int) -> TreeFormula:
        g = gcd(a, b)
        a, b = a // g, b // g
        key = (a, b)
        if key in memo:
            return memo[key]
        if key == (1, 2):
            t = leaf()
        elif a == 1:
            t = TreeFormula(children=((ClauseType(-1, +1), build(1, b - 1)),))
        elif 2 * a > b:
            t = negate(build(b - a, b), neg_cache)
        else:
            t = join(build(a, b - 1), negate(build(a - 1, b - 1), neg_cache))
        memo[key] = t
        return t

    return build(a, b)


def log_likelihood(t: TreeFormula) -> float:
    """phi of the exact root marginal, log(q/(1-q)), as a float."""
    q = root_marginal(t)
    return math.log(q.numerator) - math.log(q.denominator - q.numerator)


def expanded_size(t: TreeFormula) -> int:
    """Variable-node count of the fully expanded tree (shared nodes copied)."""
    memo: dict[int, int] = {}
    stack = [t]
    while stack:
        node = stack[-1]
        if id(node) in memo:
            stack.pop()
            continue
        pending = [c for _, c in node.children if id(c) not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        memo[id(node)] = 1 + sum(memo[id(c)] for _, c in node.children)
    return memo[id(t)]


def to_formula(t: TreeFormula, cap: int = 1 << 16):
    """Expand into a Formula whose factor graph is this tree, root = var 1."""
    from .formula import Formula

    size = expanded_size(t)
    if size > cap:
        raise ResourceLimitError(f"expanded tree has {size} nodes, cap {cap}")
    clauses = []
    next_id = 2
    queue = [(1, t)]
    while queue:
        vid, node = queue.pop()
        for (s, sp), child in node.children:
            cid = next_id
            next_id += 1
            clauses.append((vid, s, cid, sp))
            queue.append((cid, child))
    cl = np.array(clauses, dtype=np.int64).reshape(-1, 4)
    return Formula(n=size, clauses=cl)


# -- nested parenthesized text form -------------------------------------------
#
#   node := (v [ss'] node [ss'] node ...)    with s, s' in {+,-}
#   e.g. "(v [-+](v))" is the tree with marginal 1/3. A "!" directly after
#   the v marks a surviving node in branching-process dumps.


def format_tree(t, marks: bool = False) -> str:
    def sign(x):
        return "+" if x > 0 else "-"

    out: list[str] = []
    stack: list = [("node", t)]
    while stack:
        op, payload = stack.pop()
        if op == "text":
            out.append(payload)
            continue
        node = payload
        mark = "!" if marks and getattr(node, "surviving", False) else ""
        out.append(f"(v{mark}")
        stack.append(("text", ")"))
        for (s, sp), child in reversed(node.children):
            stack.append(("node", child))
            stack.append(("text", f" [{sign(s)}{sign(sp)}]"))
    return "".join(out)


def parse_tree(text: str) -> TreeFormula:
    toks = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def expect(tok):
        nonlocal pos
        if pos >= len(toks) or toks[pos] != tok:
            raise ValueError(f"bad tree text near token {pos}: {toks[pos:pos+3]}")
        pos += 1

    def node() -> TreeFormula:
        nonlocal pos
        expect("(")
        if pos >= len(toks) or toks[pos] not in ("v", "v!"):
            raise ValueError("expected variable node 'v'")
        pos += 1
        children = []
        while pos < len(toks) and toks[pos] != ")":
            edge = toks[pos]
            if len(edge) != 4 or edge[0] != "[" or edge[3] != "]":
                raise ValueError(f"bad edge label {edge!r}")
            s = 1 if edge[1] == "+" else -1
            sp = 1 if edge[2] == "+" else -1
            pos += 1
            children.append((ClauseType(s, sp), node()))
        expect(")")
        return TreeFormula(children=tuple(children))

    t = node()
    if pos != len(toks):
        raise ValueError("trailing text after tree")
    return t
