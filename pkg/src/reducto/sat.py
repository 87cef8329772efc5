"""CNF SAT domain: formulas, move rules, easy-instance solvers, and an oracle.

Literals are non-zero integers (DIMACS convention): ``v`` is the positive
literal of variable ``v >= 1`` and ``-v`` its complement.  A clause is a
complement-free tuple of literals, a formula a set of clauses, and an
assignment a complement-free frozenset of literals.  Everything is kept in a
canonical sorted form so formulas compare, hash, and serialize stably.
"""

from __future__ import annotations

import itertools
from bisect import insort
from hashlib import blake2b
from typing import Iterable, Iterator

from .core import EasyOutcome, NO_SOLUTION, NOT_EASY, SelfReduction

Literal = int
Clause = tuple  # tuple[int, ...] in canonical order
Assignment = frozenset  # frozenset[int] without complementary pairs

ORACLE_VAR_LIMIT = 24
DEFAULT_PAIR_CAP = 16


class OracleLimitError(RuntimeError):
    """The brute-force oracle refused an instance above its variable limit."""


def _lit_key(lit: int) -> tuple[int, int]:
    return (abs(lit), 0 if lit > 0 else 1)


def _clause_key(c: Clause) -> tuple:
    return tuple(_lit_key(l) for l in c)


def clause(literals: Iterable[int]) -> Clause:
    """Canonical clause: unique literals sorted by variable, no complements."""
    lits = sorted(set(literals), key=_lit_key)
    s = set()
    for l in lits:
        if not isinstance(l, int) or l == 0:
            raise ValueError(f"literal must be a non-zero integer, got {l!r}")
        if -l in s:
            raise ValueError(f"clause contains complementary pair on variable {abs(l)}")
        s.add(l)
    return tuple(lits)


def assignment(literals: Iterable[int] = ()) -> Assignment:
    """Canonical assignment: a complement-free frozenset of literals."""
    lits = frozenset(literals)
    for l in lits:
        if not isinstance(l, int) or l == 0:
            raise ValueError(f"literal must be a non-zero integer, got {l!r}")
        if -l in lits:
            raise ValueError(f"assignment contains complementary pair on variable {abs(l)}")
    return lits


class Formula:
    """An immutable CNF formula held in canonical form.

    ``clauses`` is a tuple of clause tuples, each clause sorted by variable
    index (positive polarity first) and the clauses sorted lexicographically
    by that key.  Equality, hashing, and ordering all follow this form.
    """

    __slots__ = ("clauses", "_hash", "_vars", "_digest")

    def __init__(self, clauses: Iterable[Iterable[int]] = ()):
        canon = tuple(sorted({clause(c) for c in clauses}, key=_clause_key))
        object.__setattr__(self, "clauses", canon)
        object.__setattr__(self, "_hash", None)
        object.__setattr__(self, "_vars", None)
        object.__setattr__(self, "_digest", None)

    @classmethod
    def _make(cls, canonical_clauses: tuple[Clause, ...]) -> "Formula":
        # Trusted fast path for rule engines: caller guarantees canonical form.
        self = object.__new__(cls)
        object.__setattr__(self, "clauses", canonical_clauses)
        object.__setattr__(self, "_hash", None)
        object.__setattr__(self, "_vars", None)
        object.__setattr__(self, "_digest", None)
        return self

    def __setattr__(self, name, value):
        raise AttributeError("Formula is immutable")

    def __eq__(self, other) -> bool:
        return isinstance(other, Formula) and self.clauses == other.clauses

    def __hash__(self) -> int:
        h = self._hash
        if h is None:
            h = hash(self.clauses)
            object.__setattr__(self, "_hash", h)
        return h

    def __repr__(self) -> str:
        return f"Formula({list(map(list, self.clauses))!r})"

    def __iter__(self) -> Iterator[Clause]:
        return iter(self.clauses)

    def __len__(self) -> int:
        return len(self.clauses)

    @property
    def variables(self) -> tuple[int, ...]:
        v = self._vars
        if v is None:
            v = tuple(sorted({abs(l) for c in self.clauses for l in c}))
            object.__setattr__(self, "_vars", v)
        return v

    @property
    def sort_key(self) -> tuple:
        return self.clauses

    @property
    def is_empty(self) -> bool:
        return not self.clauses

    @property
    def has_empty_clause(self) -> bool:
        return bool(self.clauses) and self.clauses[0] == ()

    @property
    def digest(self) -> str:
        d = self._digest
        if d is None:
            d = blake2b(repr(self.clauses).encode(), digest_size=16).hexdigest()
            object.__setattr__(self, "_digest", d)
        return d


TOP = Formula()
BOTTOM = Formula(((),))


def satisfies(alpha: Iterable[int], phi: Formula) -> bool:
    """True iff every clause of ``phi`` intersects ``alpha``."""
    a = alpha if isinstance(alpha, frozenset) else frozenset(alpha)
    return all(any(l in a for l in c) for c in phi.clauses)


# ---------------------------------------------------------------------------
# Move rules
# ---------------------------------------------------------------------------


def resolvent(c1: Clause, c2: Clause, pivot: int) -> Clause | None:
    """Resolvent of two clauses on ``pivot``, or None if it would be tautological.

    Requires ``pivot`` in ``c1`` and its complement in ``c2``.
    """
    if pivot not in c1 or -pivot not in c2:
        raise ValueError("pivot must occur positively in c1 and negatively in c2")
    merged = (set(c1) | set(c2)) - {pivot, -pivot}
    if any(-l in merged for l in merged):
        return None
    return tuple(sorted(merged, key=_lit_key))


def new_resolvents(phi: Formula) -> list[Clause]:
    """All resolvents of clause pairs of ``phi`` that are not already clauses of it."""
    cls = phi.clauses
    existing = set(cls)
    csets = {c: set(c) for c in cls}
    pos: dict[int, list[Clause]] = {}
    neg: dict[int, list[Clause]] = {}
    for c in cls:
        for l in c:
            (pos if l > 0 else neg).setdefault(abs(l), []).append(c)
    out = set()
    for v, with_pos in pos.items():
        with_neg = neg.get(v)
        if not with_neg:
            continue
        for c1 in with_pos:
            s1 = csets[c1]
            for c2 in with_neg:
                merged = (s1 | csets[c2]) - {v, -v}
                if any(-l in merged for l in merged):
                    continue
                rc = tuple(sorted(merged, key=_lit_key))
                if rc not in existing:
                    out.add(rc)
    return sorted(out, key=_clause_key)


def resolution_moves(phi: Formula) -> list[Formula]:
    """Each move adds one new resolvent to ``phi``."""
    moves = []
    for rc in new_resolvents(phi):
        cls = list(phi.clauses)
        insort(cls, rc, key=_clause_key)
        moves.append(Formula._make(tuple(cls)))
    moves.sort(key=lambda f: f.clauses)
    return moves


def subsumption_move(phi: Formula) -> list[Formula]:
    """One move removing every clause that properly contains another clause; none if no-op."""
    cls = phi.clauses
    sets = [frozenset(c) for c in cls]
    keep = tuple(
        c for i, c in enumerate(cls)
        if not any(j != i and sets[j] < sets[i] for j in range(len(cls)))
    )
    if keep == cls:
        return []
    return [Formula._make(keep)]


def pure_literal_fixpoint(phi: Formula) -> tuple[Formula, tuple[int, ...]]:
    """Iterate pure-literal clause deletion to a fixpoint.

    Returns the fixpoint formula and the pure literals eliminated, in
    elimination order; the lift extends a fixpoint solution with exactly
    these literals.
    """
    cur = list(phi.clauses)
    eliminated: list[int] = []
    while True:
        occurring = set(itertools.chain.from_iterable(cur))
        pures = sorted((l for l in occurring if -l not in occurring), key=_lit_key)
        if not pures:
            break
        eliminated.extend(pures)
        pure_set = set(pures)
        cur = [c for c in cur if not pure_set.intersection(c)]
    return Formula._make(tuple(cur)), tuple(eliminated)


def pure_literal_move(phi: Formula) -> list[Formula]:
    fix, _ = pure_literal_fixpoint(phi)
    return [] if fix == phi else [fix]


def _pure_literal_lift(x: Formula, x2: Formula, y: Assignment) -> Assignment:
    fix, pures = pure_literal_fixpoint(x)
    if fix != x2:
        raise ValueError("target is not the pure-literal fixpoint of the source")
    # Complements of eliminated pure literals cannot occur in the fixpoint, so
    # a fixpoint solution over its own variables never clashes; assignment()
    # still asserts it.
    return assignment(set(y) | set(pures))


def extension_moves(phi: Formula, pair_cap: int = DEFAULT_PAIR_CAP) -> list[Formula]:
    """Definitional extension: for literal pairs {a, b} over variables of ``phi``,
    add clauses {a, -v}, {b, -v}, {-a, -b, v} with ``v`` the smallest unused variable.

    Pairs enumerate in canonical order and stop after ``pair_cap`` of them.
    """
    vars_ = phi.variables
    if not vars_:
        return []
    var_set = set(vars_)
    fresh = 1
    while fresh in var_set:
        fresh += 1
    lits = [s * v for v in vars_ for s in (1, -1)]
    moves = []
    taken = 0
    for i in range(len(lits)):
        if taken >= pair_cap:
            break
        for j in range(i + 1, len(lits)):
            a, b = lits[i], lits[j]
            if abs(a) == abs(b):
                continue
            cls = list(phi.clauses)
            for c in (clause((a, -fresh)), clause((b, -fresh)), clause((-a, -b, fresh))):
                if c not in cls:
                    insort(cls, c, key=_clause_key)
            moves.append(Formula._make(tuple(cls)))
            taken += 1
            if taken >= pair_cap:
                break
    moves.sort(key=lambda f: f.clauses)
    return moves


def flip_variable(phi: Formula, v: int) -> Formula:
    """Swap the polarity of variable ``v`` everywhere in ``phi``."""
    return Formula(tuple(-l if abs(l) == v else l for l in c) for c in phi.clauses)


def flippable_variables(phi: Formula) -> list[int]:
    """Variables occurring in a non-empty clause whose literals are all negative."""
    vs = set()
    for c in phi.clauses:
        if c and all(l < 0 for l in c):
            vs.update(-l for l in c)
    return sorted(vs)


def flip_moves(phi: Formula) -> list[Formula]:
    """Polarity swaps of variables drawn from all-negative clauses."""
    seen = set()
    moves = []
    for v in flippable_variables(phi):
        f2 = flip_variable(phi, v)
        if f2 != phi and f2 not in seen:
            seen.add(f2)
            moves.append(f2)
    moves.sort(key=lambda f: f.clauses)
    return moves


def _flip_lift(x: Formula, x2: Formula, y: Assignment) -> Assignment:
    for v in flippable_variables(x):
        if flip_variable(x, v) == x2:
            return assignment(-l if abs(l) == v else l for l in y)
    raise ValueError("target is not a flip move of the source")


def _identity_lift(x: Formula, x2: Formula, y: Assignment) -> Assignment:
    return y


RESOLUTION = SelfReduction("resolution", resolution_moves, _identity_lift)
SUBSUMPTION = SelfReduction("subsumption", subsumption_move, _identity_lift)
PURE_LITERAL = SelfReduction("pure-literal", pure_literal_move, _pure_literal_lift)
FLIP = SelfReduction("flip", flip_moves, _flip_lift)


def extension_reduction(pair_cap: int = DEFAULT_PAIR_CAP) -> SelfReduction:
    return SelfReduction(
        "extension", lambda phi: extension_moves(phi, pair_cap), _identity_lift
    )


EXTENSION = extension_reduction()


# ---------------------------------------------------------------------------
# Easy-instance solvers
# ---------------------------------------------------------------------------


def easy_trivial(phi: Formula) -> EasyOutcome:
    """Easy set: the empty formula (satisfiable) and any formula with the empty clause."""
    if phi.is_empty:
        return EasyOutcome.solution(assignment())
    if phi.has_empty_clause:
        return NO_SOLUTION
    return NOT_EASY


def easy_all_positive(phi: Formula) -> EasyOutcome:
    """Easy set: formulas in which every clause has a positive literal.

    Such formulas are satisfied by the set of all their positive literals, so
    this solver never reports "no solution".
    """
    if all(any(l > 0 for l in c) for c in phi.clauses):
        return EasyOutcome.solution(
            assignment(l for c in phi.clauses for l in c if l > 0)
        )
    return NOT_EASY


def easy_combined(phi: Formula) -> EasyOutcome:
    """Union of the trivial and all-positive easy sets."""
    out = easy_trivial(phi)
    if out.is_easy:
        return out
    return easy_all_positive(phi)


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


class OracleVerdict:
    """Result of the exhaustive oracle: Sat with a witness, or Unsat."""

    __slots__ = ("satisfiable", "witness")

    def __init__(self, satisfiable: bool, witness: Assignment | None = None):
        if satisfiable and witness is None:
            raise ValueError("sat verdict requires a witness")
        if not satisfiable and witness is not None:
            raise ValueError("unsat verdict carries no witness")
        self.satisfiable = satisfiable
        self.witness = witness

    def __repr__(self) -> str:
        if self.satisfiable:
            return f"Sat({sorted(self.witness, key=_lit_key)})"
        return "Unsat"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, OracleVerdict)
            and self.satisfiable == other.satisfiable
            and self.witness == other.witness
        )


def _assign(clauses: list[Clause], lit: int) -> list[Clause]:
    out = []
    for c in clauses:
        if lit in c:
            continue
        if -lit in c:
            out.append(tuple(l for l in c if l != -lit))
        else:
            out.append(c)
    return out


def oracle_solve(phi: Formula, var_limit: int = ORACLE_VAR_LIMIT) -> OracleVerdict:
    """Backtracking search over the variables of ``phi``; for verification only.

    Deliberately naive (unit propagation plus first-variable branching) and
    refuses instances with more than ``var_limit`` variables.
    """
    if len(phi.variables) > var_limit:
        raise OracleLimitError(
            f"{len(phi.variables)} variables exceed the oracle limit of {var_limit}"
        )

    def search(clauses: list[Clause], trail: list[int]) -> list[int] | None:
        while True:
            if not clauses:
                return trail
            clauses = sorted(set(clauses), key=_clause_key)
            if clauses[0] == ():
                return None
            unit = next((c[0] for c in clauses if len(c) == 1), None)
            if unit is None:
                break
            trail = trail + [unit]
            clauses = _assign(clauses, unit)
        v = min(abs(l) for c in clauses for l in c)
        for lit in (v, -v):
            found = search(_assign(clauses, lit), trail + [lit])
            if found is not None:
                return found
        return None

    found = search(list(phi.clauses), [])
    if found is None:
        return OracleVerdict(False)
    return OracleVerdict(True, assignment(found))
