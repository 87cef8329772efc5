"""Generic machinery for solving search problems as one-player games.

A *setup* pairs an easy-instance solver with a finite list of self-reductions.
Each self-reduction offers moves from an instance to successor instances and
knows how to map a successor's solution back to a solution of the original.
A *path* is a start instance followed by (reduction id, instance) steps; if it
ends at an easy instance, solutions are recovered by lifting backwards.

Instances are opaque to this module.  They must be hashable, compare by
canonical form, and (for deterministic move ordering) either be orderable or
expose a ``sort_key`` attribute.  The bundled SAT domain satisfies all of
this; other domains can plug in the same way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterator, Sequence

Instance = Any
Solution = Any

DEFAULT_MOVE_CAP = 256


class UnknownReductionError(KeyError):
    """A path or caller referenced a reduction id the setup does not define."""


class MoveCapExceeded(RuntimeError):
    """A reduction produced more moves than the configured cap allows.

    Carries the truncated (lexicographically-first) partial enumeration so
    callers can still inspect what was found.
    """

    def __init__(self, reduction_id: str, partial: list[tuple[str, Instance]], cap: int):
        super().__init__(f"reduction {reduction_id!r} exceeded move cap {cap}")
        self.reduction_id = reduction_id
        self.partial = partial
        self.cap = cap


class LiftIntegrityError(RuntimeError):
    """A backward lift produced a non-solution, breaching the reduction contract."""

    def __init__(self, step: int, reduction_id: str, detail: str = ""):
        msg = f"lift failed at step {step} (reduction {reduction_id!r})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.step = step
        self.reduction_id = reduction_id


@dataclass(frozen=True)
class EasyOutcome:
    """Verdict of an easy-instance solver: not easy, no solution, or a solution."""

    kind: str
    value: Any = None

    _KINDS = ("not_easy", "no_solution", "solution")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown outcome kind {self.kind!r}")
        if self.kind == "solution":
            if self.value is None:
                raise ValueError("solution outcome requires a value")
        elif self.value is not None:
            raise ValueError(f"{self.kind} outcome carries no value")

    @classmethod
    def not_easy(cls) -> "EasyOutcome":
        return cls("not_easy")

    @classmethod
    def no_solution(cls) -> "EasyOutcome":
        return cls("no_solution")

    @classmethod
    def solution(cls, value: Solution) -> "EasyOutcome":
        return cls("solution", value)

    @property
    def is_easy(self) -> bool:
        return self.kind != "not_easy"


NOT_EASY = EasyOutcome.not_easy()
NO_SOLUTION = EasyOutcome.no_solution()


@dataclass(frozen=True)
class SolveAnswer:
    """Final verdict of a solver run: a solution, no solution, or don't know."""

    kind: str
    value: Any = None

    _KINDS = ("solution", "no_solution", "dont_know")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown answer kind {self.kind!r}")
        if self.kind == "solution" and self.value is None:
            raise ValueError("solution answer requires a value")
        if self.kind != "solution" and self.value is not None:
            raise ValueError(f"{self.kind} answer carries no value")

    @classmethod
    def solution(cls, value: Solution) -> "SolveAnswer":
        return cls("solution", value)

    @classmethod
    def no_solution(cls) -> "SolveAnswer":
        return cls("no_solution")

    @classmethod
    def dont_know(cls) -> "SolveAnswer":
        return cls("dont_know")


@dataclass(frozen=True)
class SelfReduction:
    """A named pair of a move function and a solution (lift) function.

    ``moves(x)`` returns a finite sequence of successor instances; every
    successor of a solvable instance must itself be solvable.  ``lift(x, x2,
    y)`` maps a solution ``y`` of a successor ``x2`` back to a solution of
    ``x``.  Both must be pure functions of their arguments.
    """

    id: str
    moves: Callable[[Instance], Sequence[Instance]]
    lift: Callable[[Instance, Instance, Solution], Solution]

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("reduction id must be non-empty")


@dataclass(frozen=True)
class Setup:
    """Game rules for a search problem: an easy-instance solver plus reductions."""

    easy: Callable[[Instance], EasyOutcome]
    reductions: tuple[SelfReduction, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "reductions", tuple(self.reductions))
        if not self.reductions:
            raise ValueError("a setup needs at least one self-reduction")
        ids = [r.id for r in self.reductions]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate reduction ids: {ids}")

    def reduction(self, reduction_id: str) -> SelfReduction:
        for r in self.reductions:
            if r.id == reduction_id:
                return r
        raise UnknownReductionError(reduction_id)


@dataclass(frozen=True)
class Path:
    """A start instance followed by (reduction id, instance) steps."""

    start: Instance
    steps: tuple[tuple[str, Instance], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple((rid, inst) for rid, inst in self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def end(self) -> Instance:
        return self.steps[-1][1] if self.steps else self.start

    def instances(self) -> Iterator[Instance]:
        yield self.start
        for _, inst in self.steps:
            yield inst


def verify_path(setup: Setup, path: Path) -> bool:
    """Check that every step of ``path`` is a genuine move of its reduction.

    Zero-length paths verify trivially.  Referencing a reduction id the setup
    does not define raises UnknownReductionError rather than returning False.
    """
    prev = path.start
    for rid, inst in path.steps:
        reduction = setup.reduction(rid)
        if inst not in list(reduction.moves(prev)):
            return False
        prev = inst
    return True


def lift_solution(
    setup: Setup,
    path: Path,
    y: Solution,
    check: Callable[[Instance, Solution], bool] | None = None,
) -> Solution:
    """Lift a solution of the path's final instance back to the start.

    Applies the step reductions' lift functions right to left.  ``check``, if
    given, is called as ``check(instance, candidate)`` after every lift; a
    failing check (or an exception inside a lift) raises LiftIntegrityError
    identifying the offending step.  Callers are expected to have verified the
    path first.
    """
    sol = y
    for i in range(len(path.steps) - 1, -1, -1):
        rid, inst = path.steps[i]
        prev = path.steps[i - 1][1] if i > 0 else path.start
        reduction = setup.reduction(rid)
        try:
            sol = reduction.lift(prev, inst, sol)
        except Exception as exc:
            raise LiftIntegrityError(i + 1, rid, str(exc)) from exc
        if check is not None and not check(prev, sol):
            raise LiftIntegrityError(i + 1, rid, "lifted value is not a solution")
    return sol


def _move_key(instance: Instance) -> Any:
    return getattr(instance, "sort_key", instance)


def enumerate_moves(
    setup: Setup,
    x: Instance,
    move_cap: int = DEFAULT_MOVE_CAP,
    strict_cap: bool = False,
) -> list[tuple[str, Instance]]:
    """All moves from ``x``, as (reduction id, instance) pairs in setup order.

    Within each reduction the moves are canonically ordered and deduplicated,
    and self-moves (successor equal to ``x``) are dropped.  A reduction
    offering more than ``move_cap`` moves is truncated to the
    lexicographically-first ``move_cap`` of them; with ``strict_cap`` the
    truncation raises MoveCapExceeded carrying the partial enumeration.
    """
    out: list[tuple[str, Instance]] = []
    for reduction in setup.reductions:
        block: list[Instance] = []
        seen: set[Instance] = set()
        for m in reduction.moves(x):
            if m == x or m in seen:
                continue
            seen.add(m)
            block.append(m)
        block.sort(key=_move_key)
        if len(block) > move_cap:
            block = block[:move_cap]
            if strict_cap:
                partial = out + [(reduction.id, m) for m in block]
                raise MoveCapExceeded(reduction.id, partial, move_cap)
        out.extend((reduction.id, m) for m in block)
    return out
