"""Rank-1 constraint system builder.

Wires are integers; wire 0 is the constant one. Public wires come first
(1..n_public) so the proving system can split the witness vector without
a separate map. Every constraint carries a clause label so an unsatisfied
witness can be reported against the relation clause that failed.
"""

from __future__ import annotations

from .backends import params

R = params.R


class UnsatisfiedConstraintError(Exception):
    def __init__(self, label: str, index: int):
        super().__init__(f"constraint {index} unsatisfied: {label}")
        self.label = label
        self.index = index


class LC:
    """Sparse linear combination of wires: {wire: coefficient}."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        if terms:
            for wire, coeff in terms.items():
                c = coeff % R
                if c:
                    self.terms[wire] = c

    @classmethod
    def const(cls, value: int) -> "LC":
        return cls({0: value})

    @classmethod
    def wire(cls, index: int) -> "LC":
        return cls({index: 1})

    def __add__(self, other: "LC") -> "LC":
        out = dict(self.terms)
        for wire, coeff in other.terms.items():
            c = (out.get(wire, 0) + coeff) % R
            if c:
                out[wire] = c
            elif wire in out:
                del out[wire]
        res = LC()
        res.terms = out
        return res

    def __sub__(self, other: "LC") -> "LC":
        return self + (other * (R - 1))

    def __mul__(self, scalar: int) -> "LC":
        res = LC()
        if scalar % R:
            res.terms = {w: c * scalar % R for w, c in self.terms.items()}
        return res

    __rmul__ = __mul__

    def shift(self, constant: int) -> "LC":
        return self + LC.const(constant)


ONE = LC.wire(0)
ZERO = LC()


class ConstraintSystem:
    def __init__(self, n_public: int):
        self.n_public = n_public
        self.n_wires = 1 + n_public
        self.constraints: list[tuple[dict, dict, dict, str]] = []

    def alloc(self) -> int:
        index = self.n_wires
        self.n_wires += 1
        return index

    def enforce(self, a: LC, b: LC, c: LC, label: str) -> None:
        self.constraints.append((a.terms, b.terms, c.terms, label))

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)


class Builder:
    """Couples a constraint system with a concrete wire assignment.

    Synthesis is straight-line: the same calls produce the same constraint
    shape for any assignment, which is what lets setup run on dummy values.
    """

    def __init__(self, n_public: int):
        self.cs = ConstraintSystem(n_public)
        self.values: list[int] = [1] + [0] * n_public

    def set_public(self, index: int, value: int) -> LC:
        if not 1 <= index <= self.cs.n_public:
            raise IndexError("not a public wire")
        self.values[index] = value % R
        return LC.wire(index)

    def alloc(self, value: int) -> LC:
        index = self.cs.alloc()
        self.values.append(value % R)
        return LC.wire(index)

    def eval_lc(self, lc: LC) -> int:
        return sum(coeff * self.values[wire] for wire, coeff in lc.terms.items()) % R

    def mul(self, a: LC, b: LC, label: str) -> LC:
        out = self.alloc(self.eval_lc(a) * self.eval_lc(b))
        self.cs.enforce(a, b, out, label)
        return out

    def enforce(self, a: LC, b: LC, c: LC, label: str) -> None:
        self.cs.enforce(a, b, c, label)

    def enforce_equal(self, a: LC, b: LC, label: str) -> None:
        self.cs.enforce(a - b, ONE, ZERO, label)

    def enforce_bool(self, bit: LC, label: str) -> None:
        self.cs.enforce(bit, bit, bit, label)


def eval_constraints(cs: ConstraintSystem, values: list[int]) -> None:
    """Raise UnsatisfiedConstraintError at the first failing clause."""

    def ev(terms):
        return sum(coeff * values[wire] for wire, coeff in terms.items()) % R

    for index, (a, b, c, label) in enumerate(cs.constraints):
        if ev(a) * ev(b) % R != ev(c):
            raise UnsatisfiedConstraintError(label, index)
