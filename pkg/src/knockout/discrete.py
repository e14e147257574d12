"""Exact discrete-enumeration oracles for the knockout identities.

A :class:`DiscreteJoint` is a finite p(X, Y) table. With rational entries
every computation here stays in exact arithmetic (integer sums with one
Fraction at the end), which is what makes the placeholder theorems
checkable as equalities rather than approximations:

* out-of-support placeholders: conditioning the knockout-augmented input
  on a placeholder pattern yields exactly the marginal p(Y | observed);
* in-support placeholders: the induced conditional deviates from the
  marginal by a closed-form ratio, computed by ``insupport_deviation``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = [
    "DiscreteJoint",
    "UnreachableEvidenceError",
    "marginal_discrete",
    "induced_conditional_discrete",
    "insupport_deviation",
    "make_evidence",
    "reachable_evidence",
    "out_of_support_placeholders",
    "verify_out_of_support",
    "tv_distance",
    "random_discrete_joint",
    "load_joint_table",
    "dump_joint_table",
]

Prob = Union[Fraction, float]


class UnreachableEvidenceError(ValueError):
    """Conditioning event has probability zero."""


@dataclass(frozen=True)
class DiscreteJoint:
    """Finite joint distribution over feature tuples and labels."""

    alphabets: tuple[tuple[int, ...], ...]
    y_values: tuple[int, ...]
    table: Mapping[tuple[tuple[int, ...], int], Prob]

    @property
    def d(self) -> int:
        return len(self.alphabets)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(p, (Fraction, int)) for p in self.table.values())

    def p(self, x: tuple[int, ...], y: int) -> Prob:
        return self.table.get((x, y), Fraction(0) if self.is_exact else 0.0)

    def support_x(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(*self.alphabets)

    def validate(self) -> None:
        for (x, y), p in self.table.items():
            if len(x) != self.d:
                raise ValueError(f"point {x} has wrong dimension")
            if any(v not in alph for v, alph in zip(x, self.alphabets)):
                raise ValueError(f"point {x} outside the declared alphabets")
            if y not in self.y_values:
                raise ValueError(f"label {y} outside the declared label set")
            if p < 0:
                raise ValueError(f"negative probability at ({x}, {y})")
        total = sum(self.table.values())
        if self.is_exact:
            if total != 1:
                raise ValueError(f"probabilities must sum to 1 exactly, got {total}")
        elif abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1 within 1e-12, got {total}")


def _zero(exact: bool) -> Prob:
    return Fraction(0) if exact else 0.0


def marginal_discrete(
    joint: DiscreteJoint, pattern: np.ndarray | Iterable[int]
) -> dict[tuple[int, ...], dict[int, Prob]]:
    """Exact p(Y | observed coordinates) for one missingness pattern.

    ``pattern`` marks missing coordinates with 1. Returns a table keyed by
    the observed-coordinate values (a tuple over the unmasked positions,
    in index order); only reachable evidence appears.
    """
    pattern = tuple(int(b) for b in pattern)
    if len(pattern) != joint.d:
        raise ValueError(f"pattern length {len(pattern)} != d {joint.d}")
    obs_idx = [i for i, b in enumerate(pattern) if b == 0]
    exact = joint.is_exact
    sums: dict[tuple[int, ...], dict[int, Prob]] = {}
    for (x, y), p in joint.table.items():
        if p == 0:
            continue
        key = tuple(x[i] for i in obs_idx)
        row = sums.setdefault(key, {})
        row[y] = row.get(y, _zero(exact)) + p
    out = {}
    for key, row in sums.items():
        total = sum(row.values())
        out[key] = {y: row.get(y, _zero(exact)) / total for y in joint.y_values}
    return out


def make_evidence(
    pattern: np.ndarray | Iterable[int],
    x: tuple[int, ...],
    placeholders: tuple[int, ...],
) -> tuple[int, ...]:
    """Augmented-input evidence: placeholder where masked, x elsewhere."""
    return tuple(
        placeholders[i] if b else x[i] for i, b in enumerate(int(b) for b in pattern)
    )


def induced_conditional_discrete(
    joint: DiscreteJoint,
    q: Prob,
    placeholders: tuple[int, ...],
    evidence: tuple[int, ...],
) -> dict[int, Prob]:
    """Exact p(Y | X' = evidence) under i.i.d. Bernoulli(q) knockout.

    For each feature, a mask bit of 1 forces the augmented value to the
    placeholder and a bit of 0 keeps the true value, so the total weight
    of (mask, x) pairs consistent with the evidence factorizes per
    feature: q if the evidence shows the placeholder, plus (1 - q) if the
    true value equals the evidence. Works for in-support placeholders
    too, which is what the suboptimal-placeholder counterexample uses.
    """
    if len(evidence) != joint.d or len(placeholders) != joint.d:
        raise ValueError("evidence and placeholders must have length d")
    exact = joint.is_exact and isinstance(q, (Fraction, int))
    if exact:
        q = Fraction(q)
        if not 0 <= q <= 1:
            raise ValueError(f"q must be in [0, 1], got {q}")
        qn, qd = q.numerator, q.denominator
        match_ph = [qn if evidence[i] == placeholders[i] else 0 for i in range(joint.d)]
        keep = qd - qn
        num: dict[int, int] = {y: 0 for y in joint.y_values}
        for (x, y), p in joint.table.items():
            if p == 0:
                continue
            w = 1
            for i in range(joint.d):
                wi = match_ph[i] + (keep if x[i] == evidence[i] else 0)
                if wi == 0:
                    w = 0
                    break
                w *= wi
            if w:
                frac = Fraction(p)
                num[y] += w * frac.numerator * _scaled_den(frac, joint)
        total = sum(num.values())
        if total == 0:
            raise UnreachableEvidenceError(f"unreachable evidence {evidence}")
        return {y: Fraction(n, total) for y, n in num.items()}

    qf = float(q)
    if not 0.0 <= qf <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {qf}")
    num_f = {y: 0.0 for y in joint.y_values}
    for (x, y), p in joint.table.items():
        if p == 0:
            continue
        w = 1.0
        for i in range(joint.d):
            wi = (qf if evidence[i] == placeholders[i] else 0.0) + (
                (1.0 - qf) if x[i] == evidence[i] else 0.0
            )
            if wi == 0.0:
                w = 0.0
                break
            w *= wi
        num_f[y] += w * float(p)
    total_f = sum(num_f.values())
    if total_f == 0.0:
        raise UnreachableEvidenceError(f"unreachable evidence {evidence}")
    return {y: n / total_f for y, n in num_f.items()}


def _scaled_den(frac: Fraction, joint: DiscreteJoint) -> int:
    # Integer sums need a common denominator; cache its LCM on the joint.
    lcm = getattr(joint, "_den_lcm", None)
    if lcm is None:
        lcm = 1
        for p in joint.table.values():
            lcm = math.lcm(lcm, Fraction(p).denominator)
        object.__setattr__(joint, "_den_lcm", lcm)
    return lcm // frac.denominator


def insupport_deviation(
    joint: DiscreteJoint,
    q: Prob,
    feature: int,
    placeholder: int,
) -> dict[tuple[tuple[int, ...], int], Prob]:
    """Deviation ratio of the induced conditional from the true marginal.

    For an in-support placeholder on one feature, with r = P(mask bit is
    0) = 1 - q, the induced conditional equals the marginal times

        (1 - r + r * P(X_i = placeholder | Y, rest))
        -----------------------------------------------
        (1 - r + r * P(X_i = placeholder | rest))

    Returned keyed by (rest-of-row values, y); only contexts with positive
    probability and labels with positive conditional mass appear.
    """
    if placeholder not in joint.alphabets[feature]:
        raise ValueError(f"placeholder {placeholder} is not in the support of feature {feature}")
    exact = joint.is_exact and isinstance(q, (Fraction, int))
    one = Fraction(1) if exact else 1.0
    qv = Fraction(q) if exact else float(q)
    r = one - qv

    rest_idx = [i for i in range(joint.d) if i != feature]
    ctx_mass: dict[tuple[int, ...], Prob] = {}
    ctx_ph: dict[tuple[int, ...], Prob] = {}
    joint_mass: dict[tuple[tuple[int, ...], int], Prob] = {}
    joint_ph: dict[tuple[tuple[int, ...], int], Prob] = {}
    zero = _zero(exact)
    for (x, y), p in joint.table.items():
        if p == 0:
            continue
        ctx = tuple(x[i] for i in rest_idx)
        ctx_mass[ctx] = ctx_mass.get(ctx, zero) + p
        joint_mass[(ctx, y)] = joint_mass.get((ctx, y), zero) + p
        if x[feature] == placeholder:
            ctx_ph[ctx] = ctx_ph.get(ctx, zero) + p
            joint_ph[(ctx, y)] = joint_ph.get((ctx, y), zero) + p

    out: dict[tuple[tuple[int, ...], int], Prob] = {}
    for (ctx, y), mass in joint_mass.items():
        p_ph_given_ctx = ctx_ph.get(ctx, zero) / ctx_mass[ctx]
        p_ph_given_y_ctx = joint_ph.get((ctx, y), zero) / mass
        den = one - r + r * p_ph_given_ctx
        if den == 0:
            raise UnreachableEvidenceError(f"unreachable evidence at context {ctx}")
        out[(ctx, y)] = (one - r + r * p_ph_given_y_ctx) / den
    return out


def reachable_evidence(
    joint: DiscreteJoint,
    pattern: np.ndarray | Iterable[int],
    placeholders: tuple[int, ...],
) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """(observed values, full evidence) pairs with positive probability."""
    pattern = tuple(int(b) for b in pattern)
    obs_idx = [i for i, b in enumerate(pattern) if b == 0]
    seen = set()
    out = []
    for (x, _), p in joint.table.items():
        if p == 0:
            continue
        key = tuple(x[i] for i in obs_idx)
        if key in seen:
            continue
        seen.add(key)
        out.append((key, make_evidence(pattern, x, placeholders)))
    out.sort()
    return out


def out_of_support_placeholders(joint: DiscreteJoint) -> tuple[int, ...]:
    """One placeholder per feature guaranteed outside its alphabet."""
    return tuple(max(alph) + 1 for alph in joint.alphabets)


def verify_out_of_support(joint: DiscreteJoint, q: Prob) -> int:
    """Check the induced conditional equals the marginal for every pattern.

    Uses out-of-support placeholders; exact equality is required for
    rational tables and 1e-12 agreement for float tables. Returns the
    number of (pattern, evidence, label) comparisons made.
    """
    placeholders = out_of_support_placeholders(joint)
    exact = joint.is_exact and isinstance(q, (Fraction, int))
    checks = 0
    for bits in itertools.product((0, 1), repeat=joint.d):
        marg = marginal_discrete(joint, bits)
        for obs_values, evidence in reachable_evidence(joint, bits, placeholders):
            induced = induced_conditional_discrete(joint, q, placeholders, evidence)
            expected = marg[obs_values]
            for y in joint.y_values:
                if exact:
                    if induced[y] != expected[y]:
                        raise ValueError(
                            f"induced != marginal at pattern {bits}, evidence {evidence}, "
                            f"y={y}: {induced[y]} vs {expected[y]}"
                        )
                elif abs(induced[y] - expected[y]) > 1e-12:
                    raise ValueError(
                        f"induced != marginal at pattern {bits}, evidence {evidence}, "
                        f"y={y}: {induced[y]} vs {expected[y]}"
                    )
                checks += 1
    return checks


def tv_distance(p: Mapping[int, Prob], q: Mapping[int, Prob]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(float(p.get(k, 0)) - float(q.get(k, 0))) for k in keys)


def random_discrete_joint(
    rng: np.random.Generator,
    d_max: int = 3,
    alphabet_max: int = 4,
    y_max: int = 3,
    exact: bool = True,
    zero_fraction: float = 0.2,
) -> DiscreteJoint:
    """Random small joint with integer-weight (hence rational) probabilities."""
    d = int(rng.integers(1, d_max + 1))
    alphabets = tuple(
        tuple(range(1, int(rng.integers(2, alphabet_max + 1)) + 1)) for _ in range(d)
    )
    y_values = tuple(range(int(rng.integers(2, y_max + 1))))
    cells = list(itertools.product(itertools.product(*alphabets), y_values))
    weights = rng.integers(1, 10, size=len(cells))
    weights[rng.random(len(cells)) < zero_fraction] = 0
    if weights.sum() == 0:
        weights[int(rng.integers(len(cells)))] = 1
    total = int(weights.sum())
    if exact:
        table = {
            cell: Fraction(int(w), total) for cell, w in zip(cells, weights) if w
        }
    else:
        table = {cell: int(w) / total for cell, w in zip(cells, weights) if w}
    joint = DiscreteJoint(alphabets, y_values, table)
    joint.validate()
    return joint


def load_joint_table(text: str) -> DiscreteJoint:
    """Parse a joint from lines of 'x1 ... xd y probability'.

    Probabilities may be decimals or fractions like 3/10; both parse to
    exact rationals. Blank lines and '#' comments are skipped.
    """
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ValueError(f"line {lineno}: expected 'x... y prob', got {line!r}")
        try:
            x = tuple(int(v) for v in parts[:-2])
            y = int(parts[-2])
            p = Fraction(parts[-1])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
        rows.append((x, y, p))
    if not rows:
        raise ValueError("empty joint table")
    d = len(rows[0][0])
    if any(len(x) != d for x, _, _ in rows):
        raise ValueError("inconsistent feature dimension across rows")
    alphabets = tuple(
        tuple(sorted({x[i] for x, _, _ in rows})) for i in range(d)
    )
    y_values = tuple(sorted({y for _, y, _ in rows}))
    table = {(x, y): p for x, y, p in rows if p != 0}
    joint = DiscreteJoint(alphabets, y_values, table)
    joint.validate()
    return joint


def dump_joint_table(joint: DiscreteJoint) -> str:
    lines = []
    for (x, y), p in sorted(joint.table.items()):
        frac = Fraction(p) if not isinstance(p, float) else p
        lines.append(" ".join([*(str(v) for v in x), str(y), str(frac)]))
    return "\n".join(lines) + "\n"
