"""Mixed exact/float scalar helpers.

Lattice quantities are kept as :class:`fractions.Fraction` whenever every input
is an int or a Fraction, so that boundary cases (``a.p == |p|^2/2``,
``|x| == |p|``, vanishing triple products) are decided exactly. As soon as a
float enters, arithmetic silently falls back to floats.
"""
from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Iterable, Union

Number = Union[int, Fraction, float]

FLOAT_TOL = 1e-12

_SQRT_RE = re.compile(r"^\s*([+-]?)\s*sqrt\(\s*([^)]+)\s*\)\s*$")


def as_number(x) -> Number:
    """Normalise ``x`` to Fraction (exact) or float.

    Accepts ints, Fractions, floats, numpy scalars and strings such as
    ``"3"``, ``"11/10"``, ``"1.25"`` or ``"sqrt(2)"``.
    """
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return parse_number(x)
    if hasattr(x, "dtype"):
        if x.dtype.kind in "iu":
            return Fraction(int(x))
        return float(x)
    return float(x)


def parse_number(text: str) -> Number:
    text = text.strip()
    m = _SQRT_RE.match(text)
    if m:
        inner = as_number(m.group(2))
        val = math.sqrt(float(inner))
        root = math.isqrt(int(inner)) if is_exact(inner) and inner.denominator == 1 and inner >= 0 else None
        if root is not None and root * root == inner:
            val = Fraction(root)
        return -val if m.group(1) == "-" else val
    if re.fullmatch(r"[+-]?\d+", text):
        return Fraction(int(text))
    if re.fullmatch(r"[+-]?\d+\s*/\s*[+-]?\d+", text):
        num, den = text.split("/")
        return Fraction(int(num), int(den))
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"cannot parse number {text!r}") from None


def is_exact(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def all_exact(xs: Iterable) -> bool:
    return all(is_exact(x) for x in xs)


def dot(u, v) -> Number:
    return sum((a * b for a, b in zip(u, v)), Fraction(0))


def cross(u, v) -> tuple:
    return (
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    )


def is_zero(x, scale: float = 1.0, tol: float = FLOAT_TOL) -> bool:
    """Exact zero test for exact input, relative tolerance otherwise."""
    if is_exact(x):
        return x == 0
    return abs(x) <= tol * max(scale, 1e-300)


def compare(x, y, scale: float = 1.0, tol: float = FLOAT_TOL) -> int:
    """Three-way comparison; float inputs within ``tol*scale`` compare equal."""
    d = x - y
    if is_zero(d, scale, tol):
        return 0
    return 1 if d > 0 else -1


def to_float(x) -> float:
    return float(x)
