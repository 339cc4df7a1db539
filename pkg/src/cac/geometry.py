"""Axis-aligned boxes and the contracting l-inf search space.

The attack searches inside an l-inf ball around the target point, clipped to
the valid input range [0, 1]^d. Every accepted-but-rejected candidate shrinks
the space: the new space is the old outer ball intersected with a smaller ball
around the latest candidate, whose radius is t times the step the candidate
took. `ContractionState` tracks that recursion for one chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySpaceError, SpaceViolationError

__all__ = [
    "Box",
    "linf_ball",
    "intersect",
    "project",
    "linf_norm",
    "l2_norm",
    "ContractionState",
    "contract",
]


def _as_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {x : lower <= x <= upper}, both bounds inclusive."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _as_vector(self.lower, "lower")
        hi = _as_vector(self.upper, "upper")
        if lo.shape != hi.shape:
            raise ValueError(f"bound shapes differ: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound in some coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, point, atol: float = 0.0) -> bool:
        p = _as_vector(point, "point")
        if p.shape != self.lower.shape:
            return False
        return bool(np.all(p >= self.lower - atol) and np.all(p <= self.upper + atol))

    def is_degenerate(self) -> bool:
        """True when the box has zero width in every coordinate."""
        return bool(np.all(self.upper == self.lower))

    def widths(self) -> np.ndarray:
        return self.upper - self.lower


def linf_ball(center, radius: float, clip_lo: float = 0.0, clip_hi: float = 1.0) -> Box:
    """l-inf ball of given radius around center, clipped to [clip_lo, clip_hi]^d.

    The center must already lie inside the clip range, so the result is never
    empty.
    """
    c = _as_vector(center, "center")
    if not np.isfinite(radius) or radius < 0:
        raise ValueError(f"radius must be finite and >= 0, got {radius}")
    if clip_lo > clip_hi:
        raise ValueError("clip_lo exceeds clip_hi")
    if np.any(c < clip_lo) or np.any(c > clip_hi):
        raise ValueError("center lies outside the clip range")
    return Box(np.maximum(c - radius, clip_lo), np.minimum(c + radius, clip_hi))


def intersect(a: Box, b: Box) -> Box:
    """Intersection of two boxes; raises EmptySpaceError when they are disjoint."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    lo = np.maximum(a.lower, b.lower)
    hi = np.minimum(a.upper, b.upper)
    if np.any(lo > hi):
        raise EmptySpaceError("box intersection is empty")
    return Box(lo, hi)


def project(point, space: Box) -> np.ndarray:
    """Nearest point of the box in every l-p norm: coordinatewise clamping."""
    p = _as_vector(point, "point")
    if p.shape != space.lower.shape:
        raise ValueError(f"dimension mismatch: point {p.size}, box {space.dim}")
    return np.clip(p, space.lower, space.upper)


def linf_norm(v) -> float:
    return float(np.max(np.abs(_as_vector(v, "v"))))


def l2_norm(v) -> float:
    return float(np.linalg.norm(_as_vector(v, "v")))


@dataclass(frozen=True)
class ContractionState:
    """Per-chain contraction bookkeeping.

    rho is the radius of the ball around anchor (the latest candidate, or the
    chain start before any contraction); steps_taken counts how many
    contractions happened. The chain's current search space is always
    outer intersected with the rho-ball around anchor.
    """

    t: float
    rho: float
    steps_taken: int
    anchor: np.ndarray

    def __post_init__(self):
        if not (0.0 < self.t < 1.0):
            raise ValueError(f"contraction factor t must lie in (0, 1), got {self.t}")
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ValueError(f"rho must be finite and >= 0, got {self.rho}")
        object.__setattr__(self, "anchor", _as_vector(self.anchor, "anchor"))

    @classmethod
    def initial(cls, t: float, delta: float, start) -> "ContractionState":
        return cls(t=t, rho=float(delta), steps_taken=0, anchor=start)

    def space(self, outer: Box) -> Box:
        """Current search space: outer cap rho-ball around the anchor."""
        return intersect(outer, linf_ball(self.anchor, self.rho))


CONTRACT_ATOL = 1e-12


def contract(state: ContractionState, z_new, outer: Box) -> tuple[ContractionState, Box]:
    """Shrink the chain's space around a rejected candidate.

    New radius rho' = t * ||z_new - anchor||_inf, new space =
    outer cap l-inf ball(z_new, rho'). z_new must lie in the current space;
    overshoot up to CONTRACT_ATOL (accumulated rounding from repeated step
    additions) is tolerated and clamped away, so the radius always satisfies
    rho' <= t * rho exactly.
    """
    z = _as_vector(z_new, "z_new")
    current = state.space(outer)
    if not current.contains(z, atol=CONTRACT_ATOL):
        raise SpaceViolationError("candidate lies outside the current search space")
    z = project(z, current)
    rho_new = state.t * linf_norm(z - state.anchor)
    new_state = ContractionState(
        t=state.t, rho=rho_new, steps_taken=state.steps_taken + 1, anchor=z.copy()
    )
    return new_state, new_state.space(outer)
