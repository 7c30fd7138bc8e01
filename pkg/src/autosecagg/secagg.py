"""Functional model of pairwise-mask secure aggregation.

Each unordered pair of users {u, v} shares a seed derived from the session
seed. For u < v the seed expands to ``m`` uniform on [0, k)^d; user u adds
``m`` and user v adds ``-m mod k``. Every masked input is uniform on its own,
and the masks cancel in the modular sum.

Key agreement, secret sharing and dropout recovery are not modeled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError
from .rng import KeyedPCG


@dataclass(frozen=True)
class SecAggSession:
    n_users: int
    dim: int
    modulus: int
    session_seed: int

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError(f"n_users must be >= 1, got {self.n_users}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if int(self.modulus) != self.modulus or self.modulus < 2:
            raise ValueError(f"modulus must be an integer >= 2, got {self.modulus}")
        if self.modulus > 2**32:
            # int64 accumulators must hold n * k without overflow
            raise ValueError(f"modulus above 2**32 is not supported, got {self.modulus}")

    def pair_seed_labels(self, u: int, v: int) -> tuple:
        a, b = (u, v) if u < v else (v, u)
        return ("pair", a, b)

    def _check_user(self, u: int) -> None:
        if not 0 <= u < self.n_users:
            raise ProtocolError(f"user {u} outside [0, {self.n_users})")


@dataclass(frozen=True)
class MaskedInput:
    user: int
    values: np.ndarray


def _expand(session: SecAggSession, lo: int, hi: int, keyed: KeyedPCG) -> np.ndarray:
    g = keyed.rekey(session.session_seed, *session.pair_seed_labels(lo, hi))
    return g.integers(0, session.modulus, size=session.dim, dtype=np.int64)


def derive_mask(session: SecAggSession, u: int, v: int, _keyed: KeyedPCG | None = None) -> np.ndarray:
    """User u's half of the mask pair shared with v."""
    if u == v:
        raise ProtocolError("a user shares no mask with itself")
    session._check_user(u)
    session._check_user(v)
    m = _expand(session, min(u, v), max(u, v), _keyed or KeyedPCG())
    if u < v:
        return m
    return np.mod(-m, session.modulus)


def _check_input(session: SecAggSession, y) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (session.dim,):
        raise ValueError(f"input must have shape ({session.dim},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError("input must be an integer vector")
    if y.size and (y.min() < 0 or y.max() >= session.modulus):
        raise ValueError(f"input entries must lie in [0, {session.modulus})")
    return y.astype(np.int64)


def mask_input(session: SecAggSession, u: int, y) -> MaskedInput:
    session._check_user(u)
    y = _check_input(session, y)
    keyed = KeyedPCG()
    acc = y.copy()
    for v in range(session.n_users):
        if v != u:
            acc += derive_mask(session, u, v, keyed)
            acc %= session.modulus
    return MaskedInput(u, acc)


def mask_inputs(session: SecAggSession, ys) -> list[MaskedInput]:
    """Mask every user's input, expanding each pair's seed once.

    Same result as calling ``mask_input`` per user.
    """
    if len(ys) != session.n_users:
        raise ProtocolError(f"expected {session.n_users} inputs, got {len(ys)}")
    k = session.modulus
    accs = [_check_input(session, y).copy() for y in ys]
    keyed = KeyedPCG()
    for u in range(session.n_users):
        for v in range(u + 1, session.n_users):
            m = _expand(session, u, v, keyed)
            accs[u] += m
            accs[v] -= m
        accs[u] %= k
    return [MaskedInput(u, a) for u, a in enumerate(accs)]


def aggregate(inputs, session: SecAggSession) -> np.ndarray:
    """Sum of masked inputs mod k; the masks cancel."""
    seen = sorted(inp.user for inp in inputs)
    if seen != list(range(session.n_users)):
        raise ProtocolError(
            f"need exactly one input per user 0..{session.n_users - 1}, got users {seen}"
        )
    total = np.zeros(session.dim, dtype=np.int64)
    for inp in inputs:
        if np.shape(inp.values) != (session.dim,):
            raise ProtocolError(f"user {inp.user} submitted shape {np.shape(inp.values)}")
        total += inp.values
        total %= session.modulus
    return total


def secure_sum(ys, session: SecAggSession) -> np.ndarray:
    """Mask then aggregate; what the server learns from one session."""
    return aggregate(mask_inputs(session, ys), session)
