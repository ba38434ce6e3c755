"""Window topology over replica ranks and the complaint escalation schedule.

Window ``j`` holds the ``2**(j-1)`` replicas ranked ``2**(j-1) .. 2**j - 1``
in ascending id order.  Only windows ``1..max_window_index`` are defined.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

from .types import ProtocolConfig


def max_window_index(cfg: ProtocolConfig) -> int:
    # ceil(log2(f'+1)) computed exactly on integers
    return max(1, cfg.f_prime.bit_length())


def rank(replica: int, ids: Sequence[int] | None = None) -> int:
    """1-based position of ``replica`` in ascending id order."""
    if ids is None:
        return replica
    return sorted(ids).index(replica) + 1


def window_members(j: int, cfg: ProtocolConfig, ids: Iterable[int] | None = None) -> list[int]:
    k = max_window_index(cfg)
    if not 1 <= j <= k:
        raise ValueError(f"window index {j} out of range 1..{k}")
    ordered = sorted(ids) if ids is not None else list(cfg.replica_ids)
    lo, hi = 2 ** (j - 1), 2 ** j - 1
    return [r for pos, r in enumerate(ordered, start=1) if lo <= pos <= hi]


def window_of(replica: int, cfg: ProtocolConfig, ids: Sequence[int] | None = None) -> Optional[int]:
    r = rank(replica, ids)
    j = r.bit_length()  # r in [2**(j-1), 2**j - 1]
    return j if j <= max_window_index(cfg) else None


def window_population(cfg: ProtocolConfig) -> int:
    return 2 ** max_window_index(cfg) - 1


def escalation_deadline(j: int, T: int) -> int:
    """Time after epoch start by which window ``j`` must have answered."""
    if j < 1 or T <= 0:
        raise ValueError("need j >= 1 and T > 0")
    return j * 3 * T + 6 * T


def fallback_deadline(cfg: ProtocolConfig) -> int:
    """Time after epoch start at which an exhausted complainer broadcasts."""
    return escalation_deadline(max_window_index(cfg), cfg.T) + 3 * cfg.T
