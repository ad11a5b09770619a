"""Post-history representation and final feature fusion.

The post-history vector is the plain mean over ALL post embeddings (it
deliberately ignores the risk and emotion filters, recovering what they
drop). Fusion sums the two same-space vectors and concatenates the 9-dim
criteria feature; no scaling is applied anywhere, the tree classifier is
insensitive to monotone scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import N_CRITERIA, UserRecord
from .providers.base import EncoderProvider


@dataclass(frozen=True)
class UserFeatures:
    user_id: str
    f_ph: np.ndarray          # mean embedding over all posts
    f_mc: np.ndarray          # mood-course representation, same space
    f_dc: tuple[float, ...]   # 9 criteria means
    label: int | None = None

    @property
    def fused(self) -> np.ndarray:
        return fuse(self.f_mc, self.f_ph, self.f_dc)


def post_history_representation(user: UserRecord, encoder: EncoderProvider) -> np.ndarray:
    """Arithmetic mean of all N post embeddings (no re-normalization)."""
    if not user.posts:
        raise ValueError(f"user {user.user_id!r} has no posts")
    stacked = np.stack([encoder.encode(p.text) for p in user.posts])
    return np.mean(stacked, axis=0)


def fuse(f_mc: np.ndarray, f_ph: np.ndarray, f_dc: tuple[float, ...] | np.ndarray) -> np.ndarray:
    """concat(f_mc + f_ph, f_dc): elementwise sum over the shared space,
    criteria entries appended unchanged. Output dimension d + 9."""
    f_mc = np.asarray(f_mc, dtype=np.float64)
    f_ph = np.asarray(f_ph, dtype=np.float64)
    if f_mc.shape != f_ph.shape:
        raise ValueError(f"dimension mismatch: f_mc {f_mc.shape} vs f_ph {f_ph.shape}")
    dc = np.asarray(f_dc, dtype=np.float64)
    if dc.shape != (N_CRITERIA,):
        raise ValueError(f"criteria feature must have {N_CRITERIA} entries, got {dc.shape}")
    return np.concatenate([f_mc + f_ph, dc])
