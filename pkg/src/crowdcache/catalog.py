"""Content library and Zipf request popularity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _check_permutation(rankings: np.ndarray, file_count: int) -> None:
    if rankings.shape != (file_count,):
        raise ValueError(f"rankings must have length {file_count}, got shape {rankings.shape}")
    if not np.array_equal(np.sort(rankings), np.arange(1, file_count + 1)):
        raise ValueError("rankings must be a permutation of 1..F")


def zipf_popularity(file_count, skew, stationary_factor=0.0, rankings=None):
    """Request probability of each file under a (shifted) Zipf law.

    ``q_f = (R_f + eps)^-beta / sum_i (R_i + eps)^-beta`` where ``R_f`` is the
    popularity rank of file ``f`` (1 = most popular).

    Parameters
    ----------
    file_count : int
        Number of files in the library.
    skew : float
        Zipf exponent; 0 gives uniform popularity.
    stationary_factor : float
        Additive rank shift.
    rankings : array_like of int, optional
        Rank of each file. Defaults to the identity (file index = rank).

    Returns
    -------
    numpy.ndarray
        Popularity vector of length ``file_count`` summing to one.
    """
    file_count = int(file_count)
    if file_count < 1:
        raise ValueError("file_count must be >= 1")
    if skew < 0:
        raise ValueError("skew must be nonnegative")
    if stationary_factor < 0:
        raise ValueError("stationary_factor must be nonnegative")
    if rankings is None:
        rankings = np.arange(1, file_count + 1)
    rankings = np.asarray(rankings)
    _check_permutation(rankings, file_count)
    # log-domain weights keep large skews from underflowing
    logw = -float(skew) * np.log(rankings.astype(float) + stationary_factor)
    w = np.exp(logw - logw.max())
    return w / w.sum()


@dataclass(frozen=True)
class ContentCatalog:
    """File sizes plus the popularity they are requested with.

    Popularity is computed once at construction and cached on the instance.
    """

    sizes: np.ndarray
    skew: float = 0.0
    stationary_factor: float = 0.0
    rankings: np.ndarray | None = None
    popularity: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=float)
        if sizes.ndim != 1 or sizes.size == 0:
            raise ValueError("sizes must be a nonempty 1-D vector")
        if np.any(~np.isfinite(sizes)) or np.any(sizes <= 0):
            raise ValueError("all file sizes must be strictly positive")
        rankings = (np.arange(1, sizes.size + 1) if self.rankings is None
                    else np.asarray(self.rankings, dtype=int))
        q = zipf_popularity(sizes.size, self.skew, self.stationary_factor, rankings)
        sizes.setflags(write=False)
        rankings.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "rankings", rankings)
        object.__setattr__(self, "popularity", q)

    @classmethod
    def uniform_sizes(cls, file_count, size=1.0, **kwargs):
        return cls(np.full(int(file_count), float(size)), **kwargs)

    @property
    def file_count(self) -> int:
        return int(self.sizes.size)

    @property
    def demand(self) -> float:
        """Expected size of one request, ``sum_f q_f s_f``."""
        return float(self.popularity @ self.sizes)

    def rank_order(self) -> np.ndarray:
        """File indices sorted from most to least popular."""
        return np.argsort(self.rankings, kind="stable")
