"""Similarity measures over rating sequences (0 = unrated).

Every measure exists in two forms: a scalar function of two sequences, and a
``*_many`` form scoring one sequence against the rows of a matrix.  The
pipeline uses the batched form; the scalar form is the reference.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cohrcf import spectral
from cohrcf.errors import DimensionMismatch

KINDS = ("cohr", "pcc", "jaccard", "msd", "jmsd")

# largest squared difference on the 1..5 scale
MSD_SCALE = 16.0


@dataclass(frozen=True)
class SimilarityMeasure:
    """A measure kind plus its parameters.

    For ``cohr``, ``params`` may hold a fixed :class:`~cohrcf.spectral.WelchParams`
    under ``"welch"``; otherwise the estimator is sized to the sequence length,
    with ``segment_cap`` (default 32) and ``overlap`` (default 0.5) honoured.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown similarity measure {self.kind!r}; expected one of {KINDS}")

    @classmethod
    def parse(cls, text: str, **params) -> "SimilarityMeasure":
        return cls(text.strip().lower(), params)

    def welch_for(self, n: int) -> spectral.WelchParams:
        if "welch" in self.params:
            return self.params["welch"]
        return spectral.welch_params_for(
            n,
            segment_cap=self.params.get("segment_cap", 32),
            overlap=self.params.get("overlap", 0.5),
        )

    def __hash__(self):
        return hash((self.kind, tuple(sorted((k, repr(v)) for k, v in self.params.items()))))


def _pair(u, v):
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionMismatch(f"sequence lengths differ ({u.size} vs {v.size})")
    return u, v


def pcc(u, v) -> float:
    """Pearson correlation over co-rated positions.

    Means are taken over the co-rated positions.  Fewer than two co-rated
    positions, or zero variance on either side, gives 0.
    """
    u, v = _pair(u, v)
    common = (u != 0) & (v != 0)
    if common.sum() < 2:
        return 0.0
    du = u[common] - u[common].mean()
    dv = v[common] - v[common].mean()
    den = np.sqrt(np.sum(du * du)) * np.sqrt(np.sum(dv * dv))
    if den == 0:
        return 0.0
    return float(np.clip(np.sum(du * dv) / den, -1.0, 1.0))


def jaccard(u, v) -> float:
    u, v = _pair(u, v)
    a, b = u != 0, v != 0
    union = np.count_nonzero(a | b)
    return 0.0 if union == 0 else np.count_nonzero(a & b) / union


def msd(u, v) -> float:
    """``1 - mean squared difference / 16`` over co-rated positions (0 if none)."""
    u, v = _pair(u, v)
    common = (u != 0) & (v != 0)
    n = np.count_nonzero(common)
    if n == 0:
        return 0.0
    diff = u[common] - v[common]
    return float(1.0 - np.sum(diff * diff) / n / MSD_SCALE)


def jmsd(u, v) -> float:
    return jaccard(u, v) * msd(u, v)


def similarity(measure: SimilarityMeasure, a, b) -> float:
    if measure.kind == "cohr":
        a, b = _pair(a, b)
        return spectral.cohr_sim(a, b, measure.welch_for(a.size))
    return _SCALAR[measure.kind](a, b)


_SCALAR = {"pcc": pcc, "jaccard": jaccard, "msd": msd, "jmsd": jmsd}


# --------------------------------------------------------------------------
# batched forms: ``target`` (n,) against every row of ``cols`` (m, n)


def _batch(target, cols):
    t = np.asarray(target, dtype=np.float64).ravel()
    c = np.atleast_2d(np.asarray(cols, dtype=np.float64))
    if c.shape[1] != t.size:
        raise DimensionMismatch(f"sequence length {t.size} vs matrix width {c.shape[1]}")
    return t, c


def pcc_many(target, cols) -> np.ndarray:
    t, c = _batch(target, cols)
    common = (c != 0) & (t != 0)
    n = common.sum(axis=1)
    safe_n = np.maximum(n, 1)
    tt = np.where(common, t, 0.0)
    cc = np.where(common, c, 0.0)
    dt = np.where(common, tt - (tt.sum(axis=1) / safe_n)[:, None], 0.0)
    dc = np.where(common, cc - (cc.sum(axis=1) / safe_n)[:, None], 0.0)
    den = np.sqrt(np.sum(dt * dt, axis=1)) * np.sqrt(np.sum(dc * dc, axis=1))
    ok = (n >= 2) & (den > 0)
    out = np.where(ok, np.sum(dt * dc, axis=1) / np.where(ok, den, 1.0), 0.0)
    return np.clip(out, -1.0, 1.0)


def jaccard_many(target, cols) -> np.ndarray:
    t, c = _batch(target, cols)
    a, b = t != 0, c != 0
    inter = np.count_nonzero(a & b, axis=1)
    union = np.count_nonzero(a | b, axis=1)
    return np.where(union > 0, inter / np.maximum(union, 1), 0.0)


def msd_many(target, cols) -> np.ndarray:
    t, c = _batch(target, cols)
    common = (c != 0) & (t != 0)
    n = common.sum(axis=1)
    sq = np.where(common, (c - t) ** 2, 0.0).sum(axis=1)
    return np.where(n > 0, 1.0 - sq / np.maximum(n, 1) / MSD_SCALE, 0.0)


def jmsd_many(target, cols) -> np.ndarray:
    return jaccard_many(target, cols) * msd_many(target, cols)


def similarity_many(measure: SimilarityMeasure, target, cols) -> np.ndarray:
    if measure.kind == "cohr":
        t, c = _batch(target, cols)
        params = measure.welch_for(t.size)
        return spectral.cohr_sim_many(
            spectral.segment_spectra(t, params), spectral.segment_spectra(c, params)
        )
    return _MANY[measure.kind](target, cols)


_MANY = {"pcc": pcc_many, "jaccard": jaccard_many, "msd": msd_many, "jmsd": jmsd_many}
