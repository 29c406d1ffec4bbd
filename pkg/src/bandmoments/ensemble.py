"""Sampling of real-symmetric Gaussian band matrices and the GOE reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import VarianceProfile

__all__ = ["RngStream", "MatrixSample", "sample_band", "sample_goe"]


@dataclass(frozen=True)
class RngStream:
    """Reproducible substream: (master_seed, stream_index) pins the draw sequence.

    Streams are split with numpy's SeedSequence spawn keys, so distinct
    indices give statistically independent generators without sequential
    dependence between them.
    """

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))
        return np.random.default_rng(seq)


@dataclass(frozen=True)
class MatrixSample:
    """One draw of the ensemble; entries is exactly symmetric by construction."""

    entries: np.ndarray

    @property
    def N(self) -> int:
        return self.entries.shape[0]


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def _sample_symmetric(sqrt_off: np.ndarray, sqrt_diag: np.ndarray,
                      gen: np.random.Generator) -> MatrixSample:
    # Off-diagonal H_ij ~ N(0, J_ij) for i<j, diagonal H_ii ~ N(0, 2 J_ii).
    n = len(sqrt_diag)
    g = gen.standard_normal((n, n))
    upper = np.triu(g * sqrt_off, k=1)
    h = upper + upper.T
    np.fill_diagonal(h, np.diagonal(g) * sqrt_diag)
    return MatrixSample(h)


def sample_band(profile: VarianceProfile, rng) -> MatrixSample:
    """Draw H with E[H_ij H_kl] = (delta_ik delta_jl + delta_il delta_jk) J_ij."""
    j = profile.entries
    return _sample_symmetric(np.sqrt(j), np.sqrt(2.0 * np.diagonal(j)),
                             _generator(rng))


def sample_goe(N: int, rng) -> MatrixSample:
    """GOE reference: flat profile J_ij = 1/N (same sampling rule as the band)."""
    if N < 1:
        raise ValueError(f"matrix size must be positive, got {N}")
    sqrt_off = np.full((N, N), np.sqrt(1.0 / N))
    sqrt_diag = np.full(N, np.sqrt(2.0 / N))
    return _sample_symmetric(sqrt_off, sqrt_diag, _generator(rng))
