"""Rank-2 HCIZ integrals over U(2) and Sp(2), their samplers, and checks.

The two closed forms, with E1 = t(c1 d1 + c2 d2), E2 = t(c1 d2 + c2 d1) and
tt = t(c1 - c2)(d1 - d2) = E1 - E2:

    U(2):   (e^E1 - e^E2) / tt
    Sp(2):  (6/tt^2) (e^E1 (1 - 2/tt) + e^E2 (1 + 2/tt))

Both degenerate gracefully: dividing out e^E1 leaves entire functions of tt,
whose Taylor series supply the small-tt paths.  The coset parametrization
takes s = |U_12|^2 uniform on [0, 1] under Haar, and the Sp(2) coset measure
adds the exact probability weight 3(1 - 2 s_V)^2 on the V factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .ensemble import RngStream

__all__ = [
    "HcizParams",
    "CosetAnglesU2",
    "SpTwoElement",
    "hciz_u2",
    "hciz_sp2",
    "sample_coset_u2",
    "sample_sp2",
    "u2_quadrature",
    "mc_hciz_u2",
    "mc_hciz_sp2",
    "ReductionReport",
    "reduction_check",
]

# Below this |tt| the generic forms lose digits to the 1/tt cancellations:
# their rounding floor is ~12 eps / |tt|^3, so the crossover sits where that
# floor is ~2e-11 and the series still converges in a few terms.
TAYLOR_CUTOFF = 5e-2

_SIGMA_HAT = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])


@dataclass(frozen=True)
class HcizParams:
    """Scale t and the two eigenvalue pairs (c1, c2), (d1, d2)."""

    t: complex
    c1: complex
    c2: complex
    d1: complex
    d2: complex

    def exponents(self) -> tuple[complex, complex, complex]:
        e1 = self.t * (self.c1 * self.d1 + self.c2 * self.d2)
        e2 = self.t * (self.c1 * self.d2 + self.c2 * self.d1)
        return e1, e2, e1 - e2


def hciz_u2(p: HcizParams) -> complex:
    """Closed form of int_{U(2)} exp(t Tr C U* D U) dmu(U)."""
    e1, e2, tt = p.exponents()
    if abs(tt) < TAYLOR_CUTOFF:
        return np.exp(e1) * _u2_series(tt)
    return (np.exp(e1) - np.exp(e2)) / tt


def _u2_series(tt: complex) -> complex:
    # (1 - e^{-u})/u = sum_j (-u)^j / (j+1)!
    acc = 0.0 + 0.0j
    for j in range(10, -1, -1):
        acc = 1.0 / math.factorial(j + 1) + acc * (-tt)
    return acc


def hciz_sp2(p: HcizParams) -> complex:
    """Closed form of int exp(t Tr G P* H P / 2) dnu(P) over the Sp(2) coset.

    G and H are the quaternion-diagonal 4x4 matrices diag(d1, d2, d1, d2)
    and diag(c1, c2, c1, c2).
    """
    e1, e2, tt = p.exponents()
    if abs(tt) < TAYLOR_CUTOFF:
        return np.exp(e1) * _sp2_series(tt)
    return _sp2_generic(e1, e2, tt)


def _sp2_generic(e1: complex, e2: complex, tt: complex) -> complex:
    return (6.0 / tt**2) * (np.exp(e1) * (1.0 - 2.0 / tt) + np.exp(e2) * (1.0 + 2.0 / tt))


def _sp2_series(tt: complex) -> complex:
    # 6 sum_j (-1)^j (j+1)/(j+3)! tt^j
    acc = 0.0 + 0.0j
    for j in range(10, -1, -1):
        acc = 6.0 * (j + 1) / math.factorial(j + 3) + acc * (-tt)
    return acc


@dataclass(frozen=True)
class CosetAnglesU2:
    """U(2) coset angles: s = |U_12|^2 in [0,1], phase alpha in [-pi, pi)."""

    s: float
    alpha: float

    def matrix(self) -> np.ndarray:
        return _coset_matrices(np.asarray([self.s]), np.asarray([self.alpha]))[0]


def _coset_matrices(s: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    sin_phi = np.sqrt(s)
    cos_phi = np.sqrt(1.0 - s)
    phase = np.exp(1j * alpha)
    u = np.empty(s.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = cos_phi
    u[..., 0, 1] = sin_phi * phase
    u[..., 1, 0] = -sin_phi / phase
    u[..., 1, 1] = cos_phi
    return u


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def sample_coset_u2(rng) -> CosetAnglesU2:
    """Haar draw on the U(2) coset: s uniform on [0,1], alpha uniform."""
    gen = _generator(rng)
    return CosetAnglesU2(gen.uniform(0.0, 1.0), gen.uniform(-np.pi, np.pi))


@dataclass(frozen=True)
class SpTwoElement:
    """Sp(2) coset element assembled from two U(2) coset factors."""

    U: np.ndarray
    V: np.ndarray
    P: np.ndarray


def _sp2_weight_inverse_cdf(p: np.ndarray) -> np.ndarray:
    # density 3(1-2s)^2 on [0,1]; CDF (1 - (1-2s)^3)/2
    return 0.5 * (1.0 - np.cbrt(1.0 - 2.0 * p))


def _assemble_sp2(s_u: np.ndarray, alpha: np.ndarray,
                  s_v: np.ndarray, beta: np.ndarray) -> np.ndarray:
    u = _coset_matrices(s_u, alpha)
    v = _coset_matrices(s_v, beta)
    shape = s_u.shape
    v_blk = np.zeros(shape + (4, 4), dtype=complex)
    v_blk[..., :2, :2] = v
    v_blk[..., 2:, 2:] = v.conj()
    sigma_p = np.array([[0.0, 1.0], [1.0, 0.0]])
    cos_phi = u[..., 0, 0].real
    sin_e = u[..., 0, 1]
    u_blk = np.zeros(shape + (4, 4), dtype=complex)
    u_blk[..., :2, :2] = cos_phi[..., None, None] * np.eye(2)
    u_blk[..., 2:, 2:] = cos_phi[..., None, None] * np.eye(2)
    u_blk[..., :2, 2:] = sin_e[..., None, None] * sigma_p
    u_blk[..., 2:, :2] = -sin_e.conj()[..., None, None] * sigma_p
    return v_blk @ u_blk


def sample_sp2(rng) -> SpTwoElement:
    """Draw from dnu(P) = 3(1 - 2|V_12|^2)^2 dmu(U) dmu(V)."""
    gen = _generator(rng)
    s_u = gen.uniform(0.0, 1.0)
    alpha = gen.uniform(-np.pi, np.pi)
    s_v = float(_sp2_weight_inverse_cdf(np.asarray(gen.uniform(0.0, 1.0))))
    beta = gen.uniform(-np.pi, np.pi)
    u = _coset_matrices(np.asarray([s_u]), np.asarray([alpha]))[0]
    v = _coset_matrices(np.asarray([s_v]), np.asarray([beta]))[0]
    p = _assemble_sp2(np.asarray([s_u]), np.asarray([alpha]),
                      np.asarray([s_v]), np.asarray([beta]))[0]
    return SpTwoElement(u, v, p)


def symplectic_defect(p: np.ndarray) -> float:
    """Max deviation from unitarity and from P sigma_hat P^t = sigma_hat."""
    unitary = np.max(np.abs(p @ p.conj().T - np.eye(4)))
    sympl = np.max(np.abs(p @ _SIGMA_HAT @ p.T - _SIGMA_HAT))
    return float(max(unitary, sympl))


def u2_quadrature(p: HcizParams, n_s: int = 96, n_alpha: int = 16) -> complex:
    """Deterministic (s, alpha) quadrature of the U(2) integral, C = diag(c1, c2)."""
    nodes, weights = np.polynomial.legendre.leggauss(n_s)
    s = 0.5 * (nodes + 1.0)
    ws = 0.5 * weights
    alpha = -np.pi + 2.0 * np.pi * np.arange(n_alpha) / n_alpha
    u = _coset_matrices(s[:, None] * np.ones(n_alpha)[None, :],
                        np.broadcast_to(alpha, (n_s, n_alpha)))
    c = np.array([p.c1, p.c2])
    d = np.array([p.d1, p.d2])
    # Tr C U* D U = sum_{k,l} c_k d_l |U_lk|^2
    quad_form = np.einsum("k,l,...lk->...", c, d, np.abs(u) ** 2)
    vals = np.exp(p.t * quad_form)
    return complex(np.einsum("s,sa->", ws, vals) / n_alpha)


def mc_hciz_u2(p: HcizParams, draws: int, rng, chunk: int = 200_000) -> tuple[complex, float]:
    """Monte Carlo over sample_coset_u2 draws; returns (mean, stderr)."""
    gen = _generator(rng)
    c = np.array([p.c1, p.c2])
    d = np.array([p.d1, p.d2])
    total = 0.0 + 0.0j
    total_sq = 0.0
    done = 0
    while done < draws:
        b = min(chunk, draws - done)
        u = _coset_matrices(gen.uniform(0.0, 1.0, b), gen.uniform(-np.pi, np.pi, b))
        vals = np.exp(p.t * np.einsum("k,l,blk->b", c, d, np.abs(u) ** 2))
        total += np.sum(vals)
        total_sq += float(np.sum(np.abs(vals) ** 2))
        done += b
    mean = total / draws
    var = max(total_sq / draws - abs(mean) ** 2, 0.0)
    return complex(mean), math.sqrt(var / draws)


def mc_hciz_sp2(p: HcizParams, draws: int, rng, chunk: int = 100_000) -> tuple[complex, float]:
    """Monte Carlo of int exp(t Tr G P* H P / 2) dnu(P) via sample_sp2 draws."""
    gen = _generator(rng)
    g = np.array([p.d1, p.d2, p.d1, p.d2])
    h = np.array([p.c1, p.c2, p.c1, p.c2])
    total = 0.0 + 0.0j
    total_sq = 0.0
    done = 0
    while done < draws:
        b = min(chunk, draws - done)
        pm = _assemble_sp2(gen.uniform(0.0, 1.0, b), gen.uniform(-np.pi, np.pi, b),
                           _sp2_weight_inverse_cdf(gen.uniform(0.0, 1.0, b)),
                           gen.uniform(-np.pi, np.pi, b))
        # Tr G P* H P = sum_{k,l} g_k h_l |P_lk|^2
        vals = np.exp(0.5 * p.t * np.einsum("k,l,blk->b", g, h, np.abs(pm) ** 2))
        total += np.sum(vals)
        total_sq += float(np.sum(np.abs(vals) ** 2))
        done += b
    mean = total / draws
    var = max(total_sq / draws - abs(mean) ** 2, 0.0)
    return complex(mean), math.sqrt(var / draws)


@dataclass(frozen=True)
class ReductionReport:
    """Dual-path evaluation of the 6-dim vs 2-dim reduced integral."""

    lhs: float
    lhs_stderr: float
    rhs: float
    relative_difference: float
    stderr_ok: bool


def reduction_check(t: float, d1: float, d2: float, phi, box: float = 7.0,
                    draws: int = 10_000_000, rng=None,
                    chunk: int = 1_000_000) -> ReductionReport:
    """Compare the 6-dim Gaussian integral of Phi(F) with its 2-dim reduction.

    LHS: Monte Carlo over (x, y, Re w1, Im w1, Re w2, Im w2) with density
    prop. to exp(-(t/4) Tr(F - G)^2); Phi is evaluated on the two doubly
    degenerate eigenvalues of the quaternion form F.  RHS: Gauss-Hermite
    quadrature of the reduced 2-eigenvalue integrand.  `box` is the
    per-coordinate truncation half-width in standard deviations; the Gaussian
    mass outside must be below 1e-10.

    `phi(y1, y2)` must be a vectorized symmetric polynomial of total degree
    at most 4 in the eigenvalues.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if d1 == d2:
        raise ValueError("the reduction formula requires d1 != d2")
    outside = 6.0 * erfc(box / math.sqrt(2.0))
    if outside >= 1e-10:
        raise ValueError(f"truncation box {box} leaves Gaussian mass {outside:.2e} outside")

    gen = _generator(rng) if rng is not None else np.random.default_rng(0)
    sd_xy = 1.0 / math.sqrt(t)
    sd_w = 1.0 / math.sqrt(2.0 * t)
    total = 0.0
    total_sq = 0.0
    kept = 0
    done = 0
    while done < draws:
        b = min(chunk, draws - done)
        z = gen.standard_normal((b, 6))
        keep = np.all(np.abs(z) <= box, axis=1)
        z = z[keep]
        x = d1 + sd_xy * z[:, 0]
        y = d2 + sd_xy * z[:, 1]
        w2 = sd_w**2 * np.sum(z[:, 2:] ** 2, axis=1)
        half_gap = np.sqrt(0.25 * (x - y) ** 2 + w2)
        mid = 0.5 * (x + y)
        vals = phi(mid + half_gap, mid - half_gap)
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals**2))
        kept += len(vals)
        done += b
    mass = 2.0 * math.pi**3 / t**3
    mean = total / kept
    var = max(total_sq / kept - mean**2, 0.0)
    lhs = mass * mean
    lhs_stderr = mass * math.sqrt(var / kept)

    nodes, weights = np.polynomial.hermite.hermgauss(24)
    scale = math.sqrt(2.0 / t)
    y1 = d1 + scale * nodes[:, None]
    y2 = d2 + scale * nodes[None, :]
    gap = y1 - y2
    integrand = phi(y1, y2) * (gap**2 - 2.0 * gap / (t * (d1 - d2))) / (d1 - d2) ** 2
    rhs = (math.pi**2 / t**2) * scale**2 * float(
        np.einsum("i,j,ij->", weights, weights, integrand))

    rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    stderr_ok = lhs_stderr <= 0.005 * abs(lhs) if lhs != 0 else True
    return ReductionReport(lhs, lhs_stderr, rhs, rel, stderr_ok)
