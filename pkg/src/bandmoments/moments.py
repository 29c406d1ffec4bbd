"""Monte Carlo estimation of second characteristic-polynomial moments.

Per-sample contributions det(l1 - H) det(l2 - H) span thousands of orders of
magnitude, so everything is accumulated as signed log-sum-exp pools: separate
positive and negative pools with a running-max shift, plus a pool of squares
for the standard error.  The normalized ratio D2^{-1} F2 is computed from
common random numbers (one spectrum per sample serves every scan point) and
its uncertainty comes from the delta method on the three correlated means;
the delta variance is evaluated in the raw-moment form

    sum_i (A_i/SA - B_i/(2 SB) - C_i/(2 SC))^2

expanded into six second-moment pools, which keeps the centering terms from
cancelling catastrophically and is exactly zero on diagonal points.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ensemble import RngStream
from .kernels import ds_kernel, rho
from .lattice import LatticeParams, variance_profile

__all__ = [
    "LogSumExp",
    "SignedAccumulator",
    "MomentEstimate",
    "ScanConfig",
    "ScanRow",
    "scaled_energies",
    "estimate_f2",
    "estimate_ratio",
]

# Batched eigensolves pay off only for small matrices.
_BATCH_EIG_MAX_N = 32

# |mean| below 10x its standard error counts as an unresolved sign.
_SIGN_RESOLUTION_FACTOR = 10.0


def scaled_energies(lambda0: float, xi1: float, xi2: float, N: int) -> tuple[float, float]:
    """Bulk scaling lambda_j = lambda0 + xi_j / (N rho(lambda0))."""
    if not abs(lambda0) < 2.0:
        raise ValueError(f"lambda0 must lie in (-2, 2), got {lambda0}")
    scale = 1.0 / (N * rho(lambda0))
    return lambda0 + xi1 * scale, lambda0 + xi2 * scale


@dataclass
class LogSumExp:
    """Streaming log-sum-exp of positive terms given by their logs."""

    shift: float = -math.inf
    total: float = 0.0
    count: int = 0

    def add_many(self, logs: np.ndarray) -> None:
        logs = np.asarray(logs, dtype=float)
        self.count += logs.size
        finite = logs[logs > -math.inf]
        if finite.size == 0:
            return
        m = float(np.max(finite))
        if m > self.shift:
            self.total = self.total * math.exp(self.shift - m) if self.total else 0.0
            self.shift = m
        self.total += float(np.sum(np.exp(finite - self.shift)))

    def merge(self, other: "LogSumExp") -> "LogSumExp":
        m = max(self.shift, other.shift)
        if m == -math.inf:
            return LogSumExp(count=self.count + other.count)
        total = 0.0
        if self.total:
            total += self.total * math.exp(self.shift - m)
        if other.total:
            total += other.total * math.exp(other.shift - m)
        return LogSumExp(m, total, self.count + other.count)

    @property
    def log_sum(self) -> float:
        if self.total <= 0.0:
            return -math.inf
        return self.shift + math.log(self.total)


@dataclass
class SignedAccumulator:
    """Signed streaming sum: positive pool, negative pool, pool of squares."""

    pos: LogSumExp = field(default_factory=LogSumExp)
    neg: LogSumExp = field(default_factory=LogSumExp)
    sumsq: LogSumExp = field(default_factory=LogSumExp)
    count: int = 0

    def add_many(self, signs: np.ndarray, logs: np.ndarray) -> None:
        signs = np.asarray(signs)
        logs = np.asarray(logs, dtype=float)
        self.count += logs.size
        self.pos.add_many(logs[signs > 0])
        self.neg.add_many(logs[signs < 0])
        self.sumsq.add_many(2.0 * logs[signs != 0])

    def merge(self, other: "SignedAccumulator") -> "SignedAccumulator":
        return SignedAccumulator(
            pos=self.pos.merge(other.pos),
            neg=self.neg.merge(other.neg),
            sumsq=self.sumsq.merge(other.sumsq),
            count=self.count + other.count,
        )

    def signed_log_sum(self) -> tuple[int, float]:
        """(sign, log|sum|) of the accumulated signed total."""
        lp, ln = self.pos.log_sum, self.neg.log_sum
        if lp == ln:
            return 0, -math.inf
        if lp > ln:
            return 1, lp + math.log1p(-math.exp(ln - lp))
        return -1, ln + math.log1p(-math.exp(lp - ln))

    def estimate(self) -> "MomentEstimate":
        if self.count == 0:
            raise ValueError("cannot form an estimate from an empty accumulator")
        sign, log_abs = self.signed_log_sum()
        log_mean = log_abs - math.log(self.count)
        log_ex2 = self.sumsq.log_sum - math.log(self.count)
        if sign == 0 or log_ex2 == -math.inf:
            return MomentEstimate(sign, log_mean, math.inf if sign == 0 else 0.0,
                                  self.count, sign != 0)
        ratio = min(math.exp(2.0 * log_mean - log_ex2), 1.0)
        if self.count < 2:
            rel_stderr = math.inf
        elif ratio >= 1.0:
            rel_stderr = 0.0
        else:
            log_var = log_ex2 + math.log1p(-ratio) + math.log(self.count / (self.count - 1))
            rel_stderr = math.exp(0.5 * (log_var - math.log(self.count)) - log_mean)
        one_sided = self.pos.count == 0 or self.neg.count == 0
        resolved = one_sided or rel_stderr <= 1.0 / _SIGN_RESOLUTION_FACTOR
        return MomentEstimate(sign, log_mean, rel_stderr, self.count, resolved)


@dataclass(frozen=True)
class MomentEstimate:
    """Signed log-space mean with its relative standard error."""

    sign: int
    log_mean_magnitude: float
    relative_stderr: float
    count: int
    sign_resolved: bool

    @property
    def value(self) -> float:
        return self.sign * math.exp(self.log_mean_magnitude)


@dataclass(frozen=True)
class ScanConfig:
    """One moment scan: ensemble, energy window, sample budget, seeding.

    Exactly one of `lattice` (band ensemble) and `goe_size` must be set.
    The sample budget is split over `num_streams` fixed substreams, so the
    result is bit-identical for any worker count.
    """

    lambda0: float
    xi_pairs: tuple[tuple[float, float], ...]
    num_samples: int
    master_seed: int
    lattice: LatticeParams | None = None
    goe_size: int | None = None
    num_streams: int = 64
    workers: int = 1

    def __post_init__(self):
        if not abs(self.lambda0) < 2.0:
            raise ValueError(f"lambda0 must lie in (-2, 2), got {self.lambda0}")
        if self.num_samples < 1:
            raise ValueError("sample count must be at least 1")
        if (self.lattice is None) == (self.goe_size is None):
            raise ValueError("set exactly one of lattice and goe_size")
        object.__setattr__(self, "xi_pairs", tuple((float(a), float(b)) for a, b in self.xi_pairs))

    @property
    def N(self) -> int:
        return self.lattice.N if self.lattice is not None else self.goe_size


@dataclass(frozen=True)
class ScanRow:
    """One scan point of the normalized ratio against its DS reference."""

    xi1: float
    xi2: float
    ratio: float
    stderr: float
    ds_ref: float
    flag: str


@dataclass
class _ScanPools:
    pair: list[SignedAccumulator]
    cross_ab: list[SignedAccumulator]
    cross_ac: list[SignedAccumulator]
    cross_bc: list[SignedAccumulator]
    diag: dict[int, SignedAccumulator]

    def merge(self, other: "_ScanPools") -> "_ScanPools":
        return _ScanPools(
            pair=[a.merge(b) for a, b in zip(self.pair, other.pair)],
            cross_ab=[a.merge(b) for a, b in zip(self.cross_ab, other.cross_ab)],
            cross_ac=[a.merge(b) for a, b in zip(self.cross_ac, other.cross_ac)],
            cross_bc=[a.merge(b) for a, b in zip(self.cross_bc, other.cross_bc)],
            diag={k: v.merge(other.diag[k]) for k, v in self.diag.items()},
        )


@dataclass(frozen=True)
class _WorkerSpec:
    kind: str                     # "band" | "goe"
    n: int
    W: float
    lambdas: tuple[float, ...]
    pairs: tuple[tuple[int, int], ...]
    master_seed: int


def _sample_sqrt_profiles(spec: _WorkerSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.kind == "band":
        j = variance_profile(LatticeParams(spec.n, spec.W)).entries
    else:
        j = np.full((spec.n, spec.n), 1.0 / spec.n)
    return np.sqrt(j), np.sqrt(2.0 * np.diagonal(j))


def _batched_logdets(eigs: np.ndarray, lambdas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample signed log det(lam - H) for a (batch, N) eigenvalue block."""
    diffs = lambdas[None, :, None] - eigs[:, None, :]
    zero = np.any(diffs == 0.0, axis=2)
    with np.errstate(divide="ignore"):
        logd = np.sum(np.log(np.abs(diffs)), axis=2)
    signs = np.where(np.sum(diffs < 0.0, axis=2) % 2 == 1, -1, 1).astype(np.int8)
    signs[zero] = 0
    logd[zero] = -np.inf
    return logd, signs


def _scan_stream(args: tuple[_WorkerSpec, int, int]) -> _ScanPools:
    spec, stream_index, count = args
    gen = RngStream(spec.master_seed, stream_index).generator()
    sqrt_off, sqrt_diag = _sample_sqrt_profiles(spec)
    n = len(sqrt_diag)
    lambdas = np.asarray(spec.lambdas)

    if n <= _BATCH_EIG_MAX_N:
        g = gen.standard_normal((count, n, n))
        mask = np.triu(np.ones((n, n), dtype=bool), k=1)
        h = np.where(mask, g * sqrt_off, 0.0)
        h = h + np.swapaxes(h, 1, 2)
        idx = np.arange(n)
        h[:, idx, idx] = g[:, idx, idx] * sqrt_diag
        eigs = np.linalg.eigvalsh(h)
        logd, signs = _batched_logdets(eigs, lambdas)
    else:
        logd = np.empty((count, len(lambdas)))
        signs = np.empty((count, len(lambdas)), dtype=np.int8)
        for k in range(count):
            g = gen.standard_normal((n, n))
            upper = np.triu(g * sqrt_off, k=1)
            h = upper + upper.T
            np.fill_diagonal(h, np.diagonal(g) * sqrt_diag)
            eigs = np.linalg.eigvalsh(h)
            ld, sg = _batched_logdets(eigs[None, :], lambdas)
            logd[k], signs[k] = ld[0], sg[0]

    pools = _empty_pools(spec)
    for r, (i1, i2) in enumerate(spec.pairs):
        la = logd[:, i1] + logd[:, i2]
        sa = signs[:, i1] * signs[:, i2]
        lb, sb = 2.0 * logd[:, i1], (signs[:, i1] != 0).astype(np.int8)
        lc, sc = 2.0 * logd[:, i2], (signs[:, i2] != 0).astype(np.int8)
        pools.pair[r].add_many(sa, la)
        pools.cross_ab[r].add_many(sa * sb, la + lb)
        pools.cross_ac[r].add_many(sa * sc, la + lc)
        pools.cross_bc[r].add_many(sb * sc, lb + lc)
    for i in pools.diag:
        pools.diag[i].add_many((signs[:, i] != 0).astype(np.int8), 2.0 * logd[:, i])
    return pools


def _empty_pools(spec: _WorkerSpec) -> _ScanPools:
    nrows = len(spec.pairs)
    diag_indices = sorted({i for p in spec.pairs for i in p})
    return _ScanPools(
        pair=[SignedAccumulator() for _ in range(nrows)],
        cross_ab=[SignedAccumulator() for _ in range(nrows)],
        cross_ac=[SignedAccumulator() for _ in range(nrows)],
        cross_bc=[SignedAccumulator() for _ in range(nrows)],
        diag={i: SignedAccumulator() for i in diag_indices},
    )


def _stream_counts(total: int, streams: int) -> list[int]:
    base, extra = divmod(total, streams)
    return [base + (1 if i < extra else 0) for i in range(streams)]


def _run_scan(config: ScanConfig, lambdas: tuple[float, ...],
              pairs: tuple[tuple[int, int], ...]) -> _ScanPools:
    if config.lattice is not None:
        spec = _WorkerSpec("band", config.lattice.n, config.lattice.W,
                           lambdas, pairs, config.master_seed)
    else:
        spec = _WorkerSpec("goe", config.goe_size, 1.0, lambdas, pairs,
                           config.master_seed)
    counts = _stream_counts(config.num_samples, config.num_streams)
    tasks = [(spec, i, c) for i, c in enumerate(counts) if c > 0]
    if config.workers <= 1 or len(tasks) == 1:
        results = [_scan_stream(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            results = list(ex.map(_scan_stream, tasks))
    merged = results[0]
    for r in results[1:]:
        merged = merged.merge(r)
    return merged


def estimate_f2(config: ScanConfig, lambda1: float, lambda2: float) -> MomentEstimate:
    """Monte Carlo estimate of E[det(lambda1 - H) det(lambda2 - H)]."""
    if config.num_samples < 2:
        raise ValueError("need at least 2 samples for an error bar")
    if lambda1 == lambda2:
        lambdas, pairs = (lambda1,), ((0, 0),)
    else:
        lambdas, pairs = (lambda1, lambda2), ((0, 1),)
    pools = _run_scan(config, lambdas, pairs)
    return pools.pair[0].estimate()


def _signed_sum(terms: list[tuple[float, float]]) -> float:
    """Sum of sign*exp(log) pairs, evaluated against the common max exponent."""
    m = max((lg for _, lg in terms if lg > -math.inf), default=-math.inf)
    if m == -math.inf:
        return 0.0
    return math.exp(m) * math.fsum(sgn * math.exp(lg - m) for sgn, lg in terms)


def estimate_ratio(config: ScanConfig) -> list[ScanRow]:
    """Scan of D2^{-1} F2 over the configured xi pairs, with DS references.

    All scan points share one sample set (common random numbers), which makes
    diagonal rows exactly 1 and the scan exactly symmetric under xi1 <-> xi2.
    """
    xi_values: list[float] = []
    index: dict[float, int] = {}
    for a, b in config.xi_pairs:
        for x in (a, b):
            if x not in index:
                index[x] = len(xi_values)
                xi_values.append(x)
    lam_of = {x: scaled_energies(config.lambda0, x, x, config.N)[0] for x in xi_values}
    lambdas = tuple(lam_of[x] for x in xi_values)
    pairs = tuple((index[a], index[b]) for a, b in config.xi_pairs)

    pools = _run_scan(config, lambdas, pairs)

    rows = []
    for r, (xi1, xi2) in enumerate(config.xi_pairs):
        i1, i2 = pairs[r]
        acc_a = pools.pair[r]
        acc_b, acc_c = pools.diag[i1], pools.diag[i2]
        sa, la = acc_a.signed_log_sum()
        sb, lb = acc_b.signed_log_sum()
        sc, lc = acc_c.signed_log_sum()
        ds_ref = float(ds_kernel(math.pi * (xi1 - xi2)))
        if sb != 1 or sc != 1 or sa == 0:
            rows.append(ScanRow(xi1, xi2, math.nan, math.nan, ds_ref, "sign_unresolved"))
            continue
        ratio = sa * math.exp(la - 0.5 * (lb + lc))
        sab, lab = pools.cross_ab[r].signed_log_sum()
        sac, lac = pools.cross_ac[r].signed_log_sum()
        sbc, lbc = pools.cross_bc[r].signed_log_sum()
        terms = [
            (1.0, acc_a.sumsq.log_sum - 2.0 * la),
            (0.25, acc_b.sumsq.log_sum - 2.0 * lb),
            (0.25, acc_c.sumsq.log_sum - 2.0 * lc),
            (-1.0 * sab * sa * sb, lab - la - lb),
            (-1.0 * sac * sa * sc, lac - la - lc),
            (0.5 * sbc * sb * sc, lbc - lb - lc),
        ]
        relvar = max(_signed_sum(terms), 0.0)
        stderr = abs(ratio) * math.sqrt(relvar)
        flag = "ok" if acc_a.estimate().sign_resolved else "sign_unresolved"
        rows.append(ScanRow(xi1, xi2, ratio, stderr, ds_ref, flag))
    return rows
