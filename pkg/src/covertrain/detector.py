"""RBF-kernel MMD detection with a concentration-bound threshold.

The detector compares a delivered training set D against the public pool C.
Both samples are first augmented with a scaled class-label coordinate
[x, c * 1{y = +1}] so the test monitors the joint feature-label
distribution. The statistic is the biased (V-statistic) empirical MMD

    MMD(Z, Z') = [ (1/n^2) sum k(z_i, z_j) - (2/nm) sum k(z_i, z'_j)
                   + (1/m^2) sum k(z'_i, z'_j) ]^(1/2)

with all i = j diagonal terms included, which is what makes MMD(Z, Z) = 0
hold exactly. The decision threshold for a level-alpha test is

    T = 2 (sqrt(K/n) + sqrt(K/m)) + sqrt(2K(n+m)/(nm) * log(1/alpha))

where K bounds the kernel values (K = 1 for the RBF kernel). A sample is
flagged suspicious when psi = MMD - T >= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .data import CandidateSet, Dataset


class DetectorError(ValueError):
    """Invalid detector configuration or degenerate inputs."""


def augment(X: np.ndarray, y: np.ndarray, c: float) -> np.ndarray:
    """Append the scaled label indicator c * 1{y = +1} as a coordinate."""
    col = np.where(np.asarray(y) == 1, float(c), 0.0)
    return np.hstack([np.asarray(X, dtype=np.float64), col[:, None]])


def rbf_kernel(z1: np.ndarray, z2: np.ndarray, sigma: float) -> float:
    """exp(-||z1 - z2||^2 / (2 sigma^2)) for a single pair of points."""
    if sigma <= 0:
        raise DetectorError("sigma must be positive")
    diff = np.asarray(z1, dtype=np.float64) - np.asarray(z2, dtype=np.float64)
    return float(math.exp(-float(diff @ diff) / (2.0 * sigma * sigma)))


def gram(Z1: np.ndarray, Z2: np.ndarray, sigma: float) -> np.ndarray:
    """Kernel matrix between two point sets, shape (len(Z1), len(Z2))."""
    if sigma <= 0:
        raise DetectorError("sigma must be positive")
    sq = cdist(np.atleast_2d(Z1), np.atleast_2d(Z2), "sqeuclidean")
    return np.exp(-sq / (2.0 * sigma * sigma))


def label_scale(pool: Dataset) -> float:
    """Largest intra-class pairwise feature distance over the pool.

    This is the scale c of the label coordinate. At least one class must
    have two members.
    """
    best = None
    for sign in (-1, 1):
        pts = pool.X[pool.y == sign]
        if pts.shape[0] >= 2:
            dmax = float(pdist(pts).max())
            best = dmax if best is None else max(best, dmax)
    if best is None:
        raise DetectorError("no class has two members; label scale undefined")
    return best


def median_heuristic_sigma(pool: Dataset, c: float) -> float:
    """Median pairwise distance between augmented pool points.

    All n(n-1)/2 pairs enter, zero distances from duplicates included; an
    even pair count takes the mean of the two central order statistics
    (plain median). Errors out when every pairwise distance is zero.
    """
    if len(pool) < 2:
        raise DetectorError("median heuristic needs at least two points")
    dists = pdist(augment(pool.X, pool.y, c))
    if float(dists.max()) == 0.0:
        raise DetectorError("degenerate pool: all pairwise distances are zero")
    return float(np.median(dists))


@dataclass(frozen=True)
class DetectorConfig:
    """Frozen per-pool detector parameters.

    sigma and label_scale_c are computed once from the full pool at run
    start (`from_pool`) and never depend on any candidate subset.
    """

    alpha: float
    sigma: float
    label_scale_c: float
    kernel_bound: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DetectorError("alpha must lie in (0, 1)")
        if not self.sigma > 0:
            raise DetectorError("sigma must be positive")
        if self.label_scale_c < 0:
            raise DetectorError("label scale must be nonnegative")
        if not self.kernel_bound > 0:
            raise DetectorError("kernel bound must be positive")

    @classmethod
    def from_pool(cls, pool: Dataset, alpha: float = 0.05) -> "DetectorConfig":
        c = label_scale(pool)
        sigma = median_heuristic_sigma(pool, c)
        return cls(alpha=alpha, sigma=sigma, label_scale_c=c, kernel_bound=1.0)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "sigma": self.sigma,
            "label_scale_c": self.label_scale_c,
            "kernel_bound": self.kernel_bound,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DetectorConfig":
        return cls(**obj)


@dataclass(frozen=True)
class DetectionVerdict:
    mmd: float
    threshold: float
    psi: float
    suspicious: bool

    def to_dict(self) -> dict:
        return {
            "mmd": self.mmd,
            "threshold": self.threshold,
            "psi": self.psi,
            "suspicious": self.suspicious,
        }


def _verdict(mmd_value: float, threshold: float) -> DetectionVerdict:
    psi_value = mmd_value - threshold
    return DetectionVerdict(
        mmd=float(mmd_value),
        threshold=float(threshold),
        psi=float(psi_value),
        suspicious=bool(psi_value >= 0.0),
    )


def mmd(Z: np.ndarray, Zp: np.ndarray, cfg: DetectorConfig) -> float:
    """Biased empirical MMD between two augmented samples.

    The radicand is clamped at zero before the square root to absorb
    negative floating-point residue of order -1e-17.
    """
    Z = np.atleast_2d(Z)
    Zp = np.atleast_2d(Zp)
    if Z.shape[0] < 1 or Zp.shape[0] < 1:
        raise DetectorError("mmd needs at least one point per sample")
    term_nn = float(gram(Z, Z, cfg.sigma).mean())
    term_nm = float(gram(Z, Zp, cfg.sigma).mean())
    term_mm = float(gram(Zp, Zp, cfg.sigma).mean())
    return math.sqrt(max(term_nn - 2.0 * term_nm + term_mm, 0.0))


def mmd_threshold(n: int, m: int, cfg: DetectorConfig) -> float:
    """Level-alpha concentration threshold T for sample sizes n and m."""
    if n < 1 or m < 1:
        raise DetectorError("sample sizes must be positive")
    K = cfg.kernel_bound
    dev = 2.0 * (math.sqrt(K / n) + math.sqrt(K / m))
    eps = math.sqrt(2.0 * K * (n + m) / (n * m) * math.log(1.0 / cfg.alpha))
    return dev + eps


def detect(pool: Dataset, sample: Dataset, cfg: DetectorConfig) -> DetectionVerdict:
    """Run the two-sample test of `sample` against `pool`."""
    if pool.dimension != sample.dimension:
        raise DetectorError("pool and sample dimensions differ")
    Z = augment(pool.X, pool.y, cfg.label_scale_c)
    Zp = augment(sample.X, sample.y, cfg.label_scale_c)
    value = mmd(Z, Zp, cfg)
    return _verdict(value, mmd_threshold(len(pool), len(sample), cfg))


def psi(pool: Dataset, candidate: CandidateSet, cfg: DetectorConfig) -> DetectionVerdict:
    """Verdict on a candidate index subset of the pool."""
    if len(candidate) == 0:
        raise DetectorError("cannot test an empty candidate set")
    return detect(pool, candidate.materialize(pool), cfg)


def weighted_mmd(pool_augmented: np.ndarray, b: np.ndarray, cfg: DetectorConfig) -> float:
    """Weighted MMD between the pool and its b-weighted soft subset.

    For b with sum s this is

        [ (1/n^2) sum_ij k_ij - (2/(n s)) sum_ij b_i k_ij
          + (1/s^2) sum_ij b_i b_j k_ij ]^(1/2)

    and reduces exactly to mmd(C, C_S) when b is the indicator of S.
    """
    K = gram(pool_augmented, pool_augmented, cfg.sigma)
    return _weighted_mmd_from_gram(K, np.asarray(b, dtype=np.float64))


def _weighted_mmd_from_gram(K: np.ndarray, b: np.ndarray) -> float:
    n = K.shape[0]
    if b.shape[0] != n:
        raise DetectorError(f"{b.shape[0]} weights for pool of {n}")
    if b.min() < -1e-12 or b.max() > 1 + 1e-12:
        raise DetectorError("weights must lie in [0, 1]")
    s = float(b.sum())
    if s <= 0:
        raise DetectorError("weights must have positive sum")
    row_sums = K.sum(axis=1)
    term_nn = float(row_sums.sum()) / (n * n)
    term_ns = float(b @ row_sums) / (n * s)
    term_ss = float(b @ (K @ b)) / (s * s)
    return math.sqrt(max(term_nn - 2.0 * term_ns + term_ss, 0.0))


class PoolKernel:
    """Precomputed Gram machinery for one pool under one detector config.

    The (n, n) kernel matrix over the augmented pool is computed once and
    shared read-only, so a candidate's MMD costs O(nm + m^2) and the
    weighted variant O(n^2). All methods are pure.
    """

    def __init__(self, pool: Dataset, cfg: DetectorConfig):
        self.cfg = cfg
        self.n = len(pool)
        Z = augment(pool.X, pool.y, cfg.label_scale_c)
        self.K = gram(Z, Z, cfg.sigma)
        self.K.setflags(write=False)
        self._row_sums = self.K.sum(axis=1)
        self._pool_term = float(self._row_sums.sum()) / (self.n * self.n)

    def threshold(self, m: int) -> float:
        return mmd_threshold(self.n, m, self.cfg)

    def mmd_indices(self, indices) -> float:
        idx = np.asarray(indices, dtype=np.int64)
        m = idx.size
        if m < 1:
            raise DetectorError("cannot test an empty candidate set")
        cross = float(self._row_sums[idx].sum()) / (self.n * m)
        within = float(self.K[np.ix_(idx, idx)].sum()) / (m * m)
        return math.sqrt(max(self._pool_term - 2.0 * cross + within, 0.0))

    def psi_indices(self, indices) -> float:
        return self.mmd_indices(indices) - self.threshold(len(indices))

    def verdict_indices(self, indices) -> DetectionVerdict:
        return _verdict(self.mmd_indices(indices), self.threshold(len(indices)))

    def feasible(self, indices, slack: float = 1e-9) -> bool:
        """Strict inequality psi < 0, implemented as psi <= -slack."""
        return self.psi_indices(indices) <= -slack

    def weighted(self, b: np.ndarray) -> float:
        return _weighted_mmd_from_gram(self.K, np.asarray(b, dtype=np.float64))

    def weighted_psi(self, b: np.ndarray, m: int) -> float:
        return self.weighted(b) - self.threshold(m)

    def weighted_grad(self, b: np.ndarray) -> np.ndarray:
        """Gradient of the weighted MMD w.r.t. b (zero where the radicand
        vanishes, where the square root is not differentiable)."""
        b = np.asarray(b, dtype=np.float64)
        s = float(b.sum())
        if s <= 0:
            raise DetectorError("weights must have positive sum")
        r = self._row_sums
        Kb = self.K @ b
        P = float(b @ r)
        Q = float(b @ Kb)
        value = self.weighted(b)
        if value < 1e-12:
            return np.zeros_like(b)
        dV = (
            -2.0 * r / (self.n * s)
            + 2.0 * P / (self.n * s * s)
            + 2.0 * Kb / (s * s)
            - 2.0 * Q / (s ** 3)
        )
        return dV / (2.0 * value)
