"""Geometry of lp, weak-lp, and sparse-vector sets.

Membership tests, non-increasing rearrangements, the duality bound that
places weak-lp caps inside blown-up sparse hulls, sphere truncation, and
quasi-convexity arithmetic.  Also owns the ambient-set samplers used by
the net and reconstruction modules.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from ._util import philox
from .errors import InvalidSpecError, UnsupportedAmbientError

FAMILIES = ("lp", "weak-lp", "l1", "l2", "sparse-sphere", "sparse-ball")

# absolute float slack for boundary membership
DEFAULT_ATOL = 1e-12


@dataclass(frozen=True)
class BallDescriptor:
    """Identifies one of the supported bodies in R^dim.

    family      meaning
    ----------  -------------------------------------------------------
    lp          {x : (sum |x_i|^p)^(1/p) <= radius}, 0 < p <= 2
    weak-lp     {x : sorted |x|_(i) <= radius * i^(-1/p) for all i}
    l1          lp with p = 1
    l2          Euclidean ball of the given radius
    sparse-sphere  unit-sphere vectors (scaled by radius) with <= sparsity nonzeros
    sparse-ball    Euclidean-ball vectors with <= sparsity nonzeros
    """

    family: str
    dim: int
    p: float | None = None
    radius: float = 1.0
    sparsity: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpecError(f"unknown ball family {self.family!r}")
        if self.dim < 1:
            raise InvalidSpecError("dim must be >= 1")
        if self.radius <= 0:
            raise InvalidSpecError("radius must be positive")
        if self.family in ("lp", "weak-lp"):
            if self.p is None or not (0.0 < self.p <= 2.0):
                raise InvalidSpecError("lp/weak-lp need p in (0, 2]")
        if self.family in ("sparse-sphere", "sparse-ball"):
            if self.sparsity is None or not (1 <= self.sparsity <= self.dim):
                raise InvalidSpecError("sparse families need 1 <= sparsity <= dim")

    def to_json(self) -> str:
        obj = {"family": self.family, "radius": self.radius, "dim": self.dim}
        if self.p is not None:
            obj["p"] = self.p
        if self.sparsity is not None:
            obj["sparsity"] = self.sparsity
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "BallDescriptor":
        obj = json.loads(text)
        return cls(family=obj["family"], dim=int(obj["dim"]),
                   p=obj.get("p"), radius=float(obj.get("radius", 1.0)),
                   sparsity=obj.get("sparsity"))

    @classmethod
    def euclidean_ball(cls, dim: int, radius: float = 1.0) -> "BallDescriptor":
        return cls(family="l2", dim=dim, radius=radius)

    @classmethod
    def euclidean_sphere(cls, dim: int) -> "BallDescriptor":
        return cls(family="sparse-sphere", dim=dim, sparsity=dim)

    @classmethod
    def l1_ball(cls, dim: int, radius: float = 1.0) -> "BallDescriptor":
        return cls(family="l1", dim=dim, radius=radius)

    @classmethod
    def weak_lp_ball(cls, dim: int, p: float, radius: float = 1.0,
                     sparsity: int | None = None) -> "BallDescriptor":
        return cls(family="weak-lp", dim=dim, p=p, radius=radius, sparsity=sparsity)

    @classmethod
    def sparse_sphere(cls, dim: int, sparsity: int) -> "BallDescriptor":
        return cls(family="sparse-sphere", dim=dim, sparsity=sparsity)

    @classmethod
    def sparse_ball(cls, dim: int, sparsity: int, radius: float = 1.0) -> "BallDescriptor":
        return cls(family="sparse-ball", dim=dim, sparsity=sparsity, radius=radius)


@dataclass(frozen=True)
class Rearrangement:
    """Non-increasing rearrangement of |x| with its sorting permutation."""

    values: np.ndarray
    permutation: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)
        self.permutation.setflags(write=False)


def rearrange(x: np.ndarray) -> Rearrangement:
    """Sort |x| non-increasing; ties broken by lower original index."""
    mags = np.abs(np.asarray(x, dtype=float))
    perm = np.argsort(-mags, kind="stable")
    return Rearrangement(values=mags[perm], permutation=perm)


def support_size(x: np.ndarray) -> int:
    return int(np.count_nonzero(x))


def member(x: np.ndarray, ball: BallDescriptor, atol: float = DEFAULT_ATOL) -> bool:
    """Exact membership up to an absolute float slack of ``atol``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (ball.dim,):
        raise InvalidSpecError(f"dimension mismatch: {x.shape} vs dim={ball.dim}")
    fam, rad = ball.family, ball.radius
    if fam == "l2":
        return bool(np.linalg.norm(x) <= rad + atol)
    if fam == "l1":
        return bool(np.sum(np.abs(x)) <= rad + atol)
    if fam == "lp":
        return bool(np.sum(np.abs(x) ** ball.p) ** (1.0 / ball.p) <= rad + atol)
    if fam == "weak-lp":
        # the all-thresholds definition reduces to the n sorted positions
        star = rearrange(x).values
        envelope = rad * np.arange(1, ball.dim + 1) ** (-1.0 / ball.p)
        return bool(np.all(star <= envelope + atol))
    if fam == "sparse-sphere":
        return (support_size(x) <= ball.sparsity
                and abs(np.linalg.norm(x) - rad) <= max(atol, 1e-9))
    if fam == "sparse-ball":
        return support_size(x) <= ball.sparsity and bool(np.linalg.norm(x) <= rad + atol)
    raise InvalidSpecError(fam)  # pragma: no cover


def top_m_l2(x: np.ndarray, m: int) -> float:
    """Euclidean norm of the m largest-magnitude entries."""
    x = np.asarray(x, dtype=float)
    if not (1 <= m <= x.size):
        raise InvalidSpecError(f"need 1 <= m <= n, got m={m}, n={x.size}")
    if m == x.size:
        return float(np.linalg.norm(x))
    sq = x * x
    top = np.partition(sq, x.size - m)[x.size - m:]
    return float(math.sqrt(np.sum(top)))


def weak_lp_cap_radius(p: float, m: int) -> float:
    """Radius r = (1/p - 1) m^(1/p - 1/2) pairing with the dual bound."""
    return (1.0 / p - 1.0) * m ** (1.0 / p - 0.5)


# ---------------------------------------------------------------------------
# samplers


def sample_sphere(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.standard_normal(dim)
    return g / np.linalg.norm(g)


def sample_ball(rng: np.random.Generator, dim: int, radius: float = 1.0) -> np.ndarray:
    return sample_sphere(rng, dim) * (radius * rng.uniform() ** (1.0 / dim))


def sample_l1_ball(rng: np.random.Generator, dim: int, radius: float = 1.0) -> np.ndarray:
    """Uniform in the l1 ball: Dirichlet magnitudes, random signs, radial power."""
    e = rng.standard_exponential(dim)
    mags = e / e.sum()
    signs = rng.integers(0, 2, dim) * 2.0 - 1.0
    return signs * mags * (radius * rng.uniform() ** (1.0 / dim))


def sample_sparse_support(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    return np.sort(rng.choice(n, size=m, replace=False))


def sample_sparse_sphere(rng: np.random.Generator, n: int, m: int,
                         radius: float = 1.0) -> np.ndarray:
    x = np.zeros(n)
    x[sample_sparse_support(rng, n, m)] = sample_sphere(rng, m) * radius
    return x


def sample_sparse_ball(rng: np.random.Generator, n: int, m: int,
                       radius: float = 1.0) -> np.ndarray:
    x = np.zeros(n)
    x[sample_sparse_support(rng, n, m)] = sample_ball(rng, m, radius)
    return x


def sample_weak_lp_ball(rng: np.random.Generator, n: int, p: float,
                        radius: float = 1.0) -> np.ndarray:
    """Point of the weak-lp ball: scaled envelope magnitudes, permuted, signed.

    Membership is guaranteed: magnitudes are dominated pointwise by the
    non-increasing envelope, so their sorted version is too.
    """
    envelope = radius * np.arange(1, n + 1) ** (-1.0 / p)
    mags = rng.uniform(0.0, 1.0, n) * envelope
    signs = rng.integers(0, 2, n) * 2.0 - 1.0
    x = signs * mags
    return x[rng.permutation(n)]


_cap_sampler_stats = {"draws": 0, "accepted": 0}


def cap_sampler_acceptance() -> float:
    """Observed acceptance rate of the weak-lp cap rejection sampler."""
    d = _cap_sampler_stats["draws"]
    return _cap_sampler_stats["accepted"] / d if d else math.nan


def sample_weak_lp_cap(rng: np.random.Generator, n: int, p: float, r: float,
                       max_tries: int = 50) -> np.ndarray:
    """Point of r*B_{p,inf} intersected with the unit Euclidean ball.

    Envelope draws rejected against |x| <= 1; if rejection stalls the draw
    is scaled onto the Euclidean sphere, which preserves both memberships.
    Not uniform; used for coverage, not for integration.  The running
    acceptance rate is tracked (``cap_sampler_acceptance``) and logged
    when the scaling fallback fires.
    """
    for _ in range(max_tries):
        _cap_sampler_stats["draws"] += 1
        x = sample_weak_lp_ball(rng, n, p, r)
        nrm = np.linalg.norm(x)
        if nrm <= 1.0:
            _cap_sampler_stats["accepted"] += 1
            return x
    logging.getLogger(__name__).debug(
        "cap sampler fell back to scaling after %d tries (acceptance %.3f)",
        max_tries, cap_sampler_acceptance())
    return x / nrm


def sample_ambient_batch(rng: np.random.Generator, ball: BallDescriptor,
                         count: int) -> np.ndarray:
    """Uniform samples from a descriptor, vectorized; raises when undefined."""
    fam, dim, rad = ball.family, ball.dim, ball.radius
    if fam in ("l2", "sparse-sphere", "sparse-ball"):
        sphere_like = fam == "sparse-sphere"
        m = dim if fam == "l2" else ball.sparsity
        g = rng.standard_normal((count, m))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        if not sphere_like:
            g *= rng.uniform(size=(count, 1)) ** (1.0 / m)
        g *= rad
        if m == dim:
            return g
        out = np.zeros((count, dim))
        supports = np.argpartition(rng.random((count, dim)), m - 1, axis=1)[:, :m]
        np.put_along_axis(out, supports, g, axis=1)
        return out
    if fam == "l1":
        e = rng.standard_exponential((count, dim))
        mags = e / e.sum(axis=1, keepdims=True)
        signs = rng.integers(0, 2, (count, dim)) * 2.0 - 1.0
        return signs * mags * (rad * rng.uniform(size=(count, 1)) ** (1.0 / dim))
    raise UnsupportedAmbientError(f"no uniform sampler for family {fam!r}")


def sample_ambient(rng: np.random.Generator, ball: BallDescriptor) -> np.ndarray:
    """Single uniform-ish sample from a descriptor."""
    return sample_ambient_batch(rng, ball, 1)[0]


# ---------------------------------------------------------------------------
# the dual bound and hull inclusions


@dataclass(frozen=True)
class DualBoundCheck:
    max_ratio: float
    pass_: bool
    probes_used: int


def _aligned_candidate(x: np.ndarray, envelope: np.ndarray, threshold: float) -> np.ndarray:
    """Extremal candidate min(envelope, t) aligned with x's order and signs."""
    mags = np.minimum(envelope, threshold)
    nrm = np.linalg.norm(mags)
    if nrm > 1.0:
        mags = mags / nrm
    order = rearrange(x).permutation
    z = np.zeros_like(x)
    signs = np.where(x[order] < 0, -1.0, 1.0)
    z[order] = signs * mags
    return z


def weak_lp_dual_bound_check(x: np.ndarray, p: float, m: int, probes: int,
                             seed: int) -> DualBoundCheck:
    """Check sup <x,z> over r*B_{p,inf} cap B_2 against 2 * top_m_l2(x, m).

    Probes the set randomly and also maximizes over structured extremal
    candidates aligned with x; the reported ratio never exceeding 1 is the
    pass condition.
    """
    if not (0.0 < p < 1.0):
        raise InvalidSpecError("dual bound requires 0 < p < 1")
    if probes < 1:
        raise InvalidSpecError("probes must be >= 1")
    x = np.asarray(x, dtype=float)
    n = x.size
    denom = 2.0 * top_m_l2(x, m)
    if denom == 0.0:
        return DualBoundCheck(max_ratio=0.0, pass_=True, probes_used=probes)
    r = weak_lp_cap_radius(p, m)
    envelope = r * np.arange(1, n + 1) ** (-1.0 / p)
    rng = philox(seed, "dual-bound")
    best = 0.0
    for _ in range(probes):
        z = sample_weak_lp_cap(rng, n, p, r)
        best = max(best, abs(float(x @ z)))
    thresholds = np.geomspace(envelope[-1], envelope[0], 64)
    for t in thresholds:
        z = _aligned_candidate(x, envelope, float(t))
        best = max(best, abs(float(x @ z)))
    ratio = best / denom
    return DualBoundCheck(max_ratio=ratio, pass_=ratio <= 1.0 + 1e-10,
                          probes_used=probes)


def block_norm_witness(z: np.ndarray, m: int) -> float:
    """Sum of Euclidean norms over magnitude-sorted blocks of size m.

    A value <= 2 certifies z in 2 conv(sparse ball of sparsity m): each
    block normalizes to a unit m-sparse vector and the coefficients sum
    to at most 2.
    """
    star = rearrange(z).values
    pad = (-star.size) % m
    if pad:
        star = np.concatenate([star, np.zeros(pad)])
    blocks = star.reshape(-1, m)
    return float(np.sum(np.sqrt(np.sum(blocks * blocks, axis=1))))


@dataclass(frozen=True)
class HullInclusionCheck:
    pass_: bool
    max_block_sum: float
    probes_used: int


def hull_inclusion_check(which: str, n: int, m: int, probes: int, seed: int,
                         p: float | None = None) -> HullInclusionCheck:
    """Probe the duality-route inclusions into 2 conv(sparse ball).

    which = "weak-lp": samples r*B_{p,inf} cap B_2 with the paired radius.
    which = "l1":      samples sqrt(m)*B_1 cap B_2.
    Every probe must satisfy the block-norm witness <= 2.
    """
    if which not in ("weak-lp", "l1"):
        raise InvalidSpecError(f"unknown inclusion {which!r}")
    if which == "weak-lp" and not (p and 0.0 < p < 1.0):
        raise InvalidSpecError("weak-lp inclusion needs 0 < p < 1")
    if not (1 <= m <= n):
        raise InvalidSpecError("need 1 <= m <= n")
    rng = philox(seed, "hull-inclusion", which)
    worst = 0.0
    for _ in range(probes):
        if which == "weak-lp":
            z = sample_weak_lp_cap(rng, n, p, weak_lp_cap_radius(p, m))
        else:
            for _ in range(50):
                z = sample_l1_ball(rng, n, math.sqrt(m))
                nrm = np.linalg.norm(z)
                if nrm <= 1.0:
                    break
            else:
                z = z / nrm
        worst = max(worst, block_norm_witness(z, m))
    return HullInclusionCheck(pass_=worst <= 2.0 + 1e-10, max_block_sum=worst,
                              probes_used=probes)


# ---------------------------------------------------------------------------
# truncation onto sparse spheres


@dataclass(frozen=True)
class TruncationResult:
    z: np.ndarray
    error: float

    def __post_init__(self):
        self.z.setflags(write=False)


def truncation_error_bound(p: float, delta: float) -> float:
    """Guaranteed distance 2 (2/p - 1)^(-1/2) delta^(1/p - 1/2)."""
    return 2.0 * (2.0 / p - 1.0) ** -0.5 * delta ** (1.0 / p - 0.5)


def truncation_cover_point(x: np.ndarray, p: float, m: int,
                           delta: float) -> TruncationResult:
    """Nearest point of the ceil(m/delta)-sparse sphere by truncate-and-renormalize.

    Requires x on the unit sphere inside m^(1/p-1/2) B_{p,inf}; the returned
    error is guaranteed at most ``truncation_error_bound(p, delta)``.
    """
    if not (0.0 < p < 2.0):
        raise InvalidSpecError("truncation requires 0 < p < 2")
    if delta <= 0:
        raise InvalidSpecError("delta must be positive")
    x = np.asarray(x, dtype=float)
    ambient = BallDescriptor.weak_lp_ball(x.size, p, radius=m ** (1.0 / p - 0.5))
    if abs(np.linalg.norm(x) - 1.0) > 1e-9 or not member(x, ambient, atol=1e-9):
        raise InvalidSpecError("x must lie on S^(n-1) inside the scaled weak-lp ball")
    keep = min(x.size, math.ceil(m / delta))
    order = rearrange(x).permutation
    z = np.zeros_like(x)
    z[order[:keep]] = x[order[:keep]]
    nrm = np.linalg.norm(z)
    if nrm == 0.0:  # impossible under the precondition: top entries carry mass
        raise InvalidSpecError("truncation produced the zero vector")
    z /= nrm
    return TruncationResult(z=z, error=float(np.linalg.norm(x - z)))


# ---------------------------------------------------------------------------
# quasi-convexity and the sparsity inflation of the hull reduction


def quasiconvexity_constant_check(p: float, trials: int, n: int, seed: int) -> bool:
    """Sample pairs from the weak-lp ball and check x + y stays in 2a times it.

    The quasi-convexity constant of the weak-lp ball is a = 2^(1/p), so the
    sum is rescaled by 2a = 2^(1 + 1/p).  Dividing by a alone is falsifiable
    by sampling (sums need both the magnitude and the interleaving factor).
    """
    if not (0.0 < p < 1.0):
        raise InvalidSpecError("quasi-convexity check requires 0 < p < 1")
    rng = philox(seed, "quasiconvex")
    ball = BallDescriptor.weak_lp_ball(n, p)
    scale = 2.0 ** (1.0 + 1.0 / p)
    for _ in range(trials):
        x = sample_weak_lp_ball(rng, n, p)
        y = sample_weak_lp_ball(rng, n, p)
        if not member((x + y) / scale, ball, atol=1e-9):
            return False
    return True


def required_hull_sparsity(p: float, m: int, eps: float) -> int:
    """Sparsity m1 with (2^(1+1/p) m^(1/p-1/2) / eps) <= (1/p-1) m1^(1/p-1/2).

    This is the inflation that pushes the quasi-convexity-widened difference
    body into 2 conv of an m1-sparse ball at scale eps.
    """
    if not (0.0 < p < 1.0):
        raise InvalidSpecError("requires 0 < p < 1")
    expo = 1.0 / p - 0.5
    factor = ((1.0 / p - 1.0) ** -1 * (2.0 / eps) * 2.0 ** (1.0 / p)) ** (1.0 / expo)
    m1 = math.ceil(max(factor * m, m))
    assert (2.0 ** (1.0 + 1.0 / p) * m ** expo / eps
            <= (1.0 / p - 1.0) * m1 ** expo * (1 + 1e-12))
    return m1


def compute_m1(p: float, m: int) -> int:
    """The fixed eps = 1/10 instance used by the reconstruction pipeline."""
    return required_hull_sparsity(p, m, 0.1)
