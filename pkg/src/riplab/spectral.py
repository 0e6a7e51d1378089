"""Extremal eigenvalues of normalized Gram submatrices and near-isometry checks.

The accuracy theta of a k x n measurement matrix at sparsity m is the
worst deviation of the spectrum of (G_A^T G_A)/k from 1 over supports A
of size m.  Exact enumeration suffices at size exactly m because
principal-submatrix interlacing makes smaller supports redundant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._util import philox
from .ensembles import RAW, ROW_NORMALIZED, MeasurementMatrix
from .errors import BudgetError, EmptySupportError, InvalidSpecError
from .nets import Net

EXACT_METHOD = "exact-enumeration"
MC_METHOD = "monte-carlo"


@dataclass(frozen=True)
class SupportSet:
    indices: tuple[int, ...]
    n: int

    def __post_init__(self):
        if any(not (0 <= i < self.n) for i in self.indices):
            raise InvalidSpecError("support indices must lie in [0, n)")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise InvalidSpecError("support indices must be strictly increasing")

    @classmethod
    def of(cls, indices, n: int) -> "SupportSet":
        return cls(indices=tuple(sorted(int(i) for i in set(indices))), n=n)

    def __len__(self) -> int:
        return len(self.indices)


def jacobi_eigenvalues(a: np.ndarray, tol: float = 1e-12,
                       max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius mass drops below tol times the
    matrix Frobenius norm, with a hard cap of ``max_sweeps`` sweeps.
    """
    A = np.array(a, dtype=float)
    A = 0.5 * (A + A.T)
    size = A.shape[0]
    if size == 1:
        return A[0, :1].copy()
    fro = float(np.linalg.norm(A))
    if fro == 0.0:
        return np.zeros(size)
    target = tol * fro
    skip = target / size
    for _ in range(max_sweeps):
        off = math.sqrt(max(float(np.sum(A * A) - np.sum(np.diag(A) ** 2)), 0.0))
        if off < target:
            break
        for p in range(size - 1):
            for q in range(p + 1, size):
                apq = A[p, q]
                if abs(apq) <= skip:
                    continue
                phi = 0.5 * math.atan2(2.0 * apq, A[q, q] - A[p, p])
                c, s = math.cos(phi), math.sin(phi)
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, q] = A[q, p] = 0.0
    return np.sort(np.diag(A))


def gram_extremal_eigs(m: MeasurementMatrix, a: SupportSet) -> tuple[float, float]:
    """Extremal eigenvalues of (G_A^T G_A)/k for the column subset A."""
    if len(a) == 0:
        raise EmptySupportError("support must be nonempty")
    if a.n != m.n:
        raise InvalidSpecError("support ambient dimension does not match matrix")
    if m.normalization != RAW:
        raise InvalidSpecError("pass the raw matrix; division by k is internal")
    cols = m.entries[:, list(a.indices)]
    gram = cols.T @ cols / m.k
    eigs = jacobi_eigenvalues(gram)
    return max(float(eigs[0]), 0.0), float(eigs[-1])


@dataclass(frozen=True)
class RipReport:
    m: int
    theta_lower: float            # max over supports of 1 - lambda_min (signed)
    theta_upper: float            # max over supports of lambda_max - 1 (signed)
    theta: float                  # max of the positive parts, always >= 0
    method: str
    witness_min: SupportSet
    witness_max: SupportSet
    trials: int | None = None

    def to_json(self) -> str:
        obj = {"m": self.m, "theta": self.theta, "theta_lower": self.theta_lower,
               "theta_upper": self.theta_upper, "method": self.method,
               "witness_min": list(self.witness_min.indices),
               "witness_max": list(self.witness_max.indices)}
        if self.trials is not None:
            obj["trials"] = self.trials
        return json.dumps(obj)


def _report_from_deviations(sparsity, method, lows, highs, supports, trials=None, n=0):
    """lows/highs are per-support (1 - lmin, lmax - 1); max-reduced, order-free."""
    i_low = int(np.argmax(lows))
    i_high = int(np.argmax(highs))
    tl, tu = float(lows[i_low]), float(highs[i_high])
    return RipReport(m=sparsity, theta_lower=tl, theta_upper=tu,
                     theta=max(tl, tu, 0.0), method=method,
                     witness_min=SupportSet.of(supports[i_low], n),
                     witness_max=SupportSet.of(supports[i_high], n),
                     trials=trials)


def rip_exact(m: MeasurementMatrix, sparsity: int,
              budget: int = 2_000_000) -> RipReport:
    """Exact accuracy at the given sparsity by enumerating all supports."""
    import itertools

    if not (1 <= sparsity <= m.n):
        raise InvalidSpecError("need 1 <= sparsity <= n")
    count = math.comb(m.n, sparsity)
    if count > budget:
        raise BudgetError(
            f"C({m.n},{sparsity}) = {count} supports exceed budget {budget}; "
            "use rip_monte_carlo")
    lows, highs, supports = [], [], []
    for combo in itertools.combinations(range(m.n), sparsity):
        lmin, lmax = gram_extremal_eigs(m, SupportSet(indices=combo, n=m.n))
        lows.append(1.0 - lmin)
        highs.append(lmax - 1.0)
        supports.append(combo)
    return _report_from_deviations(sparsity, EXACT_METHOD, np.array(lows),
                                   np.array(highs), supports, n=m.n)


def fisher_yates_prefix(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """First m entries of a Fisher-Yates shuffle of range(n)."""
    arr = np.arange(n)
    for j in range(m):
        swap = j + int(rng.integers(0, n - j))
        arr[j], arr[swap] = arr[swap], arr[j]
    return arr[:m]


def rip_monte_carlo(m: MeasurementMatrix, sparsity: int, trials: int, seed: int,
                    chunk: int = 256) -> RipReport:
    """Sampled lower bound on the exact accuracy over uniform random supports.

    Each trial index owns its own seeded support draw, so results are
    independent of execution order and of the chunking below.  Eigenvalues
    are computed by batched LAPACK for throughput; agreement with the
    Jacobi-backed exact route is pinned in tests.
    """
    if trials < 1:
        raise InvalidSpecError("trials must be >= 1")
    if not (1 <= sparsity <= m.n):
        raise InvalidSpecError("sparsity exceeds ambient dimension")
    if m.normalization != RAW:
        raise InvalidSpecError("pass the raw matrix; division by k is internal")
    entries, k = m.entries, m.k
    lows = np.empty(trials)
    highs = np.empty(trials)
    supports: list[np.ndarray] = []
    for lo in range(0, trials, chunk):
        hi = min(lo + chunk, trials)
        batch = [np.sort(fisher_yates_prefix(philox(seed, "rip-mc", t), m.n, sparsity))
                 for t in range(lo, hi)]
        supports.extend(batch)
        cols = np.stack([entries[:, idx] for idx in batch])      # (b, k, m)
        grams = np.einsum("bki,bkj->bij", cols, cols) / k
        eigs = np.linalg.eigvalsh(grams)
        lows[lo:hi] = 1.0 - eigs[:, 0]
        highs[lo:hi] = eigs[:, -1] - 1.0
    return _report_from_deviations(sparsity, MC_METHOD, lows, highs, supports,
                                   trials=trials, n=m.n)


@dataclass(frozen=True)
class UupCheck:
    holds: bool
    report: RipReport | None
    support_bound: int
    degenerate: bool = False
    lower_bound_only: bool = False


def check_uup(m: MeasurementMatrix, theta: float, lam: float,
              method: str = EXACT_METHOD, trials: int = 1000,
              seed: int = 0, budget: int = 2_000_000) -> UupCheck:
    """Test the near-isometry property with accuracy theta at oversampling lam.

    Checks that all column subsets of size at most floor(k/lam) deviate by
    at most theta.  floor(k/lam) = 0 is reported as a vacuous pass, not an
    error, because parameter sweeps hit it.
    """
    if not (0.0 < theta < 1.0):
        raise InvalidSpecError("need 0 < theta < 1")
    if lam <= 1.0:
        raise InvalidSpecError("need lam > 1")
    bound = int(m.k / lam)
    if bound == 0:
        return UupCheck(holds=True, report=None, support_bound=0, degenerate=True)
    bound = min(bound, m.n)
    if method == EXACT_METHOD:
        report = rip_exact(m, bound, budget=budget)
        lower_only = False
    elif method == MC_METHOD:
        report = rip_monte_carlo(m, bound, trials, seed)
        lower_only = True
    else:
        raise InvalidSpecError(f"unknown method {method!r}")
    return UupCheck(holds=report.theta <= theta, report=report,
                    support_bound=bound, lower_bound_only=lower_only)


@dataclass(frozen=True)
class NetVerification:
    all_pass: bool
    violations: tuple[tuple[int, float], ...]   # (point index, |deviation|)
    degenerate: bool = False


def verify_on_net(m: MeasurementMatrix, net: Net, theta: float) -> NetVerification:
    """Check | |G~ x| - 1 | <= theta/5 at every net point."""
    if m.normalization != ROW_NORMALIZED:
        raise InvalidSpecError("verify_on_net needs the row-normalized matrix")
    if net.dim != m.n:
        raise InvalidSpecError("net dimension does not match the matrix")
    if len(net) == 0:
        return NetVerification(all_pass=True, violations=(), degenerate=True)
    images = net.points @ m.entries.T
    dev = np.abs(np.linalg.norm(images, axis=1) - 1.0)
    bad = np.nonzero(dev > theta / 5.0)[0]
    return NetVerification(all_pass=bad.size == 0,
                           violations=tuple((int(i), float(dev[i])) for i in bad))
