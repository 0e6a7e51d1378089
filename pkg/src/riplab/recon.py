"""Approximate sparse reconstruction and random kernel diameters.

l1 minimization under exact equality constraints (enumeration oracle and
an augmented-Lagrangian iterative solver), kernel-diameter lower bounds
by nonconvex search with vertex polish, per-instance upper-bound
certificates built from the net machinery, and the end-to-end recovery
experiment.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._util import philox
from .ensembles import EnsembleSpec, MeasurementMatrix, generate, row_normalize
from .errors import BudgetError, InfeasibleError, InvalidSpecError
from .geometry import (BallDescriptor, member, rearrange, required_hull_sparsity,
                       sample_l1_ball, sample_weak_lp_ball)
from .nets import cover_check, sparse_set_net
from .spectral import verify_on_net

FEASIBILITY_TOL = 1e-8

# Sparsity budget k >= c_p * m * log(c1 * n / m), calibrated on seeds
# [0, 50) at n = 32, k = 16 (Bernoulli, l1 ball) and frozen; test seeds
# start at 50.  c_p for p < 1 scales the l1 value by the quasi-convexity
# inflation 2^(1/p - 1).
KM_C1 = 4.0
KM_CP_L1 = 1.7


def km_cp(p: float) -> float:
    return KM_CP_L1 * 2.0 ** (1.0 / p - 1.0)


@dataclass(frozen=True)
class KernelBasis:
    basis: np.ndarray            # (dim, n), orthonormal rows spanning ker
    dim: int

    def __post_init__(self):
        self.basis.setflags(write=False)


def kernel_basis(m: MeasurementMatrix) -> KernelBasis:
    """Orthonormal kernel basis via SVD; rank cut at 1e-10 of the top value."""
    _, svals, vt = np.linalg.svd(m.entries, full_matrices=True)
    rank = int(np.sum(svals > 1e-10 * (svals[0] if svals.size else 0.0)))
    basis = vt[rank:]
    return KernelBasis(basis=basis, dim=m.n - rank)


@dataclass(frozen=True)
class ReconResult:
    b: np.ndarray
    x_hat: np.ndarray
    solver: str
    objective: float             # l1 norm of x_hat
    residual: float              # |G x_hat - b|
    iterations: int
    t0: np.ndarray | None = None
    error: float | None = None   # |x_hat - t0| when t0 is known
    bound: float | None = None   # certified 2 a rho when available
    certified: bool = False

    def __post_init__(self):
        self.b.setflags(write=False)
        self.x_hat.setflags(write=False)
        if self.t0 is not None:
            self.t0.setflags(write=False)


EXACT_SOLVER = "exact-enumeration"
ITERATIVE_SOLVER = "iterative-proximal"


def _l1_exact(entries: np.ndarray, b: np.ndarray, budget: int) -> tuple[np.ndarray, int]:
    """Best basic solution over all supports of size at most k."""
    k, n = entries.shape
    if math.comb(n, k) > budget:
        raise BudgetError(f"C({n},{k}) = {math.comb(n, k)} exceeds budget {budget}")
    best_x = np.zeros(n)
    best_obj = math.inf if np.linalg.norm(b) > FEASIBILITY_TOL else 0.0
    checked = 0
    for size in range(1, k + 1):
        for combo in itertools.combinations(range(n), size):
            sub = entries[:, combo]
            sol, _, _, _ = np.linalg.lstsq(sub, b, rcond=None)
            if np.linalg.norm(sub @ sol - b) <= FEASIBILITY_TOL:
                obj = float(np.sum(np.abs(sol)))
                if obj < best_obj:
                    best_obj = obj
                    best_x = np.zeros(n)
                    best_x[list(combo)] = sol
            checked += 1
    if math.isinf(best_obj):
        raise InfeasibleError("no feasible basic solution found")
    return best_x, checked


def _l1_iterative(entries: np.ndarray, b: np.ndarray, penalty: float = 1.0,
                  max_iter: int = 100_000, stall_window: int = 100,
                  stall_rel: float = 1e-9) -> tuple[np.ndarray, int]:
    """Augmented-Lagrangian splitting: shrinkage step plus dual ascent.

    The x update projects onto {Gx = b}, so iterates are always feasible.
    Stops once the objective has stalled for a full window while the
    splitting consensus |x - z| is resolved; the objective alone plateaus
    on hard instances long before the duals finish rotating.
    """
    n = entries.shape[1]
    pinv = np.linalg.pinv(entries)
    offset = pinv @ b
    x = offset.copy()
    z = np.zeros(n)
    u = np.zeros(n)
    thresh = 1.0 / penalty
    prev_obj = float(np.sum(np.abs(x)))
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        v = z - u
        x = v - pinv @ (entries @ v) + offset
        w = x + u
        z = np.sign(w) * np.maximum(np.abs(w) - thresh, 0.0)
        u += x - z
        obj = float(np.sum(np.abs(x)))
        feas = float(np.linalg.norm(entries @ x - b))
        consensus = float(np.linalg.norm(x - z))
        if (abs(obj - prev_obj) <= stall_rel * max(1.0, obj)
                and feas <= FEASIBILITY_TOL
                and consensus <= 1e-8 * max(1.0, obj)):
            stall += 1
            if stall >= stall_window:
                break
        else:
            stall = 0
        prev_obj = obj
    return x, it


def l1_minimize(m: MeasurementMatrix, b: np.ndarray, mode: str = "iterative",
                t0: np.ndarray | None = None, budget: int = 2_000_000) -> ReconResult:
    """argmin |x|_1 subject to G x = b.

    mode "exact" enumerates supports of size at most k (an optimal basic
    solution has at most k nonzeros); mode "iterative" runs the proximal
    scheme.  b must lie in the column space up to FEASIBILITY_TOL.
    """
    b = np.asarray(b, dtype=float)
    entries = m.entries
    lsq, _, _, _ = np.linalg.lstsq(entries, b, rcond=None)
    if np.linalg.norm(entries @ lsq - b) > FEASIBILITY_TOL:
        raise InfeasibleError("b is not in the column space of the matrix")
    if mode == "exact":
        x_hat, iters = _l1_exact(entries, b, budget)
        solver = EXACT_SOLVER
    elif mode == "iterative":
        x_hat, iters = _l1_iterative(entries, b)
        solver = ITERATIVE_SOLVER
    else:
        raise InvalidSpecError(f"unknown solver mode {mode!r}")
    return ReconResult(
        b=b, x_hat=x_hat, solver=solver,
        objective=float(np.sum(np.abs(x_hat))),
        residual=float(np.linalg.norm(entries @ x_hat - b)),
        iterations=iters, t0=None if t0 is None else np.asarray(t0, dtype=float),
        error=None if t0 is None else float(np.linalg.norm(x_hat - t0)))


# ---------------------------------------------------------------------------
# kernel diameter, lower bound by search


def _gauge(z: np.ndarray, ball: BallDescriptor) -> float:
    """Minkowski gauge of z for the supported star bodies."""
    if ball.family == "l1":
        return float(np.sum(np.abs(z))) / ball.radius
    if ball.family == "weak-lp":
        star = rearrange(z).values
        scale = np.arange(1, z.size + 1) ** (1.0 / ball.p)
        return float(np.max(star * scale)) / ball.radius
    raise InvalidSpecError(f"unsupported ball family {ball.family!r}")


def _gauge_subgradient(z: np.ndarray, ball: BallDescriptor) -> np.ndarray:
    if ball.family == "l1":
        return np.sign(z) / ball.radius
    re = rearrange(z)
    scale = np.arange(1, z.size + 1) ** (1.0 / ball.p)
    top = int(np.argmax(re.values * scale))
    j = int(re.permutation[top])
    g = np.zeros_like(z)
    g[j] = math.copysign(scale[top], z[j]) / ball.radius
    return g


def _l1_vertex_polish(entries: np.ndarray, z: np.ndarray, rank: int,
                      radius: float) -> np.ndarray:
    """Snap to the kernel polytope vertex supported on the top rank+1 coords."""
    n = entries.shape[1]
    size = min(n, rank + 1)
    support = np.argsort(-np.abs(z), kind="stable")[:size]
    sub = entries[:, support]
    _, _, vt = np.linalg.svd(sub)
    v = vt[-1]
    cand = np.zeros(n)
    cand[support] = v
    l1 = np.sum(np.abs(cand))
    return cand * (radius / l1) if l1 > 0 else cand


def kernel_diameter_lower(m: MeasurementMatrix, ball: BallDescriptor,
                          restarts: int, seed: int, iters: int = 400) -> float:
    """Certified lower bound on diam(ker(G) cap ball) by projected search.

    Minimizes the ball gauge over the unit sphere of kernel coordinates
    (the maximal inscribed kernel vector is the reciprocal), with random
    restarts; l1 balls get an exact vertex polish on the best supports.
    """
    if ball.family not in ("l1", "weak-lp"):
        raise InvalidSpecError("lower bound supports l1 and weak-lp balls")
    kb = kernel_basis(m)
    if kb.dim == 0:
        return 0.0
    v = kb.basis                      # (d, n)
    rank = m.n - kb.dim
    rng = philox(seed, "kernel-lower")
    best = 0.0
    best_z = None
    eye = np.eye(kb.dim)
    inits = [eye[i] for i in range(min(kb.dim, restarts))]
    while len(inits) < restarts:
        inits.append(rng.standard_normal(kb.dim))
    for c0 in inits:
        c = np.asarray(c0, dtype=float)
        c /= np.linalg.norm(c)
        for t in range(iters):
            z = c @ v
            g = _gauge(z, ball)
            if 1.0 / g > best:
                best = 1.0 / g
                best_z = z / g
            grad = v @ _gauge_subgradient(z, ball)
            gn = np.linalg.norm(grad)
            if gn == 0.0:
                break
            c = c - (0.3 / math.sqrt(1.0 + t)) * grad / gn
            c /= np.linalg.norm(c)
        if ball.family == "l1" and best_z is not None:
            cand = _l1_vertex_polish(m.entries, best_z, rank, ball.radius)
            nrm = float(np.linalg.norm(cand))
            if nrm > best and np.linalg.norm(m.entries @ cand) <= 1e-9 * max(
                    1.0, np.linalg.norm(m.entries)):
                best = nrm
                best_z = cand
    return 2.0 * best


# ---------------------------------------------------------------------------
# kernel diameter, upper bound by per-instance net certificate


@dataclass(frozen=True)
class UpperBoundCertificate:
    certified: bool
    rho: float
    theta: float
    sphere_cover_size: int
    hull_net_size: int
    norm_condition: bool          # | |G~ x| - 1 | <= theta/5 on the sphere cover
    image_condition: bool         # |G~ z| <= 2 |z| on the hull net
    cover_probe_pass: bool
    effective_sparsity: int


def kernel_diameter_upper(m: MeasurementMatrix, ball: BallDescriptor, rho: float,
                          theta: float = 0.5, seed: int = 0,
                          net_budget: float = 2e6, cover_probes: int = 2000,
                          stall_limit: int | None = 20_000) -> UpperBoundCertificate:
    """Per-instance certificate that diam(ker(G~) cap ball) <= rho.

    Builds a theta/5-cover of the rescaled sphere slice of the ball through
    sparse truncation, plus a scaled hull net for the difference body, and
    checks the realized matrix on both.  When every condition holds, no
    kernel vector of the ball can exceed norm rho (the near-isometry lower
    bound 1 - 9 theta/5 stays positive), so the certificate needs
    theta < 5/9.  No probability claim is made.
    """
    if not (0.0 < theta < 5.0 / 9.0):
        raise InvalidSpecError("certificate needs 0 < theta < 5/9 to be nonvacuous")
    if rho <= 0:
        raise InvalidSpecError("rho must be positive")
    if ball.family not in ("l1", "weak-lp"):
        raise InvalidSpecError("upper bound supports l1 and weak-lp balls")
    p = 1.0 if ball.family == "l1" else ball.p
    n = m.n
    eps = theta / 5.0
    # slice scale: T = (radius/rho) ball cap sphere, sparse surrogate level m_eff
    u = ball.radius / rho
    m_eff = max(1, math.ceil(u ** (1.0 / (1.0 / p - 0.5))))
    delta = (theta / 20.0) ** 2
    s = math.ceil(m_eff / delta)
    try:
        if s >= n:
            # every vector is n-sparse: cover the slice directly at theta/5
            sphere_net = sparse_set_net(n, n, eps, "sphere", seed, net_budget,
                                        stall_limit=stall_limit)
        else:
            sphere_net = sparse_set_net(n, s, eps / 2.0, "sphere", seed, net_budget,
                                        stall_limit=stall_limit)
        if p == 1.0:
            m1 = math.ceil((2.0 * u / eps) ** 2)
        else:
            m1 = required_hull_sparsity(p, m_eff, eps)
        hull_net = sparse_set_net(n, min(m1, n), 0.5, "ball", seed + 1, net_budget,
                                  stall_limit=stall_limit)
    except BudgetError as exc:
        raise BudgetError(f"net budget exceeded at rho = {rho}: {exc}") from exc
    probe = cover_check(sphere_net, cover_probes, seed + 2)
    normalized = m if m.normalization == "row-normalized" else row_normalize(m)
    cond1 = verify_on_net(normalized, sphere_net, theta)
    # the hull net is eps * hull_net.points; |G~(eps q)| <= 2|eps q| is
    # scale-free, so the condition is checked on the unscaled points
    images = hull_net.points @ normalized.entries.T
    norms = np.linalg.norm(hull_net.points, axis=1)
    cond2 = bool(np.all(np.linalg.norm(images, axis=1) <= 2.0 * norms + 1e-12))
    certified = bool(cond1.all_pass and cond2 and probe.pass_)
    return UpperBoundCertificate(
        certified=certified, rho=rho, theta=theta,
        sphere_cover_size=len(sphere_net), hull_net_size=len(hull_net),
        norm_condition=cond1.all_pass, image_condition=cond2,
        cover_probe_pass=probe.pass_, effective_sparsity=m_eff)


def max_sparsity_for_budget(k: int, n: int, c_p: float, c1: float = KM_C1) -> int:
    """Largest m >= 1 with k >= c_p * m * log(c1 * n / m); 0 when none."""
    best = 0
    for m in range(1, n + 1):
        if k >= c_p * m * math.log(c1 * n / m):
            best = m
    return best


def rho_from_budget(p: float, k: int, n: int, radius: float = 1.0) -> float | None:
    """Diameter prediction radius * m^(1/2 - 1/p) from the frozen constants."""
    m = max_sparsity_for_budget(k, n, km_cp(p))
    if m == 0:
        return None
    return radius * m ** (0.5 - 1.0 / p)


# ---------------------------------------------------------------------------
# end-to-end experiment


T0_MODELS = ("sparse", "weak-lp-extremal", "random-ball")


def draw_signal(ball: BallDescriptor, model: str, seed: int,
                sparsity: int = 1) -> np.ndarray:
    """Sample t0 from the ball: random sparse, extremal envelope, or bulk."""
    rng = philox(seed, "t0", model)
    n = ball.dim
    if model == "sparse":
        t0 = np.zeros(n)
        supp = rng.choice(n, size=sparsity, replace=False)
        t0[supp] = rng.standard_normal(sparsity)
        return t0 / _gauge(t0, ball)
    if model == "weak-lp-extremal":
        p = 1.0 if ball.family == "l1" else ball.p
        mags = np.arange(1, n + 1) ** (-1.0 / p)
        signs = rng.integers(0, 2, n) * 2.0 - 1.0
        t0 = (signs * mags)[rng.permutation(n)]
        return t0 / _gauge(t0, ball)
    if model == "random-ball":
        if ball.family == "l1":
            return sample_l1_ball(rng, n, ball.radius)
        return sample_weak_lp_ball(rng, n, ball.p, ball.radius)
    raise InvalidSpecError(f"unknown signal model {model!r}")


def recon_experiment(spec: EnsembleSpec, ball: BallDescriptor, t0_model: str,
                     seed: int, sparsity: int = 1, solver: str = "iterative",
                     rho: float | None = None, certify: bool = False,
                     theta: float = 0.5,
                     net_budget: float = 2e6) -> ReconResult:
    """Draw the matrix, measure a signal from the ball, and recover it.

    The reported bound is the quasi-convexity-inflated 2 a rho (a = 2^(1/p)
    for weak-lp, 1 for the convex l1 ball) and is only attached when the
    per-instance certificate for rho succeeds.
    """
    if ball.dim != spec.n:
        raise InvalidSpecError("ball dimension must match the ensemble")
    t0 = draw_signal(ball, t0_model, seed, sparsity)
    if not member(t0, ball, atol=1e-9):
        raise InvalidSpecError("drawn signal escaped the ball")
    mat = generate(spec)
    b = mat.entries @ t0
    result = l1_minimize(mat, b, mode=solver, t0=t0)
    bound = None
    certified = False
    if rho is None:
        p = 1.0 if ball.family == "l1" else ball.p
        rho = rho_from_budget(p, spec.k, spec.n, ball.radius)
    if certify and rho is not None:
        cert = kernel_diameter_upper(mat, ball, rho, theta=theta, seed=seed,
                                     net_budget=net_budget)
        certified = cert.certified
        if certified:
            a = 1.0 if ball.family == "l1" else 2.0 ** (1.0 / ball.p)
            bound = 2.0 * a * rho
    return ReconResult(
        b=result.b, x_hat=result.x_hat, solver=result.solver,
        objective=result.objective, residual=result.residual,
        iterations=result.iterations, t0=t0, error=result.error,
        bound=bound, certified=certified)
