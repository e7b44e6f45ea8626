"""Dense primal-dual interior-point solver for small cone programs.

Problem form::

    minimize    c' x
    subject to  A x = b
                h - G x  in  K

where K is a cartesian product of nonnegative orthants and second-order
cones (an LP is the orthant-only special case).  The solver follows the
homogeneous self-dual embedding so infeasibility is detected by certificate
instead of by divergence, uses Nesterov-Todd scaling for the cone blocks and
a Mehrotra predictor-corrector step.  All linear algebra is dense; the
intended problems have at most a few dozen variables.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels

__all__ = [
    "NonNeg",
    "SecondOrder",
    "ConicProblem",
    "ConicSolution",
    "FeasibilityResult",
    "solve",
    "feasibility",
    "solve_lp",
    "dump_problem",
    "load_problem",
    "OPTIMAL",
    "PRIMAL_INFEASIBLE",
    "DUAL_INFEASIBLE",
    "MAX_ITERATIONS",
]

OPTIMAL = "Optimal"
PRIMAL_INFEASIBLE = "PrimalInfeasible"
DUAL_INFEASIBLE = "DualInfeasible"
MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True)
class NonNeg:
    """Nonnegative orthant of dimension ``dim``."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("cone dimension must be >= 1")


@dataclass(frozen=True)
class SecondOrder:
    """Second-order cone {(t, u) : ||u|| <= t} of total dimension ``dim``."""

    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("second-order cone dimension must be >= 2")


@dataclass
class ConicProblem:
    """Standard-form cone program data.

    ``cones`` partitions the slack vector ``h - G x`` in order.  ``A``/``b``
    may be None for problems without equality constraints.
    """

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    cones: tuple
    A: np.ndarray = None
    b: np.ndarray = None

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.G = np.asarray(self.G, dtype=float)
        self.h = np.atleast_1d(np.asarray(self.h, dtype=float))
        n = self.c.size
        if self.G.ndim != 2 or self.G.shape[1] != n:
            raise ValueError(f"G must be (p, {n}), got {self.G.shape}")
        p = self.G.shape[0]
        if self.h.size != p:
            raise ValueError(f"h must have length {p}, got {self.h.size}")
        self.cones = tuple(self.cones)
        if sum(cone.dim for cone in self.cones) != p:
            raise ValueError("cone dimensions must sum to the rows of G")
        for cone in self.cones:
            if not isinstance(cone, (NonNeg, SecondOrder)):
                raise TypeError(f"unsupported cone type {type(cone)}")
        if self.A is None:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        else:
            self.A = np.asarray(self.A, dtype=float)
            self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
            if self.A.ndim != 2 or self.A.shape[1] != n:
                raise ValueError(f"A must be (m, {n}), got {self.A.shape}")
            if self.b.size != self.A.shape[0]:
                raise ValueError("b length must match the rows of A")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.G.shape[0]


@dataclass
class ConicSolution:
    """Solver result.

    On ``Optimal`` the three residuals are at most the solve tolerance.  On
    ``PrimalInfeasible`` the certificate (y, z) is returned in place of the
    duals, normalized so b'y + h'z = -1, and ``primal_residual`` holds the
    certificate residual.  ``mu_trace`` logs the complementarity measure per
    iteration.
    """

    status: str
    x: np.ndarray
    obj: float
    primal_residual: float
    dual_residual: float
    gap: float
    y: np.ndarray = None
    z: np.ndarray = None
    s: np.ndarray = None
    iterations: int = 0
    mu_trace: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    x: np.ndarray = None


# -- cone arithmetic ---------------------------------------------------------

class _LostInterior(Exception):
    """Iterate left the cone interior beyond roundoff; stop cleanly."""


class _ConeWork:
    """Precomputed index structure for fast per-cone arithmetic.

    Orthant entries across all NonNeg cones are handled with one flat index
    array; second-order cones are described by (starts, stops) pairs.  The
    arithmetic itself lives in :mod:`relayopt.kernels`.
    """

    def __init__(self, cones):
        self.p = sum(c.dim for c in cones)
        orth = []
        soc = []
        start = 0
        for cone in cones:
            stop = start + cone.dim
            if isinstance(cone, NonNeg):
                orth.extend(range(start, stop))
            else:
                soc.append((start, stop))
            start = stop
        self.orth = np.asarray(orth, dtype=np.int64)
        self.starts = np.asarray([a for a, _ in soc], dtype=np.int64)
        self.stops = np.asarray([b for _, b in soc], dtype=np.int64)
        self.e = np.zeros(self.p)
        if self.orth.size:
            self.e[self.orth] = 1.0
        if self.starts.size:
            self.e[self.starts] = 1.0
        self.degree = self.orth.size + self.starts.size

    def max_step(self, v, dv) -> float:
        """sup {alpha >= 0 : v + alpha dv stays in the cone}, v interior."""
        return kernels.cone_max_step(v, dv, self.orth, self.starts,
                                     self.stops)

    def jprod(self, u, v):
        return kernels.cone_jprod(u, v, self.orth, self.starts, self.stops,
                                  np.empty_like(u))

    def jsolve(self, lam, r):
        """Solve lam o x = r for x (Jordan product per cone block)."""
        return kernels.cone_jsolve(lam, r, self.orth, self.starts,
                                   self.stops, np.empty_like(r))

    def nt_scaling(self, s, z, W):
        """Nesterov-Todd scaling written into W (W z = W^{-1} s); returns
        lam = W z."""
        lam = np.empty(self.p)
        if kernels.cone_nt_scaling(s, z, self.orth, self.starts, self.stops,
                                   W, lam):
            raise _LostInterior
        return lam


def _cone_shift(v, work: _ConeWork) -> float:
    """Largest margin violation of v w.r.t. the cone (negative if interior)."""
    theta = -np.inf
    if work.orth.size:
        theta = float(np.max(-v[work.orth]))
    for a, b in zip(work.starts, work.stops):
        theta = max(theta, float(np.linalg.norm(v[a + 1:b]) - v[a]))
    return theta


# -- presolve ----------------------------------------------------------------

def _presolve_equalities(A, b, tol):
    """Reduce A to full row rank; return (A, b) or None if inconsistent."""
    if A.shape[0] == 0:
        return A, b
    U, sv, _ = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(sv > max(A.shape) * np.finfo(float).eps * sv[0])) \
        if sv.size else 0
    if rank == A.shape[0]:
        return A, b
    Ar = U[:, :rank].T @ A
    br = U[:, :rank].T @ b
    # consistency of the dropped combinations
    x_ls, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.linalg.norm(A @ x_ls - b) > np.sqrt(tol) * (1.0 + np.linalg.norm(b)):
        return None
    return Ar, br


# -- main solver -------------------------------------------------------------

_STEP_FRACTION = 0.99
_REG = 1e-11


def solve(problem: ConicProblem, tol: float = 1e-8,
          max_iter: int = 100) -> ConicSolution:
    """Solve a cone program to tolerance ``tol``.

    Returns a ConicSolution whose status is one of Optimal,
    PrimalInfeasible, DualInfeasible or MaxIterations (never raises for a
    well-formed problem).
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    pre = _presolve_equalities(problem.A, problem.b, tol)
    if pre is None:
        # the equality system alone is inconsistent
        return ConicSolution(
            status=PRIMAL_INFEASIBLE, x=np.full(problem.n, np.nan),
            obj=np.nan, primal_residual=0.0, dual_residual=np.nan,
            gap=np.nan, iterations=0, mu_trace=np.zeros(0))
    A, b = pre
    c, G, h, cones = problem.c, problem.G, problem.h, problem.cones
    n, m, p = c.size, A.shape[0], G.shape[0]
    if p == 0:
        raise ValueError("problem must have at least one cone constraint")

    work = _ConeWork(cones)
    e = work.e
    deg = work.degree + 1
    norm_b = 1.0 + np.linalg.norm(b)
    norm_h = 1.0 + np.linalg.norm(h)
    norm_c = 1.0 + np.linalg.norm(c)

    mu_trace = []
    best = None

    # the KKT matrix: only the -W^2 block changes across iterations
    dim = n + m + p
    K = np.zeros((dim, dim))
    K[:n, n:n + m] = A.T
    K[:n, n + m:] = G.T
    K[n:n + m, :n] = A
    K[n + m:, :n] = G
    W = np.zeros((p, p))
    reg = np.diag(np.concatenate([np.full(n, _REG), np.full(m, -_REG),
                                  np.full(p, -_REG)]))
    rhs_v = np.concatenate([-c, b, h])

    # least-squares initialization: primal point minimizing ||s|| subject to
    # the linear part, dual point minimizing ||z||, both shifted into the
    # cone interior; keeps early iterates near the central path
    K[n + m:, n + m:] = -np.eye(p)
    try:
        Kinv0 = np.linalg.inv(K + reg)
    except np.linalg.LinAlgError:
        Kinv0 = None
    if Kinv0 is not None:
        sol0 = Kinv0 @ np.concatenate([np.zeros(n), b, h])
        x = sol0[:n]
        s = -(sol0[n + m:])
        sol1 = Kinv0 @ np.concatenate([-c, np.zeros(m), np.zeros(p)])
        y = sol1[n:n + m]
        z = sol1[n + m:].copy()
        for v in (s, z):
            theta = _cone_shift(v, work)
            if theta >= 0:
                v += (1.0 + theta) * e
    else:
        x = np.zeros(n)
        y = np.zeros(m)
        z = e.copy()
        s = e.copy()
    tau, kappa = 1.0, 1.0

    def scaled_metrics():
        xs, ys, zs, ss = x / tau, y / tau, z / tau, s / tau
        pres = max(
            np.linalg.norm(A @ xs - b) / norm_b if m else 0.0,
            np.linalg.norm(G @ xs + ss - h) / norm_h,
        )
        dres = np.linalg.norm(A.T @ ys + G.T @ zs + c) / norm_c
        pcost = c @ xs
        gap = ss @ zs
        relgap = gap / max(1.0, abs(pcost))
        return xs, ys, zs, ss, pres, dres, pcost, gap, relgap

    it = 0
    stalls = 0
    for it in range(max_iter + 1):
        mu = (s @ z + tau * kappa) / deg
        mu_trace.append(mu)

        xs, ys, zs, ss, pres, dres, pcost, gap, relgap = scaled_metrics()
        best = (xs, ys, zs, ss, pres, dres, pcost, gap)

        if pres <= tol and dres <= tol and (gap <= tol or relgap <= tol):
            return ConicSolution(
                status=OPTIMAL, x=xs, obj=float(pcost),
                primal_residual=float(pres), dual_residual=float(dres),
                gap=float(gap), y=ys, z=zs, s=ss, iterations=it,
                mu_trace=np.array(mu_trace))

        bh = b @ y + h @ z
        if bh < -tol:
            cert = np.linalg.norm(A.T @ y + G.T @ z) / (-bh) / norm_c
            if cert <= tol:
                return ConicSolution(
                    status=PRIMAL_INFEASIBLE, x=np.full(n, np.nan),
                    obj=np.nan, primal_residual=float(cert),
                    dual_residual=np.nan, gap=np.nan,
                    y=y / (-bh), z=z / (-bh), s=None, iterations=it,
                    mu_trace=np.array(mu_trace))
        cx = c @ x
        if cx < -tol:
            scale = -cx
            dcert = max(
                np.linalg.norm(A @ x) / scale if m else 0.0,
                np.linalg.norm(G @ x + s) / scale,
            ) / max(norm_b, norm_h)
            if dcert <= tol:
                return ConicSolution(
                    status=DUAL_INFEASIBLE, x=x / scale, obj=np.nan,
                    primal_residual=np.nan, dual_residual=float(dcert),
                    gap=np.nan, iterations=it, mu_trace=np.array(mu_trace))

        if it == max_iter or tau < 1e-14:
            break

        # residuals of the self-dual embedding
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = s + G @ x - h * tau
        rtau = kappa + c @ x + b @ y + h @ z

        try:
            lam = work.nt_scaling(s, z, W)
        except _LostInterior:
            break
        K[n + m:, n + m:] = -(W @ W)
        # quasi-definite static regularization + refinement keeps the
        # factorization stable when W blows up near the boundary
        try:
            Kinv = np.linalg.inv(K + reg)
        except np.linalg.LinAlgError:
            break

        def ksolve(rhs):
            sol = Kinv @ rhs
            return sol + Kinv @ (rhs - K @ sol)

        sol_v = ksolve(rhs_v)
        vx, vy, vz = sol_v[:n], sol_v[n:n + m], sol_v[n + m:]
        denom = c @ vx + b @ vy + h @ vz - kappa / tau
        if abs(denom) < 1e-300:
            break

        def direction(gamma, d, dtk):
            rhs = np.concatenate([
                -(1.0 - gamma) * rx,
                -(1.0 - gamma) * ry,
                -(1.0 - gamma) * rz - W @ d,
            ])
            sol = ksolve(rhs)
            ux, uy, uz = sol[:n], sol[n:n + m], sol[n + m:]
            dtau = (-(1.0 - gamma) * rtau - dtk / tau
                    - (c @ ux + b @ uy + h @ uz)) / denom
            dx = ux + dtau * vx
            dy = uy + dtau * vy
            dz = uz + dtau * vz
            ds = W @ (d - W @ dz)
            dkappa = (dtk - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        # predictor (affine) pass
        d_aff = -lam
        aff = direction(0.0, d_aff, -tau * kappa)
        dx_a, dy_a, dz_a, ds_a, dtau_a, dkap_a = aff
        alpha_aff = min(
            work.max_step(s, ds_a), work.max_step(z, dz_a),
            -tau / dtau_a if dtau_a < 0 else np.inf,
            -kappa / dkap_a if dkap_a < 0 else np.inf,
            1.0,
        )
        sigma = min(1.0, max(0.0, (1.0 - alpha_aff))) ** 3

        # corrector (combined) pass
        Winv_ds = np.linalg.solve(W, ds_a)
        corr = work.jprod(Winv_ds, W @ dz_a)
        d_comb = work.jsolve(lam,
                             sigma * mu * e - work.jprod(lam, lam) - corr)
        dtk_comb = sigma * mu - tau * kappa - dtau_a * dkap_a
        dx, dy, dz, ds, dtau, dkappa = direction(sigma, d_comb, dtk_comb)

        alpha = _STEP_FRACTION * min(
            work.max_step(s, ds), work.max_step(z, dz),
            -tau / dtau if dtau < 0 else np.inf,
            -kappa / dkappa if dkappa < 0 else np.inf,
        )
        alpha = min(alpha, 1.0)

        # keep the complementarity measure non-increasing (1e-12 slack
        # absorbs dot-product roundoff once mu is tiny)
        for _ in range(40):
            mu_new = ((s + alpha * ds) @ (z + alpha * dz)
                      + (tau + alpha * dtau) * (kappa + alpha * dkappa)) / deg
            if mu_new <= mu + 1e-12 * max(1.0, mu):
                break
            alpha *= 0.5
        else:
            break

        if alpha < 1e-10:
            stalls += 1
            if stalls >= 3:
                break            # stuck on a degenerate face
        else:
            stalls = 0

        x += alpha * dx
        y += alpha * dy
        z += alpha * dz
        s += alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa

    xs, ys, zs, ss, pres, dres, pcost, gap = best
    return ConicSolution(
        status=MAX_ITERATIONS, x=xs, obj=float(pcost),
        primal_residual=float(pres), dual_residual=float(dres),
        gap=float(gap), y=ys, z=zs, s=ss, iterations=it,
        mu_trace=np.array(mu_trace))


def feasibility(problem: ConicProblem, tol: float = 1e-8,
                max_iter: int = 100) -> FeasibilityResult:
    """Decide feasibility of the constraint system (objective ignored).

    Solves the embedding with c = 0; an Optimal status yields a
    well-centered feasible point.  MaxIterations is reported as infeasible,
    which keeps bisection callers conservative.
    """
    probe = ConicProblem(c=np.zeros(problem.n), G=problem.G, h=problem.h,
                         cones=problem.cones, A=problem.A, b=problem.b)
    sol = solve(probe, tol=tol, max_iter=max_iter)
    if sol.status == OPTIMAL:
        return FeasibilityResult(True, sol.x)
    return FeasibilityResult(False, None)


def solve_lp(c, G, h, A=None, b=None, tol: float = 1e-8,
             max_iter: int = 100) -> ConicSolution:
    """Solve min c'x s.t. Gx <= h (+ optional Ax = b)."""
    G = np.asarray(G, dtype=float)
    problem = ConicProblem(c=c, G=G, h=h, cones=(NonNeg(G.shape[0]),),
                           A=A, b=b)
    return solve(problem, tol=tol, max_iter=max_iter)


# -- plain-text problem dump/load --------------------------------------------

_MAGIC = "relayopt-conic-v1"


def dump_problem(problem: ConicProblem, path) -> None:
    """Write a problem as plain text (dims header, then row-major numbers)."""
    lines = [_MAGIC, f"{problem.n} {problem.m} {problem.p}"]

    def row(vec):
        return " ".join(f"{v:.17g}" for v in np.atleast_1d(vec))

    lines.append(row(problem.c))
    for i in range(problem.m):
        lines.append(row(problem.A[i]))
    if problem.m:
        lines.append(row(problem.b))
    for i in range(problem.p):
        lines.append(row(problem.G[i]))
    lines.append(row(problem.h))
    lines.append(str(len(problem.cones)))
    for cone in problem.cones:
        kind = "nonneg" if isinstance(cone, NonNeg) else "soc"
        lines.append(f"{kind} {cone.dim}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path) -> ConicProblem:
    """Read a problem written by :func:`dump_problem`."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"not a {_MAGIC} file")
    n, m, p = (int(t) for t in lines[1].split())
    pos = 2

    def take():
        nonlocal pos
        vals = np.array([float(t) for t in lines[pos].split()])
        pos += 1
        return vals

    c = take()
    A = np.vstack([take() for _ in range(m)]) if m else None
    b = take() if m else None
    G = np.vstack([take() for _ in range(p)])
    h = take()
    ncones = int(lines[pos]); pos += 1
    cones = []
    for _ in range(ncones):
        kind, dim = lines[pos].split(); pos += 1
        cones.append(NonNeg(int(dim)) if kind == "nonneg"
                     else SecondOrder(int(dim)))
    return ConicProblem(c=c, G=G, h=h, cones=tuple(cones), A=A, b=b)
