"""Joint transmit-power and relay-beamforming optimization.

The relay weights are restricted to the null space of the eavesdropper's
two effective second-slot channels, which removes second-slot leakage and
turns the beamforming subproblem into a small SOCP: for a fixed rate split
and sum-rate target the worst-relay stored power is maximized; the largest
feasible target is found by bisection and the split by a one-dimensional
grid.  Source powers are then updated by a small LP under leakage, harvest,
relay-power and battery constraints, and the two stages alternate.

Monotonicity of the recorded objective is enforced by construction: a cycle
that fails to improve is rejected and the loop stops.  The returned joint
point is the best secrecy-rate iterate seen, which also guarantees the
joint scheme never falls below the fixed-power (relay-only) baseline it
starts from.
"""

from dataclasses import dataclass

import numpy as np

from . import conic
from .linalg import NoNullSpaceError, null_space_basis
from .mechanism import AuctionOutcome, relay_valuations, vcg_select
from .model import (ChannelRealization, EffectiveChannels, SystemParams,
                    effective_channels, link_snrs, secrecy_sum_rate)

__all__ = [
    "FeasibilityError",
    "TargetInfeasibleError",
    "JointSolution",
    "HarvestRequirements",
    "rate_upper_bound",
    "phase_align",
    "build_relay_socp",
    "solve_beamforming",
    "build_power_lp",
    "alternating_optimize",
    "relay_only_optimize",
    "harvest_requirements",
]

MAX_CYCLES = 50


class FeasibilityError(RuntimeError):
    """No relay weights / powers can satisfy the constraint system.

    ``relay_index`` names the first selected relay whose harvest requirement
    cannot be met (position within the selected set), or -1 when the failure
    is not attributable to a single relay.
    """

    def __init__(self, message: str, relay_index: int = -1):
        super().__init__(message)
        self.relay_index = relay_index


class TargetInfeasibleError(ValueError):
    """A rate target is structurally unreachable (e.g. positive target with
    zero source power), so the SOCP cannot even be assembled."""


@dataclass
class JointSolution:
    """Joint beamforming / power operating point.

    ``f`` is the complex relay weight vector over the selected set (power
    splitting absorbed), ``nu`` the worst-relay stored power (may be
    negative), ``r0``/``beta`` the sum-rate target and split of the final
    beamforming stage, ``secrecy_rate`` the achieved secrecy sum rate with
    the full two-slot eavesdropper capacity, and ``trace`` the accepted
    per-cycle objective values (non-decreasing).
    """

    f: np.ndarray
    p1: float
    p2: float
    nu: float
    r0: float
    beta: float
    secrecy_rate: float
    trace: np.ndarray
    converged: bool = True
    cycles: int = 0


@dataclass(frozen=True)
class HarvestRequirements:
    """Required harvested power per selected relay (ordered like the
    winner set); ``floored`` flags entries clipped up to zero."""

    u: np.ndarray
    floored: np.ndarray


@dataclass(frozen=True)
class _BeamResult:
    f: np.ndarray
    nu: float
    r0: float
    beta: float


def rate_upper_bound(eff: EffectiveChannels, params: SystemParams,
                     p1: float, p2: float) -> float:
    """Upper bound on the feasible sum-rate target of the beamforming stage.

    Decouples the two directions and drops the +1 noise terms, which leaves
    per-direction generalized Rayleigh quotients with closed-form maxima;
    twice the better one dominates every feasible target.  Zero channel
    entries are handled as pseudo-inverse directions (they contribute
    nothing).
    """
    a = np.real(np.diag(eff.Cn1))    # |h1|^2 per selected relay
    b = np.real(np.diag(eff.Cn2))    # |h2|^2
    s2 = params.sigma2
    q1 = float(np.sum(b[a > 0]))     # h21' Cn1^-1 h21 with h21 = h1*h2
    q2 = float(np.sum(a[b > 0]))
    r1 = 0.5 * np.log2(1.0 + (p2 / s2) * q1)
    r2 = 0.5 * np.log2(1.0 + (p1 / s2) * q2)
    return 2.0 * max(r1, r2)


def phase_align(eff: EffectiveChannels, B: np.ndarray) -> np.ndarray:
    """Rotate the null-space coordinates so the rate rows become real.

    Multiplies each basis column by a unit phase so that ``B'^H h21`` is
    entrywise real and nonnegative.  The rotation is diagonal unitary, so
    orthonormality, the null-space property and every constraint norm are
    untouched; both rate constraints share the same vector because the two
    effective channels coincide numerically.
    """
    a = B.conj().T @ eff.h21
    phases = np.where(np.abs(a) > 0, np.exp(1j * np.angle(a)), 1.0)
    return B * phases[np.newaxis, :]


def _real_rows(M: np.ndarray, ncols: int) -> np.ndarray:
    """Rows mapping [Re(fb); Im(fb); ...] to [Re(M fb); Im(M fb)]."""
    d = M.shape[1]
    out = np.zeros((2 * M.shape[0], ncols))
    out[:M.shape[0], :d] = M.real
    out[:M.shape[0], d:2 * d] = -M.imag
    out[M.shape[0]:, :d] = M.imag
    out[M.shape[0]:, d:2 * d] = M.real
    return out


def _check_harvest_support(eff, params, u):
    """Harvest requirements must be reachable at the power box limit."""
    if u is None:
        return
    u = np.asarray(u, dtype=float)
    sel = eff.selected
    a = np.real(np.diag(eff.Cn1))
    b = np.real(np.diag(eff.Cn2))
    cap = params.xi[sel] * (1.0 - params.rho[sel]) * (
        params.P_max * (a + b) + params.sigma2)
    bad = np.nonzero(u > cap + 1e-12)[0]
    if bad.size:
        i = int(bad[0])
        raise FeasibilityError(
            f"harvest requirement {u[i]:.6g} W of selected relay {i} "
            f"exceeds the maximum harvestable power {cap[i]:.6g} W",
            relay_index=i)


def build_relay_socp(beta: float, r0: float, eff: EffectiveChannels,
                     B: np.ndarray, params: SystemParams,
                     p1: float, p2: float, u=None,
                     with_battery: bool = True) -> conic.ConicProblem:
    """Assemble the beamforming SOCP for a fixed (beta, r0).

    Decision vector: real embedding of the null-space coordinates plus the
    stored-power slack.  The unit augmentation of the rate rows is a fixed
    affine offset, not a variable.  Harvest requirements never constrain
    the weights; when ``u`` is given it is only checked for satisfiability
    at the power box limit.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    if r0 < 0:
        raise ValueError(f"r0 must be >= 0, got {r0}")
    K, d = B.shape
    if d < 1:
        raise NoNullSpaceError("empty null space: need K >= 3 selected relays")
    _check_harvest_support(eff, params, u)

    sel = eff.selected
    rho = params.rho[sel]
    xi = params.xi[sel]
    rs = np.real(np.diag(eff.Rs))
    s2 = params.sigma2
    nvar = 2 * d + (1 if with_battery else 0)

    a_vec = B.conj().T @ eff.h21          # shared by both rate rows
    rate_row = np.zeros(nvar)
    rate_row[:d] = a_vec.real
    rate_row[d:2 * d] = a_vec.imag        # Re(a^H fb) against [Re fb; Im fb]

    G_blocks, h_blocks, cones = [], [], []

    for eta_num, Cn in ((2.0 ** (2.0 * beta * r0) - 1.0, eff.Cn1),
                        (2.0 ** (2.0 * (1.0 - beta) * r0) - 1.0, eff.Cn2)):
        p_src = p2 if Cn is eff.Cn1 else p1
        if eta_num <= 0.0:
            continue            # vacuous rate constraint
        if p_src <= 0.0:
            raise TargetInfeasibleError(
                "positive rate target with zero source power")
        eta = s2 * eta_num / p_src
        M = np.sqrt(np.real(np.diag(Cn)))[:, None] * B
        rows = np.zeros((2 * K + 2, nvar))
        hs = np.zeros(2 * K + 2)
        rows[0] = -rate_row / np.sqrt(eta)
        rows[1:2 * K + 1] = -_real_rows(M, nvar)
        hs[2 * K + 1] = 1.0     # fixed unit entry of the augmented vector
        G_blocks.append(rows)
        h_blocks.append(hs)
        cones.append(conic.SecondOrder(2 * K + 2))

    row_re_im = _real_rows(B, nvar)       # 2K x nvar, rows i and K+i pair up
    for i in range(K):
        rows = np.zeros((3, nvar))
        hs = np.zeros(3)
        hs[0] = np.sqrt(params.p_r / rs[i])
        rows[1] = -row_re_im[i]
        rows[2] = -row_re_im[K + i]
        G_blocks.append(rows)
        h_blocks.append(hs)
        cones.append(conic.SecondOrder(3))

    if with_battery:
        for i in range(K):
            # |f_i|^2 + nu / Rs_ii <= xi (1 - rho_i), rotated-cone encoding
            rows = np.zeros((4, nvar))
            hs = np.zeros(4)
            cap = xi[i] * (1.0 - rho[i])
            hs[0] = cap + 0.5
            rows[0, 2 * d] = 1.0 / rs[i]
            rows[1] = -np.sqrt(2.0) * row_re_im[i]
            rows[2] = -np.sqrt(2.0) * row_re_im[K + i]
            hs[3] = cap - 0.5
            rows[3, 2 * d] = 1.0 / rs[i]
            G_blocks.append(rows)
            h_blocks.append(hs)
            cones.append(conic.SecondOrder(4))

    c = np.zeros(nvar)
    if with_battery:
        c[2 * d] = -1.0         # maximize the stored-power slack
    return conic.ConicProblem(c=c, G=np.vstack(G_blocks),
                              h=np.concatenate(h_blocks), cones=tuple(cones))


def _beam_basis(eff: EffectiveChannels) -> np.ndarray:
    try:
        B = null_space_basis(eff.Hbar_e)
    except ValueError as exc:
        raise NoNullSpaceError(
            "null-space beamforming needs K >= 3 selected relays "
            f"(got K = {eff.Hbar_e.shape[0]})") from exc
    return phase_align(eff, B)


def solve_beamforming(eff: EffectiveChannels, params: SystemParams,
                      p1: float, p2: float, u=None) -> _BeamResult:
    """Best (f, nu, r0, beta) at fixed source powers.

    Per grid split the largest feasible target is bisected to ``r0_tol``
    and the stored-power slack maximized there; the split maximizing
    r0 + nu wins, ties broken by larger r0 then smaller beta.
    """
    B = _beam_basis(eff)
    _check_harvest_support(eff, params, u)
    d = B.shape[1]
    r_max = rate_upper_bound(eff, params, p1, p2)
    betas = np.linspace(0.0, 1.0, params.beta_grid)
    sel = eff.selected
    # stored power can never exceed the best harvest surplus (at f = 0)
    nu_cap = float(np.min(params.xi[sel] * (1.0 - params.rho[sel])
                          * np.real(np.diag(eff.Rs))))

    best = None
    warm = None
    for beta in betas:
        r0 = _bisect_r0(beta, eff, B, params, p1, p2, r_max, warm)
        warm = r0
        if best is not None and r0 + nu_cap <= best[0] + 1e-12:
            continue             # cannot beat the incumbent split
        sol = _max_nu(beta, r0, eff, B, params, p1, p2)
        retry = 0
        while sol is None and r0 > 0 and retry < 3:
            # the bisected edge can be marginal for the max-nu pass
            r0 = max(0.0, r0 - params.r0_tol)
            sol = _max_nu(beta, r0, eff, B, params, p1, p2)
            retry += 1
        if sol is None:
            continue
        nu, fbar = sol
        score = r0 + nu
        if best is None or score > best[0] + 1e-12 or (
                abs(score - best[0]) <= 1e-12 and r0 > best[1] + 1e-12):
            best = (score, r0, beta, nu, fbar)

    if best is None:
        raise FeasibilityError("beamforming stage found no feasible point")
    _, r0, beta, nu, fbar = best
    f = B @ (fbar[:d] + 1j * fbar[d:2 * d])
    return _BeamResult(f=f, nu=float(nu), r0=float(r0), beta=float(beta))


def _bisect_r0(beta, eff, B, params, p1, p2, r_max, warm=None) -> float:
    if r_max <= params.r0_tol:
        return 0.0

    def feasible(r0):
        try:
            prob = build_relay_socp(beta, r0, eff, B, params, p1, p2,
                                    with_battery=False)
        except TargetInfeasibleError:
            return False
        return conic.feasibility(prob, tol=1e-8).feasible

    lo, hi = 0.0, r_max          # lo always feasible, hi beyond the bound
    if warm is not None and 0.0 < warm < r_max:
        # neighbouring splits have close targets; one probe shrinks the
        # bracket to the warm side
        if feasible(warm):
            lo = warm
        else:
            hi = warm
    while hi - lo > params.r0_tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _max_nu(beta, r0, eff, B, params, p1, p2):
    d = B.shape[1]
    eta1 = 2.0 ** (2.0 * beta * r0) - 1.0
    eta2 = 2.0 ** (2.0 * (1.0 - beta) * r0) - 1.0
    if eta1 <= 0.0 and eta2 <= 0.0:
        # no rate constraints: idle weights maximize every battery cap
        return _repair(np.zeros(2 * d), eff, B, params)
    try:
        prob = build_relay_socp(beta, r0, eff, B, params, p1, p2,
                                with_battery=True)
    except TargetInfeasibleError:
        return None
    sol = conic.solve(prob, tol=1e-8)
    if sol.status == conic.MAX_ITERATIONS and max(
            sol.primal_residual, sol.dual_residual, sol.gap) <= 1e-5:
        pass        # numerically converged on a degenerate face; repairable
    elif sol.status != conic.OPTIMAL:
        return None
    return _repair(sol.x[:2 * d], eff, B, params)


def _repair(fbar, eff, B, params):
    """Exact-feasibility cleanup of a beamforming iterate.

    The weights are scaled (at solver-residual magnitude) into the relay
    power caps and the stored-power slack is recomputed as the exact
    worst-relay battery, so every returned point satisfies its constraints
    by construction rather than to solver tolerance.
    """
    d = B.shape[1]
    f = B @ (fbar[:d] + 1j * fbar[d:2 * d])
    rs = np.real(np.diag(eff.Rs))
    power = np.abs(f) ** 2 * rs
    viol = float(np.max(power)) / params.p_r
    if viol > 1.0:
        fbar = fbar / np.sqrt(viol)
        f = f / np.sqrt(viol)
    sel = eff.selected
    batt = params.xi[sel] * (1.0 - params.rho[sel]) * rs - np.abs(f) ** 2 * rs
    return float(np.min(batt)), fbar


def build_power_lp(f, ch: ChannelRealization, selected,
                   params: SystemParams, u) -> conic.ConicProblem:
    """Source-power LP at fixed relay weights.

    Variables (p1, p2, nu); maximizes the two link-SNR surrogates plus the
    worst-relay stored power under leakage, harvest, relay-power, battery
    and box constraints.
    """
    sel = np.asarray(selected, dtype=int)
    f = np.asarray(f, dtype=complex).ravel()
    if f.size != sel.size:
        raise ValueError("f must match the selected set in length")
    eff = effective_channels(ch, sel, 1.0, 1.0, params.sigma2)
    s2 = params.sigma2
    a = np.real(np.diag(eff.Cn1))
    b = np.real(np.diag(eff.Cn2))
    fa = np.abs(f) ** 2
    rho = params.rho[sel]
    xi = params.xi[sel]
    u = np.zeros(sel.size) if u is None else np.asarray(u, dtype=float)

    # SNR-per-watt coefficients of the two directions at fixed f
    g1, g2 = link_snrs(f, eff, 1.0, 1.0, s2)
    mu1, mu2 = g2, g1            # link 2 carries p1, link 1 carries p2

    rows, hs = [], []

    def le(cp1, cp2, cnu, rhs):   # cp1*p1 + cp2*p2 + cnu*nu <= rhs
        rows.append([cp1, cp2, cnu])
        hs.append(rhs)

    le(abs(ch.h1e) ** 2, abs(ch.h2e) ** 2, 0.0,
       s2 * (2.0 ** (2.0 * params.r_e) - 1.0))            # leakage cap
    for i in range(sel.size):
        g = xi[i] * (1.0 - rho[i])
        le(-g * a[i], -g * b[i], 0.0, g * s2 - u[i])      # harvest >= u
        le(fa[i] * a[i], fa[i] * b[i], 0.0,
           params.p_r - fa[i] * s2)                       # relay power cap
        gb = g - fa[i]
        le(-gb * a[i], -gb * b[i], 1.0, gb * s2)          # battery >= nu
    le(1.0, 0.0, 0.0, params.P_max)
    le(0.0, 1.0, 0.0, params.P_max)
    le(-1.0, 0.0, 0.0, 0.0)
    le(0.0, -1.0, 0.0, 0.0)

    G = np.asarray(rows, dtype=float)
    return conic.ConicProblem(c=np.array([-mu1, -mu2, -1.0]), G=G,
                              h=np.asarray(hs, dtype=float),
                              cones=(conic.NonNeg(G.shape[0]),))


def _joint_objective(f, ch, selected, p1, p2, params) -> float:
    """True coupled objective: achieved sum rate plus worst stored power."""
    eff = effective_channels(ch, selected, p1, p2, params.sigma2)
    g1, g2 = link_snrs(f, eff, p1, p2, params.sigma2)
    rates = 0.5 * np.log2(1.0 + g1) + 0.5 * np.log2(1.0 + g2)
    sel = np.asarray(selected, dtype=int)
    rs = np.real(np.diag(eff.Rs))
    batt = params.xi[sel] * (1.0 - params.rho[sel]) * rs - np.abs(f) ** 2 * rs
    return float(rates + np.min(batt))


def _initial_powers(params: SystemParams) -> float:
    return params.P_max / (params.K + 2.0)


def relay_only_optimize(ch: ChannelRealization, selected,
                        params: SystemParams, u=None) -> JointSolution:
    """Baseline: beamforming at fixed source powers, no power update."""
    p0 = _initial_powers(params)
    eff = effective_channels(ch, selected, p0, p0, params.sigma2)
    bf = solve_beamforming(eff, params, p0, p0, u)
    cs = secrecy_sum_rate(bf.f, ch, selected, p0, p0, params.sigma2)
    trace = np.array([_joint_objective(bf.f, ch, selected, p0, p0, params)])
    return JointSolution(f=bf.f, p1=p0, p2=p0, nu=bf.nu, r0=bf.r0,
                         beta=bf.beta, secrecy_rate=float(cs), trace=trace,
                         converged=True, cycles=1)


def alternating_optimize(ch: ChannelRealization, selected,
                         params: SystemParams, u=None) -> JointSolution:
    """Alternate beamforming SOCP and power LP from the standard start.

    Each full cycle must not decrease the coupled objective (worse cycles
    are rejected and the loop stops), so the recorded trace is monotone.
    The returned point is the best secrecy-rate iterate, which includes the
    fixed-power first cycle and therefore dominates the relay-only
    baseline on the same channel.
    """
    sel = np.asarray(selected, dtype=int)
    p0 = _initial_powers(params)
    p1 = p2 = p0
    u_arr = None if u is None else np.asarray(u, dtype=float)

    candidates = []              # (secrecy_rate, JointSolution fields)
    trace = []
    converged = False
    cycles = 0
    lp_failed = False

    for cycle in range(MAX_CYCLES):
        eff = effective_channels(ch, sel, p1, p2, params.sigma2)
        bf = solve_beamforming(eff, params, p1, p2, u_arr)

        if cycle == 0 and _harvest_ok(ch, sel, params, p1, p2, u_arr):
            _push(candidates, ch, sel, params, bf, p1, p2)

        lp = conic.solve(build_power_lp(bf.f, ch, sel, params, u_arr),
                         tol=1e-8)
        if lp.status != conic.OPTIMAL:
            lp_failed = True
            break
        p1_new, p2_new = float(lp.x[0]), float(lp.x[1])
        p1_new = min(max(p1_new, 0.0), params.P_max)
        p2_new = min(max(p2_new, 0.0), params.P_max)

        obj = _joint_objective(bf.f, ch, sel, p1_new, p2_new, params)
        if trace and obj < trace[-1] - 1e-12:
            converged = True     # alternating stopped helping; keep the best
            break
        cycles = cycle + 1
        trace.append(obj)
        _push(candidates, ch, sel, params, bf, p1_new, p2_new,
              nu=float(lp.x[2]))

        power_step = max(abs(p1_new - p1), abs(p2_new - p2))
        p1, p2 = p1_new, p2_new
        if power_step < 1e-9:
            converged = True
            break
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < params.tol_outer:
            converged = True
            break

    if not candidates:
        raise FeasibilityError(
            "power stage infeasible: leakage cap and harvest requirements "
            "cannot hold together" if lp_failed else
            "no feasible joint operating point")

    best = max(candidates, key=lambda c: c[0])
    sol = best[1]
    if not trace:
        trace = [_joint_objective(sol.f, ch, sel, sol.p1, sol.p2, params)]
    sol.trace = np.array(trace)
    sol.converged = converged
    sol.cycles = cycles
    return sol


def _harvest_ok(ch, sel, params, p1, p2, u) -> bool:
    if u is None:
        return True
    a = np.abs(ch.h1r[sel]) ** 2
    b = np.abs(ch.h2r[sel]) ** 2
    ph = params.xi[sel] * (1.0 - params.rho[sel]) * (
        p1 * a + p2 * b + params.sigma2)
    return bool(np.all(ph >= np.asarray(u) - 1e-9))


def _push(candidates, ch, sel, params, bf, p1, p2, nu=None):
    cs = secrecy_sum_rate(bf.f, ch, sel, p1, p2, params.sigma2)
    if nu is None:
        nu = bf.nu
    candidates.append((float(cs), JointSolution(
        f=bf.f, p1=float(p1), p2=float(p2), nu=float(nu), r0=bf.r0,
        beta=bf.beta, secrecy_rate=float(cs), trace=None)))


def harvest_requirements(reports, outcome: AuctionOutcome,
                         params: SystemParams) -> HarvestRequirements:
    """Per-winner harvest requirement: price-scaled VCG utility, floored at 0.

    ``reports`` must be the channel triples the auction ran on; the winner
    set is re-derived from them as a consistency check.  Negative utilities
    (an exaggerator that won) are floored to zero and flagged, since a
    negative harvest requirement has no physical meaning.
    """
    values = relay_valuations(reports, params)
    expect = vcg_select(values, outcome.winners.size)
    if not np.array_equal(expect, outcome.winners):
        raise ValueError("outcome does not match the supplied reports")
    raw = params.pi[outcome.winners] * outcome.utilities[outcome.winners]
    floored = raw < 0
    return HarvestRequirements(u=np.maximum(raw, 0.0), floored=floored)
