"""Two-way relay system model.

Channel sampling, effective two-way channels over a selected relay set,
harvested/battery power, link SNRs, capacities, the secrecy sum rate and
the per-relay single-relay (SISO) secrecy valuation used by the auction.

Conventions: all channel draws are flat Rayleigh, i.e. zero-mean unit-variance
circularly symmetric complex Gaussian.  Powers are in watts, rates in bps/Hz.
The relay weight vector ``f`` always refers to the selected subset and has the
power-splitting coefficients absorbed into it.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import hermitian_quadratic

__all__ = [
    "SystemParams",
    "ChannelRealization",
    "EffectiveChannels",
    "sample_channels",
    "harvested_power",
    "effective_channels",
    "link_snrs",
    "eavesdropper_capacity_full",
    "eavesdropper_capacity_nullspace",
    "secrecy_sum_rate",
    "battery_power",
    "siso_secrecy_valuation",
]


def _per_relay(value, n: int, name: str, lo: float, hi: float,
               lo_open: bool = False) -> np.ndarray:
    """Broadcast a scalar or length-n array to a validated float n-vector."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be scalar or length {n}, got {arr.shape}")
    if lo_open:
        ok = np.all(arr > lo) and np.all(arr <= hi)
    else:
        ok = np.all(arr >= lo) and np.all(arr <= hi)
    if not ok:
        raise ValueError(f"{name} entries must lie in "
                         f"{'(' if lo_open else '['}{lo}, {hi}]")
    return arr


@dataclass
class SystemParams:
    """Static network parameters.

    Attributes
    ----------
    N : total number of candidate relays.
    K : number of relays to select (needs 3 <= K <= N so a null space
        of the eavesdropper's two effective channel vectors exists).
    P_max : per-source transmit power budget (W).
    p_r : per-relay transmit power budget (W).
    sigma2 : noise variance (W).
    rho : power-splitting fraction routed to forwarding, per relay.
    xi : energy conversion efficiency, per relay.
    pi : price (W per bps/Hz of secrecy rate), per relay.
    r_e : cap on the eavesdropper's information rate (bps/Hz).
    tol_outer : stopping tolerance of the alternating loop.
    beta_grid : number of rate-split samples on [0, 1].
    r0_tol : bisection tolerance on the sum-rate target (bps/Hz).
    """

    N: int
    K: int
    P_max: float = 10.0
    p_r: float = 1.0
    sigma2: float = 1.0
    rho: np.ndarray = 0.5
    xi: np.ndarray = 1.0
    pi: np.ndarray = 1.0
    r_e: float = 1.0
    tol_outer: float = 1e-3
    beta_grid: int = 21
    r0_tol: float = 1e-3

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not (3 <= self.K <= self.N):
            raise ValueError(f"need 3 <= K <= N, got K={self.K}, N={self.N}")
        for name in ("P_max", "p_r", "sigma2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.r_e < 0:
            raise ValueError("r_e must be >= 0")
        if self.beta_grid < 2:
            raise ValueError("beta_grid must be >= 2")
        self.rho = _per_relay(self.rho, self.N, "rho", 0.0, 1.0)
        self.xi = _per_relay(self.xi, self.N, "xi", 0.0, 1.0, lo_open=True)
        self.pi = _per_relay(self.pi, self.N, "pi", 0.0, np.inf)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of every channel gain in the network.

    h1r, h2r : source-to-relay gains (length N).
    hre : relay-to-eavesdropper gains (length N).
    h1e, h2e : source-to-eavesdropper gains.
    """

    h1r: np.ndarray
    h2r: np.ndarray
    hre: np.ndarray
    h1e: complex
    h2e: complex

    def __post_init__(self):
        for name in ("h1r", "h2r", "hre"):
            v = np.asarray(getattr(self, name), dtype=complex)
            object.__setattr__(self, name, v)
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 1-D complex array")
        if self.h1r.shape != self.h2r.shape or self.h1r.shape != self.hre.shape:
            raise ValueError("channel vectors must share one length")

    @property
    def n_relays(self) -> int:
        return self.h1r.size


@dataclass(frozen=True)
class EffectiveChannels:
    """Effective quantities over a selected relay subset of size K.

    h21, h12 : effective two-way channels (numerically identical vectors,
        both equal the elementwise product of the two source-relay gains).
    Cn1, Cn2 : K x K diagonal noise-shaping matrices diag(|h1|^2), diag(|h2|^2).
    Hbar_e : K x 2 matrix of the eavesdropper's effective second-slot channels.
    Rs : K x K diagonal matrix of per-relay received powers
        p1|h1|^2 + p2|h2|^2 + sigma2.
    """

    h21: np.ndarray
    h12: np.ndarray
    Cn1: np.ndarray
    Cn2: np.ndarray
    Hbar_e: np.ndarray
    Rs: np.ndarray
    selected: np.ndarray = field(repr=False, default=None)


def sample_channels(seed, N: int) -> ChannelRealization:
    """Draw all channel gains i.i.d. CN(0, 1), deterministic given the seed.

    ``seed`` may be an int or a ``numpy.random.Generator`` owned by the
    caller.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)

    def cn(size):
        return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) \
            / np.sqrt(2.0)

    return ChannelRealization(
        h1r=cn(N), h2r=cn(N), hre=cn(N),
        h1e=complex(cn(())), h2e=complex(cn(())),
    )


def harvested_power(i: int, p1: float, p2: float, ch: ChannelRealization,
                    rho_i: float, xi_i: float, sigma2: float) -> float:
    """Power harvested by relay i: xi*(1-rho)*(p1|h1i|^2 + p2|h2i|^2 + sigma2)."""
    if not (0 <= i < ch.n_relays):
        raise IndexError(f"relay index {i} out of range [0, {ch.n_relays})")
    if p1 < 0 or p2 < 0:
        raise ValueError("source powers must be >= 0")
    rx = p1 * abs(ch.h1r[i]) ** 2 + p2 * abs(ch.h2r[i]) ** 2 + sigma2
    return xi_i * (1.0 - rho_i) * rx


def effective_channels(ch: ChannelRealization, selected, p1: float, p2: float,
                       sigma2: float) -> EffectiveChannels:
    """Build the effective quantities over ``selected`` (indices into ch)."""
    sel = np.asarray(selected, dtype=int)
    if sel.ndim != 1 or sel.size == 0:
        raise ValueError("selected must be a nonempty 1-D index array")
    if np.unique(sel).size != sel.size:
        raise ValueError("selected contains duplicate indices")
    h1 = ch.h1r[sel]
    h2 = ch.h2r[sel]
    he = ch.hre[sel]
    h21 = h1 * h2          # H_{1,r} h_{2,r} restricted to the subset
    h12 = h2 * h1          # identical numeric value by construction
    Cn1 = np.diag(np.abs(h1) ** 2).astype(complex)
    Cn2 = np.diag(np.abs(h2) ** 2).astype(complex)
    Hbar_e = np.stack([he * h1, he * h2], axis=1)
    Rs = np.diag(p1 * np.abs(h1) ** 2 + p2 * np.abs(h2) ** 2 + sigma2)
    return EffectiveChannels(h21=h21, h12=h12, Cn1=Cn1, Cn2=Cn2,
                             Hbar_e=Hbar_e, Rs=Rs, selected=sel)


def link_snrs(f: np.ndarray, eff: EffectiveChannels, p1: float, p2: float,
              sigma2: float) -> tuple[float, float]:
    """SNRs of the two equivalent one-way links for relay weights f."""
    f = np.asarray(f, dtype=complex).ravel()
    if f.size != eff.h21.size:
        raise ValueError(
            f"f has length {f.size}, expected {eff.h21.size}")
    g1 = p2 * abs(np.vdot(f, eff.h21)) ** 2 / (
        sigma2 * (hermitian_quadratic(f, eff.Cn1) + 1.0))
    g2 = p1 * abs(np.vdot(f, eff.h12)) ** 2 / (
        sigma2 * (hermitian_quadratic(f, eff.Cn2) + 1.0))
    return g1, g2


def _eaves_matrices(f, ch, selected, p1, p2, sigma2):
    sel = np.asarray(selected, dtype=int)
    f = np.asarray(f, dtype=complex).ravel()
    he = ch.hre[sel]
    hbar1 = he * ch.h1r[sel]
    hbar2 = he * ch.h2r[sel]
    He = np.array([
        [np.sqrt(p1) * ch.h1e, np.sqrt(p2) * ch.h2e],
        [np.sqrt(p1) * np.vdot(f, hbar1), np.sqrt(p2) * np.vdot(f, hbar2)],
    ])
    # Second-slot noise is amplified through the relay gains; the diagonal
    # term uses |h_re|^2 so the covariance stays positive definite.
    amp = float(np.sum(np.abs(f) ** 2 * np.abs(he) ** 2))
    Cne = np.diag([sigma2, sigma2 * (1.0 + amp)])
    return He, Cne


def eavesdropper_capacity_full(f, ch: ChannelRealization, selected,
                               p1: float, p2: float, sigma2: float) -> float:
    """Eavesdropper capacity from both time slots (2x2 log-det form)."""
    He, Cne = _eaves_matrices(f, ch, selected, p1, p2, sigma2)
    M = np.eye(2) + He @ He.conj().T @ np.linalg.inv(Cne)
    d = (M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]).real
    return 0.5 * np.log2(max(d, 1.0))


def eavesdropper_capacity_nullspace(p1: float, p2: float, h1e: complex,
                                    h2e: complex, sigma2: float) -> float:
    """Eavesdropper capacity when the second slot is fully zero-forced."""
    if p1 < 0 or p2 < 0:
        raise ValueError("source powers must be >= 0")
    snr = (p1 * abs(h1e) ** 2 + p2 * abs(h2e) ** 2) / sigma2
    return 0.5 * np.log2(1.0 + snr)


def secrecy_sum_rate(f, ch: ChannelRealization, selected, p1: float,
                     p2: float, sigma2: float) -> float:
    """Achievable secrecy sum rate [C1 + C2 - Ce]^+ with the full Ce."""
    eff = effective_channels(ch, selected, p1, p2, sigma2)
    g1, g2 = link_snrs(f, eff, p1, p2, sigma2)
    c1 = 0.5 * np.log2(1.0 + g1)
    c2 = 0.5 * np.log2(1.0 + g2)
    ce = eavesdropper_capacity_full(f, ch, selected, p1, p2, sigma2)
    return max(0.0, c1 + c2 - ce)


def battery_power(i: int, f, ch: ChannelRealization, selected,
                  p1: float, p2: float, params: SystemParams) -> float:
    """Net power stored by the i-th selected relay (may be negative).

    ``i`` indexes into ``selected``; a negative value means the relay spends
    its own stored power to keep its committed transmission going.
    """
    sel = np.asarray(selected, dtype=int)
    f = np.asarray(f, dtype=complex).ravel()
    if not (0 <= i < sel.size):
        raise IndexError(f"position {i} out of range [0, {sel.size})")
    r = sel[i]
    ph = harvested_power(r, p1, p2, ch, params.rho[r], params.xi[r],
                         params.sigma2)
    rx = p1 * abs(ch.h1r[r]) ** 2 + p2 * abs(ch.h2r[r]) ** 2 + params.sigma2
    return ph - abs(f[i]) ** 2 * rx


def siso_secrecy_valuation(g_i, p1: float, p2: float, p_r: float,
                           sigma2: float) -> float:
    """Secrecy sum rate a single relay can offer on its own.

    ``g_i`` is the relay's channel triple ``(h1, h2, he)``; the eavesdropper
    component is carried for completeness but does not enter the value (the
    first-slot leakage does not depend on which relay forwards, and the
    second slot is zero-forced).
    """
    if p1 <= 0 or p2 <= 0 or p_r <= 0:
        raise ValueError("powers must be > 0")
    h1, h2, _ = g_i
    a = abs(h1) ** 2
    b = abs(h2) ** 2
    al2 = 1.0 / (p1 * a + p2 * b + sigma2)   # squared amplification factor
    t1 = al2 * p_r * p1 * a * b / (sigma2 * (al2 * p_r * a + 1.0))
    t2 = al2 * p_r * p2 * b * a / (sigma2 * (al2 * p_r * b + 1.0))
    return 0.5 * (np.log2(1.0 + t1) + np.log2(1.0 + t2))
