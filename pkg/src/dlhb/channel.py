"""Geometric clustered delay-domain mmWave channel and its DFT to subcarriers.

The delay-d channel is

    H[d] = beta * sum_{l,r} alpha_{l,r} p(d*Ts - tau_l - tau_r)
                 * a_R(theta_l - aoa_shift_{rl}) a_T(phi_l - aod_shift_{rl})^H

with beta = sqrt(N_T N_R / L), and the per-subcarrier response is

    H[m] = sum_{d=0}^{D-1} H[d] exp(-j 2 pi m d / M),   m = 1..M.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ChannelConfig:
    n_tx: int                       # transmit antennas N_T
    n_rx: int                       # receive antennas N_R
    n_subcarriers: int              # OFDM size M
    n_clusters: int = 3             # clusters L
    n_rays: int = 2                 # rays per cluster N_sc
    cp_len: int = 0                 # delay taps D; 0 means max(1, M // 4)
    symbol_period: float = 1.0      # Ts, seconds (normalized)
    angle_spread_deg: float = 5.0   # std of per-ray angle shifts
    seed: int = 0

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_subcarriers", "n_clusters", "n_rays"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.cp_len < 0:
            raise ValueError("cp_len must be >= 0 (0 selects the default)")
        if self.n_taps > self.n_subcarriers:
            # Parseval between delay and frequency domains needs D <= M.
            raise ValueError("cp_len must not exceed n_subcarriers")
        if self.symbol_period <= 0:
            raise ValueError("symbol_period must be positive")
        if self.angle_spread_deg < 0:
            raise ValueError("angle_spread_deg must be >= 0")

    @property
    def n_taps(self) -> int:
        return self.cp_len if self.cp_len else max(1, self.n_subcarriers // 4)


@dataclass
class ClusterRealization:
    cluster_delays: np.ndarray  # (L,) in [0, (D-1)*Ts]
    ray_delays: np.ndarray      # (N_sc,) >= 0
    mean_aoa: np.ndarray        # (L,) radians
    mean_aod: np.ndarray        # (L,) radians
    aoa_shifts: np.ndarray      # (L, N_sc) radians
    aod_shifts: np.ndarray      # (L, N_sc) radians
    gains: np.ndarray           # (L, N_sc) complex, unit variance


@dataclass
class DelayChannel:
    taps: np.ndarray  # (D, N_R, N_T) complex


@dataclass
class FrequencyChannel:
    per_subcarrier: np.ndarray  # (M, N_R, N_T) complex

    @property
    def n_subcarriers(self) -> int:
        return self.per_subcarrier.shape[0]

    @property
    def n_rx(self) -> int:
        return self.per_subcarrier.shape[1]

    @property
    def n_tx(self) -> int:
        return self.per_subcarrier.shape[2]


def steering_ula(n: int, angle: float) -> np.ndarray:
    """ULA array response at half-wavelength spacing.

    Entry k is exp(j pi k sin(angle)); every entry has unit modulus.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def pulse(t, symbol_period: float = 1.0):
    """Raised-cosine pulse with roll-off 1, truncated to |t| <= 4*Ts.

    p(0) = 1 and p(k*Ts) = 0 for nonzero integer k, so a single ray at
    integer delay occupies exactly one tap.  Accepts scalars or arrays.
    """
    if symbol_period <= 0:
        raise ValueError("symbol_period must be positive")
    x = np.asarray(t, dtype=np.float64) / symbol_period
    denom = 1.0 - 4.0 * x * x
    singular = np.abs(denom) < 1e-9
    safe = np.where(singular, 1.0, denom)
    val = np.sinc(x) * np.cos(np.pi * x) / safe
    # limit at x = +/- 1/2 where cos and the denominator vanish together
    val = np.where(singular, np.pi / 4.0 * np.sinc(x), val)
    val = np.where(np.abs(x) <= 4.0, val, 0.0)
    return val if val.ndim else float(val)


def draw_clusters(config: ChannelConfig, rng: np.random.Generator) -> ClusterRealization:
    """Sample delays, angles and gains for one channel realization.

    Cluster delays are uniform on [0, (D-1)*Ts], ray delays uniform on
    [0, 0.1*Ts], mean angles uniform on [-pi/2, pi/2), ray shifts Gaussian
    with std angle_spread_deg, and gains circularly-symmetric complex
    Gaussian with unit variance.  Effective per-ray angles (mean - shift)
    are clamped into [-pi/2, pi/2).
    """
    ell, nsc = config.n_clusters, config.n_rays
    ts = config.symbol_period
    half = np.pi / 2.0
    cluster_delays = rng.uniform(0.0, (config.n_taps - 1) * ts, size=ell)
    ray_delays = rng.uniform(0.0, 0.1 * ts, size=nsc)
    mean_aoa = rng.uniform(-half, half, size=ell)
    mean_aod = rng.uniform(-half, half, size=ell)
    spread = np.deg2rad(config.angle_spread_deg)
    aoa_shifts = rng.normal(0.0, spread, size=(ell, nsc))
    aod_shifts = rng.normal(0.0, spread, size=(ell, nsc))
    upper = np.nextafter(half, -np.inf)
    aoa_shifts = mean_aoa[:, None] - np.clip(mean_aoa[:, None] - aoa_shifts, -half, upper)
    aod_shifts = mean_aod[:, None] - np.clip(mean_aod[:, None] - aod_shifts, -half, upper)
    gains = (rng.standard_normal((ell, nsc)) + 1j * rng.standard_normal((ell, nsc))) / np.sqrt(2.0)
    return ClusterRealization(
        cluster_delays=cluster_delays,
        ray_delays=ray_delays,
        mean_aoa=mean_aoa,
        mean_aod=mean_aod,
        aoa_shifts=aoa_shifts,
        aod_shifts=aod_shifts,
        gains=gains,
    )


def delay_channel(real: ClusterRealization, config: ChannelConfig) -> DelayChannel:
    """Assemble the D delay taps from a cluster realization."""
    ell, nsc = config.n_clusters, config.n_rays
    if real.gains.shape != (ell, nsc):
        raise ValueError(
            f"realization shape {real.gains.shape} does not match config "
            f"({ell}, {nsc})"
        )
    beta = np.sqrt(config.n_tx * config.n_rx / config.n_clusters)
    aoa = real.mean_aoa[:, None] - real.aoa_shifts       # (L, N_sc)
    aod = real.mean_aod[:, None] - real.aod_shifts
    a_r = np.exp(1j * np.pi * np.sin(aoa)[..., None] * np.arange(config.n_rx))
    a_t = np.exp(1j * np.pi * np.sin(aod)[..., None] * np.arange(config.n_tx))
    outer = a_r[..., :, None] * a_t.conj()[..., None, :]  # (L, N_sc, N_R, N_T)
    d_grid = np.arange(config.n_taps) * config.symbol_period
    delays = real.cluster_delays[:, None] + real.ray_delays[None, :]
    coeff = real.gains[None, :, :] * pulse(
        d_grid[:, None, None] - delays[None, :, :], config.symbol_period
    )  # (D, L, N_sc)
    taps = beta * np.einsum("dlr,lrij->dij", coeff, outer)
    return DelayChannel(taps=taps)


def freq_channel(dc: DelayChannel, m_subcarriers: int) -> FrequencyChannel:
    """DFT of the delay taps onto subcarriers m = 1..M."""
    if m_subcarriers < 1:
        raise ValueError("m_subcarriers must be >= 1")
    n_taps = dc.taps.shape[0]
    m = np.arange(1, m_subcarriers + 1)
    w = np.exp(-2j * np.pi * np.outer(m, np.arange(n_taps)) / m_subcarriers)
    return FrequencyChannel(per_subcarrier=np.tensordot(w, dc.taps, axes=(1, 0)))


def realize_channel(config: ChannelConfig, rng: np.random.Generator) -> FrequencyChannel:
    """Draw one realization and return its per-subcarrier response."""
    real = draw_clusters(config, rng)
    return freq_channel(delay_channel(real, config), config.n_subcarriers)
