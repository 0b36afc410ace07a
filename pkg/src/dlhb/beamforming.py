"""Closed-form reference beamformers and spectral-efficiency evaluation.

The transmit side uses the top right singular vectors of H[m]; the receive
side uses the MMSE combiner

    W_MMSE^H[m] = (1/rho) (F^H H^H H F + (N_S sigma_n^2 / rho) I)^-1 F^H H^H.

Per-subcarrier rate under Gaussian signaling:

    R[m] = log2 | I + (rho/N_S) Lambda_n^-1 A^H H F_t F_t^H H^H A |,
    A = W_RF W_BB[m],  F_t = F_RF F_BB[m],
    Lambda_n = sigma_n^2 A^H A.
"""

from dataclasses import dataclass

import numpy as np

from .channel import FrequencyChannel
from .numerics import NotHpdError, RankDeficientError, herm, logdet2_hpd, svd


@dataclass(frozen=True)
class LinkParams:
    rho: float        # average received power, linear
    noise_var: float  # sigma_n^2, linear
    n_streams: int    # N_S

    def __post_init__(self):
        if self.rho <= 0 or self.noise_var <= 0:
            raise ValueError("rho and noise_var must be positive")
        if self.n_streams < 1:
            raise ValueError("n_streams must be >= 1")


@dataclass
class HybridBeamformer:
    f_rf: np.ndarray  # (N_T, N_RF), unit-modulus entries
    w_rf: np.ndarray  # (N_R, N_RF), unit-modulus entries
    f_bb: np.ndarray  # (M, N_RF, N_S)
    w_bb: np.ndarray  # (M, N_RF, N_S)

    @property
    def n_subcarriers(self) -> int:
        return self.f_bb.shape[0]

    @property
    def n_streams(self) -> int:
        return self.f_bb.shape[2]

    def validate(self, unit_tol: float = 1e-12, power_tol: float = 1e-9) -> None:
        """Check the analog unit-modulus and total power constraints."""
        for name, mat in (("f_rf", self.f_rf), ("w_rf", self.w_rf)):
            dev = np.max(np.abs(np.abs(mat) - 1.0))
            if dev > unit_tol:
                raise ValueError(f"{name} deviates from unit modulus by {dev:.3e}")
        m, n_s = self.n_subcarriers, self.n_streams
        total = float(np.sum(np.abs(self.f_rf @ self.f_bb) ** 2))
        if abs(total - m * n_s) > power_tol * m * n_s:
            raise ValueError(
                f"precoder power {total:.12g} != M*N_S = {m * n_s} within tolerance"
            )


def optimal_precoder(h: np.ndarray, n_streams: int, subcarrier=None) -> np.ndarray:
    """Top-N_S right singular vectors of h (the unconstrained precoder).

    Raises RankDeficientError if the N_S-th singular value is below
    1e-10 times the largest; `subcarrier` only labels the error message.
    """
    res = svd(h)
    if len(res.singulars) < n_streams or res.singulars[n_streams - 1] <= 1e-10 * res.singulars[0]:
        where = "" if subcarrier is None else f" at subcarrier {subcarrier}"
        raise RankDeficientError(
            f"channel rank < {n_streams} streams{where}: singular values "
            f"{np.array2string(res.singulars, precision=3)}"
        )
    return res.right[:, :n_streams]


def mmse_combiner(h: np.ndarray, f_opt: np.ndarray, link: LinkParams) -> np.ndarray:
    """MMSE receive combiner for channel h and transmit precoder f_opt."""
    hf = h @ f_opt
    gram = hf.conj().T @ hf
    a = gram + (link.n_streams * link.noise_var / link.rho) * np.eye(gram.shape[0])
    try:
        w_h = np.linalg.solve(a, hf.conj().T) / link.rho
    except np.linalg.LinAlgError as exc:
        raise NotHpdError("MMSE normal matrix is singular") from exc
    return w_h.conj().T


def _subcarrier_rate(h, f_rf, f_bb_m, w_rf, w_bb_m, link, m) -> float:
    a = w_rf @ w_bb_m
    lam = link.noise_var * (a.conj().T @ a)
    g = a.conj().T @ h @ f_rf @ f_bb_m
    sig = (link.rho / link.n_streams) * (g @ g.conj().T)
    try:
        r = logdet2_hpd(herm(lam + sig)) - logdet2_hpd(herm(lam))
    except NotHpdError as exc:
        raise NotHpdError(f"noise covariance not invertible at subcarrier {m + 1}") from exc
    return max(r, 0.0)


def spectral_efficiency(fc: FrequencyChannel, bf: HybridBeamformer, link: LinkParams) -> float:
    """Average over subcarriers of R[m] for a hybrid beamformer, in bits/s/Hz.

    Determinant arguments are Hermitian-symmetrized before the log-det to
    scrub roundoff asymmetry; the log2|I + X| form is evaluated as
    log2|Lambda_n + S| - log2|Lambda_n| so both factors are genuinely HPD.
    """
    m_count = fc.n_subcarriers
    total = 0.0
    for m in range(m_count):
        total += _subcarrier_rate(
            fc.per_subcarrier[m], bf.f_rf, bf.f_bb[m], bf.w_rf, bf.w_bb[m], link, m
        )
    return total / m_count


def digital_spectral_efficiency(fc: FrequencyChannel, link: LinkParams) -> float:
    """Spectral efficiency of the fully digital (unconstrained SVD) beamformer."""
    n_s = link.n_streams
    total = 0.0
    for m in range(fc.n_subcarriers):
        res = svd(fc.per_subcarrier[m])
        if res.singulars[0] == 0.0:
            continue  # exactly-zero subcarrier carries log2(1 + 0) = 0
        if len(res.singulars) < n_s or res.singulars[n_s - 1] <= 1e-10 * res.singulars[0]:
            raise RankDeficientError(f"channel rank < {n_s} streams at subcarrier {m + 1}")
        s = res.singulars[:n_s]
        total += float(np.sum(np.log2(1.0 + link.rho * s**2 / (n_s * link.noise_var))))
    return total / fc.n_subcarriers


def normalize_power(f_rf: np.ndarray, f_bb: np.ndarray) -> np.ndarray:
    """Scale all baseband precoders by one scalar so sum_m ||F_RF F_BB[m]||_F^2 = M N_S."""
    m_count, n_s = f_bb.shape[0], f_bb.shape[2]
    total = float(np.sum(np.abs(f_rf @ f_bb) ** 2))
    if total == 0.0:
        raise ValueError("cannot normalize an all-zero baseband precoder")
    return f_bb * np.sqrt(m_count * n_s / total)


def output_covariance(h: np.ndarray, f_rf: np.ndarray, f_bb: np.ndarray, link: LinkParams) -> np.ndarray:
    """Array-output covariance rho H F_t F_t^H H^H + sigma_n^2 I (HPD)."""
    hf = h @ f_rf @ f_bb
    return link.rho * (hf @ hf.conj().T) + link.noise_var * np.eye(h.shape[0])
