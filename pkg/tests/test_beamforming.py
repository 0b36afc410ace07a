import numpy as np
import pytest

from dlhb.beamforming import (
    HybridBeamformer,
    LinkParams,
    digital_spectral_efficiency,
    mmse_combiner,
    normalize_power,
    optimal_precoder,
    output_covariance,
    spectral_efficiency,
)
from dlhb.channel import FrequencyChannel
from dlhb.numerics import RankDeficientError
from oracles import eigs_hermitian_2x2, inv2_cofactor


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_feasible_bf(rng, n_tx, n_rx, n_rf, n_s, m_count):
    f_rf = np.exp(2j * np.pi * rng.random((n_tx, n_rf)))
    w_rf = np.exp(2j * np.pi * rng.random((n_rx, n_rf)))
    f_bb = normalize_power(f_rf, crandn(rng, m_count, n_rf, n_s))
    w_bb = crandn(rng, m_count, n_rf, n_s)
    return HybridBeamformer(f_rf=f_rf, w_rf=w_rf, f_bb=f_bb, w_bb=w_bb)


# --- optimal precoder --------------------------------------------------------


def test_optimal_precoder_diagonal():
    f = optimal_precoder(np.diag([3.0, 1.0]), 1)
    assert np.allclose(np.abs(f), [[1.0], [0.0]], atol=1e-12)


def test_optimal_precoder_unitary_channel():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(crandn(rng, 3, 3))
    f = optimal_precoder(q, 2)
    assert np.linalg.norm(q @ f) ** 2 == pytest.approx(2.0, rel=1e-12)


def test_optimal_precoder_gram_eigen_oracle():
    rng = np.random.default_rng(1)
    h = crandn(rng, 4, 6)
    f = optimal_precoder(h, 2)
    evals, evecs = np.linalg.eigh(h.conj().T @ h)
    top = evecs[:, ::-1][:, :2]
    # same columns up to per-column phase
    for k in range(2):
        assert abs(np.vdot(top[:, k], f[:, k])) == pytest.approx(1.0, abs=1e-10)


def test_optimal_precoder_energy_dominates_random_subspaces():
    rng = np.random.default_rng(2)
    h = crandn(rng, 4, 6)
    f = optimal_precoder(h, 2)
    captured = np.linalg.norm(h @ f) ** 2
    for _ in range(50):
        q, _ = np.linalg.qr(crandn(rng, 6, 2))
        assert captured >= np.linalg.norm(h @ q) ** 2 - 1e-9


def test_optimal_precoder_rank_error_names_subcarrier():
    h = np.outer([1.0, 0.5], [1.0, 2.0, 0.0])  # rank 1
    with pytest.raises(RankDeficientError, match="subcarrier 3"):
        optimal_precoder(h, 2, subcarrier=3)


# --- MMSE combiner -----------------------------------------------------------


def test_mmse_combiner_scalar_formula():
    link = LinkParams(rho=1.0, noise_var=0.3, n_streams=1)
    w = mmse_combiner(np.eye(2), np.array([[1.0], [0.0]]), link)
    assert np.allclose(w, [[1.0 / 1.3], [0.0]], atol=1e-12)


def test_mmse_combiner_noise_dominated_limit():
    rng = np.random.default_rng(3)
    h = crandn(rng, 3, 4)
    f = optimal_precoder(h, 2)
    link = LinkParams(rho=1.0, noise_var=1e6, n_streams=2)
    w = mmse_combiner(h, f, link)
    approx = h @ f / (link.n_streams * link.noise_var)
    assert np.linalg.norm(w - approx) < 0.01 * np.linalg.norm(approx)


def test_mmse_combiner_cofactor_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        h = crandn(rng, 2, 2)
        f = optimal_precoder(h, 2)
        link = LinkParams(rho=1.7, noise_var=0.4, n_streams=2)
        a = f.conj().T @ h.conj().T @ h @ f + (2 * 0.4 / 1.7) * np.eye(2)
        w_h_oracle = inv2_cofactor(a) @ f.conj().T @ h.conj().T / 1.7
        assert np.linalg.norm(mmse_combiner(h, f, link) - w_h_oracle.conj().T) < 1e-10


# --- spectral efficiency -----------------------------------------------------


def test_spectral_efficiency_zero_channel():
    rng = np.random.default_rng(5)
    bf = random_feasible_bf(rng, 4, 3, 2, 1, 2)
    fc = FrequencyChannel(per_subcarrier=np.zeros((2, 3, 4), dtype=complex))
    link = LinkParams(rho=1.0, noise_var=1.0, n_streams=1)
    assert spectral_efficiency(fc, bf, link) == pytest.approx(0.0, abs=1e-12)


def test_spectral_efficiency_scalar_case():
    h = 0.8 - 0.3j
    fc = FrequencyChannel(per_subcarrier=np.array([[[h]]]))
    one = np.ones((1, 1), dtype=complex)
    bf = HybridBeamformer(f_rf=one, w_rf=one, f_bb=one[None], w_bb=one[None])
    link = LinkParams(rho=2.0, noise_var=0.5, n_streams=1)
    expect = np.log2(1.0 + 2.0 * abs(h) ** 2 / 0.5)
    assert spectral_efficiency(fc, bf, link) == pytest.approx(expect, rel=1e-12)


def test_spectral_efficiency_rank_one_matched():
    rng = np.random.default_rng(6)
    u = crandn(rng, 3, 1)
    u /= np.linalg.norm(u)
    v = crandn(rng, 4, 1)
    v /= np.linalg.norm(v)
    h = 2.0 * u @ v.conj().T
    fc = FrequencyChannel(per_subcarrier=h[None])
    link = LinkParams(rho=1.5, noise_var=0.7, n_streams=1)
    one = np.ones((1, 1), dtype=complex)
    bf = HybridBeamformer(f_rf=v, w_rf=u, f_bb=one[None], w_bb=one[None])
    expect = np.log2(1.0 + 1.5 * 4.0 / 0.7)
    assert spectral_efficiency(fc, bf, link) == pytest.approx(expect, rel=1e-12)


def test_spectral_efficiency_column_phase_invariance():
    rng = np.random.default_rng(7)
    bf = random_feasible_bf(rng, 4, 3, 3, 2, 2)
    fc = FrequencyChannel(per_subcarrier=crandn(rng, 2, 3, 4))
    link = LinkParams(rho=1.0, noise_var=1.0, n_streams=2)
    base = spectral_efficiency(fc, bf, link)
    # rotate baseband columns (i.e. effective beamformer columns)
    for attr in ("f_bb", "w_bb"):
        rot = np.exp(2j * np.pi * rng.random((1, 1, 2)))
        kwargs = {"f_rf": bf.f_rf, "w_rf": bf.w_rf, "f_bb": bf.f_bb, "w_bb": bf.w_bb}
        kwargs[attr] = kwargs[attr] * rot
        assert spectral_efficiency(fc, HybridBeamformer(**kwargs), link) == pytest.approx(
            base, abs=1e-9
        )
    # rotate an analog column with the compensating baseband row
    theta = np.exp(2j * np.pi * rng.random())
    f_rf = bf.f_rf.copy()
    f_rf[:, 0] *= theta
    f_bb = bf.f_bb.copy()
    f_bb[:, 0, :] /= theta
    bf2 = HybridBeamformer(f_rf=f_rf, w_rf=bf.w_rf, f_bb=f_bb, w_bb=bf.w_bb)
    assert spectral_efficiency(fc, bf2, link) == pytest.approx(base, abs=1e-9)


def test_digital_spectral_efficiency_examples():
    fc = FrequencyChannel(per_subcarrier=np.array([[[2.0 + 0.0j]]]))
    link = LinkParams(rho=1.0, noise_var=1.0, n_streams=1)
    assert digital_spectral_efficiency(fc, link) == pytest.approx(np.log2(5.0), abs=1e-9)
    zero = FrequencyChannel(per_subcarrier=np.zeros((2, 2, 2), dtype=complex))
    assert digital_spectral_efficiency(zero, link) == 0.0


def test_digital_equals_hybrid_on_svd_beamformers():
    rng = np.random.default_rng(8)
    h = crandn(rng, 3, 4)
    fc = FrequencyChannel(per_subcarrier=h[None])
    link = LinkParams(rho=1.3, noise_var=0.6, n_streams=2)
    u, s, vh = np.linalg.svd(h)
    bf = HybridBeamformer(
        f_rf=vh.conj().T[:, :2],
        w_rf=u[:, :2],
        f_bb=np.eye(2, dtype=complex)[None],
        w_bb=np.eye(2, dtype=complex)[None],
    )
    assert spectral_efficiency(fc, bf, link) == pytest.approx(
        digital_spectral_efficiency(fc, link), abs=1e-9
    )


def test_digital_dominates_feasible_hybrids():
    rng = np.random.default_rng(9)
    link = LinkParams(rho=1.0, noise_var=1.0, n_streams=2)
    for _ in range(20):
        fc = FrequencyChannel(per_subcarrier=crandn(rng, 2, 4, 5))
        bf = random_feasible_bf(rng, 5, 4, 3, 2, 2)
        assert digital_spectral_efficiency(fc, link) >= spectral_efficiency(fc, bf, link) - 1e-9


# --- power normalization and output covariance -------------------------------


def test_normalize_power_idempotent_and_scale_invariant():
    rng = np.random.default_rng(10)
    f_rf = np.exp(2j * np.pi * rng.random((4, 3)))
    f_bb = normalize_power(f_rf, crandn(rng, 2, 3, 2))
    again = normalize_power(f_rf, f_bb)
    assert np.max(np.abs(again - f_bb)) < 1e-12
    rescaled = normalize_power(f_rf, 3.0 * f_bb)
    assert np.max(np.abs(rescaled - f_bb)) < 1e-12


def test_normalize_power_constraint_holds():
    rng = np.random.default_rng(11)
    f_rf = np.exp(2j * np.pi * rng.random((5, 2)))
    f_bb = normalize_power(f_rf, crandn(rng, 3, 2, 2))
    total = np.sum(np.abs(f_rf @ f_bb) ** 2)
    assert total == pytest.approx(3 * 2, rel=1e-12)


def test_normalize_power_rejects_zero():
    with pytest.raises(ValueError):
        normalize_power(np.ones((2, 1)), np.zeros((1, 1, 1)))


def test_output_covariance_examples():
    link = LinkParams(rho=2.0, noise_var=0.4, n_streams=1)
    zero = output_covariance(np.zeros((2, 3)), np.ones((3, 1)), np.ones((1, 1)), link)
    assert np.allclose(zero, 0.4 * np.eye(2))
    scalar = output_covariance(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)), link)
    assert scalar[0, 0] == pytest.approx(2.0 + 0.4)


def test_output_covariance_hermitian_and_bounded_below():
    rng = np.random.default_rng(12)
    link = LinkParams(rho=1.0, noise_var=0.25, n_streams=1)
    for _ in range(10):
        lam = output_covariance(crandn(rng, 2, 3), crandn(rng, 3, 2), crandn(rng, 2, 1), link)
        assert np.linalg.norm(lam - lam.conj().T) < 1e-12 * np.linalg.norm(lam)
        assert eigs_hermitian_2x2(lam)[0] >= link.noise_var - 1e-9


def test_hybrid_beamformer_validate():
    rng = np.random.default_rng(13)
    bf = random_feasible_bf(rng, 4, 3, 2, 2, 2)
    bf.validate()
    bad = HybridBeamformer(
        f_rf=0.5 * bf.f_rf, w_rf=bf.w_rf, f_bb=bf.f_bb, w_bb=bf.w_bb
    )
    with pytest.raises(ValueError):
        bad.validate()
