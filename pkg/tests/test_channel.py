import numpy as np
import pytest

from airsketch.channel import (ChannelRealization, IllConditionedChannel, ReceiveBeamformer,
                               aircomp_round, denoising_factor, draw_slot, pinned_beamformer,
                               receive_unitary, sample_channel, transmit_powers, zf_beamformer,
                               zf_beamformers)
from airsketch.sketch import slot_sketches, stacked_drm


def chans(seed, K, N_r=16, N_t=4, t=0):
    return [sample_channel(seed, t, k, N_r, N_t) for k in range(K)]


def test_channel_determinism_and_shape():
    a = sample_channel(1, 2, 3, 16, 4)
    b = sample_channel(1, 2, 3, 16, 4)
    assert a.H.shape == (16, 4)
    np.testing.assert_array_equal(a.H, b.H)
    assert a.shadow_beta == b.shadow_beta
    assert not np.array_equal(a.H, sample_channel(1, 2, 4, 16, 4).H)
    with pytest.raises(ValueError):
        sample_channel(0, 0, 0, 2, 4)


def test_shadowing_and_power_moments():
    draws = [sample_channel(5, t, 0, 2, 1) for t in range(100_000)]
    beta = np.array([d.shadow_beta for d in draws])
    mean = 1.2 * 0.83
    se = np.sqrt(1.2 * 0.83 ** 2 / beta.size)
    assert abs(beta.mean() - mean) < 3 * se
    power = np.array([np.mean(np.abs(d.H) ** 2) for d in draws])
    # E|H_ij|^2 = E[beta]; variance per draw is E[beta^2] * ... so use a loose 5 sigma
    assert abs(power.mean() - mean) < 5 * power.std() / np.sqrt(power.size)


def test_receive_unitary_single_device_full():
    c = chans(0, 1)
    U_A = receive_unitary(c, 4)
    Q, _ = np.linalg.qr(c[0].H)
    np.testing.assert_allclose(U_A.conj().T @ U_A, Q @ Q.conj().T, atol=1e-8)


def test_receive_unitary_single_device_rank_one():
    # lam * U U^H has a flat spectrum on col(H): any unit vector inside it is a top eigenvector
    c = chans(1, 1)
    u = receive_unitary(c, 1)[0].conj()  # rows hold v^H
    Q, _ = np.linalg.qr(c[0].H)
    assert np.linalg.norm(u) == pytest.approx(1.0)
    assert np.linalg.norm(Q @ (Q.conj().T @ u)) == pytest.approx(1.0, abs=1e-10)


def test_receive_unitary_full_eig_oracle():
    c = chans(11, 3)
    avg = np.zeros((16, 16), dtype=complex)
    for ch in c:
        w, V = np.linalg.eig(ch.H @ ch.H.conj().T)
        order = np.argsort(-w.real)
        top, _ = np.linalg.qr(V[:, order[:4]])
        avg += w.real[order[3]] * top @ top.conj().T / 3
    w, V = np.linalg.eig(avg)
    v = V[:, np.argmax(w.real)]
    u = receive_unitary(c, 1)[0].conj()  # rows hold v^H
    assert abs(np.vdot(u, v)) == pytest.approx(np.linalg.norm(v), abs=1e-8)


def test_receive_unitary_default_array_shape():
    U_A = receive_unitary(chans(2, 20), 2)
    assert U_A.shape == (2, 16)
    np.testing.assert_allclose(U_A @ U_A.conj().T, np.eye(2), atol=1e-10)
    with pytest.raises(ValueError):
        receive_unitary(chans(2, 3), 5)


def test_beamformer_trace_identity():
    bf = ReceiveBeamformer(0, 0.37, receive_unitary(chans(3, 5), 2))
    assert np.real(np.trace(bf.A.conj().T @ bf.A)) == pytest.approx(0.37 * 2, abs=1e-10)


def test_denoising_identity_effective_channel():
    M = 4
    H = np.eye(16, 4, dtype=complex)
    c = [ChannelRealization(0, 0, H, 1.0)]
    U_A = np.eye(M, 16, dtype=complex)
    I, P = 10, 1.5
    assert denoising_factor(U_A, c, [I * P], P, I) == pytest.approx(M)


def test_denoising_power_scaling():
    c = chans(4, 20)
    U_A = receive_unitary(c, 2)
    traces = np.linspace(1, 3, 20)
    e1 = denoising_factor(U_A, c, traces, 1.0, 100)
    e2 = denoising_factor(U_A, c, traces, 2.0, 100)
    assert e2 == pytest.approx(e1 / 2, rel=1e-12)
    with pytest.raises(ValueError):
        denoising_factor(U_A, c, traces, 0.0, 100)


def test_power_audit():
    c = chans(6, 20)
    traces = np.random.default_rng(0).uniform(1, 5, 20)
    U_A = receive_unitary(c, 2)
    I, P = 100, 1.0
    eta = denoising_factor(U_A, c, traces, P, I)
    A = np.sqrt(eta) * U_A
    power = transmit_powers(A, c, traces)
    assert np.all(power <= I * P * (1 + 1e-8))
    assert power.max() == pytest.approx(I * P, rel=1e-8)
    # closed form matches E||B S^T||_F^2 with S = X_k Omega, i.e. Tr(B^H B) Tr(X_k^T X_k)
    B = zf_beamformers(A, c)
    direct = np.real(np.einsum("kij,kij->k", B.conj(), B)) * traces
    np.testing.assert_allclose(power, direct, rtol=1e-10)


def test_zf_inverts_channel():
    c = chans(7, 3)
    A = receive_unitary(c, 2)
    for ch in c:
        B = zf_beamformer(A, ch.H)
        assert B.shape == (4, 2)
        assert np.linalg.norm(A @ ch.H @ B - np.eye(2)) <= 1e-8


def test_zf_identity_channel():
    A = np.eye(2, 16, dtype=complex)
    H = np.eye(16, 4, dtype=complex)
    np.testing.assert_allclose(zf_beamformer(A, H), np.eye(4, 2), atol=1e-14)


def test_zf_square_case():
    c = chans(8, 4)
    A = receive_unitary(c, 4)
    B = zf_beamformers(A, c)
    assert B.shape == (4, 4, 4)
    for ch, b in zip(c, B):
        assert np.linalg.norm(A @ ch.H @ b - np.eye(4)) <= 1e-8


def test_zf_rejects_singular():
    A = np.eye(2, 16, dtype=complex)
    H = np.zeros((16, 4), dtype=complex)
    H[0, 0] = 1.0
    with pytest.raises(IllConditionedChannel):
        zf_beamformer(A, H)


def test_rank_deficient_channel_detected():
    H = np.zeros((16, 4), dtype=complex)
    H[:3, :3] = np.eye(3)
    with pytest.raises(IllConditionedChannel):
        receive_unitary([ChannelRealization(0, 0, H, 1.0)], 2)


def test_draw_slot_deterministic():
    traces = np.ones(20)
    c1, bf1, n1 = draw_slot(9, 3, 20, 16, 4, 2, traces, 1.0, 100)
    c2, bf2, n2 = draw_slot(9, 3, 20, 16, 4, 2, traces, 1.0, 100)
    assert bf1.eta == bf2.eta and n1 == n2 == 0
    np.testing.assert_array_equal(bf1.U_A, bf2.U_A)


def test_noiseless_round_is_global_sketch(gen):
    blocks = [gen.standard_normal((8, w)) for w in (5, 6, 4)]
    X = np.hstack(blocks)
    traces = [np.sum(b * b) for b in blocks]
    c, bf, _ = draw_slot(1, 2, 3, 16, 4, 2, traces, 1.0, 8)
    rx = aircomp_round(slot_sketches(1, 2, blocks, 2), c, bf, 0.0, 0)
    np.testing.assert_allclose(rx.Y, X @ stacked_drm(1, 2, [5, 6, 4], 2), atol=1e-10)
    assert rx.eta == bf.eta and rx.slot == 2


def test_noise_covariance_matches_closed_form():
    # X = 0: E[Y Y^T] = (1/2) sigma2 Tr(A^H A) I_I
    I, M, sigma2 = 5, 2, 0.3
    c = chans(10, 2)
    U_A = receive_unitary(c, M)
    bf = ReceiveBeamformer(0, 2.5, U_A)
    zeros = [np.zeros((I, M))] * 2
    gen = np.random.default_rng(1)
    acc = np.zeros((I, I))
    n = 10_000
    for _ in range(n):
        Y = aircomp_round(zeros, c, bf, sigma2, gen).Y
        acc += Y @ Y.T
    expected = 0.5 * sigma2 * 2.5 * M * np.eye(I)
    assert np.linalg.norm(acc / n - expected) / np.linalg.norm(expected) < 0.05


def test_round_validation(gen):
    bf = pinned_beamformer(0, 2, 16, 0.1)
    with pytest.raises(ValueError):
        aircomp_round([np.zeros((4, 3))], None, bf, 0.0, 0)
    with pytest.raises(ValueError):
        pinned_beamformer(0, 2, 16, 0.0)
    assert pinned_beamformer(0, 2, 16, 0.01).eta == pytest.approx(1.0)
