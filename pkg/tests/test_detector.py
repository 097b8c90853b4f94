import numpy as np
import pytest
from hypothesis import given, strategies as st

from airsketch.bounds import BoundInputs
from airsketch.channel import ReceiveBeamformer, ReceivedSymbol, aircomp_round, pinned_beamformer
from airsketch.detector import (InsufficientSketches, WhiteningContext, accumulate, detect,
                                ml_objective, ml_subspace, right_covariance,
                                right_covariance_general, whiten)
from airsketch.sketch import slot_sketches
from airsketch.tensor import projector, synth_unfolding, partition_columns


def test_accumulate_shapes_and_order(gen):
    Ys = [gen.standard_normal((100, 2)) for _ in range(3)]
    np.testing.assert_array_equal(accumulate(Ys[:1]), Ys[0])
    out = accumulate(Ys)
    assert out.shape == (100, 6)
    perm = [2, 0, 1]
    naive = np.zeros((100, 6))
    for pos, i in enumerate(perm):
        naive[:, 2 * pos:2 * pos + 2] = Ys[i]
    np.testing.assert_array_equal(accumulate([Ys[i] for i in perm]), naive)
    with pytest.raises(ValueError):
        accumulate([])
    with pytest.raises(ValueError):
        accumulate([np.zeros((3, 2)), np.zeros((3, 1))])


def test_accumulate_reads_symbols(gen):
    Y = gen.standard_normal((4, 2))
    np.testing.assert_array_equal(accumulate([ReceivedSymbol(0, Y, 1.0)]), Y)


def test_right_covariance_trivial_cases():
    ctx = WhiteningContext(0.0, 5.0, (0.1, 3.0, 7.0), 2, 10)
    np.testing.assert_array_equal(right_covariance(ctx), np.ones(6))
    ctx = WhiteningContext(0.4, 5.0, (2.0, 2.0), 3, 10)
    np.testing.assert_allclose(right_covariance(ctx), np.ones(6), rtol=1e-15)


def test_right_covariance_hand_computed():
    # I sigma2 / 2 = 1 = Tr(X^T X)
    ctx = WhiteningContext(0.5, 1.0, (1.0, 3.0), 2, 4)
    np.testing.assert_allclose(right_covariance(ctx), [2 / 3, 2 / 3, 4 / 3, 4 / 3], rtol=1e-15)
    np.testing.assert_allclose(right_covariance(ctx, (1,)), [1.0, 1.0], rtol=1e-15)


def test_general_form_agrees_with_diagonal(gen):
    etas = (0.3, 1.7, 0.9)
    U = np.linalg.qr(gen.standard_normal((16, 2)) + 1j * gen.standard_normal((16, 2)))[0].conj().T
    As = [np.sqrt(e) * U for e in etas]
    D = right_covariance_general(4.0, 0.2, 50, As)
    ctx = WhiteningContext(0.2, 4.0, etas, 2, 50)
    np.testing.assert_allclose(D, np.diag(right_covariance(ctx)), atol=1e-12)


def test_whiten_scalings(gen):
    Y = gen.standard_normal((5, 4))
    np.testing.assert_array_equal(whiten(Y, np.ones(4)).Phi, Y)
    np.testing.assert_allclose(whiten(Y, 4 * np.eye(4)).Phi, Y / 2, atol=1e-15)
    np.testing.assert_allclose(whiten(Y, np.full(4, 4.0)).Phi, Y / 2, atol=1e-15)
    with pytest.raises(ValueError):
        whiten(Y, -np.eye(4))
    with pytest.raises(ValueError):
        whiten(Y, np.ones(3))


def test_whitened_columns_are_white():
    I, J, M, sigma2 = 5, 8, 2, 1.0
    X = np.random.default_rng(0).standard_normal((I, J)) * 0.3
    gt = float(np.sum(X * X))
    etas = (0.5, 4.0)
    U_A = np.eye(M, 4, dtype=complex)
    bfs = [ReceiveBeamformer(l, e, U_A) for l, e in enumerate(etas)]
    ctx = WhiteningContext(sigma2, gt, etas, M, I)
    D = right_covariance(ctx)
    gen = np.random.default_rng(1)
    acc = np.zeros((4, 4))
    n = 10_000
    for _ in range(n):
        Ys = [aircomp_round([X @ gen.standard_normal((J, M))], None, bf, sigma2, gen).Y for bf in bfs]
        Phi = whiten(accumulate(Ys), D).Phi
        acc += Phi.T @ Phi
    acc /= n
    target = np.trace(acc) / 4 * np.eye(4)
    assert np.linalg.norm(acc - target) / np.linalg.norm(target) < 0.05


def test_feasibility_rule():
    gen = np.random.default_rng(3)
    Phi6 = gen.standard_normal((20, 12))
    assert ml_subspace(Phi6, 12).U.shape == (20, 12)
    with pytest.raises(InsufficientSketches):
        ml_subspace(gen.standard_normal((20, 10)), 12)
    ctx = WhiteningContext(0.0, 1.0, (1.0,) * 5, 2, 20)
    with pytest.raises(InsufficientSketches):
        detect([gen.standard_normal((20, 2))] * 5, ctx, 12)


def test_exact_recovery_for_rank_r_data():
    # when rank(X) = r any r-column sketch of full rank spans col(X)
    gen = np.random.default_rng(4)
    L = gen.standard_normal((30, 4)) @ gen.standard_normal((4, 50))
    part = partition_columns(L, 5, 0)
    syms = [sum(s.entries for s in slot_sketches(0, t, part.blocks, 2)) for t in range(2)]
    ctx = WhiteningContext(0.0, part.global_trace, (1.0, 1.0), 2, 30)
    est = detect(syms, ctx, 4)
    Ux = np.linalg.svd(L)[0][:, :4]
    assert np.linalg.norm(projector(est.U) - projector(Ux)) <= 1e-8


def test_estimate_properties_and_statelessness():
    X, truth = synth_unfolding(20, 60, 3, 2, seed=1)
    part = partition_columns(X, 4, 1)
    bfs = [pinned_beamformer(t, 2, 16, 0.01) for t in range(6)]
    syms = [aircomp_round(slot_sketches(2, t, part.blocks, 2), None, bf, 0.01, 2)
            for t, bf in enumerate(bfs)]
    ctx = WhiteningContext(0.01, part.global_trace, [b.eta for b in bfs], 2, 20)
    a = detect(syms, ctx, 3)
    b = detect(syms, ctx, 3)
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_allclose(a.U.T @ a.U, np.eye(3), atol=1e-10)
    assert np.all(np.diff(a.eigenvalues) <= 0)
    short = detect(syms[:2], WhiteningContext(0.01, part.global_trace, ctx.etas[:2], 2, 20), 3)
    again = detect(syms, ctx, 3)
    np.testing.assert_array_equal(again.U, a.U)
    assert short.slot == 2 and a.slot == 6


def test_lower_bound_attained(gen):
    Phi = gen.standard_normal((8, 10))
    s = np.concatenate([np.ones(2), 1 / np.arange(2, 8) ** 2])
    inputs = BoundInputs(s, 2, 2, 0.1, (0.5,) * 5)
    est = ml_subspace(Phi, 2)
    lam = inputs.lam
    lhs = float(np.sum(est.eigenvalues / lam))
    assert ml_objective(Phi, est.basis, lam) == pytest.approx(lhs, rel=1e-8)


@given(st.integers(0, 10_000))
def test_objective_never_beats_estimate_under_permutation(seed):
    g = np.random.default_rng(seed)
    Phi = g.standard_normal((6, 8))
    lam = np.sort(g.uniform(0.1, 2.0, 6))[::-1]
    est = ml_subspace(Phi, 2)
    best = ml_objective(Phi, est.basis, lam)
    perm = g.permutation(6)
    assert best <= ml_objective(Phi, est.basis[:, perm], lam) + 1e-10
