import numpy as np
import pytest

from conftest import assert_close_grad, num_grad
from motioncodes.errors import ConfigurationError, NumericError, StructuralError
from motioncodes.rvq import (
    Codebook,
    RvqStack,
    commitment_grad_r0,
    commitment_loss,
    ema_update,
    init_book_from_batch,
    nearest_code,
    quantize_one,
    reset_dead_codes,
    residual_encode,
    route_grad_to_codes,
    sample_active_layers,
    soft_assignment,
)


def _random_stack(rng, layers=3, size=16, dim=8):
    stack = RvqStack.create(layers, size, dim)
    for book in stack.books:
        init_book_from_batch(book, rng.normal(size=(200, dim)), rng)
    return stack


def _oracle_nearest(codes, q):
    # exhaustive scan, strict < keeps the lowest index on ties
    best, best_d = 0, None
    for j in range(codes.shape[0]):
        d = float(np.sum((q - codes[j]) ** 2))
        if best_d is None or d < best_d:
            best, best_d = j, d
    return best


def test_nearest_code_matches_exhaustive_oracle_10k():
    rng = np.random.default_rng(101)
    book = Codebook.create(16, 8)
    init_book_from_batch(book, rng.normal(size=(300, 8)), rng)
    queries = rng.normal(size=(10_000, 8))
    got = nearest_code(book, queries)
    for i in range(queries.shape[0]):
        assert got[i] == _oracle_nearest(book.codes, queries[i])


def test_nearest_code_tie_breaks_to_lowest_index():
    book = Codebook.create(6, 2)
    book.codes[:] = [[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [7.0, -3.0], [-1.0, 0.0], [9.0, 9.0]]
    # query equidistant from codes 1 and 4 (and farther from the rest except 0)
    idx = nearest_code(book, np.array([[0.0, 2.0]]))
    # codes 1 and 4 both at distance sqrt(5); code 0 at distance 2 wins outright
    assert idx[0] == 0
    idx = nearest_code(book, np.array([[5.0, 6.0]]))
    assert idx[0] == 2
    book.codes[0] = [50.0, 50.0]  # push the zero slot away to expose the tie
    idx = nearest_code(book, np.array([[0.0, 2.0]]))
    assert idx[0] == 1


def test_quantize_one_agrees_with_batch_path():
    rng = np.random.default_rng(7)
    book = Codebook.create(12, 4)
    init_book_from_batch(book, rng.normal(size=(100, 4)), rng)
    for _ in range(50):
        q = rng.normal(size=4)
        idx, code = quantize_one(book, q)
        assert idx == nearest_code(book, q[None, :])[0]
        assert np.array_equal(code, book.codes[idx])


def test_residual_chain_telescopes():
    rng = np.random.default_rng(3)
    stack = _random_stack(rng, layers=4)
    r0 = rng.normal(size=(5, 6, 8))  # [B, K, d]
    trace = residual_encode(stack, r0, 4)
    for i in range(4):
        assert np.array_equal(trace.r[i + 1], trace.r[i] - trace.z[i])
    total = trace.code_sum(range(4))
    assert np.max(np.abs(r0 - total - trace.r[4])) < 1e-12


def test_final_remainder_norm_monotone():
    # the pinned zero code makes each layer at worst a no-op
    rng = np.random.default_rng(13)
    stack = _random_stack(rng, layers=5, size=8, dim=6)
    r0 = rng.normal(size=(40, 6)) * 3.0
    trace = residual_encode(stack, r0, 5)
    norms = np.linalg.norm(trace.r, axis=-1)  # [n+1, 40]
    assert np.all(norms[1:] <= norms[:-1] + 1e-12)


def test_residual_encode_validation():
    rng = np.random.default_rng(1)
    stack = _random_stack(rng)
    r0 = rng.normal(size=(2, 4, 8))
    with pytest.raises(ConfigurationError):
        residual_encode(stack, r0, 0)
    with pytest.raises(ConfigurationError):
        residual_encode(stack, r0, 4)
    with pytest.raises(StructuralError):
        residual_encode(stack, rng.normal(size=(2, 4, 5)), 2)
    bad = r0.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(NumericError):
        residual_encode(stack, bad, 2)
    with pytest.raises(ConfigurationError):
        residual_encode(stack, r0, 2).code_sum([2])


def test_sample_active_layers_uniform():
    rng = np.random.default_rng(55)
    draws = np.array([sample_active_layers(4, rng) for _ in range(80_000)])
    assert draws.min() == 1 and draws.max() == 4
    counts = np.bincount(draws, minlength=5)[1:]
    expected = 20_000.0
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 16.27  # df=3, p=0.001


def test_ema_hand_case_exact():
    # gamma=0.9, code state N=1, mu=(1,1); one vector (3,3) assigned
    stack = RvqStack.create(1, 3, 2, gamma=0.9)
    book = stack.books[0]
    book.codes[1] = [1.0, 1.0]
    book.ema_count[1] = 1.0
    book.ema_mean[1] = [1.0, 1.0]
    book.initialized = True
    r0 = np.array([[[3.0, 3.0]]])  # one slot, lands on code 1
    trace = residual_encode(stack, r0, 1)
    assert trace.idx[0].reshape(-1)[0] == 1
    ema_update(stack, trace)
    assert book.ema_count[1] == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(book.ema_mean[1], [1.2, 1.2], atol=1e-15)
    assert np.allclose(book.codes[1], [1.2, 1.2], atol=1e-15)


def test_ema_gamma_zero_gives_batch_mean():
    stack = RvqStack.create(1, 3, 2, gamma=0.0)
    book = stack.books[0]
    book.codes[1] = [1.0, 0.0]
    book.codes[2] = [100.0, 100.0]
    book.initialized = True
    r0 = np.array([[[1.1, 0.2], [0.7, -0.2], [1.2, 0.0]]])
    trace = residual_encode(stack, r0, 1)
    assert np.all(trace.idx[0] == 1)
    ema_update(stack, trace)
    assert np.allclose(book.codes[1], [1.0, 0.0], atol=1e-15)  # mean of the three


def test_ema_invariants_and_unassigned_codes():
    rng = np.random.default_rng(17)
    stack = _random_stack(rng, layers=2, size=10, dim=4)
    before = [b.codes.copy() for b in stack.books]
    r0 = rng.normal(size=(8, 3, 4))
    trace = residual_encode(stack, r0, 2)
    ema_update(stack, trace)
    for layer, book in enumerate(stack.books):
        hit = np.bincount(trace.idx[layer].reshape(-1), minlength=book.size) > 0
        # c = mu / N wherever N > 0
        recon = book.ema_mean / book.ema_count[:, None]
        assert np.max(np.abs(recon - book.codes)) < 1e-12
        # unassigned codes unchanged bit-exactly
        for j in np.nonzero(~hit)[0]:
            assert np.array_equal(book.codes[j], before[layer][j])
        # pinned zero code never moves
        assert np.array_equal(book.codes[0], np.zeros(4))
        assert book.window_batches == 1
        assert int(book.usage.sum()) == 8 * 3


def test_ema_skips_inactive_layers():
    rng = np.random.default_rng(23)
    stack = _random_stack(rng, layers=3, size=8, dim=4)
    frozen = stack.books[2].codes.copy()
    trace = residual_encode(stack, rng.normal(size=(4, 2, 4)), 2)
    ema_update(stack, trace)
    assert np.array_equal(stack.books[2].codes, frozen)
    assert stack.books[2].window_batches == 0


def test_init_book_from_batch():
    rng = np.random.default_rng(2)
    book = Codebook.create(6, 3)
    residuals = rng.normal(size=(50, 3))
    init_book_from_batch(book, residuals, np.random.default_rng(77))
    assert np.array_equal(book.codes[0], np.zeros(3))
    rows = {tuple(r) for r in residuals}
    for j in range(1, 6):
        assert tuple(book.codes[j]) in rows
    assert book.initialized
    assert np.allclose(book.ema_mean, book.codes)
    assert np.all(book.ema_count == 1.0)

    redo = Codebook.create(6, 3)
    init_book_from_batch(redo, residuals, np.random.default_rng(77))
    assert np.array_equal(redo.codes, book.codes)


def test_reset_dead_codes():
    rng = np.random.default_rng(5)
    book = Codebook.create(5, 2)
    init_book_from_batch(book, rng.normal(size=(30, 2)), rng)
    book.usage[:] = [0, 9, 0, 4, 0]
    book.window_batches = 64
    live1, live3 = book.codes[1].copy(), book.codes[3].copy()
    batch = rng.normal(size=(20, 2))
    n = reset_dead_codes(book, batch, np.random.default_rng(9))
    assert n == 2  # codes 2 and 4; code 0 is pinned
    assert np.array_equal(book.codes[0], np.zeros(2))
    assert np.array_equal(book.codes[1], live1)
    assert np.array_equal(book.codes[3], live3)
    rows = {tuple(r) for r in batch}
    assert tuple(book.codes[2]) in rows
    assert tuple(book.codes[4]) in rows
    assert book.ema_count[2] == 1.0
    assert np.array_equal(book.ema_mean[2], book.codes[2])
    assert np.all(book.usage == 0)
    assert book.window_batches == 0


def test_commitment_hand_case():
    stack = RvqStack.create(1, 2, 2)  # uninitialized book: all codes zero
    trace = residual_encode(stack, np.array([[[1.0, 0.0]]]), 1)
    assert commitment_loss(trace) == 1.0


def test_commitment_grad_matches_frozen_finite_differences():
    rng = np.random.default_rng(19)
    stack = _random_stack(rng, layers=3, size=8, dim=4)
    r0 = rng.normal(size=(2, 3, 4))
    trace = residual_encode(stack, r0, 3)
    z = trace.z.copy()  # frozen codes
    csum = np.cumsum(z, axis=0)

    def frozen_loss(x):
        terms = x[None] - csum  # r[i] - z[i] with assignments frozen
        return float(np.mean(np.sum(terms * terms, axis=-1)))

    assert frozen_loss(r0) == pytest.approx(commitment_loss(trace), abs=1e-12)
    analytic = commitment_grad_r0(trace)
    assert_close_grad(analytic, num_grad(frozen_loss, r0))


def test_soft_assignment_properties():
    rng = np.random.default_rng(29)
    book = Codebook.create(8, 4)
    init_book_from_batch(book, rng.normal(size=(60, 4)), rng)
    q = rng.normal(size=(30, 4))
    probs = soft_assignment(book, q, tau=1.0)
    assert probs.shape == (30, 8)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.array_equal(np.argmax(probs, axis=1), nearest_code(book, q))
    sharp = soft_assignment(book, q, tau=1e-4)
    assert np.all(sharp.max(axis=1) > 1.0 - 1e-9)
    with pytest.raises(ConfigurationError):
        soft_assignment(book, q, tau=0.0)


def test_route_grad_to_codes_accumulates():
    grad = np.zeros((4, 2))
    idx = np.array([1, 1, 3])
    up = np.array([[1.0, 2.0], [0.5, -1.0], [2.0, 2.0]])
    route_grad_to_codes(grad, idx, up)
    assert np.allclose(grad[1], [1.5, 1.0])
    assert np.allclose(grad[3], [2.0, 2.0])
    assert np.all(grad[[0, 2]] == 0.0)


def test_stack_validation():
    with pytest.raises(ConfigurationError):
        RvqStack.create(0, 4, 2)
    with pytest.raises(ConfigurationError):
        RvqStack.create(2, 1, 2)
    with pytest.raises(ConfigurationError):
        RvqStack.create(2, 4, 2, gamma=1.0)
    with pytest.raises(ConfigurationError):
        RvqStack.create(2, 4, 2, content_books=3)
