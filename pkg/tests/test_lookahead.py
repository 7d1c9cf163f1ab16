import numpy as np
import pytest

from ntkal import data, kernel, linalg, lookahead, net
from ntkal.errors import ContractError, DegenerateCandidateError


def _problem(l_size=15, c=2, dim=3, seed=0, width=32):
    rng = np.random.default_rng(seed)
    params = net.init(net.MlpConfig((dim, width, c), seed=seed))
    x = rng.standard_normal((l_size, dim))
    y = data.one_hot_encode(rng.integers(0, c, l_size), c)
    return params, x, y, kernel.build_state_xy(params, x, y)


def _dense_predict(params, x, y, q, kernel_fn=None):
    """Brute-force converged linearized prediction via a dense inverse."""
    if kernel_fn is None:
        gram = kernel.empirical_ntk(params, x, x)
        cross = kernel.empirical_ntk(params, q, x)
    else:
        gram = kernel_fn(params, x, x)
        cross = kernel_fn(params, q, x)
    residual = y - net.forward(params, x)
    return net.forward(params, q) + cross @ np.linalg.inv(gram) @ residual


class TestPredictLin:
    def test_interpolates_labeled_points(self):
        params, x, y, state = _problem()
        assert state.factor.jitter_applied <= 1e-8 * np.mean(np.diag(state.gram))
        pred = lookahead.predict_lin(state, x)
        assert np.max(np.abs(pred - y)) < 1e-6

    def test_zero_residual_returns_raw_outputs(self):
        params, x, _, _ = _problem()
        y = np.atleast_2d(net.forward(params, x))  # residual becomes zero
        state = kernel.build_state_xy(params, x, y)
        q = np.random.default_rng(1).standard_normal((4, 3))
        assert np.array_equal(
            lookahead.predict_lin(state, q), np.atleast_2d(net.forward(params, q))
        )

    def test_matches_dense_inverse(self):
        params, x, y, state = _problem(l_size=15, seed=3)
        q = np.random.default_rng(4).standard_normal((6, 3))
        fast = lookahead.predict_lin(state, q)
        slow = _dense_predict(params, x, y, q)
        err = np.max(np.abs(fast - slow)) / np.max(np.abs(slow))
        assert err < 1e-8


class TestPredictLinAtTime:
    def test_time_zero_is_raw_network(self):
        params, x, y, state = _problem(seed=5)
        q = np.random.default_rng(6).standard_normal((4, 3))
        out = lookahead.predict_lin_at_time(state, q, 0.0)
        assert np.array_equal(out, np.atleast_2d(net.forward(params, q)))

    def test_long_time_matches_converged(self):
        params, x, y, state = _problem(seed=7)
        evals, _ = linalg.sym_eig(state.gram)
        t = 1e6 / max(evals[-1], 1e-12)
        late = lookahead.predict_lin_at_time(state, x, t)
        conv = lookahead.predict_lin(state, x)
        err = np.max(np.abs(late - conv)) / max(np.max(np.abs(conv)), 1e-12)
        assert err < 1e-6

    def test_training_loss_non_increasing(self):
        params, x, y, state = _problem(seed=8)
        losses = []
        for t in (0.0, 1.0, 10.0, 100.0):
            pred = lookahead.predict_lin_at_time(state, x, t)
            losses.append(float(np.sum((y - pred) ** 2)))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_negative_time_rejected(self):
        _, _, _, state = _problem()
        with pytest.raises(ContractError):
            lookahead.predict_lin_at_time(state, np.zeros((1, 3)), -1.0)


def _hand_kernel_state():
    """State over one labeled point with a hand-set kernel.

    Kernel values are looked up by the first input coordinate:
    labeled point a=0 with k(a,a)=2; candidate b=1 with k(a,b)=1,
    k(b,b)=3.
    """
    table = {(0, 0): 2.0, (0, 1): 1.0, (1, 0): 1.0, (1, 1): 3.0}

    def kernel_fn(params, rows_a, rows_b):
        out = np.zeros((len(rows_a), len(rows_b)))
        for i, ra in enumerate(np.atleast_2d(rows_a)):
            for j, rb in enumerate(np.atleast_2d(rows_b)):
                out[i, j] = table[(int(ra[0]), int(rb[0]))]
        return out

    cfg = net.MlpConfig((1, 1), nonlinearity="identity", beta=0.0)
    params = net.params_from_flat(cfg, np.zeros(cfg.param_count))
    state = kernel.build_state_xy(
        params, np.array([[0.0]]), np.array([[1.0]]), kernel_fn=kernel_fn
    )
    return state


class TestPrepareCandidate:
    def test_hand_block_inverse(self):
        # 2x2 block inverse by hand: v = 1/2, u = 3 - 1*(1/2)*1 = 2.5,
        # cross-checked against a direct inversion oracle.
        state = _hand_kernel_state()
        ctx = lookahead.prepare_candidate(state, np.array([1.0]), np.array([1.0]))
        assert np.allclose(ctx.v, [0.5])
        assert abs(ctx.schur - 2.5) < 1e-12
        aug = np.array([[2.0, 1.0], [1.0, 3.0]])
        schur_oracle = 1.0 / np.linalg.inv(aug)[1, 1]
        assert abs(ctx.schur - schur_oracle) < 1e-12
        assert not ctx.degenerate

    def test_duplicate_labeled_point_degenerate(self):
        params, x, y, state = _problem(seed=9)
        ctx = lookahead.prepare_candidate(state, x[0], y[0])
        assert ctx.degenerate

    def test_orthogonal_candidate(self):
        # Zero cross kernel leaves u equal to the self kernel and v zero.
        table = {(0, 0): 2.0, (0, 1): 0.0, (1, 0): 0.0, (1, 1): 3.0}

        def kernel_fn(params, rows_a, rows_b):
            return np.array(
                [
                    [table[(int(ra[0]), int(rb[0]))] for rb in np.atleast_2d(rows_b)]
                    for ra in np.atleast_2d(rows_a)
                ]
            )

        cfg = net.MlpConfig((1, 1), nonlinearity="identity", beta=0.0)
        params = net.params_from_flat(cfg, np.zeros(cfg.param_count))
        state = kernel.build_state_xy(
            params, np.array([[0.0]]), np.array([[1.0]]), kernel_fn=kernel_fn
        )
        ctx = lookahead.prepare_candidate(state, np.array([1.0]), np.array([1.0]))
        assert np.allclose(ctx.v, [0.0])
        assert abs(ctx.schur - 3.0) < 1e-12

    def test_schur_identity(self):
        params, x, y, state = _problem(seed=10)
        xc = np.random.default_rng(11).standard_normal(3)
        ctx = lookahead.prepare_candidate(state, xc, y[0])
        direct = ctx.self_kernel - ctx.cross_to_labeled @ ctx.v
        assert abs(ctx.schur - direct) < 1e-10


class TestLookaheadPredict:
    def test_zero_residuals_no_change(self):
        params, x, _, _ = _problem(seed=12)
        y = np.atleast_2d(net.forward(params, x))
        state = kernel.build_state_xy(params, x, y)
        xc = np.random.default_rng(13).standard_normal(3)
        yc = net.forward(params, xc)  # candidate residual is zero too
        ctx = lookahead.prepare_candidate(state, xc, yc)
        q = np.random.default_rng(14).standard_normal((5, 3))
        pred = lookahead.lookahead_predict(state, ctx, q)
        assert np.array_equal(pred, lookahead.predict_lin(state, q))

    def test_matches_direct_augmented_solve(self):
        params, x, y, state = _problem(l_size=30, c=3, seed=15)
        rng = np.random.default_rng(16)
        q = rng.standard_normal((5, 3))
        for trial in range(5):
            xc = rng.standard_normal(3)
            yc = data.one_hot_encode([trial % 3], 3)[0]
            ctx = lookahead.prepare_candidate(state, xc, yc)
            fast = lookahead.lookahead_predict(state, ctx, q)
            slow = _dense_predict(
                params, np.vstack([x, xc]), np.vstack([y, yc]), q
            )
            err = np.max(np.abs(fast - slow)) / np.max(np.abs(slow))
            assert err < 1e-8

    def test_query_at_candidate_returns_its_label(self):
        params, x, y, state = _problem(seed=17)
        xc = np.random.default_rng(18).standard_normal(3)
        yc = np.array([0.0, 1.0])
        ctx = lookahead.prepare_candidate(state, xc, yc)
        pred = lookahead.lookahead_predict(state, ctx, xc[None, :])
        assert np.max(np.abs(pred[0] - yc)) < 1e-6

    def test_degenerate_raises(self):
        params, x, y, state = _problem(seed=19)
        ctx = lookahead.prepare_candidate(state, x[0], y[0])
        with pytest.raises(DegenerateCandidateError):
            lookahead.lookahead_predict(state, ctx, x)


class TestAugmentState:
    def test_preserves_interpolation(self):
        params, x, y, state = _problem(seed=20)
        xc = np.random.default_rng(21).standard_normal(3)
        new = lookahead.augment_state(state, xc, np.array([1.0, 0.0]))
        pred = lookahead.predict_lin(new, x)
        assert np.max(np.abs(pred - y)) < 1e-6

    def test_order_invariant(self):
        params, x, y, state = _problem(seed=22)
        rng = np.random.default_rng(23)
        p1, p2 = rng.standard_normal(3), rng.standard_normal(3)
        y1, y2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        q = rng.standard_normal((50, 3))
        ab = lookahead.augment_state(lookahead.augment_state(state, p1, y1), p2, y2)
        ba = lookahead.augment_state(lookahead.augment_state(state, p2, y2), p1, y1)
        pa, pb = lookahead.predict_lin(ab, q), lookahead.predict_lin(ba, q)
        assert np.max(np.abs(pa - pb)) / np.max(np.abs(pa)) < 1e-6

    def test_matches_cold_rebuild(self):
        params, x, y, state = _problem(seed=24)
        rng = np.random.default_rng(25)
        xc = rng.standard_normal(3)
        yc = np.array([0.0, 1.0])
        q = rng.standard_normal((8, 3))
        warm = lookahead.augment_state(state, xc, yc)
        cold = kernel.build_state_xy(params, np.vstack([x, xc]), np.vstack([y, yc]))
        pw = lookahead.predict_lin(warm, q)
        pc = lookahead.predict_lin(cold, q)
        assert np.max(np.abs(pw - pc)) / np.max(np.abs(pc)) < 1e-8

    def test_consistent_label_changes_nothing(self):
        params, x, _, _ = _problem(seed=26)
        y = np.atleast_2d(net.forward(params, x))
        state = kernel.build_state_xy(params, x, y)
        xc = np.random.default_rng(27).standard_normal(3)
        yc = net.forward(params, xc)
        new = lookahead.augment_state(state, xc, yc)
        q = np.random.default_rng(28).standard_normal((6, 3))
        assert np.allclose(
            lookahead.predict_lin(new, q), lookahead.predict_lin(state, q), atol=1e-12
        )

    def test_rejects_duplicate(self):
        params, x, y, state = _problem(seed=29)
        with pytest.raises(DegenerateCandidateError):
            lookahead.augment_state(state, x[0], y[0])

    def test_extends_cache_and_agrees(self):
        params, x, y, state = _problem(seed=30)
        assert state.factor_cache is not None
        xc = np.random.default_rng(31).standard_normal(3)
        new = lookahead.augment_state(state, xc, np.array([1.0, 0.0]))
        assert new.factor_cache is not None
        q = np.random.default_rng(32).standard_normal((3, 3))
        direct = kernel.empirical_ntk(params, q, new.inputs)
        np.testing.assert_allclose(new.kernel_rows(q), direct, rtol=1e-12)

    def test_lookahead_matches_actual_augment(self):
        params, x, y, state = _problem(seed=33)
        xc = np.random.default_rng(34).standard_normal(3)
        yc = np.array([0.0, 1.0])
        ctx = lookahead.prepare_candidate(state, xc, yc)
        q = np.random.default_rng(35).standard_normal((4, 3))
        hypothetical = lookahead.lookahead_predict(state, ctx, q)
        committed = lookahead.predict_lin(lookahead.augment_state(state, xc, yc), q)
        np.testing.assert_allclose(hypothetical, committed, rtol=1e-9, atol=1e-11)
