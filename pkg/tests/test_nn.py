"""Numeric kernels: layers, GRU, softmax, Adam, init, tensor container.

Gradient oracles are central finite differences computed in float64.
"""

import numpy as np
import numpy.testing as npt
import pytest

from pasforge.nn import (
    ADAM_LR,
    BN_EPS,
    BN_MOMENTUM,
    BatchNorm,
    GRUCell,
    Parameter,
    adam_step,
    assert_all_finite,
    check_gradients,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    glorot_init,
    orthonormal_init,
    read_tensors,
    relu_backward,
    relu_forward,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    softmax_cross_entropy_grad,
    write_tensors,
)


def numeric_grad(loss_fn, arr, eps=1e-6):
    """Central finite differences of loss_fn with respect to arr, in place."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + eps
        up = loss_fn()
        arr[idx] = orig - eps
        down = loss_fn()
        arr[idx] = orig
        grad[idx] = (up - down) / (2.0 * eps)
    return grad


class TestSigmoid:
    def test_matches_direct_formula(self):
        x = np.linspace(-8, 8, 33)
        npt.assert_allclose(sigmoid(x), 1.0 / (1.0 + np.exp(-x)), rtol=1e-12)

    def test_extreme_inputs_saturate_without_overflow(self):
        with np.errstate(over="raise"):
            out = sigmoid(np.array([-1000.0, 1000.0]))
        npt.assert_allclose(out, [0.0, 1.0])


class TestDense:
    def test_identity_weights_pass_input_through(self):
        w = Parameter("w", np.eye(4))
        b = Parameter("b", np.zeros(4))
        x = np.random.default_rng(0).standard_normal((3, 4))
        npt.assert_array_equal(dense_forward(x, w, b), x)

    def test_zero_input_yields_bias_rows(self):
        rng = np.random.default_rng(1)
        w = Parameter("w", rng.standard_normal((4, 3)))
        b = Parameter("b", rng.standard_normal(3))
        out = dense_forward(np.zeros((5, 4)), w, b)
        npt.assert_array_equal(out, np.tile(b.value, (5, 1)))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((5, 4))
        w = Parameter("w", rng.standard_normal((4, 3)))
        b = Parameter("b", rng.standard_normal(3))
        c = rng.standard_normal((5, 3))
        loss_fn = lambda: float((dense_forward(x, w, b) * c).sum())
        dx = dense_backward(c, x, w, b)
        npt.assert_allclose(w.grad, numeric_grad(loss_fn, w.value), rtol=1e-5, atol=1e-8)
        npt.assert_allclose(b.grad, numeric_grad(loss_fn, b.value), rtol=1e-5, atol=1e-8)
        npt.assert_allclose(dx, numeric_grad(loss_fn, x), rtol=1e-5, atol=1e-8)


class TestRelu:
    def test_output_nonnegative_and_identity_on_nonnegative(self):
        x = np.array([[-2.0, 0.0, 3.5]])
        out, mask = relu_forward(x)
        assert (out >= 0).all()
        npt.assert_array_equal(out, [[0.0, 0.0, 3.5]])
        pos = np.array([[0.0, 1.0, 2.0]])
        npt.assert_array_equal(relu_forward(pos)[0], pos)

    def test_backward_blocks_negative_coordinates(self):
        x = np.array([[-1.0, 2.0]])
        _, mask = relu_forward(x)
        npt.assert_array_equal(relu_backward(np.array([[5.0, 7.0]]), mask),
                               [[0.0, 7.0]])


class TestBatchNorm:
    def test_standard_batch_passes_through(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((64, 5))
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        bn = BatchNorm("bn", 5, dtype=np.float64)
        out, _ = bn.forward(x, train=True)
        npt.assert_allclose(out, x, atol=1e-4)

    def test_train_output_is_normalized(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((32, 6)) * 3.0 + 5.0
        bn = BatchNorm("bn", 6, dtype=np.float64)
        out, _ = bn.forward(x, train=True)
        assert np.abs(out.mean(axis=0)).max() < 1e-5
        npt.assert_allclose(out.var(axis=0), 1.0, atol=1e-3)

    def test_constant_column_maps_to_zero(self):
        x = np.full((8, 3), 4.25)
        bn = BatchNorm("bn", 3, dtype=np.float64)
        out, _ = bn.forward(x, train=True)
        npt.assert_allclose(out, 0.0, atol=1e-9)

    def test_batch_of_one_rejected_in_training(self):
        bn = BatchNorm("bn", 3)
        with pytest.raises(ValueError, match="2 rows"):
            bn.forward(np.ones((1, 3)), train=True)

    def test_running_stats_follow_momentum_rule(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((16, 4)) + 2.0
        bn = BatchNorm("bn", 4, dtype=np.float64)
        bn.forward(x, train=True)
        npt.assert_allclose(bn.running_mean,
                            (1.0 - BN_MOMENTUM) * x.mean(axis=0), rtol=1e-12)
        npt.assert_allclose(bn.running_var,
                            BN_MOMENTUM * 1.0 + (1.0 - BN_MOMENTUM) * x.var(axis=0),
                            rtol=1e-12)

    def test_inference_uses_running_stats(self):
        bn = BatchNorm("bn", 2, dtype=np.float64)
        bn.running_mean = np.array([1.0, -1.0])
        bn.running_var = np.array([4.0, 0.25])
        x = np.array([[3.0, 0.0]])
        out, cache = bn.forward(x, train=False)
        assert cache is None
        npt.assert_allclose(out, [[2.0 / np.sqrt(4.0 + BN_EPS),
                                   1.0 / np.sqrt(0.25 + BN_EPS)]])

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((8, 5))
        bn = BatchNorm("bn", 5, dtype=np.float64)
        bn.gamma.value[:] = rng.uniform(0.5, 1.5, 5)
        bn.beta.value[:] = rng.standard_normal(5)
        c = rng.standard_normal((8, 5))
        loss_fn = lambda: float((bn.forward(x, train=True)[0] * c).sum())
        _, cache = bn.forward(x, train=True)
        dx = bn.backward(c, cache)
        npt.assert_allclose(bn.gamma.grad, numeric_grad(loss_fn, bn.gamma.value),
                            rtol=1e-4, atol=1e-8)
        npt.assert_allclose(bn.beta.grad, numeric_grad(loss_fn, bn.beta.value),
                            rtol=1e-4, atol=1e-8)
        npt.assert_allclose(dx, numeric_grad(loss_fn, x), rtol=1e-4, atol=1e-7)


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = np.random.default_rng(7).standard_normal((4, 4))
        out, mask = dropout_forward(x, 0.0, np.random.default_rng(0), train=True)
        assert mask is None
        npt.assert_array_equal(out, x)

    def test_inference_is_identity_regardless_of_rate(self):
        x = np.random.default_rng(8).standard_normal((4, 4))
        out, mask = dropout_forward(x, 0.9, np.random.default_rng(0), train=False)
        assert mask is None
        npt.assert_array_equal(out, x)

    def test_zero_fraction_near_rate_over_a_million_elements(self):
        x = np.ones((1000, 1000))
        out, _ = dropout_forward(x, 0.2, np.random.default_rng(9), train=True)
        zero_fraction = (out == 0).mean()
        assert abs(zero_fraction - 0.2) < 0.01

    def test_survivors_scaled_by_inverse_keep_probability(self):
        x = np.ones((100, 100))
        out, _ = dropout_forward(x, 0.2, np.random.default_rng(10), train=True)
        kept = out[out != 0]
        npt.assert_allclose(kept, 1.0 / 0.8)

    def test_backward_reuses_forward_mask(self):
        x = np.ones((20, 20))
        out, mask = dropout_forward(x, 0.5, np.random.default_rng(11), train=True)
        dy = np.full_like(x, 3.0)
        npt.assert_array_equal(dropout_backward(dy, mask), 3.0 * out)
        npt.assert_array_equal(dropout_backward(dy, None), dy)

    def test_invalid_rate_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            dropout_forward(np.ones((2, 2)), 1.0, rng, train=True)
        with pytest.raises(ValueError):
            dropout_forward(np.ones((2, 2)), -0.1, rng, train=True)


def zeroed_cell(d_in, d_hidden):
    cell = GRUCell("gru", d_in, d_hidden, np.random.default_rng(0), dtype=np.float64)
    for p in cell.parameters():
        p.value[...] = 0.0
    return cell


class TestGru:
    def test_zero_weights_halve_the_carried_state(self):
        cell = zeroed_cell(3, 4)
        h_prev = np.array([[1.0, -2.0, 4.0, 0.5]])
        h, _ = cell.step(np.ones((1, 3)), h_prev)
        npt.assert_allclose(h, 0.5 * h_prev)

    def test_zero_weights_from_zero_state_stay_zero(self):
        cell = zeroed_cell(3, 4)
        xs = np.random.default_rng(12).standard_normal((6, 2, 3))
        h, _ = cell.forward(xs)
        npt.assert_array_equal(h, np.zeros((2, 4)))

    def test_sequence_length_changes_the_state(self):
        rng = np.random.default_rng(13)
        cell = GRUCell("gru", 3, 4, rng, dtype=np.float64)
        x = rng.standard_normal((1, 3))
        h1, _ = cell.forward(x[None])
        h2, _ = cell.forward(np.stack([x, x]))
        assert not np.allclose(h1, h2)

    def test_forward_matches_direct_recurrence(self):
        rng = np.random.default_rng(14)
        cell = GRUCell("gru", 3, 5, rng, dtype=np.float64)
        xs = rng.standard_normal((7, 2, 3))
        got, _ = cell.forward(xs)
        h = np.zeros((2, 5))
        for t in range(7):
            z = 1.0 / (1.0 + np.exp(-(xs[t] @ cell.wz.value + h @ cell.uz.value)))
            r = 1.0 / (1.0 + np.exp(-(xs[t] @ cell.wr.value + h @ cell.ur.value)))
            cand = np.tanh(xs[t] @ cell.wh.value + (r * h) @ cell.uh.value)
            h = (1.0 - z) * cand + z * h
        npt.assert_allclose(got, h, rtol=1e-10)

    def test_bptt_gradients_match_finite_differences(self):
        rng = np.random.default_rng(15)
        cell = GRUCell("gru", 3, 4, rng, dtype=np.float64)
        xs = rng.standard_normal((6, 2, 3))
        c = rng.standard_normal((2, 4))

        def loss_fn():
            h, _ = cell.forward(xs)
            return float((h * c).sum())

        h, caches = cell.forward(xs)
        dxs = cell.backward(c.copy(), caches)
        for p in cell.parameters():
            want = numeric_grad(loss_fn, p.value)
            npt.assert_allclose(p.grad, want, rtol=1e-4, atol=1e-7,
                                err_msg=p.name)
        npt.assert_allclose(dxs, numeric_grad(loss_fn, xs), rtol=1e-4, atol=1e-7)


class TestSoftmaxCrossEntropy:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(16)
        probs = softmax(rng.standard_normal((40, 4)) * 20.0)
        npt.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_equal_logits_give_quarter_probs_and_ln4_loss(self):
        loss, probs = softmax_cross_entropy(np.zeros((3, 4)), np.array([0, 1, 3]))
        npt.assert_allclose(probs, 0.25)
        npt.assert_allclose(loss, np.log(4.0), rtol=1e-12)

    def test_huge_logit_is_stable(self):
        logits = np.array([[1000.0, 0.0, 0.0, 0.0]])
        with np.errstate(over="raise"):
            loss, probs = softmax_cross_entropy(logits, np.array([0]))
        assert loss < 1e-6
        assert np.isfinite(probs).all()
        npt.assert_allclose(softmax(logits), softmax(logits - 1000.0), atol=1e-12)

    def test_gradient_is_probs_minus_onehot_over_batch(self):
        rng = np.random.default_rng(17)
        logits = rng.standard_normal((7, 4))
        labels = rng.integers(0, 4, size=7)
        _, probs = softmax_cross_entropy(logits, labels)
        grad = softmax_cross_entropy_grad(probs, labels)
        onehot = np.eye(4)[labels]
        npt.assert_allclose(grad, (probs - onehot) / 7.0, atol=1e-12)
        loss_fn = lambda: softmax_cross_entropy(logits, labels)[0]
        npt.assert_allclose(grad, numeric_grad(loss_fn, logits), atol=1e-6)


class TestAdam:
    def test_first_step_magnitude_is_learning_rate(self):
        p = Parameter("p", np.array([2.0, -3.0]))
        p.grad[:] = [0.5, -0.25]
        adam_step([p])
        delta = np.array([2.0, -3.0]) - p.value
        npt.assert_allclose(np.abs(delta), ADAM_LR, atol=1e-9)
        assert delta[0] > 0 and delta[1] < 0

    def test_first_step_matches_closed_form(self):
        g = np.array([0.5, -0.25])
        p = Parameter("p", np.array([2.0, -3.0]))
        p.grad[:] = g
        adam_step([p], lr=0.001, eps=1e-8)
        want = np.array([2.0, -3.0]) - 0.001 * g / (np.abs(g) + 1e-8)
        npt.assert_allclose(p.value, want, rtol=1e-12)

    def test_zero_gradient_leaves_value_unchanged(self):
        p = Parameter("p", np.array([1.5, -0.5]))
        adam_step([p])
        npt.assert_array_equal(p.value, [1.5, -0.5])

    def test_gradients_cleared_after_step(self):
        p = Parameter("p", np.ones(3))
        p.grad[:] = 1.0
        adam_step([p])
        npt.assert_array_equal(p.grad, 0.0)
        assert p.step == 1

    def test_converges_on_quadratic(self):
        p = Parameter("x", np.array([1.0]))
        for _ in range(200):
            p.grad[:] = 2.0 * p.value
            adam_step([p], lr=0.01)
        assert abs(p.value[0]) < 0.1


class TestInitializers:
    def test_square_orthonormal_192(self):
        q = orthonormal_init(192, 192, np.random.default_rng(18))
        prod = q.astype(np.float64).T @ q.astype(np.float64)
        assert np.abs(prod - np.eye(192)).max() < 1e-5

    def test_one_by_one_is_unit(self):
        for seed in range(8):
            q = orthonormal_init(1, 1, np.random.default_rng(seed))
            assert q[0, 0] in (-1.0, 1.0)

    def test_wide_matrix_has_orthonormal_rows(self):
        q = orthonormal_init(4, 9, np.random.default_rng(19), dtype=np.float64)
        npt.assert_allclose(q @ q.T, np.eye(4), atol=1e-10)

    def test_tall_matrix_has_orthonormal_columns(self):
        q = orthonormal_init(9, 4, np.random.default_rng(20), dtype=np.float64)
        npt.assert_allclose(q.T @ q, np.eye(4), atol=1e-10)

    def test_orthonormal_output_is_c_contiguous(self):
        # transposing the QR factor must not leak a Fortran-ordered array:
        # downstream in-place perturbation relies on C layout
        assert orthonormal_init(4, 9, np.random.default_rng(21)).flags["C_CONTIGUOUS"]
        assert orthonormal_init(9, 4, np.random.default_rng(21)).flags["C_CONTIGUOUS"]

    def test_orthonormal_seed_reproducible(self):
        a = orthonormal_init(5, 7, np.random.default_rng(22))
        b = orthonormal_init(5, 7, np.random.default_rng(22))
        npt.assert_array_equal(a, b)

    def test_glorot_bounds(self):
        w = glorot_init(30, 50, np.random.default_rng(23))
        limit = np.sqrt(6.0 / 80.0)
        assert np.abs(w).max() <= limit
        assert w.dtype == np.float32


def relu_stack_fixture(rng):
    x = rng.standard_normal((6, 5))
    w = Parameter("w", rng.standard_normal((5, 4)))
    b = Parameter("b", rng.standard_normal(4) + 1.0)
    c = rng.standard_normal((6, 4))

    def loss_fn():
        out, _ = relu_forward(dense_forward(x, w, b))
        return float((out * c).sum())

    pre = dense_forward(x, w, b)
    _, mask = relu_forward(pre)
    dense_backward(relu_backward(c.copy(), mask), x, w, b)
    return loss_fn, [w, b]


class TestCheckGradients:
    def test_dense_relu_stack_passes(self):
        loss_fn, params = relu_stack_fixture(np.random.default_rng(24))
        report = check_gradients(loss_fn, params, np.random.default_rng(0),
                                 samples=50)
        assert report.passed
        assert report.max_rel_error < 1e-4
        assert report.checked == 24

    def test_gru_over_length_five_passes(self):
        rng = np.random.default_rng(25)
        cell = GRUCell("gru", 3, 4, rng, dtype=np.float64)
        xs = rng.standard_normal((5, 2, 3))
        c = rng.standard_normal((2, 4))

        def loss_fn():
            h, _ = cell.forward(xs)
            return float((h * c).sum())

        _, caches = cell.forward(xs)
        cell.backward(c.copy(), caches)
        report = check_gradients(loss_fn, cell.parameters(),
                                 np.random.default_rng(1), samples=6)
        assert report.passed, report.failures

    def test_sign_flipped_gradients_fail(self):
        loss_fn, params = relu_stack_fixture(np.random.default_rng(26))
        for p in params:
            p.grad *= -1.0
        report = check_gradients(loss_fn, params, np.random.default_rng(2),
                                 samples=50)
        assert not report.passed
        assert report.failures
        assert report.max_rel_error > 1e-4
        assert {f.param for f in report.failures} <= {"w", "b"}


class TestTensorContainer:
    def test_round_trip_preserves_names_order_and_values(self, tmp_path):
        rng = np.random.default_rng(27)
        named = {
            "out.W": rng.standard_normal((3, 4)).astype(np.float32),
            "gru.bz": rng.standard_normal(5).astype(np.float32),
            "scalar": np.float32(2.5).reshape(()),
        }
        path = tmp_path / "weights.bin"
        write_tensors(path, named)
        loaded = read_tensors(path)
        assert list(loaded) == list(named)
        for name in named:
            npt.assert_array_equal(loaded[name], named[name])
            assert loaded[name].dtype == np.float32

    def test_float64_input_stored_as_float32(self, tmp_path):
        path = tmp_path / "weights.bin"
        write_tensors(path, {"a": np.array([1.0, 2.0])})
        assert read_tensors(path)["a"].dtype == np.float32

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTPAS1\n\x00\x00")
        with pytest.raises(ValueError, match="magic"):
            read_tensors(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "weights.bin"
        write_tensors(path, {"a": np.ones((4, 4), dtype=np.float32)})
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ValueError, match="truncated"):
            read_tensors(path)

    def test_rank_dimension_mismatch_rejected(self, tmp_path):
        path = tmp_path / "weights.bin"
        from pasforge.nn import TENSOR_MAGIC
        path.write_bytes(TENSOR_MAGIC + b"a\n2 3\n" + b"\x00" * 12)
        with pytest.raises(ValueError, match="rank"):
            read_tensors(path)


class TestAssertAllFinite:
    def test_passes_on_finite(self):
        assert_all_finite(np.ones(3), "logits")

    def test_raises_naming_the_tensor(self):
        with pytest.raises(FloatingPointError, match="logits"):
            assert_all_finite(np.array([1.0, np.nan]), "logits")
        with pytest.raises(FloatingPointError):
            assert_all_finite(np.array([np.inf]), "h")
