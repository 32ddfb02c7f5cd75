import numpy as np
import pytest

from liftdiff import autodiff as ad

from gradcheck import check_grads, rand_leaf


def test_add_identity():
    x = ad.Tensor(np.arange(12, dtype=np.float32).reshape(3, 4))
    z = ad.Tensor(np.zeros((3, 4), dtype=np.float32))
    np.testing.assert_array_equal(ad.add(x, z).data, x.data)


def test_matmul_hand_case():
    a = ad.Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = ad.Tensor([[1.0], [1.0]])
    out = ad.matmul(a, b)
    np.testing.assert_allclose(out.data, [[3.0], [7.0]])


def test_conv2d_constant_image_averaging_kernel():
    x = ad.Tensor(np.full((1, 1, 8, 8), 0.7, dtype=np.float32))
    w = ad.Tensor(np.full((1, 1, 3, 3), 1.0 / 9.0, dtype=np.float32))
    y = ad.conv2d(x, w, padding=1, pad_mode="reflect")
    np.testing.assert_allclose(y.data, 0.7, rtol=1e-5)


def test_shape_mismatch_errors_name_shapes():
    a = ad.Tensor(np.zeros((2, 3)))
    b = ad.Tensor(np.zeros((4, 5)))
    with pytest.raises(ValueError, match=r"\(2, 3\)"):
        ad.add(a, b)
    with pytest.raises(ValueError, match="matmul"):
        ad.matmul(a, b)
    x = ad.Tensor(np.zeros((1, 2, 4, 4)))
    w = ad.Tensor(np.zeros((3, 5, 3, 3)))
    with pytest.raises(ValueError, match="channels"):
        ad.conv2d(x, w)


def test_backward_sum_gives_ones():
    x = ad.Tensor(np.random.default_rng(0).standard_normal((2, 3, 4, 4)), requires_grad=True)
    with ad.Tape():
        loss = ad.reduce_sum(x)
        grads = ad.backward(loss)
    np.testing.assert_array_equal(grads[x], np.ones_like(x.data))


def test_backward_sumsq_analytic():
    x = ad.Tensor(np.array([3.0, 4.0], dtype=np.float32), requires_grad=True)
    with ad.Tape():
        loss = ad.sumsq(x)
        grads = ad.backward(loss)
    np.testing.assert_allclose(grads[x], [6.0, 8.0], rtol=1e-6)


def test_backward_requires_scalar():
    x = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    with ad.Tape():
        y = ad.smul(x, 2.0)
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(y)


def test_backward_twice_without_rerecording_errors():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.Tape():
        loss = ad.sumsq(x)
        ad.backward(loss)
        with pytest.raises(RuntimeError, match="consumed"):
            ad.backward(loss)


def test_backward_retain_graph_allows_second_loss():
    x = ad.Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
    with ad.Tape():
        y = ad.smul(x, 3.0)
        l1 = ad.sumsq(y)
        l2 = ad.reduce_sum(y)
        g1 = ad.backward(l1, retain_graph=True)
        g2 = ad.backward(l2)
    np.testing.assert_allclose(g1[x], 18.0 * x.data)
    np.testing.assert_allclose(g2[x], [3.0, 3.0])


def test_backward_detached_graph_errors():
    x = ad.Tensor(np.ones(3))  # requires_grad=False
    with ad.Tape():
        loss = ad.sumsq(x)  # nothing tracked
    with pytest.raises(RuntimeError, match="detached"):
        ad.backward(loss)


def test_no_grad_blocks_recording():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.Tape():
        with ad.no_grad():
            y = ad.sumsq(x)
        assert y.node is None and not y.requires_grad


def test_backward_linearity():
    rng = np.random.default_rng(7)
    x = rand_leaf(rng, (3, 5))
    a, b = 0.7, -1.3

    def run(scale_pair):
        sa, sb = scale_pair
        with ad.Tape():
            l1 = ad.sumsq(x)
            l2 = ad.reduce_sum(ad.tanh(x))
            loss = ad.add(ad.smul(l1, sa), ad.smul(l2, sb))
            return ad.backward(loss)[x]

    g_combo = run((a, b))
    g1 = run((1.0, 0.0))
    g2 = run((0.0, 1.0))
    np.testing.assert_allclose(g_combo, a * g1 + b * g2, atol=1e-6)


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(123)
        x = rand_leaf(rng, (2, 3, 8, 8))
        w = rand_leaf(rng, (4, 3, 3, 3), scale=0.3)
        with ad.Tape():
            y = ad.conv2d(x, w, padding=1)
            loss = ad.sumsq(ad.gelu(y))
            g = ad.backward(loss)
        return loss.data.copy(), g[x].copy(), g[w].copy()

    a = run()
    b = run()
    for u, v in zip(a, b):
        assert np.array_equal(u, v)


def test_wrt_filter_matches_full_backward():
    rng = np.random.default_rng(3)
    x = rand_leaf(rng, (1, 2, 6, 6))
    w = rand_leaf(rng, (3, 2, 3, 3), scale=0.4)

    def loss_of():
        y = ad.conv2d(x, w, padding=1)
        return ad.sumsq(y)

    with ad.Tape():
        g_full = ad.backward(loss_of())
    with ad.Tape():
        g_x = ad.backward(loss_of(), wrt=[x])
    np.testing.assert_array_equal(g_full[x], g_x[x])
    assert g_x.get(w) is None and g_full.get(w) is not None


# --- finite-difference checks for every primitive -------------------------


def _away_from_zero(rng, shape, lo=0.3, hi=1.2):
    mags = rng.uniform(lo, hi, size=shape).astype(np.float32)
    signs = np.where(rng.standard_normal(shape) > 0, 1.0, -1.0).astype(np.float32)
    return ad.Tensor(mags * signs, requires_grad=True)


def test_fd_elementwise_and_reductions():
    rng = np.random.default_rng(11)
    a = rand_leaf(rng, (2, 3, 4, 5), scale=0.7)
    b = rand_leaf(rng, (2, 3, 4, 5), scale=0.7)
    c = rand_leaf(rng, (1, 3, 1, 1), scale=0.5)  # broadcast over batch/space
    p = ad.Tensor(rng.standard_normal((2, 3, 4, 5)).astype(np.float32))

    def build():
        y = ad.mul(ad.add(a, c), ad.sub(b, ad.smul(a, 0.4)))
        return ad.reduce_sum(ad.mul(y, p))

    check_grads(build, [a, b, c])


def test_fd_tanh_gelu_relu():
    rng = np.random.default_rng(12)
    x = _away_from_zero(rng, (3, 7))
    p = ad.Tensor(rng.standard_normal((3, 7)).astype(np.float32))

    def build():
        y = ad.add(ad.tanh(x), ad.add(ad.gelu(x), ad.relu(x)))
        return ad.reduce_sum(ad.mul(y, p))

    check_grads(build, [x])


def test_fd_matmul_reshape():
    rng = np.random.default_rng(13)
    a = rand_leaf(rng, (4, 6), scale=0.5)
    b = rand_leaf(rng, (6, 3), scale=0.5)
    p = ad.Tensor(rng.standard_normal((4, 3)).astype(np.float32))

    def build():
        y = ad.matmul(a, b)
        return ad.reduce_sum(ad.mul(ad.reshape(y, (2, 6)), ad.reshape(p, (2, 6))))

    check_grads(build, [a, b])


def test_fd_layer_norm_softmax():
    rng = np.random.default_rng(14)
    x = rand_leaf(rng, (2, 5, 3, 3), scale=0.8)
    p = ad.Tensor(rng.standard_normal((2, 5, 3, 3)).astype(np.float32))

    def build():
        y = ad.layer_norm(x, axis=1)
        z = ad.softmax(x, axis=2)
        return ad.add(ad.reduce_sum(ad.mul(y, p)), ad.reduce_sum(ad.mul(z, p)))

    check_grads(build, [x])


def test_fd_mean_sumsq():
    rng = np.random.default_rng(15)
    x = rand_leaf(rng, (2, 4, 3, 3), scale=0.6)

    def build():
        return ad.add(
            ad.smul(ad.reduce_sum(ad.reduce_mean(x, axis=(2, 3))), 0.7),
            ad.smul(ad.sumsq(x), 0.3))

    check_grads(build, [x])


def test_fd_concat_split_narrow():
    rng = np.random.default_rng(16)
    a = rand_leaf(rng, (1, 2, 4, 4), scale=0.5)
    b = rand_leaf(rng, (1, 3, 4, 4), scale=0.5)
    p = ad.Tensor(rng.standard_normal((1, 2, 4, 4)).astype(np.float32))

    def build():
        y = ad.concat([a, b], axis=1)
        parts = ad.split(y, [3, 2], axis=1)
        return ad.reduce_sum(ad.mul(parts[1], p))

    check_grads(build, [a, b])


@pytest.mark.parametrize("mode", ["zero", "reflect", "wrap"])
def test_fd_pad2d(mode):
    rng = np.random.default_rng(17)
    x = rand_leaf(rng, (1, 2, 4, 5), scale=0.5)
    p_shape = (1, 2, 4 + 3, 5 + 2)
    p = ad.Tensor(rng.standard_normal(p_shape).astype(np.float32))

    def build():
        return ad.reduce_sum(ad.mul(ad.pad2d(x, (1, 2, 2, 0), mode=mode), p))

    check_grads(build, [x])


@pytest.mark.parametrize("stride,padding,pad_mode", [
    (1, 0, "zero"), (1, 1, "reflect"), (2, 1, "zero"), (2, 0, "wrap"),
])
def test_fd_conv2d(stride, padding, pad_mode):
    rng = np.random.default_rng(18)
    x = rand_leaf(rng, (2, 2, 6, 6), scale=0.5)
    w = rand_leaf(rng, (3, 2, 3, 3), scale=0.4)
    bias = rand_leaf(rng, (3,), scale=0.2)
    proj = None

    def build():
        y = ad.conv2d(x, w, bias=bias, stride=stride, padding=padding, pad_mode=pad_mode)
        nonlocal proj
        if proj is None:
            proj = ad.Tensor(np.random.default_rng(99).standard_normal(y.shape).astype(np.float32))
        return ad.reduce_sum(ad.mul(y, proj))

    check_grads(build, [x, w, bias])


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 0), (2, 1)])
def test_fd_conv_transpose2d(stride, padding):
    rng = np.random.default_rng(19)
    x = rand_leaf(rng, (2, 3, 4, 4), scale=0.5)
    w = rand_leaf(rng, (3, 2, 4, 4), scale=0.4)
    bias = rand_leaf(rng, (2,), scale=0.2)
    proj = None

    def build():
        y = ad.conv_transpose2d(x, w, bias=bias, stride=stride, padding=padding)
        nonlocal proj
        if proj is None:
            proj = ad.Tensor(np.random.default_rng(98).standard_normal(y.shape).astype(np.float32))
        return ad.reduce_sum(ad.mul(y, proj))

    check_grads(build, [x, w, bias])


@pytest.mark.parametrize("out_hw", [(8, 8), (3, 5), (6, 2)])
def test_fd_resize_nearest(out_hw):
    rng = np.random.default_rng(20)
    x = rand_leaf(rng, (1, 2, 4, 4), scale=0.5)
    p = ad.Tensor(rng.standard_normal((1, 2) + out_hw).astype(np.float32))

    def build():
        return ad.reduce_sum(ad.mul(ad.resize_nearest(x, out_hw), p))

    check_grads(build, [x])


@pytest.mark.parametrize("out_hw", [(8, 8), (3, 5), (6, 2)])
def test_fd_resize_bilinear(out_hw):
    rng = np.random.default_rng(21)
    x = rand_leaf(rng, (1, 2, 4, 4), scale=0.5)
    p = ad.Tensor(rng.standard_normal((1, 2) + out_hw).astype(np.float32))

    def build():
        return ad.reduce_sum(ad.mul(ad.resize_bilinear(x, out_hw), p))

    check_grads(build, [x])


def test_fd_composite_network():
    rng = np.random.default_rng(22)
    x = rand_leaf(rng, (1, 1, 8, 8), scale=0.5)
    w1 = rand_leaf(rng, (4, 1, 3, 3), scale=0.4)
    w2 = rand_leaf(rng, (1, 4, 3, 3), scale=0.4)

    def build():
        h = ad.gelu(ad.conv2d(x, w1, padding=1))
        h = ad.layer_norm(h, axis=1)
        y = ad.conv2d(h, w2, padding=1)
        return ad.sumsq(ad.sub(y, x))

    check_grads(build, [x, w1, w2])


def test_clamp01_gradient_passthrough_inside():
    x = ad.Tensor(np.array([-0.5, 0.25, 0.75, 1.5], dtype=np.float32), requires_grad=True)
    with ad.Tape():
        y = ad.clamp01(x)
        grads = ad.backward(ad.reduce_sum(y))
    np.testing.assert_allclose(y.data, [0.0, 0.25, 0.75, 1.0])
    np.testing.assert_allclose(grads[x], [0.0, 1.0, 1.0, 0.0])
