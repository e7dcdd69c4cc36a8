"""Network units: SE gating, adapters, task norms, CPU/APU, decoder, pose."""

import numpy as np
import pytest

from depthforge.autodiff import Tape, Tensor, finite_diff_check, ops
from depthforge.errors import CheckpointError, ConfigError
from depthforge.geometry import RigidTransform
from depthforge.network import (AffinityPropagationUnit, CrossPropagationUnit,
                                MultiTaskDepthNet, PoseNet, ResidualBlock, SEBlock,
                                SharedEncoder, TaskBatchNorm, affinity_matrix,
                                load_checkpoint, save_checkpoint)

RNG = np.random.default_rng(777)


def feat(*shape):
    return Tensor(RNG.normal(0.0, 1.0, size=shape))


# ---------------------------------------------------------------------------
# SE block
# ---------------------------------------------------------------------------

def test_se_zero_weights_scale_half():
    se = SEBlock(seed=0, path="t.se", owner="depth", channels=8, reduction=4)
    for lin in (se.fc1, se.fc2):
        lin.weight.data[...] = 0.0
        lin.bias.data[...] = 0.0
    x = feat(1, 8, 4, 4)
    np.testing.assert_allclose(se(x).data, x.data / 2.0)


def test_se_zero_input_zero_output():
    se = SEBlock(seed=0, path="t.se", owner="depth", channels=8, reduction=4)
    x = Tensor(np.zeros((1, 8, 4, 4)))
    np.testing.assert_allclose(se(x).data, 0.0)


def test_se_rejects_small_channel_count():
    with pytest.raises(ConfigError):
        SEBlock(seed=0, path="t.se", owner="depth", channels=8, reduction=16)


def test_se_gradcheck():
    se = SEBlock(seed=3, path="t.se", owner="depth", channels=4, reduction=2)
    x = Tensor(RNG.normal(size=(1, 4, 4, 4)), requires_grad=True)
    for _, p, _ in se.named_params():
        p.requires_grad = True
    params = [p for _, p, _ in se.named_params()]
    assert finite_diff_check(lambda *a: se(a[0]), [x] + params, wrt=range(1 + len(params))) < 1e-4


# ---------------------------------------------------------------------------
# residual block (adapter layer)
# ---------------------------------------------------------------------------

def _zeroed_block(fusion=True):
    block = ResidualBlock(seed=1, path="b", channels=4, se_reduction=2, fusion=fusion)
    for _, p, _ in block.named_params():
        p.data[...] = 0.0
    # batch-norm gammas back to 1 so the norm stays affine-neutral
    for tbn in (block.bn1, block.bn2):
        for bn in tbn.norms.values():
            bn.gamma.data[...] = 1.0
    return block


def test_residual_block_all_zero_is_identity():
    block = _zeroed_block()
    x = feat(2, 4, 4, 4)
    out = block(x, "depth", training=False)
    np.testing.assert_allclose(out.data, x.data, atol=1e-12)


def test_adapter_routing_between_tasks():
    block = ResidualBlock(seed=1, path="b", channels=4, se_reduction=2, fusion=True)
    x = feat(1, 4, 4, 4)
    base = block(x, "depth", training=False).data.copy()
    # seg adapter weights must not affect the depth forward
    block.adapter.convs["seg"].weight.data[...] = RNG.normal(size=(4, 4, 1, 1))
    np.testing.assert_array_equal(block(x, "depth", training=False).data, base)
    # depth adapter weights do
    block.adapter.convs["depth"].weight.data[...] = RNG.normal(size=(4, 4, 1, 1))
    assert np.abs(block(x, "depth", training=False).data - base).max() > 1e-6


def test_adapter_gradcheck():
    block = ResidualBlock(seed=2, path="b", channels=4, se_reduction=2, fusion=True)
    ra = block.adapter.convs["depth"]
    ra.weight.requires_grad = True
    x = Tensor(RNG.normal(size=(1, 4, 4, 4)), requires_grad=True)
    err = finite_diff_check(lambda xx, ww: block(xx, "depth", training=False),
                            [x, ra.weight], wrt=[0, 1])
    assert err < 1e-4


def test_block_gradcheck_composite():
    block = ResidualBlock(seed=5, path="b", channels=4, se_reduction=2, fusion=True)
    x = Tensor(RNG.normal(size=(2, 4, 4, 4)), requires_grad=True)
    assert finite_diff_check(lambda xx: block(xx, "depth", training=True), [x]) < 1e-4


# ---------------------------------------------------------------------------
# task batch norm
# ---------------------------------------------------------------------------

def test_task_bn_different_affines_differ():
    tbn = TaskBatchNorm("bn", 3)
    tbn.norms["seg"].beta.data[...] = 1.0
    x = feat(2, 3, 4, 4)
    d = tbn(x, "depth", training=True).data
    s = tbn(x, "seg", training=True).data
    assert np.abs(d - s).max() > 0.5


def test_task_bn_stats_isolation():
    tbn = TaskBatchNorm("bn", 3)
    seg_mean_before = tbn.norms["seg"].running_mean.copy()
    tbn(feat(2, 3, 4, 4), "depth", training=True)
    np.testing.assert_array_equal(tbn.norms["seg"].running_mean, seg_mean_before)
    assert np.abs(tbn.norms["depth"].running_mean).sum() > 0


def test_task_bn_eval_deterministic():
    tbn = TaskBatchNorm("bn", 3)
    tbn(feat(2, 3, 4, 4), "depth", training=True)
    x = feat(2, 3, 4, 4)
    a = tbn(x, "depth", training=False).data
    b = tbn(x, "depth", training=False).data
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# cross propagation unit
# ---------------------------------------------------------------------------

def test_cpu_zero_init_is_identity():
    cpu = CrossPropagationUnit(seed=0, path="cpu", channels=4)
    d, s = feat(1, 4, 4, 4), feat(1, 4, 4, 4)
    d2, s2 = cpu(d, s)
    np.testing.assert_array_equal(d2.data, d.data)
    np.testing.assert_array_equal(s2.data, s.data)


def test_cpu_identity_h1_adds_seg_features():
    cpu = CrossPropagationUnit(seed=0, path="cpu", channels=3)
    for c in range(3):
        cpu.h1.weight.data[c, c, 0, 0] = 1.0
    d, s = feat(1, 3, 4, 4), feat(1, 3, 4, 4)
    d2, _ = cpu(d, s)
    np.testing.assert_allclose(d2.data, d.data + s.data)


def test_cpu_spatial_locality():
    cpu = CrossPropagationUnit(seed=0, path="cpu", channels=3)
    for conv in (cpu.h1, cpu.h2, cpu.b1, cpu.b2):
        conv.weight.data[...] = RNG.normal(size=conv.weight.shape)
    d, s = feat(1, 3, 5, 5), feat(1, 3, 5, 5)
    base_d, base_s = cpu(d, s)
    d_pert = Tensor(d.data.copy())
    d_pert.data[0, 1, 2, 3] += 1.0
    out_d, out_s = cpu(d_pert, s)
    changed = np.abs(out_d.data - base_d.data).sum(axis=(0, 1)) > 0
    assert changed[2, 3] and changed.sum() == 1
    changed_s = np.abs(out_s.data - base_s.data).sum(axis=(0, 1)) > 0
    assert changed_s[2, 3] and changed_s.sum() == 1


def test_cpu_gradcheck():
    cpu = CrossPropagationUnit(seed=0, path="cpu", channels=2, detach_cross=False)
    for conv in (cpu.h1, cpu.h2, cpu.b1, cpu.b2):
        conv.weight.data[...] = 0.3 * RNG.normal(size=conv.weight.shape)
        conv.weight.requires_grad = True
    d = Tensor(RNG.normal(size=(1, 2, 4, 4)), requires_grad=True)
    s = Tensor(RNG.normal(size=(1, 2, 4, 4)), requires_grad=True)

    def fn(dd, ss, *ws):
        d2, s2 = cpu(dd, ss)
        return ops.add(ops.sum_(ops.square(d2)), ops.sum_(ops.square(s2)))

    ws = [cpu.h1.weight, cpu.h2.weight, cpu.b1.weight, cpu.b2.weight]
    assert finite_diff_check(fn, [d, s] + ws, wrt=range(2 + len(ws))) < 1e-4


def test_cpu_detach_blocks_cross_gradient():
    cpu = CrossPropagationUnit(seed=0, path="cpu", channels=2, detach_cross=True)
    cpu.h1.weight.data[...] = RNG.normal(size=cpu.h1.weight.shape)
    d = Tensor(RNG.normal(size=(1, 2, 3, 3)))
    s = Tensor(RNG.normal(size=(1, 2, 3, 3)), requires_grad=True)
    with Tape() as tape:
        d2, _ = cpu(d, s)
        loss = ops.sum_(d2)  # depth-side loss
    tape.backward(loss)
    assert s.grad is None  # cross input was detached


# ---------------------------------------------------------------------------
# affinity propagation unit
# ---------------------------------------------------------------------------

def test_affinity_constant_input_uniform():
    s = Tensor(np.full((1, 2, 2, 3), 0.7))
    a = affinity_matrix(s, s)
    np.testing.assert_allclose(a.data, 1.0 / 6.0, atol=1e-12)


def test_affinity_rows_sum_to_one_random():
    for _ in range(20):
        f = Tensor(RNG.normal(size=(1, 3, 3, 4)))
        k = Tensor(RNG.normal(size=(1, 3, 3, 4)))
        a = affinity_matrix(f, k).data
        np.testing.assert_allclose(a.sum(axis=2), 1.0, atol=1e-9)
        assert np.all(a >= 0)


def test_affinity_two_pixel_hand_computed():
    # one channel, two pixels: F(s) = 2s, K(s) = 3s with s = [1, 2]
    apu = AffinityPropagationUnit(seed=0, path="apu", channels=1, detach_cross=False)
    s = Tensor(np.array([1.0, 2.0]).reshape(1, 1, 1, 2))
    apu.f.weight.data[...] = 2.0
    apu.f.bias.data[...] = 0.0
    apu.k.weight.data[...] = 3.0
    apu.k.bias.data[...] = 0.0
    a = apu.affinity(s).data[0]
    # logits[i, j] = F_i * K_j = [[6, 12], [12, 24]]; softmax over i per column j
    e = np.exp([6.0, 12.0])
    col0 = e / e.sum()
    e2 = np.exp([12.0, 24.0])
    col1 = e2 / e2.sum()
    expected = np.stack([col0, col1]).T.T  # a[j, i] = softmax_i(logits[i, j])
    np.testing.assert_allclose(a, np.stack([col0, col1]), atol=1e-12)
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
    assert expected.shape == (2, 2)


def test_affinity_pixel_cap():
    with pytest.raises(ConfigError):
        affinity_matrix(Tensor(np.zeros((1, 1, 65, 64))), Tensor(np.zeros((1, 1, 65, 64))))


def test_apu_zero_init_is_identity():
    apu = AffinityPropagationUnit(seed=0, path="apu", channels=4)
    d, s = feat(1, 4, 2, 3), feat(1, 4, 2, 3)
    out = apu(d, s, training=True)
    np.testing.assert_allclose(out.data, d.data, atol=1e-12)


def test_apu_identity_affinity_and_identity_convs_doubles():
    apu = AffinityPropagationUnit(seed=0, path="apu", channels=2)
    apu.inner = 2
    import depthforge.network.layers as layers
    apu.g = layers.Conv2d(0, "apu.g", "shared", 2, 2, 1, padding=0)
    apu.p = layers.Conv2d(0, "apu.p", "shared", 2, 2, 1, padding=0)
    for conv in (apu.g, apu.p):
        conv.weight.data[...] = 0.0
        for c in range(2):
            conv.weight.data[c, c, 0, 0] = 1.0
        conv.bias.data[...] = 0.0
    d = feat(1, 2, 2, 2)
    eye = Tensor(np.eye(4)[None])
    # bypass BN by making it a pass-through in eval mode with unit stats
    apu.bn.running_mean[...] = 0.0
    apu.bn.running_var[...] = 1.0 - apu.bn.eps
    out = apu.propagate(d, eye, training=False)
    np.testing.assert_allclose(out.data, 2.0 * d.data, rtol=1e-12)


def test_apu_uniform_affinity_averages_spatially():
    apu = AffinityPropagationUnit(seed=4, path="apu", channels=4)
    d = feat(1, 4, 2, 3)
    hw = 6
    uniform = Tensor(np.full((1, hw, hw), 1.0 / hw))
    gd = apu.g(d).data.reshape(1, apu.inner, hw)
    expected_mixed = np.repeat(gd.mean(axis=2, keepdims=True), hw, axis=2)
    out_mixed = np.stack([
        apu.g(d).data.reshape(apu.inner, hw) @ uniform.data[0].T
    ])
    np.testing.assert_allclose(out_mixed, expected_mixed, atol=1e-12)


def test_apu_permutation_equivariance():
    apu = AffinityPropagationUnit(seed=6, path="apu", channels=4)
    apu.p.weight.data[...] = 0.2 * RNG.normal(size=apu.p.weight.shape)
    d, s = feat(1, 4, 2, 3), feat(1, 4, 2, 3)
    out = apu(d, s, training=False).data.reshape(4, 6)
    perm = RNG.permutation(6)
    dp = Tensor(d.data.reshape(1, 4, 6)[:, :, perm].reshape(1, 4, 2, 3))
    sp = Tensor(s.data.reshape(1, 4, 6)[:, :, perm].reshape(1, 4, 2, 3))
    out_p = apu(dp, sp, training=False).data.reshape(4, 6)
    np.testing.assert_allclose(out_p, out[:, perm], atol=1e-10)


def test_apu_gradcheck():
    apu = AffinityPropagationUnit(seed=8, path="apu", channels=2, detach_cross=False)
    apu.p.weight.data[...] = 0.3 * RNG.normal(size=apu.p.weight.shape)
    d = Tensor(RNG.normal(size=(1, 2, 2, 2)), requires_grad=True)
    s = Tensor(RNG.normal(size=(1, 2, 2, 2)), requires_grad=True)
    err = finite_diff_check(lambda dd, ss: apu(dd, ss, training=True), [d, s])
    assert err < 1e-4


# ---------------------------------------------------------------------------
# whole model
# ---------------------------------------------------------------------------

def test_decoder_shape_contract_64x192():
    net = MultiTaskDepthNet(seed=0, encoder_channels=(16, 32, 64, 128, 256),
                            decoder_channels=(16, 32, 64, 128, 256), se_reduction=16)
    img = Tensor(RNG.uniform(size=(1, 3, 64, 192)))
    out = net.forward(img, training=False)
    shapes = [tuple(d.shape) for d in out["disparities"]]
    assert shapes == [(1, 1, 64, 192), (1, 1, 32, 96), (1, 1, 16, 48), (1, 1, 8, 24)]
    assert out["seg_logits"].shape == (1, 19, 64, 192)
    for d in out["disparities"]:
        assert np.all(d.data > 0) and np.all(d.data < 1)


def test_toy_parameter_budget():
    net = MultiTaskDepthNet(seed=0)
    assert net.parameter_count() <= 300_000


def test_identity_at_init_fusion_free_twin():
    full = MultiTaskDepthNet(seed=42)
    twin = MultiTaskDepthNet(seed=42, fusion=False)
    img = Tensor(RNG.uniform(size=(1, 3, 32, 96)))
    out_full = full.forward(img, training=False)
    out_twin = twin.forward(img, training=False)
    for a, b in zip(out_full["disparities"], out_twin["disparities"]):
        np.testing.assert_array_equal(a.data, b.data)
    np.testing.assert_array_equal(out_full["seg_logits"].data, out_twin["seg_logits"].data)


def test_seg_loss_reaches_no_depth_parameter():
    from depthforge.losses import cross_entropy_seg
    net = MultiTaskDepthNet(seed=7)
    for _, p, _ in net.named_parameters():
        p.requires_grad = True
    img = Tensor(RNG.uniform(size=(1, 3, 32, 96)))
    labels = RNG.integers(0, 19, size=(1, 32, 96))
    with Tape() as tape:
        out = net.forward(img, training=True)
        loss = cross_entropy_seg(out["seg_logits"], labels)
    tape.backward(loss)
    for name, p, owner in net.named_parameters():
        if owner == "depth":
            assert p.grad is None or not np.any(p.grad), f"{name} leaked into seg loss"
    assert any(p.grad is not None and np.any(p.grad)
               for _, p, o in net.named_parameters() if o == "seg")


def test_depth_loss_reaches_no_seg_parameter():
    net = MultiTaskDepthNet(seed=7)
    for _, p, _ in net.named_parameters():
        p.requires_grad = True
    img = Tensor(RNG.uniform(size=(1, 3, 32, 96)))
    with Tape() as tape:
        out = net.forward(img, training=True)
        loss = ops.sum_(ops.square(out["disparities"][0]))
    tape.backward(loss)
    for name, p, owner in net.named_parameters():
        if owner == "seg":
            assert p.grad is None or not np.any(p.grad), f"{name} leaked into depth loss"
    assert any(p.grad is not None and np.any(p.grad)
               for _, p, o in net.named_parameters() if o == "depth")


# ---------------------------------------------------------------------------
# pose network
# ---------------------------------------------------------------------------

def test_pose_zero_vector_identity_transform():
    from depthforge.geometry import axis_angle_rotation
    r = axis_angle_rotation(Tensor(np.zeros((2, 3))))
    np.testing.assert_array_equal(r.data[0], np.eye(3))


def test_pose_output_orthonormal_random_weights():
    pose = PoseNet(seed=11)
    a, b = feat(2, 3, 32, 96), feat(2, 3, 32, 96)
    out = pose(a, b)
    for i in range(2):
        t = out.transform(i)  # constructor validates orthonormality at 1e-9
        assert isinstance(t, RigidTransform)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    net = MultiTaskDepthNet(seed=3)
    arrays = net.state_arrays()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, arrays, meta={"iteration": 17})
    loaded, meta = load_checkpoint(path)
    assert meta == {"iteration": 17}
    assert set(loaded) == set(arrays)
    for name in arrays:
        np.testing.assert_array_equal(loaded[name], arrays[name])


def test_checkpoint_deterministic_bytes(tmp_path):
    net = MultiTaskDepthNet(seed=3)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, net.state_arrays(), meta={"iteration": 0})
    save_checkpoint(p2, net.state_arrays(), meta={"iteration": 0})
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_shape_mismatch_raises(tmp_path):
    net = MultiTaskDepthNet(seed=3)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, net.state_arrays())
    other = MultiTaskDepthNet(seed=3, decoder_channels=(8, 12, 16, 20, 28))
    arrays, _ = load_checkpoint(path)
    with pytest.raises(CheckpointError):
        other.load_state_arrays(arrays)


def test_checkpoint_bad_magic_raises(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_model_state_restores_forward(tmp_path):
    net = MultiTaskDepthNet(seed=5)
    img = Tensor(RNG.uniform(size=(1, 3, 32, 96)))
    ref = net.forward_depth(img).data.copy()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, net.state_arrays())
    fresh = MultiTaskDepthNet(seed=999)
    arrays, _ = load_checkpoint(path)
    fresh.load_state_arrays(arrays)
    np.testing.assert_array_equal(fresh.forward_depth(img).data, ref)
