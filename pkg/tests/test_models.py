import math

import numpy as np
import pytest

from cfmlab import checks, dataset, models, nn
from cfmlab.dataset import Batch
from cfmlab.errors import BadMagicError, FormatError, TrainingDivergedError, TruncatedFileError, VersionMismatchError
from cfmlab.nn import Tensor


def make_model(objective="cfm", variant="mlp_linear", size=16, dtype=np.float64, seed=0, action_dim=4, **kw):
    enc = models.EncoderSpec.desk(size)
    fwd = models.ForwardModelSpec(variant, (32, 32), action_dim, 8, kw.pop("condition", "concat"))
    return models.init_model(objective, enc, fwd, seed, dtype, **kw)


def constant_encoder(ck, c):
    # zero the projection so every image maps to the bias vector
    ck.params["enc.fc.W"].data[:] = 0
    ck.params["enc.fc.b"].data[:] = c


def identity_forward(ck):
    d = ck.latent_dim
    for name, p in ck.params.items():
        if name.startswith("fwd."):
            p.data[:] = 0
    ck.params["fwd.out.b"].data[: d * d] = np.eye(d).ravel()


def rand_images(rng, n, size=16):
    return rng.integers(0, 256, size=(n, size, size, 3), dtype=np.uint8)


def batch_from_images(rng, n, size=16, action_dim=4):
    return Batch(dataset.normalize_images(rand_images(rng, n, size)).astype(np.float64),
                 rng.uniform(-1, 1, size=(n, action_dim)),
                 dataset.normalize_images(rand_images(rng, n, size)).astype(np.float64),
                 np.zeros((n, 2), dtype=np.int64))


# -- specs ------------------------------------------------------------------
def test_paper_preset():
    spec = models.EncoderSpec.paper()
    assert spec.kernels == (3, 4, 3, 4, 4, 4)
    assert spec.strides == (1, 2, 1, 2, 2, 2)
    assert spec.filters == (64, 64, 64, 128, 256, 256)
    assert spec.feature_shapes()[-1] == (256, 4)


def test_desk_preset():
    spec = models.EncoderSpec.desk(32)
    assert (spec.kernels, spec.strides, spec.filters) == ((3, 4, 4, 4), (1, 2, 2, 2), (16, 32, 32, 64))
    assert spec.feature_shapes() == [(16, 32), (32, 16), (32, 8), (64, 4)]
    assert models.EncoderSpec.desk(16).feature_shapes()[-1] == (64, 2)


def test_mlp_linear_output_size():
    ck = make_model()
    assert ck.params["fwd.out.W"].shape == (32, 8 * 8 + 8)


def test_bad_variant():
    with pytest.raises(ValueError):
        models.ForwardModelSpec("transformer")


# -- encode -------------------------------------------------------------------
def test_encode_shapes_and_determinism():
    ck = make_model(dtype=np.float32)
    rng = np.random.default_rng(0)
    imgs = rand_images(rng, 5)
    z = models.encode(ck, imgs[0])
    assert z.shape == (8,)
    assert np.array_equal(z, models.encode(ck, imgs[0].copy()))


def test_batch_encode_matches_single():
    ck = make_model()
    imgs = rand_images(np.random.default_rng(1), 4)
    zb = models.encode(ck, imgs)
    for i in range(4):
        assert np.allclose(zb[i], models.encode(ck, imgs[i]), rtol=0, atol=1e-12)


def test_encode_size_mismatch():
    ck = make_model(size=16)
    with pytest.raises(ValueError):
        models.encode(ck, np.zeros((32, 32, 3), np.uint8))


# -- forward models -----------------------------------------------------------
def test_mlp_linear_identity():
    ck = make_model()
    identity_forward(ck)
    z = np.random.default_rng(2).normal(size=8)
    assert np.array_equal(models.forward_latent(ck, z, np.array([0.1, 0.2, -0.3, 0.4])), z)


def test_mlp_linear_starts_at_identity_bias():
    ck = make_model()
    b = ck.params["fwd.out.b"].data
    assert np.array_equal(b[:64].reshape(8, 8), np.eye(8))
    assert not b[64:].any()
    # only the output-layer weights separate the fresh model from the identity
    ck.params["fwd.out.W"].data[:] = 0
    z = np.random.default_rng(1).normal(size=8)
    assert np.allclose(models.forward_latent(ck, z, np.ones(4)), z, atol=1e-6)


def test_linear_zero_weights_returns_bias():
    ck = make_model(variant="linear")
    ck.params["fwd.out.W"].data[:] = 0
    ck.params["fwd.out.b"].data[:] = np.arange(8)
    rng = np.random.default_rng(3)
    for _ in range(3):
        out = models.forward_latent(ck, rng.normal(size=8), rng.uniform(-1, 1, size=4))
        assert np.array_equal(out, np.arange(8.0))


def test_action_only_conditioning_ignores_nothing_but_z_input():
    ck = make_model(condition="action")
    assert ck.params["fwd.h0.W"].shape == (4, 32)
    z = np.random.default_rng(0).normal(size=8)
    out = models.forward_latent(ck, z, np.zeros(4))
    assert out.shape == (8,)


def test_forward_dim_mismatch():
    ck = make_model()
    with pytest.raises(ValueError):
        models.forward_latent(ck, np.zeros(8), np.zeros(5))
    with pytest.raises(ValueError):
        models.forward_latent(ck, np.zeros(7), np.zeros(4))


@pytest.mark.parametrize("variant", models.FORWARD_VARIANTS)
def test_forward_gradient_wrt_inputs(variant):
    ck = make_model(variant=variant, seed=4)
    rng = np.random.default_rng(4)
    store = nn.ParamStore(np.float64)
    store.add("z", rng.normal(size=(3, 8)))
    store.add("a", rng.uniform(-1, 1, size=(3, 4)))
    err = nn.grad_check(lambda p: (models.forward_tensor(ck, p["z"], p["a"]) ** 2).sum(), store)
    assert err < 1e-4


# -- similarities -----------------------------------------------------------
def test_similarity_e2_examples():
    z = np.array([0.3, -1.0, 2.0])
    assert models.similarity_e2(z, z) == 1.0
    assert models.similarity_e2(z, z + np.array([1.0, 0, 0])) == pytest.approx(math.exp(-1), abs=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.normal(size=8), rng.normal(size=8)
        s = models.similarity_e2(a, b)
        assert 0 < s < 1
        assert s == models.similarity_e2(b, a)


def test_similarity_logbilinear_examples():
    assert models.similarity_logbilinear([1, 0], [0, 1]) == 1.0
    assert models.similarity_logbilinear([1, 0], [1, 0]) == pytest.approx(math.e, abs=1e-15)
    z1, z2 = np.array([0.5, 0.2]), np.array([0.3, 0.1])
    assert models.similarity_logbilinear(z1, 2 * z2) > models.similarity_logbilinear(z1, z2)


def test_similarity_dim_mismatch():
    with pytest.raises(ValueError):
        models.similarity_e2([1, 2], [1, 2, 3])


# -- InfoNCE ----------------------------------------------------------------
def test_infonce_equal_similarities_is_log_b():
    z = Tensor(np.full((128, 8), 0.3))
    loss = models.info_nce(z, Tensor(np.full((128, 8), 0.7)))
    assert abs(float(loss.data) - math.log(128)) < 1e-9
    assert abs(float(loss.data) - 4.852030) < 1e-6


def test_infonce_separated_negatives():
    B, d = 6, 8
    z_next = np.zeros((B, d))
    for i in range(B):
        z_next[i, i % d] = math.sqrt(25.0)  # pairwise squared distance 50
    loss = models.info_nce(Tensor(z_next.copy()), Tensor(z_next))
    assert float(loss.data) < 1e-6


def test_infonce_exclude_positive_variant():
    z = Tensor(np.zeros((5, 8)))
    # all logits zero: log(4) with negatives only, log(5) with the positive included
    assert float(models.info_nce(z, z, include_positive=False).data) == pytest.approx(math.log(4), abs=1e-12)
    assert float(models.info_nce(z, z, include_positive=True).data) == pytest.approx(math.log(5), abs=1e-12)


@pytest.mark.parametrize("sim_id", models.SIMILARITIES)
def test_infonce_permutation_bit_identical(sim_id):
    rng = np.random.default_rng(9)
    zp, zn = rng.normal(size=(32, 8)), rng.normal(size=(32, 8))
    base = float(models.info_nce(Tensor(zp), Tensor(zn), sim_id).data)
    for _ in range(5):
        perm = rng.permutation(32)
        assert float(models.info_nce(Tensor(zp[perm]), Tensor(zn[perm]), sim_id).data) == base


def test_infonce_matches_direct_formula():
    rng = np.random.default_rng(1)
    zp, zn = rng.normal(size=(6, 8)), rng.normal(size=(6, 8))
    h = np.array([[models.similarity_e2(a, b) for b in zn] for a in zp])
    ref = np.mean([-math.log(h[i, i] / h[i].sum()) for i in range(6)])
    assert float(models.info_nce(Tensor(zp), Tensor(zn)).data) == pytest.approx(ref, rel=1e-12)


def test_infonce_rows_explicit_negatives_agree():
    rng = np.random.default_rng(2)
    zp, zn = rng.normal(size=(5, 8)), rng.normal(size=(5, 8))
    neg = np.stack([np.delete(zn, i, axis=0) for i in range(5)])
    a = float(models.info_nce(Tensor(zp), Tensor(zn)).data)
    b = float(models.info_nce_rows(Tensor(zp), Tensor(zn), Tensor(neg)).data)
    assert a == pytest.approx(b, rel=1e-12)


def test_infonce_needs_two_rows():
    with pytest.raises(ValueError):
        models.info_nce(Tensor(np.zeros((1, 8))), Tensor(np.zeros((1, 8))))
    ck = make_model()
    with pytest.raises(ValueError):
        models.infonce_loss(ck, batch_from_images(np.random.default_rng(0), 1))


# -- collapse witness ---------------------------------------------------------
@pytest.mark.parametrize("B", [2, 16, 128])
def test_collapse_witness(B):
    ck = make_model()
    constant_encoder(ck, np.linspace(-1, 1, 8))
    identity_forward(ck)
    batch = batch_from_images(np.random.default_rng(B), B)
    assert float(models.latent_mse_loss(ck, batch).data) == 0.0
    assert float(models.infonce_loss(ck, batch).data) == math.log(B)


# -- baselines ----------------------------------------------------------------
def test_autoencoder_constant_decoder():
    ck = make_model("autoencoder")
    constant_encoder(ck, 0.5)
    identity_forward(ck)
    for name, p in ck.params.items():
        if name.startswith("dec."):
            p.data[:] = 0
    last = max(n for n in ck.params.names() if n.startswith("dec.deconv") and n.endswith(".b"))
    ck.params[last].data[:] = -1.0
    rng = np.random.default_rng(0)
    for eps in (0.0, 0.01, 0.2):
        b = batch_from_images(rng, 4)
        b.obs[:] = -1.0 + eps
        assert float(models.autoencoder_loss(ck, b).data) == pytest.approx(eps**2, abs=1e-15)


def test_joint_constant_encoder_pays_action_variance():
    ck = make_model("joint")
    constant_encoder(ck, 0.2)
    identity_forward(ck)
    b = batch_from_images(np.random.default_rng(5), 16)
    for name, p in ck.params.items():
        if name.startswith("inv."):
            p.data[:] = 0
    # the inverse head regresses actions with picks rescaled to [-1, 1]
    target = dataset.normalize_actions(b.actions)
    ck.params["inv.out.b"].data[:] = target.mean(axis=0)
    variance = target.var(axis=0).sum()
    assert float(models.joint_loss(ck, b).data) == pytest.approx(variance, rel=1e-12)
    assert variance > 0


def test_joint_perfect_is_zero():
    ck = make_model("joint")
    constant_encoder(ck, 0.2)
    identity_forward(ck)
    b = batch_from_images(np.random.default_rng(6), 4)
    b.actions[:] = b.actions[0]
    for name, p in ck.params.items():
        if name.startswith("inv."):
            p.data[:] = 0
    ck.params["inv.out.b"].data[:] = dataset.normalize_actions(b.actions[0])
    assert float(models.joint_loss(ck, b).data) == 0.0


def test_missing_heads():
    ck = make_model("cfm")
    b = batch_from_images(np.random.default_rng(0), 2)
    with pytest.raises(ValueError, match="decoder"):
        models.autoencoder_loss(ck, b)
    with pytest.raises(ValueError, match="inverse"):
        models.joint_loss(ck, b)


def test_decoder_resolution_mirrors_encoder():
    for size in (16, 32):
        ck = make_model("autoencoder", size=size)
        out = models.decode_tensor(ck, Tensor(np.zeros((2, 8))))
        assert out.shape == (2, 3, size, size)


# -- gradient checks --------------------------------------------------------
@pytest.mark.parametrize("seed", range(3))
def test_loss_gradients(seed):
    items = checks.run_gradcheck([seed])
    for it in items:
        assert it.max_error < 1e-4, it
        assert it.checked > 0


# -- training ---------------------------------------------------------------
@pytest.fixture(scope="module")
def pm_data():
    return dataset.collect_random("pointmass", 8, 16, seed=3, size=16)


def test_train_deterministic(pm_data):
    cfg = models.TrainConfig(epochs=2, batch_size=32, seed=5)
    a, la = models.train(pm_data, cfg)
    b, lb = models.train(pm_data, cfg)
    assert la == lb
    assert models.save_checkpoint(a) == models.save_checkpoint(b)
    assert len(la) == 2


@pytest.mark.parametrize("objective", models.OBJECTIVES)
def test_train_each_objective(pm_data, objective):
    ck, losses = models.train(pm_data, models.TrainConfig(objective=objective, epochs=2, batch_size=32))
    assert ck.objective == objective
    assert all(np.isfinite(losses))


def test_train_divergence_raises(pm_data):
    cfg = models.TrainConfig(epochs=1, batch_size=32)
    ck = models.build_for_data(cfg, pm_data)
    ck.params["enc.fc.b"].data[:] = np.nan
    with pytest.raises(TrainingDivergedError):
        models.train(pm_data, cfg, ckpt=ck)


def test_train_defaults():
    cfg = models.TrainConfig()
    assert (cfg.batch_size, cfg.lr, cfg.epochs) == (128, 1e-3, 30)
    assert cfg.latent_dim == 8


def test_train_rejects_mismatched_env(pm_data):
    rope = dataset.collect_random("rope", 1, 2, seed=0, size=16)
    ck = models.build_for_data(models.TrainConfig(), pm_data)
    with pytest.raises(ValueError):
        models.train(rope, models.TrainConfig(epochs=1, batch_size=2), ckpt=ck)


# -- checkpoints --------------------------------------------------------------
@pytest.mark.parametrize("objective", models.OBJECTIVES)
def test_checkpoint_round_trip(objective):
    ck = make_model(objective, dtype=np.float32, seed=3)
    buf = models.save_checkpoint(ck)
    back = models.load_checkpoint(buf)
    assert models.save_checkpoint(back) == buf
    imgs = rand_images(np.random.default_rng(0), 3)
    assert np.array_equal(ck.encode_images(imgs), back.encode_images(imgs))
    assert back.objective == objective
    assert back.encoder == ck.encoder and back.forward == ck.forward


def test_checkpoint_file(tmp_path):
    ck = make_model(dtype=np.float32)
    models.save_checkpoint_file(ck, tmp_path / "m.cfmc")
    assert models.save_checkpoint(models.load_checkpoint_file(tmp_path / "m.cfmc")) == models.save_checkpoint(ck)


def test_checkpoint_corruption():
    buf = models.save_checkpoint(make_model(dtype=np.float32))
    with pytest.raises(BadMagicError):
        models.load_checkpoint(b"NOPE" + buf[4:])
    bad = bytearray(buf)
    bad[4] = 7
    with pytest.raises(VersionMismatchError):
        models.load_checkpoint(bytes(bad))
    for cut in (6, 40, len(buf) - 1):
        with pytest.raises(TruncatedFileError):
            models.load_checkpoint(buf[:cut])
    with pytest.raises(FormatError):
        models.load_checkpoint(buf + b"x")
