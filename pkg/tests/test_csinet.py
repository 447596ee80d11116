import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csilab import autodiff as ad
from csilab.autodiff import Tensor
from csilab.csinet import (
    CheckpointError,
    DivergenceError,
    ModelConfig,
    Normalizer,
    TrainConfig,
    augment_negatives,
    decode,
    digest,
    encode,
    forward,
    fuse_windows,
    infonce_loss,
    init_params,
    load,
    make_batch,
    predict_from_scores,
    save,
    similarity,
    train_on_features,
    verify,
)
from csilab.csinet.fixtures import model_gradcheck, model_loss, tiny_batch, tiny_config
from csilab.csinet.model import as_tensors, attention_weights, cross_modal_attend, film_modulate
from csilab.pipeline import SegmentFeatures


def consts(params):
    return {k: Tensor(v) for k, v in params.items()}


# -- FiLM ---------------------------------------------------------------------------

def test_film_identity_when_output_layer_zeroed():
    rng = np.random.default_rng(0)
    d = 8
    x = Tensor(rng.normal(size=(1, 5, d)))
    W1, b1 = Tensor(rng.normal(size=(1, d, d))), Tensor(rng.normal(size=(1, d)))
    W2 = Tensor(np.zeros((1, d, 2 * d)))
    b2 = Tensor(np.concatenate([np.ones(d), np.zeros(d)])[None])
    np.testing.assert_array_equal(film_modulate(x, W1, b1, W2, b2).data, x.data)


def test_film_zero_gamma_outputs_beta():
    rng = np.random.default_rng(1)
    d = 4
    x = Tensor(rng.normal(size=(1, 7, d)))
    beta = rng.normal(size=d)
    out = film_modulate(x, Tensor(rng.normal(size=(1, d, d))), Tensor(np.zeros((1, d))),
                        Tensor(np.zeros((1, d, 2 * d))), Tensor(np.concatenate([np.zeros(d), beta])[None]))
    np.testing.assert_allclose(out.data, np.broadcast_to(beta, x.shape), atol=0)


@given(st.integers(1, 9), st.integers(1, 6))
@settings(max_examples=20, deadline=None)
def test_film_preserves_shape(t, d):
    rng = np.random.default_rng(t * 10 + d)
    x = Tensor(rng.normal(size=(2, t, d)))
    out = film_modulate(x, Tensor(rng.normal(size=(2, d, d))), Tensor(np.zeros((2, d))),
                        Tensor(rng.normal(size=(2, d, 2 * d))), Tensor(np.zeros((2, 2 * d))))
    assert out.shape == x.shape


# -- attention ----------------------------------------------------------------------

def _attn_params(cfg, seed=0):
    p = init_params(cfg)
    tag = f"w{cfg.windows[0]:02d}"
    names = ["Wq", "Wk", "Wo", "bo", "ln_g", "ln_b"]
    return {n: Tensor(p[f"{tag}.attn0.{n}"][None]) for n in names}


def test_single_key_gets_all_weight():
    cfg = tiny_config()
    rng = np.random.default_rng(2)
    q = Tensor(rng.normal(size=(1, 2, 1, 6, cfg.embed_dim)))
    f = Tensor(rng.normal(size=(1, 2, 3, 1, cfg.embed_dim)))
    w, _ = attention_weights(q, f, np.ones((1, 2, 3, 1), dtype=bool), _attn_params(cfg), cfg)
    np.testing.assert_array_equal(w.data, 1.0)


def test_identical_keys_give_uniform_weights():
    cfg = tiny_config()
    rng = np.random.default_rng(3)
    q = Tensor(rng.normal(size=(1, 1, 1, 4, cfg.embed_dim)))
    row = rng.normal(size=cfg.embed_dim)
    f = Tensor(np.broadcast_to(row, (1, 1, 2, 5, cfg.embed_dim)).copy())
    w, _ = attention_weights(q, f, np.ones((1, 1, 2, 5), dtype=bool), _attn_params(cfg), cfg)
    np.testing.assert_allclose(w.data, 1 / 5, rtol=1e-12)


def test_masked_key_positions_do_not_change_output():
    cfg = tiny_config()
    rng = np.random.default_rng(4)
    q = Tensor(rng.normal(size=(1, 1, 1, 4, cfg.embed_dim)))
    fl = rng.normal(size=(1, 1, 2, 5, cfg.embed_dim))
    mask = np.ones((1, 1, 2, 5), dtype=bool)
    mask[..., 3:] = False
    p = _attn_params(cfg)
    ref = cross_modal_attend(q, Tensor(fl), mask, p, cfg, False, 0, 0, 0).data
    fl[..., 3:, :] = rng.normal(size=fl[..., 3:, :].shape) * 1e6
    out = cross_modal_attend(q, Tensor(fl), mask, p, cfg, False, 0, 0, 0).data
    assert np.array_equal(ref, out)


# -- similarity and fusion --------------------------------------------------------------

def test_similarity_identities():
    rng = np.random.default_rng(5)
    e = rng.normal(size=(1, 3, 4))
    mask = np.ones((1, 3), dtype=bool)
    flows = np.stack([e, 10 * e, np.zeros_like(e)], axis=1)  # (1, 3, 3, 4)
    sims = similarity(Tensor(e), Tensor(flows), mask).data
    np.testing.assert_allclose(sims[0, :2], 1.0, atol=1e-12)
    assert sims[0, 2] == 0.0
    a = np.array([[[1.0, 0.0]]])
    b = np.array([[[[0.0, 2.0]]]])
    assert similarity(Tensor(a), Tensor(b), np.ones((1, 1), dtype=bool)).data[0, 0] == 0.0


@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_similarity_scale_invariant(c, seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=(1, 5, 6))
    f = rng.normal(size=(1, 2, 5, 6))
    m = np.ones((1, 5), dtype=bool)
    a = similarity(Tensor(e), Tensor(f), m).data
    b = similarity(Tensor(c * e), Tensor(f), m).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_fusion_uniform_and_dominant():
    rng = np.random.default_rng(6)
    sims = rng.uniform(-1, 1, size=(2, 3, 4))
    final, alpha = fuse_windows(Tensor(sims), Tensor(np.zeros((2, 4))))
    np.testing.assert_allclose(final.data, sims.mean(axis=-1), atol=1e-15)
    np.testing.assert_allclose(alpha.data, 0.25)
    logits = np.zeros((2, 4))
    logits[:, 2] = 60.0
    final, _ = fuse_windows(Tensor(sims), Tensor(logits))
    np.testing.assert_allclose(final.data, sims[..., 2], atol=1e-20)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_fusion_convex_and_normalised(seed):
    rng = np.random.default_rng(seed)
    sims = rng.uniform(-1, 1, size=(3, 2, 5))
    final, alpha = fuse_windows(Tensor(sims), Tensor(rng.normal(0, 5, size=(3, 5))))
    np.testing.assert_allclose(alpha.data.sum(axis=-1), 1.0, atol=1e-9)
    assert np.all(final.data >= sims.min(axis=-1) - 1e-12)
    assert np.all(final.data <= sims.max(axis=-1) + 1e-12)


# -- forward ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny():
    cfg = tiny_config()
    return cfg, consts(init_params(cfg))


def _take_candidates(batch, order):
    order = np.asarray(order)
    return replace(batch, flow={w: x[:, order] for w, x in batch.flow.items()},
                   flow_mask={w: m[:, order] for w, m in batch.flow_mask.items()},
                   cand_mask=batch.cand_mask[:, order])


def test_scores_bounded_and_alpha_normalised(tiny):
    cfg, p = tiny
    _, sc = forward(tiny_batch(cfg, n_candidates=3), p, cfg)
    assert np.all(np.abs(sc.sims) <= 1 + 1e-12) and np.all(np.abs(sc.final) <= 1 + 1e-12)
    np.testing.assert_allclose(sc.alpha.sum(axis=1), 1.0, atol=1e-9)


def test_single_real_candidate_wins(tiny):
    cfg, p = tiny
    b = tiny_batch(cfg, n_candidates=3)
    b = replace(b, cand_mask=np.array([[True, False, False]] * 2), y=np.zeros(2, dtype=int))
    _, sc = forward(b, p, cfg)
    assert predict_from_scores(sc) == [0, 0]
    assert np.all(sc.final[:, 1:] == -1.0)


def test_permutation_equivariance(tiny):
    cfg, p = tiny
    b = tiny_batch(cfg, n_candidates=4, seed=7)
    _, ref = forward(b, p, cfg)
    order = [2, 0, 3, 1]
    _, sc = forward(_take_candidates(b, order), p, cfg)
    np.testing.assert_allclose(sc.final, ref.final[:, order], atol=1e-12)
    for i in range(2):
        assert order[predict_from_scores(sc)[i]] == predict_from_scores(ref)[i]


def test_duplicate_candidates_score_identically(tiny):
    cfg, p = tiny
    b = _take_candidates(tiny_batch(cfg, n_candidates=2, seed=8), [0, 1, 0])
    _, sc = forward(b, p, cfg)
    np.testing.assert_array_equal(sc.final[:, 0], sc.final[:, 2])


def test_mask_soundness_bitwise(tiny):
    cfg, p = tiny
    b = tiny_batch(cfg, n_candidates=3, seed=9)
    b.cand_mask[0, 2] = False
    b.y[:] = 0
    _, ref = forward(b, p, cfg)
    loss_ref = model_loss(p, b, cfg).data
    rng = np.random.default_rng(10)
    for w in cfg.windows:
        pad_i = ~b.imu_mask[w]
        b.imu[w][pad_i] = 1e9 * rng.normal(size=(pad_i.sum(), b.imu[w].shape[-1]))
        pad = ~(b.flow_mask[w] & b.cand_mask[:, :, None])
        b.flow[w][pad] = np.nan
    _, sc = forward(b, p, cfg)
    assert np.array_equal(sc.final, ref.final) and np.array_equal(sc.sims, ref.sims)
    assert np.array_equal(model_loss(p, b, cfg).data, loss_ref)


def test_fully_masked_candidate_is_invalid(tiny):
    cfg, p = tiny
    b = tiny_batch(cfg, n_candidates=2)
    for w in cfg.windows:
        b.flow_mask[w][:, 1] = False
    b.y[:] = 0
    _, sc = forward(b, p, cfg)
    assert not sc.valid[:, 1].any() and np.all(sc.final[:, 1] == -1.0)
    for w in cfg.windows:
        b.flow_mask[w][:, 0] = False
    _, sc = forward(b, p, cfg)
    assert predict_from_scores(sc) == [None, None]


# -- InfoNCE ------------------------------------------------------------------------

def direct_infonce(s, y, tau):
    total = 0.0
    for row, yi in zip(s, y):
        z = [math.exp(v / tau) for v in row]
        total += -math.log(z[yi] / sum(z))
    return total / len(s)


def test_infonce_worked_example():
    loss = infonce_loss(Tensor(np.array([[10.0, 0.0, 0.0]])), [0], tau=1.0).item()
    # the reference 9.0800e-5 is 2e^-10 to five figures; ln(1 + x) sits 4.5e-5 relative below it
    assert loss == pytest.approx(9.0800e-5, rel=1e-4)
    assert loss == pytest.approx(math.log(1 + 2 * math.exp(-10)), rel=1e-12)


def test_infonce_uniform_is_log_p():
    for p in (2, 3, 8):
        assert infonce_loss(Tensor(np.full((1, p), 0.3)), [1], tau=0.07).item() == pytest.approx(math.log(p), rel=1e-12)


def test_infonce_matches_direct_formula():
    rng = np.random.default_rng(11)
    for _ in range(100):
        b, c = rng.integers(1, 6), rng.integers(1, 9)
        s = rng.uniform(-1, 1, size=(b, c))
        y = rng.integers(0, c, size=b)
        got = infonce_loss(Tensor(s), y, tau=0.5).item()
        assert abs(got - direct_infonce(s, y, 0.5)) < 1e-12


def test_infonce_sharper_temperature_lowers_loss_for_argmax():
    rng = np.random.default_rng(12)
    for _ in range(200):
        s = rng.uniform(-1, 1, size=(1, 4))
        y = [int(np.argmax(s))]
        if np.sort(s[0])[-1] - np.sort(s[0])[-2] < 1e-3:
            continue
        for tau in (1.0, 0.5, 0.2, 0.1):
            assert infonce_loss(Tensor(s), y, tau=tau / 2).item() < infonce_loss(Tensor(s), y, tau=tau).item()


def test_infonce_clips_and_sanitises():
    s = np.array([[np.nan, np.inf, 1.0]])
    loss = infonce_loss(Tensor(s), [2], tau=0.01).item()
    assert np.isfinite(loss)
    # NaN and Inf become 0; 1 / 0.01 = 100 clips to 30
    assert loss == pytest.approx(direct_infonce([[0.0, 0.0, 0.3]], [2], 0.01), rel=1e-12)


def test_infonce_rejects_bad_target():
    with pytest.raises(ValueError):
        infonce_loss(Tensor(np.zeros((1, 3))), [3])
    with pytest.raises(ValueError):
        infonce_loss(Tensor(np.zeros((1, 3))), [2], valid=np.array([[True, True, False]]))


def test_infonce_l2_term():
    p = {"a": Tensor(np.array([1.0, 2.0]))}
    base = infonce_loss(Tensor(np.zeros((1, 2))), [0], tau=1.0).item()
    assert infonce_loss(Tensor(np.zeros((1, 2))), [0], tau=1.0, lam=0.1, params=p).item() == pytest.approx(base + 0.5)


# -- negatives ----------------------------------------------------------------------

def _feat(rng, n_cand, target, windows=(5, 6), t=4):
    dim = {w: w // 2 + 7 for w in windows}
    return SegmentFeatures({w: rng.normal(size=(t, dim[w])) for w in windows},
                           [{w: rng.normal(size=(t, dim[w])) for w in windows} for _ in range(n_cand)],
                           0.05, target)


def test_augment_negatives_appends_five():
    rng = np.random.default_rng(13)
    feats = [_feat(rng, 3, 2), _feat(rng, 2, 1)]
    b = make_batch(feats, (5, 6))
    pool = [_feat(rng, 1, 0).flows[0] for _ in range(8)]
    a = augment_negatives(b, pool, k=5, seed=1)
    np.testing.assert_array_equal(a.n_candidates, b.n_candidates + 5)
    np.testing.assert_array_equal(a.y, b.y)
    for w in (5, 6):
        np.testing.assert_array_equal(a.flow[w][0, :3], b.flow[w][0, :3])
        np.testing.assert_array_equal(a.flow[w][1, :2], b.flow[w][1, :2])
    assert augment_negatives(b, pool, k=0) is b


def test_augment_negatives_small_pool_samples_with_replacement():
    rng = np.random.default_rng(14)
    b = make_batch([_feat(rng, 2, 0)], (5, 6))
    a = augment_negatives(b, [_feat(rng, 1, 0).flows[0]], k=5, seed=0)
    assert a.n_candidates[0] == 7
    for w in (5, 6):
        for k in range(3, 7):
            np.testing.assert_array_equal(a.flow[w][0, k], a.flow[w][0, 2])


# -- gradients ----------------------------------------------------------------------

def test_full_model_gradcheck():
    errs = model_gradcheck()
    assert len(errs) == len(init_params(tiny_config()))
    bad = {k: v for k, v in errs.items() if not v < 1e-5}
    assert not bad, bad


def test_gradcheck_catches_corrupted_backward():
    cfg = tiny_config(attn_layers=1, windows=(5,))
    errs = model_gradcheck(cfg, backward_hook=lambda k, g: g * 1.1 if k.endswith("attn0.Wq") else g)
    assert errs["w05.attn0.Wq"] > 1e-3
    assert max(v for k, v in errs.items() if not k.endswith("attn0.Wq")) < 1e-5


def test_gradcheck_variants():
    for kw in ({"shared_kv_projection": False}, {"share_scales": True}, {"fusion_uses_quality": True},
               {"film": False, "fusion": False}):
        cfg = tiny_config(attn_layers=1, **kw)
        errs = model_gradcheck(cfg, tiny_batch(cfg, n_segments=1))
        assert max(errs.values()) < 1e-5, (kw, errs)


# -- checkpoints --------------------------------------------------------------------

def test_checkpoint_roundtrip_and_layout(tmp_path):
    cfg = tiny_config()
    arrays = init_params(cfg)
    path = tmp_path / "m.ckpt"
    save(path, arrays)
    raw = path.read_bytes()
    assert raw[:4] == b"CSIN" and int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == len(arrays)
    first = sorted(arrays)[0].encode()
    assert int.from_bytes(raw[12:14], "little") == len(first) and raw[14 : 14 + len(first)] == first
    back = load(path, cfg)
    assert list(back) == sorted(arrays)
    for k in arrays:
        np.testing.assert_array_equal(back[k], arrays[k])
    assert encode(back) == raw


def test_checkpoint_shape_mismatch_rejected(tmp_path):
    arrays = init_params(tiny_config())
    path = tmp_path / "m.ckpt"
    save(path, arrays)
    with pytest.raises(CheckpointError):
        load(path, tiny_config(embed_dim=12))
    with pytest.raises(CheckpointError):
        decode(b"XXXX" + encode(arrays)[4:])
    with pytest.raises(CheckpointError):
        decode(encode(arrays)[:-3])
    bad = dict(arrays)
    bad.pop(sorted(bad)[0])
    with pytest.raises(CheckpointError):
        verify(bad, tiny_config())


# -- training -----------------------------------------------------------------------

def _toy_features(n, seed=0, windows=(5, 6), n_cand=3, t=6):
    """Separable toy task: the target flow track equals the IMU track plus small noise."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        dim = {w: w // 2 + 7 for w in windows}
        imu = {w: np.abs(rng.normal(size=(t, dim[w]))) for w in windows}
        target = int(rng.integers(n_cand))
        flows = []
        for k in range(n_cand):
            if k == target:
                flows.append({w: imu[w] + 0.05 * np.abs(rng.normal(size=imu[w].shape)) for w in windows})
            else:
                flows.append({w: np.abs(rng.normal(size=(t, dim[w]))) for w in windows})
        out.append(SegmentFeatures(imu, flows, float(rng.uniform(0.02, 0.1)), target))
    return out


def test_overfits_eight_segments():
    cfg = tiny_config(embed_dim=16, dropout=0.0, n_negatives=0)
    feats = _toy_features(8, seed=1)
    tc = TrainConfig(epochs=100, batch_size=4, lr=3e-3, t_max=100, patience=1000)  # 200 steps
    res = train_on_features([feats], feats, cfg, tc)
    assert res.best_val_acc == 1.0


def test_training_is_deterministic(tmp_path):
    cfg = tiny_config()
    feats = _toy_features(10, seed=2)
    tc = TrainConfig(epochs=2, batch_size=4, lr=1e-3, seed=5)
    a = train_on_features([feats[:8]], feats[8:], cfg, tc)
    b = train_on_features([feats[:8]], feats[8:], cfg, tc)
    assert save(tmp_path / "a", a.arrays()) == save(tmp_path / "b", b.arrays())
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    c = train_on_features([feats[:8]], feats[8:], cfg, tc.replace(seed=6))
    assert digest(c.arrays()) != digest(a.arrays())


def test_early_stopping_after_patience():
    cfg = tiny_config()
    feats = _toy_features(6, seed=3)
    res = train_on_features([feats], feats, cfg, TrainConfig(epochs=20, lr=0.0, patience=3))
    assert res.stopped_early and len(res.curves) == 4 and res.best_epoch == 0


def test_divergence_aborts():
    cfg = tiny_config(loss_l2=1e-3)
    feats = _toy_features(8, seed=4)
    params = init_params(cfg)
    params["fusion.b2"][:] = np.nan
    with pytest.raises(DivergenceError):
        train_on_features([feats], feats, cfg, TrainConfig(epochs=1, batch_size=2), params=params)


def test_normalizer_roundtrip():
    feats = _toy_features(5, seed=5)
    n = Normalizer.fit(feats, (5, 6))
    m = Normalizer.from_arrays(n.to_arrays(), "spectral")
    a, b = n.normalize(feats[0]), m.normalize(feats[0])
    for w in (5, 6):
        np.testing.assert_array_equal(a.imu[w], b.imu[w])
