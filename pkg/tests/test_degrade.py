import numpy as np
import pytest

from liftdiff.data import build_pairs, estimator_pairs
from liftdiff.degrade import (DegradationEstimator, DegradationParams, PRESETS,
                              compress_blocks, degrade, estimate_embedding,
                              train_estimator)
from liftdiff.synth import synth_batch, synth_image


def psnr(a, b):
    mse = float(((a - b) ** 2).mean())
    return 99.0 if mse == 0 else 10 * np.log10(1.0 / mse)


def test_presets_match_published_levels():
    assert PRESETS["mild"] == DegradationParams(4, 15, 70, 4)
    assert PRESETS["medium"] == DegradationParams(6, 25, 50, 4)
    assert PRESETS["severe"] == DegradationParams(8, 35, 30, 4)


def test_param_validation():
    with pytest.raises(ValueError, match="sigma"):
        DegradationParams(sigma=20, delta=0, q=50)
    with pytest.raises(ValueError, match="q"):
        DegradationParams(sigma=1, delta=0, q=0)
    with pytest.raises(ValueError, match="r"):
        DegradationParams(sigma=1, delta=0, q=50, r=3)


def test_near_identity_settings():
    p = DegradationParams(sigma=0, delta=0, q=100, r=1)
    flat = np.full((1, 32, 32), 0.42, dtype=np.float32)
    assert np.abs(degrade(flat, p, seed=0) - flat).max() <= 1e-3
    # generic content: integer coefficient rounding leaves sub-half-unit
    # noise on the 0-255 scale, so the 1e-3 bound holds in the mean
    x = synth_image(3, 0, size=32)
    y = degrade(x, p, seed=0)
    assert np.abs(y - x).mean() <= 1e-3
    assert np.abs(y - x).max() <= 6e-3


def test_determinism_given_seed():
    x = synth_image(4, 1, size=64)
    p = PRESETS["medium"]
    y1 = degrade(x, p, seed=77)
    y2 = degrade(x, p, seed=77)
    y3 = degrade(x, p, seed=78)
    assert np.array_equal(y1, y2)
    assert not np.array_equal(y1, y3)


def test_severe_checker_regression_fixture():
    checker = np.indices((64, 64)).sum(axis=0) % 2
    x = (checker[None] * 0.8 + 0.1).astype(np.float32)
    y = degrade(x, PRESETS["severe"], seed=5)
    from liftdiff.images import bicubic_resize
    ref = bicubic_resize(x, (16, 16))
    # frozen at the first verified run of this pipeline
    assert psnr(y, ref) == pytest.approx(19.545, abs=0.05)


def test_monotone_quality_over_presets():
    from liftdiff.images import bicubic_resize
    clean = synth_batch(11, 20, size=64)
    scores = {}
    for name in ("mild", "medium", "severe"):
        vals = []
        for i, x in enumerate(clean):
            y = degrade(x, PRESETS[name], seed=100 + i)
            vals.append(psnr(y, bicubic_resize(x, (16, 16))))
        scores[name] = float(np.mean(vals))
    assert scores["mild"] > scores["medium"] > scores["severe"]


def test_extent_errors():
    x = np.zeros((1, 62, 62), np.float32)
    with pytest.raises(ValueError, match="divisible"):
        degrade(x, PRESETS["mild"], seed=0)
    x2 = np.zeros((1, 16, 16), np.float32)  # 16/4=4 not divisible by 8
    with pytest.raises(ValueError, match="divisible by 8"):
        degrade(x2, PRESETS["mild"], seed=0)


def test_compression_idempotent_within_one_step():
    rng = np.random.default_rng(8)
    x = rng.uniform(0, 1, size=(1, 16, 16)).astype(np.float32)
    for q in (30, 50, 80):
        y1 = compress_blocks(x, q)
        y2 = compress_blocks(y1, q)
        from scipy.fft import dctn
        from liftdiff.degrade import _quant_table
        c1 = dctn((y1.astype(np.float64) * 255 - 128).reshape(2, 8, 2, 8).transpose(0, 2, 1, 3),
                  axes=(-2, -1), norm="ortho")
        c2 = dctn((y2.astype(np.float64) * 255 - 128).reshape(2, 8, 2, 8).transpose(0, 2, 1, 3),
                  axes=(-2, -1), norm="ortho")
        tab = _quant_table(q)
        assert np.all(np.abs(c1 - c2) <= tab + 1e-6)


# ---------------------------------------------------------------------------
# embedding regressor


@pytest.fixture(scope="module")
def trained_estimator():
    ys, targets = estimator_pairs(seed=21, count=1500, size=64)
    est, stats = train_estimator(ys, targets, steps=1200, lr=2e-3, batch_size=32, seed=0)
    return est, stats, (ys, targets)


def test_untrained_estimator_errors():
    est = DegradationEstimator(seed=0)
    with pytest.raises(RuntimeError, match="trained"):
        estimate_embedding(np.zeros((1, 8, 8), np.float32), est)


def test_estimator_loss_halves(trained_estimator):
    _, stats, _ = trained_estimator
    assert stats["final_loss"] < 0.5 * stats["init_loss"], stats


def test_estimator_single_sample_overfits():
    ys, targets = estimator_pairs(seed=33, count=1, size=32)
    est, stats = train_estimator(ys, targets, steps=300, holdout=0.0, seed=1)
    assert stats["final_loss"] < 0.02, stats


def test_empty_dataset_errors():
    with pytest.raises(ValueError, match="empty"):
        train_estimator(np.zeros((0, 1, 8, 8), np.float32), np.zeros((0, 3), np.float32))


def test_crop_embeddings_consistent(trained_estimator):
    est, _, _ = trained_estimator
    x = synth_image(40, 2, size=96)
    y = degrade(x, PRESETS["medium"], seed=9)  # (1,24,24)
    e1 = estimate_embedding(y[:, :16, :16], est)
    e2 = estimate_embedding(y[:, 8:, 8:], est)
    cos = float(e1 @ e2 / (np.linalg.norm(e1) * np.linalg.norm(e2) + 1e-9))
    assert cos > 0.9, cos


def test_mild_vs_severe_sigma_separable(trained_estimator):
    est, _, _ = trained_estimator
    from liftdiff.autodiff import Tensor, no_grad
    wins = 0
    for i in range(100):
        x = synth_image(50, i, size=64)
        ym = degrade(x, PRESETS["mild"], seed=1000 + i)
        ys = degrade(x, PRESETS["severe"], seed=2000 + i)
        with no_grad():
            pm = est.predict(Tensor(ym[None])).data[0, 0]
            ps = est.predict(Tensor(ys[None])).data[0, 0]
        wins += int(ps > pm)
    assert wins >= 90, wins


def test_clean_input_predicts_low_delta(trained_estimator):
    est, _, _ = trained_estimator
    from liftdiff.autodiff import Tensor, no_grad
    preds = []
    for i in range(20):
        x = synth_image(60, i, size=64)
        y = degrade(x, DegradationParams(sigma=2, delta=0, q=100), seed=i)
        with no_grad():
            preds.append(est.predict(Tensor(y[None])).data[0, 1])
    # normalized delta; bottom quartile of the sampled training range [0, 60]
    assert float(np.mean(preds)) < 0.15, np.mean(preds)
