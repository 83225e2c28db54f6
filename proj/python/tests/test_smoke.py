import math

import numpy as np
import pytest

import fpmt


def test_metrics_and_losses():
    truth = [1] * 10 + [0] * 90
    pred = [1] * 8 + [0] * 2 + [1] + [0] * 89
    m = fpmt.compute_metrics(pred, truth)
    assert m["CR"] == pytest.approx(97.0)
    assert m["DR"] == pytest.approx(80.0)
    assert m["F1"] == pytest.approx(84.2105, abs=1e-3)
    with pytest.raises(fpmt.ProtocolError):
        fpmt.compute_metrics([0, 1], [0, 0])

    ce = fpmt.cross_entropy(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))
    assert ce == pytest.approx(math.log(2.0), abs=1e-9)
    kl = fpmt.kl_consistency(np.array([[0.5, 0.5]]), np.array([[0.25, 0.75]]))
    assert kl == pytest.approx(0.143841, abs=1e-6)
    assert fpmt.confidence_lambda(0.9, 0.3) == pytest.approx(0.75)
    assert fpmt.sign_test_p_value(5, 0) == pytest.approx(1 / 32)


def test_generate_and_csv_round_trip(tmp_path):
    x, y, synthetic = fpmt.generate_synthetic(300, 100, seed=4)
    assert x.shape == (400, 8)
    assert (y == 1).sum() == 100
    assert not synthetic.any()
    path = tmp_path / "d.csv"
    fpmt.save_csv(path, x, y)
    x2, y2, _ = fpmt.load_csv(path)
    assert np.array_equal(x, x2)
    assert np.array_equal(y, y2)
    with pytest.raises(fpmt.DataError):
        fpmt.save_csv(path, x, np.full(len(y), 3))


def test_balance_and_expand():
    x, y, _ = fpmt.generate_synthetic(300, 100, seed=2)
    x2, y2, synthetic = fpmt.balance_and_expand(x, y, 300, seed=1, gan_steps=50)
    assert (y2 == 0).sum() == 300 and (y2 == 1).sum() == 300
    assert synthetic.sum() == 200
    assert np.array_equal(x2[:400], x)


def test_train_predict_and_determinism(tmp_path):
    x, y, _ = fpmt.generate_synthetic(500, 400, seed=3)
    cfg = fpmt.PipelineConfig()
    cfg.variant = "pmt"
    for key, value in {"stage1_epochs": 2, "stage2_epochs": 4, "stage3_epochs": 3, "depth": 3, "width": 8}.items():
        cfg.set(key, str(value))
    cfg.labels_per_class = 30
    cfg.unlabeled_per_class = 200
    cfg.test_per_class = 100
    a = fpmt.run(x, y, cfg)
    b = fpmt.run(x, y, cfg)
    assert a.checkpoint == b.checkpoint
    assert a.report_csv == b.report_csv
    assert a.report_csv.startswith("epoch,stage,L_x,L_u,w,L_total\n")
    assert 0.0 <= a.metrics["DR"] <= 100.0

    a.save(tmp_path / "m.ckpt")
    model = fpmt.load_checkpoint(tmp_path / "m.ckpt")
    probs = model.predict_proba(x[:5])
    assert probs.shape == (5, 2)
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert 0.0 <= model.evaluate(x, y)["CR"] <= 100.0

    with pytest.raises(fpmt.ConfigError):
        cfg.set("warmup", "3")
    cfg.labels_per_class = 5000
    with pytest.raises(fpmt.DataError):
        fpmt.run(x, y, cfg)
