import numpy as np
import pytest
import torch

from dacseg.errors import InputError
from dacseg.evaluate import (MetricResult, aggregate_runs, dsc, ensemble_predict, evaluate_domain,
                             format_summary_table, iou, plot_domain_bars, read_results_csv,
                             result_rows, summarize, write_results_csv)
from dacseg.model import ModelConfig, SubModel


def _m(pixels, shape=(1, 8, 8)):
    m = np.zeros(shape, dtype=np.uint8)
    for y, x in pixels:
        m[0, y, x] = 1
    return m


A = _m([(0, 0), (0, 1), (0, 2), (0, 3)])
B = _m([(0, 2), (0, 3), (0, 4), (0, 5)])
C = _m([(7, 7)])


def test_dsc_cases():
    assert dsc(A, A)[0] == 100.0
    assert dsc(A, C)[0] == 0.0
    assert dsc(A, B)[0] == pytest.approx(50.0)
    assert dsc(_m([]), _m([]))[0] == 100.0
    assert dsc(_m([]), C)[0] == 0.0


def test_iou_cases():
    assert iou(A, A)[0] == 100.0
    assert iou(A, C)[0] == 0.0
    assert iou(A, B)[0] == pytest.approx(100 * 2 / 6)
    assert iou(_m([]), _m([]))[0] == 100.0


def test_metric_shape_mismatch():
    with pytest.raises(InputError):
        dsc(np.zeros((1, 8, 8)), np.zeros((2, 8, 8)))


def test_dsc_ge_iou_property():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = rng.random((1, 6, 6)) < rng.random()
        g = rng.random((1, 6, 6)) < rng.random()
        d, j = dsc(p, g)[0], iou(p, g)[0]
        assert 0 <= j <= d <= 100
        if d == j:
            assert d in (0.0, 100.0)
        # dice is a fixed function of the Jaccard index
        assert d == pytest.approx(200 * (j / 100) / (1 + j / 100), abs=1e-9)


class Const(torch.nn.Module):
    """Stub sub-model returning fixed probabilities."""

    def __init__(self, p):
        super().__init__()
        self.p = torch.as_tensor(p, dtype=torch.float32)
        self.w = torch.nn.Parameter(torch.zeros(1))

    def forward_segmentation(self, x):
        return self.p.expand(x.shape[0], *self.p.shape)


def test_ensemble_identical_models():
    m = SubModel(ModelConfig(), 0)
    x = torch.rand(3, 64, 64)
    pred = ensemble_predict(m, m, x)
    with torch.no_grad():
        assert torch.equal(pred, (m.eval().forward_segmentation(x[None])[0] > 0.5).to(torch.uint8))


def test_ensemble_mean_threshold():
    a = Const(torch.full((1, 2, 2), 0.9))
    b = Const(torch.full((1, 2, 2), 0.3))
    assert ensemble_predict(a, b, torch.zeros(3, 2, 2)).min() == 1


def test_ensemble_loop_oracle_and_symmetry():
    rng = np.random.default_rng(1)
    p1, p2 = rng.random((2, 6, 6)).astype(np.float32), rng.random((2, 6, 6)).astype(np.float32)
    a, b = Const(p1), Const(p2)
    out = ensemble_predict(a, b, torch.zeros(3, 6, 6), sigma=0.4).numpy()
    for c in range(2):
        for y in range(6):
            for x in range(6):
                assert out[c, y, x] == int((float(p1[c, y, x]) + float(p2[c, y, x])) / 2 > 0.4)
    assert np.array_equal(out, ensemble_predict(b, a, torch.zeros(3, 6, 6), sigma=0.4).numpy())


def test_ensemble_restores_train_mode():
    m = SubModel(ModelConfig(), 0).train()
    ensemble_predict(m, m, torch.rand(3, 32, 32))
    assert m.training


def test_evaluate_domain_cases():
    gt = np.zeros((1, 4, 4), np.uint8)
    gt[0, :2] = 1
    perfect = Const(gt.astype(np.float32))
    r = evaluate_domain(perfect, perfect, [(np.zeros((3, 4, 4)), gt)])
    assert r.per_class_dsc[0] == 100 and r.per_class_iou[0] == 100 and r.num_samples == 1
    r2 = evaluate_domain(perfect, perfect, [(np.zeros((3, 4, 4)), gt)] * 2)
    assert np.array_equal(r.per_class_dsc, r2.per_class_dsc)
    miss = np.zeros_like(gt)
    miss[0, 2:] = 1
    r3 = evaluate_domain(perfect, perfect, [(np.zeros((3, 4, 4)), gt), (np.zeros((3, 4, 4)), miss)])
    assert r3.per_class_dsc[0] == pytest.approx(50.0)
    with pytest.raises(InputError):
        evaluate_domain(perfect, perfect, [])


def test_evaluate_domain_order_invariant():
    m1, m2 = SubModel(ModelConfig(), 0), SubModel(ModelConfig(), 1)
    rng = np.random.default_rng(2)
    samples = [(rng.random((3, 32, 32)).astype(np.float32), (rng.random((2, 32, 32)) > 0.7).astype(np.uint8))
               for _ in range(5)]
    a = evaluate_domain(m1, m2, samples, batch_size=2)
    b = evaluate_domain(m1, m2, samples[::-1], batch_size=3)
    assert np.allclose(a.per_class_dsc, b.per_class_dsc, atol=1e-9)
    assert np.all((0 <= a.per_class_dsc) & (a.per_class_dsc <= 100))


def test_aggregate_runs():
    r = MetricResult([70.0, 90.0], [60.0, 80.0], "D")
    agg = aggregate_runs([r, r, r])
    assert np.all(agg.std.per_class_dsc == 0) and agg.num_runs == 3
    agg = aggregate_runs([MetricResult([v], [v]) for v in (1.0, 2.0, 3.0)])
    assert agg.mean.per_class_dsc[0] == 2.0 and agg.std.per_class_dsc[0] == pytest.approx(1.0)
    assert aggregate_runs([r]).std.per_class_dsc.tolist() == [0.0, 0.0]
    with pytest.raises(InputError):
        aggregate_runs([r, MetricResult([1.0], [1.0])])
    with pytest.raises(InputError):
        aggregate_runs([])


def test_csv_summary_and_plots(tmp_path):
    rows = []
    for seed, (d1, d2) in enumerate([(70, 90), (72, 91), (74, 92)]):
        rows += result_rows(MetricResult([d1, d2], [d1 - 10, d2 - 10]), seed, "D", "A", ["cup", "disc"])
    path = tmp_path / "r.csv"
    write_results_csv(path, rows, ["dacseg test"])
    assert path.read_text().startswith("# dacseg test\nrun_seed,target_domain,labeled_domain,class,dsc,iou")
    back = read_results_csv(path)
    summ = summarize(back)
    cup = [s for s in summ if s["class"] == "cup"][0]
    assert cup["dsc_mean"] == pytest.approx(72.0) and cup["dsc_std"] == pytest.approx(2.0) and cup["runs"] == 3
    table = format_summary_table(summ)
    assert "72.00±2.00" in table
    paths = plot_domain_bars(summ, tmp_path / "plots")
    assert [p.name for p in paths] == ["dsc_D.png"] and paths[0].stat().st_size > 0
