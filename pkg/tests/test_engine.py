import math

import numpy as np
import pytest

from ecpchart.chart import ChartConfig, Variant, sigma_at
from ecpchart.engine import (
    ArlEstimate,
    arl1_table,
    calibrate_l,
    estimate_arl,
    ewma_paths,
    make_shift,
    simulate_run_length,
    simulate_run_lengths,
)
from ecpchart.errors import CalibrationError, ValidationError
from ecpchart.misclass import MisclassMatrix, mix_proportion

PI = MisclassMatrix.symmetric(0.95)


def _geometric(p, m):
    # mean and standard error of a geometric(p) run length
    return 1.0 / p, math.sqrt(1.0 - p) / p / math.sqrt(m)


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("p", [0.05, 0.1])
def test_shewhart_limit_is_geometric(variant, p):
    # lambda = 1, n = 1: the chart signals exactly when the item is (observed) nonconforming
    cfg = ChartConfig(p0=0.05, lam=1.0, n=1, replicates=20000)
    est = estimate_arl(variant, 2.0, cfg, PI, p=p)
    p_signal = p if variant is Variant.TRUE else mix_proportion(p, PI)
    mean, se = _geometric(p_signal, cfg.replicates)
    assert abs(est.mean_rl - mean) < 4 * se
    assert est.censored == 0


def test_censoring_counted():
    cfg = ChartConfig(p0=0.05, lam=0.05, n=5, replicates=200, max_run_length=50)
    est = estimate_arl(Variant.TRUE, 10.0, cfg, PI)
    assert est.censored == 200 and est.mean_rl == 50


def test_arl_estimate_statistics():
    est = ArlEstimate.from_run_lengths(np.array([1, 2, 3, 4]), np.zeros(4, bool))
    assert est.mean_rl == 2.5
    assert est.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


def test_replicate_can_be_regenerated_alone():
    cfg = ChartConfig(p0=0.1, lam=0.2, n=10, replicates=50)
    rl, _ = simulate_run_lengths(Variant.CORRECTED, 2.5, cfg, PI)
    for k in (1, 17, 50):
        assert simulate_run_length(Variant.CORRECTED, 2.5, cfg, PI, replicate_index=k)[0] == rl[k - 1]


def test_results_do_not_depend_on_threads():
    cfg = ChartConfig(p0=0.05, lam=0.05, n=5, replicates=3001)
    one = estimate_arl(Variant.NAIVE, 2.3, cfg, PI, threads=1)
    four = estimate_arl(Variant.NAIVE, 2.3, cfg, PI, threads=4)
    assert one == four
    assert calibrate_l(Variant.NAIVE, cfg, PI, threads=1) == calibrate_l(Variant.NAIVE, cfg, PI, threads=3)


def test_surrogate_corrected_chart_is_affine_image_of_naive():
    # with the corrected observations computed from the same surrogate counts,
    # EWMA** - p0 = (EWMA* - p0*) / det and the limits scale the same way
    cfg = ChartConfig(p0=0.05, lam=0.05, n=5, replicates=2001)
    naive = simulate_run_lengths(Variant.NAIVE, 2.3, cfg, PI)
    corr = simulate_run_lengths(Variant.CORRECTED, 2.3, cfg, PI, stream="surrogate")
    np.testing.assert_array_equal(naive[0], corr[0])
    paths_n = ewma_paths(Variant.NAIVE, cfg, PI, 30)
    paths_c = ewma_paths(Variant.CORRECTED, cfg, PI, 30, stream="surrogate")
    np.testing.assert_allclose(paths_c - 0.05, (paths_n - mix_proportion(0.05, PI)) / PI.determinant, atol=1e-12)


def test_latent_corrected_chart_shares_true_data():
    cfg = ChartConfig(p0=0.05, lam=0.05, n=5, replicates=2001)
    np.testing.assert_array_equal(ewma_paths(Variant.CORRECTED, cfg, PI, 20, stream="latent"),
                                  ewma_paths(Variant.TRUE, cfg, PI, 20))
    # scaling L by the sd ratio reproduces the true chart's limits, so run lengths agree
    ratio = sigma_at(math.inf, Variant.TRUE, cfg, PI) / sigma_at(math.inf, Variant.CORRECTED, cfg, PI)
    a = simulate_run_lengths(Variant.TRUE, 2.4, cfg, PI)[0]
    b = simulate_run_lengths(Variant.CORRECTED, 2.4 * ratio, cfg, PI, stream="latent")[0]
    assert np.mean(a != b) < 0.01


def test_calibration_hits_target():
    cfg = ChartConfig(p0=0.2, lam=0.2, n=10, replicates=4001)
    res = calibrate_l(Variant.TRUE, cfg, PI)
    assert res.converged and abs(res.arl0_hat - 370) < 1
    again = estimate_arl(Variant.TRUE, res.l_star, cfg, PI)
    assert again.mean_rl == pytest.approx(res.arl0_hat)


def test_surrogate_calibration_gives_naive_coefficient():
    cfg = ChartConfig(p0=0.05, lam=0.05, n=5, replicates=2001)
    naive = calibrate_l(Variant.NAIVE, cfg, PI)
    corr = calibrate_l(Variant.CORRECTED, cfg, PI, stream="surrogate")
    assert corr.l_star == pytest.approx(naive.l_star, abs=1e-9)


def test_calibration_failure_reports_best():
    cfg = ChartConfig(p0=0.05, lam=0.05, n=5, replicates=500, l_bounds=(0.01, 0.5))
    with pytest.raises(CalibrationError) as info:
        calibrate_l(Variant.TRUE, cfg, PI)
    assert info.value.result.converged is False
    res = calibrate_l(Variant.TRUE, cfg, PI, raise_on_failure=False)
    assert not res.converged and res.arl0_hat < 369


def test_calibration_lower_bound_too_high():
    cfg = ChartConfig(p0=0.05, lam=0.05, n=5, replicates=500, l_bounds=(5.0, 10.0))
    res = calibrate_l(Variant.TRUE, cfg, PI, raise_on_failure=False)
    assert not res.converged and res.arl0_hat > 371


def test_shift_spec():
    s = make_shift(0.05, 0.1, PI)
    assert s.p1 == pytest.approx(0.055)
    assert s.p1_star == pytest.approx(0.95 * 0.055 + 0.05 * 0.945)
    assert s.p1_star_star == pytest.approx(0.055)
    with pytest.raises(ValidationError):
        make_shift(0.05, -0.1, PI)
    with pytest.raises(ValidationError):
        make_shift(0.9, 0.2, PI)


def test_unknown_stream_rejected():
    with pytest.raises(ValidationError):
        estimate_arl(Variant.CORRECTED, 2.0, ChartConfig(p0=0.05, lam=0.05, n=5, replicates=10), PI, stream="x")


def test_arl1_table_orderings():
    cfg = ChartConfig(p0=0.2, lam=0.2, n=10, replicates=3001)
    rows = arl1_table(cfg, PI, [0.2], [10], [0.0, 0.2], stream="latent")
    assert all(r["status"] == "ok" for r in rows)
    by = {(r["variant"], r["delta"]): r for r in rows}
    for v in ("true", "naive", "corrected"):
        ic, oc = by[(v, 0.0)], by[(v, 0.2)]
        # delta = 0 reuses the calibration streams exactly
        assert ic["arl1"] == pytest.approx(ic["arl0_hat"])
        assert oc["arl1"] <= ic["arl1"] + 4 * math.hypot(oc["std_error"], ic["std_error"])
    assert by[("naive", 0.2)]["arl1"] > by[("corrected", 0.2)]["arl1"]


def test_arl1_table_reports_bad_cells():
    cfg = ChartConfig(p0=0.9, lam=0.2, n=10, replicates=200)
    rows = arl1_table(cfg, PI, [0.9], [10], [0.5], variants=["true"])
    assert rows[0]["status"] != "ok"
