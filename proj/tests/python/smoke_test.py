"""Smoke tests for the _fsodl extension module.

Run with PYTHONPATH pointing at the built module directory:
    PYTHONPATH=build/python python3 tests/python/smoke_test.py
"""

import math
import os
import sys
import tempfile

try:
    import fsodl
except ImportError:
    import _fsodl as fsodl


def test_rng_determinism():
    a, b = fsodl.Rng(42), fsodl.Rng(42)
    assert [a.next_u64() for _ in range(50)] == [b.next_u64() for _ in range(50)]
    s0 = fsodl.Rng.substream(42, 0)
    s1 = fsodl.Rng.substream(42, 1)
    assert s0.next_u64() != s1.next_u64()


def test_gamma_moments():
    rng = fsodl.Rng(7)
    n = 200_000
    total = sum(fsodl.sample_gamma(rng, 2.0, 0.5) for _ in range(n))
    assert abs(total / n - 1.0) < 0.02


def test_channel():
    strong = fsodl.TurbulenceParams.strong()
    assert (strong.alpha, strong.beta) == (4.2, 1.4)
    assert abs(fsodl.scintillation_index(strong) - 1.12244897959) < 1e-9
    rng = fsodl.Rng(3)
    n = 100_000
    mean = sum(fsodl.sample_intensity(rng, strong) for _ in range(n)) / n
    assert abs(mean - 1.0) < 0.03
    assert abs(fsodl.noise_variance_for_snr(10.0, 1.0) - 0.1) < 1e-15


def test_modem():
    qam = fsodl.gray_qam_constellation(16)
    assert qam.order == 16
    assert abs(qam.mean_energy() - 1.0) < 1e-12
    for k, point in enumerate(qam.points):
        assert fsodl.ml_detect(2.5 * point, 2.5 + 0j, 1.0, qam) == k
    probs = fsodl.soft_detect(qam.points[3], qam, 1.0)
    assert abs(sum(probs) - 1.0) < 1e-9
    assert max(range(16), key=lambda u: probs[u]) == 3
    assert fsodl.one_hot(2, 4) == [0.0, 0.0, 1.0, 0.0]


def test_oracle():
    assert abs(fsodl.awgn_qam_ser_analytic(16, 10.0) - 0.222030850272) < 1e-9


def test_network_training_reduces_loss():
    link = fsodl.LinkConfig()
    link.es_n0_db = 14.0
    rng = fsodl.Rng(11)
    pipeline = fsodl.build_pipeline(fsodl.PipelineKind.b_qam_perfect_dnn, 16, link, rng)
    cfg = fsodl.TrainConfig()
    cfg.batch_size = 512
    cfg.dataset_batches = 2
    cfg.iterations = 120
    cfg.es_n0_db = 14.0
    cfg.turbulence = fsodl.TurbulenceParams.moderate()
    trace = pipeline.train(cfg, fsodl.Rng(12))
    assert len(trace) == 120
    assert all(math.isfinite(v) and v >= 0.0 for v in trace)
    assert trace[-1] < 0.5 * trace[0]
    assert pipeline.trained


def test_measurement_and_csv():
    link = fsodl.LinkConfig()
    rng = fsodl.Rng(21)
    a = fsodl.build_pipeline(fsodl.PipelineKind.a_qam_perfect_ml, 16, link, rng)
    stop = fsodl.StopRule()
    stop.max_symbols = 60_000
    stop.target_errors = 600
    rec = fsodl.measure_ser(a, None, 10.0, fsodl.Rng(22), stop)
    expected = fsodl.awgn_qam_ser_analytic(16, 10.0)
    assert abs(rec.ser - expected) < 3.0 * rec.standard_error
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "records.csv")
        fsodl.write_csv([rec], path)
        loaded = fsodl.read_csv(path)
        assert len(loaded) == 1
        assert loaded[0].ser == rec.ser
        assert loaded[0].symbols == rec.symbols


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"ok {test.__name__}")
    print(f"{len(tests)} python smoke tests passed")


if __name__ == "__main__":
    sys.exit(main())
