import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from basa import engine, streams
from basa.core import ClockState, Constant, Harmonic, HarmonicLog, LogPower, PowerLaw, resolve_step
from basa.engine import (
    AffineMap,
    AllCoordinates,
    AssumptionVerdict,
    BasaConfig,
    BasaStepError,
    BernoulliIndependent,
    FixedBatches,
    MeasurementModel,
    NoiseModel,
    SingleCoordinateCycle,
    SingleCoordinateFromIndexChain,
    basa_step,
    check_assumptions,
    cyclic_delays,
    d_process_closed_form,
    d_process_recursive,
    run_basa,
    step_weight_identity_check,
)

M3 = np.array([[0.2, 0.3, 0.1], [0.1, 0.2, 0.3], [0.3, 0.1, 0.2]])
B3 = np.array([1.0, -1.0, 0.5])


def _cfg(**kw):
    g = AffineMap(M3, B3)
    base = dict(
        theta0=np.zeros(3),
        measurement=MeasurementModel.memoryless(g),
        noise=NoiseModel.martingale(Constant(0.5)),
        mask=BernoulliIndependent([0.5, 0.7, 0.9]),
        schedule=Harmonic(),
        clock="local",
        horizon=500,
        fixed_point=g.fixed_point(),
        seed=1,
        stride=50,
    )
    base.update(kw)
    return BasaConfig(**base)


# -- masks ----------------------------------------------------------------


def _masks(proc, T, seed=0):
    proc.start(streams.stream(seed, streams.MASK))
    return np.array([proc.next_mask(t) for t in range(T)])


def test_all_coordinates_mask():
    assert _masks(AllCoordinates(4), 5).all()


@pytest.mark.parametrize(
    "proc", [SingleCoordinateCycle(5), SingleCoordinateFromIndexChain([[0.2, 0.8, 0], [0, 0.3, 0.7], [0.5, 0, 0.5]], 1)]
)
def test_single_coordinate_masks_emit_one(proc):
    ms = _masks(proc, 300)
    assert np.all(ms.sum(axis=1) == 1)


def test_cycle_order_and_index_chain_start():
    np.testing.assert_array_equal(_masks(SingleCoordinateCycle(3), 4).argmax(axis=1), [0, 1, 2, 0])
    chain = SingleCoordinateFromIndexChain([[0, 1], [1, 0]], start=1)
    np.testing.assert_array_equal(_masks(chain, 4).argmax(axis=1), [1, 0, 1, 0])


def test_bernoulli_rates():
    ms = _masks(BernoulliIndependent([0.1, 0.5, 1.0]), 20_000)
    np.testing.assert_allclose(ms.mean(axis=0), [0.1, 0.5, 1.0], atol=0.015)


def test_fixed_batches_cycle_and_validation():
    fb = FixedBatches(4, [[0, 2], [1], [3]], order=[2, 0])
    np.testing.assert_array_equal(_masks(fb, 2), [[0, 0, 0, 1], [1, 0, 1, 0]])
    assert not fb.updates_every_coordinate()
    with pytest.raises(ValueError):
        FixedBatches(3, [[0], [1]])


def test_reducible_index_chain_does_not_update_everything():
    assert not SingleCoordinateFromIndexChain(np.eye(2)).updates_every_coordinate()


# -- single step ----------------------------------------------------------


def test_zero_step_is_identity():
    th = np.array([1.0, -2.0, 3.0])
    out = basa_step(th, MeasurementModel.memoryless(AffineMap(M3, B3)), NoiseModel.none(), [True] * 3, np.zeros(3))
    np.testing.assert_array_equal(out, th)


def test_zero_finding_negative_identity_halves():
    th = np.array([4.0, -2.0])
    meas = MeasurementModel.memoryless(lambda x: -x, form="zero_finding")
    out = basa_step(th, meas, NoiseModel.none(), [True, True], np.full(2, 0.5))
    np.testing.assert_array_equal(out, th / 2)


def test_fixed_point_constant_map_halves_distance():
    c = np.array([1.0, -3.0, 2.5])
    th = np.array([9.0, 5.0, -7.0])
    meas = MeasurementModel.memoryless(lambda x: c)
    for k in range(1, 21):
        th = basa_step(th, meas, NoiseModel.none(), [True] * 3, np.full(3, 0.5))
        np.testing.assert_allclose(th, c + (np.array([9.0, 5.0, -7.0]) - c) / 2**k, rtol=0, atol=1e-12)


@given(st.lists(st.booleans(), min_size=5, max_size=5), st.integers(0, 1000))
def test_off_mask_coordinates_bit_identical(mask, seed):
    r = np.random.default_rng(seed)
    th = r.normal(size=5) * 10
    m = np.array(mask)
    alpha = np.where(m, r.uniform(0, 0.99, 5), 0.0)
    meas = MeasurementModel.memoryless(AffineMap(r.normal(size=(5, 5)) * 0.1, r.normal(size=5)))
    out = basa_step(th, meas, NoiseModel.martingale(Constant(1.0)), m, alpha, rng=np.random.default_rng(seed))
    assert out[~m].tobytes() == th[~m].tobytes()


def test_step_argument_checks():
    meas = MeasurementModel.memoryless(AffineMap(M3, B3))
    th = np.zeros(3)
    with pytest.raises(ValueError, match="dimension"):
        basa_step(th, meas, NoiseModel.none(), [True, True], np.zeros(2))
    with pytest.raises(ValueError, match="vanish"):
        basa_step(th, meas, NoiseModel.none(), [True, False, True], np.full(3, 0.5))
    with pytest.raises(ValueError, match=r"\[0, 1\)"):
        basa_step(th, meas, NoiseModel.none(), [True] * 3, np.ones(3))
    bad = MeasurementModel.memoryless(lambda x: x * np.nan)
    with pytest.raises(ValueError, match="not finite"):
        basa_step(th, bad, NoiseModel.none(), [True] * 3, np.full(3, 0.5))


def test_biased_noise_sits_on_envelopes():
    noise = NoiseModel.biased(Constant(0.2), Constant(0.5), c_mu=2.0)
    xi = np.array([noise.sample(0, 3.0, 1, np.random.default_rng(s))[0] for s in range(4000)])
    # mean c_mu mu scale = 1.2, std c_sigma sigma scale = 1.5
    assert abs(xi.mean() - 1.2) < 4 * 1.5 / np.sqrt(len(xi))
    assert abs(xi.std() - 1.5) < 0.06


def test_martingale_noise_must_be_centered():
    with pytest.raises(ValueError):
        NoiseModel(engine.NoiseKind.MARTINGALE_GAUSSIAN, mu=Constant(0.1), sigma=Constant(1.0))


# -- measurement models ---------------------------------------------------


def test_delayed_reads_lagged_coordinates():
    hist = [np.array([float(k), 10.0 + k]) for k in range(4)]  # theta_0..theta_3
    meas = MeasurementModel.delayed(lambda x: x, engine.fixed_delays([2, 0]), bound=3)
    np.testing.assert_array_equal(meas.map_value(3, hist[-3:]), [1.0, 13.0])
    # early on, missing history clamps to the oldest iterate
    np.testing.assert_array_equal(meas.map_value(0, hist[:1]), [0.0, 10.0])


def test_delay_bound_enforced():
    meas = MeasurementModel.delayed(lambda x: x, engine.fixed_delays([3, 0]), bound=3)
    with pytest.raises(ValueError, match="delays"):
        meas(0, [np.zeros(2)] * 3)


@given(st.integers(0, 10_000))
def test_delay_window_contraction(seed):
    r = np.random.default_rng(seed)
    d, window = 4, 3
    Mr = r.uniform(-1, 1, (d, d))
    Mr *= 0.9 / np.abs(Mr).sum(axis=1).max()
    g = AffineMap(Mr, r.normal(size=d))
    meas = MeasurementModel.delayed(g, cyclic_delays(d, window), bound=window)
    t = int(r.integers(0, 50))
    th = [r.normal(size=d) for _ in range(window)]
    ph = [r.normal(size=d) for _ in range(window)]
    gap = max(np.max(np.abs(a - b)) for a, b in zip(th, ph))
    lhs = np.max(np.abs(meas.map_value(t, th) - meas.map_value(t, ph)))
    assert lhs <= meas.contraction * gap + 1e-12


def test_history_average_window():
    meas = MeasurementModel.history_average(lambda x: x, window=2)
    hist = [np.array([0.0]), np.array([2.0]), np.array([4.0])]
    np.testing.assert_array_equal(meas.map_value(2, hist[-2:]), [3.0])


# -- run loop -------------------------------------------------------------


def test_deterministic_contraction_converges_monotonically():
    g = AffineMap(M3 / 6, B3)  # sup-norm Lipschitz constant 0.1
    tr = run_basa(_cfg(measurement=MeasurementModel.memoryless(g), noise=NoiseModel.none(),
                       mask=AllCoordinates(3), clock="global", horizon=10_000, fixed_point=g.fixed_point(), stride=1))
    assert np.all(np.diff(tr.sup_err) < 0)
    assert tr.sup_err[-1] < 1e-3


def test_horizon_zero_rejected():
    with pytest.raises(ValueError, match="horizon"):
        run_basa(_cfg(horizon=0))


def test_fixed_point_dimension_checked():
    with pytest.raises(ValueError, match="fixed point"):
        run_basa(_cfg(fixed_point=np.zeros(2)))


def test_identical_seeds_identical_traces():
    a, b = run_basa(_cfg(seed=9)), run_basa(_cfg(seed=9))
    for f in ("t", "sup_err", "lambda_t", "step_partial_sums", "visit_counts"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()
    assert run_basa(_cfg(seed=10)).sup_err.tobytes() != a.sup_err.tobytes()


def test_trace_invariants_and_counters():
    cfg = _cfg(horizon=400, stride=1)
    tr = run_basa(cfg)
    assert np.all(np.diff(tr.lambda_t) >= 0)
    # replay the mask stream and the reference step resolver
    proc = BernoulliIndependent([0.5, 0.7, 0.9])
    proc.start(streams.stream(cfg.seed, streams.MASK))
    clock = ClockState.new("local", 3)
    psums = np.zeros(3)
    for t in range(cfg.horizon):
        psums += resolve_step(Harmonic(), clock, proc.next_mask(t))
        np.testing.assert_array_equal(tr.visit_counts[t + 1], clock.counters)
        np.testing.assert_allclose(tr.step_partial_sums[t + 1], psums, rtol=1e-13)


def test_step_errors_carry_index():
    calls = {"n": 0}

    def g(x):
        calls["n"] += 1
        return x * np.inf if calls["n"] > 5 else x

    with pytest.raises(BasaStepError, match="step 5"):
        run_basa(_cfg(measurement=MeasurementModel.memoryless(g), fixed_point=None))


def test_shorter_run_is_prefix_of_longer():
    short, long = run_basa(_cfg(horizon=300, stride=100)), run_basa(_cfg(horizon=900, stride=100))
    k = len(short)
    assert short.sup_err.tobytes() == long.sup_err[:k].tobytes()
    assert short.lambda_t.tobytes() == long.lambda_t[:k].tobytes()


@pytest.mark.slow
def test_boundedness_stable_between_horizons():
    peaks_1e4, peaks_1e5 = [], []
    for seed in range(10):
        tr = run_basa(_cfg(seed=seed, horizon=100_000, stride=10_000, c1=0.0))
        peaks_1e4.append(tr.lambda_t[tr.at(10_000)])
        peaks_1e5.append(tr.lambda_t[-1])
    assert np.isfinite(max(peaks_1e5))
    assert max(peaks_1e5) <= 1.01 * max(peaks_1e4)


# -- proof apparatus ------------------------------------------------------


def test_d_process_base_cases():
    a, z = [0.3, 0.6, 0.2], [9.0, 2.0, 5.0, -1.0]
    assert d_process_recursive(a, z, 1, 1) == 0.6 * 5.0
    assert d_process_closed_form(a, z, 1, 1) == 0.6 * 5.0
    assert d_process_recursive([0.0] * 3, z, 0, 2) == 0.0
    assert d_process_closed_form([1.0] * 3, z, 0, 2) == z[3]


def test_d_process_index_errors():
    with pytest.raises(IndexError):
        d_process_recursive([0.1], [0.0, 1.0], 1, 0)
    with pytest.raises(IndexError):
        d_process_closed_form([0.1, 0.2], [0.0, 1.0], 0, 1)


@given(st.integers(0, 10_000), st.integers(0, 10), st.integers(0, 20))
def test_d_process_forms_agree(seed, s, extra):
    r = np.random.default_rng(seed)
    k = s + extra
    a, z = r.uniform(0, 1, k + 1), r.normal(size=k + 2) * 5
    assert abs(d_process_recursive(a, z, s, k) - d_process_closed_form(a, z, s, k)) < 1e-12


def test_step_weight_examples():
    assert step_weight_identity_check([0.5], 0) == 1.0
    assert step_weight_identity_check([0.0] * 5, 4) == 1.0


@given(st.integers(0, 10_000), st.integers(0, 100))
def test_step_weight_identity(seed, T):
    a = np.random.default_rng(seed).uniform(0, 1, T + 1)
    assert abs(step_weight_identity_check(a, T) - 1.0) < 1e-12


# -- assumption report ----------------------------------------------------


def test_contraction_gives_f4_and_implies_rest():
    M = np.array([[0.45, 0.45], [0.0, 0.9]])
    rep = check_assumptions(MeasurementModel.memoryless(AffineMap(M, [0.0, 1.0])), NoiseModel.none(), Harmonic())
    assert rep["F4"].verdict is AssumptionVerdict.HOLDS_BY_CONSTRUCTION
    assert "gamma=0.9" in rep["F4"].detail and "Delta=1" in rep["F4"].detail
    assert all(rep[n].verdict is AssumptionVerdict.IMPLIED for n in ("F1", "F2", "F3"))
    assert rep["N"].verdict is AssumptionVerdict.HOLDS_BY_CONSTRUCTION


def test_growing_variance_example_satisfies_s1():
    noise = NoiseModel.biased(LogPower(q=0.5, t0=2.0), PowerLaw(p=-0.25, t0=2.0))
    rep = check_assumptions(MeasurementModel.memoryless(AffineMap(M3, B3)), noise, HarmonicLog(), mask=AllCoordinates(3))
    assert rep["S1"].verdict is AssumptionVerdict.HOLDS_ANALYTICALLY
    assert rep["S2"].verdict is AssumptionVerdict.HOLDS_ANALYTICALLY


def test_s1_and_s2_failures():
    meas = MeasurementModel.memoryless(AffineMap(M3, B3))
    rep = check_assumptions(meas, NoiseModel.biased(Constant(0.5), Constant(1.0)), Harmonic(), mask=AllCoordinates(3))
    assert rep["S1"].verdict is AssumptionVerdict.FAILS and "mu beta" in rep["S1"].detail
    rep = check_assumptions(meas, NoiseModel.none(), PowerLaw(p=2.0), mask=AllCoordinates(3))
    assert rep["S2"].verdict is AssumptionVerdict.FAILS
    rep = check_assumptions(meas, NoiseModel.none(), Harmonic(), mask=FixedBatches(3, [[0], [1, 2]], [0]))
    assert rep["S2"].verdict is AssumptionVerdict.FAILS


def test_unknown_contraction_is_inconclusive():
    rep = check_assumptions(MeasurementModel.memoryless(lambda x: x), NoiseModel.intrinsic(), Harmonic())
    assert all(rep[n].verdict is AssumptionVerdict.INCONCLUSIVE for n in ("F1", "F2", "F3", "F4", "N", "S2"))
