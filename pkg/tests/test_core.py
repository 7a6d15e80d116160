"""Workload recursion: step mechanics, windows, gradient bounds, fast path."""

import math

import numpy as np
import pytest

from qprice import (
    Deterministic,
    Exponential,
    QueueState,
    run_arrivals,
    run_window,
    step,
)
from qprice.core import _advance
from qprice import _kernels

from helpers import LAMBDA, THETA1, THETA2, ex1_model, ex1_service, ex_h_model


class TestStep:
    def test_empty_system_is_memoryless(self):
        # from zero workload the interarrival is exponential with the thinned
        # rate, and the workload gradient stays at zero
        model = ex_h_model()
        svc = ex1_service()
        rng = np.random.default_rng(0)
        rate = LAMBDA * math.exp(-THETA1 * 12.0)
        draws = []
        for _ in range(20_000):
            state, event = step(QueueState(), model, 12.0, rng, svc)
            draws.append(event.interarrival)
            assert event.regenerated
            assert event.workload_pre == 0.0
            assert state.grad_p_workload == 0.0
        assert np.mean(draws) == pytest.approx(1.0 / rate, rel=0.03)

    def test_zero_service_is_pure_drain(self):
        model = ex_h_model()
        svc = Deterministic(0.0)
        rng = np.random.default_rng(1)
        state = QueueState(workload_post=5.0)
        state2, event = step(state, model, 3.0, rng, svc)
        assert state2.workload_post == max(5.0 - event.interarrival, 0.0)

    def test_clock_and_counter_advance(self):
        model = ex1_model()
        svc = ex1_service()
        rng = np.random.default_rng(2)
        state = QueueState()
        last_clock = 0.0
        for i in range(500):
            state, event = step(state, model, 4.0, rng, svc)
            assert state.clock > last_clock
            assert state.workload_post >= 0.0
            assert event.interarrival > 0.0
            last_clock = state.clock
        assert state.arrivals_seen == 500

    def test_gradient_recursion_matches_manual(self):
        # replay the recursion by hand from the recorded events
        model = ex_h_model()
        svc = ex1_service()
        rng = np.random.default_rng(3)
        state = QueueState()
        gw = 0.0
        for _ in range(2000):
            state, event = step(state, model, 8.0, rng, svc)
            gw = 0.0 if event.regenerated else gw - event.grad_p_interarrival
            assert state.grad_p_workload == gw


class TestGradientBounds:
    def test_workload_gradient_band_long_run(self):
        # the post-arrival workload gradient stays in [-theta1/theta2, 0]
        svc = ex1_service()
        for price in (5.0, 10.0, 20.0):
            rng = np.random.default_rng(int(price))
            seeds = rng.random(300_000)
            seeds[seeds == 0.0] = 2.2e-16
            services = svc.sample_many(rng, 300_000)
            _, _, _, gw_min, gw_max, _, _, _ = _kernels.pinned_run(
                _kernels.EXPONENTIAL, THETA1, THETA2, LAMBDA, price, 0.0, 0.0, seeds, services
            )
            assert gw_min >= -THETA1 / THETA2 - 1e-12
            assert gw_max <= 1e-12

    def test_interarrival_gradient_nonnegative_and_busy_bounded(self):
        # every interarrival gradient is >= 0; on arrivals that find work
        # left (busy branch) it is also <= theta1/theta2
        model = ex_h_model()
        svc = ex1_service()
        rng = np.random.default_rng(44)
        state = QueueState()
        for _ in range(100_000):
            state, event = step(state, model, 15.0, rng, svc)
            assert event.grad_p_interarrival >= -1e-12
            if not event.regenerated:
                assert event.grad_p_interarrival <= THETA1 / THETA2 + 1e-12

    def test_pathwise_gradient_matches_common_random_numbers(self):
        # same seed and service streams at price p and p + h: the forward
        # difference of workloads tracks the pathwise gradient wherever the
        # two paths share their regeneration pattern
        model = ex_h_model()
        svc = ex1_service()
        h = 1e-4
        rng = np.random.default_rng(12)
        seeds = rng.random(5000)
        seeds[seeds == 0.0] = 2.2e-16
        services = svc.sample_many(rng, 5000)
        w0 = g0 = w1 = g1 = 0.0
        in_sync = True
        checked = 0
        for k in range(5000):
            a0, _, _, w0, g0, r0 = _advance(model, 10.0, w0, g0, seeds[k], services[k])
            a1, _, _, w1, g1, r1 = _advance(model, 10.0 + h, w1, g1, seeds[k], services[k])
            if r0 != r1:
                in_sync = False
            elif r0:
                in_sync = True  # both regenerated: gradients restart together
            if in_sync:
                assert (w1 - w0) / h == pytest.approx(g0, abs=1e-3)
                checked += 1
        assert checked > 4000


class TestWindow:
    def test_window_mechanics(self):
        model = ex1_model()
        svc = ex1_service()
        state = QueueState(workload_post=2.0, grad_p_workload=-0.3, clock=7.0, arrivals_seen=4)
        new_state, rec = run_window(state, model, 6.0, svc, 25.0, np.random.default_rng(5))
        assert rec.count >= 1
        assert rec.duration >= 25.0
        assert rec.opened_at == 7.0
        assert abs(math.fsum(rec.interarrivals) - rec.duration) < 1e-9
        assert new_state.clock == state.clock + rec.duration
        assert new_state.arrivals_seen == 4 + rec.count
        # the elapsed time before the closing arrival is short of the minimum
        assert rec.duration - rec.interarrivals[-1] < 25.0

    def test_gradient_resets_at_window_open(self):
        # carried workload gradients do not leak into the next window
        model = ex_h_model()
        svc = ex1_service()
        s_a = QueueState(workload_post=3.0, grad_p_workload=0.0)
        s_b = QueueState(workload_post=3.0, grad_p_workload=-0.4)
        _, rec_a = run_window(s_a, model, 9.0, svc, 30.0, np.random.default_rng(6))
        _, rec_b = run_window(s_b, model, 9.0, svc, 30.0, np.random.default_rng(6))
        assert rec_a.interarrivals == rec_b.interarrivals
        assert rec_a.grad_interarrivals == rec_b.grad_interarrivals

    def test_single_arrival_window(self):
        # a tiny minimum still yields one arrival, closing the window at it
        model = ex1_model()
        svc = ex1_service()
        _, rec = run_window(QueueState(), model, 5.0, svc, 1e-9, np.random.default_rng(7))
        assert rec.count == 1
        assert rec.duration == rec.interarrivals[0]

    def test_rejects_bad_duration(self):
        with pytest.raises(ValueError):
            run_window(QueueState(), ex1_model(), 5.0, ex1_service(), 0.0, np.random.default_rng(1))

    def test_long_window_mean_matches_independent_run(self):
        # pinned price: window mean interarrival agrees with an independent
        # long run within 1%
        model = ex1_model()
        svc = ex1_service()
        _, rec = run_window(QueueState(), model, 8.0, svc, 10_000.0, np.random.default_rng(8))
        window_mean = rec.duration / rec.count
        _, elapsed = run_arrivals(QueueState(), model, 8.0, svc, 200_000, np.random.default_rng(9))
        assert window_mean == pytest.approx(elapsed / 200_000, rel=0.01)


class TestFastPath:
    @pytest.mark.parametrize("model,code", [(ex_h_model(), 0), (ex1_model(), 1)], ids=["exp", "poly"])
    def test_kernel_matches_reference(self, model, code):
        # identical pre-drawn randomness through the compiled kernel and the
        # reference recursion gives identical trajectories
        svc = ex1_service()
        rng = np.random.default_rng(10)
        n = 20_000
        seeds = rng.random(n)
        seeds[seeds == 0.0] = 2.2e-16
        services = svc.sample_many(rng, n)
        price = 11.0
        elapsed_k, w_k, gw_k, *_ = _kernels.pinned_run(
            code, model.theta1, model.theta2, model.lambda_max, price, 1.5, -0.1, seeds, services
        )
        w = 1.5
        gw = -0.1
        elapsed = 0.0
        for k in range(n):
            _a, _ga, _, w, gw, _ = _advance(model, price, w, gw, seeds[k], services[k])
            elapsed += _a
        assert elapsed_k == elapsed
        assert w_k == w
        assert gw_k == gw

    @pytest.mark.parametrize("model", [ex_h_model(), ex1_model()], ids=["exp", "poly"])
    def test_window_kernel_matches_python_path(self, model):
        svc = ex1_service()
        state = QueueState(workload_post=1.2)
        fast_state, fast_rec = run_window(state, model, 7.0, svc, 200.0, np.random.default_rng(13))
        ref_state, ref_rec = run_window(
            state, model, 7.0, svc, 200.0, np.random.default_rng(13), kernel=False
        )
        assert fast_rec.interarrivals == ref_rec.interarrivals
        assert fast_rec.grad_interarrivals == ref_rec.grad_interarrivals
        assert fast_rec.regenerations == ref_rec.regenerations
        assert fast_rec.duration == ref_rec.duration
        assert fast_state == ref_state

    def test_run_arrivals_generic_fallback(self):
        # the pure-python path drives arbitrary joining probabilities
        from qprice import NumericJoining

        gen = NumericJoining(
            theta1=THETA1,
            theta2=THETA2,
            lambda_max=LAMBDA,
            joining_prob=lambda p, v: math.exp(-THETA1 * p - THETA2 * v),
        )
        state, elapsed = run_arrivals(QueueState(), gen, 10.0, ex1_service(), 200, np.random.default_rng(11))
        state_c, elapsed_c = run_arrivals(QueueState(), ex_h_model(), 10.0, ex1_service(), 200, np.random.default_rng(11))
        assert elapsed == pytest.approx(elapsed_c, rel=1e-9)
        assert state.workload_post == pytest.approx(state_c.workload_post, rel=1e-9)

    def test_run_arrivals_validates(self):
        with pytest.raises(ValueError):
            run_arrivals(QueueState(), ex1_model(), 5.0, ex1_service(), 0, np.random.default_rng(0))
