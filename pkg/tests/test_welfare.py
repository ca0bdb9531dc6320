import numpy as np
import pytest

from apq import (
    ClassSpec,
    InvalidScaleError,
    ServiceSpec,
    SimConfig,
    absolute_priority_waits,
    build_model,
    cmu_order,
    conservation_residual,
    pricing_total_costs,
    pricing_transform,
    scaled_bids,
    simulate,
    social_cost,
    solve_heterogeneous,
    waiting_times,
    welfare_report,
)
from apq.simulator import backend_name
from conftest import (
    WELFARE_M1_A,
    WELFARE_M1_B,
    five_exp_model,
    random_stable_model,
    welfare_model,
)

needs_fast_kernel = pytest.mark.skipif(
    backend_name() != "cython",
    reason="large oracle runs need the compiled kernel",
)


class TestSocialCost:
    def test_equal_bids_fcfs(self):
        m = five_exp_model(0.5)
        expected = sum(
            c.arrival_rate * c.waiting_cost for c in m.classes
        ) * m.fcfs_wait()
        assert social_cost(m, (1.0,) * 5) == pytest.approx(expected, rel=1e-14)

    def test_equilibrium_reference_value(self):
        m = five_exp_model(0.5)
        res = solve_heterogeneous(m, restarts=1)
        assert social_cost(m, res.bids) == pytest.approx(0.25427, abs=1e-3)

    def test_is_a_dot_product(self, rng):
        for _ in range(10):
            m = random_stable_model(rng)
            bids = rng.uniform(0.1, 2.0, m.n_classes)
            W = waiting_times(m, bids)
            direct = sum(
                c.arrival_rate * c.waiting_cost * w
                for c, w in zip(m.classes, W)
            )
            assert social_cost(m, bids) == pytest.approx(direct, rel=1e-12)


class TestCmuOrder:
    def test_worked_example_with_ties(self):
        m = build_model(
            ClassSpec(0.05, ServiceSpec.moments(x, max(4 * x * x, 0.1)), c)
            for c, x in zip((0.2, 0.4, 0.6, 0.8, 1.0), (1, 2, 0.5, 1.2, 1.5))
        )
        # ratios (0.2, 0.2, 1.2, 0.667, 0.667): stable ascending order
        assert cmu_order(m) == (0, 1, 3, 4, 2)

    def test_identical_means_follow_costs(self):
        m = five_exp_model(0.5)
        assert cmu_order(m) == (0, 1, 2, 3, 4)

    def test_long_services_can_invert_cost_order(self):
        m = build_model([
            ClassSpec(0.05, ServiceSpec.exponential(1.0), 1.0),
            ClassSpec(0.02, ServiceSpec.exponential(10.0), 2.0),
        ])
        assert cmu_order(m) == (1, 0)


class TestAbsolutePriority:
    def test_single_class_fcfs(self):
        m = build_model([ClassSpec(0.5, ServiceSpec.exponential(1.0), 1.0)])
        W = absolute_priority_waits(m, (0,))
        assert W[0] == pytest.approx(m.fcfs_wait(), rel=1e-14)

    def test_two_class_closed_form(self):
        m = build_model([
            ClassSpec(0.25, ServiceSpec.exponential(1.0), 1.0),
            ClassSpec(0.25, ServiceSpec.exponential(1.0), 1.0),
        ])
        # class 1 top priority: lowest-to-highest order is (2, 1)
        W = absolute_priority_waits(m, (1, 0))
        assert W[0] == pytest.approx(0.5 / (1.0 * 0.75), rel=1e-12)
        assert W[1] == pytest.approx(0.5 / (0.75 * 0.5), rel=1e-12)

    def test_work_conservation(self, rng):
        for _ in range(20):
            m = random_stable_model(rng)
            W = absolute_priority_waits(m, cmu_order(m))
            assert conservation_residual(m, W) < 1e-10

    def test_rejects_non_permutation(self):
        m = five_exp_model(0.5)
        with pytest.raises(ValueError):
            absolute_priority_waits(m, (0, 1, 2, 3, 3))


class TestScaledBids:
    def test_rank_powers(self):
        assert tuple(scaled_bids((0, 1, 2), 2.0, 1)) == (2.0, 4.0, 8.0)

    def test_rank_follows_permutation(self):
        bids = scaled_bids((2, 0, 1), 2.0, 1)
        assert tuple(bids) == (4.0, 8.0, 2.0)

    def test_invalid_scales(self):
        with pytest.raises(InvalidScaleError):
            scaled_bids((0, 1), 1.0, 5)
        with pytest.raises(InvalidScaleError):
            scaled_bids((0, 1), 2.0, 0)
        with pytest.raises(InvalidScaleError):
            scaled_bids(tuple(range(6)), 2.0, 200)  # overflows

    def test_converges_to_absolute_priority(self):
        m = welfare_model(WELFARE_M1_A, 0.5)
        order = cmu_order(m)
        exact = absolute_priority_waits(m, order)
        gaps = []
        for n in range(1, 11):
            approx = waiting_times(m, scaled_bids(order, 2.0, n))
            gaps.append(float(np.max(np.abs(approx - exact) / exact)))
        assert all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-3

    @needs_fast_kernel
    def test_simulator_confirms_two_class_priority(self):
        m = build_model([
            ClassSpec(0.25, ServiceSpec.exponential(1.0), 1.0),
            ClassSpec(0.25, ServiceSpec.exponential(1.0), 1.0),
        ])
        W = absolute_priority_waits(m, (1, 0))
        stats = simulate(SimConfig(
            model=m, bids=(2.0 ** 30, 1.0), customers=4 * 10**6,
            warmup=10**5, seed=77,
        ))
        for i in range(2):
            assert abs(stats.per_class[i].mean - W[i]) <= stats.per_class[i].ci99


class TestPricing:
    def test_identity_when_means_are_one(self):
        m = five_exp_model(0.5)
        assert pricing_transform(m) == m

    def test_costs_divided_by_means(self):
        m = welfare_model(WELFARE_M1_B, 0.5)
        t = pricing_transform(m)
        for orig, new in zip(m.classes, t.classes):
            assert new.waiting_cost == pytest.approx(
                orig.waiting_cost / orig.service.moment1(), rel=1e-14
            )

    def test_total_costs_add_expected_payment(self):
        m = welfare_model(WELFARE_M1_B, 0.5)
        bids = (0.1, 0.2, 0.3, 0.4, 0.5)
        W = waiting_times(m, bids)
        totals = pricing_total_costs(m, bids)
        for i, c in enumerate(m.classes):
            expected = c.waiting_cost * W[i] + c.service.moment1() * bids[i]
            assert totals[i] == pytest.approx(expected, rel=1e-14)

    def test_pricing_reorders_bids_by_cmu_ratio(self, rng):
        models = [welfare_model(WELFARE_M1_A, 0.5), welfare_model(WELFARE_M1_B, 0.5)]
        models += [random_stable_model(rng) for _ in range(8)]
        for m in models:
            priced = solve_heterogeneous(pricing_transform(m), restarts=1)
            ratios = [c.waiting_cost / c.service.moment1() for c in m.classes]
            order = cmu_order(m)
            bids = [priced.bids[k] for k in order]
            for a, b, ra, rb in zip(bids, bids[1:],
                                    [ratios[k] for k in order],
                                    [ratios[k] for k in order][1:]):
                if rb > ra * (1 + 1e-9):  # strict ratio order, strict bid order
                    assert b > a
                else:  # (near-)tied ratios end up at (near-)equal bids
                    assert b == pytest.approx(a, rel=1e-6)


class TestWelfareReport:
    def test_single_class_ratios_are_one(self):
        m = build_model([ClassSpec(0.5, ServiceSpec.exponential(1.0), 1.0)])
        rep = welfare_report(m, restarts=1)
        assert rep.ratio_no_pricing == pytest.approx(1.0, abs=1e-12)
        assert rep.ratio_pricing == pytest.approx(1.0, abs=1e-12)

    def test_reference_points_regression(self):
        # frozen values computed by this implementation
        rep = welfare_report(welfare_model(WELFARE_M1_B, 0.5), restarts=1)
        assert rep.ratio_no_pricing == pytest.approx(1.1315, abs=2e-4)
        assert rep.ratio_pricing == pytest.approx(1.1048, abs=2e-4)
        rep_a = welfare_report(welfare_model(WELFARE_M1_A, 0.5), restarts=1)
        assert rep_a.ratio_no_pricing == pytest.approx(1.1626, abs=2e-4)
        assert rep_a.ratio_pricing == pytest.approx(1.1261, abs=2e-4)

    def test_ratios_at_least_one(self, rng):
        for _ in range(8):
            m = random_stable_model(rng)
            rep = welfare_report(m, restarts=1)
            assert rep.ratio_no_pricing >= 1.0 - 1e-9
            assert rep.ratio_pricing >= 1.0 - 1e-9

    def test_pricing_never_hurts_when_order_misaligned(self):
        rep = welfare_report(welfare_model(WELFARE_M1_A, 0.5), restarts=1)
        assert rep.ratio_pricing <= rep.ratio_no_pricing
