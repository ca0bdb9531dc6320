import numpy as np
import pytest

from apq import (
    ClassSpec,
    NonPositiveBidError,
    ServiceSpec,
    SimConfig,
    TaggedProbe,
    build_model,
    conservation_residual,
    simulate,
    tagged_waiting,
    tagged_waiting_derivative,
    tagged_waiting_mixed,
    waiting_times,
)
from apq.analytics import mixed_atom_waits
from apq.model import InvalidMixtureError
from apq.simulator import backend_name
from conftest import five_exp_model, het_benchmark_model, random_stable_model

needs_fast_kernel = pytest.mark.skipif(
    backend_name() != "cython",
    reason="10^7-customer oracle runs need the compiled kernel",
)


def homogeneous_model(rho=0.5):
    return build_model([ClassSpec(rho, ServiceSpec.exponential(1.0), 1.0)])


class TestWaitingTimes:
    def test_equal_bids_reduce_to_fcfs(self):
        m = five_exp_model(0.5)
        W = waiting_times(m, (1.0,) * 5)
        assert np.allclose(W, 1.0, atol=1e-14)

    def test_five_class_reference_point(self):
        # quoted equilibrium bids at rho=0.5; the induced delays
        m = five_exp_model(0.5)
        W = waiting_times(m, (0.091, 0.171, 0.227, 0.273, 0.308))
        expected = (1.306, 1.028, 0.915, 0.848, 0.810)
        assert np.max(np.abs(W - np.array(expected))) < 5e-3

    def test_class_order_is_irrelevant(self):
        # permuting classes together with their bids permutes the waits
        m = five_exp_model(0.5)
        bids = (0.091, 0.171, 0.227, 0.273, 0.308)
        W = waiting_times(m, bids)
        perm = (4, 2, 0, 3, 1)
        m_perm = build_model(m.classes[p] for p in perm)
        W_perm = waiting_times(m_perm, tuple(bids[p] for p in perm))
        for j, p in enumerate(perm):
            assert W_perm[j] == pytest.approx(W[p], abs=1e-15)

    def test_tied_bids_share_delay(self):
        m = five_exp_model(0.5)
        W = waiting_times(m, (0.1, 0.1, 0.1, 0.5, 0.5))
        assert W[0] == W[1] == W[2]
        assert W[3] == W[4]
        assert W[0] > W[3]

    def test_bid_order_implies_wait_order(self, rng):
        for _ in range(40):
            m = random_stable_model(rng)
            bids = rng.uniform(0.05, 5.0, m.n_classes)
            W = waiting_times(m, bids)
            order = np.argsort(bids)
            assert np.all(np.diff(W[order]) <= 1e-12)

    def test_work_conservation(self, rng):
        for _ in range(40):
            m = random_stable_model(rng)
            bids = rng.uniform(0.05, 5.0, m.n_classes)
            assert conservation_residual(m, waiting_times(m, bids)) < 1e-10

    def test_nobody_waits_less_than_the_residual_term(self, rng):
        for _ in range(40):
            m = random_stable_model(rng)
            bids = rng.uniform(0.05, 5.0, m.n_classes)
            assert np.all(waiting_times(m, bids) >= m.w0 * (1 - 1e-12))

    def test_rejects_nonpositive_bids(self):
        m = five_exp_model(0.5)
        with pytest.raises(NonPositiveBidError):
            waiting_times(m, (1.0, 1.0, 1.0, 1.0, 0.0))
        with pytest.raises(NonPositiveBidError):
            waiting_times(m, (1.0,) * 4)


class TestTaggedWaiting:
    def test_three_branch_closed_form(self):
        m = homogeneous_model(0.5)  # W0 = 0.5, base delay 1.0
        b = 0.5
        for a in (0.1, 0.3, 0.49):
            expected = 1.0 * b / (0.5 * b + 0.5 * a)
            assert tagged_waiting(m, (b,), a) == pytest.approx(expected, rel=1e-14)
        assert tagged_waiting(m, (b,), b) == pytest.approx(1.0, rel=1e-14)
        for a in (0.51, 1.0, 4.0):
            expected = 1.0 * (0.5 * a + 0.5 * b) / a
            assert tagged_waiting(m, (b,), a) == pytest.approx(expected, rel=1e-14)

    def test_absolute_priority_limit(self):
        # as a -> inf the delay falls to W0
        m = homogeneous_model(0.5)
        assert tagged_waiting(m, (0.5,), 1e12) == pytest.approx(0.5, rel=1e-9)

    def test_matches_class_delays_on_profile(self, rng):
        for _ in range(25):
            m = random_stable_model(rng)
            bids = np.sort(rng.uniform(0.05, 5.0, m.n_classes))
            W = waiting_times(m, bids)
            for i in range(m.n_classes):
                assert abs(tagged_waiting(m, bids, bids[i]) - W[i]) < 1e-10

    def test_continuity_at_atoms(self):
        m = het_benchmark_model()
        bids = (0.28, 1.48, 1.565, 2.39, 2.69)
        for atom in bids:
            gaps = []
            for eps in (1e-4, 1e-6, 1e-8):
                lo = tagged_waiting(m, bids, atom - eps)
                hi = tagged_waiting(m, bids, atom + eps)
                gaps.append(abs(lo - hi))
            assert gaps[0] > gaps[1] > gaps[2]
            assert gaps[2] < 1e-6

    def test_strictly_decreasing_and_convex(self, rng):
        for _ in range(25):
            m = random_stable_model(rng)
            bids = rng.uniform(0.1, 3.0, m.n_classes)
            grid = np.linspace(0.02, 1.5 * bids.max(), 60)
            vals = [tagged_waiting(m, bids, a) for a in grid]
            slopes = np.diff(vals) / np.diff(grid)
            assert np.all(slopes < 0)
            assert np.all(np.diff(slopes) > -1e-9)  # slopes nondecreasing


class TestTaggedDerivative:
    def test_homogeneous_closed_form_below_and_above(self):
        m = homogeneous_model(0.5)
        b = 0.5
        for a in (0.2, 0.4):
            expected = -1.0 * 0.5 * b / (0.5 * b + 0.5 * a) ** 2
            assert tagged_waiting_derivative(m, (b,), a) == pytest.approx(expected, rel=1e-13)
        for a in (0.7, 2.0):
            expected = -1.0 * 0.5 * b / a**2
            assert tagged_waiting_derivative(m, (b,), a) == pytest.approx(expected, rel=1e-13)

    def test_common_limit_at_the_atom(self):
        m = homogeneous_model(0.5)
        b = 0.5
        expected = -0.5 * 0.5 / (0.5 * b)  # -rho W0 / ((1-rho) b)
        assert tagged_waiting_derivative(m, (b,), b) == pytest.approx(expected, rel=1e-13)
        for eps in (1e-7, 1e-9):
            assert tagged_waiting_derivative(m, (b,), b - eps) == pytest.approx(expected, rel=1e-5)
            assert tagged_waiting_derivative(m, (b,), b + eps) == pytest.approx(expected, rel=1e-5)

    def test_against_central_differences(self, rng):
        m = het_benchmark_model()
        bids = (0.28, 1.48, 1.565, 2.39, 2.69)
        for a in (0.15, 1.0, 1.52, 2.0, 2.55, 3.5):
            h = 1e-6 * a
            fd = (tagged_waiting(m, bids, a + h) - tagged_waiting(m, bids, a - h)) / (2 * h)
            an = tagged_waiting_derivative(m, bids, a)
            assert an == pytest.approx(fd, rel=1e-6)
        for _ in range(15):
            mr = random_stable_model(rng)
            b = np.sort(rng.uniform(0.1, 3.0, mr.n_classes))
            a = float(rng.uniform(0.05, 4.0))
            if any(abs(a - x) < 1e-3 for x in b):
                continue
            h = 1e-6 * a
            fd = (tagged_waiting(mr, b, a + h) - tagged_waiting(mr, b, a - h)) / (2 * h)
            assert tagged_waiting_derivative(mr, b, a) == pytest.approx(fd, rel=1e-6)

    def test_always_negative(self, rng):
        for _ in range(20):
            m = random_stable_model(rng)
            bids = rng.uniform(0.1, 3.0, m.n_classes)
            for a in rng.uniform(0.02, 5.0, 8):
                assert tagged_waiting_derivative(m, bids, float(a)) < 0


class TestMixedProfiles:
    def test_single_atoms_reduce_to_pure(self, rng):
        for _ in range(25):
            m = random_stable_model(rng)
            bids = tuple(np.sort(rng.uniform(0.1, 3.0, m.n_classes)))
            profile = tuple(((b, 1.0),) for b in bids)
            for a in rng.uniform(0.05, 4.0, 6):
                pure = tagged_waiting(m, bids, float(a))
                mixed = tagged_waiting_mixed(m, profile, float(a))
                assert abs(pure - mixed) < 1e-10

    def test_two_atom_work_conservation(self):
        m = homogeneous_model(0.5)
        profile = (((1.0, 0.5), (2.0, 0.5)),)
        w1 = tagged_waiting_mixed(m, profile, 1.0)
        w2 = tagged_waiting_mixed(m, profile, 2.0)
        # quarter of the load waits like each atom
        assert 0.25 * w1 + 0.25 * w2 == pytest.approx(0.5 * 0.5 / 0.5, rel=1e-12)

    def test_atoms_shared_across_classes_merge(self):
        m = five_exp_model(0.5)
        profile = tuple(((1.0, 1.0),) for _ in range(5))
        assert tagged_waiting_mixed(m, profile, 1.0) == pytest.approx(1.0, rel=1e-13)

    def test_invalid_mixtures_rejected(self):
        m = homogeneous_model(0.5)
        with pytest.raises(InvalidMixtureError):
            tagged_waiting_mixed(m, (((1.0, 0.6), (2.0, 0.5)),), 1.0)
        with pytest.raises(InvalidMixtureError):
            tagged_waiting_mixed(m, (((0.0, 1.0),),), 1.0)
        with pytest.raises(InvalidMixtureError):
            tagged_waiting_mixed(m, (((1.0, 1.0),), ((1.0, 1.0),)), 1.0)


@needs_fast_kernel
class TestSimulationOracle:
    def test_two_class_delays_within_ci(self):
        m = build_model([
            ClassSpec(0.25, ServiceSpec.exponential(1.0), 1.0),
            ClassSpec(0.25, ServiceSpec.exponential(1.0), 2.0),
        ])
        bids = (1.0, 2.0)
        W = waiting_times(m, bids)
        stats = simulate(SimConfig(model=m, bids=bids, customers=10**7,
                                   warmup=10**5, seed=2029))
        for i, s in enumerate(stats.per_class):
            assert abs(s.mean - W[i]) <= s.ci99, (i, s.mean, W[i], s.ci99)

    def test_mixed_profile_tagged_within_ci(self):
        m = homogeneous_model(0.5)
        profile = (((1.0, 0.5), (2.0, 0.5)),)
        expected = tagged_waiting_mixed(m, profile, 1.5)
        stats = simulate(SimConfig(
            model=m, mixture=profile, customers=10**7, warmup=10**5,
            seed=515, tagged=TaggedProbe(bid=1.5, thinning=1e-3),
        ))
        assert stats.tagged.count > 5_000
        assert abs(stats.tagged.mean - expected) <= stats.tagged.ci99
        # a class mean under a mixture averages its atom delays
        atoms = mixed_atom_waits(m, profile)
        class_mean = 0.5 * atoms[1.0] + 0.5 * atoms[2.0]
        s = stats.per_class[0]
        assert abs(s.mean - class_mean) <= s.ci99

    def test_heterogeneous_tagged_within_ci(self):
        # five classes with widely different service moments; samplable
        # stand-ins for the benchmark moments
        services = [
            ServiceSpec.hyperexp2(0.35, 2.1 / 0.35**2 - 1),
            ServiceSpec.hyperexp2(0.85, 3.7 / 0.85**2 - 1),
            ServiceSpec.erlang(2, 1.0),
            ServiceSpec.erlang(13, 4.5),
            ServiceSpec.erlang(6, 5.0),
        ]
        lam = (0.06, 0.09, 0.04, 0.07, 0.03)
        costs = (0.2, 0.7, 0.75, 1.25, 1.6)
        m = build_model(ClassSpec(l, s, c) for l, s, c in zip(lam, services, costs))
        bids = (0.28, 1.48, 1.565, 2.39, 2.69)
        expected = tagged_waiting(m, bids, 1.0)
        stats = simulate(SimConfig(
            model=m, bids=bids, customers=2 * 10**7, warmup=2 * 10**5,
            seed=99, tagged=TaggedProbe(bid=1.0, thinning=1e-3),
        ))
        assert stats.tagged.count > 10_000
        assert abs(stats.tagged.mean - expected) <= stats.tagged.ci99
