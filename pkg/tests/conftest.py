import numpy as np
import pytest

from apq import ClassSpec, Model, ServiceSpec, build_model

# Five exponential-service classes sharing mean 1, arrival mix
# (0.2, 0.3, 0.15, 0.25, 0.1), costs 0.2..1.0. Scaled to a target rho.
FIVE_EXP_MIX = (0.2, 0.3, 0.15, 0.25, 0.1)
FIVE_EXP_COSTS = (0.2, 0.4, 0.6, 0.8, 1.0)

# Heterogeneous-service benchmark: five classes with distinct costs and
# very different service moments.
HET_LAMBDAS = (0.06, 0.09, 0.04, 0.07, 0.03)
HET_COSTS = (0.2, 0.7, 0.75, 1.25, 1.6)
HET_M1 = (0.35, 0.85, 1.0, 4.5, 5.0)
HET_M2 = (2.1, 3.7, 1.5, 21.8, 29.0)

# Welfare benchmark pair: same mix/costs/second moments, two mean vectors.
WELFARE_MIX = (0.16, 0.25, 0.12, 0.21, 0.08)
WELFARE_COSTS = (0.2, 0.4, 0.6, 0.8, 1.0)
WELFARE_M2 = (1.36, 5.44, 1.5, 3.75, 5.0)
WELFARE_M1_A = (1.0, 2.0, 0.5, 1.2, 1.5)
WELFARE_M1_B = (0.6, 1.2, 3.0, 1.5, 2.0)


def five_exp_model(rho: float) -> Model:
    return build_model(
        ClassSpec(rho * x, ServiceSpec.exponential(1.0), c)
        for x, c in zip(FIVE_EXP_MIX, FIVE_EXP_COSTS)
    )


def het_benchmark_model() -> Model:
    return build_model(
        ClassSpec(l, ServiceSpec.moments(a, b), c)
        for l, c, a, b in zip(HET_LAMBDAS, HET_COSTS, HET_M1, HET_M2)
    )


def welfare_model(m1: tuple, rho: float) -> Model:
    scale = rho / sum(x * m for x, m in zip(WELFARE_MIX, m1))
    return build_model(
        ClassSpec(x * scale, ServiceSpec.moments(m, s), c)
        for x, c, m, s in zip(WELFARE_MIX, WELFARE_COSTS, m1, WELFARE_M2)
    )


def random_stable_model(
    rng: np.random.Generator,
    max_classes: int = 6,
    rho_range: tuple = (0.15, 0.8),
) -> Model:
    """Random stable model over the four samplable families,
    distinct costs."""
    n = int(rng.integers(1, max_classes + 1))
    rho_target = rng.uniform(*rho_range)
    mix = rng.uniform(0.2, 1.0, n)
    mix /= mix.sum()
    costs = np.sort(rng.uniform(0.1, 3.0, n))
    costs += np.arange(n) * 1e-3  # keep costs distinct
    classes = []
    means = rng.uniform(0.2, 3.0, n)
    lam = rho_target * mix / means
    for i in range(n):
        kind = rng.integers(0, 4)
        if kind == 0:
            svc = ServiceSpec.exponential(means[i])
        elif kind == 1:
            svc = ServiceSpec.deterministic(means[i])
        elif kind == 2:
            svc = ServiceSpec.erlang(int(rng.integers(1, 6)), means[i])
        else:
            svc = ServiceSpec.hyperexp2(means[i], rng.uniform(1.0, 8.0))
        classes.append(ClassSpec(float(lam[i]), svc, float(costs[i])))
    return build_model(classes)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT_LINES
    except ImportError:
        return
    if REPORT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in REPORT_LINES:
            terminalreporter.write_line(line)
