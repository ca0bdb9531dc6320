"""Data model for the accumulating-priority M/G/1 bidding game.

A system is described by N customer classes, each with a Poisson arrival
rate lambda_i, a service-time distribution, and a linear waiting cost C_i
per unit of time in queue. The derived quantities used throughout are

    rho_i = lambda_i * m1_i          per-class utilization
    rho   = sum(rho_i)               total utilization (must be < 1)
    W0    = sum(lambda_i * m2_i) / 2 expected residual service at arrival

and the per-class cap on rational bids

    b_upper_i = C_i * (sum(lambda_k * m2_k) + 2 (1 - rho) * xbar)
                / (2 (1 - rho)^2),    xbar = sum(lambda_k * m1_k) / lambda,

the waiting cost a customer with cost rate C_i would incur with zero
priority; no customer ever bids more than that.

Service families
----------------
Four samplable two-moment families cover scv = 0 (deterministic),
scv = 1/k (Erlang), scv = 1 (exponential) and scv >= 1 (balanced-means
two-phase hyperexponential). A fifth ``moments`` family carries a raw
(mean, second moment) pair for analytic work on parameter sets that no
samplable family can hit exactly; the simulator rejects it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence


class ModelError(ValueError):
    """Base class for model construction problems."""


class InvalidClassError(ModelError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"class {index}: {reason}")
        self.index = index
        self.reason = reason


class UnstableError(ModelError):
    def __init__(self, rho: float):
        super().__init__(f"total utilization rho={rho:.6g} >= 1; queue is unstable")
        self.rho = rho


class ConfigError(ModelError):
    """Malformed JSON configuration."""


class NonPositiveBidError(ValueError):
    pass


class InvalidMixtureError(ValueError):
    pass


EXPONENTIAL = "exponential"
DETERMINISTIC = "deterministic"
ERLANG = "erlang"
HYPEREXP2 = "hyperexp2"
MOMENTS = "moments"

SAMPLABLE_FAMILIES = (EXPONENTIAL, DETERMINISTIC, ERLANG, HYPEREXP2)


@dataclass(frozen=True)
class ServiceSpec:
    """A service-time distribution identified by family and parameters.

    Use the classmethod constructors; they validate the parameters. ``k``
    is the Erlang shape, ``scv`` the squared coefficient of variation of
    the hyperexponential family, ``m2`` the raw second moment of the
    ``moments`` family.
    """

    family: str
    mean: float
    k: int = 1
    scv: float = 1.0
    m2: float = 0.0

    def __post_init__(self):
        if self.family not in SAMPLABLE_FAMILIES + (MOMENTS,):
            raise ValueError(f"unknown service family {self.family!r}")
        if not (self.mean > 0 and math.isfinite(self.mean)):
            raise ValueError("service mean must be positive and finite")
        if self.family == ERLANG and (self.k < 1 or self.k != int(self.k)):
            raise ValueError("Erlang shape k must be an integer >= 1")
        if self.family == HYPEREXP2 and self.scv < 1:
            raise ValueError("hyperexp2 requires scv >= 1")
        if self.family == MOMENTS and not (self.m2 > 0 and math.isfinite(self.m2)):
            raise ValueError("moments family requires a positive second moment")

    @classmethod
    def exponential(cls, mean: float) -> "ServiceSpec":
        return cls(EXPONENTIAL, float(mean))

    @classmethod
    def deterministic(cls, value: float) -> "ServiceSpec":
        return cls(DETERMINISTIC, float(value))

    @classmethod
    def erlang(cls, k: int, mean: float) -> "ServiceSpec":
        return cls(ERLANG, float(mean), k=int(k))

    @classmethod
    def hyperexp2(cls, mean: float, scv: float) -> "ServiceSpec":
        return cls(HYPEREXP2, float(mean), scv=float(scv))

    @classmethod
    def moments(cls, mean: float, m2: float) -> "ServiceSpec":
        """Raw two-moment spec; analytics only, cannot be sampled."""
        return cls(MOMENTS, float(mean), m2=float(m2))

    def moment1(self) -> float:
        return self.mean

    def moment2(self) -> float:
        m = self.mean
        if self.family == EXPONENTIAL:
            return 2.0 * m * m
        if self.family == DETERMINISTIC:
            return m * m
        if self.family == ERLANG:
            return m * m * (self.k + 1) / self.k
        if self.family == HYPEREXP2:
            return m * m * (self.scv + 1.0)
        return self.m2

    @property
    def samplable(self) -> bool:
        return self.family in SAMPLABLE_FAMILIES

    def hyperexp2_params(self) -> tuple[float, float, float]:
        """Branch probability and branch means, balanced-means form.

        p = (1 + sqrt((scv-1)/(scv+1))) / 2, branch means mean/(2p) and
        mean/(2(1-p)), so each branch contributes half the mean.
        """
        p = 0.5 * (1.0 + math.sqrt((self.scv - 1.0) / (self.scv + 1.0)))
        return p, self.mean / (2.0 * p), self.mean / (2.0 * (1.0 - p))

    def to_dict(self) -> dict:
        if self.family == DETERMINISTIC:
            return {"family": self.family, "value": self.mean}
        if self.family == ERLANG:
            return {"family": self.family, "k": self.k, "mean": self.mean}
        if self.family == HYPEREXP2:
            return {"family": self.family, "mean": self.mean, "scv": self.scv}
        if self.family == MOMENTS:
            return {"family": self.family, "mean": self.mean, "m2": self.m2}
        return {"family": self.family, "mean": self.mean}


@dataclass(frozen=True)
class ClassSpec:
    """One customer class: arrival rate, service distribution, waiting cost."""

    arrival_rate: float
    service: ServiceSpec
    waiting_cost: float

    def __post_init__(self):
        if not (self.arrival_rate > 0 and math.isfinite(self.arrival_rate)):
            raise ValueError("arrival rate must be positive and finite")
        if not (self.waiting_cost > 0 and math.isfinite(self.waiting_cost)):
            raise ValueError("waiting cost must be positive and finite")


@dataclass(frozen=True)
class Model:
    """Validated stable system with derived utilization quantities.

    Classes keep their user-supplied order; nothing here requires them to
    be sorted by cost. Construct through :func:`build_model`.
    """

    classes: tuple[ClassSpec, ...]
    rho_i: tuple[float, ...]
    rho: float
    w0: float
    b_upper: tuple[float, ...]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def arrival_rates(self) -> tuple[float, ...]:
        return tuple(c.arrival_rate for c in self.classes)

    @property
    def waiting_costs(self) -> tuple[float, ...]:
        return tuple(c.waiting_cost for c in self.classes)

    @property
    def service_means(self) -> tuple[float, ...]:
        return tuple(c.service.moment1() for c in self.classes)

    def b_upper_for(self, cost: float) -> float:
        """Zero-priority waiting cost for an arbitrary cost rate."""
        return cost * self.b_upper[0] / self.classes[0].waiting_cost

    def fcfs_wait(self) -> float:
        return self.w0 / (1.0 - self.rho)


def build_model(classes: Iterable[ClassSpec]) -> Model:
    """Validate a class list and populate rho_i, rho, W0 and bid caps.

    Raises :class:`UnstableError` when rho >= 1 and
    :class:`InvalidClassError` when a class fails validation.
    """
    specs = tuple(classes)
    if not specs:
        raise InvalidClassError(0, "model needs at least one class")
    for i, c in enumerate(specs):
        if not isinstance(c, ClassSpec):
            raise InvalidClassError(i, f"expected ClassSpec, got {type(c).__name__}")
    rho_i = tuple(c.arrival_rate * c.service.moment1() for c in specs)
    rho = math.fsum(rho_i)
    if rho >= 1.0:
        raise UnstableError(rho)
    lam_m2 = math.fsum(c.arrival_rate * c.service.moment2() for c in specs)
    w0 = lam_m2 / 2.0
    lam = math.fsum(c.arrival_rate for c in specs)
    xbar = rho / lam
    cap_base = (lam_m2 + 2.0 * (1.0 - rho) * xbar) / (2.0 * (1.0 - rho) ** 2)
    b_upper = tuple(c.waiting_cost * cap_base for c in specs)
    return Model(specs, rho_i, rho, w0, b_upper)


def scale_to_rho(model: Model, target_rho: float) -> Model:
    """Rescale all arrival rates proportionally so total utilization hits
    ``target_rho``; the class mix lambda_i / lambda is preserved."""
    if not (0.0 < target_rho < 1.0):
        raise UnstableError(target_rho)
    factor = target_rho / model.rho
    return build_model(
        ClassSpec(c.arrival_rate * factor, c.service, c.waiting_cost)
        for c in model.classes
    )


def validate_bids(model: Model, bids: Sequence[float]) -> tuple[float, ...]:
    """Check one positive finite bid per class; returns them as a tuple."""
    out = tuple(float(b) for b in bids)
    if len(out) != model.n_classes:
        raise NonPositiveBidError(
            f"expected {model.n_classes} bids, got {len(out)}"
        )
    for b in out:
        if not (b > 0 and math.isfinite(b)):
            raise NonPositiveBidError(f"bids must be positive and finite, got {b}")
    return out


def validate_mixture(
    model: Model, profile: Sequence[Sequence[tuple[float, float]]]
) -> tuple[tuple[tuple[float, float], ...], ...]:
    """Validate a finite atom mixture: per class a list of (bid, prob) pairs
    with positive atoms and probabilities summing to one (tol 1e-12)."""
    if len(profile) != model.n_classes:
        raise InvalidMixtureError(
            f"expected {model.n_classes} per-class atom lists, got {len(profile)}"
        )
    out = []
    for i, atoms in enumerate(profile):
        atoms = tuple((float(b), float(p)) for b, p in atoms)
        if not atoms:
            raise InvalidMixtureError(f"class {i}: empty atom list")
        total = math.fsum(p for _, p in atoms)
        if abs(total - 1.0) > 1e-12:
            raise InvalidMixtureError(
                f"class {i}: atom probabilities sum to {total!r}, not 1"
            )
        for b, p in atoms:
            if not (b > 0 and math.isfinite(b)):
                raise InvalidMixtureError(f"class {i}: atom bid {b} not positive")
            if p < 0:
                raise InvalidMixtureError(f"class {i}: negative probability {p}")
        out.append(atoms)
    return tuple(out)


# --- JSON configuration -----------------------------------------------------

_SERVICE_KEYS = {
    EXPONENTIAL: {"family", "mean"},
    DETERMINISTIC: {"family", "value"},
    ERLANG: {"family", "k", "mean"},
    HYPEREXP2: {"family", "mean", "scv"},
    MOMENTS: {"family", "mean", "m2"},
}


def _service_from_dict(d: dict, where: str) -> ServiceSpec:
    if not isinstance(d, dict) or "family" not in d:
        raise ConfigError(f"{where}: service must be an object with a 'family' field")
    family = d["family"]
    if family not in _SERVICE_KEYS:
        raise ConfigError(f"{where}: unknown service family {family!r}")
    expected = _SERVICE_KEYS[family]
    if set(d) != expected:
        raise ConfigError(
            f"{where}: service fields {sorted(set(d))} do not match "
            f"required {sorted(expected)} for family {family!r}"
        )
    try:
        if family == EXPONENTIAL:
            return ServiceSpec.exponential(d["mean"])
        if family == DETERMINISTIC:
            return ServiceSpec.deterministic(d["value"])
        if family == ERLANG:
            return ServiceSpec.erlang(d["k"], d["mean"])
        if family == HYPEREXP2:
            return ServiceSpec.hyperexp2(d["mean"], d["scv"])
        return ServiceSpec.moments(d["mean"], d["m2"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def model_from_dict(doc: dict) -> Model:
    if not isinstance(doc, dict) or set(doc) != {"classes"}:
        raise ConfigError("config must be an object with exactly one field 'classes'")
    raw = doc["classes"]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("'classes' must be a non-empty list")
    specs = []
    for i, entry in enumerate(raw):
        where = f"classes[{i}]"
        if not isinstance(entry, dict) or set(entry) != {"lambda", "cost", "service"}:
            raise ConfigError(
                f"{where}: each class needs exactly the fields lambda, cost, service"
            )
        service = _service_from_dict(entry["service"], where)
        try:
            specs.append(
                ClassSpec(float(entry["lambda"]), service, float(entry["cost"]))
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return build_model(specs)


def model_from_json(text: str) -> Model:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return model_from_dict(doc)


def load_model(path) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(fh.read())


def model_to_dict(model: Model) -> dict:
    return {
        "classes": [
            {
                "lambda": c.arrival_rate,
                "cost": c.waiting_cost,
                "service": c.service.to_dict(),
            }
            for c in model.classes
        ]
    }
