"""Scenario and ledger configuration.

A scenario is fully described by a ``ScenarioConfig``: the two strategies,
the economic parameters (result value, payment, compute cost, deposits,
threshold), timing (expiry, tier, execution delay) and the RNG seed.  The
same structure round-trips through a JSON config file; every key is
optional and falls back to the documented defaults.

All amounts are integers in the smallest currency unit (10^18 units = one
whole coin); result value and compute cost share that unit so payoffs are
exact integer arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace

from .ledger import GasSchedule, TIERS

UNIT = 10**18

REQUESTOR_HONEST = "honest"
REQUESTOR_NO_CONFIRM = "no-confirm"
REQUESTOR_WITHHOLD_INPUT = "withhold-input"
REQUESTOR_STRATEGIES = (
    REQUESTOR_HONEST, REQUESTOR_NO_CONFIRM, REQUESTOR_WITHHOLD_INPUT,
)

NODE_HONEST = "honest"
NODE_CLAIM_ONLY = "claim-only"
NODE_COMPUTE_NO_DELIVER = "compute-no-deliver"
NODE_STRATEGIES = (NODE_HONEST, NODE_CLAIM_ONLY, NODE_COMPUTE_NO_DELIVER)


class ConfigInvalid(Exception):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    requestor_strategy: str = REQUESTOR_HONEST
    node_strategy: str = NODE_HONEST
    value_of_result: int = 100 * UNIT
    payment: int = 10 * UNIT
    compute_cost: int = 3 * UNIT
    threshold: int = 5 * 10**17
    requestor_deposit: int = -1  # -1: derive from threshold
    node_deposit: int = -1  # -1: derive from threshold
    expires: int = 3600
    tier: str = "standard"
    rng_seed: int = 0
    execution_delay: int = 0
    gas_charging: bool = False
    include_gas_in_payoffs: bool = False
    deliver_to_third_party: bool = False
    function_name: str = "identity"
    inputs: object = (1, 2, 3)
    initial_balance: int = 1000 * UNIT
    max_resubmits: int = 0
    gas_per_function: dict = field(default_factory=dict)
    gas_price_per_tier: dict = field(default_factory=dict)
    confirmation_delay_per_tier: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.requestor_deposit < 0:
            object.__setattr__(self, "requestor_deposit", self.threshold)
        if self.node_deposit < 0:
            object.__setattr__(self, "node_deposit", self.threshold)

    # ------------------------------------------------------------------

    def validate(self) -> None:
        if self.requestor_strategy not in REQUESTOR_STRATEGIES:
            raise ConfigInvalid(
                f"unknown requestor strategy {self.requestor_strategy!r}"
            )
        if self.node_strategy not in NODE_STRATEGIES:
            raise ConfigInvalid(f"unknown node strategy {self.node_strategy!r}")
        if self.tier not in TIERS:
            raise ConfigInvalid(f"unknown tier {self.tier!r}")
        if self.threshold <= 0:
            raise ConfigInvalid("threshold must be positive")
        if self.requestor_deposit != self.threshold:
            # The contract fixes the requestor deposit at the threshold.
            raise ConfigInvalid("requestor_deposit must equal threshold")
        if self.node_deposit < self.threshold:
            raise ConfigInvalid("node_deposit must be at least the threshold")
        for name in ("value_of_result", "payment", "compute_cost"):
            if getattr(self, name) < 0:
                raise ConfigInvalid(f"{name} must be non-negative")
        if self.expires <= 0:
            raise ConfigInvalid("expires must be positive")
        if self.execution_delay < 0:
            raise ConfigInvalid("execution_delay must be non-negative")
        needed = self.payment + self.threshold
        if self.initial_balance < max(needed, self.node_deposit):
            raise ConfigInvalid("initial_balance cannot fund the scenario")

    @property
    def in_rational_regime(self) -> bool:
        """Strict value > payment > cost > 0, positive deposits."""
        return (
            self.value_of_result > self.payment > self.compute_cost > 0
            and self.requestor_deposit > 0
            and self.node_deposit > 0
        )

    def gas_schedule(self) -> GasSchedule:
        schedule = GasSchedule()
        schedule.per_function.update(self.gas_per_function)
        schedule.gas_price_per_tier.update(self.gas_price_per_tier)
        schedule.confirmation_delay_per_tier.update(
            self.confirmation_delay_per_tier
        )
        return schedule

    # ------------------------------------------------------------------

    def with_strategies(self, requestor: str, node: str) -> "ScenarioConfig":
        return replace(self, requestor_strategy=requestor, node_strategy=node)

    def to_json_obj(self) -> dict:
        obj = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            obj[f.name] = value
        return obj

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str) -> "ScenarioConfig":
        with open(path, encoding="utf-8") as handle:
            try:
                data = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigInvalid("config file must hold a JSON object")
        return cls.from_dict(data)
