"""Scenario runner, payoff accounting and report generation.

``ScenarioRunner`` wires one ledger, one escrow contract, one requestor and
one execution node together and steps them to quiescence, producing a
``ScenarioOutcome`` and a JSON-lines trace.  Runs are deterministic: the
same config (seed included) yields a byte-identical trace.

Payoffs follow the convention
    payoff = balance delta + (result value if a valid result was received)
             - (compute cost if execution happened)
with gas excluded by default; one utility unit equals one currency unit.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import deque
from dataclasses import dataclass, field

from . import actors, crypto
from .actors import (
    Attest,
    AttestOk,
    ChainEvent,
    Deliver,
    Destroy,
    EnclaveReady,
    Execute,
    ExecutionDone,
    ExecutionNodeActor,
    Expiry,
    InstanceCreated,
    Provision,
    ProvisionAck,
    RequestorActor,
    ResultDelivery,
    Start,
    SubmitTx,
    ThirdPartyAck,
    TxReceipt,
)
from .config import (
    NODE_HONEST,
    NODE_STRATEGIES,
    REQUESTOR_HONEST,
    REQUESTOR_STRATEGIES,
    ConfigInvalid,
    ScenarioConfig,
)
from .contract import EscrowContract
from .enclave import (
    NODE_HOST,
    REQUESTOR,
    BUILTIN_BODIES,
    EnclaveError,
    EnclaveHost,
    FunctionImage,
    FunctionStore,
    InfoFlowLedger,
)
from .ledger import (
    CONTRACT_ACCOUNT,
    ContractCall,
    GasSchedule,
    Ledger,
    Receipt,
)

PARTY_REQUESTOR = "requestor"
PARTY_NODE = "node"
PARTY_THIRD = "third-party"


# ----------------------------------------------------------------------
# trace


class Trace:
    """Append-only list of JSON-safe records with a stable serialization."""

    def __init__(self) -> None:
        self.records: list[dict] = []

    def add(self, record: dict) -> None:
        self.records.append(record)

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(r, sort_keys=True, separators=(",", ":"))
            for r in self.records
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def content_id(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()[:16]


def load_trace(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


# ----------------------------------------------------------------------
# outcome


@dataclass(frozen=True)
class ScenarioOutcome:
    requestor_payoff: int
    node_payoff: int
    locked_in_contract: int
    gas_by_party: dict[str, int]
    trace_id: str
    received_valid_result: bool
    resource_cost_consumed: int
    requestor_balance_delta: int
    node_balance_delta: int
    end_to_end_seconds: int
    infoflow_violations: tuple[str, ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "requestorPayoff": self.requestor_payoff,
            "nodePayoff": self.node_payoff,
            "lockedInContract": self.locked_in_contract,
            "gasByParty": dict(self.gas_by_party),
            "traceId": self.trace_id,
            "receivedValidResult": self.received_valid_result,
            "resourceCostConsumed": self.resource_cost_consumed,
            "requestorBalanceDelta": self.requestor_balance_delta,
            "nodeBalanceDelta": self.node_balance_delta,
            "endToEndSeconds": self.end_to_end_seconds,
            "infoFlowViolations": list(self.infoflow_violations),
        }


def _hexify(value):
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, dict):
        return {k: _hexify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_hexify(v) for v in value]
    return value


# ----------------------------------------------------------------------
# runner


class ScenarioRunner:
    """One deterministic protocol run for a single task."""

    def __init__(self, config: ScenarioConfig,
                 function_store: FunctionStore | None = None) -> None:
        config.validate()
        self.config = config
        self.ledger = Ledger(config.gas_schedule(),
                             gas_charging=config.gas_charging)
        self.contract = EscrowContract(self.ledger, config.threshold)
        self.requestor_account = self.ledger.create_account(
            config.initial_balance)
        self.node_account = self.ledger.create_account(config.initial_balance)
        self.flow = InfoFlowLedger()
        self.store = function_store or self._scenario_store()
        self.host = EnclaveHost(
            self.store, self.flow,
            random.Random(f"{config.rng_seed}:host"),
        )
        allow_list = {
            name: bytes.fromhex(entry["measurement"])
            for name, entry in self.store.manifest().items()
        }
        self.requestor = RequestorActor(
            config, self.requestor_account,
            random.Random(f"{config.rng_seed}:requestor"),
            self.flow, allow_list,
        )
        self.node = ExecutionNodeActor(config, self.node_account)
        self.trace = Trace()
        self.delivery_tamper = None  # test hook: ProtectedResult -> ProtectedResult
        self._queue: deque = deque()
        self._expiry_fired: set[int] = set()
        self._last_receipt_time = 0
        self._ran = False

    def _scenario_store(self) -> FunctionStore:
        cfg = self.config
        if cfg.function_name not in BUILTIN_BODIES:
            raise ConfigInvalid(f"unknown function {cfg.function_name!r}")
        store = FunctionStore()
        store.register(FunctionImage(
            name=cfg.function_name,
            version="1",
            body_id=cfg.function_name,
            body=BUILTIN_BODIES[cfg.function_name],
            resource_cost=cfg.compute_cost,
        ))
        return store

    # ------------------------------------------------------------------

    def run(self) -> ScenarioOutcome:
        if self._ran:
            raise RuntimeError("a runner is single-use")
        self._ran = True
        self.trace.add({"type": "scenario", "config": self.config.to_json_obj()})
        self._queue.append((PARTY_REQUESTOR, Start()))
        while True:
            self._drain()
            if not self._arm_expiry():
                break
        return self._finish()

    def _drain(self) -> None:
        while self._queue:
            recipient, obs = self._queue.popleft()
            if recipient == PARTY_THIRD:
                self._third_party(obs)
                continue
            actor = self.requestor if recipient == PARTY_REQUESTOR else self.node
            for action in actor.step(obs):
                self._execute(recipient, action)

    def _arm_expiry(self) -> bool:
        """Advance to the expiry of a still-open task, once per task."""
        for task_id, task in sorted(self.contract.tasks.items()):
            if task.dead or task_id in self._expiry_fired:
                continue
            self._expiry_fired.add(task_id)
            deadline = task.start + task.expires + 1
            if self.ledger.now < deadline:
                self.ledger.advance_time(deadline - self.ledger.now)
                self.trace.add({
                    "type": "clock", "now": self.ledger.now,
                    "reason": f"expiry of task {task_id}",
                })
            self._queue.append((PARTY_REQUESTOR, Expiry(task_id)))
            return True
        return False

    # ------------------------------------------------------------------

    def _execute(self, who: str, action) -> None:
        if isinstance(action, SubmitTx):
            self._do_tx(who, action)
        elif isinstance(action, actors.Instantiate):
            self._do_instantiate(who, action)
        elif isinstance(action, Attest):
            self._do_attest(action)
        elif isinstance(action, Provision):
            self._do_provision(action)
        elif isinstance(action, Execute):
            self._do_execute(action)
        elif isinstance(action, Deliver):
            self._do_deliver(action)
        elif isinstance(action, Destroy):
            self.host.destroy(action.instance)
            self.trace.add({"type": "enclave", "op": "destroy", "ok": True})
        else:
            raise TypeError(f"unknown action {action!r}")

    def _account_of(self, who: str) -> bytes:
        return (self.requestor_account if who == PARTY_REQUESTOR
                else self.node_account)

    def _do_tx(self, who: str, action: SubmitTx) -> None:
        receipt = self.ledger.submit_transaction(
            self._account_of(who), action.call, action.value, self.config.tier,
        )
        self._last_receipt_time = receipt.timestamp
        self.trace.add({
            "type": "call",
            "sender": who,
            "function": action.call.function,
            "args": _hexify(action.call.args),
            "value": action.value,
            "tier": receipt.tier,
            "blockHeight": receipt.block_height,
            "timestamp": receipt.timestamp,
            "gasUsed": receipt.gas_used,
            "gasCost": receipt.gas_cost,
            "outcome": receipt.outcome.to_json_obj(),
            "conservationOk": True,  # submit_transaction raises otherwise
        })
        for event in receipt.events:
            self.trace.add({"type": "event", **event.to_json_obj()})
        self._queue.append((who, TxReceipt(receipt)))
        for event in receipt.events:
            self._queue.append((PARTY_REQUESTOR, ChainEvent(event)))
            self._queue.append((PARTY_NODE, ChainEvent(event)))

    def _do_instantiate(self, who: str, action: actors.Instantiate) -> None:
        try:
            instance = self.host.instantiate(action.function_name)
        except EnclaveError as exc:
            self.trace.add({"type": "enclave", "op": "instantiate",
                            "ok": False, "detail": str(exc)})
            return
        self.trace.add({
            "type": "enclave", "op": "instantiate", "ok": True,
            "instanceId": instance.instance_id,
            "measurement": instance.image.measurement.hex(),
        })
        self._queue.append((PARTY_NODE,
                            InstanceCreated(instance, action.task_id)))
        self._queue.append((PARTY_REQUESTOR,
                            EnclaveReady(instance, action.task_id)))

    def _do_attest(self, action: Attest) -> None:
        try:
            self.host.attest(
                action.instance, action.expected_measurement, action.nonce,
                requestor=REQUESTOR,
            )
        except EnclaveError as exc:
            self.trace.add({"type": "enclave", "op": "attest",
                            "ok": False, "detail": str(exc)})
            return
        self.trace.add({"type": "enclave", "op": "attest", "ok": True,
                        "instanceId": action.instance.instance_id})
        self._queue.append((PARTY_REQUESTOR,
                            AttestOk(action.instance, action.task_id)))

    def _do_provision(self, action: Provision) -> None:
        self.host.provision(
            action.instance, REQUESTOR, action.secret, action.inputs,
            action.result_keys, label_prefix=f"task{action.task_id}",
        )
        self.flow.grant(f"task{action.task_id}:inputs", REQUESTOR)
        self.trace.add({"type": "enclave", "op": "provision", "ok": True,
                        "instanceId": action.instance.instance_id})
        self._queue.append((PARTY_NODE,
                            ProvisionAck(action.instance, action.task_id)))

    def _do_execute(self, action: Execute) -> None:
        try:
            protected, secret = self.host.execute(action.instance)
        except EnclaveError as exc:
            self.trace.add({"type": "enclave", "op": "execute",
                            "ok": False, "detail": str(exc)})
            return
        if self.config.execution_delay:
            self.ledger.advance_time(self.config.execution_delay)
        self.trace.add({"type": "enclave", "op": "execute", "ok": True,
                        "instanceId": action.instance.instance_id,
                        "resourceCost": action.instance.image.resource_cost})
        self._queue.append((PARTY_NODE, ExecutionDone(
            action.instance, action.task_id, protected, secret,
        )))

    def _do_deliver(self, action: Deliver) -> None:
        protected = action.protected
        if self.delivery_tamper is not None:
            protected = self.delivery_tamper(protected)
        self.trace.add({
            "type": "message", "kind": "result-delivery",
            "destination": action.destination,
            "taskId": action.task_id, "keyId": protected.key_id,
        })
        if action.destination == PARTY_THIRD:
            self._queue.append((PARTY_THIRD,
                                ResultDelivery(action.task_id, protected)))
        else:
            self._queue.append((PARTY_REQUESTOR,
                                ResultDelivery(action.task_id, protected)))

    def _third_party(self, obs: ResultDelivery) -> None:
        """The cloud endpoint: checks the public signature, acks back."""
        keys = self.requestor._keys_by_task[obs.task_id]
        valid = crypto.verify_result_signature(
            obs.protected, keys.result_keys.verify_key)
        self.trace.add({"type": "message", "kind": "third-party-ack",
                        "taskId": obs.task_id, "signatureValid": valid})
        self._queue.append((PARTY_REQUESTOR,
                            ThirdPartyAck(obs.task_id, valid)))

    # ------------------------------------------------------------------

    def _infoflow_violations(self) -> tuple[str, ...]:
        violations = []
        for ordinal in range(self.requestor._submits):
            prefix = f"task{ordinal}"
            for label in (f"{prefix}:enc-key", f"{prefix}:result"):
                if self.flow.ever_seen(label, NODE_HOST):
                    violations.append(f"{NODE_HOST} saw {label}")
            secret_seen = self.flow.first_seen(f"{prefix}:secret", NODE_HOST)
            if secret_seen is not None:
                executed_at = self.flow.mark_step(f"{prefix}:executed")
                if executed_at is None or secret_seen < executed_at:
                    violations.append(
                        f"{NODE_HOST} saw {prefix}:secret before execution"
                    )
        return tuple(violations)

    def _finish(self) -> ScenarioOutcome:
        cfg = self.config
        gas_requestor = self.ledger.gas_cost_by_account.get(
            self.requestor_account, 0)
        gas_node = self.ledger.gas_cost_by_account.get(self.node_account, 0)
        requestor_delta = (self.ledger.balance(self.requestor_account)
                           - cfg.initial_balance)
        node_delta = self.ledger.balance(self.node_account) - cfg.initial_balance
        if not cfg.include_gas_in_payoffs:
            requestor_delta += gas_requestor
            node_delta += gas_node
        value_received = (cfg.value_of_result
                          if self.requestor.received_valid_result else 0)
        self.trace.add({"type": "contract_state",
                        "state": self.contract.state_dump()})
        trace_id = self.trace.content_id()
        outcome = ScenarioOutcome(
            requestor_payoff=requestor_delta + value_received,
            node_payoff=node_delta - self.host.resource_consumed,
            locked_in_contract=self.ledger.balance(CONTRACT_ACCOUNT),
            gas_by_party={"requestor": gas_requestor, "node": gas_node},
            trace_id=trace_id,
            received_valid_result=self.requestor.received_valid_result,
            resource_cost_consumed=self.host.resource_consumed,
            requestor_balance_delta=requestor_delta,
            node_balance_delta=node_delta,
            end_to_end_seconds=self._last_receipt_time,
            infoflow_violations=self._infoflow_violations(),
        )
        self.trace.add({"type": "outcome", **outcome.to_json_obj()})
        return outcome


def run_scenario(config: ScenarioConfig,
                 function_store: FunctionStore | None = None) -> ScenarioOutcome:
    return ScenarioRunner(config, function_store).run()


# ----------------------------------------------------------------------
# payoff matrix and dominance


class PayoffMatrix:
    """Outcomes for every (requestor strategy, node strategy) pair."""

    def __init__(self, config: ScenarioConfig,
                 cells: dict[tuple[str, str], ScenarioOutcome]) -> None:
        self.config = config
        self.cells = cells

    def outcome(self, requestor_strategy: str,
                node_strategy: str) -> ScenarioOutcome:
        return self.cells[(requestor_strategy, node_strategy)]

    def to_json_obj(self) -> dict:
        return {
            "config": self.config.to_json_obj(),
            "cells": {
                f"{r}/{n}": outcome.to_json_obj()
                for (r, n), outcome in sorted(self.cells.items())
            },
        }

    def to_text_table(self) -> str:
        header = ["requestor \\ node"] + list(NODE_STRATEGIES)
        rows = [header]
        for r in REQUESTOR_STRATEGIES:
            row = [r]
            for n in NODE_STRATEGIES:
                o = self.cells[(r, n)]
                row.append(f"{o.requestor_payoff} / {o.node_payoff}")
            rows.append(row)
        widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
        lines = [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
            for row in rows
        ]
        return "\n".join(lines)


def payoff_matrix(config: ScenarioConfig) -> PayoffMatrix:
    if not config.in_rational_regime:
        raise ConfigInvalid(
            "parameters outside the rational regime "
            "(need value > payment > cost > 0 and positive deposits)"
        )
    cells = {}
    for r in REQUESTOR_STRATEGIES:
        for n in NODE_STRATEGIES:
            cells[(r, n)] = run_scenario(config.with_strategies(r, n))
    return PayoffMatrix(config, cells)


@dataclass
class DominanceReport:
    draws: int = 0
    violations: list[str] = field(default_factory=list)
    no_confirm_positive: int = 0
    honest_honest_both_positive: bool = True

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json_obj(self) -> dict:
        return {
            "draws": self.draws,
            "ok": self.ok,
            "violations": list(self.violations),
            "noConfirmPayoffPositiveCount": self.no_confirm_positive,
            "honestHonestBothPositive": self.honest_honest_both_positive,
        }


def dominance_check(configs) -> DominanceReport:
    """Honesty strictly dominates every same-party deviation against an
    honest counterparty; the honest pair is the only one where both gain.

    A cheating requestor that skips confirmation can still net a positive
    absolute payoff when the result is valuable enough; that is reported,
    not asserted against.
    """
    report = DominanceReport()
    for config in configs:
        if not config.in_rational_regime:
            raise ConfigInvalid("dominance check needs the rational regime")
        report.draws += 1
        honest = run_scenario(
            config.with_strategies(REQUESTOR_HONEST, NODE_HONEST))
        if honest.requestor_payoff <= 0 or honest.node_payoff <= 0:
            report.honest_honest_both_positive = False
            report.violations.append(
                f"draw {report.draws}: honest/honest payoffs not both positive"
            )
        for deviation in REQUESTOR_STRATEGIES:
            if deviation == REQUESTOR_HONEST:
                continue
            outcome = run_scenario(
                config.with_strategies(deviation, NODE_HONEST))
            if outcome.requestor_payoff >= honest.requestor_payoff:
                report.violations.append(
                    f"draw {report.draws}: requestor {deviation} "
                    f"({outcome.requestor_payoff}) not dominated by honest "
                    f"({honest.requestor_payoff})"
                )
            if deviation == "no-confirm" and outcome.requestor_payoff > 0:
                report.no_confirm_positive += 1
        for deviation in NODE_STRATEGIES:
            if deviation == NODE_HONEST:
                continue
            outcome = run_scenario(
                config.with_strategies(REQUESTOR_HONEST, deviation))
            if outcome.node_payoff >= honest.node_payoff:
                report.violations.append(
                    f"draw {report.draws}: node {deviation} "
                    f"({outcome.node_payoff}) not dominated by honest "
                    f"({honest.node_payoff})"
                )
            if outcome.node_payoff >= 0:
                report.violations.append(
                    f"draw {report.draws}: cheating node {deviation} "
                    f"did not lose funds ({outcome.node_payoff})"
                )
    return report


# ----------------------------------------------------------------------
# gas and latency reports


@dataclass(frozen=True)
class GasReport:
    tier: str
    per_function_gas: dict[str, int]
    total_per_task_gas: int
    gas_price: int
    per_function_cost_wei: dict[str, int]
    total_per_task_cost_wei: int

    def to_json_obj(self) -> dict:
        return {
            "tier": self.tier,
            "perFunctionGas": dict(self.per_function_gas),
            "totalPerTaskGas": self.total_per_task_gas,
            "gasPriceWei": self.gas_price,
            "perFunctionCostWei": dict(self.per_function_cost_wei),
            "totalPerTaskCostWei": self.total_per_task_cost_wei,
            "totalPerTaskCostEther": self.total_per_task_cost_wei / 10**18,
        }

    def to_text_table(self) -> str:
        names = list(self.per_function_gas)
        width = max(len(n) for n in names + ["Total per task"])
        lines = [f"{'Function'.ljust(width)}  {'Gas':>9}  {'Cost (wei)':>22}"]
        for name in names:
            lines.append(
                f"{name.ljust(width)}  {self.per_function_gas[name]:>9}  "
                f"{self.per_function_cost_wei[name]:>22}"
            )
        lines.append(
            f"{'Total per task'.ljust(width)}  {self.total_per_task_gas:>9}  "
            f"{self.total_per_task_cost_wei:>22}"
        )
        return "\n".join(lines)


def gas_report(tier: str, schedule: GasSchedule | None = None) -> GasReport:
    schedule = schedule or GasSchedule()
    price = schedule.gas_price_per_tier[tier]
    per_function = dict(schedule.per_function)
    per_cost = {name: gas * price for name, gas in per_function.items()}
    total_gas = schedule.total_per_task_gas
    return GasReport(
        tier=tier,
        per_function_gas=per_function,
        total_per_task_gas=total_gas,
        gas_price=price,
        per_function_cost_wei=per_cost,
        total_per_task_cost_wei=total_gas * price,
    )


@dataclass(frozen=True)
class LatencyReport:
    tier: str
    confirmation_delay: int
    on_chain_seconds: int
    execution_delay: int
    total_seconds: int

    def to_json_obj(self) -> dict:
        return {
            "tier": self.tier,
            "confirmationDelaySeconds": self.confirmation_delay,
            "onChainSeconds": self.on_chain_seconds,
            "executionDelaySeconds": self.execution_delay,
            "totalSeconds": self.total_seconds,
        }


def latency_report(tier: str,
                   config: ScenarioConfig | None = None) -> LatencyReport:
    """End-to-end honest-run latency: four sequential confirmations (one
    per contract call) plus the configured execution delay."""
    from dataclasses import replace

    config = config or ScenarioConfig()
    config = replace(config, tier=tier,
                     requestor_strategy=REQUESTOR_HONEST,
                     node_strategy=NODE_HONEST)
    outcome = run_scenario(config)
    schedule = config.gas_schedule()
    return LatencyReport(
        tier=tier,
        confirmation_delay=schedule.confirmation_delay_per_tier[tier],
        on_chain_seconds=outcome.end_to_end_seconds - config.execution_delay,
        execution_delay=config.execution_delay,
        total_seconds=outcome.end_to_end_seconds,
    )


# ----------------------------------------------------------------------
# claim races


def run_claim_race(arrival_deposits: list[int], threshold: int = 5,
                   payment: int = 10) -> tuple[list[Receipt], EscrowContract, Ledger]:
    """Submit one task, then fire one claim per arrival in order.

    ``arrival_deposits[i]`` is the value the i-th claimant attaches.  Used
    to check first-claim exclusivity over seeded arrival permutations.
    """
    ledger = Ledger()
    contract = EscrowContract(ledger, threshold)
    requestor = ledger.create_account(10**6)
    receipt = ledger.submit_transaction(
        requestor,
        ContractCall("submitTask", {
            "function_name": "identity",
            "hash_lock": bytes(32),
            "expires": 10_000,
        }),
        payment + threshold, "standard",
    )
    task_id = receipt.outcome.task_id
    receipts = []
    for deposit in arrival_deposits:
        claimant = ledger.create_account(10**6)
        receipts.append(ledger.submit_transaction(
            claimant, ContractCall("claimTask", {"task_id": task_id}),
            deposit, "standard",
        ))
    return receipts, contract, ledger
