"""Strategy-driven requestor and execution-node behaviours.

Actors are deterministic state machines: the scheduler feeds them one
observation at a time (a chain event, a transaction receipt, an enclave
notification, a delivered message or an expiry tick) and they answer with
a list of protocol actions for the scheduler to execute.  They never issue
a dependent chain call before the previous call's receipt has been
observed.

Honest behaviour follows the protocol sequence: the requestor generates a
secret, submits the task with payment + deposit, attests and provisions the
claimed enclave, and confirms once a valid result arrives; the node claims,
executes, reveals the secret on-chain and delivers the result.  Deviations
cut the sequence short:

* ``no-confirm``   requestor keeps the result but never confirms;
* ``withhold-input``  requestor never provisions after the claim;
* ``claim-only``   node claims and goes silent;
* ``compute-no-deliver``  node recovers its deposit but keeps the result.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import crypto
from .config import (
    NODE_CLAIM_ONLY,
    NODE_HONEST,
    REQUESTOR_HONEST,
    REQUESTOR_WITHHOLD_INPUT,
    ScenarioConfig,
)
from .contract import CallOutcome
from .crypto import ProtectedResult, ResultKeyPair
from .enclave import REQUESTOR, EnclaveInstance, InfoFlowLedger
from .ledger import ContractCall, LedgerEvent, Receipt

# ----------------------------------------------------------------------
# observations


@dataclass(frozen=True)
class Start:
    pass


@dataclass(frozen=True)
class ChainEvent:
    event: LedgerEvent


@dataclass(frozen=True)
class TxReceipt:
    receipt: Receipt


@dataclass(frozen=True)
class EnclaveReady:
    instance: EnclaveInstance
    task_id: int


@dataclass(frozen=True)
class AttestOk:
    instance: EnclaveInstance
    task_id: int


@dataclass(frozen=True)
class InstanceCreated:
    instance: EnclaveInstance
    task_id: int


@dataclass(frozen=True)
class ProvisionAck:
    instance: EnclaveInstance
    task_id: int


@dataclass(frozen=True)
class ExecutionDone:
    instance: EnclaveInstance
    task_id: int
    protected: ProtectedResult
    secret: bytes


@dataclass(frozen=True)
class ResultDelivery:
    task_id: int
    protected: ProtectedResult


@dataclass(frozen=True)
class ThirdPartyAck:
    task_id: int
    signature_valid: bool


@dataclass(frozen=True)
class Expiry:
    task_id: int


# ----------------------------------------------------------------------
# actions


@dataclass(frozen=True)
class SubmitTx:
    call: ContractCall
    value: int = 0


@dataclass(frozen=True)
class Instantiate:
    function_name: str
    task_id: int


@dataclass(frozen=True)
class Attest:
    instance: EnclaveInstance
    task_id: int
    expected_measurement: bytes
    nonce: bytes


@dataclass(frozen=True)
class Provision:
    instance: EnclaveInstance
    task_id: int
    secret: bytes
    inputs: object
    result_keys: ResultKeyPair


@dataclass(frozen=True)
class Execute:
    instance: EnclaveInstance
    task_id: int


@dataclass(frozen=True)
class Destroy:
    instance: EnclaveInstance


@dataclass(frozen=True)
class Deliver:
    task_id: int
    protected: ProtectedResult
    destination: str  # "requestor" or "third-party"


Action = object
Observation = object


# ----------------------------------------------------------------------


@dataclass
class _TaskKeys:
    secret: bytes
    hash_lock: bytes
    result_keys: ResultKeyPair


class RequestorActor:
    """The requesting device: submits, attests, provisions, confirms."""

    def __init__(self, config: ScenarioConfig, account: bytes,
                 rng: random.Random, flow: InfoFlowLedger,
                 measurement_allow_list: dict[str, bytes]) -> None:
        self.config = config
        self.account = account
        self.rng = rng
        self.flow = flow
        self.allow_list = measurement_allow_list
        self.task_id: int | None = None
        self.received_valid_result = False
        self.confirmed = False
        self.result_plaintext: bytes | None = None
        self._keys_by_task: dict[int, _TaskKeys] = {}
        self._submits = 0
        self._resubmits_left = config.max_resubmits

    # A single requestor driving a fresh contract gets sequential task ids,
    # so the ordinal of the submission doubles as the info-flow prefix.
    def _prepare_task(self) -> _TaskKeys:
        ordinal = self._submits
        self._submits += 1
        keys = _TaskKeys(
            secret=crypto.generate_secret(self.rng),
            hash_lock=b"",
            result_keys=crypto.new_result_keys(self.rng),
        )
        keys.hash_lock = crypto.hash_secret(keys.secret)
        self._keys_by_task[ordinal] = keys
        self.flow.grant(f"task{ordinal}:secret", REQUESTOR)
        self.flow.grant(f"task{ordinal}:enc-key", REQUESTOR)
        return keys

    def _submit_action(self) -> SubmitTx:
        keys = self._prepare_task()
        return SubmitTx(
            call=ContractCall("submitTask", {
                "function_name": self.config.function_name,
                "hash_lock": keys.hash_lock,
                "expires": self.config.expires,
            }),
            value=self.config.payment + self.config.threshold,
        )

    def step(self, obs: Observation) -> list[Action]:
        if isinstance(obs, Start):
            return [self._submit_action()]

        if isinstance(obs, TxReceipt):
            receipt = obs.receipt
            outcome = receipt.outcome
            if (receipt.call.function == "submitTask"
                    and isinstance(outcome, CallOutcome) and outcome.accepted):
                self.task_id = outcome.task_id
            elif (receipt.call.function == "timeout"
                    and isinstance(outcome, CallOutcome) and outcome.accepted
                    and self._resubmits_left > 0):
                # A resubmission always carries a fresh secret and hash.
                self._resubmits_left -= 1
                self.received_valid_result = False
                return [self._submit_action()]
            return []

        if isinstance(obs, EnclaveReady):
            if self.config.requestor_strategy == REQUESTOR_WITHHOLD_INPUT:
                return []
            expected = self.allow_list[self.config.function_name]
            return [Attest(
                instance=obs.instance,
                task_id=obs.task_id,
                expected_measurement=expected,
                nonce=self.rng.randbytes(16),
            )]

        if isinstance(obs, AttestOk):
            keys = self._keys_by_task[obs.task_id]
            return [Provision(
                instance=obs.instance,
                task_id=obs.task_id,
                secret=keys.secret,
                inputs=self.config.inputs,
                result_keys=keys.result_keys,
            )]

        if isinstance(obs, ResultDelivery):
            keys = self._keys_by_task[obs.task_id]
            try:
                plaintext = crypto.open_result(obs.protected, keys.result_keys)
            except crypto.CryptoError:
                # Bad delivery: fall through to the timeout path.
                return []
            self.result_plaintext = plaintext
            self.received_valid_result = True
            self.flow.grant(f"task{obs.task_id}:result", REQUESTOR)
            return self._maybe_confirm(obs.task_id)

        if isinstance(obs, ThirdPartyAck):
            if not obs.signature_valid:
                return []
            self.received_valid_result = True
            return self._maybe_confirm(obs.task_id)

        if isinstance(obs, Expiry):
            if not self.received_valid_result:
                return [SubmitTx(ContractCall("timeout", {"task_id": obs.task_id}))]
            return []

        return []

    def _maybe_confirm(self, task_id: int) -> list[Action]:
        if self.config.requestor_strategy != REQUESTOR_HONEST:
            return []
        self.confirmed = True
        return [SubmitTx(ContractCall("finalizeRequestor", {"task_id": task_id}))]


class ExecutionNodeActor:
    """The executing node's untrusted host-side client."""

    def __init__(self, config: ScenarioConfig, account: bytes) -> None:
        self.config = config
        self.account = account
        self.claimed_task_id: int | None = None
        self.instances: dict[int, EnclaveInstance] = {}
        self._function_by_task: dict[int, str] = {}
        self._protected_by_task: dict[int, ProtectedResult] = {}

    def step(self, obs: Observation) -> list[Action]:
        strategy = self.config.node_strategy

        if isinstance(obs, ChainEvent) and obs.event.kind == "TaskSubmitted":
            self._function_by_task[obs.event.task_id] = (
                obs.event.payload["functionName"]
            )
            return [SubmitTx(
                call=ContractCall("claimTask", {"task_id": obs.event.task_id}),
                value=self.config.node_deposit,
            )]

        if isinstance(obs, TxReceipt):
            receipt = obs.receipt
            outcome = receipt.outcome
            if not (isinstance(outcome, CallOutcome) and outcome.accepted):
                return []
            if receipt.call.function == "claimTask":
                task_id = receipt.call.args["task_id"]
                self.claimed_task_id = task_id
                if strategy == NODE_CLAIM_ONLY:
                    return []
                return [Instantiate(
                    function_name=self._function_by_task[task_id],
                    task_id=task_id,
                )]
            if receipt.call.function == "finalizeExecutionNode":
                task_id = receipt.call.args["task_id"]
                instance = self.instances[task_id]
                actions: list[Action] = []
                if strategy == NODE_HONEST:
                    destination = (
                        "third-party" if self.config.deliver_to_third_party
                        else "requestor"
                    )
                    actions.append(Deliver(
                        task_id=task_id,
                        protected=self._protected_by_task[task_id],
                        destination=destination,
                    ))
                actions.append(Destroy(instance))
                return actions
            return []

        if isinstance(obs, InstanceCreated):
            self.instances[obs.task_id] = obs.instance
            return []

        if isinstance(obs, ProvisionAck):
            return [Execute(instance=obs.instance, task_id=obs.task_id)]

        if isinstance(obs, ExecutionDone):
            self._protected_by_task[obs.task_id] = obs.protected
            return [SubmitTx(ContractCall("finalizeExecutionNode", {
                "task_id": obs.task_id,
                "secret": obs.secret,
            }))]

        return []
