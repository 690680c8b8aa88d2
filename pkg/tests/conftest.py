from __future__ import annotations

import pytest

from teescrow.contract import EscrowContract
from teescrow.ledger import ContractCall, GasSchedule, Ledger

THRESHOLD = 5


def zero_delay_schedule() -> GasSchedule:
    """Schedule whose confirmations are instant, so tests control `now`."""
    return GasSchedule(
        confirmation_delay_per_tier={"slow": 0, "standard": 0, "fast": 0}
    )


def call(ledger: Ledger, sender: bytes, function: str, value: int = 0,
         tier: str = "standard", **args):
    return ledger.submit_transaction(
        sender, ContractCall(function, args), value, tier
    )


@pytest.fixture
def chain():
    ledger = Ledger(zero_delay_schedule())
    contract = EscrowContract(ledger, threshold=THRESHOLD)
    return ledger, contract


@pytest.fixture
def funded(chain):
    ledger, contract = chain
    requestor = ledger.create_account(1000)
    node = ledger.create_account(1000)
    return ledger, contract, requestor, node
