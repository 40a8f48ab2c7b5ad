"""Transaction execution behind a single engine entry point.

The node only talks to ``Engine.execute_transaction``; any engine offering
that call (for instance a full EVM binding) can replace this one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

from ..types import (
    STATUS_FAILURE,
    STATUS_SUCCESS,
    ConsensusProof,
    Receipt,
    Transaction,
    contract_address,
    intrinsic_gas,
)
from ..state.world import StateChanges, StateOverlay, WorldState
from .interpreter import INVALID, OUT_OF_GAS, SUCCESS, ExecutionContext, ExecutionOutcome, interpret
from .natives import NATIVE_MARKER_CODE, NativeRegistry

G_CODE_DEPOSIT = 200

NONCE_MISMATCH = "nonce mismatch"
INSUFFICIENT_BALANCE = "insufficient balance for gas and value"
GAS_BELOW_INTRINSIC = "gas limit below intrinsic gas"


@dataclass(frozen=True)
class BlockEnv:
    number: int
    timestamp: int
    chain_id: int


class Engine:
    def __init__(self, natives: Optional[NativeRegistry] = None):
        self.natives = natives if natives is not None else NativeRegistry()

    def execute_transaction(
        self,
        state: WorldState,
        tx: Transaction,
        sender: bytes,
        env: BlockEnv,
        *,
        cumulative_gas: int = 0,
        index: int = 0,
        proof: Optional[ConsensusProof] = None,
    ) -> Tuple[ExecutionOutcome, Receipt]:
        """Run ``tx`` against ``state`` without committing.

        The outcome's ``state_delta`` carries the mutations to commit.  Stateful
        rejections (nonce, balance) yield a failure receipt with zero gas and an
        empty delta: nothing moves and no fee is charged.
        """
        overlay = StateOverlay(state)

        def reject(reason: str):
            outcome = ExecutionOutcome(INVALID, 0, error=reason, state_delta=StateChanges())
            return outcome, self._receipt(tx, sender, outcome, cumulative_gas, index, proof, None)

        base_gas = intrinsic_gas(tx)
        if tx.gas_limit < base_gas:
            return reject(GAS_BELOW_INTRINSIC)
        nonce = overlay.get_nonce(sender)
        if tx.nonce != nonce:
            return reject(NONCE_MISMATCH)
        gas_cost = tx.gas_limit * tx.gas_price
        if overlay.get_balance(sender) < gas_cost + tx.value:
            return reject(INSUFFICIENT_BALANCE)

        overlay.set_nonce(sender, nonce + 1)
        overlay.add_balance(sender, -gas_cost)
        checkpoint = overlay.checkpoint()
        available = tx.gas_limit - base_gas
        created = None

        if tx.is_create:
            created = contract_address(sender, nonce)
            outcome = self._create(overlay, tx, sender, created, available, env)
        else:
            overlay.add_balance(sender, -tx.value)
            overlay.add_balance(tx.to, tx.value)
            outcome = self._call(overlay, tx, sender, available, env)

        if not outcome.success:
            overlay.revert(checkpoint)
            created = None
        gas_used = base_gas + outcome.gas_used
        overlay.add_balance(sender, (tx.gas_limit - gas_used) * tx.gas_price)
        final = ExecutionOutcome(outcome.status, gas_used, outcome.return_data,
                                 outcome.logs if outcome.success else (), outcome.stack,
                                 outcome.error, overlay.changes())
        return final, self._receipt(tx, sender, final, cumulative_gas, index, proof, created)

    def _create(self, overlay, tx, sender, address, gas, env) -> ExecutionOutcome:
        if overlay.get_nonce(address) != 0 or overlay.get_code(address):
            return ExecutionOutcome(INVALID, gas, error="address collision")
        overlay.add_balance(sender, -tx.value)
        overlay.add_balance(address, tx.value)
        overlay.set_nonce(address, 1)
        ctx = ExecutionContext(sender, address, tx.value, b"", gas, overlay, env.number, env.timestamp, env.chain_id)
        outcome = interpret(tx.data, ctx)
        if not outcome.success:
            return outcome
        deposit = G_CODE_DEPOSIT * len(outcome.return_data)
        if outcome.gas_used + deposit > gas:
            return ExecutionOutcome(OUT_OF_GAS, gas, error="code deposit")
        overlay.set_code(address, outcome.return_data)
        return ExecutionOutcome(SUCCESS, outcome.gas_used + deposit, outcome.return_data, outcome.logs, outcome.stack)

    def _call(self, overlay, tx, sender, gas, env) -> ExecutionOutcome:
        if tx.to in self.natives:
            return self.natives.execute(overlay, tx.to, sender, tx.value, tx.data, gas)
        code = overlay.get_code(tx.to)
        ctx = ExecutionContext(sender, tx.to, tx.value, tx.data, gas, overlay, env.number, env.timestamp, env.chain_id)
        return interpret(code, ctx)

    def _receipt(self, tx, sender, outcome, cumulative_gas, index, proof, created) -> Receipt:
        return Receipt(
            tx_hash=tx.hash,
            status=STATUS_SUCCESS if outcome.success else STATUS_FAILURE,
            gas_used=outcome.gas_used,
            cumulative_gas_used=cumulative_gas + outcome.gas_used,
            logs=outcome.logs,
            contract_address=created,
            consensus_proof=proof,
            sender=sender,
            to=tx.to,
            gas_price=tx.gas_price,
            transaction_index=index,
        )

    def call(self, state: WorldState, sender: bytes, to: Optional[bytes], data: bytes, value: int,
             gas: int, env: BlockEnv) -> ExecutionOutcome:
        """Read-only message call for eth_call/eth_estimateGas; never commits."""
        overlay = StateOverlay(state)
        if overlay.get_balance(sender) < value:
            overlay.set_balance(sender, value)
        tx = Transaction(overlay.get_nonce(sender), 0, gas, to, value, data)
        base = intrinsic_gas(tx)
        if gas < base:
            return ExecutionOutcome(OUT_OF_GAS, gas, error=GAS_BELOW_INTRINSIC)
        if to is None:
            address = contract_address(sender, overlay.get_nonce(sender))
            outcome = self._create(overlay, tx, sender, address, gas - base, env)
        else:
            overlay.add_balance(sender, -value)
            overlay.add_balance(to, value)
            outcome = self._call(overlay, tx, sender, gas - base, env)
        return ExecutionOutcome(outcome.status, base + outcome.gas_used, outcome.return_data,
                                outcome.logs, outcome.stack, outcome.error)

    def genesis_changes(self, state: WorldState, overlay: Optional[StateOverlay] = None) -> StateChanges:
        """Marker code and initial storage for every registered native contract."""
        overlay = overlay if overlay is not None else StateOverlay(state)
        for address, contract in self.natives.items():
            overlay.set_code(address, NATIVE_MARKER_CODE)
            for slot, value in contract.genesis_storage().items():
                overlay.set_storage(address, slot, value)
        return overlay.changes()
