"""Execution engine: instantiates models and fires guarded transitions.

Firing is a pure function over immutable instance states; the engine
couples it to the ledger by publishing state contents to the content
store and registering each transition on-chain. The local view advances
only when the on-chain registration succeeded, so it is always a prefix
of the ledger's truth.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

from . import errors
from .errors import (
    CorruptContent,
    GuardFailed,
    ModelNotRegistered,
    UnknownTransition,
    WrongSourceState,
)
from .hashing import canonical_bytes, digest
from .ledger import Ledger, LedgerTransaction, TxReceipt
from .model import StateMachineModel, TransitionDef, model_hash
from .registry import (
    Descriptor,
    Registry,
    TransitionRecord,
    call_register_instance,
    call_register_transition,
    call_terminate_instance,
)


@dataclass(frozen=True)
class InstanceState:
    """Run-time snapshot of one instance."""

    instance_hash: str
    current_state: str
    variables: Mapping[str, int]
    step: int


@dataclass(frozen=True)
class TraceStep:
    transition_id: str
    pre_hash: str
    post_hash: str


@dataclass(frozen=True)
class ExecutionTrace:
    steps: tuple[TraceStep, ...]

    def state_hashes(self) -> list[str]:
        """Pre-state of the first step followed by every post-state."""
        if not self.steps:
            return []
        return [self.steps[0].pre_hash] + [s.post_hash for s in self.steps]


def state_content(state: InstanceState) -> bytes:
    return canonical_bytes({
        "current_state": state.current_state,
        "instance_hash": state.instance_hash,
        "step": state.step,
        "variables": dict(state.variables),
    })


def state_hash(state: InstanceState) -> str:
    return digest(state_content(state))


def parse_state_content(data: bytes) -> InstanceState:
    try:
        raw = json.loads(data.decode("utf-8"))
        return InstanceState(
            instance_hash=raw["instance_hash"],
            current_state=raw["current_state"],
            variables=MappingProxyType({k: int(v) for k, v in raw["variables"].items()}),
            step=int(raw["step"]),
        )
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CorruptContent(f"not an instance state document: {exc}") from exc


def creation_record(model_hash_value: str, owner: str, descriptor: Descriptor,
                    nonce: int) -> bytes:
    """Canonical content whose digest is the instance hash."""
    return canonical_bytes({
        "descriptor": {"extra": dict(descriptor.extra), "id": descriptor.id,
                       "name": descriptor.name},
        "model_hash": model_hash_value,
        "nonce": nonce,
        "owner": owner,
    })


def parse_creation_record(data: bytes) -> dict:
    try:
        raw = json.loads(data.decode("utf-8"))
        raw["model_hash"], raw["owner"], raw["nonce"]
        return raw
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptContent(f"not an instance creation record: {exc}") from exc


def fire(state: InstanceState, model: StateMachineModel, transition_id: str) -> InstanceState:
    """Fire one transition locally; pure, raises if the firing is illegal."""
    transition = model.transition(transition_id)
    if transition is None:
        raise UnknownTransition(f"model has no transition {transition_id!r}")
    if transition.source != state.current_state:
        raise WrongSourceState(
            f"{transition_id!r} fires from {transition.source!r}, "
            f"instance is at {state.current_state!r}")
    if transition.guard is not None and not transition.guard.holds(state.variables):
        raise GuardFailed(f"guard of {transition_id!r} does not hold")
    variables = (transition.effect.apply(state.variables)
                 if transition.effect is not None else dict(state.variables))
    return InstanceState(
        instance_hash=state.instance_hash,
        current_state=transition.target,
        variables=MappingProxyType(variables),
        step=state.step + 1,
    )


def enabled_transitions(state: InstanceState, model: StateMachineModel) -> list[TransitionDef]:
    """Transitions fireable from the current state, ordered by id."""
    return [
        t for t in model.transitions
        if t.source == state.current_state
        and (t.guard is None or t.guard.holds(state.variables))
    ]


class Engine:
    """Drives instances for one account against a ledger and content store."""

    def __init__(self, ledger: Ledger, registry: Registry, store, account: str):
        self.ledger = ledger
        self.registry = registry
        self.store = store
        self.account = account

    def instantiate(self, model: StateMachineModel, descriptor: Descriptor,
                    nonce: int) -> InstanceState:
        """Create and register a fresh instance at the model's initial state."""
        mh = model_hash(model)
        if not self.registry.has_model(mh):
            raise ModelNotRegistered(f"model {mh} is not registered")
        record = creation_record(mh, self.account, descriptor, nonce)
        instance_hash = digest(record)
        initial = InstanceState(
            instance_hash=instance_hash,
            current_state=model.initial,
            variables=MappingProxyType(dict(model.variables)),
            step=0,
        )
        self.store.put(record)
        self.store.put(state_content(initial))
        self.submit_call(call_register_instance(instance_hash, mh, descriptor,
                                                state_hash(initial)))
        return initial

    def fire_and_register(
        self, state: InstanceState, model: StateMachineModel, transition_id: str
    ) -> tuple[InstanceState, TransitionRecord]:
        """Fire locally, then register the pre/post pair on-chain.

        Raises without side effects if the firing is illegal; if the
        on-chain registration fails, the caller's state stays valid and
        unadvanced.
        """
        post = fire(state, model, transition_id)
        pre_hash = state_hash(state)
        post_hash = state_hash(post)
        self.store.put(state_content(state))
        self.store.put(state_content(post))
        self.submit_call(call_register_transition(state.instance_hash, pre_hash, post_hash))
        record = self.registry.get_transitions(state.instance_hash)[-1]
        return post, record

    def terminate(self, instance_hash: str) -> None:
        self.submit_call(call_terminate_instance(instance_hash))

    def random_walk(self, model: StateMachineModel, instance: InstanceState,
                    steps: int, seed: int) -> ExecutionTrace:
        """Fire up to `steps` uniformly chosen enabled transitions.

        Stops early at a final state or when nothing is enabled, then
        terminates the instance on-chain. Same seed, same walk.
        """
        rng = random.Random(seed)
        trace: list[TraceStep] = []
        state = instance
        for _ in range(steps):
            if state.current_state in model.finals:
                break
            enabled = enabled_transitions(state, model)
            if not enabled:
                break
            transition = rng.choice(enabled)
            pre_hash = state_hash(state)
            state, _ = self.fire_and_register(state, model, transition.id)
            trace.append(TraceStep(transition.id, pre_hash, state_hash(state)))
        self.terminate(instance.instance_hash)
        return ExecutionTrace(steps=tuple(trace))

    def load_state(self, instance_hash: str) -> InstanceState:
        """Rebuild the current local state from the registry and store."""
        record = self.registry.get_instance(instance_hash)
        return parse_state_content(self.store.get(record.latest_state))

    def submit_call(self, call: dict) -> TxReceipt:
        """Submit one registry call from this account and wait for its outcome."""
        tx = LedgerTransaction(self.account, call, self.ledger.next_nonce(self.account))
        receipt = self.ledger.submit(tx)
        if receipt.status == "pending":
            self.ledger.commit_block()
        if not receipt.ok:
            raise errors.error_class(receipt.error or "")(
                f"registry rejected {call['op']}: {receipt.error}")
        return receipt
