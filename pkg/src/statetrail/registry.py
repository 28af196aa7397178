"""On-ledger registry for models, instances, states and transitions.

The registry is a deterministic state machine executed inside ledger block
application. It stores records keyed by content hash, enforces ownership
and delegation, guarantees per-instance chain continuity (a transition's
pre-state must equal the instance's latest state) and emits one event per
successful instance-level mutation. The registry never sees model
semantics, only opaque hashes; termination is therefore always explicit.

Call wire format (embedded in LedgerTransaction): canonical JSON
{"op": name, "args": {...}} built by the call_* helpers below.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import (
    DuplicateInstance,
    DuplicateModel,
    InstanceTerminated,
    InvalidDescriptor,
    NotAuthorized,
    StaleChain,
    UnknownCall,
    UnknownInstance,
    UnknownModel,
    UnknownSubject,
)
from .hashing import canonical_bytes, content_hash
from .ledger import ApplyContext

EVENT_INSTANCE_CREATED = "InstanceCreated"
EVENT_TRANSITION = "TransitionEvent"
EVENT_INSTANCE_TERMINATED = "InstanceTerminated"


class InstanceStatus(str, Enum):
    ACTIVE = "active"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class Descriptor:
    """Caller-supplied metadata shared by model and instance records."""

    id: str
    name: str
    extra: dict[str, str] = field(default_factory=dict)
    created_at: int | None = None

    def to_dict(self) -> dict:
        return {
            "created_at": self.created_at,
            "extra": dict(self.extra),
            "id": self.id,
            "name": self.name,
        }


def validate_descriptor(raw: dict) -> Descriptor:
    if not isinstance(raw, dict):
        raise InvalidDescriptor("descriptor must be an object")
    did = raw.get("id")
    name = raw.get("name", "")
    extra = raw.get("extra", {})
    if not isinstance(did, str) or did == "":
        raise InvalidDescriptor("descriptor id must be a non-empty string")
    if not isinstance(name, str):
        raise InvalidDescriptor("descriptor name must be a string")
    if not isinstance(extra, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in extra.items()
    ):
        raise InvalidDescriptor("descriptor extra must map strings to strings")
    return Descriptor(id=did, name=name, extra=dict(extra))


@dataclass(frozen=True)
class ModelRecord:
    model_hash: str
    owner: str
    descriptor: Descriptor


@dataclass
class InstanceRecord:
    instance_hash: str
    model_hash: str
    owner: str
    descriptor: Descriptor
    status: InstanceStatus
    latest_state: str
    transition_count: int


@dataclass(frozen=True)
class StateRecord:
    state_hash: str
    instance_hash: str
    seq: int


@dataclass(frozen=True)
class TransitionRecord:
    transition_id: str
    instance_hash: str
    pre_state: str
    post_state: str
    seq: int


@dataclass(frozen=True)
class TransitionEvent:
    instance_hash: str
    pre_state: str
    post_state: str
    seq: int
    emitter: str

    def payload(self) -> dict:
        return {
            "emitter": self.emitter,
            "instance_hash": self.instance_hash,
            "post_state": self.post_state,
            "pre_state": self.pre_state,
            "seq": self.seq,
        }


def transition_id_for(instance_hash: str, pre_state: str, post_state: str, seq: int) -> str:
    """Content-addressed identifier of one registered transition."""
    return content_hash({
        "instance_hash": instance_hash,
        "post_state": post_state,
        "pre_state": pre_state,
        "seq": seq,
    })


# --------------------------------------------------------------- call builders

def call_register_model(model_hash: str, descriptor: Descriptor) -> dict:
    return {"op": "register_model", "args": {
        "model_hash": model_hash,
        "descriptor": {"id": descriptor.id, "name": descriptor.name,
                       "extra": dict(descriptor.extra)},
    }}


def call_register_instance(instance_hash: str, model_hash: str, descriptor: Descriptor,
                           initial_state_hash: str) -> dict:
    return {"op": "register_instance", "args": {
        "instance_hash": instance_hash,
        "model_hash": model_hash,
        "descriptor": {"id": descriptor.id, "name": descriptor.name,
                       "extra": dict(descriptor.extra)},
        "initial_state_hash": initial_state_hash,
    }}


def call_register_transition(instance_hash: str, pre_state: str, post_state: str) -> dict:
    return {"op": "register_transition", "args": {
        "instance_hash": instance_hash,
        "pre_state": pre_state,
        "post_state": post_state,
    }}


def call_terminate_instance(instance_hash: str) -> dict:
    return {"op": "terminate_instance", "args": {"instance_hash": instance_hash}}


def call_delegate_access(subject_hash: str, delegate: str) -> dict:
    return {"op": "delegate_access", "args": {
        "subject_hash": subject_hash,
        "delegate": delegate,
    }}


class Registry:
    """Deterministic contract state: a pure function of the applied calls."""

    def __init__(self) -> None:
        self._models: dict[str, ModelRecord] = {}
        self._instances: dict[str, InstanceRecord] = {}
        self._states: dict[str, list[StateRecord]] = {}
        self._transitions: dict[str, list[TransitionRecord]] = {}
        self._delegates: dict[str, set[str]] = {}

    # ------------------------------------------------------------ ledger hook

    def apply(self, sender: str, call: dict, ctx: ApplyContext) -> list[tuple[str, dict]]:
        """Dispatch one registry call; returns the events it emitted."""
        op = call.get("op")
        args = call.get("args")
        if not isinstance(args, dict):
            raise UnknownCall("call args must be an object")
        try:
            if op == "register_model":
                self.register_model(sender, args["model_hash"],
                                    validate_descriptor(args["descriptor"]),
                                    timestamp=ctx.timestamp)
                return []
            if op == "register_instance":
                record = self.register_instance(
                    sender, args["instance_hash"], args["model_hash"],
                    validate_descriptor(args["descriptor"]), args["initial_state_hash"],
                    timestamp=ctx.timestamp)
                return [(EVENT_INSTANCE_CREATED, {
                    "emitter": sender,
                    "initial_state": record.latest_state,
                    "instance_hash": record.instance_hash,
                    "model_hash": record.model_hash,
                    "seq": 0,
                })]
            if op == "register_transition":
                _, event = self.register_transition(
                    sender, args["instance_hash"], args["pre_state"], args["post_state"])
                return [(EVENT_TRANSITION, event.payload())]
            if op == "terminate_instance":
                record = self.terminate_instance(sender, args["instance_hash"])
                return [(EVENT_INSTANCE_TERMINATED, {
                    "emitter": sender,
                    "instance_hash": record.instance_hash,
                    "seq": record.transition_count + 1,
                })]
            if op == "delegate_access":
                self.delegate_access(sender, args["subject_hash"], args["delegate"])
                return []
        except KeyError as exc:
            raise UnknownCall(f"missing call argument {exc}") from exc
        raise UnknownCall(f"unknown registry operation {op!r}")

    # ------------------------------------------------------------- operations

    def register_model(self, caller: str, model_hash: str, descriptor: Descriptor,
                       *, timestamp: int = 0) -> ModelRecord:
        if descriptor.id == "":
            raise InvalidDescriptor("descriptor id must be a non-empty string")
        if model_hash in self._models:
            raise DuplicateModel(f"model {model_hash} already registered")
        record = ModelRecord(model_hash, caller, replace(descriptor, created_at=timestamp))
        self._models[model_hash] = record
        return record

    def register_instance(self, caller: str, instance_hash: str, model_hash: str,
                          descriptor: Descriptor, initial_state_hash: str,
                          *, timestamp: int = 0) -> InstanceRecord:
        if descriptor.id == "":
            raise InvalidDescriptor("descriptor id must be a non-empty string")
        if model_hash not in self._models:
            raise UnknownModel(f"model {model_hash} not registered")
        self._require_authorized(caller, model_hash, self._models[model_hash].owner)
        if instance_hash in self._instances:
            raise DuplicateInstance(f"instance {instance_hash} already registered")
        record = InstanceRecord(
            instance_hash=instance_hash,
            model_hash=model_hash,
            owner=caller,
            descriptor=replace(descriptor, created_at=timestamp),
            status=InstanceStatus.ACTIVE,
            latest_state=initial_state_hash,
            transition_count=0,
        )
        self._instances[instance_hash] = record
        self._states[instance_hash] = [StateRecord(initial_state_hash, instance_hash, 0)]
        self._transitions[instance_hash] = []
        return record

    def register_transition(self, caller: str, instance_hash: str, pre_state: str,
                            post_state: str) -> tuple[TransitionRecord, TransitionEvent]:
        record = self._active_instance(caller, instance_hash)
        if pre_state != record.latest_state:
            raise StaleChain(
                f"pre-state {pre_state} does not match latest {record.latest_state}")
        seq = record.transition_count + 1
        transition = TransitionRecord(
            transition_id=transition_id_for(instance_hash, pre_state, post_state, seq),
            instance_hash=instance_hash,
            pre_state=pre_state,
            post_state=post_state,
            seq=seq,
        )
        self._states[instance_hash].append(StateRecord(post_state, instance_hash, seq))
        self._transitions[instance_hash].append(transition)
        record.latest_state = post_state
        record.transition_count = seq
        event = TransitionEvent(instance_hash, pre_state, post_state, seq, caller)
        return transition, event

    def terminate_instance(self, caller: str, instance_hash: str) -> InstanceRecord:
        record = self._active_instance(caller, instance_hash)
        record.status = InstanceStatus.TERMINATED
        return record

    def delegate_access(self, caller: str, subject_hash: str, delegate: str) -> tuple[str, ...]:
        owner = self.get_owner(subject_hash)
        if caller != owner:
            raise NotAuthorized(f"{caller} does not own {subject_hash}")
        self._delegates.setdefault(subject_hash, set()).add(delegate)
        return tuple(sorted(self._delegates[subject_hash]))

    # ------------------------------------------------------------------ reads

    def has_model(self, model_hash: str) -> bool:
        return model_hash in self._models

    def get_model(self, model_hash: str) -> ModelRecord:
        if model_hash not in self._models:
            raise UnknownSubject(f"model {model_hash} not registered")
        return self._models[model_hash]

    def get_instance(self, instance_hash: str) -> InstanceRecord:
        if instance_hash not in self._instances:
            raise UnknownSubject(f"instance {instance_hash} not registered")
        return self._instances[instance_hash]

    def get_states(self, instance_hash: str) -> list[StateRecord]:
        if instance_hash not in self._instances:
            raise UnknownSubject(f"instance {instance_hash} not registered")
        return list(self._states[instance_hash])

    def get_transitions(self, instance_hash: str) -> list[TransitionRecord]:
        if instance_hash not in self._instances:
            raise UnknownSubject(f"instance {instance_hash} not registered")
        return list(self._transitions[instance_hash])

    def get_owner(self, subject_hash: str) -> str:
        if subject_hash in self._models:
            return self._models[subject_hash].owner
        if subject_hash in self._instances:
            return self._instances[subject_hash].owner
        raise UnknownSubject(f"{subject_hash} is neither a model nor an instance")

    def delegates_of(self, subject_hash: str) -> tuple[str, ...]:
        self.get_owner(subject_hash)  # existence check
        return tuple(sorted(self._delegates.get(subject_hash, set())))

    def instance_hashes(self) -> list[str]:
        return sorted(self._instances)

    # -------------------------------------------------------------- snapshots

    def snapshot(self) -> dict:
        """Full registry state as a canonical plain dict."""
        return {
            "delegates": {k: sorted(v) for k, v in self._delegates.items() if v},
            "instances": {
                h: {
                    "descriptor": r.descriptor.to_dict(),
                    "latest_state": r.latest_state,
                    "model_hash": r.model_hash,
                    "owner": r.owner,
                    "status": r.status.value,
                    "transition_count": r.transition_count,
                }
                for h, r in self._instances.items()
            },
            "models": {
                h: {"descriptor": r.descriptor.to_dict(), "owner": r.owner}
                for h, r in self._models.items()
            },
            "states": {
                h: [{"seq": s.seq, "state_hash": s.state_hash} for s in records]
                for h, records in self._states.items()
            },
            "transitions": {
                h: [
                    {
                        "post_state": t.post_state,
                        "pre_state": t.pre_state,
                        "seq": t.seq,
                        "transition_id": t.transition_id,
                    }
                    for t in records
                ]
                for h, records in self._transitions.items()
            },
        }

    def snapshot_bytes(self) -> bytes:
        return canonical_bytes(self.snapshot())

    # -------------------------------------------------------------- internals

    def _active_instance(self, caller: str, instance_hash: str) -> InstanceRecord:
        if instance_hash not in self._instances:
            raise UnknownInstance(f"instance {instance_hash} not registered")
        record = self._instances[instance_hash]
        self._require_authorized(caller, instance_hash, record.owner)
        if record.status is not InstanceStatus.ACTIVE:
            raise InstanceTerminated(f"instance {instance_hash} is terminated")
        return record

    def _require_authorized(self, caller: str, subject_hash: str, owner: str) -> None:
        if caller == owner or caller in self._delegates.get(subject_hash, set()):
            return
        raise NotAuthorized(f"{caller} is neither owner nor delegate of {subject_hash}")
