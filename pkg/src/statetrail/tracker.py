"""Client-side instance tracking and consistency verification.

A tracker follows the ledger's event log in total order and maintains one
protocol per instance: the creation entry, one entry per transition, and
the termination entry, each carrying ledger metadata. Entries are then
verified against the model: state contents must resolve from the content
store, hash-check, chain onto each other, and every transition must
correspond to a legal one-hop firing of the model.

Verification is three-valued. An entry whose contents cannot be resolved
is `unverified` (not contradicted, not proven); any failing check with
resolvable content makes it `inconsistent`; otherwise it is `verified`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .engine import parse_creation_record, parse_state_content
from .errors import (
    CorruptContent,
    MissingContent,
    OutOfOrderEvent,
    TrailError,
)
from .hashing import canonical_bytes
from .ledger import Cursor, EventRecord, Ledger, ZERO_CURSOR
from .model import StateMachineModel, parse_model_bytes
from .registry import (
    EVENT_INSTANCE_CREATED,
    EVENT_INSTANCE_TERMINATED,
    EVENT_TRANSITION,
    Registry,
)

KIND_CREATION = "creation"
KIND_TRANSITION = "transition"
KIND_TERMINATION = "termination"

STATUS_UNVERIFIED = "unverified"
STATUS_VERIFIED = "verified"
STATUS_INCONSISTENT = "inconsistent"

EXPORT_FIELDS = ("kind", "instance_hash", "model_hash", "seq", "pre_state", "post_state",
                 "height", "tx_index", "emitter", "timestamp", "status")


@dataclass
class ProtocolEntry:
    kind: str
    instance_hash: str
    model_hash: str
    seq: int
    pre_state: str | None = None
    post_state: str | None = None
    height: int | None = None
    tx_index: int | None = None
    emitter: str | None = None
    timestamp: int | None = None
    status: str = STATUS_UNVERIFIED

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in EXPORT_FIELDS}


@dataclass
class InstanceProtocol:
    instance_hash: str
    model_hash: str
    entries: list[ProtocolEntry] = field(default_factory=list)

    @property
    def next_seq(self) -> int:
        return self.entries[-1].seq + 1 if self.entries else 0

    @property
    def terminated(self) -> bool:
        return bool(self.entries) and self.entries[-1].kind == KIND_TERMINATION

    def entry_at(self, seq: int) -> ProtocolEntry | None:
        for entry in self.entries:
            if entry.seq == seq:
                return entry
        return None


def export_protocol(protocol: InstanceProtocol) -> bytes:
    """Deterministic JSON Lines export, one entry per line, keys sorted."""
    return b"".join(canonical_bytes(e.to_dict()) + b"\n" for e in protocol.entries)


def import_protocol(data: bytes) -> InstanceProtocol:
    entries = []
    for line in data.splitlines():
        raw = json.loads(line)
        entries.append(ProtocolEntry(**{name: raw[name] for name in EXPORT_FIELDS}))
    if not entries:
        raise TrailError("cannot import an empty protocol")
    return InstanceProtocol(
        instance_hash=entries[0].instance_hash,
        model_hash=entries[0].model_hash,
        entries=entries,
    )


class Tracker:
    """One party's view of every instance, rebuilt from ledger events."""

    def __init__(self, ledger: Ledger, registry: Registry, store):
        self.ledger = ledger
        self.registry = registry
        self.store = store
        self.cursor: Cursor = ZERO_CURSOR
        self.protocols: dict[str, InstanceProtocol] = {}

    def catch_up(self) -> list[ProtocolEntry]:
        """Apply every event past the cursor; returns the appended entries."""
        appended = []
        for event in self.ledger.events_since(self.cursor):
            entry = self.apply_event(event)
            self.cursor = event.position
            if entry is not None:
                appended.append(entry)
        return appended

    def apply_event(self, event: EventRecord) -> ProtocolEntry | None:
        """Append the protocol entry corresponding to one ledger event.

        Events must arrive in ledger total order; a sequence gap for a
        known instance signals cursor misuse and raises OutOfOrderEvent.
        Events for unseen instances are preceded by a registry backfill.
        """
        payload = event.payload
        if event.kind == EVENT_INSTANCE_CREATED:
            instance_hash = payload["instance_hash"]
            if instance_hash in self.protocols:
                raise OutOfOrderEvent(f"duplicate creation for {instance_hash}")
            protocol = InstanceProtocol(instance_hash, payload["model_hash"])
            self.protocols[instance_hash] = protocol
            entry = ProtocolEntry(
                kind=KIND_CREATION,
                instance_hash=instance_hash,
                model_hash=payload["model_hash"],
                seq=0,
                post_state=payload["initial_state"],
                height=event.height,
                tx_index=event.tx_index,
                emitter=payload["emitter"],
                timestamp=event.timestamp,
            )
            protocol.entries.append(entry)
            return entry
        if event.kind == EVENT_TRANSITION:
            protocol = self._known_protocol(payload["instance_hash"], payload["seq"])
            if payload["seq"] != protocol.next_seq:
                raise OutOfOrderEvent(
                    f"transition seq {payload['seq']} arrived, "
                    f"expected {protocol.next_seq}")
            entry = ProtocolEntry(
                kind=KIND_TRANSITION,
                instance_hash=protocol.instance_hash,
                model_hash=protocol.model_hash,
                seq=payload["seq"],
                pre_state=payload["pre_state"],
                post_state=payload["post_state"],
                height=event.height,
                tx_index=event.tx_index,
                emitter=payload["emitter"],
                timestamp=event.timestamp,
            )
            protocol.entries.append(entry)
            return entry
        if event.kind == EVENT_INSTANCE_TERMINATED:
            protocol = self._known_protocol(payload["instance_hash"], payload["seq"])
            if payload["seq"] != protocol.next_seq:
                raise OutOfOrderEvent(
                    f"termination seq {payload['seq']} arrived, "
                    f"expected {protocol.next_seq}")
            entry = ProtocolEntry(
                kind=KIND_TERMINATION,
                instance_hash=protocol.instance_hash,
                model_hash=protocol.model_hash,
                seq=payload["seq"],
                height=event.height,
                tx_index=event.tx_index,
                emitter=payload["emitter"],
                timestamp=event.timestamp,
            )
            protocol.entries.append(entry)
            return entry
        return None

    def verify_protocol(self, instance_hash: str) -> list[str]:
        """Verify every entry of one protocol; returns the statuses."""
        protocol = self.protocols[instance_hash]
        statuses = []
        for entry in protocol.entries:
            entry.status = verify_entry(protocol, entry, self.store)
            statuses.append(entry.status)
        return statuses

    def export(self, instance_hash: str) -> bytes:
        return export_protocol(self.protocols[instance_hash])

    def _known_protocol(self, instance_hash: str, upcoming_seq: int) -> InstanceProtocol:
        if instance_hash not in self.protocols:
            self._backfill(instance_hash, upcoming_seq)
        return self.protocols[instance_hash]

    def _backfill(self, instance_hash: str, upcoming_seq: int) -> None:
        """Reconstruct missed entries for an unseen instance from registry reads.

        Backfilled entries carry no block position; only the metadata the
        registry retains (creation timestamp, owner) is filled in.
        """
        record = self.registry.get_instance(instance_hash)
        states = self.registry.get_states(instance_hash)
        transitions = self.registry.get_transitions(instance_hash)
        protocol = InstanceProtocol(instance_hash, record.model_hash)
        protocol.entries.append(ProtocolEntry(
            kind=KIND_CREATION,
            instance_hash=instance_hash,
            model_hash=record.model_hash,
            seq=0,
            post_state=states[0].state_hash,
            emitter=record.owner,
            timestamp=record.descriptor.created_at,
        ))
        for transition in transitions:
            if transition.seq >= upcoming_seq:
                break
            protocol.entries.append(ProtocolEntry(
                kind=KIND_TRANSITION,
                instance_hash=instance_hash,
                model_hash=record.model_hash,
                seq=transition.seq,
                pre_state=transition.pre_state,
                post_state=transition.post_state,
            ))
        self.protocols[instance_hash] = protocol


def _resolve(store, key: str) -> tuple[bytes | None, str | None]:
    """Fetch content; second element is a failure status when unreadable."""
    try:
        return store.get(key), None
    except MissingContent:
        return None, STATUS_UNVERIFIED
    except CorruptContent:
        return None, STATUS_INCONSISTENT


def _worst(statuses: list[str]) -> str | None:
    if STATUS_INCONSISTENT in statuses:
        return STATUS_INCONSISTENT
    if STATUS_UNVERIFIED in statuses:
        return STATUS_UNVERIFIED
    return None


def verify_entry(protocol: InstanceProtocol, entry: ProtocolEntry, store) -> str:
    """Check one protocol entry against the model and the content store."""
    model_bytes, model_status = _resolve(store, protocol.model_hash)
    if model_status is not None:
        return model_status
    try:
        model = parse_model_bytes(model_bytes)
    except TrailError:
        return STATUS_INCONSISTENT

    if entry.kind == KIND_CREATION:
        return _verify_creation(protocol, entry, model, store)
    if entry.kind == KIND_TRANSITION:
        return _verify_transition(protocol, entry, model, store)
    if entry.kind == KIND_TERMINATION:
        return _verify_termination(protocol, entry)
    return STATUS_INCONSISTENT


def _verify_creation(protocol: InstanceProtocol, entry: ProtocolEntry,
                     model: StateMachineModel, store) -> str:
    record_bytes, record_status = _resolve(store, entry.instance_hash)
    state_bytes, state_status = _resolve(store, entry.post_state or "")
    failed = _worst([s for s in (record_status, state_status) if s is not None])
    if failed is not None:
        return failed
    try:
        record = parse_creation_record(record_bytes)
        state = parse_state_content(state_bytes)
    except CorruptContent:
        return STATUS_INCONSISTENT
    checks = (
        record["model_hash"] == protocol.model_hash
        and state.instance_hash == entry.instance_hash
        and state.current_state == model.initial
        and dict(state.variables) == dict(model.variables)
        and state.step == 0
    )
    return STATUS_VERIFIED if checks else STATUS_INCONSISTENT


def _verify_transition(protocol: InstanceProtocol, entry: ProtocolEntry,
                       model: StateMachineModel, store) -> str:
    pre_bytes, pre_status = _resolve(store, entry.pre_state or "")
    post_bytes, post_status = _resolve(store, entry.post_state or "")
    failed = _worst([s for s in (pre_status, post_status) if s is not None])
    if failed is not None:
        return failed
    try:
        pre = parse_state_content(pre_bytes)
        post = parse_state_content(post_bytes)
    except CorruptContent:
        return STATUS_INCONSISTENT

    previous = protocol.entry_at(entry.seq - 1)
    chained = previous is not None and previous.post_state == entry.pre_state
    well_formed = (
        pre.instance_hash == entry.instance_hash
        and post.instance_hash == entry.instance_hash
        and post.step == pre.step + 1
    )

    def legal_hop(t) -> bool:
        # adversarial states may carry alien variable names; any lookup
        # failure just means this transition does not explain the hop
        try:
            if t.source != pre.current_state or t.target != post.current_state:
                return False
            if t.guard is not None and not t.guard.holds(pre.variables):
                return False
            expected = (t.effect.apply(pre.variables)
                        if t.effect is not None else dict(pre.variables))
            return dict(post.variables) == expected
        except KeyError:
            return False

    legal = any(legal_hop(t) for t in model.transitions)
    return STATUS_VERIFIED if (chained and well_formed and legal) else STATUS_INCONSISTENT


def _verify_termination(protocol: InstanceProtocol, entry: ProtocolEntry) -> str:
    previous = protocol.entry_at(entry.seq - 1)
    is_last = protocol.entries and protocol.entries[-1] is entry
    return STATUS_VERIFIED if (previous is not None and is_last) else STATUS_INCONSISTENT


def converged(exports: list[bytes]) -> bool:
    """True when every party exported byte-identical protocol data."""
    return len(set(exports)) <= 1
