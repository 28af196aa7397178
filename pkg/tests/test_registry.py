"""Registry semantics: registration, ownership, delegation, events."""

import random

import pytest

from statetrail.errors import (
    DuplicateInstance,
    DuplicateModel,
    InstanceTerminated,
    InvalidDescriptor,
    NotAuthorized,
    StaleChain,
    UnknownInstance,
    UnknownModel,
    UnknownSubject,
)
from statetrail.hashing import content_hash
from statetrail.ledger import ZERO_CURSOR
from statetrail.registry import (
    Descriptor,
    InstanceStatus,
    Registry,
    call_register_transition,
    transition_id_for,
)

from conftest import ALICE, BOB, CARA, cycle_model, engine_for, make_world, raw_submit

H_MODEL = content_hash({"fixture": "model"})
H_INSTANCE = content_hash({"fixture": "instance"})


def h(label: str) -> str:
    return content_hash({"state": label})


def fresh_registry_with_model(owner=ALICE) -> Registry:
    registry = Registry()
    registry.register_model(owner, H_MODEL, Descriptor(id="m-1", name="fixture"))
    return registry


def with_instance(owner=ALICE, registry=None) -> Registry:
    registry = registry or fresh_registry_with_model(owner)
    registry.register_instance(owner, H_INSTANCE, H_MODEL,
                               Descriptor(id="i-1", name="fixture"), h("s0"))
    return registry


class TestRegisterModel:
    def test_fresh_model_owned_by_caller(self):
        registry = Registry()
        record = registry.register_model(ALICE, H_MODEL, Descriptor(id="m", name="m"))
        assert record.owner == ALICE
        assert registry.get_model(H_MODEL).model_hash == H_MODEL

    def test_duplicate_model(self):
        registry = fresh_registry_with_model()
        with pytest.raises(DuplicateModel):
            registry.register_model(BOB, H_MODEL, Descriptor(id="m2", name="m2"))

    def test_empty_descriptor_id(self):
        registry = Registry()
        with pytest.raises(InvalidDescriptor):
            registry.register_model(ALICE, H_MODEL, Descriptor(id="", name="x"))


class TestRegisterInstance:
    def test_owner_registers_instance(self):
        registry = with_instance()
        record = registry.get_instance(H_INSTANCE)
        assert record.status is InstanceStatus.ACTIVE
        assert record.latest_state == h("s0")
        assert record.transition_count == 0
        states = registry.get_states(H_INSTANCE)
        assert [s.seq for s in states] == [0]

    def test_non_owner_rejected(self):
        registry = fresh_registry_with_model()
        with pytest.raises(NotAuthorized):
            registry.register_instance(BOB, H_INSTANCE, H_MODEL,
                                       Descriptor(id="i", name="i"), h("s0"))

    def test_unknown_model(self):
        registry = Registry()
        with pytest.raises(UnknownModel):
            registry.register_instance(ALICE, H_INSTANCE, h("missing"),
                                       Descriptor(id="i", name="i"), h("s0"))

    def test_duplicate_instance(self):
        registry = with_instance()
        with pytest.raises(DuplicateInstance):
            registry.register_instance(ALICE, H_INSTANCE, H_MODEL,
                                       Descriptor(id="i2", name="i2"), h("s0"))


class TestRegisterTransition:
    def test_first_transition(self):
        registry = with_instance()
        record, event = registry.register_transition(ALICE, H_INSTANCE, h("s0"), h("s1"))
        assert record.seq == 1
        assert record.transition_id == transition_id_for(H_INSTANCE, h("s0"), h("s1"), 1)
        assert event.payload()["seq"] == 1
        assert registry.get_instance(H_INSTANCE).latest_state == h("s1")

    def test_stale_pre_state(self):
        registry = with_instance()
        for i in range(3):
            registry.register_transition(ALICE, H_INSTANCE, h(f"s{i}"), h(f"s{i + 1}"))
        with pytest.raises(StaleChain):
            registry.register_transition(ALICE, H_INSTANCE, h("s1"), h("s9"))

    def test_terminated_instance(self):
        registry = with_instance()
        registry.terminate_instance(ALICE, H_INSTANCE)
        with pytest.raises(InstanceTerminated):
            registry.register_transition(ALICE, H_INSTANCE, h("s0"), h("s1"))

    def test_unknown_instance(self):
        registry = fresh_registry_with_model()
        with pytest.raises(UnknownInstance):
            registry.register_transition(ALICE, h("ghost"), h("s0"), h("s1"))


class TestTerminate:
    def test_owner_terminates(self):
        registry = with_instance()
        record = registry.terminate_instance(ALICE, H_INSTANCE)
        assert record.status is InstanceStatus.TERMINATED

    def test_double_termination(self):
        registry = with_instance()
        registry.terminate_instance(ALICE, H_INSTANCE)
        with pytest.raises(InstanceTerminated):
            registry.terminate_instance(ALICE, H_INSTANCE)

    def test_delegate_terminates_after_delegation(self):
        registry = with_instance()
        registry.delegate_access(ALICE, H_INSTANCE, BOB)
        record = registry.terminate_instance(BOB, H_INSTANCE)
        assert record.status is InstanceStatus.TERMINATED


class TestOwnershipAndDelegation:
    def test_get_owner(self):
        registry = with_instance()
        assert registry.get_owner(H_MODEL) == ALICE
        assert registry.get_owner(H_INSTANCE) == ALICE
        with pytest.raises(UnknownSubject):
            registry.get_owner(h("nobody"))

    def test_delegate_may_not_redelegate(self):
        registry = with_instance()
        registry.delegate_access(ALICE, H_INSTANCE, BOB)
        with pytest.raises(NotAuthorized):
            registry.delegate_access(BOB, H_INSTANCE, CARA)

    def test_delegate_on_unknown_subject(self):
        registry = Registry()
        with pytest.raises(UnknownSubject):
            registry.delegate_access(ALICE, h("nothing"), BOB)

    def test_model_delegate_creates_instance(self):
        registry = fresh_registry_with_model()
        registry.delegate_access(ALICE, H_MODEL, BOB)
        record = registry.register_instance(BOB, H_INSTANCE, H_MODEL,
                                            Descriptor(id="i", name="i"), h("s0"))
        assert record.owner == BOB

    def test_instance_delegate_registers_transition(self):
        registry = with_instance()
        registry.delegate_access(ALICE, H_INSTANCE, BOB)
        record, event = registry.register_transition(BOB, H_INSTANCE, h("s0"), h("s1"))
        assert record.seq == 1 and event.emitter == BOB

    def test_delegation_does_not_transfer_ownership(self):
        registry = with_instance()
        registry.delegate_access(ALICE, H_INSTANCE, BOB)
        assert registry.get_owner(H_INSTANCE) == ALICE


class TestReads:
    def test_states_after_five_transitions(self):
        registry = with_instance()
        for i in range(5):
            registry.register_transition(ALICE, H_INSTANCE, h(f"s{i}"), h(f"s{i + 1}"))
        states = registry.get_states(H_INSTANCE)
        assert [s.seq for s in states] == [0, 1, 2, 3, 4, 5]
        assert states[-1].state_hash == h("s5")

    def test_transitions_on_fresh_instance_empty(self):
        registry = with_instance()
        assert registry.get_transitions(H_INSTANCE) == []

    def test_unknown_subject_reads(self):
        registry = Registry()
        for read in (registry.get_instance, registry.get_states,
                     registry.get_transitions, registry.get_model):
            with pytest.raises(UnknownSubject):
                read(h("ghost"))


AUTH_OPS = ("register_instance", "register_transition", "terminate_instance",
            "delegate_access")


def authorization_matrix():
    """Expected outcome for every (operation, caller-role) cell.

    ALICE owns the model and the instance; BOB is delegated on both
    subjects; CARA is a stranger. Only owners may delegate.
    """
    return {
        ("register_instance", ALICE): True,
        ("register_instance", BOB): True,
        ("register_instance", CARA): False,
        ("register_transition", ALICE): True,
        ("register_transition", BOB): True,
        ("register_transition", CARA): False,
        ("terminate_instance", ALICE): True,
        ("terminate_instance", BOB): True,
        ("terminate_instance", CARA): False,
        ("delegate_access", ALICE): True,
        ("delegate_access", BOB): False,
        ("delegate_access", CARA): False,
    }


def run_authorization_cell(op: str, caller: str) -> bool:
    """Fresh scenario per cell; returns True when the call succeeded."""
    registry = fresh_registry_with_model(ALICE)
    registry.delegate_access(ALICE, H_MODEL, BOB)
    registry.register_instance(ALICE, H_INSTANCE, H_MODEL,
                               Descriptor(id="i", name="i"), h("s0"))
    registry.delegate_access(ALICE, H_INSTANCE, BOB)
    try:
        if op == "register_instance":
            registry.register_instance(caller, h("fresh-instance"), H_MODEL,
                                       Descriptor(id="i2", name="i2"), h("s0"))
        elif op == "register_transition":
            registry.register_transition(caller, H_INSTANCE, h("s0"), h("s1"))
        elif op == "terminate_instance":
            registry.terminate_instance(caller, H_INSTANCE)
        elif op == "delegate_access":
            registry.delegate_access(caller, H_INSTANCE, CARA)
    except NotAuthorized:
        return False
    return True


@pytest.mark.parametrize("op", AUTH_OPS)
@pytest.mark.parametrize("caller", [ALICE, BOB, CARA])
def test_authorization_matrix(op, caller):
    assert run_authorization_cell(op, caller) == authorization_matrix()[(op, caller)]


class TestInvariants:
    def test_record_counts_and_linkage(self):
        rng = random.Random(3)
        registry = with_instance()
        latest = h("s0")
        for i in range(rng.randint(5, 15)):
            nxt = h(f"step{i}")
            registry.register_transition(ALICE, H_INSTANCE, latest, nxt)
            latest = nxt
        record = registry.get_instance(H_INSTANCE)
        states = registry.get_states(H_INSTANCE)
        transitions = registry.get_transitions(H_INSTANCE)
        assert len(states) == record.transition_count + 1
        assert [t.seq for t in transitions] == list(range(1, record.transition_count + 1))
        for t in transitions:
            assert t.pre_state == states[t.seq - 1].state_hash
            assert t.post_state == states[t.seq].state_hash

    def test_event_emitted_only_on_success(self, world):
        # one success, then a stale duplicate of the same call
        engine = engine_for(world, ALICE)
        from statetrail.model import model_hash
        from statetrail.registry import call_register_model
        model = cycle_model()
        engine.submit_call(call_register_model(model_hash(model), Descriptor("m", "m")))
        state = engine.instantiate(model, Descriptor(id="i", name="i"), 1)
        post, _ = engine.fire_and_register(state, model, "ab")
        stale = raw_submit(world.ledger, ALICE, call_register_transition(
            state.instance_hash, content_hash({"stale": True}), h("s9")))
        assert stale.status == "failed" and stale.error == "StaleChain"
        events = world.ledger.events_since(ZERO_CURSOR)
        assert sum(1 for e in events if e.kind == "TransitionEvent") == 1

    def test_replay_reproduces_registry_state(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        world = make_world(path=path)
        engine = engine_for(world, ALICE)
        from statetrail.model import model_hash
        from statetrail.registry import call_register_model
        model = cycle_model()
        engine.submit_call(call_register_model(model_hash(model), Descriptor("m", "m")))
        state = engine.instantiate(model, Descriptor(id="i", name="i"), 1)
        for tid in ("ab", "bc", "ca", "ab"):
            state, _ = engine.fire_and_register(state, model, tid)
        engine.terminate(state.instance_hash)

        from statetrail.ledger import Ledger
        replay_registry = Registry()
        Ledger.open(path, replay_registry)
        assert replay_registry.snapshot_bytes() == world.registry.snapshot_bytes()
