"""Tracking: protocol reconstruction, verification, export, convergence."""

import pytest

from statetrail.engine import InstanceState, state_content, state_hash
from statetrail.errors import CorruptContent, MissingContent, OutOfOrderEvent
from statetrail.hashing import digest
from statetrail.ledger import EventRecord, ZERO_CURSOR
from statetrail.model import canonical_serialize, model_hash
from statetrail.registry import Descriptor, call_register_model, call_register_transition
from statetrail.store import ContentStore, DirectoryContentStore
from statetrail.tracker import (
    STATUS_INCONSISTENT,
    STATUS_UNVERIFIED,
    STATUS_VERIFIED,
    Tracker,
    export_protocol,
    import_protocol,
    verify_entry,
)

from conftest import ALICE, cycle_model, engine_for, make_world, raw_submit


def tracked_world(steps=("ab", "bc", "ca"), terminate=True):
    """Honest run over the cycle model plus a caught-up tracker."""
    world = make_world()
    engine = engine_for(world, ALICE)
    model = cycle_model()
    world.store.put(canonical_serialize(model))
    engine.submit_call(call_register_model(model_hash(model), Descriptor("m", "m")))
    state = engine.instantiate(model, Descriptor(id="i", name="i"), 1)
    for tid in steps:
        state, _ = engine.fire_and_register(state, model, tid)
    if terminate:
        engine.terminate(state.instance_hash)
    tracker = Tracker(world.ledger, world.registry, world.store)
    tracker.catch_up()
    return world, engine, model, state, tracker


class TestContentStores:
    @pytest.mark.parametrize("factory", [
        lambda tmp: ContentStore(),
        lambda tmp: DirectoryContentStore(tmp / "store"),
    ])
    def test_put_get_round_trip(self, tmp_path, factory):
        store = factory(tmp_path)
        key = store.put(b"payload")
        assert key == digest(b"payload")
        assert store.get(key) == b"payload"
        assert store.has(key)

    @pytest.mark.parametrize("factory", [
        lambda tmp: ContentStore(),
        lambda tmp: DirectoryContentStore(tmp / "store"),
    ])
    def test_missing_is_not_corrupt(self, tmp_path, factory):
        store = factory(tmp_path)
        with pytest.raises(MissingContent):
            store.get(digest(b"absent"))

    def test_mismatched_insert_rejected(self, tmp_path):
        for store in (ContentStore(), DirectoryContentStore(tmp_path / "s")):
            with pytest.raises(CorruptContent):
                store.put_named(digest(b"one thing"), b"another thing")

    def test_disk_tamper_detected_on_read(self, tmp_path):
        store = DirectoryContentStore(tmp_path / "store")
        key = store.put(b"precious bytes")
        path = tmp_path / "store" / key
        data = bytearray(path.read_bytes())
        data[3] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptContent):
            store.get(key)


class TestApplyEvents:
    def test_honest_run_builds_full_protocol(self):
        _, _, _, state, tracker = tracked_world()
        protocol = tracker.protocols[state.instance_hash]
        kinds = [e.kind for e in protocol.entries]
        assert kinds == ["creation", "transition", "transition", "transition",
                         "termination"]
        assert [e.seq for e in protocol.entries] == [0, 1, 2, 3, 4]
        assert protocol.entries[0].post_state is not None
        assert all(e.height is not None for e in protocol.entries)

    def test_transition_entries_carry_both_state_hashes(self):
        _, _, _, state, tracker = tracked_world()
        for entry in tracker.protocols[state.instance_hash].entries:
            if entry.kind == "transition":
                assert entry.pre_state and entry.post_state

    def test_seq_gap_raises_out_of_order(self):
        _, _, _, state, tracker = tracked_world(steps=("ab",), terminate=False)
        gap_event = EventRecord(
            kind="TransitionEvent",
            payload={"emitter": ALICE, "instance_hash": state.instance_hash,
                     "pre_state": digest(b"x"), "post_state": digest(b"y"), "seq": 3},
            height=99, tx_index=0, event_index=0, timestamp=99,
        )
        with pytest.raises(OutOfOrderEvent):
            tracker.apply_event(gap_event)

    def test_duplicate_creation_raises(self):
        world, _, _, state, tracker = tracked_world(steps=(), terminate=False)
        creation = [e for e in world.ledger.events_since(ZERO_CURSOR)
                    if e.kind == "InstanceCreated"][0]
        with pytest.raises(OutOfOrderEvent):
            tracker.apply_event(creation)

    def test_backfill_for_unseen_instance(self):
        world, engine, model, state, _ = tracked_world(steps=("ab", "bc"),
                                                       terminate=False)
        # late joiner: cursor starts after the first three events
        late = Tracker(world.ledger, world.registry, world.store)
        events = world.ledger.events_since(ZERO_CURSOR)
        late.cursor = events[-2].position
        late.catch_up()
        protocol = late.protocols[state.instance_hash]
        kinds = [e.kind for e in protocol.entries]
        assert kinds == ["creation", "transition", "transition"]
        # backfilled entries carry no block position
        assert protocol.entries[0].height is None
        assert protocol.entries[-1].height is not None


class TestVerification:
    def test_honest_entries_all_verify(self):
        _, _, _, state, tracker = tracked_world()
        statuses = tracker.verify_protocol(state.instance_hash)
        assert statuses == [STATUS_VERIFIED] * 5

    def test_illegal_hop_flagged_inconsistent(self):
        world, engine, model, state, _ = tracked_world(steps=("ab",),
                                                       terminate=False)
        # adversary registers a post state that skips a machine hop: p
        # only reaches q one hop at a time, never r from q with wrong vars
        bogus = InstanceState(state.instance_hash, "p", dict(state.variables),
                              state.step + 1)
        world.store.put(state_content(bogus))
        receipt = raw_submit(world.ledger, ALICE, call_register_transition(
            state.instance_hash, state_hash(state), state_hash(bogus)))
        assert receipt.ok
        tracker = Tracker(world.ledger, world.registry, world.store)
        tracker.catch_up()
        statuses = tracker.verify_protocol(state.instance_hash)
        assert statuses[-1] == STATUS_INCONSISTENT
        assert statuses[:-1] == [STATUS_VERIFIED] * (len(statuses) - 1)

    def test_withheld_content_is_unverified_not_inconsistent(self):
        world, _, _, state, tracker = tracked_world(steps=("ab",), terminate=False)
        protocol = tracker.protocols[state.instance_hash]
        victim = protocol.entries[1]
        world.store._entries.pop(victim.post_state)
        assert verify_entry(protocol, victim, world.store) == STATUS_UNVERIFIED

    def test_corrupt_content_is_inconsistent(self):
        world, _, _, state, tracker = tracked_world(steps=("ab",), terminate=False)
        protocol = tracker.protocols[state.instance_hash]
        victim = protocol.entries[1]
        world.store._entries[victim.post_state] = b"garbage"
        assert verify_entry(protocol, victim, world.store) == STATUS_INCONSISTENT

    def test_missing_model_content_leaves_entries_unverified(self):
        world, _, model, state, tracker = tracked_world(steps=("ab",),
                                                        terminate=False)
        world.store._entries.pop(model_hash(model))
        statuses = tracker.verify_protocol(state.instance_hash)
        assert set(statuses) == {STATUS_UNVERIFIED}

    def test_alien_variables_do_not_crash_verification(self):
        # a hop following an adversarial state with unknown variable names
        # must come out inconsistent, not blow up on guard evaluation
        world, engine, model, state, _ = tracked_world(steps=(), terminate=False)
        alien = InstanceState(state.instance_hash, "p", {"zz": 9}, 1)
        world.store.put(state_content(alien))
        raw_submit(world.ledger, ALICE, call_register_transition(
            state.instance_hash, state_hash(state), state_hash(alien)))
        after = InstanceState(state.instance_hash, "q", {"zz": 9}, 2)
        world.store.put(state_content(after))
        raw_submit(world.ledger, ALICE, call_register_transition(
            state.instance_hash, state_hash(alien), state_hash(after)))
        tracker = Tracker(world.ledger, world.registry, world.store)
        tracker.catch_up()
        statuses = tracker.verify_protocol(state.instance_hash)
        assert statuses == [STATUS_VERIFIED, STATUS_INCONSISTENT,
                            STATUS_INCONSISTENT]

    def test_wrong_creation_variables_inconsistent(self):
        world, engine, model, state, tracker = tracked_world(steps=(),
                                                             terminate=False)
        protocol = tracker.protocols[state.instance_hash]
        doctored = InstanceState(state.instance_hash, "p", {"n": 41}, 0)
        world.store._entries[state_hash(state)] = state_content(doctored)
        assert verify_entry(protocol, protocol.entries[0],
                            world.store) == STATUS_INCONSISTENT


class TestExport:
    def test_creation_only_protocol_is_one_line(self):
        _, _, _, state, tracker = tracked_world(steps=(), terminate=False)
        data = tracker.export(state.instance_hash)
        assert data.count(b"\n") == 1

    def test_line_count_matches_entries(self):
        _, _, _, state, tracker = tracked_world(steps=("ab", "bc", "ca") * 4)
        data = tracker.export(state.instance_hash)
        assert data.count(b"\n") == 12 + 2

    def test_round_trip_is_byte_identical(self):
        _, _, _, state, tracker = tracked_world()
        tracker.verify_protocol(state.instance_hash)
        data = tracker.export(state.instance_hash)
        imported = import_protocol(data)
        assert imported == tracker.protocols[state.instance_hash]
        assert export_protocol(imported) == data

    def test_export_fields_are_exactly_the_contract(self):
        import json
        _, _, _, state, tracker = tracked_world(steps=("ab",), terminate=False)
        for line in tracker.export(state.instance_hash).splitlines():
            fields = sorted(json.loads(line))
            assert fields == sorted([
                "kind", "instance_hash", "model_hash", "seq", "pre_state",
                "post_state", "height", "tx_index", "emitter", "timestamp",
                "status"])


class TestConvergence:
    def test_parties_with_different_read_rhythms_converge(self):
        world, engine, model, state, eager = tracked_world()
        # eager applied everything already; a second party reads event by
        # event, a third in one gulp
        stepwise = Tracker(world.ledger, world.registry, world.store)
        for event in world.ledger.events_since(ZERO_CURSOR):
            stepwise.apply_event(event)
            stepwise.cursor = event.position
        bulk = Tracker(world.ledger, world.registry, world.store)
        bulk.catch_up()
        exports = {t.export(state.instance_hash).hex()
                   for t in (eager, stepwise, bulk)}
        assert len(exports) == 1

    def test_every_chain_transition_lands_in_exactly_one_protocol(self):
        world, engine, model, state, tracker = tracked_world()
        second = engine.instantiate(model, Descriptor(id="i2", name="i2"), 2)
        second, _ = engine.fire_and_register(second, model, "ab")
        tracker.catch_up()
        chain_records = {
            (t.instance_hash, t.seq)
            for h in world.registry.instance_hashes()
            for t in world.registry.get_transitions(h)
        }
        protocol_records = [
            (e.instance_hash, e.seq)
            for p in tracker.protocols.values()
            for e in p.entries if e.kind == "transition"
        ]
        assert sorted(protocol_records) == sorted(chain_records)
        assert len(protocol_records) == len(set(protocol_records))
