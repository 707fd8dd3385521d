"""Agent registry, service directory, and message delivery semantics."""

import pytest
from hypothesis import given, settings, strategies as st

from mrsim.bus import AclMessage, AgentId, BusError, MessageBus, Performative
from mrsim.events import Scheduler
from mrsim.tracelog import TraceLog


def make_bus(latency=0):
    scheduler = Scheduler()
    bus = MessageBus(scheduler, TraceLog(), default_latency_ms=latency)
    return scheduler, bus


def drain(scheduler):
    while scheduler.step():
        pass


def request(sender, receiver, conv, payload=None):
    return AclMessage(
        Performative.REQUEST, sender, receiver, conv, {"kind": "request", **(payload or {})}
    )


def test_register_assigns_unique_ids():
    _, bus = make_bus()
    aid = bus.register_agent("RqM")
    assert aid == AgentId("RqM")
    r1, r2, r3 = (bus.register_agent(n) for n in ("R1", "R2", "R3"))
    assert len({r1.name, r2.name, r3.name}) == 3


def test_duplicate_name_rejected():
    _, bus = make_bus()
    bus.register_agent("RqM")
    with pytest.raises(BusError):
        bus.register_agent("RqM")


def test_publish_and_lookup_in_registration_order():
    _, bus = make_bus()
    r1 = bus.register_agent("R1")
    r3 = bus.register_agent("R3")
    bus.publish_service(r1, "capability:C2")
    bus.publish_service(r3, "capability:C2")
    assert bus.lookup_service("capability:C2") == [r1, r3]
    assert bus.lookup_service("capability:C9") == []


def test_duplicate_publication_rejected():
    _, bus = make_bus()
    r1 = bus.register_agent("R1")
    bus.publish_service(r1, "capability:C2")
    with pytest.raises(BusError):
        bus.publish_service(r1, "capability:C2")


def test_lookup_after_deregister_never_returns_departed_agent():
    _, bus = make_bus()
    r1 = bus.register_agent("R1")
    r3 = bus.register_agent("R3")
    bus.publish_service(r1, "capability:C2")
    bus.publish_service(r3, "capability:C2")
    bus.deregister_agent("R1")
    assert bus.lookup_service("capability:C2") == [r3]


def test_send_delivers_to_mailbox_and_handler():
    scheduler, bus = make_bus()
    got = []
    a = bus.register_agent("A")
    b = bus.register_agent("B", handler=got.append)
    receipt = bus.send(request(a, b, "c-1"))
    assert receipt.accepted
    drain(scheduler)
    assert len(bus.mailbox("B")) == 1
    assert got[0].conversation_id == "c-1"


def test_send_to_unknown_receiver_returns_undeliverable():
    _, bus = make_bus()
    a = bus.register_agent("A")
    receipt = bus.send(request(a, AgentId("ghost"), "c-1"))
    assert not receipt.accepted
    assert "unknown receiver" in receipt.reason


def test_send_to_deregistered_robot_is_undeliverable():
    _, bus = make_bus()
    a = bus.register_agent("A")
    r2 = bus.register_agent("R2")
    bus.deregister_agent("R2")
    receipt = bus.send(request(a, r2, "c-1"))
    assert not receipt.accepted


def test_content_kind_must_match_performative():
    _, bus = make_bus()
    a = bus.register_agent("A")
    b = bus.register_agent("B")
    bad = AclMessage(Performative.AGREE, a, b, "c-1", {"kind": "request"})
    with pytest.raises(BusError):
        bus.send(bad)


def test_delivered_messages_are_traced():
    scheduler, bus = make_bus()
    a = bus.register_agent("A")
    b = bus.register_agent("B")
    bus.send(request(a, b, "c-1"))
    drain(scheduler)
    msg_records = [r for r in bus.trace.records if r["kind"] == "msg"]
    assert len(msg_records) == 1
    rec = msg_records[0]
    assert (rec["sender"], rec["receiver"], rec["conversation_id"]) == ("A", "B", "c-1")
    assert rec["content_kind"] == "request"


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["A", "B"]), st.integers(0, 3)), max_size=20))
def test_fifo_per_ordered_pair_even_with_mixed_latencies(sends):
    scheduler, bus = make_bus()
    a = bus.register_agent("A")
    b = bus.register_agent("B")
    inbox = {"A": [], "B": []}
    bus._agents["A"].handler = lambda m: inbox["A"].append(m)
    bus._agents["B"].handler = lambda m: inbox["B"].append(m)
    sent = {("A", "B"): [], ("B", "A"): []}
    for i, (sender_name, latency) in enumerate(sends):
        sender, receiver = (a, b) if sender_name == "A" else (b, a)
        conv = f"c-{i}"
        sent[(sender.name, receiver.name)].append(conv)
        bus.send(request(sender, receiver, conv), latency_ms=latency)
    drain(scheduler)
    for receiver_name, pair in (("B", ("A", "B")), ("A", ("B", "A"))):
        got = [m.conversation_id for m in inbox[receiver_name]]
        assert got == sent[pair]


def test_no_loss_no_duplication():
    scheduler, bus = make_bus()
    a = bus.register_agent("A")
    b = bus.register_agent("B")
    for i in range(25):
        bus.send(request(a, b, f"c-{i}"), latency_ms=i % 4)
    drain(scheduler)
    convs = sorted(m.conversation_id for m in bus.mailbox("B"))
    assert convs == sorted(f"c-{i}" for i in range(25))
