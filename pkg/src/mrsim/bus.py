"""In-process agent runtime and message broker.

Gives every agent a unique identifier and a FIFO mailbox, keeps a service
directory, and delivers typed ACL-style messages through the simulation
event queue (zero latency by default, optional per-message latency). Every
delivered message is appended to the run trace.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from mrsim import events
from mrsim.events import Scheduler
from mrsim.tracelog import TraceLog

logger = logging.getLogger(__name__)


class Performative(str, Enum):
    REQUEST = "request"
    AGREE = "agree"
    REFUSE = "refuse"
    INFORM = "inform"
    FAILURE = "failure"


# Which content kinds each performative may carry. Kept small and explicit so
# protocol drift shows up as an immediate send-time error.
PROTOCOL: dict[Performative, frozenset[str]] = {
    Performative.REQUEST: frozenset(
        {"request", "plan_request", "verified_plan", "task_assignment", "registry_command"}
    ),
    Performative.AGREE: frozenset({"plan_accepted", "task_accepted", "registry_ack"}),
    Performative.REFUSE: frozenset({"request_rejected", "task_refused", "registry_refused"}),
    Performative.INFORM: frozenset({"request_outcome", "task_result", "plan_result"}),
    Performative.FAILURE: frozenset({"request_outcome", "task_result", "plan_result"}),
}


class BusError(Exception):
    pass


@dataclass(frozen=True)
class AgentId:
    name: str


@dataclass(frozen=True)
class AclMessage:
    performative: Performative
    sender: AgentId
    receiver: AgentId
    conversation_id: str
    content: dict

    @property
    def content_kind(self) -> str:
        return self.content.get("kind", "")


@dataclass(frozen=True)
class ServiceEntry:
    service_name: str
    provider: AgentId


@dataclass(frozen=True)
class DeliveryReceipt:
    accepted: bool
    reason: Optional[str] = None


@dataclass
class _AgentSlot:
    aid: AgentId
    handler: Optional[Callable[[AclMessage], None]]
    mailbox: deque = field(default_factory=deque)


class MessageBus:
    """Broker owned by the simulation loop; all sends happen on that loop."""

    def __init__(
        self,
        scheduler: Scheduler,
        trace: Optional[TraceLog] = None,
        default_latency_ms: int = 0,
    ):
        self.scheduler = scheduler
        self.trace = trace
        self.default_latency_ms = default_latency_ms
        self._agents: dict[str, _AgentSlot] = {}
        self._directory: list[ServiceEntry] = []
        self._last_pair_delivery: dict[tuple[str, str], int] = {}
        self.delivered_count = 0

    # -- agent management ---------------------------------------------------

    def register_agent(
        self, name: str, handler: Optional[Callable[[AclMessage], None]] = None
    ) -> AgentId:
        if not name:
            raise BusError("agent name must be non-empty")
        if name in self._agents:
            raise BusError(f"agent name {name!r} already registered")
        aid = AgentId(name)
        self._agents[name] = _AgentSlot(aid, handler)
        return aid

    def deregister_agent(self, name: str) -> None:
        if name not in self._agents:
            raise BusError(f"agent {name!r} is not registered")
        del self._agents[name]
        self._directory = [e for e in self._directory if e.provider.name != name]

    def is_registered(self, name: str) -> bool:
        return name in self._agents

    def mailbox(self, name: str) -> deque:
        return self._agents[name].mailbox

    # -- service directory --------------------------------------------------

    def publish_service(self, provider: AgentId, service_name: str) -> None:
        if provider.name not in self._agents:
            raise BusError(f"provider {provider.name!r} is not registered")
        entry = ServiceEntry(service_name, provider)
        if entry in self._directory:
            raise BusError(f"{provider.name!r} already provides {service_name!r}")
        self._directory.append(entry)

    def withdraw_service(self, provider: AgentId, service_name: str) -> None:
        entry = ServiceEntry(service_name, provider)
        if entry not in self._directory:
            raise BusError(f"{provider.name!r} does not provide {service_name!r}")
        self._directory.remove(entry)

    def lookup_service(self, service_name: str) -> list[AgentId]:
        return [e.provider for e in self._directory if e.service_name == service_name]

    # -- messaging ----------------------------------------------------------

    def send(self, message: AclMessage, latency_ms: Optional[int] = None) -> DeliveryReceipt:
        if message.sender.name not in self._agents:
            return DeliveryReceipt(False, f"unknown sender {message.sender.name!r}")
        if message.receiver.name not in self._agents:
            return DeliveryReceipt(False, f"unknown receiver {message.receiver.name!r}")
        if not message.conversation_id:
            raise BusError("conversation_id must be non-empty")
        allowed = PROTOCOL[message.performative]
        if message.content_kind not in allowed:
            raise BusError(
                f"content kind {message.content_kind!r} is not valid for "
                f"performative {message.performative.value!r}"
            )
        latency = self.default_latency_ms if latency_ms is None else latency_ms
        pair = (message.sender.name, message.receiver.name)
        t_deliver = max(self.scheduler.now + latency, self._last_pair_delivery.get(pair, 0))
        self._last_pair_delivery[pair] = t_deliver
        self.scheduler.schedule(
            t_deliver,
            events.MESSAGE,
            lambda: self._deliver(message),
            label=f"deliver {message.content_kind} {pair[0]}->{pair[1]}",
        )
        return DeliveryReceipt(True)

    def _deliver(self, message: AclMessage) -> None:
        slot = self._agents.get(message.receiver.name)
        if slot is None:
            logger.warning(
                "dropping undeliverable %s from %s to departed agent %s",
                message.content_kind,
                message.sender.name,
                message.receiver.name,
            )
            return
        slot.mailbox.append(message)
        self.delivered_count += 1
        if self.trace is not None:
            self.trace.write_msg(
                self.scheduler.now,
                message.performative.value,
                message.sender.name,
                message.receiver.name,
                message.conversation_id,
                message.content,
            )
        if slot.handler is not None:
            slot.handler(message)
