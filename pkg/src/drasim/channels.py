"""Message transport for auction runs: broadcast or centralized private channels.

Broadcast delivery is atomic: one logical timestamp, every agent's view gains
the event. Centralized mode gives the auctioneer full scheduling power over
forwarding, which is exactly the deviation surface the centralized attacks
exploit (drop, delay, selectively forward).

Logical time is a single global counter; there are no wall clocks, so a run is
reproducible byte-for-byte from (config, seed). Identities are plain integers:
0 is the auctioneer, 1..n are real buyers, ids above n are minted for false
buyers. An id is bound to the physical party that first uses it, which stands
in for signatures; buyers cannot tell false ids from real ones by inspection.

A view is the subsequence of events an agent observes: everything addressed to
it, everything broadcast, and its own sent messages. Per-view phase legality
(no commits after that view's end-of-commitment, no reveals before it) is
enforced on delivery; a strategy that breaks the message grammar aborts the
run, which separates grammar violations from safe deviations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Union

from .commitments import Commitment, Opening

__all__ = [
    "AUCTIONEER",
    "BURN",
    "CommitMsg",
    "EndCommit",
    "RevealMsg",
    "EndReveal",
    "OutcomeNotice",
    "CollateralNotice",
    "Event",
    "View",
    "Channel",
    "Transcript",
    "ChannelError",
    "ModeError",
    "SpoofingError",
    "ProtocolViolation",
]

AUCTIONEER = 0
BURN = -1  # ledger destination for collateral destroyed when no one can receive it


class ChannelError(RuntimeError):
    pass


class ModeError(ChannelError):
    """Operation not available in the channel's communication mode."""


class SpoofingError(ChannelError):
    """A message used an id bound to a different physical sender."""


class ProtocolViolation(ChannelError):
    """A message broke the phase grammar in some receiving view."""


@dataclass(frozen=True)
class CommitMsg:
    bidder: int
    commitment: Commitment


@dataclass(frozen=True)
class EndCommit:
    pass


@dataclass(frozen=True)
class RevealMsg:
    bidder: int
    opening: Opening


@dataclass(frozen=True)
class EndReveal:
    pass


@dataclass(frozen=True)
class OutcomeNotice:
    """Recipient-specific allocation announcement: winner id (or None) and price."""

    winner: Optional[int]
    price: float


@dataclass(frozen=True)
class CollateralNotice:
    """Money movement visible to one party: kind in {deposit, refund, transfer}.

    counterparty is the forfeiting bidder for transfers to a winner.
    """

    party: int
    amount: float
    kind: str
    counterparty: Optional[int] = None


Payload = Union[CommitMsg, EndCommit, RevealMsg, EndReveal, OutcomeNotice, CollateralNotice]

_PHASE_COMMIT, _PHASE_REVEAL, _PHASE_DONE = 0, 1, 2


@dataclass(frozen=True)
class Event:
    t: int
    sender: int
    recipient: Optional[int]  # None means broadcast
    payload: Payload


@dataclass(frozen=True)
class View:
    """Ordered events one agent observed (received, broadcast, or own-sent)."""

    agent: int
    events: tuple


def _payload_json(p: Payload) -> dict:
    if isinstance(p, CommitMsg):
        return {"type": "commit", "bidder": p.bidder, "commitment": p.commitment.token_str()}
    if isinstance(p, EndCommit):
        return {"type": "end_commit"}
    if isinstance(p, RevealMsg):
        return {"type": "reveal", "bidder": p.bidder, "bid": p.opening.message,
                "randomness": p.opening.randomness.hex()}
    if isinstance(p, EndReveal):
        return {"type": "end_reveal"}
    if isinstance(p, OutcomeNotice):
        return {"type": "outcome", "winner": p.winner, "price": p.price}
    if isinstance(p, CollateralNotice):
        return {"type": "collateral", "party": p.party, "amount": p.amount,
                "kind": p.kind, "counterparty": p.counterparty}
    raise TypeError(f"unknown payload {type(p).__name__}")


class Channel:
    """One run's transport. Confined to a single simulation instance."""

    def __init__(self, mode: str, n_buyers: int):
        if mode not in ("broadcast", "centralized"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.n_buyers = n_buyers
        self.events: list[Event] = []
        self._clock = 0
        self._owners: dict[int, int] = {AUCTIONEER: AUCTIONEER}
        self._owners.update({i: i for i in range(1, n_buyers + 1)})
        self._phase: dict[int, int] = {i: _PHASE_COMMIT for i in range(1, n_buyers + 1)}

    # -- identity -----------------------------------------------------------

    def bind_id(self, agent_id: int, physical: int) -> None:
        """Bind a fresh id (false buyers) to its controlling party."""
        if agent_id in self._owners and self._owners[agent_id] != physical:
            raise SpoofingError(f"id {agent_id} already bound")
        self._owners[agent_id] = physical

    def _check_owner(self, sender: int, physical: int) -> None:
        owner = self._owners.get(sender)
        if owner is None:
            raise SpoofingError(f"id {sender} was never bound to a sender")
        if owner != physical:
            raise SpoofingError(f"id {sender} is bound to {owner}, not {physical}")

    # -- delivery -----------------------------------------------------------

    def _views_hit(self, event: Event) -> list[int]:
        if event.recipient is None:
            return list(range(1, self.n_buyers + 1))
        hit = []
        if 1 <= event.recipient <= self.n_buyers:
            hit.append(event.recipient)
        if 1 <= event.sender <= self.n_buyers and event.sender != event.recipient:
            hit.append(event.sender)
        return hit

    def _enforce_phase(self, buyer: int, payload: Payload) -> None:
        phase = self._phase[buyer]
        if isinstance(payload, CommitMsg):
            if phase != _PHASE_COMMIT:
                raise ProtocolViolation(f"commit after end-of-commitment in view {buyer}")
        elif isinstance(payload, EndCommit):
            if phase != _PHASE_COMMIT:
                raise ProtocolViolation(f"duplicate end-of-commitment in view {buyer}")
            self._phase[buyer] = _PHASE_REVEAL
        elif isinstance(payload, RevealMsg):
            if phase != _PHASE_REVEAL:
                raise ProtocolViolation(f"reveal outside revelation phase in view {buyer}")
        elif isinstance(payload, EndReveal):
            if phase != _PHASE_REVEAL:
                raise ProtocolViolation(f"end-of-revelation outside revelation in view {buyer}")
            self._phase[buyer] = _PHASE_DONE
        elif isinstance(payload, OutcomeNotice):
            if phase != _PHASE_DONE:
                raise ProtocolViolation(f"outcome announced before end-of-revelation in view {buyer}")
        elif isinstance(payload, CollateralNotice):
            want = _PHASE_COMMIT if payload.kind == "deposit" else _PHASE_DONE
            if phase != want:
                raise ProtocolViolation(f"collateral {payload.kind} out of phase in view {buyer}")

    def _append(self, sender: int, recipient: Optional[int], payload: Payload) -> Event:
        event = Event(t=self._clock, sender=sender, recipient=recipient, payload=payload)
        for buyer in self._views_hit(event):
            self._enforce_phase(buyer, payload)
        self._clock += 1
        self.events.append(event)
        return event

    def broadcast(self, sender: int, payload: Payload, physical: Optional[int] = None) -> Event:
        """Atomic delivery to every agent; broadcast mode only."""
        if self.mode != "broadcast":
            raise ModeError("broadcast requires a broadcast channel")
        self._check_owner(sender, physical if physical is not None else sender)
        return self._append(sender, None, payload)

    def private_send(self, sender: int, recipient: int, payload: Payload,
                     physical: Optional[int] = None) -> Event:
        """Point-to-point delivery; centralized mode only."""
        if self.mode != "centralized":
            raise ModeError("private_send requires a centralized channel")
        self._check_owner(sender, physical if physical is not None else sender)
        return self._append(sender, recipient, payload)

    def notify(self, recipient: int, payload: CollateralNotice, sender: int = AUCTIONEER) -> Event:
        """Targeted money notice in either mode (never part of the broadcast log)."""
        return self._append(sender, recipient, payload)

    # -- inspection ----------------------------------------------------------

    def view(self, agent: int) -> View:
        if agent == AUCTIONEER:
            selected = [e for e in self.events
                        if e.recipient in (None, AUCTIONEER) or e.sender == AUCTIONEER
                        or self._owners.get(e.sender) == AUCTIONEER]
        else:
            selected = [e for e in self.events
                        if e.recipient is None or e.recipient == agent or e.sender == agent]
        return View(agent=agent, events=tuple(selected))

    def broadcast_log(self) -> tuple:
        return tuple(e for e in self.events if e.recipient is None)


@dataclass(frozen=True)
class Transcript:
    """Full physical event log of one run, plus what a verifier needs from it."""

    mode: str
    n_buyers: int
    events: tuple
    scheme: object

    def view(self, agent: int) -> View:
        if agent == AUCTIONEER:
            raise ValueError("views are defined for buyers; the transcript is the auctioneer's view")
        selected = [e for e in self.events
                    if e.recipient is None or e.recipient == agent or e.sender == agent]
        return View(agent=agent, events=tuple(selected))

    def buyer_views(self) -> dict[int, View]:
        return {i: self.view(i) for i in range(1, self.n_buyers + 1)}

    def dump_jsonl(self) -> str:
        """One JSON object per event, stable field order, for golden files."""
        lines = []
        for e in self.events:
            obj = {
                "t": e.t,
                "sender": e.sender,
                "recipient": "*" if e.recipient is None else e.recipient,
                "payload": _payload_json(e.payload),
            }
            lines.append(json.dumps(obj, separators=(",", ":")))
        return "\n".join(lines) + "\n"
