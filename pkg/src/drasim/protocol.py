"""The deferred revelation auction: phase engine, resolution rule, collateral ledger.

One auction is two rounds plus resolution. Buyers commit to bids and deposit
collateral, the auctioneer closes the commitment phase, buyers open their
commitments, and the auction resolves as a second-price sale with reserve over
the opened bids only. A bidder who fails to open forfeits its deposit to the
winning bidder; deposits of openers are refunded.

Resolution rule, given the set S of ids whose opening verifies:
  * the candidate is the lowest-index maximizer of revealed bids over S
    (ties are lexicographic, and a tie with the reserve goes to the
    auctioneer, i.e. no sale: the sale condition is strictly above reserve);
  * the price is max(reserve, second-highest revealed bid);
  * deposits of ids outside S transfer to the candidate, or burn if S is
    empty (burning, rather than the auctioneer keeping them, keeps withheld
    collateral a pure cost to a deviating auctioneer).

The engine is strictly sequential and deterministic given (config, seed).
Money conservation over every run is asserted, not assumed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .channels import (
    AUCTIONEER,
    BURN,
    Channel,
    CollateralNotice,
    CommitMsg,
    EndCommit,
    EndReveal,
    OutcomeNotice,
    ProtocolViolation,
    RevealMsg,
    Transcript,
)
from .commitments import DEFAULT_SECURITY_BITS, Opening, make_scheme
from .distributions import ValueDistribution, reserve_price
from .seeding import derive_seed

__all__ = [
    "AuctionConfig",
    "LedgerEntry",
    "Outcome",
    "resolve",
    "conservation_residual",
    "AuctionGame",
    "run_auction",
    "buyer_utility",
    "MONEY_TOL",
]

MONEY_TOL = 1e-9


@dataclass(frozen=True)
class AuctionConfig:
    """Static parameters of one auction instance."""

    n: int
    dist: ValueDistribution
    reserve: float
    collateral: float
    mode: str = "broadcast"
    scheme: str = "ideal"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one buyer, got n={self.n}")
        if self.mode not in ("broadcast", "centralized"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.collateral >= 0.0:
            raise ValueError(f"collateral must be >= 0, got {self.collateral}")
        recomputed = reserve_price(self.dist)
        if math.isinf(recomputed):
            raise ValueError(f"{self.dist.kind} has an infinite reserve; auction rejected")
        if abs(recomputed - self.reserve) > 1e-6:
            raise ValueError(
                f"reserve {self.reserve} inconsistent with distribution (expected {recomputed})"
            )


@dataclass(frozen=True)
class LedgerEntry:
    """Disposition of one deposit: back to the depositor, to a winner, or burned."""

    depositor: int
    recipient: int  # BURN (-1) when destroyed
    amount: float


@dataclass(frozen=True)
class Outcome:
    """Physical result of a run: who won, what was paid, where deposits went.

    auctioneer_net books a false winner's payment at zero (the auctioneer
    paying itself), counts real deposits captured by auctioneer-controlled
    winners as gains, and auctioneer-funded deposits lost to real winners or
    burned as costs.
    """

    winner: Optional[int]
    sale_price: float
    revealed: frozenset
    ledger: tuple
    auctioneer_net: float

    def to_json(self) -> dict:
        return {
            "winner": self.winner,
            "sale_price": self.sale_price,
            "revealed": sorted(self.revealed),
            "ledger": [[e.depositor, "burn" if e.recipient == BURN else e.recipient, e.amount]
                       for e in self.ledger],
            "auctioneer_net": self.auctioneer_net,
        }


def _build_outcome(depositors: Sequence[int], revealed: frozenset, refunded: frozenset,
                   winner: Optional[int], sale_price: float, transfer_to: Optional[int],
                   collateral_amount: float, false_ids: frozenset) -> Outcome:
    """Assemble ledger and auctioneer net; conservation is checked exactly.

    refunded may exceed revealed only by auctioneer-controlled ids (a deviating
    auctioneer quietly reclaiming its own deposits); every other non-revealed
    deposit goes to transfer_to, or burns when there is no one to receive it.
    """
    extra_refunds = refunded - revealed
    if extra_refunds - false_ids:
        raise ValueError("only auctioneer-controlled deposits may be refunded unrevealed")
    ledger = []
    for dep in sorted(depositors):
        if dep in refunded:
            ledger.append(LedgerEntry(dep, dep, collateral_amount))
        elif transfer_to is not None:
            ledger.append(LedgerEntry(dep, transfer_to, collateral_amount))
        else:
            ledger.append(LedgerEntry(dep, BURN, collateral_amount))

    def owner(agent: int) -> int:
        return AUCTIONEER if agent in false_ids else agent

    lost = captured = 0  # auctioneer-funded deposits lost / real deposits captured
    real_sale = winner is not None and owner(winner) != AUCTIONEER and sale_price > 0.0
    for entry in ledger:
        if entry.recipient == BURN:
            if owner(entry.depositor) == AUCTIONEER:
                lost += 1
        elif owner(entry.recipient) != owner(entry.depositor):
            if owner(entry.depositor) == AUCTIONEER:
                lost += 1
            elif owner(entry.recipient) == AUCTIONEER:
                captured += 1
    net = (sale_price if real_sale else 0.0) - collateral_amount * lost \
        + collateral_amount * captured
    return Outcome(
        winner=winner,
        sale_price=sale_price,
        revealed=revealed,
        ledger=tuple(ledger),
        auctioneer_net=net,
    )


def conservation_residual(outcome: Outcome, depositors=None,
                          collateral_amount: float = None) -> float:
    """Sum over agents of (payments + collateral in - collateral out) plus burned.

    Zero (to MONEY_TOL) for every well-formed outcome. When depositors and the
    collateral amount are supplied, the ledger is also checked structurally:
    every depositor disposed exactly once, at exactly the posted amount.
    """
    if depositors is not None:
        if sorted(e.depositor for e in outcome.ledger) != sorted(depositors):
            raise AssertionError("ledger does not dispose each deposit exactly once")
        if collateral_amount is not None and any(
                abs(e.amount - collateral_amount) > MONEY_TOL for e in outcome.ledger):
            raise AssertionError("ledger amount differs from the posted collateral")
    terms: dict[int, list] = {}
    burned: list[float] = []
    if outcome.winner is not None and outcome.sale_price > 0.0:
        terms.setdefault(outcome.winner, []).append(-outcome.sale_price)
        terms.setdefault(AUCTIONEER, []).append(outcome.sale_price)
    for entry in outcome.ledger:
        terms.setdefault(entry.depositor, []).append(-entry.amount)
        if entry.recipient == BURN:
            burned.append(entry.amount)
        else:
            terms.setdefault(entry.recipient, []).append(entry.amount)
    per_agent = [math.fsum(flows) for flows in terms.values()]
    return math.fsum(per_agent) + math.fsum(burned)


def resolve(scheme, commitments: dict, openings: dict, reserve: float,
            collateral_amount: float, false_ids: frozenset = frozenset()) -> Outcome:
    """Apply the resolution rule to per-id commitments and optional openings."""
    unknown = set(openings) - set(commitments)
    if unknown:
        raise ValueError(f"openings for ids without commitments: {sorted(unknown)}")
    revealed = set()
    bids = {}
    for bidder, opening in openings.items():
        if opening is None:
            continue
        if scheme.verify(commitments[bidder], opening):
            revealed.add(bidder)
            bids[bidder] = opening.message
    if revealed:
        best = max(bids.values())
        candidate = min(b for b in revealed if bids[b] == best)
        sale = bids[candidate] > reserve
        winner = candidate if sale else None
        price = max([reserve] + [bids[b] for b in revealed if b != candidate]) if sale else 0.0
        transfer_to = candidate
    else:
        winner, price, transfer_to, sale = None, 0.0, None, False
    return _build_outcome(
        depositors=list(commitments),
        revealed=frozenset(revealed),
        refunded=frozenset(revealed),
        winner=winner,
        sale_price=price if sale else 0.0,
        transfer_to=transfer_to,
        collateral_amount=collateral_amount,
        false_ids=false_ids,
    )


def buyer_utility(outcome: Outcome, buyer_id: int, value: float) -> float:
    """Quasilinear utility: value if winning, minus payment, plus net collateral."""
    util = 0.0
    if outcome.winner == buyer_id:
        util += value - outcome.sale_price
    for entry in outcome.ledger:
        if entry.depositor == buyer_id:
            util -= entry.amount
        if entry.recipient == buyer_id:
            util += entry.amount
    return util


class AuctionGame:
    """Execution context handed to the auctioneer strategy.

    Exposes the primitive moves (collect a commitment, forward, mint a false
    buyer, close phases, request reveals, announce, settle) so strategies can
    schedule them; the engine owns identity binding, deposits, opening custody
    and final accounting.
    """

    def __init__(self, config: AuctionConfig, buyers: Sequence, scheme=None):
        if len(buyers) != config.n:
            raise ValueError(f"expected {config.n} buyer strategies, got {len(buyers)}")
        self.config = config
        self.buyers = {i + 1: strat for i, strat in enumerate(buyers)}
        self.scheme = scheme if scheme is not None else make_scheme(config.scheme)
        self.channel = Channel(config.mode, config.n)
        self._buyer_rng = {
            i: random.Random(derive_seed(config.seed, "buyer", i)) for i in self.buyers
        }
        self.auctioneer_rng = random.Random(derive_seed(config.seed, "auctioneer"))
        self.commitments: dict[int, object] = {}
        self.openings: dict[int, Opening] = {}     # private custody, incl. false ids
        self.revealed: dict[int, Opening] = {}     # openings published on-channel
        self.false_ids: set[int] = set()
        self._next_false = config.n + 1
        self._outcome: Optional[Outcome] = None
        self._bytes = DEFAULT_SECURITY_BITS // 8

    @property
    def mode(self) -> str:
        return self.config.mode

    @property
    def buyer_ids(self) -> list[int]:
        return sorted(self.buyers)

    # -- commitment phase ----------------------------------------------------

    def buyer_commit(self, i: int) -> CommitMsg:
        """Buyer i commits to its strategy's bid and deposits collateral."""
        strat = self.buyers[i]
        randomness = self._buyer_rng[i].randbytes(self._bytes)
        opening = Opening(message=float(strat.bid()), randomness=randomness)
        commitment = self.scheme.commit(opening.message, opening.randomness)
        self.openings[i] = opening
        self.commitments[i] = commitment
        msg = CommitMsg(bidder=i, commitment=commitment)
        if self.mode == "broadcast":
            self.channel.broadcast(i, msg)
        else:
            self.channel.private_send(i, AUCTIONEER, msg)
        self.channel.notify(AUCTIONEER,
                            CollateralNotice(party=i, amount=self.config.collateral,
                                             kind="deposit"),
                            sender=i)
        return msg

    def mint_false_buyer(self, bid: float) -> int:
        """Allocate a fresh id controlled by the auctioneer, committed to `bid`."""
        fid = self._next_false
        self._next_false += 1
        self.channel.bind_id(fid, AUCTIONEER)
        randomness = self.auctioneer_rng.randbytes(self._bytes)
        opening = Opening(message=float(bid), randomness=randomness)
        self.openings[fid] = opening
        self.commitments[fid] = self.scheme.commit(opening.message, opening.randomness)
        self.false_ids.add(fid)
        return fid

    def publish_false_commit(self, fid: int, to: Optional[Sequence[int]] = None) -> None:
        msg = CommitMsg(bidder=fid, commitment=self.commitments[fid])
        if self.mode == "broadcast":
            self.channel.broadcast(fid, msg, physical=AUCTIONEER)
        else:
            for recipient in (to if to is not None else self.buyer_ids):
                self.channel.private_send(AUCTIONEER, recipient, msg)

    def forward(self, payload, to: int) -> None:
        """Centralized-mode forwarding of a buyer message by the auctioneer."""
        self.channel.private_send(AUCTIONEER, to, payload)

    def end_commit(self, to: Optional[Sequence[int]] = None) -> None:
        if self.mode == "broadcast":
            self.channel.broadcast(AUCTIONEER, EndCommit())
        else:
            for recipient in (to if to is not None else self.buyer_ids):
                self.channel.private_send(AUCTIONEER, recipient, EndCommit())

    # -- revelation phase ------------------------------------------------------

    def buyer_reveal(self, i: int) -> Optional[RevealMsg]:
        """Request buyer i's opening; None if its strategy withholds."""
        strat = self.buyers[i]
        if not strat.reveals():
            return None
        opening = self.openings[i]
        msg = RevealMsg(bidder=i, opening=opening)
        if self.mode == "broadcast":
            self.channel.broadcast(i, msg)
        else:
            self.channel.private_send(i, AUCTIONEER, msg)
        self.revealed[i] = opening
        return msg

    def reveal_false(self, fid: int, to: Optional[Sequence[int]] = None,
                     count: bool = True) -> RevealMsg:
        """Open a false bid on-channel; count=False keeps it out of resolution
        (a per-view story rather than a physically counted opening)."""
        opening = self.openings[fid]
        msg = RevealMsg(bidder=fid, opening=opening)
        if self.mode == "broadcast":
            self.channel.broadcast(fid, msg, physical=AUCTIONEER)
        else:
            for recipient in (to if to is not None else self.buyer_ids):
                self.channel.private_send(AUCTIONEER, recipient, msg)
        if count:
            self.revealed[fid] = opening
        return msg

    def end_reveal(self, to: Optional[Sequence[int]] = None) -> None:
        if self.mode == "broadcast":
            self.channel.broadcast(AUCTIONEER, EndReveal())
        else:
            for recipient in (to if to is not None else self.buyer_ids):
                self.channel.private_send(AUCTIONEER, recipient, EndReveal())

    # -- resolution ------------------------------------------------------------

    def finalize(self, notices: Optional[dict] = None) -> Outcome:
        """Resolve mechanically from the on-channel revealed set and settle."""
        openings = {bidder: self.revealed.get(bidder) for bidder in self.commitments}
        outcome = resolve(self.scheme, self.commitments, openings,
                          self.config.reserve, self.config.collateral,
                          frozenset(self.false_ids))
        self._announce_and_settle(outcome, notices)
        return outcome

    def finalize_custom(self, winner: Optional[int], sale_price: float,
                        counted: Sequence[int], forfeits: Optional[dict] = None,
                        notices: Optional[dict] = None) -> Outcome:
        """Resolve by explicit decision (deviation path): `counted` is the set of
        openings the allocation used, `forfeits` maps withheld depositors to the
        recipient of their deposit; auctioneer-controlled deposits not forfeited
        are quietly reclaimed."""
        forfeits = dict(forfeits or {})
        counted = frozenset(counted)
        refunded = set(counted)
        for dep in self.commitments:
            if dep not in counted and dep not in forfeits and dep in self.false_ids:
                refunded.add(dep)
        transfer_to = None
        for dep, recipient in forfeits.items():
            if transfer_to is None:
                transfer_to = recipient
            elif transfer_to != recipient:
                raise ValueError("all forfeits must go to a single recipient")
        outcome = _build_outcome(
            depositors=list(self.commitments),
            revealed=counted,
            refunded=frozenset(refunded),
            winner=winner,
            sale_price=sale_price,
            transfer_to=transfer_to,
            collateral_amount=self.config.collateral,
            false_ids=frozenset(self.false_ids),
        )
        self._announce_and_settle(outcome, notices)
        return outcome

    def _announce_and_settle(self, outcome: Outcome, notices: Optional[dict]) -> None:
        if self._outcome is not None:
            raise ProtocolViolation("run already finalized")
        self._outcome = outcome
        default = OutcomeNotice(winner=outcome.winner, price=outcome.sale_price)
        if self.mode == "broadcast":
            self.channel.broadcast(AUCTIONEER, default)
        else:
            for i in self.buyer_ids:
                notice = (notices or {}).get(i, default)
                self.channel.private_send(AUCTIONEER, i, notice)
        for entry in outcome.ledger:
            if entry.depositor in self.false_ids:
                continue
            if entry.recipient == entry.depositor:
                self.channel.notify(entry.depositor,
                                    CollateralNotice(party=entry.depositor,
                                                     amount=entry.amount, kind="refund"))
        for entry in outcome.ledger:
            if entry.recipient in (BURN, entry.depositor) or entry.recipient in self.false_ids:
                continue
            self.channel.notify(entry.recipient,
                                CollateralNotice(party=entry.recipient, amount=entry.amount,
                                                 kind="transfer", counterparty=entry.depositor))

    def transcript(self) -> Transcript:
        return Transcript(mode=self.mode, n_buyers=self.config.n,
                          events=tuple(self.channel.events), scheme=self.scheme)


def run_auction(config: AuctionConfig, buyer_strategies: Sequence, auctioneer_strategy):
    """Execute one auction under the given strategies.

    Returns (Outcome, Transcript). The outcome is the physical truth; in
    centralized mode per-buyer announcements inside the transcript may tell a
    different story.
    """
    game = AuctionGame(config, buyer_strategies)
    outcome = auctioneer_strategy.execute(game)
    if game._outcome is None or outcome is not game._outcome:
        raise ProtocolViolation("auctioneer strategy must finalize the run exactly once")
    return outcome, game.transcript()
