"""Matching engines over a sorted order book.

Rialto's matching never sees a rate: it works on the *position* of each order
in the book produced by the sorting MPC.  Because equal rates put buys before
sells, "the buy sits after the sell" is the same statement as "buy rate > sell
rate" (a buy is matched with a sell whose rate is lower than its own), so every
function here is positional.  The plaintext baselines
(price-time, bucket matching) build a book from visible values first.
"""

from __future__ import annotations

import bisect
import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "BUY",
    "SELL",
    "BookEntry",
    "SortedBook",
    "PlainOrder",
    "sort_book",
    "match_orders",
    "fair_swap",
    "maximal_fair_match",
    "price_time_match",
    "price_time_positional",
    "bucket_match",
    "BucketLabel",
    "bucket_value",
    "MatchSet",
    "is_feasible",
    "is_buyer_fair",
    "is_monotone",
]

BUY = "BUY"
SELL = "SELL"

MatchSet = list  # list[tuple[int, int]] of (buy id, sell id)


@dataclass(frozen=True)
class BookEntry:
    order_id: int
    side: str
    rate: int | None = None  # hidden in Rialto mode


class SortedBook:
    """Order ids in ascending rate order, each tagged with its side."""

    def __init__(self, entries: Iterable[BookEntry]):
        self.entries = list(entries)
        self.position = {e.order_id: i for i, e in enumerate(self.entries)}
        if len(self.position) != len(self.entries):
            raise ValueError("duplicate order id in book")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def buys(self) -> list[int]:
        return [e.order_id for e in self.entries if e.side == BUY]

    @property
    def sells(self) -> list[int]:
        return [e.order_id for e in self.entries if e.side == SELL]

    def side(self, order_id: int) -> str:
        return self.entries[self.position[order_id]].side

    @classmethod
    def from_ids(cls, sorted_ids: Sequence[int], sides: dict[int, str]) -> "SortedBook":
        return cls(BookEntry(oid, sides[oid]) for oid in sorted_ids)


@dataclass(frozen=True)
class PlainOrder:
    """An order with a visible rate, for the baseline engines."""

    order_id: int
    side: str
    rate: int
    round: int = 0
    timestamp: int = 0


def _plain_key(o: PlainOrder) -> tuple:
    return (o.rate, 0 if o.side == BUY else 1, o.round, o.order_id)


def sort_book(orders: Iterable[PlainOrder]) -> SortedBook:
    """Plaintext counterpart of the sorting MPC (same tie rule)."""
    return SortedBook(BookEntry(o.order_id, o.side, o.rate) for o in sorted(orders, key=_plain_key))


def match_orders(book: SortedBook) -> MatchSet:
    """Two-pointer matching over ascending buy and sell lists.

    A buy is compatible with a sell when it sits later in the book.  On a
    compatible pair both pointers advance, otherwise only the buy pointer.
    """
    pos = book.position
    buys, sells = book.buys, book.sells
    out = []
    bi = si = 0
    while bi < len(buys) and si < len(sells):
        b, s = buys[bi], sells[si]
        if pos[b] > pos[s]:
            out.append((b, s))
            si += 1
        bi += 1
    return out


def fair_swap(matches: MatchSet, book: SortedBook) -> MatchSet:
    """Swap in higher unmatched buyers, then pair buyers and sellers monotonically.

    While some unmatched buyer sits above a matched one, the highest unmatched
    buyer takes the seller of the highest matched buyer below it.  Each swap
    keeps the pair feasible and cardinality constant.  Finally buyers and sellers
    are re-paired in ascending order so that a higher buyer never gets a lower
    seller than a lower buyer.
    """
    pos = book.position
    pairs = {b: s for b, s in matches}
    matched = sorted(pairs, key=pos.__getitem__)  # ascending
    unmatched = [(-pos[b], b) for b in book.buys if b not in pairs]
    heapq.heapify(unmatched)
    mpos = [pos[b] for b in matched]
    while unmatched:
        negp, u = unmatched[0]
        k = bisect.bisect_left(mpos, -negp) - 1  # highest matched buyer below u
        if k < 0:
            break
        heapq.heappop(unmatched)
        low = matched.pop(k)
        mpos.pop(k)
        pairs[u] = pairs.pop(low)
        j = bisect.bisect_left(mpos, -negp)
        matched.insert(j, u)
        mpos.insert(j, -negp)
        heapq.heappush(unmatched, (-pos[low], low))
    sellers = sorted(pairs.values(), key=pos.__getitem__)
    return list(zip(matched, sellers))


def maximal_fair_match(book: SortedBook) -> MatchSet:
    return fair_swap(match_orders(book), book)


def price_time_match(orders: Iterable[PlainOrder]) -> MatchSet:
    """Classic sequential matching: best bid against best ask until they stop crossing.

    Buys are taken in decreasing rate, sells in increasing rate, earlier
    timestamps first on equal rates.  A pair needs the buy rate strictly
    above the sell rate, the same rule the positional engines use.
    """
    orders = list(orders)
    buys = sorted((o for o in orders if o.side == BUY), key=lambda o: (-o.rate, o.timestamp, o.order_id))
    sells = sorted((o for o in orders if o.side == SELL), key=lambda o: (o.rate, o.timestamp, o.order_id))
    out = []
    for b, s in zip(buys, sells):
        if b.rate <= s.rate:
            break
        out.append((b.order_id, s.order_id))
    return out


def price_time_positional(book: SortedBook) -> MatchSet:
    """Price-time matching when only positions are known.

    Buys are taken from the top of the book down, sells from the bottom up;
    equal rates fall back on the book's own tie order.
    """
    pos = book.position
    out = []
    for b, s in zip(reversed(book.buys), book.sells):
        if pos[b] < pos[s]:
            break
        out.append((b, s))
    return out


@dataclass(frozen=True)
class BucketLabel:
    order_id: int
    side: str
    floor: int  # bucket covers [floor, floor + width)
    width: int
    round: int = 0


def bucket_value(label: BucketLabel) -> int:
    """Buyers are matched at their bucket floor, sellers at the top of theirs.

    For integer rates the top of the half-open bucket ``[f, f + W)`` is
    ``f + W - 1``.  Two orders in one bucket therefore never match.
    """
    return label.floor if label.side == BUY else label.floor + label.width - 1


def bucket_match(labels: Iterable[BucketLabel], fair: bool = True) -> MatchSet:
    orders = [PlainOrder(l.order_id, l.side, bucket_value(l), l.round) for l in labels]
    book = sort_book(orders)
    m = match_orders(book)
    return fair_swap(m, book) if fair else m


# -- predicates used by tests and the harness ---------------------------------


def is_feasible(book: SortedBook, matches: MatchSet) -> bool:
    pos = book.position
    seen = set()
    for b, s in matches:
        if b in seen or s in seen or book.side(b) != BUY or book.side(s) != SELL:
            return False
        seen.update((b, s))
        if pos[b] < pos[s]:
            return False
    return True


def is_buyer_fair(book: SortedBook, matches: MatchSet) -> bool:
    """Matched buyers are exactly the top-|M| buyers by position."""
    matched = {b for b, _ in matches}
    buys = book.buys
    top = set(buys[len(buys) - len(matched) :]) if matched else set()
    return matched == top


def is_monotone(book: SortedBook, matches: MatchSet) -> bool:
    pos = book.position
    ordered = sorted(matches, key=lambda p: pos[p[0]])
    sp = [pos[s] for _, s in ordered]
    return all(a < b for a, b in zip(sp, sp[1:]))
