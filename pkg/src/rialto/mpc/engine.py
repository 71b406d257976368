"""Broker actors and the sealed reconstruction gate.

Brokers only ever do local linear arithmetic on their shares.  Anything that
needs a reconstruction (the comparisons behind sorting, the aggregate fee, the
top-K rates, the combined re-randomisers of the shuffle) goes through
:class:`ReconstructionGate`, which computes the phase output and appends
exactly one :class:`LeakageEntry` per output.  Every message between the
marketplace, the brokers and the gate is a framed transport message.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from ..group import Commitment, GroupParams, Transcript, commit
from ..sharing import lagrange_coefficients
from ..waksman import Gate, PermutationNetwork, apply_network, build_network, sample_uniform_network
from .transport import Frame, InProcessTransport, Tag

__all__ = [
    "LEAKAGE_TAGS",
    "LeakageEntry",
    "LeakageLog",
    "ShareBundle",
    "OrderMeta",
    "ValidationTranscript",
    "ProtocolAbort",
    "Broker",
    "ReconstructionGate",
    "MPCEngine",
    "validation_challenge",
    "sort_key",
]

LEAKAGE_TAGS = ("sorted-permutation", "aggregate-fees", "topK-rates", "shuffled-commitments")

COMPONENTS = ("rate", "blinding", "rho")

GATE = "gate"
MARKET = "market"


class ProtocolAbort(RuntimeError):
    def __init__(self, message: str, broker: int | None = None):
        super().__init__(message)
        self.broker = broker


@dataclass(frozen=True)
class LeakageEntry:
    round: int
    tag: str
    payload: dict


class LeakageLog:
    def __init__(self):
        self.entries: list[LeakageEntry] = []

    def append(self, round_no: int, tag: str, payload: dict) -> None:
        if tag not in LEAKAGE_TAGS:
            raise ValueError(f"unknown leakage tag {tag!r}")
        self.entries.append(LeakageEntry(round_no, tag, payload))

    def for_round(self, round_no: int) -> list[LeakageEntry]:
        return [e for e in self.entries if e.round == round_no]

    def tags(self, round_no: int | None = None) -> list[str]:
        src = self.entries if round_no is None else self.for_round(round_no)
        return [e.tag for e in src]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"round": e.round, "tag": e.tag, "payload": e.payload}, sort_keys=True) + "\n"
            for e in self.entries
        )


@dataclass
class ShareBundle:
    """One broker's view of one order."""

    order_id: int
    rate_share: int
    blinding_share: int
    rho_share: int
    account: int
    share_comm: Commitment  # commit(rate_share, blinding_share)
    rho_comm: Commitment  # commit(0, rho_share)

    def to_wire(self) -> dict:
        return {
            "id": self.order_id,
            "v": self.rate_share,
            "r": self.blinding_share,
            "rho": self.rho_share,
            "account": self.account,
            "c": self.share_comm.hex(),
            "crho": self.rho_comm.hex(),
        }

    @classmethod
    def from_wire(cls, params: GroupParams, d: dict) -> "ShareBundle":
        return cls(
            d["id"],
            d["v"],
            d["r"],
            d["rho"],
            d["account"],
            Commitment.from_bytes(params, bytes.fromhex(d["c"])),
            Commitment.from_bytes(params, bytes.fromhex(d["crho"])),
        )


@dataclass(frozen=True)
class OrderMeta:
    """Public per-order data the sort may use for tie-breaking."""

    order_id: int
    side: str  # "BUY" or "SELL"
    round: int


def sort_key(rate: int, meta: OrderMeta) -> tuple:
    # equal rates: buys before sells, so "buy after sell" <=> buy rate > sell rate
    return (rate, 0 if meta.side == "BUY" else 1, meta.round, meta.order_id)


@dataclass(frozen=True)
class ValidationTranscript:
    broker: int
    order_id: int
    component: str  # "rate" covers (rate, blinding); "rho" covers the re-randomiser
    d: bytes
    e: int
    a: int
    b: int


def validation_challenge(params: GroupParams, y: int, s: int) -> int:
    """Challenge computed from the broker's nonces, as the validation MPC defines it."""
    grp = params.group
    t = Transcript(params, b"rialto/input-validation")
    t.append(b"g", grp.encode(params.g)).append(b"h", grp.encode(params.h))
    t.append(b"y", grp.encode_scalar(y)).append(b"s", grp.encode_scalar(s))
    return t.challenge()


# ---------------------------------------------------------------------------
# broker


class Broker:
    """A broker actor.  Holds share bundles and answers MPC invocations.

    ``tamper`` maps ``(order_id, component)`` to an additive offset the broker
    silently applies to that share before using it as an MPC input.
    ``bad_network`` makes it submit a malformed permutation network.
    """

    def __init__(
        self,
        index: int,
        params: GroupParams,
        transport: InProcessTransport,
        lookup: Callable[[int], tuple[Sequence[Commitment], Sequence[Commitment]]],
        seed: int = 0,
    ):
        self.index = index
        self.name = f"broker{index}"
        self.params = params
        self.transport = transport
        self.lookup = lookup
        self.rng = random.Random(f"broker/{index}/{seed}")
        self.bundles: dict[int, ShareBundle] = {}
        self.rejected: list[int] = []
        self.tamper: dict[tuple[int, str], int] = {}
        self.bad_network = False
        self._nonces: dict[tuple[int, str], tuple[int, int]] = {}
        transport.register(self.name, self.handle)

    # -- inputs as the broker will actually use them ------------------------

    def share(self, order_id: int, component: str) -> int:
        b = self.bundles[order_id]
        base = {"rate": b.rate_share, "blinding": b.blinding_share, "rho": b.rho_share}[component]
        return (base + self.tamper.get((order_id, component), 0)) % self.params.q

    def forget(self, order_ids: Iterable[int]) -> None:
        for oid in order_ids:
            self.bundles.pop(oid, None)
            for comp in ("rate", "rho"):
                self._nonces.pop((oid, comp), None)

    # -- message handling ----------------------------------------------------

    def handle(self, frame: Frame) -> None:
        body = frame.body()
        if frame.tag == Tag.SHARE:
            self._on_share(body)
        elif frame.tag == Tag.INVOKE:
            self._on_invoke(body)
        elif frame.tag == Tag.OUTPUT:
            self._on_output(body)

    def _on_share(self, body: dict) -> None:
        bundle = ShareBundle.from_wire(self.params, body)
        share_comms, rho_comms = self.lookup(bundle.order_id)
        ok = (
            bundle.share_comm == share_comms[self.index]
            and bundle.rho_comm == rho_comms[self.index]
            and commit(self.params, bundle.rate_share, bundle.blinding_share) == bundle.share_comm
            and commit(self.params, 0, bundle.rho_share) == bundle.rho_comm
        )
        if ok:
            self.bundles[bundle.order_id] = bundle
        else:
            self.rejected.append(bundle.order_id)

    def _on_invoke(self, body: dict) -> None:
        phase, ids = body["phase"], body.get("ids", [])
        missing = [oid for oid in ids if oid not in self.bundles]
        out = {"session": body["session"], "phase": phase, "party": self.index, "missing": missing}
        if not missing:
            out["data"] = getattr(self, f"_inputs_{phase}")(body)
        self.transport.send(self.name, GATE, Tag.INPUT, out)

    def _inputs_validate(self, body):
        grp = self.params.group
        rows = []
        for oid in body["ids"]:
            for comp in body["components"]:
                y, s = self.rng.randrange(self.params.q), self.rng.randrange(self.params.q)
                self._nonces[(oid, comp)] = (y, s)
                d = commit(self.params, y, s)
                if comp == "rate":
                    v, r = self.share(oid, "rate"), self.share(oid, "blinding")
                else:
                    v, r = 0, self.share(oid, "rho")
                rows.append([oid, comp, v, r, y, s, grp.encode(d.element).hex()])
        return rows

    def _inputs_sort(self, body):
        return {str(oid): self.share(oid, "rate") for oid in body["ids"]}

    def _inputs_topk(self, body):
        return {str(oid): self.share(oid, "rate") for oid in body["ids"]}

    def _inputs_settle(self, body):
        q = self.params.q
        f = r = 0
        for buy, sell in body["pairs"]:
            f += self.share(buy, "rate") - self.share(sell, "rate")
            r += self.share(buy, "blinding") - self.share(sell, "blinding")
        return {"f": f % q, "r": r % q}

    def _inputs_shuffle(self, body):
        grp = self.params.group
        n = len(body["ids"])
        rerand = [grp.encode(grp.exp(self.params.h, self.share(oid, "rho"))).hex() for oid in body["ids"]]
        net = sample_uniform_network(n, self.rng)  # offline, private
        gates = [[g.a, g.b, g.bit] for g in net.gates]
        if self.bad_network and gates:
            gates[0] = [gates[0][0], gates[0][0], 1]
        return {"rerand": rerand, "gates": gates}

    def _on_output(self, body: dict) -> None:
        if body["phase"] != "validate" or "abort" in body:
            return
        # offline verification phase: H[i] &= g^a h^b == d c^e
        grp = self.params.group
        H = {}
        for party, rows in body["transcripts"].items():
            ok = True
            for oid, comp, d_hex, e, a, b in rows:
                share_comms, rho_comms = self.lookup(oid)
                c = (share_comms if comp == "rate" else rho_comms)[int(party)]
                d = Commitment(self.params, grp.decode(bytes.fromhex(d_hex)))
                ok = ok and commit(self.params, a, b) == d * c**e
            H[party] = int(ok)
        self.transport.send(self.name, MARKET, Tag.OUTPUT, {"session": body["session"], "phase": "H", "H": H})


# ---------------------------------------------------------------------------
# reconstruction gate


class ReconstructionGate:
    """The ideal functionality the brokers jointly evaluate.

    Collects every active broker's INPUT for a session, evaluates the phase,
    logs the permitted leakage and broadcasts the output.
    """

    def __init__(self, params: GroupParams, transport: InProcessTransport, log: LeakageLog):
        self.params = params
        self.transport = transport
        self.log = log
        self.round = 0
        self.scheme = "additive"
        self._sessions: dict[str, dict] = {}
        transport.register(GATE, self.handle)

    def handle(self, frame: Frame) -> None:
        body = frame.body()
        if frame.tag == Tag.INVOKE:
            self._sessions[body["session"]] = {"public": body, "inputs": {}}
        elif frame.tag == Tag.INPUT:
            sess = self._sessions[body["session"]]
            sess["inputs"][body["party"]] = body
            if len(sess["inputs"]) == len(sess["public"]["parties"]):
                self._finish(body["session"])

    def _finish(self, session: str) -> None:
        sess = self._sessions.pop(session)
        public, inputs = sess["public"], sess["inputs"]
        missing = {p: i["missing"] for p, i in inputs.items() if i["missing"]}
        if missing:
            out = {"session": session, "phase": public["phase"], "abort": sorted(missing)}
        else:
            out = getattr(self, f"_eval_{public['phase']}")(public, inputs)
            out.update(session=session, phase=public["phase"])
        for p in public["parties"]:
            self.transport.send(GATE, f"broker{p}", Tag.OUTPUT, out)
        self.transport.send(GATE, MARKET, Tag.OUTPUT, out)

    # -- helpers -------------------------------------------------------------

    def _recombine(self, parties: Sequence[int], values: Sequence[int]) -> int:
        q = self.params.q
        if self.scheme == "additive":
            return sum(values) % q
        lam = lagrange_coefficients([p + 1 for p in parties], q)
        return sum(l * v for l, v in zip(lam, values)) % q

    def _signed(self, parties, values) -> int:
        x = self._recombine(parties, values)
        return x - self.params.q if x > self.params.q // 2 else x

    # -- phases --------------------------------------------------------------

    def _eval_validate(self, public, inputs):
        grp = self.params.group
        q = self.params.q
        transcripts = {}
        for p, inp in inputs.items():
            rows = []
            for oid, comp, v, r, y, s, d_hex in inp["data"]:
                e = validation_challenge(self.params, y, s)
                rows.append([oid, comp, d_hex, e, (y + e * v) % q, (s + e * r) % q])
            transcripts[str(p)] = rows
        return {"transcripts": transcripts}

    def _eval_sort(self, public, inputs):
        parties = sorted(inputs)
        shares = {oid: [inputs[p]["data"][str(oid)] for p in parties] for oid in public["ids"]}
        meta = {m[0]: OrderMeta(*m) for m in public["meta"]}
        bound = 1 << public["n_bits"]
        q = self.params.q

        def in_domain(oid):
            s = shares[oid]
            shifted = [s[0] - bound] + s[1:] if self.scheme == "additive" else [(x - bound) % q for x in s]
            return self._signed(parties, s) >= 0 and self._signed(parties, shifted) < 0

        valid = [oid for oid in public["ids"] if in_domain(oid)]
        dropped = [oid for oid in public["ids"] if oid not in set(valid)]

        def less(a, b):
            diff = [(x - y) % q for x, y in zip(shares[a], shares[b])]
            d = self._signed(parties, diff)
            if d:
                return d < 0
            return sort_key(0, meta[a]) < sort_key(0, meta[b])

        order = _mergesort(valid, less)
        self.log.append(self.round, "sorted-permutation", {"order": order, "dropped": dropped})
        return {"order": order, "dropped": dropped}

    def _eval_settle(self, public, inputs):
        parties = sorted(inputs)
        f = self._signed(parties, [inputs[p]["data"]["f"] for p in parties])
        r = self._recombine(parties, [inputs[p]["data"]["r"] for p in parties])
        self.log.append(self.round, "aggregate-fees", {"fees": f, "blinding": r})
        return {"fees": f, "blinding": r}

    def _eval_topk(self, public, inputs):
        parties = sorted(inputs)
        rates = [self._signed(parties, [inputs[p]["data"][str(oid)] for p in parties]) for oid in public["ids"]]
        self.log.append(self.round, "topK-rates", {"ids": public["ids"], "rates": rates})
        return {"rates": rates}

    def _eval_shuffle(self, public, inputs):
        grp = self.params.group
        parties = sorted(inputs)
        n = len(public["ids"])
        if self.scheme == "additive":
            lam = [1] * len(parties)
        else:
            lam = lagrange_coefficients([p + 1 for p in parties], self.params.q)
        items = []
        for k, acc_hex in enumerate(public["accounts"]):
            elem = grp.decode(bytes.fromhex(acc_hex))
            for p, l in zip(parties, lam):
                z = grp.decode(bytes.fromhex(inputs[p]["data"]["rerand"][k]))
                elem = grp.op(elem, grp.exp(z, l))
            items.append(grp.encode(elem).hex())
        reference = [(g.a, g.b) for g in build_network(list(range(n))).gates]
        flagged = []
        for p in parties:  # composed in broker order
            gates = inputs[p]["data"]["gates"]
            if [(a, b) for a, b, _ in gates] != reference or any(bit not in (0, 1) for _, _, bit in gates):
                flagged.append(p)
                continue
            net = PermutationNetwork(n, tuple(_gate(*g) for g in gates))
            items = apply_network(net, items)
        self.log.append(self.round, "shuffled-commitments", {"commitments": items})
        return {"commitments": items, "flagged": flagged}


def _gate(a, b, bit):
    return Gate(a, b, bit)


def _mergesort(items: list, less) -> list:
    if len(items) <= 1:
        return list(items)
    mid = len(items) // 2
    left, right = _mergesort(items[:mid], less), _mergesort(items[mid:], less)
    out, i, j = [], 0, 0
    while i < len(left) and j < len(right):
        if less(right[j], left[i]):
            out.append(right[j])
            j += 1
        else:
            out.append(left[i])
            i += 1
    out.extend(left[i:])
    out.extend(right[j:])
    return out


# ---------------------------------------------------------------------------
# engine


class MPCEngine:
    """Owns the brokers, the gate and the market endpoint for one marketplace.

    ``scheme`` is ``"additive"`` (semi-honest brokers, every broker required)
    or ``"threshold"`` (k = M // 2 + 1 of M brokers suffice).
    """

    def __init__(
        self,
        params: GroupParams,
        n_brokers: int,
        lookup: Callable[[int], tuple[Sequence[Commitment], Sequence[Commitment]]],
        scheme: str = "additive",
        n_bits: int = 32,
        seed: int = 0,
        transport: InProcessTransport | None = None,
    ):
        if scheme not in ("additive", "threshold"):
            raise ValueError(scheme)
        self.params = params
        self.scheme = scheme
        self.n_bits = n_bits
        self.m = n_brokers
        self.k = n_brokers if scheme == "additive" else n_brokers // 2 + 1
        self.transport = transport or InProcessTransport()
        self.log = LeakageLog()
        self.gate = ReconstructionGate(params, self.transport, self.log)
        self.gate.scheme = scheme
        self.brokers = [Broker(i, params, self.transport, lookup, seed) for i in range(n_brokers)]
        self.active = set(range(n_brokers))
        self._results: dict[str, dict] = {}
        self._h_reports: dict[str, list[dict]] = {}
        self._counter = 0
        self.transport.register(MARKET, self._on_market)

    @property
    def round(self) -> int:
        return self.gate.round

    @round.setter
    def round(self, value: int) -> None:
        self.gate.round = value

    def _on_market(self, frame: Frame) -> None:
        body = frame.body()
        if body["phase"] == "H":
            self._h_reports.setdefault(body["session"], []).append(body["H"])
        else:
            self._results[body["session"]] = body

    def send_shares(self, trader: str, bundles: Sequence[ShareBundle]) -> None:
        """Trader-side delivery: bundle ``i`` goes to broker ``i``."""
        for broker, bundle in zip(self.brokers, bundles):
            self.transport.send(trader, broker.name, Tag.SHARE, bundle.to_wire())
        self.transport.run()

    def _invoke(self, phase: str, **public) -> dict:
        self._counter += 1
        session = f"{self.round}:{phase}:{self._counter}"
        parties = sorted(self.active)
        msg = {"session": session, "phase": phase, "parties": parties, **public}
        self.transport.send(MARKET, GATE, Tag.INVOKE, msg)
        for p in parties:
            self.transport.send(MARKET, f"broker{p}", Tag.INVOKE, msg)
        self.transport.run()
        out = self._results.pop(session)
        if "abort" in out:
            bad = out["abort"]
            if self.scheme == "threshold" and len(self.active) - len(bad) >= self.k:
                self.active -= set(bad)
                return self._invoke(phase, **public)
            raise ProtocolAbort(f"broker(s) {bad} hold no share for some order", broker=bad[0])
        return out

    # -- phases --------------------------------------------------------------

    def input_share_validation(self, order_ids: Sequence[int], components: Sequence[str] = ("rate",)) -> list[int]:
        """Distributed proof of opening for every share; returns the M-bit vector H.

        Dishonesty is an output, not an error: flagged brokers are dropped from
        the active set and the caller checks :attr:`has_quorum` before going on.
        """
        H = [1 if i in self.active else 0 for i in range(self.m)]
        if order_ids:
            out = self._invoke("validate", ids=list(order_ids), components=list(components))
            reports = self._h_reports.pop(out["session"], [])
            for p in sorted(self.active):
                votes = [int(r.get(str(p), 0)) for r in reports]
                H[p] = int(sum(votes) * 2 > len(votes))
        self.active = {i for i in range(self.m) if H[i]}
        return H

    @property
    def has_quorum(self) -> bool:
        return len(self.active) >= self.k

    def reset_active(self) -> None:
        self.active = set(range(self.m))

    def sorting_mpc(self, order_ids: Sequence[int], meta: dict[int, OrderMeta]) -> list[int]:
        """Ids sorted by ascending hidden rate (ties: buys first, then round, then id).

        Orders whose rate falls outside ``[0, 2**n_bits)`` are left out; see
        :attr:`last_dropped`.
        """
        self.last_dropped: list[int] = []
        if not order_ids:
            return []
        out = self._invoke(
            "sort",
            ids=list(order_ids),
            meta=[[oid, meta[oid].side, meta[oid].round] for oid in order_ids],
            n_bits=self.n_bits,
        )
        self.last_dropped = out["dropped"]
        return out["order"]

    def settlement_mpc(self, pairs: Sequence[tuple[int, int]]) -> tuple[int, int]:
        if not pairs:
            return 0, 0
        out = self._invoke("settle", ids=sorted({x for p in pairs for x in p}), pairs=[list(p) for p in pairs])
        return out["fees"], out["blinding"]

    def topk_reveal(self, sorted_ids: Sequence[int], pairs: Sequence[tuple[int, int]], k: int) -> list[int]:
        """Rates of the ``k`` highest matched buyers, descending."""
        if k < 0:
            raise ValueError("K must be non-negative")
        pos = {oid: i for i, oid in enumerate(sorted_ids)}
        buyers = sorted((b for b, _ in pairs), key=pos.__getitem__, reverse=True)[:k]
        if not buyers:
            return []
        self.last_topk_ids = buyers
        return self._invoke("topk", ids=buyers)["rates"]

    def shuffle_mpc(self, order_ids: Sequence[int], accounts: Sequence[Commitment]) -> list[Commitment]:
        """Re-randomise ``accounts[j]`` with the re-randomiser of ``order_ids[j]``, then permute."""
        self.last_flagged: list[int] = []
        if not order_ids:
            return []
        out = self._invoke("shuffle", ids=list(order_ids), accounts=[c.hex() for c in accounts])
        self.last_flagged = out["flagged"]
        return [Commitment.from_bytes(self.params, bytes.fromhex(x)) for x in out["commitments"]]

    def forget(self, order_ids: Iterable[int]) -> None:
        ids = list(order_ids)
        for b in self.brokers:
            b.forget(ids)
