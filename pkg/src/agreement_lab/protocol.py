"""Agreement protocols executed as deterministic refinements of the signal grid.

A protocol state is a block-id matrix: cells sharing an id form one rectangle
S_t x T_t (the set of signal pairs consistent with one transcript prefix).
A speaker's message depends only on their own signal and the current block,
so a round splits each block's row set (Alice) or column set (Bob).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .divergence import SQUARED, BregmanGenerator, bregman_array, jb_array
from .errors import EpsilonOutOfRange
from .structure import InformationStructure, Rectangle

ALICE, BOB = "alice", "bob"
KINDS = ("standard", "disc-quad", "disc-bregman", "fast")
TRIT = ("low", "medium", "high")
STANDARD_DECIMALS = 12
AGREE_TOL = 1e-12
# stopping-time objectives for disc-bregman: E[D_G(a || b)] or E[JB_G(a, b)]
T_END_OBJECTIVES = ("divergence", "jb")
TRACE_COLUMNS = ("round", "agreementQuad", "agreementJB", "monovariantDrop")


@dataclass(frozen=True, eq=False)
class ProtocolPartition:
    """Knowledge state after ``round`` messages.

    ``block_id[i, j]`` is the block containing signal pair (i, j), or -1 when
    the pair has been ruled out (zero mass, never realized).
    """

    block_id: np.ndarray
    round: int
    speaker_next: str

    @staticmethod
    def initial(s: InformationStructure) -> "ProtocolPartition":
        ids = np.zeros(s.shape, dtype=np.int64)
        ids.setflags(write=False)
        return ProtocolPartition(ids, 0, ALICE)

    @property
    def n_blocks(self) -> int:
        return int(self.block_id.max()) + 1 if np.any(self.block_id >= 0) else 0

    def blocks(self) -> list[Rectangle]:
        out = []
        for b in range(self.n_blocks):
            rows, cols = np.nonzero(self.block_id == b)
            out.append(Rectangle(rows.tolist(), cols.tolist()))
        return out

    def same_blocks(self, other: "ProtocolPartition") -> bool:
        return bool(np.array_equal(self.block_id, other.block_id))

    def refines(self, other: "ProtocolPartition") -> bool:
        """True when every block of ``self`` sits inside one block of ``other``."""
        if self.block_id.shape != other.block_id.shape:
            return False
        live = self.block_id >= 0
        if np.any(other.block_id[live] < 0):
            return False
        pairs = np.unique(np.stack([self.block_id[live], other.block_id[live]]), axis=1)
        return pairs.shape[1] == np.unique(self.block_id[live]).size


def _own_keys(part: ProtocolPartition, alice: bool) -> tuple[np.ndarray, int]:
    m, n = part.block_id.shape
    own = np.broadcast_to(np.arange(m)[:, None] if alice else np.arange(n)[None, :], (m, n))
    size = m if alice else n
    return part.block_id * size + own, size


def _grouped(keys: np.ndarray, live: np.ndarray, p: np.ndarray, pm: np.ndarray, length: int):
    den = np.bincount(keys[live], weights=p[live], minlength=length)
    num = np.bincount(keys[live], weights=pm[live], minlength=length)
    return num, den


def state_expectations(s: InformationStructure, part: ProtocolPartition):
    """Per-cell (a, b, c) = (mu_sigma,T_t, mu_S_t,tau, mu_S_t,T_t).

    Entries are NaN where undefined (ruled-out pairs, or a signal with zero
    mass inside its block).  Every positive-mass cell gets finite values.
    """
    p, mu = s.prob, s.mean
    pm = p * mu
    bid = part.block_id
    live = bid >= 0
    nb = max(part.n_blocks, 1)
    out = []
    for alice in (True, False):
        keys, size = _own_keys(part, alice)
        num, den = _grouped(np.where(live, keys, 0), live, p, pm, nb * size)
        k = np.where(live, keys, 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            out.append(np.where(live & (den[k] > 0), num[k] / den[k], np.nan))
    bk = np.where(live, bid, 0)
    num, den = _grouped(bk, live, p, pm, nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(live & (den[bk] > 0), num[bk] / den[bk], np.nan)
    return out[0], out[1], c


# A rule maps (speaker expectation, block expectation) on the speaking cells to
# integer labels plus a decoder from label to printable message.
Rule = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, Callable[[int], object]]]


def _speak(s: InformationStructure, part: ProtocolPartition, rule: Rule):
    alice = part.speaker_next == ALICE
    a, b, c = state_expectations(s, part)
    own = a if alice else b
    bid = part.block_id
    speaking = (bid >= 0) & ~np.isnan(own)
    labels, decode = rule(own[speaking], c[speaking])
    labels = np.asarray(labels, dtype=np.int64)
    width = int(labels.max()) + 1 if labels.size else 1
    combined = bid[speaking] * width + labels
    new = np.full(bid.shape, -1, dtype=np.int64)
    _, inv = np.unique(combined, return_inverse=True)
    new[speaking] = inv.ravel()
    new.setflags(write=False)

    # one message per (block, own signal); keyed on the pre-round block id
    keys, _ = _own_keys(part, alice)
    first = {}
    for key, blk, lab in zip(keys[speaking].tolist(), bid[speaking].tolist(), labels.tolist()):
        if key not in first:
            idx = key - blk * (bid.shape[0] if alice else bid.shape[1])
            first[key] = (blk, idx, decode(lab))
    messages = tuple(sorted(first.values(), key=lambda t: (t[0], t[1])))
    nxt = BOB if alice else ALICE
    return ProtocolPartition(new, part.round + 1, nxt), messages


def _simulate(s: InformationStructure, rule: Rule, max_rounds: int, stop: Callable[[ProtocolPartition], bool] | None = None):
    """Run up to ``max_rounds`` messages, stopping early at a two-round fixed point or when ``stop`` fires."""
    parts = [ProtocolPartition.initial(s)]
    msgs: list[tuple] = []
    if stop is not None and stop(parts[0]):
        return parts, msgs
    for _ in range(max_rounds):
        nxt, m = _speak(s, parts[-1], rule)
        parts.append(nxt)
        msgs.append(m)
        if stop is not None and stop(nxt):
            break
        if len(parts) >= 3 and nxt.same_blocks(parts[-2]) and parts[-2].same_blocks(parts[-3]):
            break
    return parts, msgs


@dataclass(frozen=True)
class RoundRecord:
    """Metrics of the state reached after ``round`` messages, plus the messages that produced it."""

    round: int
    speaker: str | None
    messages: tuple
    agreement_quad: float
    agreement_jb: float
    monovariant_drop: float


@dataclass(frozen=True)
class Transcript:
    """Outcome of one protocol run.

    ``trace`` covers states 0..t_end; ``rounds`` are the t_end message rounds
    (``trace[1:]``).  ``partitions[t]`` is the state after t messages for
    every simulated t, which may run past t_end up to the fixed point.
    """

    protocol: str
    epsilon: float
    generator: str
    t_end: int
    bits: int
    alphabet: int | None
    trace: tuple[RoundRecord, ...]
    partitions: tuple[ProtocolPartition, ...] = field(repr=False)
    simulated_rounds: int = 0
    infinite_messages: int = 0
    stopped_early: bool = False

    @property
    def rounds(self) -> tuple[RoundRecord, ...]:
        return self.trace[1:]

    @property
    def final(self) -> ProtocolPartition:
        return self.partition_at(self.t_end)

    def partition_at(self, t: int) -> ProtocolPartition:
        """State after t messages; beyond the simulated horizon the fixed point persists."""
        return self.partitions[min(t, len(self.partitions) - 1)]

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "epsilon": self.epsilon,
            "generator": self.generator,
            "tEnd": self.t_end,
            "bits": self.bits,
            "trace": [
                {
                    "round": r.round,
                    "agreementQuad": r.agreement_quad,
                    "agreementJB": r.agreement_jb,
                    "monovariantDrop": r.monovariant_drop,
                }
                for r in self.trace
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.trace:
            w.writerow([r.round, fmt(r.agreement_quad), fmt(r.agreement_jb), fmt(r.monovariant_drop)])
        return buf.getvalue()


def fmt(x: float) -> str:
    """Lossless float text: 17 significant digits, '.' decimal, 'inf' for the sentinel."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return "%.17g" % x


def _state_metrics(s: InformationStructure, part: ProtocolPartition, g: BregmanGenerator):
    a, b, _ = state_expectations(s, part)
    live = s.prob > 0
    w = s.prob[live]
    quad = float((w * (a[live] - b[live]) ** 2).sum()) / 4.0
    jb = float((w * jb_array(g, a[live], b[live])).sum())
    return quad, jb


def charlie_drop(s: InformationStructure, g: BregmanGenerator, before: ProtocolPartition, after: ProtocolPartition) -> float:
    """E[D_G(c_after || c_before)]: how much Charlie's expected error falls between two states."""
    _, _, c0 = state_expectations(s, before)
    _, _, c1 = state_expectations(s, after)
    live = s.prob > 0
    d = bregman_array(g, c1[live], c0[live])
    w = s.prob[live]
    if np.any(np.isinf(d) & (w > 0)):
        return math.inf
    return float((w * d).sum())


def _finish(s: InformationStructure, kind, eps, g, parts, msgs, t_end, bits, alphabet,
            infinite=0, stopped=False) -> Transcript:
    trace = []
    for t in range(t_end + 1):
        part = parts[min(t, len(parts) - 1)]
        quad, jb = _state_metrics(s, part, g)
        drop = 0.0 if t == 0 else charlie_drop(s, g, parts[min(t - 1, len(parts) - 1)], part)
        speaker = None if t == 0 else (ALICE if t % 2 == 1 else BOB)
        m = msgs[t - 1] if 0 < t <= len(msgs) else ()
        trace.append(RoundRecord(t, speaker, m, quad, jb, drop))
    return Transcript(kind, float(eps), g.name, t_end, bits, alphabet, tuple(trace), tuple(parts),
                      len(parts) - 1, infinite, stopped)


def trit_bits(t_end: int) -> int:
    return math.ceil(t_end * math.log2(3) - 1e-12) if t_end > 0 else 0


def fast_alphabet(epsilon: float) -> int:
    """Number of distinct rounded values k*eps, k = 0..round(1/eps)."""
    return int(math.floor(1.0 / epsilon + 0.5 + 1e-12)) + 1


def fast_bits(epsilon: float) -> int:
    return 2 * math.ceil(math.log2(fast_alphabet(epsilon)))


def t_end_bound(kind: str, epsilon: float, g: BregmanGenerator | None = None) -> int:
    if kind == "disc-quad":
        return math.ceil(1000.0 / epsilon - 1e-9)
    if kind == "disc-bregman":
        big_m = (g or SQUARED).range_m
        return math.ceil(24.0 * big_m * (4.0 * big_m + epsilon) / epsilon**2 - 1e-9)
    raise ValueError(f"no t_end bound for protocol kind {kind!r}")


def _check_eps(epsilon: float, lo_open: float, hi: float, hi_closed: bool, kind: str) -> None:
    ok = math.isfinite(epsilon) and epsilon > lo_open and (epsilon <= hi if hi_closed else epsilon < hi)
    if not ok:
        bracket = "]" if hi_closed else ")"
        raise EpsilonOutOfRange(f"{kind}: epsilon {epsilon!r} outside ({lo_open}, {hi}{bracket}")


def _quad_rule(epsilon: float) -> Rule:
    quarter = epsilon / 4.0

    def rule(own, c):
        lab = np.ones(own.shape, dtype=np.int64)
        lab[own < c - quarter] = 0
        lab[own > c + quarter] = 2
        return lab, lambda k: TRIT[k]

    return rule


def _bregman_rule(g: BregmanGenerator, epsilon: float, counter: list[int]) -> Rule:
    half = epsilon / 2.0

    def rule(own, c):
        d = bregman_array(g, own, c)
        counter[0] += int(np.isinf(d).sum())
        lab = np.ones(own.shape, dtype=np.int64)
        loud = ~(d < half)
        lab[loud & (own < c)] = 0
        lab[loud & (own > c)] = 2
        return lab, lambda k: TRIT[k]

    return rule


def _standard_rule(own, c):
    vals = np.round(own, STANDARD_DECIMALS)
    uniq, lab = np.unique(vals, return_inverse=True)
    return lab.ravel(), lambda k: float(uniq[k])


def grid_index(x, epsilon: float) -> np.ndarray:
    """Index k of the nearest multiple k*epsilon, halves rounded up (slack absorbs float error in x/epsilon)."""
    return np.floor(np.asarray(x, dtype=float) / epsilon + 0.5 + 1e-12).astype(np.int64)


def _fast_rule(epsilon: float) -> Rule:
    def rule(own, c):
        return grid_index(own, epsilon), lambda q: q * epsilon

    return rule


def _argmin_t(values: list[tuple[float, float]]) -> int:
    # first occurrence: ties go to the smallest t
    return min(range(len(values)), key=lambda k: values[k])


def _objective(s: InformationStructure, part: ProtocolPartition, kind: str, g: BregmanGenerator,
               objective: str = "divergence") -> tuple[float, float]:
    """Expected disagreement as (mass on infinite terms, finite part), compared lexicographically.

    With any finite candidate this is the plain argmin; when every round is
    +inf it still prefers the round with the least mass at infinity.
    """
    a, b, _ = state_expectations(s, part)
    live = s.prob > 0
    w = s.prob[live]
    if kind == "disc-quad":
        return 0.0, float((w * (a[live] - b[live]) ** 2).sum())
    if objective == "jb":
        return 0.0, float((w * jb_array(g, a[live], b[live])).sum())
    d = bregman_array(g, a[live], b[live])
    inf = np.isinf(d)
    return float(w[inf].sum()), float((w[~inf] * d[~inf]).sum())


def _discretized(s, kind, g, epsilon, objective="divergence"):
    if objective not in T_END_OBJECTIVES:
        raise ValueError(f"t_end objective must be one of {T_END_OBJECTIVES}, got {objective!r}")
    counter = [0]
    if kind == "disc-quad":
        _check_eps(epsilon, 0.0, 1.0, False, kind)
        rule, g = _quad_rule(epsilon), SQUARED
    else:
        _check_eps(epsilon, 0.0, math.inf, False, kind)
        rule = _bregman_rule(g, epsilon, counter)
    bound = t_end_bound(kind, epsilon, g)
    parts, msgs = _simulate(s, rule, bound)
    t_end = _argmin_t([_objective(s, p, kind, g, objective) for p in parts])
    return parts, msgs, t_end, g, counter[0]


def compute_t_end(s: InformationStructure, kind: str, g: BregmanGenerator | None, epsilon: float,
                  objective: str = "divergence") -> int:
    """The public stopping time: argmin of expected disagreement over t <= bound, smallest t on ties."""
    if kind not in ("disc-quad", "disc-bregman"):
        raise ValueError("compute_t_end supports disc-quad and disc-bregman")
    return _discretized(s, kind, g or SQUARED, epsilon, objective)[2]


def run_discretized_quadratic(s: InformationStructure, epsilon: float) -> Transcript:
    parts, msgs, t_end, g, _ = _discretized(s, "disc-quad", SQUARED, epsilon)
    return _finish(s, "disc-quad", epsilon, g, parts, msgs, t_end, trit_bits(t_end), 3)


def run_discretized_bregman(s: InformationStructure, g: BregmanGenerator, epsilon: float,
                           t_end_objective: str = "divergence") -> Transcript:
    """``t_end_objective='divergence'`` stops at the argmin of E[D_G(a || b)]; 'jb' at the argmin of E[JB_G(a, b)].

    The second always lands on an eps-agreeing round.  The first can miss
    one when D_G is infinite at every round (beliefs at 0 or 1 under KL).
    """
    parts, msgs, t_end, g, inf_count = _discretized(s, "disc-bregman", g, epsilon, t_end_objective)
    return _finish(s, "disc-bregman", epsilon, g, parts, msgs, t_end, trit_bits(t_end), 3, infinite=inf_count)


def run_standard(s: InformationStructure, max_rounds: int, g: BregmanGenerator = SQUARED) -> Transcript:
    """Exact expectation sharing; stops at ``max_rounds`` or once every realized pair agrees to 1e-12."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    live = s.prob > 0

    def agreed(part):
        a, b, _ = state_expectations(s, part)
        return bool(np.all(np.abs(a[live] - b[live]) <= AGREE_TOL))

    parts, msgs = _simulate(s, _standard_rule, max_rounds, stop=agreed)
    t_end = len(parts) - 1
    early = t_end < max_rounds
    return _finish(s, "standard", 0.0, g, parts, msgs, t_end, 64 * t_end, None, stopped=early)


def run_fast_rounding(s: InformationStructure, epsilon: float, g: BregmanGenerator = SQUARED) -> Transcript:
    """Two messages: each party announces its expectation rounded to the nearest multiple of epsilon."""
    _check_eps(epsilon, 0.0, 0.5, True, "fast")
    rule = _fast_rule(epsilon)
    parts = [ProtocolPartition.initial(s)]
    msgs = []
    for _ in range(2):
        nxt, m = _speak(s, parts[-1], rule)
        parts.append(nxt)
        msgs.append(m)
    return _finish(s, "fast", epsilon, g, parts, msgs, 2, fast_bits(epsilon), fast_alphabet(epsilon))


def run_protocol(s: InformationStructure, kind: str, epsilon: float, g: BregmanGenerator = SQUARED,
                 max_rounds: int = 1000, t_end_objective: str = "divergence") -> Transcript:
    if kind == "standard":
        return run_standard(s, max_rounds, g)
    if kind == "disc-quad":
        return run_discretized_quadratic(s, epsilon)
    if kind == "disc-bregman":
        return run_discretized_bregman(s, g, epsilon, t_end_objective)
    if kind == "fast":
        return run_fast_rounding(s, epsilon, g)
    raise ValueError(f"unknown protocol {kind!r}; expected one of {KINDS}")
