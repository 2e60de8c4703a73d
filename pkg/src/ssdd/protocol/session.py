"""Two-party detection sessions.

The querying side (Alice) holds the query documents; the responding side
(Bob) holds the target corpus.  After a Hello/HelloAck handshake (plus one
document-frequency exchange when the selection method needs corpus-wide
counts), each query runs filter-then-refine:

1. Alice masks the query's projection onto f chosen dimensions and sends it.
   Bob answers for every document with the masked product pieces and the
   projected squared norm.  Alice recovers each f-dimensional product and
   keeps only documents whose similarity upper bound reaches the tolerance.
2. Survivor ids go back with the full-width masked query; Bob answers with
   full product pieces; the recovered products are exact cosines (documents
   are unit vectors) and decide similarity.

BASE skips step 1 and treats every document as a survivor.  One fresh secret
mask per query and step; the same masked vector serves all of Bob's
documents for that query.  Survivor ids necessarily reveal to Bob which of
his documents passed the filter; LF and HF additionally reveal the chosen
dimension indexes of each query.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..corpus import Corpus
from ..errors import ProtocolError, RangeError, SessionError, SsddError
from ..masking import (
    OpCounter,
    SecretMask,
    SharedRandomMatrix,
    mask,
    recover,
    respond,
)
from ..selection import (
    SelectionMethod,
    aggregate_whole_vector,
    local_document_frequency,
    select_gf,
    select_hf,
    select_lf,
    select_rp,
)
from ..vectors import DocumentVector, FeatureIndexSet, project
from .messages import (
    Bye,
    DfVector,
    FilterQuery,
    FilterReply,
    FullQuery,
    FullReply,
    Hello,
    HelloAck,
    decode_message,
    encode_message,
)
from .transport import make_local_pair

__all__ = [
    "PROTOCOL_VERSION",
    "SessionConfig",
    "FilterEvaluation",
    "SimilarityDecision",
    "SessionMetrics",
    "DetectionReport",
    "evaluate_filter",
    "AliceSession",
    "BobResponder",
    "secure_df_exchange",
    "run_detection",
    "run_local_detection",
    "run_base_pair",
    "run_fs_pair",
]

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class SessionConfig:
    """Parameters both parties must agree on before any query runs."""

    n: int
    epsilon: float
    method: SelectionMethod = SelectionMethod.BASE
    f: int = 0
    matrix_seed: int = 0
    fs_matrix_seed: int = 1
    rp_seed: int = 2
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self):
        if self.n < 1:
            raise RangeError(f"n must be positive, got {self.n}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise RangeError(f"tolerance {self.epsilon} outside [0, 1]")
        if self.method.uses_filter and not 1 <= self.f <= self.n:
            raise RangeError(f"f={self.f} outside [1, {self.n}]")
        for name in ("matrix_seed", "fs_matrix_seed", "rp_seed"):
            value = getattr(self, name)
            if not 0 <= value < 2**64:
                raise RangeError(f"{name} must fit in 64 bits")
        if self.protocol_version != PROTOCOL_VERSION:
            raise RangeError(f"unsupported protocol version {self.protocol_version}")

    def hello(self) -> Hello:
        return Hello(
            version=self.protocol_version,
            n=self.n,
            f=self.f,
            method=int(self.method),
            epsilon=self.epsilon,
            matrix_seed=self.matrix_seed,
            fs_matrix_seed=self.fs_matrix_seed,
            rp_seed=self.rp_seed,
        )

    @classmethod
    def from_hello(cls, msg: Hello) -> "SessionConfig":
        try:
            method = SelectionMethod(msg.method)
        except ValueError:
            raise ProtocolError(f"unknown method code {msg.method}") from None
        try:
            return cls(
                n=msg.n,
                epsilon=msg.epsilon,
                method=method,
                f=msg.f,
                matrix_seed=msg.matrix_seed,
                fs_matrix_seed=msg.fs_matrix_seed,
                rp_seed=msg.rp_seed,
                protocol_version=msg.version,
            )
        except RangeError as exc:
            raise ProtocolError(f"bad handshake: {exc}") from exc


@dataclass(frozen=True)
class FilterEvaluation:
    """Outcome of the cheap step for one pair."""

    delta: float
    upper_bound: float
    passed: bool


def evaluate_filter(
    delta_fs: float, norm_u2: float, norm_v2: float, epsilon: float
) -> FilterEvaluation:
    """Bound the cosine from the f-dimensional pieces.

    The projected squared distance ``norm_u2 - 2*delta_fs + norm_v2`` never
    exceeds the full squared distance, so ``1 - distance/2`` bounds the true
    cosine from above for unit vectors; a pair whose bound misses the
    tolerance cannot be similar.  The distance is clamped at zero against
    rounding.
    """
    distance2 = norm_u2 - 2.0 * delta_fs + norm_v2
    if distance2 < 0.0:
        distance2 = 0.0
    upper = 1.0 - distance2 / 2.0
    return FilterEvaluation(
        delta=distance2, upper_bound=upper, passed=upper >= epsilon
    )


@dataclass(frozen=True)
class SimilarityDecision:
    """Verdict for one (query, target) pair.

    A filtered pair carries no cosine.  Pairs with a degenerate (all-zero)
    query are never similar and report cosine 0.
    """

    query_id: int
    target_id: int
    similar: bool
    cosine: float | None
    filtered: bool


@dataclass
class SessionMetrics:
    pairs_total: int = 0
    pairs_filtered: int = 0
    full_products: int = 0
    bytes_sent_alice: int = 0
    bytes_sent_bob: int = 0
    wall_time: float = 0.0
    scalar_mult_count: int = 0

    def merge(self, other: "SessionMetrics") -> None:
        self.pairs_total += other.pairs_total
        self.pairs_filtered += other.pairs_filtered
        self.full_products += other.full_products
        self.bytes_sent_alice += other.bytes_sent_alice
        self.bytes_sent_bob += other.bytes_sent_bob
        self.wall_time += other.wall_time
        self.scalar_mult_count += other.scalar_mult_count

    @property
    def filter_ratio(self) -> float:
        if self.pairs_total == 0:
            return 0.0
        return self.pairs_filtered / self.pairs_total


@dataclass
class DetectionReport:
    config: SessionConfig
    query_labels: list[int]
    target_count: int
    decisions: list[SimilarityDecision] = field(default_factory=list)
    metrics: SessionMetrics = field(default_factory=SessionMetrics)
    aborted: bool = False

    def similar_pairs(self) -> list[tuple[int, int]]:
        return [(d.query_id, d.target_id) for d in self.decisions if d.similar]


def secure_df_exchange(transport, local_counts: np.ndarray) -> np.ndarray:
    """Swap per-dimension document counts and return the elementwise sum.

    Each party only ever sees the other's aggregate counts, never which
    documents contain a term.
    """
    transport.send_frame(encode_message(DfVector(counts=local_counts)))
    msg = decode_message(transport.recv_frame())
    if not isinstance(msg, DfVector):
        raise ProtocolError(f"expected a df vector, got {type(msg).__name__}")
    return aggregate_whole_vector(local_counts, msg.counts)


def _mask_rng(config: SessionConfig, query_id: int, step: int) -> np.random.Generator:
    seq = np.random.SeedSequence(
        entropy=[config.matrix_seed, config.fs_matrix_seed, query_id, step]
    )
    return np.random.default_rng(seq)


def _sparse_from_feature(values: np.ndarray) -> DocumentVector:
    nz = np.flatnonzero(values)
    return DocumentVector(
        dims=int(values.size),
        indices=nz.astype(np.int64),
        weights=values[nz],
        degenerate=nz.size == 0,
    )


class BobResponder:
    """Target-corpus side of a session: answers masked queries.

    One instance serves one session.  ``metrics.scalar_mult_count`` tallies
    the multiplications spent in product responses.
    """

    def __init__(self, vectors: list[DocumentVector], dims: int | None = None):
        if vectors:
            dims = vectors[0].dims if dims is None else dims
            if any(v.dims != dims for v in vectors):
                raise RangeError("target documents disagree on dimensionality")
        elif dims is None:
            raise RangeError("an empty responder needs an explicit dims")
        self.vectors = vectors
        self.dims = dims
        self.config: SessionConfig | None = None
        self.metrics = SessionMetrics()
        self._matrix: SharedRandomMatrix | None = None
        self._fs_matrix: SharedRandomMatrix | None = None
        self._whole: np.ndarray | None = None
        self._session_set: FeatureIndexSet | None = None
        self._ops = OpCounter()

    @property
    def scalar_mult_count(self) -> int:
        return self._ops.mults

    def serve(self, transport) -> None:
        """Answer frames until Bye or transport loss."""
        try:
            while True:
                try:
                    frame = transport.recv_frame()
                except SessionError:
                    break
                msg = decode_message(frame)
                if isinstance(msg, Bye):
                    break
                reply = self.handle(msg)
                if reply is not None:
                    transport.send_frame(encode_message(reply))
        finally:
            self.metrics.scalar_mult_count = self._ops.mults
            transport.close()

    def handle(self, msg):
        if isinstance(msg, Hello):
            return self._on_hello(msg)
        if self.config is None:
            raise ProtocolError(
                f"{type(msg).__name__} before handshake"
            )
        if isinstance(msg, DfVector):
            return self._on_df(msg)
        if isinstance(msg, FilterQuery):
            return self._on_filter_query(msg)
        if isinstance(msg, FullQuery):
            return self._on_full_query(msg)
        raise ProtocolError(f"unexpected {type(msg).__name__}")

    def _on_hello(self, msg: Hello) -> HelloAck:
        if self.config is not None:
            raise ProtocolError("duplicate handshake")
        config = SessionConfig.from_hello(msg)
        if config.n != self.dims:
            raise ProtocolError(
                f"query side expects {config.n} dims, corpus has {self.dims}"
            )
        self.config = config
        self._matrix = SharedRandomMatrix(config.matrix_seed, config.n)
        if config.method.uses_filter:
            self._fs_matrix = SharedRandomMatrix(config.fs_matrix_seed, config.f)
            if config.method is SelectionMethod.RP:
                self._session_set = select_rp(config.rp_seed, config.n, config.f)
        return HelloAck(bob_doc_count=len(self.vectors))

    def _on_df(self, msg: DfVector) -> DfVector:
        config = self.config
        if not config.method.needs_whole_vector:
            raise ProtocolError(f"df exchange unexpected for {config.method.name}")
        if len(msg.counts) != self.dims:
            raise ProtocolError("df vector has the wrong width")
        mine = local_document_frequency(Corpus(self.dims, None, self.vectors))
        self._whole = aggregate_whole_vector(mine, msg.counts)
        if config.method is SelectionMethod.GF:
            self._session_set = select_gf(self._whole, config.f)
        return DfVector(counts=mine)

    def _query_set(self, msg: FilterQuery) -> FeatureIndexSet:
        config = self.config
        if msg.indexes.size:
            if msg.indexes.size != config.f:
                raise ProtocolError(
                    f"query carries {msg.indexes.size} indexes, expected {config.f}"
                )
            try:
                return FeatureIndexSet(dims=config.n, indexes=msg.indexes)
            except RangeError as exc:
                raise ProtocolError(f"bad index set: {exc}") from exc
        if self._session_set is not None:
            return self._session_set
        raise ProtocolError(
            f"{config.method.name} needs explicit indexes or a prior df exchange"
        )

    def _on_filter_query(self, msg: FilterQuery) -> FilterReply:
        config = self.config
        if not config.method.uses_filter:
            raise ProtocolError("filter step under BASE")
        if msg.z.size != config.f:
            raise ProtocolError(f"masked width {msg.z.size}, expected {config.f}")
        index_set = self._query_set(msg)
        masked = _MaskedView(msg.z)
        m = len(self.vectors)
        s = np.empty(m)
        norm_v2 = np.empty(m)
        t = np.empty((m, self._fs_matrix.cols))
        for i, vec in enumerate(self.vectors):
            projected = _sparse_from_feature(project(vec, index_set).values)
            reply = respond(
                masked, projected, self._fs_matrix, include_norm=True, ops=self._ops
            )
            s[i] = reply.s
            norm_v2[i] = reply.norm_v2
            t[i] = reply.t
        return FilterReply(query_id=msg.query_id, s=s, norm_v2=norm_v2, t=t)

    def _on_full_query(self, msg: FullQuery) -> FullReply:
        config = self.config
        if msg.z.size != config.n:
            raise ProtocolError(f"masked width {msg.z.size}, expected {config.n}")
        ids = msg.survivor_ids
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.vectors)):
            raise ProtocolError("survivor id outside the corpus")
        masked = _MaskedView(msg.z)
        k = ids.size
        s = np.empty(k)
        t = np.empty((k, self._matrix.cols))
        for i, doc_id in enumerate(ids):
            reply = respond(
                masked, self.vectors[int(doc_id)], self._matrix, ops=self._ops
            )
            s[i] = reply.s
            t[i] = reply.t
        return FullReply(query_id=msg.query_id, doc_ids=ids.copy(), s=s, t=t)


class _MaskedView:
    """Adapter giving respond() the masked-vector shape without a copy."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        self.values = values


class AliceSession:
    """Query side of a session; drives the transport and scores pairs."""

    def __init__(
        self,
        config: SessionConfig,
        queries: list[DocumentVector],
        transport,
        query_labels: list[int] | None = None,
        index_override: FeatureIndexSet | None = None,
    ):
        if any(q.dims != config.n for q in queries):
            raise RangeError("query documents disagree with the session dims")
        self.config = config
        self.queries = queries
        self.transport = transport
        self.query_labels = list(range(len(queries))) if query_labels is None else query_labels
        self.index_override = index_override
        self.metrics = SessionMetrics()
        self.decisions: list[SimilarityDecision] = []
        self.target_count = 0
        self._matrix = SharedRandomMatrix(config.matrix_seed, config.n)
        self._fs_matrix = (
            SharedRandomMatrix(config.fs_matrix_seed, config.f)
            if config.method.uses_filter
            else None
        )
        self._whole: np.ndarray | None = None
        self._session_set: FeatureIndexSet | None = None
        if config.method.per_query:
            logger.warning(
                "method %s sends each query's chosen dimension indexes to the "
                "responder; which terms dominate a query is disclosed",
                config.method.name,
            )

    def _send(self, msg) -> None:
        frame = encode_message(msg)
        self.metrics.bytes_sent_alice += len(frame)
        self.transport.send_frame(frame)

    def _recv(self):
        frame = self.transport.recv_frame()
        self.metrics.bytes_sent_bob += len(frame)
        return decode_message(frame)

    def handshake(self) -> None:
        self._send(self.config.hello())
        ack = self._recv()
        if not isinstance(ack, HelloAck):
            raise ProtocolError(f"expected HelloAck, got {type(ack).__name__}")
        self.target_count = ack.bob_doc_count
        method = self.config.method
        if method.needs_whole_vector:
            mine = local_document_frequency(
                Corpus(self.config.n, None, list(self.queries))
            )
            self._send(DfVector(counts=mine))
            theirs = self._recv()
            if not isinstance(theirs, DfVector):
                raise ProtocolError(f"expected DfVector, got {type(theirs).__name__}")
            self._whole = aggregate_whole_vector(mine, theirs.counts)
        if method is SelectionMethod.RP:
            self._session_set = select_rp(
                self.config.rp_seed, self.config.n, self.config.f
            )
        elif method is SelectionMethod.GF:
            self._session_set = select_gf(self._whole, self.config.f)

    def _query_index_set(self, query: DocumentVector) -> tuple[FeatureIndexSet, bool]:
        """The index set for this query and whether it travels on the wire."""
        if self.index_override is not None:
            return self.index_override, True
        method = self.config.method
        if method is SelectionMethod.LF:
            return select_lf(query.to_dense(), self.config.f), True
        if method is SelectionMethod.HF:
            return select_hf(query.to_dense(), self._whole, self.config.f), True
        return self._session_set, False

    def _filter_step(
        self, query_id: int, query: DocumentVector
    ) -> tuple[list[int], dict[int, FilterEvaluation]]:
        index_set, explicit = self._query_index_set(query)
        u_fs = project(query, index_set)
        r = SecretMask.draw(self._fs_matrix.cols, _mask_rng(self.config, query_id, 1))
        z = mask(u_fs.values, self._fs_matrix, r)
        self._send(
            FilterQuery(
                query_id=query_id,
                indexes=index_set.indexes if explicit else np.empty(0, np.int64),
                z=z.values,
            )
        )
        reply = self._recv()
        if not isinstance(reply, FilterReply) or reply.query_id != query_id:
            raise ProtocolError("filter reply does not match the query")
        if len(reply.s) != self.target_count:
            raise ProtocolError(
                f"filter reply covers {len(reply.s)} documents, "
                f"expected {self.target_count}"
            )
        survivors: list[int] = []
        evaluations: dict[int, FilterEvaluation] = {}
        for target in range(self.target_count):
            delta_fs = reply.s[target] - float(r.values @ reply.t[target])
            ev = evaluate_filter(
                delta_fs, u_fs.squared_norm, float(reply.norm_v2[target]),
                self.config.epsilon,
            )
            evaluations[target] = ev
            if ev.passed:
                survivors.append(target)
        return survivors, evaluations

    def _full_step(
        self, query_id: int, query: DocumentVector, survivors: list[int]
    ) -> dict[int, float]:
        r = SecretMask.draw(self._matrix.cols, _mask_rng(self.config, query_id, 2))
        z = mask(query.to_dense(), self._matrix, r)
        self._send(
            FullQuery(
                query_id=query_id,
                survivor_ids=np.asarray(survivors, dtype=np.int64),
                z=z.values,
            )
        )
        reply = self._recv()
        if not isinstance(reply, FullReply) or reply.query_id != query_id:
            raise ProtocolError("full reply does not match the query")
        if not np.array_equal(reply.doc_ids, np.asarray(survivors, dtype=np.int64)):
            raise ProtocolError("full reply covers the wrong documents")
        return {
            target: recover_entry
            for target, recover_entry in zip(
                survivors,
                (reply.s - reply.t @ r.values).tolist(),
            )
        }

    def run_query(self, query_id: int, query: DocumentVector) -> None:
        if self.target_count == 0:
            return
        started = time.perf_counter()
        epsilon = self.config.epsilon
        if self.config.method.uses_filter:
            survivors, _ = self._filter_step(query_id, query)
            self.metrics.pairs_total += self.target_count
            self.metrics.pairs_filtered += self.target_count - len(survivors)
        else:
            survivors = list(range(self.target_count))
            self.metrics.pairs_total += self.target_count
        cosines: dict[int, float] = {}
        if survivors:
            cosines = self._full_step(query_id, query, survivors)
            self.metrics.full_products += len(survivors)
        survivor_set = set(survivors)
        for target in range(self.target_count):
            if target not in survivor_set:
                self.decisions.append(
                    SimilarityDecision(
                        query_id=query_id,
                        target_id=target,
                        similar=False,
                        cosine=None,
                        filtered=True,
                    )
                )
                continue
            cosine = cosines[target]
            if query.degenerate:
                cosine, similar = 0.0, False
            else:
                similar = cosine >= epsilon
            self.decisions.append(
                SimilarityDecision(
                    query_id=query_id,
                    target_id=target,
                    similar=similar,
                    cosine=cosine,
                    filtered=False,
                )
            )
        self.metrics.wall_time += time.perf_counter() - started

    def run(self) -> DetectionReport:
        report = DetectionReport(
            config=self.config,
            query_labels=self.query_labels,
            target_count=0,
        )
        try:
            self.handshake()
            report.target_count = self.target_count
            for query_id, query in enumerate(self.queries):
                self.run_query(query_id, query)
            self._send(Bye())
        except (SsddError, OSError) as exc:
            logger.warning("session aborted: %s", exc)
            report.aborted = True
        report.decisions = self.decisions
        report.metrics = self.metrics
        return report


def run_detection(
    queries: list[DocumentVector],
    config: SessionConfig,
    transport,
    query_labels: list[int] | None = None,
    responder: BobResponder | None = None,
) -> DetectionReport:
    """Drive a full session over an already-connected transport.

    When the caller can reach the responder object (in-process runs, a local
    server), its multiplication counter lands in the report; a remote
    responder keeps its own count.
    """
    session = AliceSession(config, queries, transport, query_labels)
    report = session.run()
    if responder is not None:
        report.metrics.scalar_mult_count = responder.scalar_mult_count
    return report


def run_local_detection(
    queries: list[DocumentVector],
    config: SessionConfig,
    bob_vectors: list[DocumentVector],
    query_labels: list[int] | None = None,
    timeout: float = 60.0,
) -> DetectionReport:
    """Run both parties in this process over the queue transport."""
    alice_end, bob_end = make_local_pair(timeout)
    responder = BobResponder(bob_vectors, dims=config.n)
    server = threading.Thread(target=responder.serve, args=(bob_end,), daemon=True)
    server.start()
    try:
        report = run_detection(
            queries, config, alice_end, query_labels, responder=responder
        )
    finally:
        alice_end.close()
        server.join(timeout=5.0)
    return report


def run_base_pair(
    alice_doc: DocumentVector, bob_doc: DocumentVector, config: SessionConfig
) -> SimilarityDecision:
    """Decide one pair with the full-width protocol only."""
    if config.method.uses_filter:
        config = replace(config, method=SelectionMethod.BASE, f=0)
    report = run_local_detection([alice_doc], config, [bob_doc])
    if report.aborted or not report.decisions:
        raise SessionError("pair session did not complete")
    return report.decisions[0]


def run_fs_pair(
    alice_doc: DocumentVector,
    bob_doc: DocumentVector,
    index_set: FeatureIndexSet | None,
    config: SessionConfig,
) -> SimilarityDecision:
    """Decide one pair with filter-then-refine.

    An explicit ``index_set`` is sent on the wire regardless of method;
    otherwise the session derives it per the configured method.
    """
    if not config.method.uses_filter:
        raise RangeError("run_fs_pair needs a filtering method")
    alice_end, bob_end = make_local_pair()
    responder = BobResponder([bob_doc], dims=config.n)
    server = threading.Thread(target=responder.serve, args=(bob_end,), daemon=True)
    server.start()
    session = AliceSession(config, [alice_doc], alice_end, index_override=index_set)
    try:
        report = session.run()
    finally:
        alice_end.close()
        server.join(timeout=5.0)
    if report.aborted or not report.decisions:
        raise SessionError("pair session did not complete")
    report.metrics.scalar_mult_count = responder.scalar_mult_count
    return report.decisions[0]
