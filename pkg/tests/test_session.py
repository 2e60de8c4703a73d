"""Protocol engine behavior: filtering, sessions, transports, metrics."""

import logging
import threading

import numpy as np
import pytest

from ssdd.corpus import build_document_vector, split_queries
from ssdd.errors import ProtocolError, RangeError
from ssdd.oracle import compare_results, oracle_detect
from ssdd.protocol.messages import (
    Bye,
    DfVector,
    FilterQuery,
    FullQuery,
    encode_message,
)
from ssdd.protocol.session import (
    AliceSession,
    BobResponder,
    SessionConfig,
    SessionMetrics,
    evaluate_filter,
    run_base_pair,
    run_detection,
    run_fs_pair,
    run_local_detection,
    secure_df_exchange,
)
from ssdd.protocol.transport import TcpServer, connect_tcp, make_local_pair
from ssdd.selection import SelectionMethod
from ssdd.vectors import FeatureIndexSet

from conftest import random_unit_dense


def config_for(method, n=500, f=50, epsilon=0.8):
    return SessionConfig(
        n=n,
        epsilon=epsilon,
        method=method,
        f=f if method.uses_filter else 0,
        matrix_seed=11,
        fs_matrix_seed=12,
        rp_seed=13,
    )


class TestSessionConfig:
    def test_valid_round_trip_through_hello(self):
        config = config_for(SelectionMethod.GF)
        assert SessionConfig.from_hello(config.hello()) == config

    def test_rejects_bad_parameters(self):
        with pytest.raises(RangeError):
            SessionConfig(n=0, epsilon=0.8)
        with pytest.raises(RangeError):
            SessionConfig(n=4, epsilon=1.2)
        with pytest.raises(RangeError):
            SessionConfig(n=4, epsilon=0.8, method=SelectionMethod.RP, f=0)
        with pytest.raises(RangeError):
            SessionConfig(n=4, epsilon=0.8, method=SelectionMethod.RP, f=5)
        with pytest.raises(RangeError):
            SessionConfig(n=4, epsilon=0.8, matrix_seed=-1)
        with pytest.raises(RangeError):
            SessionConfig(n=4, epsilon=0.8, protocol_version=2)

    def test_base_needs_no_budget(self):
        config = SessionConfig(n=4, epsilon=0.5)
        assert config.f == 0

    def test_from_hello_rejects_unknown_method(self):
        hello = config_for(SelectionMethod.RP).hello()
        bad = type(hello)(**{**hello.__dict__, "method": 9})
        with pytest.raises(ProtocolError):
            SessionConfig.from_hello(bad)

    def test_from_hello_rejects_bad_version(self):
        hello = config_for(SelectionMethod.RP).hello()
        bad = type(hello)(**{**hello.__dict__, "version": 3})
        with pytest.raises(ProtocolError):
            SessionConfig.from_hello(bad)


class TestEvaluateFilter:
    def test_reference_values(self):
        ev = evaluate_filter(0.5, 1.0, 0.5, 0.8)
        assert ev.delta == pytest.approx(0.5, abs=1e-12)
        assert ev.upper_bound == pytest.approx(0.75, abs=1e-12)
        assert not ev.passed

    def test_passing_pair(self):
        ev = evaluate_filter(0.9, 1.0, 0.9, 0.8)
        assert ev.upper_bound == pytest.approx(0.95, abs=1e-12)
        assert ev.passed

    def test_boundary_counts_as_pass(self):
        ev = evaluate_filter(0.5, 1.0, 0.4, 0.8)
        assert ev.upper_bound == pytest.approx(0.8, abs=1e-12)
        assert ev.passed

    def test_negative_distance_clamps_to_perfect_bound(self):
        ev = evaluate_filter(1.2, 1.0, 1.0, 0.5)
        assert ev.delta == 0.0
        assert ev.upper_bound == 1.0
        assert ev.passed

    def test_bound_dominates_true_cosine(self):
        """The projected bound can never sit below the full cosine for
        non-negative unit vectors, whatever index set is chosen."""
        rng = np.random.default_rng(7)
        n = 40
        for _ in range(300):
            u = random_unit_dense(rng, n)
            v = random_unit_dense(rng, n)
            f = int(rng.integers(1, n + 1))
            idx = np.sort(rng.choice(n, f, replace=False))
            u_fs, v_fs = u[idx], v[idx]
            ev = evaluate_filter(
                float(u_fs @ v_fs), float(u_fs @ u_fs), float(v_fs @ v_fs), 0.8
            )
            assert ev.upper_bound >= float(u @ v) - 1e-9


class TestSessionMetrics:
    def test_merge_sums_fields(self):
        a = SessionMetrics(10, 4, 6, 100, 200, 0.5, 1000)
        b = SessionMetrics(5, 1, 4, 10, 20, 0.25, 500)
        a.merge(b)
        assert a == SessionMetrics(15, 5, 10, 110, 220, 0.75, 1500)

    def test_filter_ratio(self):
        assert SessionMetrics().filter_ratio == 0.0
        assert SessionMetrics(pairs_total=100, pairs_filtered=30).filter_ratio == 0.3


class TestBasePair:
    def test_identical_documents_are_similar(self):
        doc = build_document_vector({0: 2, 3: 1}, 6)
        decision = run_base_pair(doc, doc, SessionConfig(n=6, epsilon=0.8))
        assert decision.similar
        assert not decision.filtered
        assert decision.cosine == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_documents_are_not(self):
        u = build_document_vector({0: 1}, 4)
        v = build_document_vector({1: 1}, 4)
        decision = run_base_pair(u, v, SessionConfig(n=4, epsilon=0.8))
        assert not decision.similar
        assert abs(decision.cosine) < 1e-9

    def test_empty_query_scores_zero(self):
        u = build_document_vector({}, 4)
        v = build_document_vector({1: 1}, 4)
        decision = run_base_pair(u, v, SessionConfig(n=4, epsilon=0.0))
        assert not decision.similar
        assert decision.cosine == 0.0

    def test_empty_target_scores_zero(self):
        u = build_document_vector({0: 1}, 4)
        v = build_document_vector({}, 4)
        decision = run_base_pair(u, v, SessionConfig(n=4, epsilon=0.8))
        assert not decision.similar
        assert abs(decision.cosine) < 1e-12

    def test_filter_method_is_forced_down(self):
        doc = build_document_vector({0: 1, 1: 1}, 6)
        config = SessionConfig(n=6, epsilon=0.8, method=SelectionMethod.RP, f=2)
        decision = run_base_pair(doc, doc, config)
        assert decision.similar and not decision.filtered


class TestFsPair:
    def test_dissimilar_pair_is_filtered(self):
        u = build_document_vector({0: 1}, 6)
        v = build_document_vector({5: 1}, 6)
        index_set = FeatureIndexSet(6, np.array([0, 1]))
        config = SessionConfig(
            n=6, epsilon=0.6, method=SelectionMethod.RP, f=2
        )
        decision = run_fs_pair(u, v, index_set, config)
        assert decision.filtered
        assert not decision.similar
        assert decision.cosine is None

    def test_similar_pair_survives_and_scores(self):
        doc = build_document_vector({0: 1, 1: 1}, 6)
        index_set = FeatureIndexSet(6, np.array([0, 1]))
        config = SessionConfig(n=6, epsilon=0.8, method=SelectionMethod.RP, f=2)
        decision = run_fs_pair(doc, doc, index_set, config)
        assert not decision.filtered
        assert decision.similar
        assert decision.cosine == pytest.approx(1.0, abs=1e-12)

    def test_index_set_defaults_to_the_method(self):
        u = build_document_vector({0: 3, 1: 1, 2: 2}, 4)
        config = SessionConfig(n=4, epsilon=0.5, method=SelectionMethod.LF, f=2)
        decision = run_fs_pair(u, u, None, config)
        assert decision.similar
        assert decision.cosine == pytest.approx(1.0, abs=1e-12)

    def test_rejects_base(self):
        doc = build_document_vector({0: 1}, 4)
        with pytest.raises(RangeError):
            run_fs_pair(doc, doc, None, SessionConfig(n=4, epsilon=0.5))


class TestSecureDfExchange:
    def test_both_sides_see_the_sum(self):
        a_end, b_end = make_local_pair(timeout=5.0)
        a_counts = np.array([3, 0, 1, 2], dtype=np.int64)
        b_counts = np.array([1, 1, 0, 5], dtype=np.int64)
        seen = {}
        worker = threading.Thread(
            target=lambda: seen.update(bob=secure_df_exchange(b_end, b_counts))
        )
        worker.start()
        agg = secure_df_exchange(a_end, a_counts)
        worker.join(timeout=5.0)
        np.testing.assert_array_equal(agg, [4, 1, 1, 7])
        np.testing.assert_array_equal(seen["bob"], agg)

    def test_wrong_message_is_rejected(self):
        a_end, b_end = make_local_pair(timeout=5.0)
        a_end.send_frame(encode_message(Bye()))
        with pytest.raises(ProtocolError):
            secure_df_exchange(b_end, np.array([1, 2], dtype=np.int64))


class TestDetectionAgainstOracle:
    @pytest.mark.parametrize("method", list(SelectionMethod), ids=lambda m: m.name)
    def test_matches_plaintext_oracle(self, small_corpus, method):
        query_ids, target_ids = split_queries(small_corpus, k=10, seed=5)
        queries = [small_corpus.vectors[i] for i in query_ids]
        targets = [small_corpus.vectors[i] for i in target_ids]
        config = config_for(method)
        oracle = oracle_detect(queries, targets, config.epsilon)
        margin = min(abs(c - config.epsilon) for c in oracle.cosines.values())
        assert margin > 1e-6, "fixture produced a borderline pair"
        report = run_detection_locally(queries, config, targets)
        diff = compare_results(report, oracle)
        assert diff.ok, f"missing={sorted(diff.missing)} extra={sorted(diff.extra)}"
        for d in report.decisions:
            if not d.filtered:
                expected = oracle.cosines[(d.query_id, d.target_id)]
                assert d.cosine == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("method", list(SelectionMethod), ids=lambda m: m.name)
    def test_metrics_invariants(self, small_corpus, method):
        query_ids, target_ids = split_queries(small_corpus, k=10, seed=5)
        queries = [small_corpus.vectors[i] for i in query_ids]
        targets = [small_corpus.vectors[i] for i in target_ids]
        report = run_detection_locally(queries, config_for(method), targets)
        m = report.metrics
        assert m.pairs_total == len(queries) * len(targets)
        assert m.pairs_filtered + m.full_products == m.pairs_total
        if method is SelectionMethod.BASE:
            assert m.pairs_filtered == 0
        assert m.bytes_sent_alice > 0 and m.bytes_sent_bob > 0
        assert m.scalar_mult_count > 0
        assert m.wall_time > 0.0
        assert not report.aborted

    def test_decisions_come_in_pair_order(self, small_corpus):
        query_ids, target_ids = split_queries(small_corpus, k=4, seed=5)
        queries = [small_corpus.vectors[i] for i in query_ids]
        targets = [small_corpus.vectors[i] for i in target_ids]
        report = run_detection_locally(queries, config_for(SelectionMethod.HF), targets)
        expected = [
            (q, t) for q in range(len(queries)) for t in range(len(targets))
        ]
        assert [(d.query_id, d.target_id) for d in report.decisions] == expected

    def test_repeat_runs_are_identical(self, small_corpus):
        query_ids, target_ids = split_queries(small_corpus, k=6, seed=5)
        queries = [small_corpus.vectors[i] for i in query_ids]
        targets = [small_corpus.vectors[i] for i in target_ids]
        config = config_for(SelectionMethod.HF, f=40)
        first = run_detection_locally(queries, config, targets)
        second = run_detection_locally(queries, config, targets)
        assert first.decisions == second.decisions
        for name in (
            "pairs_total",
            "pairs_filtered",
            "full_products",
            "bytes_sent_alice",
            "bytes_sent_bob",
            "scalar_mult_count",
        ):
            assert getattr(first.metrics, name) == getattr(second.metrics, name)


def run_detection_locally(queries, config, targets):
    report = run_local_detection(queries, config, targets)
    assert not report.aborted
    return report


class TestTraffic:
    def setup_method(self):
        self.u = build_document_vector({i: 2 for i in range(20)}, 400)
        self.far = build_document_vector({i: 2 for i in range(200, 220)}, 400)

    def test_filtered_pair_costs_less_than_base(self):
        base = run_local_detection([self.u], config_for(SelectionMethod.BASE, n=400), [self.far])
        lf = run_local_detection(
            [self.u], config_for(SelectionMethod.LF, n=400, f=20), [self.far]
        )
        assert lf.metrics.pairs_filtered == 1
        assert lf.metrics.full_products == 0
        assert lf.metrics.bytes_sent_alice < base.metrics.bytes_sent_alice
        assert lf.metrics.bytes_sent_bob < base.metrics.bytes_sent_bob

    def test_surviving_pair_costs_more_than_base(self):
        base = run_local_detection([self.u], config_for(SelectionMethod.BASE, n=400), [self.u])
        lf = run_local_detection(
            [self.u], config_for(SelectionMethod.LF, n=400, f=20), [self.u]
        )
        assert lf.metrics.pairs_filtered == 0
        assert lf.metrics.bytes_sent_alice > base.metrics.bytes_sent_alice
        assert lf.metrics.bytes_sent_bob > base.metrics.bytes_sent_bob


class TestTcpAgreement:
    def test_tcp_and_local_runs_agree(self, small_corpus):
        query_ids, target_ids = split_queries(small_corpus, k=5, seed=9)
        queries = [small_corpus.vectors[i] for i in query_ids]
        targets = [small_corpus.vectors[i] for i in target_ids]
        config = config_for(SelectionMethod.HF, f=40)
        local = run_detection_locally(queries, config, targets)
        server = TcpServer(lambda: BobResponder(targets, dims=config.n))
        with server:
            transport = connect_tcp(server.host, server.port)
            try:
                over_tcp = run_detection(queries, config, transport)
            finally:
                transport.close()
        assert not over_tcp.aborted
        assert over_tcp.decisions == local.decisions
        assert over_tcp.metrics.bytes_sent_alice == local.metrics.bytes_sent_alice
        assert over_tcp.metrics.bytes_sent_bob == local.metrics.bytes_sent_bob
        assert len(server.responders) == 1
        assert server.responders[0].scalar_mult_count == local.metrics.scalar_mult_count


class TestAbort:
    def test_peer_gone_before_handshake(self):
        a_end, b_end = make_local_pair(timeout=1.0)
        b_end.close()
        doc = build_document_vector({0: 1}, 4)
        report = run_detection([doc], SessionConfig(n=4, epsilon=0.5), a_end)
        assert report.aborted
        assert report.decisions == []
        assert report.target_count == 0

    def test_responder_rejecting_handshake_aborts_the_run(self):
        a_end, b_end = make_local_pair(timeout=2.0)
        responder = BobResponder([build_document_vector({0: 1}, 300)], dims=300)

        def serve_quietly():
            try:
                responder.serve(b_end)
            except ProtocolError:
                pass

        worker = threading.Thread(target=serve_quietly, daemon=True)
        worker.start()
        doc = build_document_vector({0: 1}, 500)
        report = run_detection([doc], SessionConfig(n=500, epsilon=0.5), a_end)
        worker.join(timeout=5.0)
        assert report.aborted
        assert report.target_count == 0


class TestResponderValidation:
    def make(self, method=SelectionMethod.RP, n=6, f=2, docs=2):
        vectors = [build_document_vector({i: 1, i + 1: 2}, n) for i in range(docs)]
        responder = BobResponder(vectors, dims=n)
        config = SessionConfig(
            n=n, epsilon=0.8, method=method, f=f if method.uses_filter else 0
        )
        return responder, config

    def test_query_before_handshake(self):
        responder, _ = self.make()
        query = FilterQuery(query_id=0, indexes=np.empty(0, np.int64), z=np.zeros(2))
        with pytest.raises(ProtocolError, match="before handshake"):
            responder.handle(query)

    def test_dims_mismatch(self):
        responder, _ = self.make(n=6)
        other = SessionConfig(n=7, epsilon=0.8)
        with pytest.raises(ProtocolError, match="dims"):
            responder.handle(other.hello())

    def test_duplicate_handshake(self):
        responder, config = self.make()
        responder.handle(config.hello())
        with pytest.raises(ProtocolError, match="duplicate"):
            responder.handle(config.hello())

    def test_df_exchange_needs_a_whole_vector_method(self):
        responder, config = self.make(method=SelectionMethod.RP)
        responder.handle(config.hello())
        with pytest.raises(ProtocolError, match="df exchange"):
            responder.handle(DfVector(np.zeros(6, dtype=np.int64)))

    def test_lf_without_indexes(self):
        responder, config = self.make(method=SelectionMethod.LF)
        responder.handle(config.hello())
        query = FilterQuery(query_id=0, indexes=np.empty(0, np.int64), z=np.zeros(2))
        with pytest.raises(ProtocolError, match="explicit indexes"):
            responder.handle(query)

    def test_wrong_index_count(self):
        responder, config = self.make(method=SelectionMethod.LF)
        responder.handle(config.hello())
        query = FilterQuery(
            query_id=0, indexes=np.array([1], dtype=np.int64), z=np.zeros(2)
        )
        with pytest.raises(ProtocolError, match="indexes"):
            responder.handle(query)

    def test_duplicate_indexes(self):
        responder, config = self.make(method=SelectionMethod.LF)
        responder.handle(config.hello())
        query = FilterQuery(
            query_id=0, indexes=np.array([3, 3], dtype=np.int64), z=np.zeros(2)
        )
        with pytest.raises(ProtocolError, match="index set"):
            responder.handle(query)

    def test_wrong_masked_width(self):
        responder, config = self.make()
        responder.handle(config.hello())
        query = FilterQuery(query_id=0, indexes=np.empty(0, np.int64), z=np.zeros(3))
        with pytest.raises(ProtocolError, match="masked width"):
            responder.handle(query)

    def test_filter_step_under_base(self):
        responder, config = self.make(method=SelectionMethod.BASE)
        responder.handle(config.hello())
        query = FilterQuery(query_id=0, indexes=np.empty(0, np.int64), z=np.zeros(2))
        with pytest.raises(ProtocolError, match="BASE"):
            responder.handle(query)

    def test_survivor_id_out_of_range(self):
        responder, config = self.make(docs=2)
        responder.handle(config.hello())
        query = FullQuery(
            query_id=0, survivor_ids=np.array([7], dtype=np.int64), z=np.zeros(6)
        )
        with pytest.raises(ProtocolError, match="survivor"):
            responder.handle(query)

    def test_empty_responder_needs_dims(self):
        with pytest.raises(RangeError):
            BobResponder([])
        responder = BobResponder([], dims=4)
        assert responder.dims == 4

    def test_mixed_dims_rejected(self):
        docs = [build_document_vector({0: 1}, 4), build_document_vector({0: 1}, 5)]
        with pytest.raises(RangeError):
            BobResponder(docs)


class TestDisclosureWarnings:
    def test_per_query_methods_warn(self, caplog):
        doc = build_document_vector({0: 1}, 10)
        config = SessionConfig(n=10, epsilon=0.8, method=SelectionMethod.LF, f=2)
        with caplog.at_level(logging.WARNING, logger="ssdd.protocol.session"):
            AliceSession(config, [doc], transport=None)
        assert "disclosed" in caplog.text

    def test_session_fixed_methods_do_not(self, caplog):
        doc = build_document_vector({0: 1}, 10)
        config = SessionConfig(n=10, epsilon=0.8, method=SelectionMethod.RP, f=2)
        with caplog.at_level(logging.WARNING, logger="ssdd.protocol.session"):
            AliceSession(config, [doc], transport=None)
        assert caplog.text == ""

    def test_dims_mismatch_rejected_up_front(self):
        doc = build_document_vector({0: 1}, 9)
        config = SessionConfig(n=10, epsilon=0.8)
        with pytest.raises(RangeError):
            AliceSession(config, [doc], transport=None)
