"""Two-party detection protocol: wire messages, transports, session logic."""

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
from .session import (
    AliceSession,
    BobResponder,
    DetectionReport,
    FilterEvaluation,
    SessionConfig,
    SessionMetrics,
    SimilarityDecision,
    evaluate_filter,
    run_base_pair,
    run_detection,
    run_fs_pair,
    secure_df_exchange,
)
from .transport import (
    LocalTransport,
    TcpServer,
    TcpTransport,
    connect_tcp,
    make_local_pair,
)

__all__ = [
    "Hello",
    "HelloAck",
    "DfVector",
    "FilterQuery",
    "FilterReply",
    "FullQuery",
    "FullReply",
    "Bye",
    "encode_message",
    "decode_message",
    "SessionConfig",
    "SessionMetrics",
    "SimilarityDecision",
    "FilterEvaluation",
    "DetectionReport",
    "AliceSession",
    "BobResponder",
    "evaluate_filter",
    "run_base_pair",
    "run_fs_pair",
    "run_detection",
    "secure_df_exchange",
    "LocalTransport",
    "TcpTransport",
    "TcpServer",
    "make_local_pair",
    "connect_tcp",
]
