"""Wire protocol: message schema, canonical binary framing and transports."""

from .codec import decode, decode_weights, encode, encode_weights, frame_size, load_weights, save_weights
from .messages import (
    DEFAULT_PORT,
    MAGIC,
    MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
    ClientMetrics,
    ConfigPush,
    ConnectionLostError,
    CorruptFrameError,
    EvalResult,
    FedwireError,
    Finish,
    IncompleteFrameError,
    Message,
    ProtocolError,
    Register,
    TrainResult,
    TransportTimeoutError,
    WeightsDown,
)
from .securetls import client_context, generate_self_signed_cert, server_context
from .transport import (
    IN_PROCESS,
    TCP_PLAIN,
    TCP_SECURE,
    TRANSPORT_MODES,
    Endpoint,
    InProcessConnection,
    Listener,
    TcpConnection,
    connect,
    default_endpoint,
    in_process_pair,
    parse_endpoint,
)

__all__ = [
    "ClientMetrics",
    "ConfigPush",
    "ConnectionLostError",
    "CorruptFrameError",
    "DEFAULT_PORT",
    "Endpoint",
    "EvalResult",
    "FedwireError",
    "Finish",
    "IN_PROCESS",
    "IncompleteFrameError",
    "InProcessConnection",
    "Listener",
    "MAGIC",
    "MAX_FRAME_BYTES",
    "Message",
    "PROTOCOL_VERSION",
    "ProtocolError",
    "Register",
    "TCP_PLAIN",
    "TCP_SECURE",
    "TRANSPORT_MODES",
    "TcpConnection",
    "TrainResult",
    "TransportTimeoutError",
    "WeightsDown",
    "client_context",
    "connect",
    "decode",
    "decode_weights",
    "default_endpoint",
    "encode",
    "encode_weights",
    "frame_size",
    "generate_self_signed_cert",
    "in_process_pair",
    "load_weights",
    "parse_endpoint",
    "save_weights",
    "server_context",
]
