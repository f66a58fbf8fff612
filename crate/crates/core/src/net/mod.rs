//! Wire encoding, framing, configuration and the two ways of connecting
//! nodes: a deterministic simulated network and real TCP sockets.

pub mod cluster;
pub mod codec;
pub mod config;
pub mod frame;
pub mod live;
pub mod sim;
pub mod transport;

pub use cluster::{
    committed_digest, Completion, ElectionRecord, InjectionStats, SimCluster, SimConfig,
};
pub use codec::{decode_message, encode_message, DecodeError};
pub use config::{load_config, ClusterConfig, ConfigError, NodeAddress};
pub use frame::{
    decode_frame, encode_frame, read_frame, write_frame, FrameError, FRAME_HEADER_LEN,
    MAX_FRAME_PAYLOAD,
};
pub use sim::{
    CaptureBuffer, CapturedFrame, FaultAction, LinkParams, LinkStats, SimEvent, SimNetwork, TapId,
};
pub use transport::{NodeMetrics, Rejection, Transport, TransportMode};
