//! Message layer between the defense controller and pipeline endpoints:
//! newline-delimited JSON envelopes with a fixed key order, a method
//! router, and a simulated CI connector backed by the pipeline environment.

pub mod connector;
pub mod envelope;
pub mod replay;
pub mod router;

pub use connector::{PipelineVerb, RunSpec, SimulatedConnector, World, METHODS};
pub use envelope::{
    decode_message, encode_message, DecodeError, Envelope, InvariantError, Kind, RpcError,
    ILLEGAL_ACTION, INVALID_PARAMS, METHOD_NOT_FOUND, PROTOCOL_VERSION, UNKNOWN_RUN,
};
pub use replay::{replay, ReplayError};
pub use router::{route_request, Connection, Handler, HandlerResult, Params, Registry, RouteError};
