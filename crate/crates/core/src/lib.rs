pub mod attack;
pub mod bench;
pub mod check;
pub mod kv;
pub mod net;
pub mod raft;
pub mod scenario;
pub mod secure;
