pub mod authority;
pub mod crypto;
pub mod cs;
pub mod daylog;
pub mod identity;
pub mod oracle;
pub mod params;
pub mod p2p;
pub mod payload;
pub mod sim;

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DeviceError {
    #[error("device has already disclosed its log")]
    AlreadyDisclosed,
    #[error("device has not disclosed its log")]
    NotDisclosed,
}
