//! Small networks shared by unit tests.

use crate::dsn::{search_base_code, RelayCode};
use crate::topology::{AntennaMode, Edge, RelayNetwork};

/// 0 -> 1 -> 2.
pub fn line(h01: f64, h12: f64) -> RelayNetwork {
    RelayNetwork::new(3, AntennaMode::Scalar, vec![Edge::scalar(0, 1, h01, 0.0), Edge::scalar(1, 2, h12, 0.0)])
}

/// 0 -> {1, 2} -> 3.
pub fn diamond() -> RelayNetwork {
    RelayNetwork::new(
        4,
        AntennaMode::Scalar,
        vec![
            Edge::scalar(0, 1, 2.0, 0.0),
            Edge::scalar(0, 2, 3.0, 0.0),
            Edge::scalar(1, 3, 2.0, 0.0),
            Edge::scalar(2, 3, 3.0, 0.0),
        ],
    )
}

/// 0 -> 1, 0 -> 2, 1 -> 2, 2 -> 3: node 2 hears two levels.
pub fn nonlayered() -> RelayNetwork {
    RelayNetwork::new(
        4,
        AntennaMode::Scalar,
        vec![
            Edge::scalar(0, 1, 2.0, 0.0),
            Edge::scalar(0, 2, 2.0, 0.0),
            Edge::scalar(1, 2, 2.0, 0.0),
            Edge::scalar(2, 3, 2.0, 0.0),
        ],
    )
}

/// Zero-error code with four codewords of length two on [`diamond`].
pub fn diamond_code(net: &RelayNetwork) -> RelayCode {
    search_base_code(net, 2, 1.0, 30, 11).unwrap().expect("diamond code exists")
}
