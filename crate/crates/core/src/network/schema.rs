//! JSON network file.
//!
//! ```json
//! {
//!   "buses": [{"id": 1, "kind": "slack"}, {"id": 2, "kind": "load", "buildings": ["A"]}],
//!   "branches": [{"from": 1, "to": 2, "r_ohm": 0.01, "x_ohm": 0.003, "i_max_a": 250}],
//!   "slack_bus": 1,
//!   "v_bounds_pu": [0.94, 1.06],
//!   "bases": {"s_base_va": 1000000, "v_base_v": 400},
//!   "configuration": "delta"
//! }
//! ```
//!
//! `bases` is optional and defaults to 1 MVA / 400 V. Bus `kind` is one of
//! `slack`, `load` (alias `load_generator`) or `passive`.

use std::path::Path;

use super::NetworkTopology;
use crate::error::{Error, Result};

pub const NETWORK_FILE: &str = "network.json";

/// Parses and validates a network document. Errors carry the line/column
/// and the JSON path of the offending field.
pub fn parse_network(text: &str, path: &Path) -> Result<NetworkTopology> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let net: NetworkTopology = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        Error::schema(
            path,
            format!(
                "line {} column {} at `{}`: {}",
                inner.line(),
                inner.column(),
                e.path(),
                inner
            ),
        )
    })?;
    net.validate()
        .map_err(|e| Error::schema(path, e.to_string()))?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
  "buses": [{"id": 1, "kind": "slack"}, {"id": 2, "kind": "load", "buildings": ["A"]}],
  "branches": [{"from": 1, "to": 2, "r_ohm": 0.01, "x_ohm": 0.003, "i_max_a": 250}],
  "slack_bus": 1,
  "v_bounds_pu": [0.94, 1.06],
  "configuration": "delta"
}"#;

    #[test]
    fn parses_minimal_document() {
        let net = parse_network(GOOD, Path::new("network.json")).unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.bases.v_base_v, 400.0);
        assert_eq!(net.building_bus()["A"], 1);
    }

    #[test]
    fn error_names_line_and_field() {
        let bad = GOOD.replace("\"r_ohm\": 0.01", "\"r_ohm\": \"x\"");
        let err = parse_network(&bad, Path::new("network.json"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("branches[0].r_ohm"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let bad = GOOD.replace("\"i_max_a\"", "\"imax\"");
        let err = parse_network(&bad, Path::new("n.json"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("branches[0]"), "{err}");
    }

    #[test]
    fn semantic_error_names_field() {
        let bad = GOOD.replace("\"r_ohm\": 0.01", "\"r_ohm\": -1");
        let err = parse_network(&bad, Path::new("n.json"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("branches[0].r_ohm"), "{err}");
    }
}
