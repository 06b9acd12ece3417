//! JSON bodies of the embedding adapter protocol.
//!
//! ```text
//! POST /v1/embed      {"dataset_id", "disabled_heads": [[layer, head], ...]}
//!                  -> {"rows", "cols", "labels", "data_b64"}
//! GET  /v1/topology -> {"num_layers", "heads_per_layer"}
//! GET  /v1/datasets -> {"datasets": [{"id", "n"}, ...]}
//! ```
//!
//! `data_b64` is standard base64 of `rows × cols` little-endian `f32`, row-major.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::embeddings::LabeledEmbeddings;
use crate::heads::HeadMask;

pub const EMBED_PATH: &str = "/v1/embed";
pub const TOPOLOGY_PATH: &str = "/v1/topology";
pub const DATASETS_PATH: &str = "/v1/datasets";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub dataset_id: String,
    pub disabled_heads: Vec<[u32; 2]>,
}

impl EmbedRequest {
    pub fn new(dataset_id: &str, mask: &HeadMask) -> Self {
        Self {
            dataset_id: dataset_id.to_string(),
            disabled_heads: mask
                .disabled()
                .iter()
                .map(|h| [h.layer as u32, h.head as u32])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub rows: u32,
    pub cols: u32,
    pub labels: Vec<i8>,
    pub data_b64: String,
}

impl EmbedResponse {
    pub fn encode(data: &LabeledEmbeddings) -> Self {
        let bytes: Vec<u8> = data.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        Self {
            rows: data.rows() as u32,
            cols: data.cols() as u32,
            labels: data.labels().to_vec(),
            data_b64: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<LabeledEmbeddings, OracleError> {
        let (rows, cols) = (self.rows as usize, self.cols as usize);
        if self.labels.len() != rows {
            return Err(OracleError::Protocol(format!(
                "labels: expected {rows} entries, got {}",
                self.labels.len()
            )));
        }
        let bytes = STANDARD
            .decode(&self.data_b64)
            .map_err(|e| OracleError::Protocol(format!("data_b64: {e}")))?;
        if bytes.len() != rows * cols * 4 {
            return Err(OracleError::Protocol(format!(
                "data_b64: expected {} bytes for {rows}x{cols} f32, got {}",
                rows * cols * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        LabeledEmbeddings::new(data, cols, self.labels.clone()).map_err(|e| OracleError::Protocol(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<[u32; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyResponse {
    pub num_layers: u32,
    pub heads_per_layer: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetsResponse {
    pub datasets: Vec<DatasetInfo>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::{HeadId, ModelTopology};

    #[test]
    fn request_body_shape() {
        let t = ModelTopology::new(4, 4).unwrap();
        let mask = HeadMask::with_disabled(t, [HeadId::new(2, 1), HeadId::new(0, 3)]).unwrap();
        let body = serde_json::to_string(&EmbedRequest::new("arith", &mask)).unwrap();
        assert_eq!(body, r#"{"dataset_id":"arith","disabled_heads":[[0,3],[2,1]]}"#);
    }

    #[test]
    fn response_round_trip_and_length_check() {
        let e = LabeledEmbeddings::new(vec![1.0, -2.5, 0.25, 4.0], 2, vec![1, -1]).unwrap();
        let resp = EmbedResponse::encode(&e);
        assert_eq!(resp.decode().unwrap(), e);
        let mut short = resp.clone();
        short.rows = 3;
        short.labels.push(1);
        assert!(matches!(short.decode(), Err(OracleError::Protocol(_))));
    }

    #[test]
    fn error_body_shape() {
        let body = ErrorResponse {
            error: "invalid_head".into(),
            head: Some([9, 0]),
        };
        assert_eq!(
            serde_json::to_string(&body).unwrap(),
            r#"{"error":"invalid_head","head":[9,0]}"#
        );
        let nf: ErrorResponse = serde_json::from_str(r#"{"error":"unknown_dataset"}"#).unwrap();
        assert_eq!(nf.head, None);
    }
}
