use chrono::{DateTime, SecondsFormat, Utc};

use super::StoreError;
use crate::TopicDistribution;

/// `YYYY-MM-DDTHH:MM:SS.fffffffffZ`; fixed width, so string order is time
/// order.
pub fn encode_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Nanos, true)
}

pub fn decode_timestamp(s: &str) -> Result<DateTime<Utc>, StoreError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| StoreError::Corrupt(format!("timestamp `{s}`: {e}")))
}

pub(super) fn encode_theta(theta: &TopicDistribution) -> String {
    serde_json::to_string(theta.as_slice()).expect("finite floats serialize")
}

pub(super) fn decode_theta(s: &str) -> Result<TopicDistribution, StoreError> {
    serde_json::from_str(s).map_err(|e| StoreError::Corrupt(format!("theta `{s}`: {e}")))
}

pub(super) fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

pub(super) fn from_json<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T, StoreError> {
    serde_json::from_str(s).map_err(|e| StoreError::Corrupt(format!("{what}: {e}")))
}
