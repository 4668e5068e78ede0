//! JSON market files.
//!
//! ```json
//! {"D": 10, "mode": "duality",
//!  "prosumers": [{"a_s": 1, "b_s": 0, "x_b": 4}, {"a_s": 1, "b_s": 0, "x_b": 0}]}
//! ```

use prosumer_cournot::{MarketInstance, Mode, ProsumerParams};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    #[serde(rename = "D")]
    pub demand: f64,
    pub mode: Mode,
    pub prosumers: Vec<ProsumerParams>,
}

impl MarketFile {
    pub fn from_instance(m: &MarketInstance) -> Self {
        MarketFile {
            demand: m.demand(),
            mode: m.mode(),
            prosumers: m.prosumers().to_vec(),
        }
    }

    pub fn into_instance(self) -> Result<MarketInstance> {
        if !(self.demand.is_finite() && self.demand > 0.0) {
            return Err(invalid("D", "must be a positive finite number"));
        }
        if self.prosumers.len() < 2 {
            return Err(invalid(
                "prosumers",
                format!("a market needs at least 2 prosumers, got {}", self.prosumers.len()),
            ));
        }
        for (i, p) in self.prosumers.iter().enumerate() {
            check(i, "a_s", p.a_s, p.a_s > 0.0, "must be > 0")?;
            check(i, "b_s", p.b_s, p.b_s >= 0.0, "must be >= 0")?;
            check(i, "x_b", p.x_b, p.x_b >= 0.0, "must be >= 0")?;
        }
        Ok(MarketInstance::new(self.demand, self.prosumers, self.mode)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("market files always serialize")
    }
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SimError {
    SimError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

fn check(i: usize, field: &str, value: f64, ok: bool, rule: &str) -> Result<()> {
    if value.is_finite() && ok {
        Ok(())
    } else {
        Err(invalid(
            format!("prosumers[{i}].{field}"),
            format!("{rule}, got {value}"),
        ))
    }
}

/// Parses and validates a market file. Prosumers keep the listed order.
pub fn parse_market_file(text: &[u8]) -> Result<MarketInstance> {
    let file: MarketFile = serde_json::from_slice(text).map_err(|e| SimError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_instance()
}
