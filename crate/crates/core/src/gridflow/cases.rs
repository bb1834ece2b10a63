use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

/// The bundled test feeders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    Case33,
    Case69,
    Case118,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::Case33, CaseId::Case69, CaseId::Case118];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Case33 => "case33",
            CaseId::Case69 => "case69",
            CaseId::Case118 => "case118",
        }
    }

    fn json(self) -> &'static str {
        match self {
            CaseId::Case33 => include_str!("../../data/case33.json"),
            CaseId::Case69 => include_str!("../../data/case69.json"),
            CaseId::Case118 => include_str!("../../data/case118.json"),
        }
    }

    pub fn network(self) -> Result<Network> {
        Network::from_json(self.json())
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown network {s:?} (expected case33, case69 or case118)")))
    }
}
