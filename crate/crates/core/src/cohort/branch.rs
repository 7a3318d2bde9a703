//! Vessel branch identities and their discretization presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The aorta and the four modeled supra-aortic branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BranchId {
    #[serde(rename = "aorta")]
    Aorta,
    #[serde(rename = "LSA")]
    Lsa,
    #[serde(rename = "LCCA")]
    Lcca,
    #[serde(rename = "RSA")]
    Rsa,
    #[serde(rename = "RCCA")]
    Rcca,
}

/// Streamwise sections, radial directions and mesh resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchPreset {
    pub n: usize,
    pub m: usize,
    pub mesh_u: usize,
    pub mesh_v: usize,
}

impl BranchPreset {
    pub fn latent_len(&self) -> usize {
        self.n * 3 + self.n * self.m
    }
}

impl BranchId {
    pub const ALL: [BranchId; 5] = [BranchId::Aorta, BranchId::Lsa, BranchId::Lcca, BranchId::Rsa, BranchId::Rcca];

    pub fn name(self) -> &'static str {
        match self {
            BranchId::Aorta => "aorta",
            BranchId::Lsa => "LSA",
            BranchId::Lcca => "LCCA",
            BranchId::Rsa => "RSA",
            BranchId::Rcca => "RCCA",
        }
    }

    pub fn preset(self) -> BranchPreset {
        let (n, m, mesh_u, mesh_v) = match self {
            BranchId::Aorta => (16, 21, 200, 80),
            BranchId::Lcca => (16, 16, 120, 60),
            BranchId::Lsa => (16, 16, 120, 60),
            BranchId::Rcca => (8, 16, 60, 60),
            BranchId::Rsa => (16, 16, 120, 60),
        };
        BranchPreset { n, m, mesh_u, mesh_v }
    }

    /// Vessel this branch leaves from; `None` for the aorta.
    pub fn parent(self) -> Option<BranchId> {
        match self {
            BranchId::Aorta => None,
            BranchId::Rsa => Some(BranchId::Rcca),
            _ => Some(BranchId::Aorta),
        }
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BranchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BranchId::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::NotFound(format!("unknown branch {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for b in BranchId::ALL {
            assert_eq!(b.name().parse::<BranchId>().unwrap(), b);
            assert_eq!(serde_json::to_string(&b).unwrap(), format!("\"{b}\""));
        }
        assert_eq!("lcca".parse::<BranchId>().unwrap(), BranchId::Lcca);
        assert!("femoral".parse::<BranchId>().is_err());
    }
}
