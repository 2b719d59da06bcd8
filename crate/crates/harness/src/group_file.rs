//! Group description files.
//!
//! ```toml
//! n = 1
//!
//! [[generator]]
//! matrix = [2.718281828459045, 0.0, 0.0, 0.36787944117144233]  # SL(2,R), row-major
//! source = { angle = 3.141592653589793, half_angle = 0.705026843555238 }
//! target = { center = [1.3130352854993312, 0.0], radius = 0.8509181282393214 }
//! ```
//!
//! The generator maps the exterior of `source` onto the interior of
//! `target`. A disk is given either by its Euclidean center and radius in the
//! ball or by the angle and half-angle of its boundary arc.

use escapelab::geometry::{Isometry, C64};
use escapelab::schottky::{Disk, SchottkyGroup};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDescription {
    pub n: usize,
    #[serde(default, rename = "generator")]
    pub generators: Vec<GeneratorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub matrix: [f64; 4],
    pub source: DiskSpec,
    pub target: DiskSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiskSpec {
    Circle { center: [f64; 2], radius: f64 },
    Arc { angle: f64, half_angle: f64 },
}

impl DiskSpec {
    pub fn disk(&self) -> Result<Disk, HarnessError> {
        match *self {
            DiskSpec::Circle { center, radius } => Ok(Disk::new(C64::new(center[0], center[1]), radius)?),
            DiskSpec::Arc { angle, half_angle } => {
                if !(half_angle > 0.0 && half_angle < std::f64::consts::FRAC_PI_2) {
                    return Err(escapelab::Error::InvalidGroup(format!(
                        "arc half-angle {half_angle} must lie in (0, pi/2)"
                    ))
                    .into());
                }
                Ok(Disk::from_arc(angle, half_angle))
            }
        }
    }
}

impl GroupDescription {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(format!("group description: {}", e.message())))
    }

    pub fn build(&self) -> Result<SchottkyGroup, HarnessError> {
        if self.n != 1 {
            return Err(escapelab::Error::Unsupported(format!(
                "group description has n = {}; only n = 1 is implemented",
                self.n
            ))
            .into());
        }
        let mut generators = Vec::with_capacity(self.generators.len());
        let mut disks = Vec::with_capacity(self.generators.len());
        for g in &self.generators {
            generators.push(Isometry::from_matrix(g.matrix)?);
            disks.push((g.source.disk()?, g.target.disk()?));
        }
        Ok(SchottkyGroup::new(generators, disks)?)
    }
}
