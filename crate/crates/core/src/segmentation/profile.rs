use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of features entering the clustering distance.
pub const CLUSTER_FEATURES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfficeProfile {
    pub office_id: String,
    pub mean_temp_cold: Option<f64>,
    pub mean_temp_warm: Option<f64>,
    pub mean_co2: Option<f64>,
    pub fraction_open: f64,
    /// Reported only; not clustered.
    pub actions_per_day: f64,
}

impl OfficeProfile {
    pub fn features(&self) -> [Option<f64>; CLUSTER_FEATURES] {
        [
            self.mean_temp_cold,
            self.mean_temp_warm,
            self.mean_co2,
            Some(self.fraction_open),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction_open) {
            return Err(Error::Invalid(format!(
                "office `{}`: fraction_open {} outside [0, 1]",
                self.office_id, self.fraction_open
            )));
        }
        if !(self.actions_per_day.is_finite() && self.actions_per_day >= 0.0) {
            return Err(Error::Invalid(format!("office `{}`: actions_per_day", self.office_id)));
        }
        if self.features().iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("office `{}` profile", self.office_id)));
        }
        Ok(())
    }
}

/// Pairwise Euclidean distances on z-scored features. Absent features are
/// skipped and the squared distance is rescaled by `4 / shared`.
pub fn profile_distances(profiles: &[OfficeProfile]) -> Result<Array2<f64>> {
    for p in profiles {
        p.validate()?;
    }
    let n = profiles.len();
    let mut z = vec![[None; CLUSTER_FEATURES]; n];
    for f in 0..CLUSTER_FEATURES {
        let present: Vec<f64> = profiles.iter().filter_map(|p| p.features()[f]).collect();
        if present.is_empty() {
            continue;
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / present.len() as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for (i, p) in profiles.iter().enumerate() {
            z[i][f] = p.features()[f].map(|v| (v - mean) / sd);
        }
    }
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let mut sum = 0.0;
            let mut shared = 0;
            for f in 0..CLUSTER_FEATURES {
                if let (Some(a), Some(b)) = (z[i][f], z[j][f]) {
                    sum += (a - b).powi(2);
                    shared += 1;
                }
            }
            if shared == 0 {
                return Err(Error::Invalid(format!(
                    "offices `{}` and `{}` share no profile feature",
                    profiles[i].office_id, profiles[j].office_id
                )));
            }
            let dist = (sum * CLUSTER_FEATURES as f64 / shared as f64).sqrt();
            d[[i, j]] = dist;
            d[[j, i]] = dist;
        }
    }
    Ok(d)
}

pub fn read_profiles(path: &Path) -> Result<Vec<OfficeProfile>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_profiles_from(file)
}

pub fn read_profiles_from<R: std::io::Read>(reader: R) -> Result<Vec<OfficeProfile>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<OfficeProfile>().enumerate() {
        let p = rec.map_err(|e| Error::Parse {
            line: i as u64 + 2,
            message: e.to_string(),
        })?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_profiles(path: &Path, profiles: &[OfficeProfile]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_profiles_to(file, profiles)
}

pub fn write_profiles_to<W: std::io::Write>(writer: W, profiles: &[OfficeProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in profiles {
        w.serialize(p).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<profiles>", e))
}
