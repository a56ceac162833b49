use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingest::DatasetSplit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CohortAxis {
    /// Users ranked by their number of training trajectories.
    UserActivity,
    /// Test trajectories ranked by length.
    TrajectoryLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub axis: CohortAxis,
    pub bottom_frac: f64,
    pub top_frac: f64,
}

impl CohortSpec {
    pub fn new(axis: CohortAxis) -> Self {
        CohortSpec { axis, bottom_frac: 0.3, top_frac: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortLabel {
    Inactive,
    Normal,
    VeryActive,
    Short,
    Medium,
    Long,
}

impl CohortLabel {
    pub fn name(self) -> &'static str {
        match self {
            CohortLabel::Inactive => "inactive",
            CohortLabel::Normal => "normal",
            CohortLabel::VeryActive => "very_active",
            CohortLabel::Short => "short",
            CohortLabel::Medium => "medium",
            CohortLabel::Long => "long",
        }
    }
}

/// Bottom / middle / top partition of users (keyed by user id) or test
/// trajectories (keyed by trajectory id). Ties are broken by id.
pub fn split_cohorts(split: &DatasetSplit, spec: &CohortSpec) -> Result<BTreeMap<String, CohortLabel>, EvalError> {
    for f in [spec.bottom_frac, spec.top_frac] {
        if !(f > 0.0 && f <= 0.5) {
            return Err(EvalError::Config(format!("cohort fraction must be in (0, 0.5], got {f}")));
        }
    }
    let (mut units, labels): (Vec<(usize, String)>, _) = match spec.axis {
        CohortAxis::UserActivity => {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for t in &split.train {
                *counts.entry(t.user_id.as_str()).or_default() += 1;
            }
            (
                counts.into_iter().map(|(u, n)| (n, u.to_string())).collect(),
                [CohortLabel::Inactive, CohortLabel::Normal, CohortLabel::VeryActive],
            )
        }
        CohortAxis::TrajectoryLength => (
            split.test.iter().map(|t| (t.len(), t.id.clone())).collect(),
            [CohortLabel::Short, CohortLabel::Medium, CohortLabel::Long],
        ),
    };
    let n = units.len();
    if n < 4 {
        return Err(EvalError::TooSmall(n));
    }
    units.sort();
    let n_bottom = (n as f64 * spec.bottom_frac + 1e-9).floor() as usize;
    let n_top = (n as f64 * spec.top_frac + 1e-9).floor() as usize;
    Ok(units
        .into_iter()
        .enumerate()
        .map(|(i, (_, id))| {
            let label = if i < n_bottom {
                labels[0]
            } else if i >= n - n_top {
                labels[2]
            } else {
                labels[1]
            };
            (id, label)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CheckIn, Trajectory};

    fn traj(user: &str, i: usize, len: usize) -> Trajectory {
        let c = CheckIn {
            user_id: user.into(),
            poi_id: "p".into(),
            category: "Cafe".into(),
            lat: 0.0,
            lon: 0.0,
            utc_time: 0,
            tz_offset_min: 0,
        };
        Trajectory { id: format!("{user}#{i}"), user_id: user.into(), checkins: vec![c; len] }
    }

    #[test]
    fn percentile_cut() {
        let mut split = DatasetSplit::default();
        for u in 1..=10 {
            for i in 0..u {
                split.train.push(traj(&format!("u{u:02}"), i, 2));
            }
        }
        let c = split_cohorts(&split, &CohortSpec::new(CohortAxis::UserActivity)).unwrap();
        let inactive: Vec<&str> =
            c.iter().filter(|(_, l)| **l == CohortLabel::Inactive).map(|(u, _)| u.as_str()).collect();
        assert_eq!(inactive, ["u01", "u02", "u03"]);
        assert_eq!(c.values().filter(|l| **l == CohortLabel::VeryActive).count(), 3);
        assert_eq!(c["u10"], CohortLabel::VeryActive);
    }

    #[test]
    fn ties_break_by_id() {
        let mut split = DatasetSplit::default();
        for u in ["d", "b", "a", "c", "e"] {
            split.test.push(traj(u, 0, 3));
        }
        let c = split_cohorts(&split, &CohortSpec::new(CohortAxis::TrajectoryLength)).unwrap();
        assert_eq!(c["a#0"], CohortLabel::Short);
        assert_eq!(c["e#0"], CohortLabel::Long);
        assert_eq!(c["c#0"], CohortLabel::Medium);
    }

    #[test]
    fn too_small() {
        let mut split = DatasetSplit::default();
        split.test.push(traj("a", 0, 2));
        assert!(matches!(
            split_cohorts(&split, &CohortSpec::new(CohortAxis::TrajectoryLength)),
            Err(EvalError::TooSmall(1))
        ));
    }
}
