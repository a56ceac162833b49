use std::fmt;

use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::discovery::PathType;

/// Named path-type mixtures. A heavy mixture puts 0.4 on its focus type and
/// 0.15 on each of the other four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mixture {
    Uniform,
    IntentHeavy,
    SpatialHeavy,
    TemporalHeavy,
    CategoryHeavy,
}

impl Mixture {
    pub const ALL: [Mixture; 5] =
        [Mixture::Uniform, Mixture::IntentHeavy, Mixture::SpatialHeavy, Mixture::TemporalHeavy, Mixture::CategoryHeavy];

    fn focus(self) -> Option<PathType> {
        match self {
            Mixture::Uniform => None,
            Mixture::IntentHeavy => Some(PathType::Intent),
            Mixture::SpatialHeavy => Some(PathType::Grid),
            Mixture::TemporalHeavy => Some(PathType::Time),
            Mixture::CategoryHeavy => Some(PathType::Category),
        }
    }

    pub fn weight(self, t: PathType) -> f64 {
        match self.focus() {
            None => 0.2,
            Some(f) if f == t => 0.4,
            Some(_) => 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    RelevanceFirst,
    DiversityFirst,
    IntentFirst,
}

impl Ordering {
    pub const ALL: [Ordering; 3] = [Ordering::RelevanceFirst, Ordering::DiversityFirst, Ordering::IntentFirst];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Style {
    Concise,
    RationaleRich,
}

impl Style {
    pub const ALL: [Style; 2] = [Style::Concise, Style::RationaleRich];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptAction {
    pub m: usize,
    pub mixture: Mixture,
    pub ordering: Ordering,
    pub style: Style,
}

impl fmt::Display for PromptAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M={} {:?} {:?} {:?}", self.m, self.mixture, self.ordering, self.style)
    }
}

/// The per-dimension grids whose Cartesian product is the action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionGrid {
    pub m: Vec<usize>,
    pub mixtures: Vec<Mixture>,
    pub orderings: Vec<Ordering>,
    pub styles: Vec<Style>,
}

impl Default for ActionGrid {
    fn default() -> Self {
        ActionGrid {
            m: vec![5, 10, 15, 20],
            mixtures: Mixture::ALL.to_vec(),
            orderings: Ordering::ALL.to_vec(),
            styles: Style::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub grid: ActionGrid,
    pub actions: Vec<PromptAction>,
}

/// Enumerates the grid: M outermost, then mixture, ordering, style.
pub fn action_space(grid: &ActionGrid) -> Result<ActionSpace, PolicyError> {
    if grid.m.is_empty() || grid.mixtures.is_empty() || grid.orderings.is_empty() || grid.styles.is_empty() {
        return Err(PolicyError::EmptyGrid);
    }
    if grid.m.iter().any(|&m| m < 2) {
        return Err(PolicyError::Config("every M in the grid must be >= 2".into()));
    }
    let mut actions = Vec::new();
    for &m in &grid.m {
        for &mixture in &grid.mixtures {
            for &ordering in &grid.orderings {
                for &style in &grid.styles {
                    actions.push(PromptAction { m, mixture, ordering, style });
                }
            }
        }
    }
    Ok(ActionSpace { grid: grid.clone(), actions })
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Width of the action one-hot block.
    pub fn dim(&self) -> usize {
        self.grid.m.len() + self.grid.mixtures.len() + self.grid.orderings.len() + self.grid.styles.len()
    }

    pub fn index_of(&self, a: &PromptAction) -> Option<usize> {
        self.actions.iter().position(|x| x == a)
    }

    /// One-hot blocks [M | mixture | ordering | style]. Values outside the
    /// grid leave their block zero.
    pub fn encode(&self, a: &PromptAction) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        let mut off = 0;
        let mut set = |pos: Option<usize>, width: usize| {
            if let Some(p) = pos {
                v[off + p] = 1.0;
            }
            off += width;
        };
        set(self.grid.m.iter().position(|&m| m == a.m), self.grid.m.len());
        set(self.grid.mixtures.iter().position(|&x| x == a.mixture), self.grid.mixtures.len());
        set(self.grid.orderings.iter().position(|&x| x == a.ordering), self.grid.orderings.len());
        set(self.grid.styles.iter().position(|&x| x == a.style), self.grid.styles.len());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_space_has_120_actions() {
        let s = action_space(&ActionGrid::default()).unwrap();
        assert_eq!(s.len(), 120);
        assert_eq!(s.dim(), 14);
        assert_eq!(s.actions[0], PromptAction { m: 5, mixture: Mixture::Uniform, ordering: Ordering::RelevanceFirst, style: Style::Concise });
        assert_eq!(s, action_space(&ActionGrid::default()).unwrap());
    }

    #[test]
    fn single_m() {
        let g = ActionGrid { m: vec![15], ..Default::default() };
        assert_eq!(action_space(&g).unwrap().len(), 30);
    }

    #[test]
    fn empty_grid() {
        let g = ActionGrid { styles: vec![], ..Default::default() };
        assert!(matches!(action_space(&g), Err(PolicyError::EmptyGrid)));
    }

    #[test]
    fn mixtures_sum_to_one() {
        for m in Mixture::ALL {
            let s: f64 = PathType::ALL.iter().map(|t| m.weight(*t)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
