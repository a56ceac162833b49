//! Evidence cards: one-line rationales summarized from KG paths, and the
//! pruning/ordering step driven by the prompt policy.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::discovery::{EvidencePath, PathType};
use crate::kg::EntityKind;
use crate::policy::{Ordering, PromptAction};
use crate::taxonomy::IntentVocabulary;

pub const MAX_RATIONALE_CHARS: usize = 140;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationale {
    pub text: String,
    pub path_type: PathType,
    pub score: f64,
    pub source_length: usize,
    /// Entity-kind chain of the source path without its terminal POI,
    /// e.g. `User→Profile→Intent→Category`.
    pub via: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceCard {
    pub poi_id: String,
    pub rationales: Vec<Rationale>,
}

fn one_line(mut s: String) -> String {
    if s.contains(['\n', '\r']) {
        s = s.replace(['\n', '\r'], " ");
    }
    if s.chars().count() > MAX_RATIONALE_CHARS {
        s = s.chars().take(MAX_RATIONALE_CHARS).collect();
    }
    s
}

/// Fills the fixed sentence template of the path's type. `last_poi` is the
/// POI of the user's most recent check-in.
pub fn summarize_path(path: &EvidencePath, last_poi: &str) -> Rationale {
    let n = &path.nodes;
    let find = |kind: EntityKind| n.iter().find(|e| e.kind == kind).map(|e| e.id.as_str()).unwrap_or("?");
    let text = match path.path_type() {
        PathType::Intent => format!(
            "Matches {} intent via {} category",
            IntentVocabulary::display(find(EntityKind::Intent)),
            find(EntityKind::Category)
        ),
        PathType::Grid => format!("Shares {} grid cell with your past visits", find(EntityKind::Grid)),
        PathType::Near => {
            let via = n.get(1).map(|e| e.id.as_str()).unwrap_or("?");
            if via == last_poi {
                format!("Located near your last visit {via}")
            } else {
                "Located near your past visits".to_string()
            }
        }
        PathType::Time => format!("Popular in {} time slot", find(EntityKind::TimeSlot)),
        PathType::Category => format!("Same {} category as your past visits", find(EntityKind::Category)),
    };
    let via = n[..n.len().saturating_sub(1)].iter().map(|e| e.kind.label()).collect::<Vec<_>>().join("→");
    let length = path.length().max(1);
    Rationale {
        text: one_line(text),
        path_type: path.path_type(),
        score: 1.0 / length as f64,
        source_length: length,
        via,
    }
}

/// One rationale per path, de-duplicated by text (first occurrence kept).
pub fn build_card(poi_id: &str, paths: &[EvidencePath], last_poi: &str) -> EvidenceCard {
    let mut rationales: Vec<Rationale> = Vec::with_capacity(paths.len());
    for p in paths {
        let r = summarize_path(p, last_poi);
        if !rationales.iter().any(|x| x.text == r.text) {
            rationales.push(r);
        }
    }
    EvidenceCard { poi_id: poi_id.to_string(), rationales }
}

fn by_utility_desc(u: &[f64], idx: &mut [usize]) {
    // stable: equal utilities keep pool order
    idx.sort_by(|&a, &b| u[b].total_cmp(&u[a]));
}

/// Prunes the card to the top-M rationales by weighted utility and orders
/// them according to the action's scheme.
pub fn apply_prompt_policy(card: &EvidenceCard, action: &PromptAction) -> EvidenceCard {
    let pool = &card.rationales;
    let u: Vec<f64> = pool.iter().map(|r| action.mixture.weight(r.path_type) * r.score).collect();
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    by_utility_desc(&u, &mut idx);
    idx.truncate(action.m.max(2));

    let order: Vec<usize> = match action.ordering {
        Ordering::RelevanceFirst => idx,
        Ordering::IntentFirst => {
            let (mut first, rest): (Vec<usize>, Vec<usize>) =
                idx.into_iter().partition(|&i| pool[i].path_type == PathType::Intent);
            first.extend(rest);
            first
        }
        Ordering::DiversityFirst => {
            // idx is already utility-sorted, so types appear in order of their best member
            let mut groups: Vec<(PathType, Vec<usize>)> = Vec::new();
            for i in idx {
                match groups.iter_mut().find(|(t, _)| *t == pool[i].path_type) {
                    Some((_, g)) => g.push(i),
                    None => groups.push((pool[i].path_type, vec![i])),
                }
            }
            let mut out = Vec::new();
            let depth = groups.iter().map(|(_, g)| g.len()).max().unwrap_or(0);
            for level in 0..depth {
                for (_, g) in &groups {
                    if let Some(&i) = g.get(level) {
                        out.push(i);
                    }
                }
            }
            out
        }
    };
    EvidenceCard { poi_id: card.poi_id.clone(), rationales: order.into_iter().map(|i| pool[i].clone()).collect() }
}

/// Random selection and order of `m` rationales, ignoring utility.
pub fn apply_random_policy<R: Rng + ?Sized>(card: &EvidenceCard, m: usize, rng: &mut R) -> EvidenceCard {
    let mut rationales = card.rationales.clone();
    rationales.shuffle(rng);
    rationales.truncate(m.max(2));
    EvidenceCard { poi_id: card.poi_id.clone(), rationales }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::TemplateName;
    use crate::kg::EntityRef;
    use crate::policy::{Mixture, Style};

    fn r(t: PathType, score: f64) -> Rationale {
        Rationale { text: format!("{t} {score}"), path_type: t, score, source_length: 1, via: String::new() }
    }

    fn action(m: usize, ordering: Ordering) -> PromptAction {
        PromptAction { m, mixture: Mixture::Uniform, ordering, style: Style::Concise }
    }

    fn pool() -> EvidenceCard {
        EvidenceCard {
            poi_id: "p".into(),
            rationales: vec![
                r(PathType::Intent, 0.9),
                r(PathType::Near, 0.8),
                r(PathType::Time, 0.7),
                r(PathType::Grid, 0.6),
            ],
        }
    }

    fn types(c: &EvidenceCard) -> Vec<PathType> {
        c.rationales.iter().map(|r| r.path_type).collect()
    }

    #[test]
    fn intent_path_text() {
        use EntityKind::*;
        let path = EvidencePath {
            template: TemplateName::IntentCategory,
            nodes: vec![
                EntityRef::user("u"),
                EntityRef::new(Profile, "u"),
                EntityRef::new(Intent, "afterMeal"),
                EntityRef::new(Category, "Bar"),
                EntityRef::poi("10"),
            ],
        };
        let rat = summarize_path(&path, "x");
        assert_eq!(rat.text, "Matches AfterMeal intent via Bar category");
        assert_eq!(rat.score, 0.25);
        assert_eq!(rat.via, "User→Profile→Intent→Category");
        assert_eq!(summarize_path(&path, "x"), rat);
    }

    #[test]
    fn two_hop_score() {
        let path = EvidencePath {
            template: TemplateName::SpatialNear,
            nodes: vec![EntityRef::user("u"), EntityRef::poi("Joe's Pizza"), EntityRef::poi("10")],
        };
        let rat = summarize_path(&path, "Joe's Pizza");
        assert_eq!(rat.score, 0.5);
        assert_eq!(rat.text, "Located near your last visit Joe's Pizza");
    }

    #[test]
    fn card_dedups_text() {
        let p = EvidencePath {
            template: TemplateName::TemporalPref,
            nodes: vec![
                EntityRef::user("u"),
                EntityRef::new(EntityKind::Profile, "u"),
                EntityRef::new(EntityKind::TimeSlot, "Weekend-Evening"),
                EntityRef::poi("p"),
            ],
        };
        let card = build_card("p", &[p.clone(), p], "x");
        assert_eq!(card.rationales.len(), 1);
        assert!(build_card("p", &[], "x").rationales.is_empty());
    }

    #[test]
    fn relevance_identity_on_equal_scores() {
        let card = EvidenceCard {
            poi_id: "p".into(),
            rationales: vec![r(PathType::Time, 0.5), r(PathType::Grid, 0.5), r(PathType::Near, 0.5)],
        };
        assert_eq!(apply_prompt_policy(&card, &action(10, Ordering::RelevanceFirst)), card);
    }

    #[test]
    fn intent_first_example() {
        let out = apply_prompt_policy(&pool(), &action(3, Ordering::IntentFirst));
        assert_eq!(types(&out), vec![PathType::Intent, PathType::Near, PathType::Time]);
    }

    #[test]
    fn diversity_first_example() {
        let out = apply_prompt_policy(&pool(), &action(3, Ordering::DiversityFirst));
        assert_eq!(types(&out), vec![PathType::Intent, PathType::Near, PathType::Time]);
    }

    #[test]
    fn diversity_round_robin() {
        let card = EvidenceCard {
            poi_id: "p".into(),
            rationales: vec![
                r(PathType::Near, 0.9),
                r(PathType::Near, 0.8),
                r(PathType::Grid, 0.7),
                r(PathType::Near, 0.6),
                r(PathType::Grid, 0.5),
            ],
        };
        let out = apply_prompt_policy(&card, &action(10, Ordering::DiversityFirst));
        let scores: Vec<f64> = out.rationales.iter().map(|r| r.score).collect();
        assert_eq!(scores, vec![0.9, 0.7, 0.8, 0.5, 0.6]);
    }

    #[test]
    fn mixture_changes_selection() {
        let a = PromptAction { m: 2, mixture: Mixture::SpatialHeavy, ordering: Ordering::RelevanceFirst, style: Style::Concise };
        let out = apply_prompt_policy(&pool(), &a);
        // grid 0.4*0.6 = 0.24 beats near 0.15*0.8 = 0.12
        assert_eq!(types(&out), vec![PathType::Grid, PathType::Intent]);
    }

    #[test]
    fn random_policy_subset() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let out = apply_random_policy(&pool(), 3, &mut rng);
        assert_eq!(out.rationales.len(), 3);
        assert!(out.rationales.iter().all(|x| pool().rationales.contains(x)));
    }
}
