use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cohort::CohortLabel;
use super::metrics::{acc_at_k, candidate_recall, mean_reward, violation_rate};
use super::runner::EvalMode;
use super::EvalError;
use crate::meta::ArtifactMeta;
use crate::policy::EpisodeRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub episodes: usize,
    pub acc_at_1: f64,
}

/// Metrics of one arm (a mode, or one M of a sensitivity sweep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub label: String,
    pub mode: EvalMode,
    pub m: Option<usize>,
    pub episodes: usize,
    /// Keyed `acc@k`.
    pub acc: BTreeMap<String, f64>,
    pub candidate_recall: f64,
    pub violation_rate: f64,
    pub skip_rate: f64,
    pub mean_reward: Option<f64>,
    pub mean_prompt_tokens: f64,
    pub backend_calls: usize,
    /// Acc@1 by user-activity cohort and by test-trajectory-length cohort.
    pub cohorts: BTreeMap<String, CohortStats>,
}

impl ModeReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_records(
        label: &str,
        mode: EvalMode,
        m: Option<usize>,
        records: &[EpisodeRecord],
        ks: &[usize],
        activity: Option<&BTreeMap<String, CohortLabel>>,
        length: Option<&BTreeMap<String, CohortLabel>>,
        backend_calls: usize,
    ) -> Result<Self, EvalError> {
        let mut acc = BTreeMap::new();
        for &k in ks {
            acc.insert(format!("acc@{k}"), acc_at_k(records, k)?);
        }
        let mut groups: BTreeMap<&'static str, Vec<EpisodeRecord>> = BTreeMap::new();
        for r in records {
            if let Some(l) = activity.and_then(|a| a.get(&r.user_id)) {
                groups.entry(l.name()).or_default().push(r.clone());
            }
            if let Some(l) = length.and_then(|a| a.get(&r.trajectory_id)) {
                groups.entry(l.name()).or_default().push(r.clone());
            }
        }
        let mut cohorts = BTreeMap::new();
        for (name, rs) in groups {
            cohorts.insert(name.to_string(), CohortStats { episodes: rs.len(), acc_at_1: acc_at_k(&rs, 1)? });
        }
        let n = records.len() as f64;
        let prompted: Vec<f64> =
            records.iter().filter(|r| r.prompt_tokens > 0).map(|r| r.prompt_tokens as f64).collect();
        Ok(ModeReport {
            label: label.to_string(),
            mode,
            m,
            episodes: records.len(),
            acc,
            candidate_recall: candidate_recall(records)?,
            violation_rate: violation_rate(records),
            skip_rate: records.iter().filter(|r| r.skipped.is_some()).count() as f64 / n,
            mean_reward: mean_reward(records),
            mean_prompt_tokens: if prompted.is_empty() {
                0.0
            } else {
                prompted.iter().sum::<f64>() / prompted.len() as f64
            },
            backend_calls,
            cohorts,
        })
    }

    pub fn acc_at(&self, k: usize) -> Option<f64> {
        self.acc.get(&format!("acc@{k}")).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ArtifactMeta,
    pub rows: Vec<ModeReport>,
}

const COHORT_ORDER: [&str; 6] = ["inactive", "normal", "very_active", "short", "medium", "long"];

impl EvalReport {
    pub fn row(&self, label: &str) -> Option<&ModeReport> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Overall metrics table followed by a cohort Acc@1 table.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let keys: Vec<String> = self.rows.first().map(|r| r.acc.keys().cloned().collect()).unwrap_or_default();
        let mut keys = keys;
        keys.sort_by_key(|k| k.trim_start_matches("acc@").parse::<usize>().unwrap_or(usize::MAX));
        let _ = writeln!(
            s,
            "<!-- config {} seed {} version {} -->\n",
            self.meta.config_hash, self.meta.seed, self.meta.version
        );
        let _ = write!(s, "| Arm | Episodes |");
        for k in &keys {
            let _ = write!(s, " {} |", k.replace("acc", "Acc"));
        }
        let _ = writeln!(s, " Recall | Violation | Reward | Tokens |");
        let _ = writeln!(s, "|{}", "---|".repeat(keys.len() + 6));
        for r in &self.rows {
            let _ = write!(s, "| {} | {} |", r.label, r.episodes);
            for k in &keys {
                let _ = write!(s, " {:.4} |", r.acc.get(k).copied().unwrap_or(f64::NAN));
            }
            let reward = r.mean_reward.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                " {:.4} | {:.4} | {} | {:.0} |",
                r.candidate_recall, r.violation_rate, reward, r.mean_prompt_tokens
            );
        }
        let present: Vec<&str> =
            COHORT_ORDER.into_iter().filter(|c| self.rows.iter().any(|r| r.cohorts.contains_key(*c))).collect();
        if !present.is_empty() {
            let _ = write!(s, "\n| Arm |");
            for c in &present {
                let _ = write!(s, " {c} |");
            }
            let _ = writeln!(s, "\n|{}", "---|".repeat(present.len() + 1));
            for r in &self.rows {
                let _ = write!(s, "| {} |", r.label);
                for c in &present {
                    match r.cohorts.get(*c) {
                        Some(st) => {
                            let _ = write!(s, " {:.4} (n={}) |", st.acc_at_1, st.episodes);
                        }
                        None => s.push_str(" - |"),
                    }
                }
                s.push('\n');
            }
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV line per episode record, tagged with its arm label.
pub fn records_csv(records: &[(String, EpisodeRecord)]) -> String {
    let mut s = String::from(
        "arm,user_id,trajectory_id,step,decision_time,n_candidates,m,mixture,ordering,style,\
         prompt_tokens,rank,violation,reward,candidate_recall,skipped\n",
    );
    let enum_name = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
    for (arm, r) in records {
        let (m, mixture, ordering, style) = match &r.action {
            Some(a) => (
                a.m.to_string(),
                enum_name(serde_json::to_value(a.mixture).unwrap_or_default()),
                enum_name(serde_json::to_value(a.ordering).unwrap_or_default()),
                enum_name(serde_json::to_value(a.style).unwrap_or_default()),
            ),
            None => Default::default(),
        };
        let violation = r.violation.as_ref().map(|v| enum_name(serde_json::to_value(v.reason).unwrap_or_default()));
        let fields = [
            csv_field(arm),
            csv_field(&r.user_id),
            csv_field(&r.trajectory_id),
            r.step.to_string(),
            r.decision_time.to_string(),
            r.n_candidates.to_string(),
            m,
            mixture,
            ordering,
            style,
            r.prompt_tokens.to_string(),
            r.rank.map(|v| v.to_string()).unwrap_or_default(),
            violation.unwrap_or_default(),
            r.reward.map(|v| format!("{:.6}", v.r)).unwrap_or_default(),
            r.candidate_recall.to_string(),
            csv_field(r.skipped.as_deref().unwrap_or("")),
        ];
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}
