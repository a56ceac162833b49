use std::collections::BTreeMap;
use std::path::PathBuf;

use promptpolicy::backend::parse_prompt;
use promptpolicy::discovery::{Candidate, PathType};
use promptpolicy::evidence::{EvidenceCard, Rationale};
use promptpolicy::ingest::CheckIn;
use promptpolicy::kg::Profile;
use promptpolicy::policy::Style;
use promptpolicy::prompt::{render_prompt, UserContext};
use promptpolicy::taxonomy::TimeSlot;

fn checkin(poi: &str, category: &str, utc: i64) -> CheckIn {
    CheckIn {
        user_id: "u17".into(),
        poi_id: poi.into(),
        category: category.into(),
        lat: 40.74,
        lon: -73.99,
        utc_time: utc,
        tz_offset_min: -240,
    }
}

fn rationale(text: &str, path_type: PathType, len: usize, via: &str) -> Rationale {
    Rationale { text: text.into(), path_type, score: 1.0 / len as f64, source_length: len, via: via.into() }
}

fn fixture() -> (UserContext, Vec<Candidate>, Vec<EvidenceCard>) {
    // 2012-04-13 15:30 local (UTC-4)
    let decision = 1_334_345_400 - 4 * 3600;
    let trajectory = vec![checkin("p12", "Office", 1_334_331_000), checkin("p40", "Restaurant", 1_334_340_000)];
    let profile = Profile {
        user_id: "u17".into(),
        top_categories: vec!["Bar".into(), "Office".into()],
        hotspot_grids: vec!["g3".into()],
        mobility_radius_km: 4.25,
        preferred_timeslots: vec![TimeSlot::parse("Weekday-Evening").unwrap()],
        preferred_intents: vec!["social".into(), "afterMeal".into()],
        category_share: BTreeMap::new(),
    };
    let ctx = UserContext {
        user_id: "u17".into(),
        slot: TimeSlot::from_local_seconds(decision),
        decision_time: decision,
        last: trajectory[1].clone(),
        profile,
        intents: vec!["afterMeal".into()],
        trajectory,
    };
    let candidates = vec![
        Candidate { poi_id: "p7".into(), category: "Bar".into(), distance_km: 0.8 },
        Candidate { poi_id: "p9".into(), category: "Cafe".into(), distance_km: 1.234 },
    ];
    let cards = vec![
        EvidenceCard {
            poi_id: "p7".into(),
            rationales: vec![
                rationale("Matches AfterMeal intent via Bar category", PathType::Intent, 4, "User→Profile→Intent→Category"),
                rationale("Located near your last visit p40", PathType::Near, 2, "User→POI"),
            ],
        },
        EvidenceCard {
            poi_id: "p9".into(),
            rationales: vec![rationale("Shares g3 grid cell with your past visits", PathType::Grid, 3, "User→POI→Grid")],
        },
    ];
    (ctx, candidates, cards)
}

fn check(name: &str, rendered: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&path, rendered).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("{} missing; run with BLESS=1", path.display()));
    assert_eq!(rendered, expected, "rendered prompt drifted from {}", path.display());
}

fn full_text(style: Style) -> String {
    let (ctx, cands, cards) = fixture();
    let p = render_prompt(&ctx, &cands, &cards, style).unwrap();
    format!("[system]\n{}\n[user]\n{}\n", p.system_text, p.user_text)
}

#[test]
fn two_candidate_concise() {
    check("two_candidates_concise.txt", &full_text(Style::Concise));
}

#[test]
fn two_candidate_rationale_rich() {
    check("two_candidates_rich.txt", &full_text(Style::RationaleRich));
}

#[test]
fn rendered_prompt_reads_back() {
    let (ctx, cands, cards) = fixture();
    let p = render_prompt(&ctx, &cands, &cards, Style::Concise).unwrap();
    let parsed = parse_prompt(&p.system_text, &p.user_text).unwrap();
    assert_eq!(parsed.user_id, "u17");
    assert_eq!(parsed.intents, ["afterMeal"]);
    assert_eq!(parsed.target_slot, Some(ctx.slot));
    assert_eq!(parsed.candidates.len(), 2);
    assert_eq!(parsed.candidates[1].distance_km, 1.23);
    assert_eq!(parsed.cards["p7"], ["Matches AfterMeal intent via Bar category", "Located near your last visit p40"]);
}

#[test]
fn empty_candidate_set_is_rejected() {
    let (ctx, _, _) = fixture();
    assert!(render_prompt(&ctx, &[], &[], Style::Concise).is_err());
}
