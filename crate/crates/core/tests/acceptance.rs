//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Runs without a test harness so the
//! report is always visible.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

use promptpolicy::backend::{generate_synthetic_world, Backend, OracleParams, SimOracle, WorldConfig};
use promptpolicy::cli::{preprocess, simulate_and_evaluate};
use promptpolicy::config::RunConfig;
use promptpolicy::discovery::{
    discover_all, enumerate_all_paths, Candidate, DiscoveryConfig, NearVariant, PathTemplate, TemplateName,
};
use promptpolicy::eval::{EvalMode, EvalReport};
use promptpolicy::evidence::{EvidenceCard, Rationale};
use promptpolicy::ingest::{chronological_split, filter_sparse, segment_all, CheckIn, Trajectory};
use promptpolicy::kg::{build_world_graph, haversine, Direction, EntityKind, EntityRef, KgBuilder, KgConfig, Profile, Relation};
use promptpolicy::policy::{
    action_space, combine, cost, diversity, ActionGrid, Distractors, PolicyConfig, PosteriorState, State, Style,
};
use promptpolicy::prompt::{parse_response, render_prompt, UserContext};
use promptpolicy::taxonomy::{IntentVocabulary, TimeSlot};

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

// ---------------------------------------------------------------- reward

fn reward_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut in_range = true;
    for _ in 0..10_000 {
        let (a, d, v, c): (f64, f64, f64, f64) = (rng.random(), rng.random(), rng.random(), rng.random());
        let r = combine(a, d, v, c);
        let reference = 0.25 * a + 0.25 * d - 0.25 * v - 0.25 * c;
        worst = worst.max((r - reference).abs());
        in_range &= (-0.5..=0.5).contains(&r);
    }
    // corners
    in_range &= combine(1.0, 1.0, 0.0, 0.0) == 0.5 && combine(0.0, 0.0, 1.0, 1.0) == -0.5;
    outcome(worst <= 1e-12 && in_range, format!("max |Δ| = {worst:.1e}, range ok = {in_range}"))
}

fn diversity_and_cost() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cats = ["Bar", "Cafe", "Gym", "Park", "Office", "Museum", "Hotel", "Bakery"];
    let mut mismatches = 0;
    for _ in 0..1_000 {
        let k = rng.random_range(1..=10);
        let size = rng.random_range(1..=cats.len());
        let pool: Vec<&str> = cats.choose_multiple(&mut rng, size).copied().collect();
        let top: Vec<&str> = (0..k.min(rng.random_range(0..=k))).map(|_| *pool.choose(&mut rng).unwrap()).collect();
        // brute force: count distinct by pairwise scan
        let mut distinct = 0;
        for (i, c) in top.iter().enumerate() {
            if !top[..i].contains(c) {
                distinct += 1;
            }
        }
        let denom = if k < pool.len() { k } else { pool.len() };
        let expected = distinct as f64 / denom as f64;
        if diversity(&top, pool.len(), k) != expected {
            mismatches += 1;
        }

        let tokens = rng.random_range(0..12_000usize);
        let tau = [1000.0, 2500.0, 4000.0, 8000.0][rng.random_range(0..4)];
        let expected = if tokens as f64 >= tau { 1.0 } else { tokens as f64 / tau };
        if cost(tokens, tau) != expected {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches over 1000 lists and 1000 token counts"))
}

// ------------------------------------------------------------- discovery

type Triples = BTreeSet<(EntityRef, Relation, EntityRef)>;

struct RandomKg {
    triples: Triples,
    coords: BTreeMap<String, (f64, f64)>,
    pois: Vec<String>,
}

fn random_kg(rng: &mut ChaCha8Rng) -> RandomKg {
    let mut count = |lo: usize, hi: usize| rng.random_range(lo..=hi);
    let sizes = [
        (EntityKind::User, count(1, 3)),
        (EntityKind::Profile, count(1, 3)),
        (EntityKind::Intent, count(1, 4)),
        (EntityKind::Category, count(1, 5)),
        (EntityKind::Grid, count(1, 4)),
        (EntityKind::TimeSlot, count(1, 4)),
        (EntityKind::Poi, count(2, 20)),
    ];
    let mut nodes: BTreeMap<EntityKind, Vec<EntityRef>> = BTreeMap::new();
    for (kind, n) in sizes {
        nodes.insert(kind, (0..n).map(|i| EntityRef::new(kind, format!("{}{i}", kind.label()))).collect());
    }
    let mut coords = BTreeMap::new();
    for p in &nodes[&EntityKind::Poi] {
        coords.insert(p.id.clone(), (40.7 + rng.random_range(-0.15..0.15), -74.0 + rng.random_range(-0.15..0.15)));
    }
    let density = rng.random_range(0.1..0.5);
    let mut triples = Triples::new();
    for rel in Relation::ALL {
        let (hk, tk) = rel.signature();
        for h in &nodes[&hk] {
            for t in &nodes[&tk] {
                if (rel == Relation::Near && h == t) || !rng.random_bool(density) {
                    continue;
                }
                triples.insert((h.clone(), rel, t.clone()));
                if rel == Relation::Near {
                    triples.insert((t.clone(), rel, h.clone()));
                }
            }
        }
    }
    RandomKg { triples, coords, pois: nodes[&EntityKind::Poi].iter().map(|e| e.id.clone()).collect() }
}

/// All walks following `template` from `start`, by direct scan of the triple set.
fn brute_walks(triples: &Triples, start: &EntityRef, template: &PathTemplate) -> Vec<Vec<EntityRef>> {
    let mut walks = vec![vec![start.clone()]];
    for (rel, dir) in &template.steps {
        let mut next = Vec::new();
        for w in &walks {
            let here = w.last().unwrap();
            for (h, r, t) in triples {
                if r != rel {
                    continue;
                }
                let step = match dir {
                    Direction::Out if h == here => Some(t),
                    Direction::In if t == here => Some(h),
                    _ => None,
                };
                if let Some(n) = step {
                    let mut w2 = w.clone();
                    w2.push(n.clone());
                    next.push(w2);
                }
            }
        }
        walks = next;
    }
    walks
}

fn discovery_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    let mut nonempty = 0;
    for trial in 0..1_000 {
        let rk = random_kg(&mut rng);
        let mut b = KgBuilder::new();
        let user = EntityRef::user(format!("{}0", EntityKind::User.label()));
        b.add_entity(user.clone());
        for (id, (lat, lon)) in &rk.coords {
            b.add_poi(id, *lat, *lon);
        }
        for (h, r, t) in &rk.triples {
            b.add_triple(h.clone(), *r, t.clone()).unwrap();
        }
        let kg = b.build();
        let last_poi = rk.pois.choose(&mut rng).unwrap().clone();
        let (lat, lon) = rk.coords[&last_poi];
        let last = CheckIn {
            user_id: user.id.clone(),
            poi_id: last_poi.clone(),
            category: "Cafe".into(),
            lat,
            lon,
            utc_time: 0,
            tz_offset_min: 0,
        };
        let config = DiscoveryConfig {
            r_bar_km: rng.random_range(3.0..25.0),
            near_variant: if rng.random_bool(0.5) { NearVariant::Direct } else { NearVariant::ThenGrid },
            hop_cap: rng.random_range(2..=4),
            ..DiscoveryConfig::default()
        };
        let templates: Vec<PathTemplate> = [
            TemplateName::IntentCategory,
            TemplateName::GridProximity,
            TemplateName::SpatialNear,
            TemplateName::TemporalPref,
            TemplateName::CategoryAffinity,
        ]
        .into_iter()
        .map(|n| PathTemplate::new(n, config.near_variant))
        .filter(|t| t.steps.len() <= config.hop_cap)
        .collect();

        let mut expected_paths: BTreeMap<String, BTreeSet<(TemplateName, Vec<EntityRef>)>> = BTreeMap::new();
        for t in &templates {
            for w in brute_walks(&rk.triples, &user, t) {
                let end = w.last().unwrap().clone();
                expected_paths.entry(end.id.clone()).or_default().insert((t.name, w));
            }
        }
        let expected_cands: BTreeSet<String> = expected_paths
            .keys()
            .filter(|id| rk.coords.contains_key(*id) && **id != last_poi)
            .filter(|id| haversine((lat, lon), rk.coords[*id]) <= config.r_bar_km)
            .cloned()
            .collect();

        let got: Vec<Candidate> = discover_all(&kg, &user.id, &last, &config).unwrap();
        let got_set: BTreeSet<String> = got.iter().map(|c| c.poi_id.clone()).collect();
        if got_set.len() != got.len() || got_set != expected_cands {
            failures.push(format!("trial {trial}: candidates {got_set:?} vs {expected_cands:?}"));
            continue;
        }
        nonempty += usize::from(!got.is_empty());
        for poi in &rk.pois {
            let paths = enumerate_all_paths(&kg, &user.id, poi, &config).unwrap();
            let got: BTreeSet<(TemplateName, Vec<EntityRef>)> = paths.iter().map(|p| (p.template, p.nodes.clone())).collect();
            let want = expected_paths.get(poi).cloned().unwrap_or_default();
            if got.len() != paths.len() || got != want {
                failures.push(format!("trial {trial}: paths to {poi} differ ({} vs {})", got.len(), want.len()));
                break;
            }
        }
    }
    outcome(
        failures.is_empty(),
        match failures.first() {
            None => format!("1000 KGs, {nonempty} with candidates"),
            Some(f) => format!("{} failing KGs, first: {f}", failures.len()),
        },
    )
}

// -------------------------------------------------------------- kg near

fn kg_near_soundness() -> Outcome {
    let vocab = IntentVocabulary::default();
    let mut checked = 0usize;
    let mut near = 0usize;
    let mut errors = 0usize;
    for seed in 0..4u64 {
        let wc = WorldConfig {
            seed,
            n_users: 40,
            n_pois: 200,
            city_radius_km: 6.0 + 6.0 * seed as f64,
            ..WorldConfig::default()
        };
        let world = generate_synthetic_world(&wc, &vocab).unwrap();
        let mut cfg = RunConfig::default();
        cfg.ingest.min_poi_visits = 1;
        cfg.ingest.min_user_checkins = 1;
        let split = preprocess(&cfg, world.checkins.clone()).unwrap();
        let kc = KgConfig::default();
        let bundle = build_world_graph(&split, &vocab, &kc, seed).unwrap();
        let kg = &bundle.kg;
        let pois: Vec<EntityRef> = kg.entities_of(EntityKind::Poi).cloned().collect();
        for a in &pois {
            let neighbors: HashSet<EntityRef> = kg.neighbors(a, Relation::Near, Direction::Out).unwrap().into_iter().collect();
            for b in &pois {
                if a == b {
                    continue;
                }
                let d = haversine(kg.poi_coords(&a.id).unwrap(), kg.poi_coords(&b.id).unwrap());
                let want = d <= kc.r_near_km;
                checked += 1;
                near += usize::from(want);
                if neighbors.contains(b) != want {
                    errors += 1;
                }
            }
        }
    }
    outcome(errors == 0, format!("{checked} ordered pairs, {near} within 10 km, {errors} mismatches"))
}

// --------------------------------------------------------------- bandit

fn bandit_convergence() -> Outcome {
    let space = action_space(&ActionGrid::default()).unwrap();
    assert_eq!(space.len(), 120);
    let state = State { context: vec![], phi: vec![], psi: vec![] };
    let pc = PolicyConfig::default();
    let mut freqs = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        // one preferred level per block, 0.1 above its siblings
        let best = space.actions[rng.random_range(0..space.len())];
        let means: Vec<f64> = space
            .actions
            .iter()
            .map(|a| {
                let hits = [a.m == best.m, a.mixture == best.mixture, a.ordering == best.ordering, a.style == best.style];
                -0.2 + 0.1 * hits.iter().filter(|h| **h).count() as f64
            })
            .collect();
        let best_idx = space.index_of(&best).unwrap();
        let gap = means[best_idx] - means.iter().enumerate().filter(|(i, _)| *i != best_idx).map(|(_, m)| *m).fold(f64::MIN, f64::max);
        assert!((gap - 0.1).abs() < 1e-12);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut post = PosteriorState::new(space.dim(), pc.lambda_prior, pc.sigma2).unwrap();
        let mut hits = 0;
        for round in 0..2000 {
            let i = post.select(&space, &state, &mut rng).unwrap();
            let r = (means[i] + noise.sample(&mut rng)).clamp(-0.5, 0.5);
            post.update(&space.encode(&space.actions[i]), r).unwrap();
            if round >= 1500 && i == best_idx {
                hits += 1;
            }
        }
        freqs.push(hits as f64 / 500.0);
    }
    let med = median(freqs.clone());
    let min = freqs.iter().copied().fold(f64::MAX, f64::min);
    outcome(med >= 0.6, format!("median optimal-action frequency {med:.3} (min {min:.3}) over 20 seeds"))
}

// ------------------------------------------------------------------ e2e

fn acc1(report: &EvalReport, label: &str) -> f64 {
    report.row(label).and_then(|r| r.acc_at(1)).unwrap_or(0.0)
}

fn e2e_ablation() -> Outcome {
    let mut plc = Vec::new();
    let mut rtnl = Vec::new();
    let mut lines = Vec::new();
    for seed in 1..=5u64 {
        let cfg = RunConfig { seed, ..RunConfig::default() };
        let report = simulate_and_evaluate(&cfg, &[EvalMode::Full, EvalMode::WoPlc, EvalMode::WoRtnl]).unwrap();
        let (f, p, r) = (acc1(&report, "full"), acc1(&report, "wo_plc"), acc1(&report, "wo_rtnl"));
        plc.push(f / p.max(1e-12));
        rtnl.push(f / r.max(1e-12));
        lines.push(format!("{f:.3}/{p:.3}/{r:.3}"));
    }
    let (mp, mr) = (median(plc), median(rtnl));
    outcome(
        mp >= 1.3 && mr >= 1.15,
        format!("median full/wo_plc {mp:.2} (>= 1.3), full/wo_rtnl {mr:.2} (>= 1.15); per seed full/wo_plc/wo_rtnl {}", lines.join(" ")),
    )
}

/// World with distractor rationales past a 12-line informative cap and an
/// oracle whose reading degrades with prompt length.
fn stress_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig { seed, ..RunConfig::default() };
    cfg.world.n_users = 250;
    cfg.evidence.distractors = Some(Distractors { informative_cap: 12, count: 12 });
    cfg.oracle.gamma = 0.8;
    cfg.oracle.context_noise = 0.1;
    cfg.oracle.category_match = 1.0;
    cfg.oracle.time_match = 1.0;
    cfg
}

fn unimodal_interior(curve: &[f64]) -> bool {
    let peak = (0..curve.len()).max_by(|&a, &b| curve[a].total_cmp(&curve[b])).unwrap();
    peak > 0
        && peak + 1 < curve.len()
        && curve[..=peak].windows(2).all(|w| w[0] <= w[1])
        && curve[peak..].windows(2).all(|w| w[0] >= w[1])
        && curve[peak] > curve[0]
        && curve[peak] > curve[curve.len() - 1]
}

fn sensitivity_shape() -> Outcome {
    let mut good = 0;
    let mut lines = Vec::new();
    for seed in 1..=5u64 {
        let cfg = stress_config(seed);
        let report = simulate_and_evaluate(&cfg, &[EvalMode::Sensitivity]).unwrap();
        let curve: Vec<f64> = report.rows.iter().map(|r| r.acc_at(1).unwrap_or(0.0)).collect();
        let ok = curve.len() == 4 && unimodal_interior(&curve);
        good += usize::from(ok);
        lines.push(format!("[{}]{}", curve.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" "), if ok { "" } else { "*" }));
    }
    outcome(good >= 4, format!("{good}/5 seeds unimodal with interior peak over M=5,10,15,20: {}", lines.join(" ")))
}

// ------------------------------------------------------------- ordering

fn rationale(text: &str) -> Rationale {
    Rationale {
        text: text.into(),
        path_type: promptpolicy::discovery::PathType::Grid,
        score: 1.0 / 3.0,
        source_length: 3,
        via: String::new(),
    }
}

fn ordering_sensitivity() -> Outcome {
    let vocab = IntentVocabulary::default();
    let world = generate_synthetic_world(&WorldConfig { seed: 7, ..WorldConfig::default() }, &vocab).unwrap();
    let user = &world.users[0];
    let home: Vec<_> = world.pois.iter().filter(|p| p.cluster == user.hidden.home_grid).take(2).collect();
    if home.len() < 2 {
        return outcome(false, "world has fewer than two POIs in the user's home cluster");
    }
    let last = world.checkins.iter().find(|c| c.user_id == user.id).unwrap().clone();
    let slot = last.time_slot();
    let other_slot = TimeSlot::ALL.into_iter().find(|s| *s != slot).unwrap();
    let ctx = UserContext {
        user_id: user.id.clone(),
        slot,
        decision_time: last.local_time() + 3600,
        last: last.clone(),
        profile: Profile {
            user_id: user.id.clone(),
            top_categories: vec![],
            hotspot_grids: vec![],
            mobility_radius_km: 1.0,
            preferred_timeslots: vec![],
            preferred_intents: vec![],
            category_share: BTreeMap::new(),
        },
        intents: vec![],
        trajectory: vec![last],
    };
    let candidates: Vec<Candidate> =
        home.iter().map(|p| Candidate { poi_id: p.id.clone(), category: p.category.clone(), distance_km: 1.0 }).collect();
    let hit = "Shares G0 grid cell with your past visits";
    let filler = format!("Popular in {} time slot", other_slot.label());
    let card = |poi: &str, lines: [&str; 2]| EvidenceCard { poi_id: poi.into(), rationales: lines.iter().map(|l| rationale(l)).collect() };
    let (a, b) = (&candidates[0].poi_id, &candidates[1].poi_id);
    let first = vec![card(a, [hit, &filler]), card(b, [&filler, hit])];
    let second = vec![card(a, [&filler, hit]), card(b, [hit, &filler])];

    let rank = |gamma: f64, cards: &[EvidenceCard]| -> Vec<String> {
        let oracle = SimOracle::new(&world, OracleParams { gamma, ..OracleParams::default() }, vocab.clone());
        let prompt = render_prompt(&ctx, &candidates, cards, Style::Concise).unwrap();
        let reply = oracle.complete(&prompt).unwrap();
        parse_response(&reply, &[a, b]).unwrap().ranking
    };
    let (d1, d2) = (rank(0.6, &first), rank(0.6, &second));
    let (s1, s2) = (rank(1.0, &first), rank(1.0, &second));
    outcome(
        d1 != d2 && s1 == s2,
        format!("gamma 0.6: {d1:?} vs {d2:?}; gamma 1.0: {s1:?} vs {s2:?}"),
    )
}

// --------------------------------------------------------------- parser

/// Independent validity check for `{"ranking": [...]}` replies.
fn reference_valid(text: &str, candidates: &[String]) -> bool {
    let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(text.trim()) else { return false };
    if obj.len() != 1 {
        return false;
    }
    let Some(Value::Array(items)) = obj.get("ranking") else { return false };
    if items.is_empty() {
        return false;
    }
    let mut seen = Vec::new();
    for v in items {
        let id = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) if n.as_i64().is_some() || n.as_u64().is_some() => n.to_string(),
            _ => return false,
        };
        if seen.contains(&id) || !candidates.contains(&id) {
            return false;
        }
        seen.push(id);
    }
    true
}

fn fuzz_reply(rng: &mut ChaCha8Rng, candidates: &[String]) -> String {
    let pick_id = |rng: &mut ChaCha8Rng| -> Value {
        match rng.random_range(0..6) {
            0 => Value::from(rng.random_range(0..200u64)),
            1 => Value::from(format!("x{}", rng.random_range(0..5))),
            2 => Value::from(1.5),
            3 => Value::Null,
            _ => {
                let id = candidates.choose(rng).unwrap();
                if rng.random_bool(0.3) {
                    id.parse::<u64>().map(Value::from).unwrap_or_else(|_| Value::from(id.clone()))
                } else {
                    Value::from(id.clone())
                }
            }
        }
    };
    let n = rng.random_range(0..6);
    let items: Vec<Value> = (0..n).map(|_| pick_id(rng)).collect();
    let base = match rng.random_range(0..8) {
        0 => serde_json::json!({ "ranking": items }),
        1 => serde_json::json!({ "ranking": items, "why": "x" }),
        2 => serde_json::json!({ "rank": items }),
        3 => serde_json::json!({ "ranking": "7" }),
        4 => Value::Array(items),
        _ => {
            let mut ids: Vec<&String> = candidates.iter().collect();
            ids.truncate(rng.random_range(1..=ids.len()));
            serde_json::json!({ "ranking": ids })
        }
    };
    let mut text = base.to_string();
    match rng.random_range(0..6) {
        0 if !text.is_empty() => {
            let cut = rng.random_range(0..text.len());
            text.truncate(cut);
        }
        1 => {
            let bytes: Vec<u8> = (0..rng.random_range(0..40)).map(|_| rng.random_range(0x20..0x7f)).collect();
            text = String::from_utf8(bytes).unwrap();
        }
        2 => text = format!("Sure! {text}"),
        3 => text = format!("  \n{text}\n "),
        _ => {}
    }
    text
}

fn parser_robustness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut crashes, mut foreign, mut misclassified, mut invalid, mut accepted) = (0, 0, 0, 0, 0);
    for _ in 0..10_000 {
        let candidates: Vec<String> = (0..rng.random_range(1..6)).map(|i| format!("{}", 10 + i * 7)).collect();
        let text = fuzz_reply(&mut rng, &candidates);
        let result = std::panic::catch_unwind(|| parse_response(&text, &candidates));
        let Ok(result) = result else {
            crashes += 1;
            continue;
        };
        let valid = reference_valid(&text, &candidates);
        invalid += usize::from(!valid);
        match result {
            Ok(r) => {
                accepted += 1;
                if r.ranking.iter().any(|id| !candidates.contains(id)) {
                    foreign += 1;
                }
                if !valid {
                    misclassified += 1;
                }
            }
            Err(_) if valid => misclassified += 1,
            Err(_) => {}
        }
    }
    outcome(
        crashes == 0 && foreign == 0 && misclassified == 0,
        format!("{crashes} crashes, {foreign} foreign ids accepted, {misclassified} misclassified; {invalid} invalid, {accepted} accepted"),
    )
}

// -------------------------------------------------------- preprocessing

fn random_stream(rng: &mut ChaCha8Rng) -> Vec<CheckIn> {
    let users = rng.random_range(5..30);
    let pois = rng.random_range(5..40);
    let n = rng.random_range(100..1500);
    (0..n)
        .map(|_| {
            let u = rng.random_range(0..users);
            let p = rng.random_range(0..pois);
            CheckIn {
                user_id: format!("u{u}"),
                poi_id: format!("p{p}"),
                category: "Cafe".into(),
                lat: 40.7 + p as f64 * 1e-3,
                lon: -74.0,
                utc_time: 1_330_000_000 + rng.random_range(0..365 * 86_400),
                tz_offset_min: [-300, -240, 0, 540][u % 4],
            }
        })
        .collect()
}

fn preprocessing_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cfg = RunConfig::default();
    cfg.ingest.min_poi_visits = 3;
    cfg.ingest.min_user_checkins = 3;
    let ic = &cfg.ingest;
    let (mut off_fraction, mut unseen, mut mismatch, mut dropped) = (0, 0, 0, 0);
    let streams = 200;
    for _ in 0..streams {
        let stream = random_stream(&mut rng);
        let kept = filter_sparse(stream.clone(), ic.min_poi_visits, ic.min_user_checkins);
        let all: Vec<Trajectory> = segment_all(&kept, ic.window_h, ic.window_mode);
        let n = all.len();
        let Ok(split) = preprocess(&cfg, stream) else { continue };

        // reference cut over trajectories sorted by start time
        let mut sorted = all.clone();
        sorted.sort_by(|a, b| (a.start_time(), &a.user_id, &a.id).cmp(&(b.start_time(), &b.user_id, &b.id)));
        let n_train = split.train.len();
        let n_val_cut = (0.1 * n as f64).round() as usize;
        let n_test_cut = n - n_train - n_val_cut;
        for (got, want) in [(n_train, 0.8), (n_val_cut, 0.1), (n_test_cut, 0.1)] {
            if (got as f64 - want * n as f64).abs() > 1.0 {
                off_fraction += 1;
            }
        }
        let users: HashSet<&str> = split.train.iter().map(|t| t.user_id.as_str()).collect();
        let pois: HashSet<&str> = split.train.iter().flat_map(|t| &t.checkins).map(|c| c.poi_id.as_str()).collect();
        let known = |t: &Trajectory| users.contains(t.user_id.as_str()) && t.checkins.iter().all(|c| pois.contains(c.poi_id.as_str()));
        for t in split.val.iter().chain(&split.test) {
            if !known(t) {
                unseen += 1;
            }
        }
        let want_val: Vec<&Trajectory> = sorted[n_train..n_train + n_val_cut].iter().filter(|t| known(t)).collect();
        let want_test: Vec<&Trajectory> = sorted[n_train + n_val_cut..].iter().filter(|t| known(t)).collect();
        if split.train[..] != sorted[..n_train]
            || split.val.iter().collect::<Vec<_>>() != want_val
            || split.test.iter().collect::<Vec<_>>() != want_test
        {
            mismatch += 1;
        }
        dropped += n - split.train.len() - split.val.len() - split.test.len();

        // direct call on the same trajectories gives the same split
        if chronological_split(all, ic.split, ic.scope).ok().as_ref() != Some(&split) {
            mismatch += 1;
        }
    }
    outcome(
        off_fraction == 0 && unseen == 0 && mismatch == 0,
        format!(
            "{streams} streams: {off_fraction} cuts off by > 1, {unseen} unseen in val/test, {mismatch} mismatches vs reference, {dropped} trajectories dropped as unseen"
        ),
    )
}

// ----------------------------------------------------------------- main

fn main() {
    // `cargo test -- --list` and filters: behave like an ordinary target
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: Vec<Criterion> = vec![
        ("reward exactness", Some(Duration::from_secs(1)), reward_exactness),
        ("diversity/cost formulas", Some(Duration::from_secs(1)), diversity_and_cost),
        ("discovery equivalence", Some(Duration::from_secs(10)), discovery_equivalence),
        ("kg near soundness", None, kg_near_soundness),
        ("bandit convergence", Some(Duration::from_secs(60)), bandit_convergence),
        ("end-to-end ablation ordering", Some(Duration::from_secs(300)), e2e_ablation),
        ("sensitivity shape", Some(Duration::from_secs(300)), sensitivity_shape),
        ("ordering sensitivity", None, ordering_sensitivity),
        ("parser robustness", Some(Duration::from_secs(5)), parser_robustness),
        ("preprocessing protocol", None, preprocessing_protocol),
    ];
    let filter = args.iter().find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if filter.is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let result = check();
        let elapsed = t0.elapsed();
        let in_budget = budget.is_none_or(|b| elapsed <= b);
        let pass = result.pass && in_budget;
        failed += usize::from(!pass);
        let budget_note = match budget {
            Some(b) if !in_budget => format!(", over the {}s budget", b.as_secs()),
            _ => String::new(),
        };
        println!(
            "{} {name}: {} [{:.2}s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("SKIPPED real-data accuracy: needs licensed check-in datasets and a hosted model");
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
