//! Synthetic city: clustered POIs, users with hidden preferences, and
//! check-in streams drawn from those preferences.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::ingest::CheckIn;
use crate::kg::geo::LocalProjection;
use crate::kg::haversine;
use crate::taxonomy::{category_group, CategoryGroup, IntentVocabulary, Period, TimeSlot};

const CATEGORIES: [&str; 16] = [
    "Restaurant",
    "Pizza Place",
    "Sushi Restaurant",
    "Coffee Shop",
    "Bakery",
    "Bar",
    "Pub",
    "Nightclub",
    "Clothing Store",
    "Grocery Store",
    "Office",
    "Subway Station",
    "Gym",
    "Park",
    "Movie Theater",
    "Museum",
];

/// Monday 2012-04-02 00:00 UTC.
const EPOCH_START: i64 = 1_333_324_800;
const TZ_OFFSET_MIN: i32 = -240;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    /// Set by the caller; the CLI derives it from the master seed.
    #[serde(skip)]
    pub seed: u64,
    pub n_users: usize,
    pub n_pois: usize,
    pub min_checkins: usize,
    pub max_checkins: usize,
    /// Median of the log-normal per-user check-in count.
    pub median_checkins: f64,
    /// Log-space spread of the per-user check-in count.
    pub activity_sigma: f64,
    pub n_clusters: usize,
    pub center: (f64, f64),
    /// Radius of the disc cluster centres are drawn from, km.
    pub city_radius_km: f64,
    /// Standard deviation of POI offsets around their cluster centre, km.
    pub cluster_spread_km: f64,
    pub days: u32,
    /// Probabilities of picking the user's routine category for the
    /// current period, then an intent-compatible one; the rest is uniform.
    pub p_preferred: f64,
    pub p_intent: f64,
    /// Distance decay scale for POI choice, km.
    pub decay_km: f64,
    /// Multiplier for POIs in the user's home cluster.
    pub home_bias: f64,
    /// Zipf exponent of POI popularity.
    pub zipf: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 42,
            n_users: 100,
            n_pois: 300,
            min_checkins: 10,
            max_checkins: 250,
            median_checkins: 30.0,
            activity_sigma: 0.9,
            n_clusters: 8,
            center: (40.73, -73.99),
            city_radius_km: 8.0,
            cluster_spread_km: 1.2,
            days: 360,
            p_preferred: 0.75,
            p_intent: 0.1,
            decay_km: 1.0,
            home_bias: 3.0,
            zipf: 0.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_users < 20 || self.n_pois < 50 {
            return Err(format!("world needs >= 20 users and >= 50 POIs, got {} and {}", self.n_users, self.n_pois));
        }
        if self.min_checkins < 2 || self.min_checkins > self.max_checkins {
            return Err("world check-in range must satisfy 2 <= min <= max".into());
        }
        if self.n_clusters == 0 || self.days == 0 {
            return Err("world needs at least one cluster and one day".into());
        }
        if !(0.0..=1.0).contains(&self.p_preferred) || !(0.0..=1.0).contains(&self.p_intent) || self.p_preferred + self.p_intent > 1.0 {
            return Err("world category probabilities must lie in [0, 1] and sum to <= 1".into());
        }
        for (name, v) in [
            ("median_checkins", self.median_checkins),
            ("activity_sigma", self.activity_sigma),
            ("city_radius_km", self.city_radius_km),
            ("cluster_spread_km", self.cluster_spread_km),
            ("decay_km", self.decay_km),
            ("home_bias", self.home_bias),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("world.{name} must be > 0, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenPreference {
    pub true_intent: String,
    /// Preferred category for each period of the day.
    pub routine: BTreeMap<Period, String>,
    pub home_grid: String,
}

impl HiddenPreference {
    pub fn preferred_for(&self, period: Period) -> Option<&str> {
        self.routine.get(&period).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimUser {
    pub id: String,
    pub hidden: HiddenPreference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPoi {
    pub id: String,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
    /// Planted cluster label, `H0`, `H1`, ...
    pub cluster: String,
    pub popularity: f64,
    pub open: Vec<Period>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorld {
    pub config: WorldConfig,
    pub clusters: Vec<(f64, f64)>,
    pub pois: Vec<SimPoi>,
    pub users: Vec<SimUser>,
    pub checkins: Vec<CheckIn>,
}

impl SimWorld {
    pub fn user(&self, id: &str) -> Option<&SimUser> {
        self.users.iter().find(|u| u.id == id)
    }

    pub fn poi_index(&self) -> BTreeMap<&str, &SimPoi> {
        self.pois.iter().map(|p| (p.id.as_str(), p)).collect()
    }
}

fn open_periods(group: CategoryGroup) -> Vec<Period> {
    use Period::*;
    match group {
        CategoryGroup::Food => vec![Afternoon, Evening],
        CategoryGroup::Cafe => vec![Morning, Afternoon],
        CategoryGroup::Nightlife => vec![Evening, Night],
        CategoryGroup::Shop => vec![Morning, Afternoon, Evening],
        CategoryGroup::Work => vec![Morning, Afternoon],
        CategoryGroup::Fitness => vec![Morning, Evening],
        CategoryGroup::Outdoors => vec![Morning, Afternoon],
        CategoryGroup::Entertainment => vec![Afternoon, Evening],
        CategoryGroup::Transit | CategoryGroup::Other => vec![Morning, Afternoon, Evening, Night],
    }
}

fn weighted_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut t = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if t < *w {
            return i;
        }
        t -= w;
    }
    weights.len() - 1
}

/// Builds a world from `config.seed`. Same config, same bytes.
pub fn generate_synthetic_world(config: &WorldConfig, vocab: &IntentVocabulary) -> Result<SimWorld, BackendError> {
    config.validate().map_err(BackendError::Config)?;
    if vocab.is_empty() {
        return Err(BackendError::Config("intent vocabulary is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let proj = LocalProjection::centered_on(&[config.center]);

    let clusters: Vec<(f64, f64)> = (0..config.n_clusters)
        .map(|_| {
            let r = config.city_radius_km * rng.random::<f64>().sqrt();
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            proj.unproject((r * a.cos(), r * a.sin()))
        })
        .collect();

    let spread = Normal::new(0.0, config.cluster_spread_km).expect("positive spread");
    let mut ranks: Vec<usize> = (1..=config.n_pois).collect();
    ranks.shuffle(&mut rng);
    let pois: Vec<SimPoi> = (0..config.n_pois)
        .map(|i| {
            let c = rng.random_range(0..config.n_clusters);
            let (cx, cy) = proj.project(clusters[c]);
            let (lat, lon) = proj.unproject((cx + spread.sample(&mut rng), cy + spread.sample(&mut rng)));
            let category = CATEGORIES[rng.random_range(0..CATEGORIES.len())].to_string();
            let open = open_periods(category_group(&category));
            SimPoi {
                id: format!("p{i:03}"),
                category,
                lat,
                lon,
                cluster: format!("H{c}"),
                popularity: 1.0 / (ranks[i] as f64).powf(config.zipf),
                open,
            }
        })
        .collect();

    let activity = LogNormal::new(config.median_checkins.ln(), config.activity_sigma).expect("valid lognormal");
    let mut users = Vec::with_capacity(config.n_users);
    let mut checkins = Vec::new();
    for u in 0..config.n_users {
        let true_intent = vocab.labels[rng.random_range(0..vocab.len())].clone();
        let served: Vec<&str> =
            CATEGORIES.iter().copied().filter(|c| vocab.serves_group(&true_intent, category_group(c))).collect();
        let mut routine: BTreeMap<Period, String> = BTreeMap::new();
        for period in [Period::Morning, Period::Afternoon, Period::Evening, Period::Night] {
            // distinct across periods while the open set allows it
            let mut open: Vec<&str> = CATEGORIES
                .iter()
                .copied()
                .filter(|c| open_periods(category_group(c)).contains(&period) && !routine.values().any(|v| v == c))
                .collect();
            if open.is_empty() {
                open = CATEGORIES.iter().copied().filter(|c| open_periods(category_group(c)).contains(&period)).collect();
            }
            let open_served: Vec<&str> = open.iter().copied().filter(|c| served.contains(c)).collect();
            let pick = if !open_served.is_empty() && rng.random::<f64>() < 0.5 { &open_served } else { &open };
            routine.insert(period, pick.choose(&mut rng).expect("every period has open categories").to_string());
        }
        let home = rng.random_range(0..config.n_clusters);
        let user = SimUser {
            id: format!("u{u:03}"),
            hidden: HiddenPreference { true_intent, routine, home_grid: format!("H{home}") },
        };

        let target = (activity.sample(&mut rng).round() as usize).clamp(config.min_checkins, config.max_checkins);
        let mut days: Vec<u32> = Vec::new();
        let mut produced = 0;
        let mut mine: Vec<CheckIn> = Vec::new();
        while produced < target {
            let day = rng.random_range(0..config.days);
            if days.contains(&day) {
                if days.len() as u32 >= config.days {
                    break;
                }
                continue;
            }
            days.push(day);
            let len = rng.random_range(2..=6usize).min(target - produced).max(2);
            let mut t_local = i64::from(day) * 86_400 + rng.random_range(7 * 3600..21 * 3600);
            let day_end = i64::from(day) * 86_400 + 86_400 + 6 * 3600;
            let mut at = clusters[home];
            let mut current: Option<&str> = None;
            for _ in 0..len {
                if t_local >= day_end {
                    break;
                }
                let slot = TimeSlot::from_local_seconds(EPOCH_START + t_local);
                let poi = choose_poi(&mut rng, config, &pois, &user, &served, slot.period, at, current);
                at = (poi.lat, poi.lon);
                current = Some(poi.id.as_str());
                mine.push(CheckIn {
                    user_id: user.id.clone(),
                    poi_id: poi.id.clone(),
                    category: poi.category.clone(),
                    lat: poi.lat,
                    lon: poi.lon,
                    utc_time: EPOCH_START + t_local - i64::from(TZ_OFFSET_MIN) * 60,
                    tz_offset_min: TZ_OFFSET_MIN,
                });
                produced += 1;
                t_local += rng.random_range(3600..3 * 3600);
            }
        }
        mine.sort_by_key(|c| c.utc_time);
        checkins.extend(mine);
        users.push(user);
    }
    checkins.sort_by(|a, b| a.utc_time.cmp(&b.utc_time).then_with(|| a.user_id.cmp(&b.user_id)));
    Ok(SimWorld { config: config.clone(), clusters, pois, users, checkins })
}

#[allow(clippy::too_many_arguments)]
fn choose_poi<'p, R: Rng + ?Sized>(
    rng: &mut R,
    config: &WorldConfig,
    pois: &'p [SimPoi],
    user: &SimUser,
    served: &[&str],
    period: Period,
    at: (f64, f64),
    current: Option<&str>,
) -> &'p SimPoi {
    // consecutive check-ins never repeat the venue
    let movable = |p: &SimPoi| Some(p.id.as_str()) != current;
    let open_in = |cat: &str| pois.iter().any(|p| p.category == cat && p.open.contains(&period) && movable(p));
    let roll = rng.random::<f64>();
    let category: String = if roll < config.p_preferred {
        user.hidden.preferred_for(period).unwrap_or(CATEGORIES[0]).to_string()
    } else if roll < config.p_preferred + config.p_intent && !served.is_empty() {
        let open: Vec<&str> = served.iter().copied().filter(|c| open_in(c)).collect();
        let from = if open.is_empty() { served } else { &open[..] };
        from.choose(rng).expect("nonempty").to_string()
    } else {
        CATEGORIES[rng.random_range(0..CATEGORIES.len())].to_string()
    };
    let mut pool: Vec<&SimPoi> =
        pois.iter().filter(|p| p.category == category && p.open.contains(&period) && movable(p)).collect();
    if pool.is_empty() {
        pool = pois.iter().filter(|p| p.category == category && movable(p)).collect();
    }
    if pool.is_empty() {
        pool = pois.iter().filter(|p| movable(p)).collect();
    }
    let weights: Vec<f64> = pool
        .iter()
        .map(|p| {
            let d = haversine(at, (p.lat, p.lon));
            let home = if p.cluster == user.hidden.home_grid { config.home_bias } else { 1.0 };
            (-d / config.decay_km).exp() * home * p.popularity
        })
        .collect();
    pool[weighted_index(rng, &weights)]
}
