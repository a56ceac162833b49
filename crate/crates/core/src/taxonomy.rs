//! Shared vocabularies: time slots, coarse category groups, and intents.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Datelike, Timelike, Weekday};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DayType {
    Weekday,
    Weekend,
}

/// Period of the local day. Night wraps midnight: [23:00, 06:00).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Period {
    Morning,
    Afternoon,
    Evening,
    Night,
}

impl Period {
    pub fn from_hour(hour: u32) -> Self {
        match hour {
            6..=11 => Period::Morning,
            12..=17 => Period::Afternoon,
            18..=22 => Period::Evening,
            _ => Period::Night,
        }
    }
}

/// One of the eight day-type × period buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeSlot {
    pub day: DayType,
    pub period: Period,
}

impl TimeSlot {
    pub const ALL: [TimeSlot; 8] = [
        TimeSlot { day: DayType::Weekday, period: Period::Morning },
        TimeSlot { day: DayType::Weekday, period: Period::Afternoon },
        TimeSlot { day: DayType::Weekday, period: Period::Evening },
        TimeSlot { day: DayType::Weekday, period: Period::Night },
        TimeSlot { day: DayType::Weekend, period: Period::Morning },
        TimeSlot { day: DayType::Weekend, period: Period::Afternoon },
        TimeSlot { day: DayType::Weekend, period: Period::Evening },
        TimeSlot { day: DayType::Weekend, period: Period::Night },
    ];

    /// Bucket for a local timestamp (seconds, already shifted by the
    /// check-in's timezone offset).
    pub fn from_local_seconds(local: i64) -> Self {
        let dt = DateTime::from_timestamp(local, 0).unwrap_or_default();
        let day = match dt.weekday() {
            Weekday::Sat | Weekday::Sun => DayType::Weekend,
            _ => DayType::Weekday,
        };
        TimeSlot { day, period: Period::from_hour(dt.hour()) }
    }

    pub fn index(self) -> usize {
        let d = match self.day {
            DayType::Weekday => 0,
            DayType::Weekend => 4,
        };
        let p = match self.period {
            Period::Morning => 0,
            Period::Afternoon => 1,
            Period::Evening => 2,
            Period::Night => 3,
        };
        d + p
    }

    pub fn label(self) -> String {
        self.to_string()
    }

    pub fn parse(label: &str) -> Option<Self> {
        TimeSlot::ALL.into_iter().find(|s| s.to_string() == label)
    }
}

impl fmt::Display for TimeSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let day = match self.day {
            DayType::Weekday => "Weekday",
            DayType::Weekend => "Weekend",
        };
        let period = match self.period {
            Period::Morning => "Morning",
            Period::Afternoon => "Afternoon",
            Period::Evening => "Evening",
            Period::Night => "Night",
        };
        write!(f, "{day}-{period}")
    }
}

/// Coarse venue family used by intent rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryGroup {
    Food,
    Cafe,
    Nightlife,
    Shop,
    Work,
    Transit,
    Fitness,
    Outdoors,
    Entertainment,
    Other,
}

// Checked in order; the first group with a matching word wins.
const GROUP_KEYWORDS: &[(CategoryGroup, &[&str])] = &[
    (
        CategoryGroup::Cafe,
        &["coffee", "cafe", "café", "tea", "bakery", "dessert", "donut", "ice cream", "juice"],
    ),
    (
        CategoryGroup::Food,
        &[
            "restaurant", "pizza", "burger", "sushi", "food", "diner", "deli", "bbq", "steakhouse",
            "taco", "sandwich", "noodle", "ramen", "bistro", "eatery", "joint", "breakfast",
        ],
    ),
    (
        CategoryGroup::Nightlife,
        &["bar", "pub", "nightclub", "club", "lounge", "brewery", "nightlife", "speakeasy"],
    ),
    (
        CategoryGroup::Transit,
        &["subway", "station", "train", "bus", "airport", "transit", "ferry", "platform", "taxi"],
    ),
    (
        CategoryGroup::Work,
        &["office", "coworking", "cowork", "work", "conference", "bank", "building", "school", "university", "college"],
    ),
    (
        CategoryGroup::Fitness,
        &["gym", "fitness", "yoga", "athletic", "sports", "pool", "stadium"],
    ),
    (
        CategoryGroup::Outdoors,
        &["park", "plaza", "beach", "garden", "trail", "outdoors", "playground", "river", "scenic", "lookout"],
    ),
    (
        CategoryGroup::Entertainment,
        &["theater", "cinema", "movie", "museum", "music", "art", "arcade", "gallery", "concert", "venue"],
    ),
    (
        CategoryGroup::Shop,
        &["store", "shop", "mall", "market", "boutique", "grocery", "supermarket", "pharmacy"],
    ),
];

/// Maps a free-text category name to its group by whole-word keyword match.
pub fn category_group(name: &str) -> CategoryGroup {
    let lower = name.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric() && c != 'é')
        .filter(|w| !w.is_empty())
        .collect();
    for (group, keys) in GROUP_KEYWORDS {
        for key in *keys {
            let hit = if key.contains(' ') {
                lower.contains(key)
            } else {
                words.iter().any(|w| w == key || w.strip_suffix('s') == Some(key))
            };
            if hit {
                return *group;
            }
        }
    }
    CategoryGroup::Other
}

/// The fixed default labels.
pub const DEFAULT_INTENTS: [&str; 8] =
    ["afterMeal", "social", "relax", "shopping", "work", "transit", "dining", "exercise"];

/// Intent labels together with the category groups each intent is served by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentVocabulary {
    pub labels: Vec<String>,
    pub serves: BTreeMap<String, Vec<CategoryGroup>>,
}

impl Default for IntentVocabulary {
    fn default() -> Self {
        use CategoryGroup::*;
        let table: [(&str, &[CategoryGroup]); 8] = [
            ("afterMeal", &[Nightlife, Cafe, Entertainment]),
            ("social", &[Nightlife, Food, Entertainment]),
            ("relax", &[Outdoors, Cafe, Entertainment]),
            ("shopping", &[Shop]),
            ("work", &[Work]),
            ("transit", &[Transit]),
            ("dining", &[Food]),
            ("exercise", &[Fitness, Outdoors]),
        ];
        IntentVocabulary {
            labels: DEFAULT_INTENTS.iter().map(|s| s.to_string()).collect(),
            serves: table.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect(),
        }
    }
}

impl IntentVocabulary {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn serves_group(&self, intent: &str, group: CategoryGroup) -> bool {
        self.serves.get(intent).is_some_and(|g| g.contains(&group))
    }

    /// Intents a visit to this category expresses, in vocabulary order.
    pub fn intents_for_category(&self, category: &str) -> Vec<&str> {
        let group = category_group(category);
        self.labels
            .iter()
            .filter(|l| self.serves_group(l, group))
            .map(String::as_str)
            .collect()
    }

    /// Rule table used when no model is available or the model's answer is
    /// off-vocabulary. Keyed by the last venue's group and the time slot.
    pub fn fallback(&self, last_group: CategoryGroup, slot: TimeSlot) -> Vec<String> {
        let raw = fallback_rule(last_group, slot);
        let mut out: Vec<String> = raw
            .iter()
            .filter(|l| self.contains(l))
            .map(|l| l.to_string())
            .collect();
        if out.is_empty() {
            // custom vocabularies may not contain the table's labels
            if let Some(first) = self.labels.first() {
                out.push(first.clone());
            }
        }
        out
    }

    /// Display form used inside rationales, e.g. `afterMeal` -> `AfterMeal`.
    pub fn display(label: &str) -> String {
        let mut chars = label.chars();
        match chars.next() {
            Some(c) => c.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    }
}

fn fallback_rule(group: CategoryGroup, slot: TimeSlot) -> &'static [&'static str] {
    use CategoryGroup::*;
    use Period::*;
    let weekend = slot.day == DayType::Weekend;
    match (group, slot.period) {
        (Food, Morning) if weekend => &["relax", "shopping"],
        (Food, Morning) => &["work", "transit"],
        (Food, Afternoon) => &["afterMeal", "shopping"],
        (Food, Evening) => &["afterMeal", "social"],
        (Food, Night) => &["relax", "transit"],
        (Cafe, Morning) if weekend => &["relax", "exercise"],
        (Cafe, Morning) => &["work", "transit"],
        (Cafe, Afternoon) => &["relax", "shopping"],
        (Cafe, Evening) => &["dining", "social"],
        (Cafe, Night) => &["relax"],
        (Nightlife, Morning) => &["transit", "relax"],
        (Nightlife, Afternoon) => &["dining", "relax"],
        (Nightlife, Evening) => &["social", "dining"],
        (Nightlife, Night) => &["social", "transit"],
        (Shop, Morning) | (Shop, Afternoon) => &["shopping", "dining"],
        (Shop, Evening) => &["dining", "social"],
        (Shop, Night) => &["transit", "relax"],
        (Work, Morning) => &["work", "dining"],
        (Work, Afternoon) => &["dining", "work"],
        (Work, Evening) => &["dining", "social"],
        (Work, Night) => &["transit", "relax"],
        (Transit, Morning) if weekend => &["relax", "shopping"],
        (Transit, Morning) => &["work", "dining"],
        (Transit, Afternoon) => &["shopping", "dining"],
        (Transit, Evening) => &["dining", "social"],
        (Transit, Night) => &["relax"],
        (Fitness, Morning) => &["dining", "work"],
        (Fitness, Afternoon) => &["relax", "dining"],
        (Fitness, Evening) => &["dining", "relax"],
        (Fitness, Night) => &["relax"],
        (Outdoors, Morning) => &["exercise", "relax"],
        (Outdoors, Afternoon) => &["relax", "dining"],
        (Outdoors, Evening) => &["dining", "social"],
        (Outdoors, Night) => &["relax"],
        (Entertainment, Morning) => &["relax", "dining"],
        (Entertainment, Afternoon) => &["dining", "shopping"],
        (Entertainment, Evening) => &["afterMeal", "social"],
        (Entertainment, Night) => &["social", "transit"],
        (Other, Morning) if weekend => &["relax", "exercise"],
        (Other, Morning) => &["work", "transit"],
        (Other, Afternoon) => &["shopping", "dining"],
        (Other, Evening) => &["dining", "relax"],
        (Other, Night) => &["relax"],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_boundaries() {
        assert_eq!(Period::from_hour(5), Period::Night);
        assert_eq!(Period::from_hour(6), Period::Morning);
        assert_eq!(Period::from_hour(12), Period::Afternoon);
        assert_eq!(Period::from_hour(18), Period::Evening);
        assert_eq!(Period::from_hour(23), Period::Night);
        // 2012-04-14 was a Saturday
        let sat_evening = 1_334_426_400; // 2012-04-14 18:00:00
        assert_eq!(TimeSlot::from_local_seconds(sat_evening).to_string(), "Weekend-Evening");
        for (i, s) in TimeSlot::ALL.iter().enumerate() {
            assert_eq!(s.index(), i);
            assert_eq!(TimeSlot::parse(&s.label()), Some(*s));
        }
    }

    #[test]
    fn groups_from_names() {
        assert_eq!(category_group("Bar"), CategoryGroup::Nightlife);
        assert_eq!(category_group("Coffee Shop"), CategoryGroup::Cafe);
        assert_eq!(category_group("Pizza Place"), CategoryGroup::Food);
        assert_eq!(category_group("Sushi Bar"), CategoryGroup::Food);
        assert_eq!(category_group("Subway"), CategoryGroup::Transit);
        assert_eq!(category_group("Gym / Fitness Center"), CategoryGroup::Fitness);
        assert_eq!(category_group("Clothing Store"), CategoryGroup::Shop);
        assert_eq!(category_group("Barbershop"), CategoryGroup::Other);
        assert_eq!(category_group("Home (private)"), CategoryGroup::Other);
    }

    #[test]
    fn restaurant_evening_fallback() {
        let v = IntentVocabulary::default();
        let slot = TimeSlot { day: DayType::Weekday, period: Period::Evening };
        assert_eq!(v.fallback(category_group("Restaurant"), slot), vec!["afterMeal", "social"]);
    }

    #[test]
    fn bar_serves_after_meal() {
        let v = IntentVocabulary::default();
        assert!(v.intents_for_category("Bar").contains(&"afterMeal"));
        assert_eq!(IntentVocabulary::display("afterMeal"), "AfterMeal");
    }
}
