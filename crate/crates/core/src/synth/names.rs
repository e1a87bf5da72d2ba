//! Business names, listing noise and schedules for generated cities.

use std::collections::BTreeMap;

use super::SplitMix64;
use crate::ingest::{BusinessType, DayHours, Source, MINUTES_PER_DAY};

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const ADJECTIVES: &[&str] = &[
    "Blue", "Golden", "Corner", "Little", "Green", "Royal", "Happy", "Silver", "Urban", "Olde", "Sunny", "North",
    "Grand", "Lucky", "Rose", "Iron", "Maple", "River", "Union", "Liberty",
];

/// A word unique to `index`, built from consonant-vowel syllables.
pub fn unique_token(index: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut n = index;
    let mut word = String::new();
    for _ in 0..3 {
        let s = n % base;
        n /= base;
        word.push(CONSONANTS[s / VOWELS.len()] as char);
        word.push(VOWELS[s % VOWELS.len()] as char);
    }
    while n > 0 {
        let s = n % base;
        n /= base;
        word.push(CONSONANTS[s / VOWELS.len()] as char);
        word.push(VOWELS[s % VOWELS.len()] as char);
    }
    let mut chars = word.chars();
    let first = chars.next().expect("non-empty").to_ascii_uppercase();
    std::iter::once(first).chain(chars).collect()
}

fn noun(ty: BusinessType) -> &'static str {
    match ty {
        BusinessType::Cafe => "Cafe",
        BusinessType::Convenience => "Mart",
        BusinessType::Gym => "Fitness",
        BusinessType::Institution => "Center",
        BusinessType::Liquor => "Spirits",
        BusinessType::Lodging => "Hotel",
        BusinessType::Nightlife => "Tavern",
        BusinessType::Pharmacy => "Pharmacy",
        BusinessType::Restaurant => "Kitchen",
        BusinessType::Retail => "Shop",
    }
}

pub fn business_name(index: usize, ty: BusinessType, rng: &mut SplitMix64) -> String {
    let adj = ADJECTIVES[rng.below(ADJECTIVES.len() as u64) as usize];
    format!("{} {} {}", unique_token(index), adj, noun(ty))
}

/// Per-listing name distortions. All keep the normalized token set at
/// similarity 0.75 or more, except typos, which replace one token.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NameNoise {
    pub case_rate: f64,
    pub accent_rate: f64,
    pub punctuation_rate: f64,
    pub suffix_rate: f64,
    pub typo_rate: f64,
}

impl Default for NameNoise {
    fn default() -> Self {
        NameNoise { case_rate: 0.3, accent_rate: 0.2, punctuation_rate: 0.2, suffix_rate: 0.15, typo_rate: 0.0 }
    }
}

fn accent(word: &str) -> String {
    word.chars()
        .map(|c| match c {
            'e' => 'é',
            'o' => 'ô',
            'a' => 'à',
            _ => c,
        })
        .collect()
}

pub fn noisy_name(name: &str, noise: &NameNoise, rng: &mut SplitMix64) -> String {
    let mut words: Vec<String> = name.split_whitespace().map(str::to_string).collect();
    if rng.bernoulli(noise.typo_rate) && words.len() > 1 {
        let k = 1 + rng.below(words.len() as u64 - 1) as usize;
        let mut chars: Vec<char> = words[k].chars().collect();
        let i = rng.below(chars.len() as u64) as usize;
        chars[i] = if chars[i] == 'x' { 'q' } else { 'x' };
        words[k] = chars.into_iter().collect();
    }
    if rng.bernoulli(noise.accent_rate) {
        let k = rng.below(words.len() as u64) as usize;
        words[k] = accent(&words[k]);
    }
    if rng.bernoulli(noise.case_rate) {
        if rng.bernoulli(0.5) {
            words.iter_mut().for_each(|w| *w = w.to_uppercase());
        } else {
            words.iter_mut().for_each(|w| *w = w.to_lowercase());
        }
    }
    let mut out = words.join(if rng.bernoulli(0.1) { "  " } else { " " });
    if rng.bernoulli(noise.punctuation_rate) {
        out.push(if rng.bernoulli(0.5) { '!' } else { '.' });
    }
    if rng.bernoulli(noise.suffix_rate) {
        out.push_str(" LLC");
    }
    out
}

/// Source-specific raw category labels for a business type.
pub fn raw_category(source: Source, ty: BusinessType) -> &'static str {
    use BusinessType::*;
    match (source, ty) {
        (Source::A, Cafe) => "cafe",
        (Source::A, Convenience) => "convenience_store",
        (Source::A, Gym) => "gym",
        (Source::A, Institution) => "bank",
        (Source::A, Liquor) => "liquor_store",
        (Source::A, Lodging) => "lodging",
        (Source::A, Nightlife) => "bar",
        (Source::A, Pharmacy) => "pharmacy",
        (Source::A, Restaurant) => "restaurant",
        (Source::A, Retail) => "store",
        (Source::B, Cafe) => "Coffee & Tea",
        (Source::B, Convenience) => "Convenience Stores",
        (Source::B, Gym) => "Fitness & Instruction",
        (Source::B, Institution) => "Banks & Credit Unions",
        (Source::B, Liquor) => "Beer, Wine & Spirits",
        (Source::B, Lodging) => "Hotels",
        (Source::B, Nightlife) => "Bars",
        (Source::B, Pharmacy) => "Drugstores",
        (Source::B, Restaurant) => "Restaurants",
        (Source::B, Retail) => "Shopping",
        (Source::C, Cafe) => "Coffee Shop",
        (Source::C, Convenience) => "Gas Station",
        (Source::C, Gym) => "Gym / Fitness Center",
        (Source::C, Institution) => "Post Office",
        (Source::C, Liquor) => "Liquor Store",
        (Source::C, Lodging) => "Hotel",
        (Source::C, Nightlife) => "Pub",
        (Source::C, Pharmacy) => "Pharmacy",
        (Source::C, Restaurant) => "Pizza Place",
        (Source::C, Retail) => "Clothing Store",
    }
}

pub fn category_rows() -> Vec<(String, BusinessType)> {
    let mut rows = Vec::new();
    for source in [Source::A, Source::B, Source::C] {
        for ty in BusinessType::ALL {
            let raw = raw_category(source, ty).to_string();
            if !rows.iter().any(|(r, t)| *r == raw && *t == ty) {
                rows.push((raw, ty));
            }
        }
    }
    rows
}

const DAYS: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

fn clock(minute: u32) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

/// Opening-hours text with one span per open day.
pub fn hours_text(days: &[usize], start: u32, length: u32) -> DayHours {
    assert!(length > 0 && length < MINUTES_PER_DAY && start < MINUTES_PER_DAY);
    let end = (start + length) % MINUTES_PER_DAY;
    let mut out: DayHours = BTreeMap::new();
    for (d, name) in DAYS.iter().enumerate() {
        let v = if days.contains(&d) { vec![format!("{}-{}", clock(start), clock(end))] } else { vec!["closed".to_string()] };
        out.insert(name.to_string(), v);
    }
    out
}

/// Hours profile for a generated business.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoursProfile {
    Typical,
    Long,
    Short,
    LateLong,
    LateShort,
}

pub fn sample_hours(profile: HoursProfile, rng: &mut SplitMix64) -> DayHours {
    let five = |rng: &mut SplitMix64, lo: u32, hi: u32| lo + 5 * rng.below(u64::from((hi - lo) / 5 + 1)) as u32;
    match profile {
        HoursProfile::Typical => {
            let open = 5 + rng.below(3) as usize;
            let days: Vec<usize> = (0..open).collect();
            hours_text(&days, five(rng, 6 * 60, 11 * 60), five(rng, 6 * 60, 13 * 60))
        }
        HoursProfile::Long => hours_text(&[0, 1, 2, 3, 4, 5, 6], five(rng, 5 * 60, 6 * 60), five(rng, 17 * 60, 19 * 60)),
        HoursProfile::Short => {
            let days: Vec<usize> = if rng.bernoulli(0.5) { vec![1, 3, 5] } else { vec![0, 2, 4, 5] };
            hours_text(&days, five(rng, 9 * 60, 11 * 60), five(rng, 5 * 60, 7 * 60))
        }
        HoursProfile::LateLong => hours_text(&[0, 1, 2, 3, 4, 5, 6], five(rng, 12 * 60, 13 * 60), five(rng, 17 * 60, 19 * 60)),
        HoursProfile::LateShort => hours_text(&[3, 4, 5], five(rng, 19 * 60, 20 * 60), five(rng, 4 * 60, 6 * 60)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{name_similarity, parse_hours, CategoryMap};

    #[test]
    fn tokens_are_unique() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..100_000 {
            assert!(seen.insert(unique_token(i).to_lowercase()), "{i}");
        }
    }

    #[test]
    fn noise_keeps_names_similar() {
        let mut rng = SplitMix64::new(1);
        for i in 0..2000 {
            let name = business_name(i, BusinessType::Cafe, &mut rng);
            let noisy = noisy_name(&name, &NameNoise::default(), &mut rng);
            assert!(name_similarity(&name, &noisy) >= 0.7, "{name} vs {noisy}");
            let other = business_name(i + 1, BusinessType::Cafe, &mut rng);
            assert!(name_similarity(&noisy, &other) < 0.7);
        }
    }

    #[test]
    fn hours_profiles_parse() {
        let mut rng = SplitMix64::new(2);
        for p in [HoursProfile::Typical, HoursProfile::Long, HoursProfile::Short, HoursProfile::LateLong, HoursProfile::LateShort] {
            let s = parse_hours(&sample_hours(p, &mut rng)).unwrap();
            assert!(s.total_minutes() > 0);
        }
        let late = parse_hours(&hours_text(&[5], 22 * 60, 4 * 60)).unwrap();
        assert_eq!(late.intervals(), &[(8520, 8760)]);
    }

    #[test]
    fn category_rows_are_mapped() {
        let mut map = CategoryMap::new();
        for (raw, ty) in category_rows() {
            map.insert(&raw, ty);
        }
        for s in [Source::A, Source::B, Source::C] {
            for ty in BusinessType::ALL {
                assert!(map.get(raw_category(s, ty)).unwrap().contains(&ty));
            }
        }
    }
}
