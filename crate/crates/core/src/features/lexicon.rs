use std::collections::HashSet;
use std::path::Path;
use std::sync::LazyLock;

use crate::error::Result;

/// Small case-insensitive gazetteers of cities, countries and zip codes.
#[derive(Clone, Debug, Default)]
pub struct Lexicons {
    cities: HashSet<String>,
    countries: HashSet<String>,
    zips: HashSet<String>,
}

static BUILTIN: LazyLock<Lexicons> = LazyLock::new(|| {
    Lexicons::from_strs(
        include_str!("../../data/cities.txt"),
        include_str!("../../data/countries.txt"),
        include_str!("../../data/zips.txt"),
    )
});

fn entries(s: &str) -> HashSet<String> {
    s.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_lowercase).collect()
}

impl Lexicons {
    pub fn builtin() -> &'static Lexicons {
        &BUILTIN
    }

    /// Each argument holds one entry per line.
    pub fn from_strs(cities: &str, countries: &str, zips: &str) -> Self {
        Lexicons { cities: entries(cities), countries: entries(countries), zips: entries(zips) }
    }

    pub fn from_files(cities: &Path, countries: &Path, zips: &Path) -> Result<Self> {
        Ok(Self::from_strs(&std::fs::read_to_string(cities)?, &std::fs::read_to_string(countries)?, &std::fs::read_to_string(zips)?))
    }

    pub fn is_city(&self, s: &str) -> bool {
        self.cities.contains(&s.trim().to_lowercase())
    }

    pub fn is_country(&self, s: &str) -> bool {
        self.countries.contains(&s.trim().to_lowercase())
    }

    pub fn is_zip(&self, s: &str) -> bool {
        self.zips.contains(&s.trim().to_lowercase())
    }

    /// Sorted entries, for callers that need to sample from a lexicon.
    pub fn cities(&self) -> Vec<&str> {
        sorted(&self.cities)
    }

    pub fn countries(&self) -> Vec<&str> {
        sorted(&self.countries)
    }

    pub fn zips(&self) -> Vec<&str> {
        sorted(&self.zips)
    }
}

fn sorted(set: &HashSet<String>) -> Vec<&str> {
    let mut v: Vec<&str> = set.iter().map(String::as_str).collect();
    v.sort_unstable();
    v
}
