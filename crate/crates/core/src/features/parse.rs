//! Regular-expression field parsers that tolerate simple OCR confusions.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{FieldType, ParserKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseKind {
    Amount,
    Date,
    Integer,
    Percent,
    Currency,
    Id,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseResult {
    pub kind: ParseKind,
    pub canonical: String,
    pub ok: bool,
}

impl ParseResult {
    fn ok(kind: ParseKind, canonical: String) -> Self {
        ParseResult { kind, canonical, ok: true }
    }

    fn fail(kind: ParseKind) -> Self {
        ParseResult { kind, canonical: String::new(), ok: false }
    }

    pub fn value(&self) -> Option<&str> {
        self.ok.then_some(self.canonical.as_str())
    }
}

fn ocr_digit(c: char) -> Option<char> {
    match c {
        '0'..='9' => Some(c),
        'o' | 'O' => Some('0'),
        'l' | 'I' => Some('1'),
        'S' => Some('5'),
        'B' => Some('8'),
        _ => None,
    }
}

/// Replaces OCR look-alikes with digits inside runs that already hold a real digit.
pub fn ocr_digit_fix(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < chars.len() {
        if ocr_digit(chars[i]).is_none() {
            out.push(chars[i]);
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && ocr_digit(chars[i]).is_some() {
            i += 1;
        }
        let run = &chars[start..i];
        if run.iter().any(|c| c.is_ascii_digit()) {
            out.extend(run.iter().filter_map(|&c| ocr_digit(c)));
        } else {
            out.extend(run.iter());
        }
    }
    out
}

static AMOUNT_POINT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(-?)(\d{1,3}(?:,\d{3})+|\d{1,3}(?: \d{3})+|\d+)(?:\.(\d{1,2}))?$").unwrap());
static AMOUNT_COMMA: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(-?)(\d{1,3}(?:\.\d{3})+|\d{1,3}(?: \d{3})+|\d+)(?:,(\d{1,2}))?$").unwrap());

/// An amount in cents plus whether the text carried a fractional part.
pub fn amount_cents(s: &str) -> Option<(i64, bool)> {
    let fixed = ocr_digit_fix(s.trim());
    let caps = AMOUNT_POINT.captures(&fixed).or_else(|| AMOUNT_COMMA.captures(&fixed))?;
    let digits: String = caps[2].chars().filter(char::is_ascii_digit).collect();
    if digits.len() > 15 {
        return None;
    }
    let whole: i64 = digits.parse().ok()?;
    let (frac, fractional) = match caps.get(3) {
        Some(m) if m.as_str().len() == 1 => (m.as_str().parse::<i64>().ok()? * 10, true),
        Some(m) => (m.as_str().parse::<i64>().ok()?, true),
        None => (0, false),
    };
    let cents = whole * 100 + frac;
    Some((if &caps[1] == "-" { -cents } else { cents }, fractional))
}

pub fn format_cents(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let c = cents.unsigned_abs();
    format!("{sign}{}.{:02}", c / 100, c % 100)
}

pub fn parse_amount(s: &str) -> ParseResult {
    match amount_cents(s) {
        Some((cents, _)) => ParseResult::ok(ParseKind::Amount, format_cents(cents)),
        None => ParseResult::fail(ParseKind::Amount),
    }
}

static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d{1,18}$").unwrap());

pub fn parse_integer(s: &str) -> ParseResult {
    let fixed = ocr_digit_fix(s.trim());
    if !INTEGER.is_match(&fixed) {
        return ParseResult::fail(ParseKind::Integer);
    }
    let trimmed = fixed.trim_start_matches('0');
    let canonical = if trimmed.is_empty() { "0" } else { trimmed };
    ParseResult::ok(ParseKind::Integer, canonical.to_string())
}

static PERCENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{1,3})(?:[.,](\d{1,2}))?$").unwrap());

pub fn parse_percent(s: &str) -> ParseResult {
    let s = s.trim();
    let body = s.strip_suffix('%').unwrap_or(s).trim_end();
    let fixed = ocr_digit_fix(body);
    let Some(caps) = PERCENT.captures(&fixed) else {
        return ParseResult::fail(ParseKind::Percent);
    };
    let whole: u32 = caps[1].parse().unwrap_or(u32::MAX);
    let frac: u32 = match caps.get(2) {
        Some(m) if m.as_str().len() == 1 => m.as_str().parse::<u32>().unwrap_or(0) * 10,
        Some(m) => m.as_str().parse().unwrap_or(0),
        None => 0,
    };
    if whole > 100 || (whole == 100 && frac > 0) {
        return ParseResult::fail(ParseKind::Percent);
    }
    ParseResult::ok(ParseKind::Percent, format!("{whole}.{frac:02}"))
}

/// ISO-4217 codes recognised by the currency parser.
pub const CURRENCY_CODES: &[&str] = &[
    "AED", "AUD", "BGN", "BRL", "CAD", "CHF", "CNY", "CZK", "DKK", "EUR", "GBP", "HKD", "HUF", "IDR", "ILS", "INR", "ISK", "JPY", "KRW",
    "MXN", "MYR", "NOK", "NZD", "PHP", "PLN", "RON", "RUB", "SEK", "SGD", "THB", "TRY", "USD", "ZAR",
];

pub fn parse_currency(s: &str) -> ParseResult {
    let s = s.trim();
    let code = match s {
        "$" => Some("USD"),
        "€" => Some("EUR"),
        "£" => Some("GBP"),
        _ => {
            let upper = s.to_ascii_uppercase();
            CURRENCY_CODES.iter().copied().find(|c| *c == upper)
        }
    };
    match code {
        Some(c) => ParseResult::ok(ParseKind::Currency, c.to_string()),
        None => ParseResult::fail(ParseKind::Currency),
    }
}

const MONTHS: &[(&str, u32)] = &[
    ("january", 1),
    ("jan", 1),
    ("januar", 1),
    ("februar", 2),
    ("february", 2),
    ("feb", 2),
    ("march", 3),
    ("märz", 3),
    ("marts", 3),
    ("mar", 3),
    ("april", 4),
    ("apr", 4),
    ("may", 5),
    ("mai", 5),
    ("maj", 5),
    ("june", 6),
    ("juni", 6),
    ("jun", 6),
    ("july", 7),
    ("juli", 7),
    ("jul", 7),
    ("august", 8),
    ("aug", 8),
    ("september", 9),
    ("sep", 9),
    ("sept", 9),
    ("october", 10),
    ("oktober", 10),
    ("oct", 10),
    ("okt", 10),
    ("november", 11),
    ("nov", 11),
    ("december", 12),
    ("dezember", 12),
    ("dec", 12),
    ("dez", 12),
];

fn month_number(name: &str) -> Option<u32> {
    let name = name.trim_end_matches('.').to_lowercase();
    MONTHS.iter().find(|(m, _)| *m == name).map(|&(_, n)| n)
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 => 29,
        2 => 28,
        _ => 0,
    }
}

static DATE_ISO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{4})-(\d{2})-(\d{2})$").unwrap());
static DATE_DOTTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{1,2})\.(\d{1,2})\.(\d{4})$").unwrap());
static DATE_US: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{1,2})/(\d{1,2})/(\d{4})$").unwrap());
static DATE_LONG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{1,2})\.? ([^\d\s]+) (\d{4})$").unwrap());

pub fn parse_date(s: &str) -> ParseResult {
    let s = ocr_digit_fix(s.trim());
    let num = |m: &str| m.parse::<i64>().ok();
    let ymd = if let Some(c) = DATE_ISO.captures(&s) {
        (num(&c[1]), num(&c[2]), num(&c[3]))
    } else if let Some(c) = DATE_DOTTED.captures(&s) {
        (num(&c[3]), num(&c[2]), num(&c[1]))
    } else if let Some(c) = DATE_US.captures(&s) {
        (num(&c[3]), num(&c[1]), num(&c[2]))
    } else if let Some(c) = DATE_LONG.captures(&s) {
        (num(&c[3]), month_number(&c[2]).map(i64::from), num(&c[1]))
    } else {
        (None, None, None)
    };
    match ymd {
        (Some(y), Some(m), Some(d))
            if (1900..=2100).contains(&y) && (1..=12).contains(&m) && d >= 1 && d <= i64::from(days_in_month(y as i32, m as u32)) =>
        {
            ParseResult::ok(ParseKind::Date, format!("{y:04}-{m:02}-{d:02}"))
        }
        _ => ParseResult::fail(ParseKind::Date),
    }
}

pub fn parse_id(s: &str) -> ParseResult {
    let t = s.trim();
    if t.is_empty() {
        ParseResult::fail(ParseKind::Id)
    } else {
        ParseResult::ok(ParseKind::Id, t.to_string())
    }
}

pub fn parse_with(kind: ParserKind, s: &str) -> ParseResult {
    match kind {
        ParserKind::Amount => parse_amount(s),
        ParserKind::Date => parse_date(s),
        ParserKind::CurrencyCode => parse_currency(s),
        ParserKind::FreeTextId => parse_id(s),
        ParserKind::Percent => parse_percent(s),
    }
}

/// Parses `s` with the parser associated with `field`.
pub fn parse_field(field: FieldType, s: &str) -> ParseResult {
    match field.parser() {
        Some(kind) => parse_with(kind, s),
        None => ParseResult::fail(ParseKind::Id),
    }
}
