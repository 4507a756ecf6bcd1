//! Seeded synthetic invoice corpora.
//!
//! Every sender owns one template: a language, keyword choices, number and
//! date formats, page geometry and block arrangement. Documents of a template
//! vary in values, line items, recipients and length. The ground-truth invoice
//! is fixed before any noise is applied.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::json::{LineRecord, PageRecord, PositionalTextFile, WordRecord};
use crate::error::{Error, Result};
use crate::features::lexicon::Lexicons;
use crate::features::ngram::make_ngrams;
use crate::features::parse::{format_cents, parse_field};
use crate::hashing::mix_seed as mix;
use crate::model::{Document, FieldType, Invoice};
use crate::par::{self, Exec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    De,
    Da,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct NoiseSpec {
    pub ocr_char_sub_prob: f64,
    pub truth_discrepancy_prob: f64,
    pub field_missing_prob: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { ocr_char_sub_prob: 0.0, truth_discrepancy_prob: 0.0, field_missing_prob: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct CorpusSpec {
    pub num_templates: usize,
    /// Inclusive range of documents per template.
    pub docs_per_template: [usize; 2],
    pub languages: Vec<Language>,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// Inclusive target range for words per document.
    pub words_per_doc: [usize; 2],
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            num_templates: 10,
            docs_per_template: [5, 10],
            languages: vec![Language::En, Language::De, Language::Da],
            seed: 0,
            noise: NoiseSpec::default(),
            words_per_doc: [80, 300],
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.noise.ocr_char_sub_prob, self.noise.truth_discrepancy_prob, self.noise.field_missing_prob];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("noise probabilities must lie in [0,1]".into()));
        }
        if self.num_templates == 0 {
            return Err(Error::Config("numTemplates must be at least 1".into()));
        }
        if self.docs_per_template[0] == 0 || self.docs_per_template[0] > self.docs_per_template[1] {
            return Err(Error::Config("docsPerTemplate must be a non-empty range of positive counts".into()));
        }
        if self.words_per_doc[0] > self.words_per_doc[1] {
            return Err(Error::Config("wordsPerDoc must be a non-empty range".into()));
        }
        if self.languages.is_empty() {
            return Err(Error::Config("at least one language is required".into()));
        }
        Ok(())
    }
}

/// What noise touched a document, for error attribution.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NoiseLog {
    /// Fields whose truth value no longer appears in the document.
    pub discrepant: Vec<FieldType>,
    /// Fields left out of the rendered document.
    pub missing: Vec<FieldType>,
    /// Fields with at least one OCR-substituted glyph in a rendered value.
    pub ocr_fields: Vec<FieldType>,
    /// Total number of words with substituted glyphs.
    pub ocr_words: usize,
}

impl NoiseLog {
    pub fn touches(&self, field: FieldType) -> bool {
        self.discrepant.contains(&field) || self.missing.contains(&field) || self.ocr_fields.contains(&field)
    }

    pub fn is_clean(&self) -> bool {
        self.discrepant.is_empty() && self.missing.is_empty() && self.ocr_words == 0
    }
}

/// A document with its validated invoice.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub doc: Document,
    pub truth: Invoice,
    pub source: PositionalTextFile,
    pub noise: NoiseLog,
}

impl LabeledPair {
    pub fn from_source(source: PositionalTextFile, truth: Invoice, noise: NoiseLog) -> Result<Self> {
        Ok(LabeledPair { doc: source.to_document()?, truth, source, noise })
    }
}

#[derive(Clone, Copy, Debug)]
enum AmountFmt {
    CommaDecimal,
    DotDecimal,
    Plain,
}

#[derive(Clone, Copy, Debug)]
enum DateFmt {
    Iso,
    Dotted,
    Us,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum CurrencyStyle {
    AfterTotal,
    MetaRow,
    Symbol,
    TableHeader,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum MetaStyle {
    KeyValue,
    Columns,
    Stacked,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum TotalsStyle {
    KeyValue,
    Row,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum PercentStyle {
    InTaxKey,
    SeparateRow,
    ItemColumn,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Colon {
    None,
    Attached,
    Separate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum MetaItem {
    Number,
    Date,
    OrderId,
    Currency,
    DueDate,
    Customer,
    Delivery,
}

struct Keywords {
    title: &'static str,
    number: &'static str,
    date: &'static str,
    order: &'static str,
    due: &'static str,
    customer: &'static str,
    delivery: &'static str,
    currency: &'static str,
    line_total: &'static str,
    tax: &'static str,
    tax_rate: &'static str,
    total: &'static str,
    item_header: [&'static str; 5],
}

fn pick<'a, T: ?Sized>(rng: &mut ChaCha8Rng, xs: &'a [&'a T]) -> &'a T {
    xs.choose(rng).expect("non-empty")
}

fn keywords(lang: Language, rng: &mut ChaCha8Rng) -> Keywords {
    match lang {
        Language::En => Keywords {
            title: pick(rng, &["INVOICE", "Invoice", "TAX INVOICE", "Commercial Invoice"]),
            number: pick(rng, &["Invoice No.", "Invoice number", "Invoice #", "Inv. No.", "Number"]),
            date: pick(rng, &["Invoice date", "Date", "Issue date", "Date of issue"]),
            order: pick(rng, &["Order No.", "PO number", "Your order", "Purchase order", "Order ref."]),
            due: pick(rng, &["Due date", "Payment due", "Pay by"]),
            customer: pick(rng, &["Customer No.", "Account", "Customer ID", "Client no."]),
            delivery: pick(rng, &["Delivery date", "Shipped", "Date of supply"]),
            currency: pick(rng, &["Currency", "Currency code"]),
            line_total: pick(rng, &["Subtotal", "Net amount", "Total excl. VAT", "Net total", "Amount before tax"]),
            tax: pick(rng, &["VAT", "Tax", "Sales tax", "VAT amount"]),
            tax_rate: pick(rng, &["VAT rate", "Tax rate"]),
            total: pick(rng, &["Total", "Amount due", "Total incl. VAT", "Balance due", "TOTAL"]),
            item_header: *[
                ["Description", "Qty", "Unit price", "VAT", "Amount"],
                ["Item", "Quantity", "Price", "Tax", "Total"],
                ["Product", "Units", "Rate", "VAT", "Line total"],
            ]
            .choose(rng)
            .unwrap(),
        },
        Language::De => Keywords {
            title: pick(rng, &["RECHNUNG", "Rechnung"]),
            number: pick(rng, &["Rechnung-Nr.", "Rechnungsnummer", "Rechnungs-Nr.", "Beleg-Nr.", "Nr."]),
            date: pick(rng, &["Rechnungsdatum", "Datum", "Belegdatum"]),
            order: pick(rng, &["Bestellnummer", "Ihre Bestellung", "Auftrag Nr.", "Bestell-Nr."]),
            due: pick(rng, &["Fällig am", "Zahlbar bis", "Fälligkeit"]),
            customer: pick(rng, &["Kundennummer", "Kunden-Nr.", "Kd.-Nr."]),
            delivery: pick(rng, &["Lieferdatum", "Leistungsdatum"]),
            currency: pick(rng, &["Währung"]),
            line_total: pick(rng, &["Nettobetrag", "Zwischensumme", "Netto", "Summe netto"]),
            tax: pick(rng, &["MwSt.", "USt.", "Umsatzsteuer", "MwSt.-Betrag"]),
            tax_rate: pick(rng, &["MwSt.-Satz", "Steuersatz"]),
            total: pick(rng, &["Betrag", "Gesamtbetrag", "Summe", "Rechnungsbetrag", "Brutto"]),
            item_header: *[["Bezeichnung", "Menge", "Einzelpreis", "MwSt.", "Betrag"], ["Artikel", "Anzahl", "Preis", "USt.", "Gesamt"]]
                .choose(rng)
                .unwrap(),
        },
        Language::Da => Keywords {
            title: pick(rng, &["FAKTURA", "Faktura"]),
            number: pick(rng, &["Fakturanr.", "Faktura nr.", "Fakturanummer", "Bilagsnr."]),
            date: pick(rng, &["Fakturadato", "Dato", "Udstedt"]),
            order: pick(rng, &["Ordrenr.", "Rekvisition", "Jeres ordre", "Ordre nr."]),
            due: pick(rng, &["Forfaldsdato", "Betalingsdato", "Forfald"]),
            customer: pick(rng, &["Kundenr.", "Kunde nr.", "Debitornr."]),
            delivery: pick(rng, &["Leveringsdato", "Leveret"]),
            currency: pick(rng, &["Valuta"]),
            line_total: pick(rng, &["Subtotal", "Beløb ekskl. moms", "Nettobeløb", "Varebeløb"]),
            tax: pick(rng, &["Moms", "Momsbeløb", "Moms i alt"]),
            tax_rate: pick(rng, &["Momssats", "Moms pct."]),
            total: pick(rng, &["I alt", "Total", "At betale", "Beløb i alt", "Total DKK"]),
            item_header: *[["Beskrivelse", "Antal", "Stk. pris", "Moms", "Beløb"], ["Varenr.", "Antal", "Pris", "Moms", "I alt"]]
                .choose(rng)
                .unwrap(),
        },
    }
}

const COMPANY_A: &[&str] = &[
    "Nordic", "Baltic", "Acme", "Global", "Hansen", "Müller", "Smith", "Jensen", "Schmidt", "Andersen", "Brown", "Weber", "Larsen",
    "Taylor", "Fischer", "Nielsen", "Atlas", "Zenith", "Orion", "Polar", "Vector", "Summit",
];
const COMPANY_B: &[&str] = &[
    "Trading",
    "Supplies",
    "Logistics",
    "Systems",
    "Consulting",
    "Foods",
    "Print",
    "Tools",
    "Electric",
    "Textiles",
    "Software",
    "Transport",
    "Office",
    "Medical",
    "Design",
    "Energy",
    "Packaging",
    "Engineering",
];
const STREETS: &[&str] = &[
    "Main Street",
    "High Street",
    "Vesterbrogade",
    "Nørregade",
    "Hauptstraße",
    "Bahnhofstraße",
    "Park Road",
    "Industrivej",
    "Gartenweg",
    "Church Lane",
    "Strandvejen",
    "Königsallee",
    "Mill Road",
    "Havnegade",
];
const ITEMS_EN: &[&str] = &[
    "Consulting services",
    "Printer paper A4",
    "Shipping",
    "Software license",
    "Office chairs",
    "Cable 5m",
    "Support hours",
    "Toner cartridge",
    "Installation",
    "Maintenance fee",
    "Desk lamp",
    "Hosting monthly",
    "Coffee beans",
    "Training session",
    "Safety gloves",
    "Labels roll",
];
const ITEMS_DE: &[&str] = &[
    "Beratung",
    "Druckerpapier A4",
    "Versandkosten",
    "Softwarelizenz",
    "Bürostuhl",
    "Kabel 5m",
    "Wartung",
    "Tonerkartusche",
    "Montage",
    "Schulung",
    "Kaffeebohnen",
    "Schutzhandschuhe",
    "Etiketten Rolle",
];
const ITEMS_DA: &[&str] = &[
    "Konsulentydelser",
    "Printerpapir A4",
    "Fragt",
    "Softwarelicens",
    "Kontorstol",
    "Kabel 5m",
    "Vedligeholdelse",
    "Tonerpatron",
    "Installation",
    "Kursus",
    "Kaffebønner",
    "Arbejdshandsker",
    "Etiketter rulle",
];
const FOOTER_EN: &[&str] = &[
    "Thank you for your business.",
    "Payment terms: 30 days net.",
    "Please quote the invoice number with your payment.",
    "Late payments are subject to interest as permitted by law.",
    "Goods remain our property until paid in full.",
    "All prices are subject to our general terms and conditions of sale.",
    "Questions regarding this invoice should be directed to our accounts department.",
    "Registered office as above. Registered in England and Wales.",
    "Returns must be reported within fourteen days of delivery.",
    "We appreciate prompt payment and look forward to working with you again.",
];
const FOOTER_DE: &[&str] = &[
    "Vielen Dank für Ihren Auftrag.",
    "Zahlbar innerhalb von 30 Tagen ohne Abzug.",
    "Bitte geben Sie bei Zahlung die Rechnungsnummer an.",
    "Die Ware bleibt bis zur vollständigen Bezahlung unser Eigentum.",
    "Es gelten unsere allgemeinen Geschäftsbedingungen.",
    "Bei Fragen wenden Sie sich bitte an unsere Buchhaltung.",
    "Reklamationen bitte innerhalb von vierzehn Tagen melden.",
    "Geschäftsführer und Sitz der Gesellschaft siehe oben.",
    "Wir freuen uns auf die weitere Zusammenarbeit mit Ihnen.",
];
const FOOTER_DA: &[&str] = &[
    "Tak for handlen.",
    "Betalingsbetingelser netto 30 dage.",
    "Angiv venligst fakturanummer ved betaling.",
    "Ved for sen betaling tilskrives renter efter gældende regler.",
    "Varerne forbliver vores ejendom indtil fuld betaling.",
    "Vores almindelige salgs og leveringsbetingelser er gældende.",
    "Spørgsmål til fakturaen rettes til vores bogholderi.",
    "Reklamationer skal ske inden fjorten dage efter levering.",
    "Vi ser frem til et fortsat godt samarbejde.",
];

struct Party {
    name: Vec<String>,
    street: String,
    zip: String,
    city: String,
    country: String,
}

fn party(rng: &mut ChaCha8Rng, lang: Language) -> Party {
    let lex = Lexicons::builtin();
    let suffix = match lang {
        Language::En => pick(rng, &["Ltd", "Inc.", "LLC", "Ltd."]),
        Language::De => pick(rng, &["GmbH", "AG", "KG"]),
        Language::Da => pick(rng, &["ApS", "A/S", "I/S"]),
    };
    let name = vec![pick(rng, COMPANY_A).to_string(), pick(rng, COMPANY_B).to_string(), suffix.to_string()];
    let cities = lex.cities();
    let zips = lex.zips();
    let countries = lex.countries();
    Party {
        name,
        street: format!("{} {}", pick(rng, STREETS), rng.random_range(1..200)),
        zip: pick(rng, &zips).to_uppercase(),
        city: title_case(pick(rng, &cities)),
        country: title_case(pick(rng, &countries)),
    }
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut cs = w.chars();
            cs.next().map_or(String::new(), |c| c.to_uppercase().chain(cs).collect())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Copy, Debug)]
enum IdPattern {
    Digits(usize),
    Prefixed(&'static str),
    YearSerial,
    Letters,
}

fn make_id(rng: &mut ChaCha8Rng, pattern: IdPattern, year: i32) -> String {
    let digits = |rng: &mut ChaCha8Rng, n: usize| -> String {
        let mut s = String::new();
        s.push(char::from(b'1' + rng.random_range(0..9u8)));
        for _ in 1..n {
            s.push(char::from(b'0' + rng.random_range(0..10u8)));
        }
        s
    };
    match pattern {
        IdPattern::Digits(n) => digits(rng, n),
        IdPattern::Prefixed(p) => format!("{p}{}", digits(rng, 5)),
        IdPattern::YearSerial => format!("{year}-{}", digits(rng, 4)),
        IdPattern::Letters => {
            let a = char::from(b'A' + rng.random_range(0..26u8));
            let b = char::from(b'A' + rng.random_range(0..26u8));
            format!("{a}{b}{}", digits(rng, 6))
        }
    }
}

struct Template {
    id: usize,
    lang: Language,
    kw: Keywords,
    amount_fmt: AmountFmt,
    date_fmt: DateFmt,
    currency: &'static str,
    currency_style: CurrencyStyle,
    meta_style: MetaStyle,
    meta_right: bool,
    meta_items: Vec<MetaItem>,
    totals_style: TotalsStyle,
    percent_style: PercentStyle,
    percent_fmt: usize,
    colon: Colon,
    number_pattern: IdPattern,
    order_pattern: IdPattern,
    customer_pattern: IdPattern,
    page: (f64, f64),
    font: f64,
    margin: f64,
    sender: Party,
    sender_right: bool,
    rates: &'static [u32],
    footer: Vec<&'static str>,
    bank_line: String,
    key_width_chars: usize,
}

fn template(spec: &CorpusSpec, t: usize) -> Template {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, t as u64, u64::MAX));
    let lang = *spec.languages.choose(&mut rng).unwrap();
    let kw = keywords(lang, &mut rng);
    let currency = match lang {
        Language::En => *["USD", "GBP", "EUR"].choose(&mut rng).unwrap(),
        Language::De => *["EUR", "EUR", "CHF"].choose(&mut rng).unwrap(),
        Language::Da => *["DKK", "DKK", "EUR"].choose(&mut rng).unwrap(),
    };
    let has_symbol = matches!(currency, "USD" | "EUR" | "GBP");
    let currency_style = loop {
        let s = *[CurrencyStyle::AfterTotal, CurrencyStyle::MetaRow, CurrencyStyle::Symbol, CurrencyStyle::TableHeader]
            .choose(&mut rng)
            .unwrap();
        if s != CurrencyStyle::Symbol || has_symbol {
            break s;
        }
    };
    let meta_style = *[MetaStyle::KeyValue, MetaStyle::KeyValue, MetaStyle::Columns, MetaStyle::Stacked].choose(&mut rng).unwrap();
    let mut meta_items = vec![MetaItem::Number, MetaItem::Date, MetaItem::OrderId];
    for extra in [MetaItem::DueDate, MetaItem::Customer, MetaItem::Delivery] {
        if rng.random_bool(0.6) {
            meta_items.push(extra);
        }
    }
    if currency_style == CurrencyStyle::MetaRow {
        meta_items.push(MetaItem::Currency);
    }
    meta_items.shuffle(&mut rng);
    if meta_style == MetaStyle::Columns {
        meta_items.truncate(4.max(meta_items.iter().position(|m| *m == MetaItem::Currency).map_or(0, |p| p + 1)));
        for must in [MetaItem::Number, MetaItem::Date, MetaItem::OrderId] {
            if !meta_items.contains(&must) {
                meta_items.insert(0, must);
            }
        }
    }
    let rates: &'static [u32] = match lang {
        Language::En => &[2000, 1000, 800, 500, 1250],
        Language::De => &[1900, 700],
        Language::Da => &[2500],
    };
    let pages = [(595.0, 842.0), (612.0, 792.0), (2480.0, 3508.0), (1240.0, 1754.0)];
    let page = *pages.choose(&mut rng).unwrap();
    let scale = page.0 / 595.0;
    let footer_pool = match lang {
        Language::En => FOOTER_EN,
        Language::De => FOOTER_DE,
        Language::Da => FOOTER_DA,
    };
    let mut footer = footer_pool.to_vec();
    footer.shuffle(&mut rng);
    let cc = match lang {
        Language::En => "GB",
        Language::De => "DE",
        Language::Da => "DK",
    };
    let bank_line = format!(
        "IBAN {cc}{} {:04} {:04} {:04} {:02} BIC {}{}",
        rng.random_range(10..99),
        rng.random_range(0..10000),
        rng.random_range(0..10000),
        rng.random_range(0..10000),
        rng.random_range(0..100),
        pick(&mut rng, &["NDEA", "DABA", "DEUT", "COBA", "BARC", "HSBC"]),
        cc
    );
    let number_pattern = *[
        IdPattern::Digits(6),
        IdPattern::Digits(5),
        IdPattern::YearSerial,
        IdPattern::Letters,
        IdPattern::Prefixed("INV-"),
        IdPattern::Prefixed("R"),
    ]
    .choose(&mut rng)
    .unwrap();
    let order_pattern = *[IdPattern::Prefixed("PO-"), IdPattern::Prefixed("ORD"), IdPattern::Digits(10), IdPattern::Prefixed("B")]
        .choose(&mut rng)
        .unwrap();
    let customer_pattern = *[IdPattern::Digits(4), IdPattern::Prefixed("K"), IdPattern::Digits(7)].choose(&mut rng).unwrap();
    Template {
        id: t,
        lang,
        kw,
        amount_fmt: *[AmountFmt::CommaDecimal, AmountFmt::DotDecimal, AmountFmt::Plain].choose(&mut rng).unwrap(),
        date_fmt: *[DateFmt::Iso, DateFmt::Dotted, DateFmt::Us].choose(&mut rng).unwrap(),
        currency,
        currency_style,
        meta_style,
        meta_right: rng.random_bool(0.5),
        meta_items,
        totals_style: if rng.random_bool(0.75) { TotalsStyle::KeyValue } else { TotalsStyle::Row },
        percent_style: *[PercentStyle::InTaxKey, PercentStyle::SeparateRow, PercentStyle::ItemColumn].choose(&mut rng).unwrap(),
        percent_fmt: rng.random_range(0..4),
        colon: *[Colon::None, Colon::Attached, Colon::Separate].choose(&mut rng).unwrap(),
        number_pattern,
        order_pattern,
        customer_pattern,
        page,
        font: rng.random_range(8.5..10.5) * scale,
        margin: rng.random_range(0.05..0.1) * page.0,
        sender: party(&mut rng, lang),
        sender_right: rng.random_bool(0.4),
        rates,
        footer,
        bank_line,
        key_width_chars: rng.random_range(16..22),
    }
}

fn format_amount(cents: i64, fmt: AmountFmt) -> String {
    let whole = (cents / 100).to_string();
    let frac = cents % 100;
    let grouped = |sep: char| {
        let mut out = String::new();
        for (i, ch) in whole.chars().enumerate() {
            if i > 0 && (whole.len() - i) % 3 == 0 {
                out.push(sep);
            }
            out.push(ch);
        }
        out
    };
    match fmt {
        AmountFmt::CommaDecimal => format!("{},{frac:02}", grouped('.')),
        AmountFmt::DotDecimal => format!("{}.{frac:02}", grouped(',')),
        AmountFmt::Plain => format!("{whole}.{frac:02}"),
    }
}

fn format_date(ymd: (i32, u32, u32), fmt: DateFmt) -> String {
    let (y, m, d) = ymd;
    match fmt {
        DateFmt::Iso => format!("{y:04}-{m:02}-{d:02}"),
        DateFmt::Dotted => format!("{d:02}.{m:02}.{y:04}"),
        DateFmt::Us => format!("{m:02}/{d:02}/{y:04}"),
    }
}

fn format_percent(basis: u32, style: usize, fmt: AmountFmt) -> String {
    let whole = basis / 100;
    let frac = basis % 100;
    let dec = if matches!(fmt, AmountFmt::CommaDecimal) { ',' } else { '.' };
    match style {
        0 if frac == 0 => format!("{whole}%"),
        1 if frac == 0 => format!("{whole} %"),
        0 | 2 => format!("{whole}{dec}{frac:02}%"),
        _ => format!("{whole}{dec}{frac:02} %"),
    }
}

fn civil_from_days(z: i64) -> (i32, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    ((if m <= 2 { y + 1 } else { y }) as i32, m, d)
}

/// One run of words on a row, either left-anchored at `x` or right-aligned to `x`.
struct Segment {
    x: f64,
    right_aligned: bool,
    row: usize,
    words: Vec<(String, Option<FieldType>)>,
}

struct Canvas<'t> {
    tpl: &'t Template,
    rows: usize,
    segments: Vec<Segment>,
}

impl<'t> Canvas<'t> {
    fn add(&mut self, x: f64, row: usize, text: &str, field: Option<FieldType>) {
        self.push(x, false, row, text, field);
    }

    fn add_right(&mut self, x: f64, row: usize, text: &str, field: Option<FieldType>) {
        self.push(x, true, row, text, field);
    }

    fn push(&mut self, x: f64, right_aligned: bool, row: usize, text: &str, field: Option<FieldType>) {
        let words: Vec<_> = text.split_whitespace().map(|w| (w.to_string(), field)).collect();
        if words.is_empty() {
            return;
        }
        self.rows = self.rows.max(row + 1);
        self.segments.push(Segment { x, right_aligned, row, words });
    }

    fn extend(&mut self, x: f64, right_aligned: bool, row: usize, words: Vec<(String, Option<FieldType>)>) {
        if words.is_empty() {
            return;
        }
        self.rows = self.rows.max(row + 1);
        self.segments.push(Segment { x, right_aligned, row, words });
    }

    fn next_row(&mut self) -> usize {
        self.rows += 1;
        self.rows - 1
    }

    fn word_width(&self, text: &str) -> f64 {
        let cw = self.tpl.font * 0.52;
        (text.chars().count() as f64 * cw).max(cw)
    }

    fn text_width(&self, words: &[(String, Option<FieldType>)]) -> f64 {
        let space = self.tpl.font * 0.3;
        words.iter().map(|(w, _)| self.word_width(w)).sum::<f64>() + space * words.len().saturating_sub(1) as f64
    }

    /// Lays segments out on pages; returns the file and, per word in reading order, the field it renders.
    fn render(&self, doc_id: &str, sender_id: &str) -> (PositionalTextFile, Vec<Option<FieldType>>) {
        let (w, h) = self.tpl.page;
        let lh = self.tpl.font * 1.5;
        let top = h * 0.05;
        let rows_per_page = (((h * 0.92) - top) / lh).floor().max(1.0) as usize;
        let space = self.tpl.font * 0.3;
        let round = |v: f64| (v * 4.0).round() / 4.0;

        let mut order: Vec<usize> = (0..self.segments.len()).collect();
        let start_x = |s: &Segment| if s.right_aligned { s.x - self.text_width(&s.words) } else { s.x };
        order.sort_by(|&a, &b| {
            let (sa, sb) = (&self.segments[a], &self.segments[b]);
            sa.row.cmp(&sb.row).then(start_x(sa).total_cmp(&start_x(sb)))
        });

        // Segments sharing a row form one text line.
        let mut pages: Vec<PageRecord> = Vec::new();
        let mut fields = Vec::new();
        let mut current_row = usize::MAX;
        for idx in order {
            let seg = &self.segments[idx];
            let page_no = seg.row / rows_per_page;
            while pages.len() <= page_no {
                pages.push(PageRecord { width: w, height: h, lines: Vec::new() });
            }
            if seg.row != current_row {
                pages[page_no].lines.push(LineRecord { words: Vec::new() });
                current_row = seg.row;
            }
            let line = pages[page_no].lines.last_mut().expect("pushed above");
            let y = round(top + (seg.row % rows_per_page) as f64 * lh);
            let mut x = start_x(seg).clamp(0.0, (w - self.text_width(&seg.words) - 1.0).max(0.0));
            for (text, field) in &seg.words {
                let ww = self.word_width(text);
                let left = round(x).min(w - 0.5);
                let right = round(x + ww).min(w).max(left + 0.25);
                line.words.push(WordRecord { text: text.clone(), bbox: [left, y, right, round(y + self.tpl.font)] });
                fields.push(*field);
                x += ww + space;
            }
        }
        (PositionalTextFile { doc_id: doc_id.into(), sender_id: sender_id.into(), pages }, fields)
    }
}

struct Values {
    number: String,
    order: String,
    customer: String,
    date: (i32, u32, u32),
    due: (i32, u32, u32),
    delivery: (i32, u32, u32),
    items: Vec<(String, u32, i64)>,
    rate: u32,
    line_total: i64,
    tax_total: i64,
    total: i64,
}

fn sample_values(tpl: &Template, rng: &mut ChaCha8Rng, n_items: usize) -> Values {
    let day0 = 16_071 + rng.random_range(0..1460); // 2014-01-01 .. 2017
    let date = civil_from_days(day0);
    let due = civil_from_days(day0 + *[14, 30, 8, 10].choose(rng).unwrap());
    let delivery = civil_from_days(day0 - rng.random_range(1..20));
    let number = make_id(rng, tpl.number_pattern, date.0);
    let order = loop {
        let o = make_id(rng, tpl.order_pattern, date.0);
        if o != number {
            break o;
        }
    };
    let customer = loop {
        let c = make_id(rng, tpl.customer_pattern, date.0);
        if c != number && c != order {
            break c;
        }
    };
    let pool = match tpl.lang {
        Language::En => ITEMS_EN,
        Language::De => ITEMS_DE,
        Language::Da => ITEMS_DA,
    };
    let items: Vec<(String, u32, i64)> = (0..n_items)
        .map(|_| {
            let qty = if rng.random_bool(0.5) { 1 } else { rng.random_range(2..25) };
            let price = if rng.random_bool(0.3) { rng.random_range(1..500) * 100 } else { rng.random_range(100..200_000) };
            (pick(rng, pool).to_string(), qty, price)
        })
        .collect();
    let rate = *tpl.rates.choose(rng).unwrap();
    let line_total: i64 = items.iter().map(|(_, q, p)| i64::from(*q) * p).sum();
    // half-up rounding of line_total * rate / 10000
    let tax_total = (line_total * i64::from(rate) + 5000) / 10_000;
    Values { number, order, customer, date, due, delivery, items, rate, line_total, tax_total, total: line_total + tax_total }
}

fn keyed(tpl: &Template, key: &str) -> Vec<(String, Option<FieldType>)> {
    let mut words: Vec<(String, Option<FieldType>)> = key.split_whitespace().map(|w| (w.to_string(), None)).collect();
    match tpl.colon {
        Colon::None => {}
        Colon::Attached => {
            if let Some(last) = words.last_mut() {
                last.0.push(':');
            }
        }
        Colon::Separate => words.push((":".into(), None)),
    }
    words
}

fn value_words(text: &str, field: Option<FieldType>) -> Vec<(String, Option<FieldType>)> {
    text.split_whitespace().map(|w| (w.to_string(), field)).collect()
}

fn render_doc(
    tpl: &Template,
    rng: &mut ChaCha8Rng,
    doc_idx: usize,
    spec: &CorpusSpec,
) -> (PositionalTextFile, Vec<Option<FieldType>>, Invoice, Vec<FieldType>) {
    let target_words = rng.random_range(spec.words_per_doc[0]..=spec.words_per_doc[1]);
    let n_items = (((target_words as f64 - 70.0) / 12.0).round() as i64).clamp(1, 8) as usize;
    let n_items = rng.random_range(1..=n_items);
    let v = sample_values(tpl, rng, n_items);

    let mut truth = Invoice::new();
    truth.set(FieldType::Number, &v.number);
    truth.set(FieldType::Date, format_date(v.date, DateFmt::Iso));
    truth.set(FieldType::Currency, tpl.currency);
    truth.set(FieldType::OrderId, &v.order);
    truth.set(FieldType::Total, format_cents(v.total));
    truth.set(FieldType::LineTotal, format_cents(v.line_total));
    truth.set(FieldType::TaxTotal, format_cents(v.tax_total));
    truth.set(FieldType::TaxPercent, format!("{}.{:02}", v.rate / 100, v.rate % 100));

    let missing: Vec<FieldType> = FieldType::TARGETS
        .iter()
        .copied()
        .filter(|_| spec.noise.field_missing_prob > 0.0 && rng.random_bool(spec.noise.field_missing_prob))
        .collect();
    let shown = |f: FieldType| !missing.contains(&f);

    let (w, _) = tpl.page;
    let m = tpl.margin;
    let right_edge = w - m;
    let amt = |c: i64| format_amount(c, tpl.amount_fmt);
    let pct = format_percent(v.rate, tpl.percent_fmt, tpl.amount_fmt);
    let cur_field = if shown(FieldType::Currency) { Some(FieldType::Currency) } else { None };
    let symbol = match tpl.currency {
        "USD" => "$",
        "EUR" => "€",
        "GBP" => "£",
        other => other,
    };

    let mut c = Canvas { tpl, rows: 0, segments: Vec::new() };

    // Sender header.
    let sx = if tpl.sender_right { w * 0.6 } else { m };
    let r0 = c.next_row();
    c.add(sx, r0, &tpl.sender.name.join(" "), None);
    let r = c.next_row();
    c.add(sx, r, &tpl.sender.street, None);
    let r = c.next_row();
    c.add(sx, r, &format!("{} {}", tpl.sender.zip, tpl.sender.city), None);
    let r = c.next_row();
    c.add(sx, r, &tpl.sender.country, None);
    let tx = if tpl.sender_right { m } else { w * 0.6 };
    c.add(tx, r0, tpl.kw.title, None);
    c.next_row();

    // Recipient and meta block side by side.
    let receiver = party(rng, tpl.lang);
    let start = c.rows;
    let rx = if tpl.meta_right { m } else { w * 0.55 };
    for (i, line) in
        [receiver.name.join(" "), receiver.street, format!("{} {}", receiver.zip, receiver.city), receiver.country].iter().enumerate()
    {
        c.add(rx, start + i, line, None);
    }
    let mx = if tpl.meta_right { w * 0.55 } else { m };
    let key_w = c.word_width(&"x".repeat(tpl.key_width_chars));
    let meta_entries: Vec<(String, Vec<(String, Option<FieldType>)>)> = tpl
        .meta_items
        .iter()
        .filter_map(|item| {
            let (key, value, field) = match item {
                MetaItem::Number => (tpl.kw.number, v.number.clone(), FieldType::Number),
                MetaItem::Date => (tpl.kw.date, format_date(v.date, tpl.date_fmt), FieldType::Date),
                MetaItem::OrderId => (tpl.kw.order, v.order.clone(), FieldType::OrderId),
                MetaItem::Currency => (tpl.kw.currency, tpl.currency.to_string(), FieldType::Currency),
                MetaItem::DueDate => (tpl.kw.due, format_date(v.due, tpl.date_fmt), FieldType::Undefined),
                MetaItem::Customer => (tpl.kw.customer, v.customer.clone(), FieldType::Undefined),
                MetaItem::Delivery => (tpl.kw.delivery, format_date(v.delivery, tpl.date_fmt), FieldType::Undefined),
            };
            if field != FieldType::Undefined && !shown(field) {
                return None;
            }
            let f = (field != FieldType::Undefined).then_some(field);
            Some((key.to_string(), value_words(&value, f)))
        })
        .collect();
    let mut row = start;
    match tpl.meta_style {
        MetaStyle::KeyValue => {
            for (key, value) in meta_entries {
                c.extend(mx, false, row, keyed(tpl, &key));
                c.extend(mx + key_w, false, row, value);
                row += 1;
            }
        }
        MetaStyle::Stacked => {
            for (key, value) in meta_entries {
                c.extend(mx, false, row, keyed(tpl, &key));
                c.extend(mx, false, row + 1, value);
                row += 2;
            }
        }
        MetaStyle::Columns => {
            let col_w = (right_edge - mx) / meta_entries.len().max(1) as f64;
            let (head, vals) = (row, row + 1);
            for (i, (key, value)) in meta_entries.into_iter().enumerate() {
                let x = mx + i as f64 * col_w;
                c.extend(x, false, head, key.split_whitespace().map(|w| (w.to_string(), None)).collect());
                c.extend(x, false, vals, value);
            }
            row += 2;
        }
    }
    c.rows = c.rows.max(row).max(start + 4);
    c.next_row();

    // Line items.
    let cols = [m, w * 0.5, w * 0.62, w * 0.72, right_edge];
    let head = c.next_row();
    let vat_column = tpl.percent_style == PercentStyle::ItemColumn;
    for (i, h) in tpl.kw.item_header.iter().enumerate() {
        if i == 3 && !vat_column {
            continue;
        }
        if i == 4 {
            let mut words = value_words(h, None);
            if tpl.currency_style == CurrencyStyle::TableHeader {
                words.extend(value_words(tpl.currency, cur_field));
            }
            c.extend(cols[4], true, head, words);
        } else if i == 0 {
            c.add(cols[0], head, h, None);
        } else {
            c.add_right(cols[i] + w * 0.06, head, h, None);
        }
    }
    let tax_field = if shown(FieldType::TaxPercent) { Some(FieldType::TaxPercent) } else { None };
    for (desc, qty, price) in &v.items {
        let r = c.next_row();
        c.add(cols[0], r, desc, None);
        c.add_right(cols[1] + w * 0.06, r, &qty.to_string(), None);
        c.add_right(cols[2] + w * 0.06, r, &amt(*price), None);
        if vat_column {
            c.add_right(cols[3] + w * 0.06, r, &pct, tax_field);
        }
        c.add_right(cols[4], r, &amt(i64::from(*qty) * price), None);
    }
    c.next_row();

    // Totals.
    let with_symbol = |words: Vec<(String, Option<FieldType>)>| {
        if tpl.currency_style == CurrencyStyle::Symbol {
            let mut out = value_words(symbol, cur_field);
            out.extend(words);
            out
        } else {
            words
        }
    };
    let f = |field: FieldType| shown(field).then_some(field);
    let key_x = w * 0.52;
    match tpl.totals_style {
        TotalsStyle::KeyValue => {
            if shown(FieldType::LineTotal) {
                let r = c.next_row();
                c.extend(key_x, false, r, keyed(tpl, tpl.kw.line_total));
                c.extend(right_edge, true, r, with_symbol(value_words(&amt(v.line_total), f(FieldType::LineTotal))));
            }
            if tpl.percent_style == PercentStyle::SeparateRow && shown(FieldType::TaxPercent) {
                let r = c.next_row();
                c.extend(key_x, false, r, keyed(tpl, tpl.kw.tax_rate));
                c.extend(right_edge, true, r, value_words(&pct, tax_field));
            }
            if shown(FieldType::TaxTotal) {
                let r = c.next_row();
                let mut key = value_words(tpl.kw.tax, None);
                if tpl.percent_style == PercentStyle::InTaxKey {
                    key.extend(value_words(&pct, tax_field));
                }
                c.extend(key_x, false, r, key);
                c.extend(right_edge, true, r, with_symbol(value_words(&amt(v.tax_total), f(FieldType::TaxTotal))));
            }
            if shown(FieldType::Total) {
                let r = c.next_row();
                c.extend(key_x, false, r, keyed(tpl, tpl.kw.total));
                let mut words = with_symbol(value_words(&amt(v.total), f(FieldType::Total)));
                if tpl.currency_style == CurrencyStyle::AfterTotal {
                    words.extend(value_words(tpl.currency, cur_field));
                }
                c.extend(right_edge, true, r, words);
            }
        }
        TotalsStyle::Row => {
            let mut cols: Vec<(&str, Vec<(String, Option<FieldType>)>)> = Vec::new();
            if shown(FieldType::LineTotal) {
                cols.push((tpl.kw.line_total, with_symbol(value_words(&amt(v.line_total), f(FieldType::LineTotal)))));
            }
            if tpl.percent_style != PercentStyle::ItemColumn && shown(FieldType::TaxPercent) {
                cols.push((tpl.kw.tax_rate, value_words(&pct, tax_field)));
            }
            if shown(FieldType::TaxTotal) {
                cols.push((tpl.kw.tax, with_symbol(value_words(&amt(v.tax_total), f(FieldType::TaxTotal)))));
            }
            if shown(FieldType::Total) {
                let mut words = with_symbol(value_words(&amt(v.total), f(FieldType::Total)));
                if tpl.currency_style == CurrencyStyle::AfterTotal {
                    words.extend(value_words(tpl.currency, cur_field));
                }
                cols.push((tpl.kw.total, words));
            }
            let head = c.next_row();
            let vals = c.next_row();
            let n = cols.len().max(1) as f64;
            for (i, (key, words)) in cols.into_iter().enumerate() {
                let x = right_edge - (n - 1.0 - i as f64) * (right_edge - w * 0.3) / n;
                c.add_right(x, head, key, None);
                c.extend(x, true, vals, words);
            }
        }
    }
    if tpl.currency_style == CurrencyStyle::AfterTotal && !shown(FieldType::Total) && shown(FieldType::Currency) {
        let r = c.next_row();
        c.add(key_x, r, tpl.currency, cur_field);
    }
    c.next_row();

    // Footer text up to the target length.
    let count = |c: &Canvas| c.segments.iter().map(|s| s.words.len()).sum::<usize>();
    let r = c.next_row();
    c.add(m, r, &tpl.bank_line, None);
    for line in tpl.footer.iter().cycle().take(tpl.footer.len() * 2) {
        if count(&c) >= target_words {
            break;
        }
        let r = c.next_row();
        c.add(m, r, line, None);
    }

    let doc_id = format!("{}-{doc_idx:03}", sender_id(tpl.id));
    let (file, fields) = c.render(&doc_id, &sender_id(tpl.id));
    (file, fields, truth, missing)
}

pub fn sender_id(template: usize) -> String {
    format!("S{template:04}")
}

const OCR_SWAPS: &[(char, &[char])] = &[
    ('0', &['o', 'O']),
    ('o', &['0']),
    ('O', &['0']),
    ('1', &['l', 'I']),
    ('l', &['1']),
    ('I', &['1']),
    ('5', &['S']),
    ('S', &['5']),
    ('8', &['B']),
    ('B', &['8']),
];

/// Substitutes OCR look-alike glyphs, each eligible character independently with probability `p`.
pub fn ocr_corrupt(text: &str, p: f64, rng: &mut impl Rng) -> String {
    text.chars()
        .map(|ch| match OCR_SWAPS.iter().find(|(c, _)| *c == ch) {
            Some((_, alts)) if p > 0.0 && rng.random_bool(p) => *alts.choose(rng).unwrap(),
            _ => ch,
        })
        .collect()
}

fn apply_ocr(file: &mut PositionalTextFile, fields: &[Option<FieldType>], p: f64, rng: &mut ChaCha8Rng, log: &mut NoiseLog) {
    if p <= 0.0 {
        return;
    }
    let words = file.pages.iter_mut().flat_map(|pg| pg.lines.iter_mut()).flat_map(|l| l.words.iter_mut());
    for (word, field) in words.zip(fields) {
        let noisy = ocr_corrupt(&word.text, p, rng);
        if noisy != word.text {
            word.text = noisy;
            log.ocr_words += 1;
            if let Some(f) = field {
                if !log.ocr_fields.contains(f) {
                    log.ocr_fields.push(*f);
                }
            }
        }
    }
}

/// Replaces truth values with syntactically valid values that the document does not contain.
fn apply_discrepancy(doc: &Document, truth: &mut Invoice, p: f64, rng: &mut ChaCha8Rng, log: &mut NoiseLog) {
    if p <= 0.0 {
        return;
    }
    let ngrams = make_ngrams(doc, 4);
    let present = |field: FieldType, value: &str| {
        let squash = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        ngrams.iter().any(|g| match parse_field(field, &g.text).value() {
            Some(v) if field.parser() == Some(crate::model::ParserKind::FreeTextId) => squash(v) == squash(value),
            Some(v) => v == value,
            None => false,
        })
    };
    for field in FieldType::TARGETS {
        if !rng.random_bool(p) {
            continue;
        }
        let Some(old) = truth.get(field).map(str::to_string) else { continue };
        for _ in 0..50 {
            let candidate = perturb(field, &old, rng);
            if candidate != old && !present(field, &candidate) {
                truth.set(field, candidate);
                log.discrepant.push(field);
                break;
            }
        }
    }
}

fn perturb(field: FieldType, old: &str, rng: &mut ChaCha8Rng) -> String {
    match field {
        FieldType::Number | FieldType::OrderId => {
            let mut chars: Vec<char> = old.chars().collect();
            let digits: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_ascii_digit()).collect();
            if let Some(&i) = digits.choose(rng) {
                chars[i] = char::from(b'0' + rng.random_range(0..10u8));
            } else {
                chars.push('1');
            }
            chars.into_iter().collect()
        }
        FieldType::Date => {
            let p: Vec<i64> = old.split('-').filter_map(|x| x.parse().ok()).collect();
            let days = days_from_civil(p[0], p[1], p[2]) + *[-1i64, 1, -2, 2, 30, -30].choose(rng).unwrap();
            let (y, m, d) = civil_from_days(days);
            format!("{y:04}-{m:02}-{d:02}")
        }
        FieldType::Currency => pick(rng, &["EUR", "USD", "GBP", "DKK", "SEK", "NOK", "CHF"]).to_string(),
        FieldType::TaxPercent => pick(rng, &["5.00", "7.00", "10.00", "12.50", "19.00", "20.00", "25.00"]).to_string(),
        _ => {
            let cents = crate::features::parse::amount_cents(old).map_or(0, |(c, _)| c);
            format_cents((cents + rng.random_range(-5000..5000)).max(1))
        }
    }
}

fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y.rem_euclid(400);
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn generate_template(spec: &CorpusSpec, t: usize) -> Result<Vec<LabeledPair>> {
    let tpl = template(spec, t);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, t as u64, 0));
    let n = rng.random_range(spec.docs_per_template[0]..=spec.docs_per_template[1]);
    (0..n)
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, t as u64, d as u64 + 1));
            let (mut file, fields, mut truth, missing) = render_doc(&tpl, &mut rng, d, spec);
            let mut noise = NoiseLog { missing, ..NoiseLog::default() };
            apply_ocr(&mut file, &fields, spec.noise.ocr_char_sub_prob, &mut rng, &mut noise);
            let doc = file.to_document()?;
            apply_discrepancy(&doc, &mut truth, spec.noise.truth_discrepancy_prob, &mut rng, &mut noise);
            Ok(LabeledPair { doc, truth, source: file, noise })
        })
        .collect()
}

/// Generates a corpus. Deterministic for a fixed spec.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<LabeledPair>> {
    generate_corpus_with(spec, Exec::default())
}

pub fn generate_corpus_with(spec: &CorpusSpec, exec: Exec) -> Result<Vec<LabeledPair>> {
    spec.validate()?;
    let per_template = par::map_indexed(exec, spec.num_templates, |t| generate_template(spec, t));
    let mut out = Vec::new();
    for pairs in per_template {
        out.extend(pairs?);
    }
    Ok(out)
}
