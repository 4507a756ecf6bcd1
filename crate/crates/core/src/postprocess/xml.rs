//! The invoice document: a flat UBL-like XML record with a fixed element order.

use quick_xml::events::Event;
use quick_xml::Reader;

use crate::error::{Error, Result};
use crate::model::{FieldType, Invoice};

pub const NAMESPACE: &str = "urn:ledgerscan:invoice:1";

/// Element names in document order.
pub const ELEMENTS: [(FieldType, &str); 8] = [
    (FieldType::Number, "ID"),
    (FieldType::Date, "IssueDate"),
    (FieldType::Currency, "DocumentCurrencyCode"),
    (FieldType::OrderId, "OrderReference"),
    (FieldType::LineTotal, "LineExtensionAmount"),
    (FieldType::TaxTotal, "TaxAmount"),
    (FieldType::TaxPercent, "TaxPercent"),
    (FieldType::Total, "PayableAmount"),
];

pub fn to_xml(invoice: &Invoice) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let present: Vec<(&str, &str)> = ELEMENTS.iter().filter_map(|(f, name)| invoice.get(*f).map(|v| (*name, v))).collect();
    if present.is_empty() {
        out.push_str(&format!("<Invoice xmlns=\"{NAMESPACE}\"/>\n"));
        return out;
    }
    out.push_str(&format!("<Invoice xmlns=\"{NAMESPACE}\">\n"));
    for (name, value) in present {
        out.push_str(&format!("  <{name}>{}</{name}>\n", quick_xml::escape::escape(value)));
    }
    out.push_str("</Invoice>\n");
    out
}

fn bad(reason: impl Into<String>) -> Error {
    Error::InvalidFieldValue { field: "Invoice".into(), value: reason.into() }
}

/// Reads a document written by [`to_xml`]. Unknown elements are rejected.
pub fn from_xml(text: &str) -> Result<Invoice> {
    let mut reader = Reader::from_str(text);
    let mut invoice = Invoice::new();
    let mut depth = 0usize;
    let mut current: Option<FieldType> = None;
    let mut value = String::new();
    loop {
        match reader.read_event().map_err(|e| bad(e.to_string()))? {
            Event::Start(e) | Event::Empty(e) if depth == 0 => {
                if e.local_name().as_ref() != "Invoice" {
                    return Err(bad("root element must be Invoice"));
                }
                depth = 1;
            }
            Event::Start(e) => {
                let name = e.local_name().as_ref().to_string();
                let field =
                    ELEMENTS.iter().find(|(_, n)| *n == name).map(|(f, _)| *f).ok_or_else(|| bad(format!("unknown element {name}")))?;
                if current.is_some() || invoice.is_present(field) {
                    return Err(bad(format!("unexpected element {name}")));
                }
                current = Some(field);
                value.clear();
            }
            Event::Text(t) => {
                if current.is_some() {
                    value.push_str(&t.xml10_content());
                }
            }
            Event::GeneralRef(r) => {
                if current.is_some() {
                    let c = match r.resolve_char_ref() {
                        Ok(Some(c)) => c,
                        _ => match &*r {
                            "amp" => '&',
                            "lt" => '<',
                            "gt" => '>',
                            "quot" => '"',
                            "apos" => '\'',
                            other => return Err(bad(format!("unknown entity {other}"))),
                        },
                    };
                    value.push(c);
                }
            }
            Event::End(_) => {
                if let Some(field) = current.take() {
                    invoice.set(field, value.clone());
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if depth == 0 {
        return Err(bad("no Invoice element"));
    }
    Ok(invoice)
}
