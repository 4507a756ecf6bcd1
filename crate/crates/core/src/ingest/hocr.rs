//! The hOCR subset: `ocr_page`, `ocr_line` and `ocrx_word` elements whose
//! `title` carries `bbox l t r b`. Page size comes from the page's bbox.
//! Optional `<meta name="ledgerscan-doc-id">` / `ledgerscan-sender-id` carry ids.

use std::fmt::Write;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use quick_xml::XmlVersion;

use super::json::{LineRecord, PageRecord, PositionalTextFile, WordRecord};
use crate::error::{Error, Result};
use crate::model::Document;

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Page,
    Line,
    Word,
    Other,
}

struct Open {
    kind: Kind,
    path: String,
}

fn attr(e: &BytesStart<'_>, name: &str) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.as_ref() == name)
        .and_then(|a| a.normalized_value(XmlVersion::Implicit1_0).ok())
        .map(|v| v.into_owned())
}

fn bbox(title: Option<&str>) -> Option<[f64; 4]> {
    let part = title?.split(';').map(str::trim).find(|p| p.starts_with("bbox"))?;
    let nums: Vec<f64> = part["bbox".len()..].split_whitespace().map(str::parse).collect::<Result<_, _>>().ok()?;
    <[f64; 4]>::try_from(nums).ok()
}

fn predefined(name: &str) -> Option<char> {
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        _ => return None,
    })
}

/// Parses an hOCR document into the positional-text file model.
pub fn parse_hocr(bytes: &[u8]) -> Result<PositionalTextFile> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Hocr { path: "/".into(), reason: e.to_string() })?;
    let mut reader = Reader::from_str(text);
    reader.config_mut().check_end_names = false;

    let mut file = PositionalTextFile { doc_id: String::new(), sender_id: String::new(), pages: Vec::new() };
    let mut stack: Vec<Open> = Vec::new();
    let mut word: Option<(String, [f64; 4])> = None;
    let mut counts = [0usize; 3];

    let err = |path: &str, reason: &str| Error::Hocr { path: path.to_string(), reason: reason.to_string() };

    loop {
        let event = reader.read_event().map_err(|e| {
            let path = stack.last().map_or("/", |o| o.path.as_str()).to_string();
            Error::Hocr { path, reason: e.to_string() }
        })?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                let tag = e.name().as_ref().to_string();
                let class = attr(e, "class").unwrap_or_default();
                let classes: Vec<&str> = class.split_whitespace().collect();
                let kind = if classes.contains(&"ocr_page") {
                    Kind::Page
                } else if classes.contains(&"ocr_line") || classes.contains(&"ocrx_line") {
                    Kind::Line
                } else if classes.contains(&"ocrx_word") {
                    Kind::Word
                } else {
                    Kind::Other
                };
                let parent = stack.last().map_or("", |o| o.path.as_str());
                let mut path = format!("{parent}/{tag}");
                if kind != Kind::Other {
                    let slot = kind as usize;
                    let _ = write!(path, "[{} {}]", classes.iter().find(|c| c.starts_with("ocr")).unwrap(), counts[slot]);
                    counts[slot] += 1;
                }

                if tag == "meta" {
                    let content = attr(e, "content").unwrap_or_default();
                    match attr(e, "name").as_deref() {
                        Some("ledgerscan-doc-id") => file.doc_id = content,
                        Some("ledgerscan-sender-id") => file.sender_id = content,
                        _ => {}
                    }
                }

                let title = attr(e, "title");
                match kind {
                    Kind::Page => {
                        let [l, t, r, b] = bbox(title.as_deref()).ok_or_else(|| err(&path, "missing bbox"))?;
                        file.pages.push(PageRecord { width: r - l, height: b - t, lines: Vec::new() });
                        counts[1] = 0;
                    }
                    Kind::Line => {
                        bbox(title.as_deref()).ok_or_else(|| err(&path, "missing bbox"))?;
                        let page = file.pages.last_mut().ok_or_else(|| err(&path, "line outside ocr_page"))?;
                        page.lines.push(LineRecord { words: Vec::new() });
                        counts[2] = 0;
                    }
                    Kind::Word => {
                        let b = bbox(title.as_deref()).ok_or_else(|| err(&path, "missing bbox"))?;
                        if file.pages.last().and_then(|p| p.lines.last()).is_none() {
                            return Err(err(&path, "word outside ocr_line"));
                        }
                        word = Some((String::new(), b));
                    }
                    Kind::Other => {}
                }
                if !empty && !is_void(&tag) {
                    stack.push(Open { kind, path });
                } else if kind == Kind::Word {
                    finish_word(&mut file, word.take(), &path)?;
                }
            }
            Event::Text(t) => {
                if let Some((buf, _)) = word.as_mut() {
                    buf.push_str(&t.html_content());
                }
            }
            Event::CData(t) => {
                if let Some((buf, _)) = word.as_mut() {
                    buf.push_str(&t);
                }
            }
            Event::GeneralRef(r) => {
                if let Some((buf, _)) = word.as_mut() {
                    let c = match r.resolve_char_ref() {
                        Ok(Some(c)) => Some(c),
                        _ => predefined(&r),
                    };
                    match c {
                        Some(c) => buf.push(c),
                        None => {
                            let _ = write!(buf, "&{};", &*r);
                        }
                    }
                }
            }
            Event::End(_) => {
                if let Some(open) = stack.pop() {
                    if open.kind == Kind::Word {
                        finish_word(&mut file, word.take(), &open.path)?;
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(file)
}

fn is_void(tag: &str) -> bool {
    matches!(tag, "meta" | "br" | "img" | "link" | "hr" | "input")
}

fn finish_word(file: &mut PositionalTextFile, word: Option<(String, [f64; 4])>, path: &str) -> Result<()> {
    let Some((text, bbox)) = word else { return Ok(()) };
    let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if text.is_empty() {
        return Err(Error::Hocr { path: path.into(), reason: "word has no text".into() });
    }
    let line = file.pages.last_mut().and_then(|p| p.lines.last_mut()).expect("checked on open");
    line.words.push(WordRecord { text, bbox });
    Ok(())
}

pub fn load_hocr(bytes: &[u8]) -> Result<Document> {
    parse_hocr(bytes)?.to_document()
}

fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

fn fmt_box(b: [f64; 4]) -> String {
    b.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

/// Writes a document as hOCR. Coordinates use the shortest exact decimal form.
pub fn save_hocr(doc: &Document) -> String {
    write_hocr(&PositionalTextFile::from_document(doc))
}

/// Writes a positional-text file as hOCR; loading the result gives the same document.
pub fn write_hocr(file: &PositionalTextFile) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<html xmlns=\"http://www.w3.org/1999/xhtml\">\n<head>\n");
    let _ = writeln!(out, "<meta name=\"ledgerscan-doc-id\" content=\"{}\"/>", escape(&file.doc_id));
    let _ = writeln!(out, "<meta name=\"ledgerscan-sender-id\" content=\"{}\"/>", escape(&file.sender_id));
    out.push_str("</head>\n<body>\n");
    for (p, page) in file.pages.iter().enumerate() {
        let _ = writeln!(out, "<div class=\"ocr_page\" id=\"page_{}\" title=\"bbox 0 0 {} {}\">", p + 1, page.width, page.height);
        for (l, line) in page.lines.iter().enumerate() {
            let lb = line.words.iter().fold([f64::MAX, f64::MAX, f64::MIN, f64::MIN], |a, w| {
                [a[0].min(w.bbox[0]), a[1].min(w.bbox[1]), a[2].max(w.bbox[2]), a[3].max(w.bbox[3])]
            });
            let _ = writeln!(out, " <span class=\"ocr_line\" id=\"line_{}_{}\" title=\"bbox {}\">", p + 1, l + 1, fmt_box(lb));
            for w in &line.words {
                let _ = writeln!(out, "  <span class=\"ocrx_word\" title=\"bbox {}\">{}</span>", fmt_box(w.bbox), escape(&w.text));
            }
            out.push_str(" </span>\n");
        }
        out.push_str("</div>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}
