use super::{DialogAct, EOS};

/// `[slot-<domain>-<slotname>]`, lowercase.
pub fn placeholder(domain: &str, slot: &str) -> String {
    format!("[slot-{}-{}]", domain.to_lowercase(), slot.to_lowercase())
}

pub fn is_placeholder(token: &str) -> bool {
    token.starts_with("[slot-") && token.ends_with(']')
}

/// Lowercases, splits on whitespace and appends the end marker.
pub fn tokenize_delex(delex_text: &str) -> Vec<String> {
    let mut tokens: Vec<String> = delex_text
        .split_whitespace()
        .map(str::to_lowercase)
        .collect();
    if tokens.last().map(String::as_str) != Some(EOS) {
        tokens.push(EOS.to_string());
    }
    tokens
}

enum Segment {
    Text(String),
    Slot(String),
}

/// Replaces every case-insensitive occurrence of each slot value with its
/// placeholder, longest value first, and tokenizes the result.
///
/// Replaced spans are never searched again, so a shorter value cannot match
/// inside an already substituted region.
pub fn delexicalize(text: &str, da: &DialogAct) -> Vec<String> {
    let mut values: Vec<(String, String)> = Vec::new();
    for p in &da.pairs {
        let v = p.value.trim().to_lowercase();
        if v.is_empty() || values.iter().any(|(x, _)| *x == v) {
            continue;
        }
        values.push((v, placeholder(&da.domain, &p.slot)));
    }
    // stable: equal lengths keep pair order
    values.sort_by_key(|(v, _)| std::cmp::Reverse(v.chars().count()));

    let mut segments = vec![Segment::Text(text.to_lowercase())];
    for (value, ph) in &values {
        let mut next = Vec::with_capacity(segments.len());
        for seg in segments {
            match seg {
                Segment::Text(s) => {
                    let mut rest = s.as_str();
                    while let Some(pos) = rest.find(value.as_str()) {
                        next.push(Segment::Text(rest[..pos].to_string()));
                        next.push(Segment::Slot(ph.clone()));
                        rest = &rest[pos + value.len()..];
                    }
                    next.push(Segment::Text(rest.to_string()));
                }
                slot => next.push(slot),
            }
        }
        segments = next;
    }

    let mut tokens = Vec::new();
    for seg in segments {
        match seg {
            Segment::Text(s) => tokens.extend(s.split_whitespace().map(str::to_string)),
            Segment::Slot(ph) => tokens.push(ph),
        }
    }
    tokens.push(EOS.to_string());
    tokens
}
