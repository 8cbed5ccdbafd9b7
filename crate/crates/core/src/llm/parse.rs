//! Turning model replies into answers.

use serde_json::{json, Value};

use crate::qa::{format_float, AggregationOp, Answer};
use crate::table::CellCoord;

use super::LlmError;

/// Longest item (in words) the colon-list fallback accepts.
const MAX_ITEM_WORDS: usize = 4;

/// JSON form the prompt asks for; `parse_qa_response` reads it back.
pub fn render_answer_json(answer: &Answer) -> String {
    let coords: Vec<[usize; 2]> = answer.coordinates.iter().map(|c| [c.row, c.col]).collect();
    json!({
        "texts": answer.texts,
        "float": answer.float_value,
        "coordinates": coords,
    })
    .to_string()
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn coord(v: &Value) -> Option<CellCoord> {
    match v {
        Value::Array(a) if a.len() == 2 => Some(CellCoord::new(
            a[0].as_u64()? as usize,
            a[1].as_u64()? as usize,
        )),
        Value::String(s) => {
            let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
            let (r, c) = inner.split_once(',')?;
            Some(CellCoord::new(
                r.trim().parse().ok()?,
                c.trim().parse().ok()?,
            ))
        }
        _ => None,
    }
}

fn answer_from_object(obj: &serde_json::Map<String, Value>) -> Option<Answer> {
    let texts = match obj.get("texts")? {
        Value::Array(items) => items.iter().map(value_text).collect::<Option<Vec<_>>>()?,
        other => vec![value_text(other)?],
    };
    let float_value = match obj.get("float") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) => s.trim().parse().ok(),
        Some(_) => return None,
    };
    let coordinates = match obj.get("coordinates") {
        Some(Value::Array(items)) => items.iter().map(coord).collect::<Option<Vec<_>>>()?,
        _ => Vec::new(),
    };
    Some(Answer {
        coordinates,
        texts,
        float_value,
        aggregation: AggregationOp::None,
    })
}

/// Last JSON object in the text that has a `texts` field.
fn find_json(raw: &str) -> Option<Answer> {
    let starts: Vec<usize> = raw.match_indices('{').map(|(i, _)| i).collect();
    for &start in starts.iter().rev() {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(obj))) = stream.next() {
            if let Some(a) = answer_from_object(&obj) {
                return Some(a);
            }
        }
    }
    None
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for q in ['\'', '"'] {
        if let Some(inner) = s.strip_prefix(q).and_then(|x| x.strip_suffix(q)) {
            return inner;
        }
    }
    s
}

/// `['a', 'b']` style lists, as in the few-shot answers.
fn find_list(raw: &str) -> Option<Vec<String>> {
    let end = raw.rfind(']')?;
    let start = raw[..end].rfind('[')?;
    let inner = raw[start + 1..end].trim();
    if inner.is_empty() {
        return None;
    }
    let items: Vec<&str> = inner.split(',').map(str::trim).collect();
    let quoted_or_numeric = items.iter().all(|i| {
        (i.len() >= 2 && (i.starts_with('\'') || i.starts_with('"'))) || i.parse::<f64>().is_ok()
    });
    quoted_or_numeric.then(|| items.iter().map(|i| unquote(i).to_string()).collect())
}

fn numbers(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let negative = bytes[i] == b'-' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit();
        if bytes[i].is_ascii_digit() || negative {
            let start = i;
            i += 1;
            while i < bytes.len()
                && (bytes[i].is_ascii_digit()
                    || (bytes[i] == b'.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit()))
            {
                i += 1;
            }
            out.push(&text[start..i]);
        } else {
            i += 1;
        }
    }
    out
}

/// Items after the last `:`, split on commas, newlines and "and".
fn find_enumeration(raw: &str) -> Option<Vec<String>> {
    let (_, tail) = raw.rsplit_once(':')?;
    let tail = tail.replace(" and ", ",").replace('\n', ",");
    let items: Vec<String> = tail
        .split(',')
        .map(|s| {
            s.trim()
                .trim_end_matches(['.', ';', '!'])
                .trim_start_matches(['-', '*'])
                .trim()
                .to_string()
        })
        .map(|s| unquote(&s).to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let short = items
        .iter()
        .all(|i| i.split_whitespace().count() <= MAX_ITEM_WORDS);
    (!items.is_empty() && short).then_some(items)
}

fn texts_answer(texts: Vec<String>) -> Answer {
    let float_value = match texts.as_slice() {
        [only] => only.trim().parse().ok(),
        _ => None,
    };
    Answer {
        coordinates: Vec::new(),
        texts,
        float_value,
        aggregation: AggregationOp::None,
    }
}

/// JSON object, then a bracketed list, then the items after the last colon,
/// then the last number in the text.
pub fn parse_qa_response(raw: &str) -> Result<Answer, LlmError> {
    if let Some(a) = find_json(raw) {
        return Ok(a);
    }
    if let Some(items) = find_list(raw) {
        return Ok(texts_answer(items));
    }
    if let Some(items) = find_enumeration(raw) {
        return Ok(texts_answer(items));
    }
    if let Some(last) = numbers(raw).last() {
        let v: f64 = last
            .parse()
            .map_err(|_| LlmError::Unparseable(raw.to_string()))?;
        return Ok(Answer {
            coordinates: Vec::new(),
            texts: vec![format_float(v)],
            float_value: Some(v),
            aggregation: AggregationOp::None,
        });
    }
    Err(LlmError::Unparseable(raw.to_string()))
}
