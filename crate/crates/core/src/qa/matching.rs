use super::exec::Answer;
use crate::eval::Annotation;

/// Absolute float tolerance used when none is given.
pub const DEFAULT_FLOAT_TOL: f64 = 1e-6;

fn normalise(s: &str) -> String {
    s.trim().to_lowercase()
}

fn same_text(a: &str, b: &str) -> bool {
    let (a, b) = (normalise(a), normalise(b));
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Multiset equality after trimming and lowercasing; numeric strings
/// compare by value.
pub fn texts_match(predicted: &[String], gold: &[String]) -> bool {
    if predicted.len() != gold.len() {
        return false;
    }
    let mut used = vec![false; gold.len()];
    predicted.iter().all(
        |p| match (0..gold.len()).find(|&i| !used[i] && same_text(p, &gold[i])) {
            Some(i) => {
                used[i] = true;
                true
            }
            None => false,
        },
    )
}

/// Float within tolerance, or the text multisets agree.
pub fn match_denotation(
    predicted: &Answer,
    gold_texts: &[String],
    gold_float: Option<f64>,
    float_tol: f64,
) -> bool {
    if let (Some(p), Some(g)) = (predicted.float_value, gold_float) {
        if (p - g).abs() <= float_tol {
            return true;
        }
    }
    texts_match(&predicted.texts, gold_texts)
}

/// Denotation match of a predicted answer against an annotation.
pub fn match_answers(predicted: &Answer, gold: &Annotation, float_tol: f64) -> bool {
    match_denotation(predicted, &gold.answer_text, gold.float_answer, float_tol)
}
