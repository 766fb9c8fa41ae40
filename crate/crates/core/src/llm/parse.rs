//! Extracting ranked items from free-form answer text.

use std::sync::LazyLock;

use regex::Regex;

pub const DEFAULT_MAX_ITEMS: usize = 5;

static ENUMERATOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\(?\d+[.):]|[-*•·–])\s*").expect("valid enumerator pattern"));
static TRAILING_PAREN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*\([^()]*\)\s*$").expect("valid pattern"));

/// Up to `max_items` item names in order of appearance.
///
/// If any line starts with an enumerator (`1.`, `2)`, `-`, `•`, …) only those
/// lines count, so a preamble sentence is skipped; otherwise every nonempty
/// line is an item. Each item loses its enumerator, anything after the first
/// colon, a trailing parenthetical, markdown emphasis and trailing
/// punctuation.
pub fn parse_ranked_list(raw: &str, max_items: usize) -> Vec<String> {
    let lines: Vec<&str> = raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let enumerated: Vec<&str> = lines.iter().copied().filter(|l| ENUMERATOR.is_match(l)).collect();
    let candidates = if enumerated.is_empty() { lines } else { enumerated };
    candidates
        .into_iter()
        .filter_map(clean_item)
        .take(max_items)
        .collect()
}

fn clean_item(line: &str) -> Option<String> {
    let body = ENUMERATOR.replace(line, "");
    let body = body.replace("**", "").replace("__", "");
    let head = body.split(':').next().unwrap_or_default();
    let head = TRAILING_PAREN.replace(head, "");
    let item = head
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && c != ')')
        .trim();
    (!item.is_empty()).then(|| item.to_owned())
}
