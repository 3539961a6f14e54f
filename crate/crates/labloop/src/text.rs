//! Small text helpers shared by the prompt builders and parsers.

use std::collections::BTreeMap;

/// Lowercase and collapse all whitespace runs to single spaces.
///
/// This is the canonical form used for memory dedup.
pub(crate) fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Split a model response into marker-labelled sections.
///
/// A section starts at a line beginning with `MARKER:` (one of the given
/// markers) and runs until the next marker line or the end of the text.
/// Returns one entry per marker occurrence, in order of appearance, so
/// repeated markers (e.g. several `DIRECTION:` lines) are all captured.
pub(crate) fn parse_sections(text: &str, markers: &[&str]) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut current: Option<(String, Vec<String>)> = None;

    for line in text.lines() {
        let trimmed = line.trim_start();
        let hit = markers.iter().find_map(|m| {
            let prefix = format!("{m}:");
            trimmed
                .strip_prefix(&prefix)
                .map(|rest| (m.to_string(), rest.trim().to_string()))
        });
        match hit {
            Some((marker, first)) => {
                if let Some((m, lines)) = current.take() {
                    out.push((m, lines.join("\n").trim().to_string()));
                }
                current = Some((marker, vec![first]));
            }
            None => {
                if let Some((_, lines)) = current.as_mut() {
                    lines.push(line.to_string());
                }
            }
        }
    }
    if let Some((m, lines)) = current.take() {
        out.push((m, lines.join("\n").trim().to_string()));
    }
    out
}

/// First occurrence of each marker, as a map. Empty sections are kept so the
/// caller can distinguish "absent" from "present but blank".
pub(crate) fn first_sections(text: &str, markers: &[&str]) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for (marker, body) in parse_sections(text, markers) {
        map.entry(marker).or_insert(body);
    }
    map
}

/// All bodies for one marker, in order.
pub(crate) fn all_sections(text: &str, marker: &str) -> Vec<String> {
    parse_sections(text, &[marker])
        .into_iter()
        .map(|(_, body)| body)
        .collect()
}

/// Truncate to the first `n` whitespace-separated words.
pub(crate) fn first_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

/// Last `n` lines of a log, joined back together.
pub(crate) fn tail_lines(text: &str, n: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let start = lines.len().saturating_sub(n);
    lines[start..].join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_whitespace_and_case() {
        assert_eq!(normalize("  Use   Contrastive\nPretraining "), "use contrastive pretraining");
    }

    #[test]
    fn sections_split_on_marker_lines() {
        let text = "METHOD: do the thing\nwith two lines\nPLAN: run it";
        let map = first_sections(text, &["METHOD", "PLAN"]);
        assert_eq!(map["METHOD"], "do the thing\nwith two lines");
        assert_eq!(map["PLAN"], "run it");
    }

    #[test]
    fn repeated_markers_all_captured() {
        let text = "DIRECTION: a\nDIRECTION: b\nnoise\nDIRECTION: c";
        let all = all_sections(text, "DIRECTION");
        assert_eq!(all, vec!["a", "b\nnoise", "c"]);
    }

    #[test]
    fn missing_marker_absent_from_map() {
        let map = first_sections("PLAN: only", &["METHOD", "PLAN"]);
        assert!(!map.contains_key("METHOD"));
    }

    #[test]
    fn tail_keeps_last_lines() {
        let log = (1..=50).map(|i| format!("l{i}")).collect::<Vec<_>>().join("\n");
        let tail = tail_lines(&log, 40);
        assert!(tail.starts_with("l11"));
        assert!(tail.ends_with("l50"));
    }
}
