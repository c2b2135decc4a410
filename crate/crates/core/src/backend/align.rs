use std::sync::LazyLock;

use regex::Regex;

use crate::score::{Segment, Span};

static WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{Alphabetic}\p{N}]+(?:['’][\p{Alphabetic}]+)*").unwrap());

/// Tags each token with the segment sharing the most bytes with it. Ties go
/// to the region listed first; special markers and tokens covering no
/// labelled text become TEMPLATE.
pub fn assign_segments(spans: &[Span], special: &[bool], segments: &[(Span, Segment)]) -> Vec<Segment> {
    spans
        .iter()
        .zip(special)
        .map(|(span, &is_special)| {
            if is_special {
                return Segment::Template;
            }
            let mut best: Option<(usize, Segment)> = None;
            for (region, tag) in segments {
                let shared = span.overlap(region);
                if shared > 0 && best.is_none_or(|(b, _)| shared > b) {
                    best = Some((shared, *tag));
                }
            }
            best.map_or(Segment::Template, |(_, tag)| tag)
        })
        .collect()
}

/// Byte spans of the words in `text` (letters and digits, with inner
/// apostrophes).
pub fn word_spans(text: &str) -> Vec<Span> {
    WORD.find_iter(text).map(|m| Span::new(m.start(), m.end())).collect()
}
