//! Text reduction: keyword proximity search and page-header search.

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Document text after NFC normalization; offsets are character indices
/// into this text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: &str) -> Self {
        Document {
            id: id.into(),
            text: text.nfc().collect(),
        }
    }

    /// Pages are separated by form feeds.
    pub fn pages(&self) -> Vec<Page> {
        let mut start = 0;
        self.text
            .split('\u{c}')
            .map(|p| {
                let page = Page {
                    start,
                    text: p.to_string(),
                };
                start += p.chars().count() + 1;
                page
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    /// Character offset of the page within its document.
    pub start: usize,
    pub text: String,
}

impl Page {
    pub fn new(text: &str) -> Self {
        Page {
            start: 0,
            text: text.nfc().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSpan {
    pub document: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub keywords: Vec<String>,
}

fn keyword_regex(keyword: &str) -> Option<Regex> {
    let k: String = keyword.trim().nfc().collect();
    if k.is_empty() {
        return None;
    }
    Regex::new(&format!(r"(?i)\b{}\b", regex::escape(&k))).ok()
}

/// Character index of every byte boundary, plus one past the end.
fn char_index(text: &str) -> Vec<usize> {
    let mut map = vec![0; text.len() + 1];
    let mut n = 0;
    for (b, c) in text.char_indices() {
        for slot in &mut map[b..b + c.len_utf8()] {
            *slot = n;
        }
        n += 1;
    }
    map[text.len()] = n;
    map
}

fn ends_sentence(chars: &[char], i: usize) -> bool {
    match chars[i] {
        '\n' => true,
        '.' | '!' | '?' => chars.get(i + 1).is_none_or(|c| c.is_whitespace()),
        _ => false,
    }
}

/// Regions where every keyword occurs with all pairwise start distances at
/// most `window` characters. Each region is widened to sentence boundaries
/// (by at most `window` characters on either side) and overlapping regions
/// are merged.
pub fn keyword_proximity_search(doc: &Document, keywords: &[String], window: usize) -> Vec<TextSpan> {
    let regexes: Vec<(usize, Regex)> = keywords
        .iter()
        .enumerate()
        .filter_map(|(i, k)| keyword_regex(k).map(|r| (i, r)))
        .collect();
    if regexes.is_empty() || window == 0 {
        return Vec::new();
    }
    let needed: Vec<usize> = regexes.iter().map(|(i, _)| *i).collect();
    let idx = char_index(&doc.text);
    let mut hits: Vec<(usize, usize, usize)> = Vec::new();
    for (k, re) in &regexes {
        for m in re.find_iter(&doc.text) {
            hits.push((idx[m.start()], idx[m.end()], *k));
        }
    }
    hits.sort();

    let mut regions: Vec<(usize, usize)> = Vec::new();
    let mut counts = vec![0usize; keywords.len()];
    let mut j = 0;
    for i in 0..hits.len() {
        while j < hits.len() && hits[j].0 - hits[i].0 <= window {
            counts[hits[j].2] += 1;
            j += 1;
        }
        if needed.iter().all(|&k| counts[k] > 0) {
            let end = hits[i..j].iter().map(|h| h.1).max().unwrap_or(hits[i].1);
            regions.push((hits[i].0, end));
        }
        counts[hits[i].2] -= 1;
    }

    let chars: Vec<char> = doc.text.chars().collect();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (s, e) in regions {
        let floor = s.saturating_sub(window);
        let mut a = s;
        while a > floor && !ends_sentence(&chars, a - 1) {
            a -= 1;
        }
        while a < s && chars[a].is_whitespace() {
            a += 1;
        }
        let ceil = (e + window).min(chars.len());
        let mut b = e;
        while b < ceil && !ends_sentence(&chars, b) {
            b += 1;
        }
        if b < chars.len() && b < ceil && chars[b] != '\n' {
            b += 1;
        }
        match spans.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => spans.push((a, b)),
        }
    }

    spans
        .into_iter()
        .map(|(a, b)| {
            let text: String = chars[a..b].iter().collect();
            let found = keywords
                .iter()
                .filter(|k| keyword_regex(k).is_some_and(|r| r.is_match(&text)))
                .cloned()
                .collect();
            TextSpan {
                document: doc.id.clone(),
                start: a,
                end: b,
                text,
                keywords: found,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeaderRules {
    /// Share of a page's lines, from the top, that may hold a header.
    pub top_fraction: f64,
    pub max_line_chars: usize,
}

impl Default for HeaderRules {
    fn default() -> Self {
        HeaderRules {
            top_fraction: 0.15,
            max_line_chars: 60,
        }
    }
}

/// Indices of pages whose top region has an isolated short line matching
/// any keyword.
pub fn header_search(pages: &[Page], keywords: &[String], rules: &HeaderRules) -> Vec<usize> {
    let regexes: Vec<Regex> = keywords.iter().filter_map(|k| keyword_regex(k)).collect();
    pages
        .iter()
        .enumerate()
        .filter(|(_, page)| {
            let lines: Vec<&str> = page.text.lines().collect();
            let top = ((lines.len() as f64) * rules.top_fraction).ceil() as usize;
            let blank = |i: usize| lines[i].trim().is_empty();
            (0..top.min(lines.len())).any(|i| {
                let line = lines[i].trim();
                !line.is_empty()
                    && line.chars().count() < rules.max_line_chars
                    && (i == 0 || blank(i - 1))
                    && (i + 1 == lines.len() || blank(i + 1))
                    && regexes.iter().any(|r| r.is_match(line))
            })
        })
        .map(|(i, _)| i)
        .collect()
}

/// Whole-page span, used to queue header-search hits for classification.
pub fn page_span(doc: &Document, page: &Page, keywords: &[String]) -> TextSpan {
    let found = keywords
        .iter()
        .filter(|k| keyword_regex(k).is_some_and(|r| r.is_match(&page.text)))
        .cloned()
        .collect();
    TextSpan {
        document: doc.id.clone(),
        start: page.start,
        end: page.start + page.text.chars().count(),
        text: page.text.clone(),
        keywords: found,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kw(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn single_sentence() {
        let doc = Document::new("d", "tungsten reserves were 3,400 kt");
        let spans = keyword_proximity_search(&doc, &kw(&["tungsten", "reserves"]), 100);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].text, "tungsten reserves were 3,400 kt");
        assert_eq!((spans[0].start, spans[0].end), (0, 31));
    }

    #[test]
    fn far_apart_keywords() {
        let text = format!("tungsten {} reserves", "x ".repeat(2500));
        let doc = Document::new("d", &text);
        assert!(keyword_proximity_search(&doc, &kw(&["tungsten", "reserves"]), 200).is_empty());
    }

    #[test]
    fn two_clusters_in_offset_order() {
        let first = "Tungsten reserves reached 3,400 kt.";
        let filler = " Lorem ipsum dolor sit amet.".repeat(40);
        let second = " World reserves of tungsten are large.";
        let text = format!("{first}{filler}{second}");
        let doc = Document::new("d", &text);
        let spans = keyword_proximity_search(&doc, &kw(&["tungsten", "reserves"]), 60);
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].text, first);
        assert_eq!(spans[0].start, 0);
        let second_start = first.len() + filler.len() + 1;
        assert_eq!(spans[1].start, second_start);
        assert_eq!(spans[1].text, second.trim_start());
        assert_eq!(spans[0].keywords, kw(&["tungsten", "reserves"]));
    }

    #[test]
    fn whole_word_case_insensitive() {
        let keys = kw(&["tungsten", "reserves"]);
        let doc = Document::new("d", "TUNGSTENITE has reserves.");
        assert!(keyword_proximity_search(&doc, &keys, 40).is_empty());
        let doc = Document::new("d", "Tungsten RESERVES here.");
        let spans = keyword_proximity_search(&doc, &keys, 40);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].text, "Tungsten RESERVES here.");
    }

    #[test]
    fn offsets_are_characters_after_nfc() {
        // "é" written as e + combining acute composes to one character.
        let doc = Document::new("d", "Caf\u{65}\u{301} notes. Tungsten reserves grew.");
        let spans = keyword_proximity_search(&doc, &kw(&["tungsten", "reserves"]), 50);
        assert_eq!(spans[0].start, 12);
        let chars: Vec<char> = doc.text.chars().collect();
        let text: String = chars[spans[0].start..spans[0].end].iter().collect();
        assert_eq!(text, spans[0].text);
    }

    #[test]
    fn decimal_point_is_not_a_sentence_end() {
        let doc = Document::new("d", "Output was 1.5 kt of tungsten. Reserves fell. Other.");
        let spans = keyword_proximity_search(&doc, &kw(&["tungsten", "reserves"]), 30);
        assert_eq!(spans.len(), 1);
        assert!(spans[0].text.starts_with("Output was 1.5"));
    }

    fn page(lines: &[&str]) -> Page {
        Page::new(&lines.join("\n"))
    }

    #[test]
    fn header_rules() {
        let mut body = vec!["", "TUNGSTEN", ""];
        body.extend(std::iter::repeat_n("Domestic production and use: tungsten was mined.", 17));
        let headed = page(&body);
        let mut plain = vec!["", "MOLYBDENUM", ""];
        plain.extend(std::iter::repeat_n("Tungsten is mentioned in this body paragraph only.", 17));
        let body_only = page(&plain);
        let pages = vec![body_only, headed];
        assert_eq!(header_search(&pages, &kw(&["tungsten"]), &HeaderRules::default()), vec![1]);
    }

    #[test]
    fn header_must_be_isolated_and_short() {
        let mut lines = vec!["TUNGSTEN", "attached body line"];
        lines.extend(std::iter::repeat_n("text", 10));
        assert!(header_search(&[page(&lines)], &kw(&["tungsten"]), &HeaderRules::default()).is_empty());
        let long = format!("TUNGSTEN {}", "y".repeat(60));
        let mut lines = vec!["", long.as_str(), ""];
        lines.extend(std::iter::repeat_n("text", 10));
        assert!(header_search(&[page(&lines)], &kw(&["tungsten"]), &HeaderRules::default()).is_empty());
    }

    #[test]
    fn pages_split_on_form_feed() {
        let doc = Document::new("d", "one\ntwo\u{c}three");
        let pages = doc.pages();
        assert_eq!(pages.len(), 2);
        assert_eq!(pages[1].start, 8);
        let span = page_span(&doc, &pages[1], &kw(&["three"]));
        assert_eq!((span.start, span.end), (8, 13));
    }

    proptest! {
        #[test]
        fn widening_window_keeps_regions(
            words in proptest::collection::vec(prop_oneof![Just("alpha"), Just("beta"), Just("gamma"), Just("x."), Just("filler")], 1..80),
            w1 in 1usize..80,
            extra in 0usize..80,
        ) {
            let doc = Document::new("d", &words.join(" "));
            let keys = kw(&["alpha", "beta"]);
            let small = keyword_proximity_search(&doc, &keys, w1);
            let large = keyword_proximity_search(&doc, &keys, w1 + extra);
            for s in &small {
                prop_assert!(large.iter().any(|l| l.start <= s.start && s.end <= l.end));
            }
        }
    }
}
