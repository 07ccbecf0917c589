use super::{Document, Sentence};

/// Tokens ending in '.' that never close a sentence.
const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "cf.", "vs.", "approx.", "sr.", "jr.", "inc.", "ltd.", "co.", "corp.", "mr.",
    "mrs.", "ms.", "dr.", "prof.", "st.", "no.", "dept.", "u.s.", "ph.d.", "b.s.", "m.s.", "b.a.",
];

/// Rule-based segmentation.
///
/// A break falls after `.`, `!` or `?` when followed by whitespace and then an
/// uppercase letter or digit, unless the token is a known abbreviation or the
/// punctuation sits inside a matched pair of parentheses. A whitespace run with
/// two or more newlines always breaks. Segments are trimmed; empty ones vanish.
pub fn split_sentences(doc: &Document) -> Vec<Sentence> {
    let chars: Vec<char> = doc.text.chars().collect();
    let n = chars.len();
    let protected = parenthesized(&chars);

    let mut breaks = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            let start = i;
            let mut newlines = 0;
            while i < n && chars[i].is_whitespace() {
                if chars[i] == '\n' {
                    newlines += 1;
                }
                i += 1;
            }
            if newlines >= 2 {
                breaks.push(start);
            }
            continue;
        }
        if matches!(c, '.' | '!' | '?') && !protected[i] {
            let mut j = i + 1;
            while j < n && chars[j].is_whitespace() {
                j += 1;
            }
            let followed = j > i + 1
                && j < n
                && (chars[j].is_uppercase() || chars[j].is_ascii_digit());
            if followed && !(c == '.' && is_abbreviation(&chars, i)) {
                breaks.push(i + 1);
            }
        }
        i += 1;
    }
    breaks.push(n);

    let mut sentences = Vec::new();
    let mut seg_start = 0;
    for b in breaks {
        if b <= seg_start {
            continue;
        }
        let mut s = seg_start;
        let mut e = b;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            sentences.push(Sentence {
                doc_id: doc.id.clone(),
                index: sentences.len(),
                text: chars[s..e].iter().collect(),
                start: s,
                end: e,
            });
        }
        seg_start = b;
    }
    sentences
}

/// Marks positions strictly inside a matched `(` ... `)` pair.
fn parenthesized(chars: &[char]) -> Vec<bool> {
    let mut inside = vec![false; chars.len()];
    let mut stack = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '(' => stack.push(i),
            ')' => {
                if let Some(open) = stack.pop() {
                    for flag in &mut inside[open + 1..i] {
                        *flag = true;
                    }
                }
            }
            _ => {}
        }
    }
    inside
}

fn is_abbreviation(chars: &[char], dot: usize) -> bool {
    let mut start = dot;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    let token: String = chars[start..=dot]
        .iter()
        .skip_while(|c| matches!(c, '(' | '"' | '\'' | '['))
        .flat_map(|c| c.to_lowercase())
        .collect();
    ABBREVIATIONS.contains(&token.as_str())
}
