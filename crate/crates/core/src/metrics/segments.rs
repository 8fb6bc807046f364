use crate::config::TagScheme;
use crate::error::{Error, Result};

/// Labelled span `[start, end]`, both ends inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub kind: String,
    pub start: usize,
    pub end: usize,
}

fn split(label: &str, scheme: TagScheme) -> Result<(char, &str)> {
    if label == "O" {
        return Ok(('O', ""));
    }
    let allowed: &[char] = match scheme {
        TagScheme::Bio => &['B', 'I'],
        TagScheme::Bioes => &['B', 'I', 'E', 'S'],
    };
    let mut chars = label.chars();
    let prefix = chars.next().unwrap_or(' ');
    match (chars.next(), allowed.contains(&prefix)) {
        (Some('-'), true) if label.len() > 2 => Ok((prefix, &label[2..])),
        _ => Err(Error::Label(format!("label {label:?} is not valid under the {scheme} scheme"))),
    }
}

fn ends(prev: char, tag: char, prev_kind: &str, kind: &str) -> bool {
    matches!(
        (prev, tag),
        ('B', 'B' | 'S' | 'O') | ('I', 'B' | 'S' | 'O') | ('E', _) | ('S', _)
    ) || (prev != 'O' && prev_kind != kind)
}

fn starts(prev: char, tag: char, prev_kind: &str, kind: &str) -> bool {
    matches!(
        (prev, tag),
        (_, 'B' | 'S') | ('E' | 'S' | 'O', 'E' | 'I')
    ) || (tag != 'O' && prev_kind != kind)
}

/// Chunks in the lenient convention of the CoNLL evaluation script: an `I-`
/// or `E-` that does not continue a same-typed chunk opens a new one.
pub fn extract_segments<S: AsRef<str>>(labels: &[S], scheme: TagScheme) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    let (mut prev, mut prev_kind) = ('O', "");
    let mut open: Option<(String, usize)> = None;
    for (i, label) in labels.iter().enumerate() {
        let (tag, kind) = split(label.as_ref(), scheme)?;
        if open.is_some() && ends(prev, tag, prev_kind, kind) {
            let (k, s) = open.take().expect("open chunk");
            out.push(Segment { kind: k, start: s, end: i - 1 });
        }
        if starts(prev, tag, prev_kind, kind) {
            open = Some((kind.to_string(), i));
        }
        prev = tag;
        prev_kind = kind;
    }
    if let Some((kind, start)) = open {
        out.push(Segment { kind, start, end: labels.len() - 1 });
    }
    Ok(out)
}

/// Inverse of [`extract_segments`] on well-formed input.
pub fn segments_to_labels(segments: &[Segment], len: usize, scheme: TagScheme) -> Vec<String> {
    let mut labels = vec!["O".to_string(); len];
    for s in segments {
        for (i, label) in labels.iter_mut().enumerate().take(s.end + 1).skip(s.start) {
            let prefix = match scheme {
                TagScheme::Bio => if i == s.start { "B" } else { "I" },
                TagScheme::Bioes => match (i == s.start, i == s.end) {
                    (true, true) => "S",
                    (true, false) => "B",
                    (false, true) => "E",
                    (false, false) => "I",
                },
            };
            *label = format!("{prefix}-{}", s.kind);
        }
    }
    labels
}
