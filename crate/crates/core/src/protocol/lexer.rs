//! Lenient lexer for the tagged trajectory grammar.
//!
//! The lexer never fails. Every byte of the input ends up inside exactly one
//! clean segment, one free-text gap, or one structural defect.

use serde::{Deserialize, Serialize};

/// Byte range `[start, end)` into the source text.
pub type Span = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Think,
    GraphRag,
    Llm,
    Search,
    Information,
    Answer,
    FreeText,
}

impl SegmentKind {
    pub const TAGGED: [SegmentKind; 6] = [
        SegmentKind::Think,
        SegmentKind::GraphRag,
        SegmentKind::Llm,
        SegmentKind::Search,
        SegmentKind::Information,
        SegmentKind::Answer,
    ];

    /// Tag name used inside `<...>`, `None` for free text.
    pub fn tag(self) -> Option<&'static str> {
        match self {
            SegmentKind::Think => Some("think"),
            SegmentKind::GraphRag => Some("graphrag"),
            SegmentKind::Llm => Some("llm"),
            SegmentKind::Search => Some("search"),
            SegmentKind::Information => Some("information"),
            SegmentKind::Answer => Some("answer"),
            SegmentKind::FreeText => None,
        }
    }

    pub fn from_tag(name: &str) -> Option<SegmentKind> {
        SegmentKind::TAGGED.into_iter().find(|k| k.tag() == Some(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub content: String,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    NoValidTags,
    UnclosedTag,
    MismatchedTag,
    NestedTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralDefect {
    pub kind: DefectKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Marker {
    kind: SegmentKind,
    closing: bool,
    start: usize,
    end: usize,
}

/// Finds every well-formed `<tag>` / `</tag>` marker for the six known tags.
fn scan_markers(text: &str) -> Vec<Marker> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let closing = bytes.get(i + 1) == Some(&b'/');
        let name_start = if closing { i + 2 } else { i + 1 };
        let Some(rel) = bytes[name_start.min(bytes.len())..].iter().position(|&b| b == b'>') else {
            break;
        };
        let name_end = name_start + rel;
        // All tag names are ASCII, so a non-ASCII byte can never be part of a match.
        match std::str::from_utf8(&bytes[name_start..name_end])
            .ok()
            .and_then(SegmentKind::from_tag)
        {
            Some(kind) => {
                out.push(Marker { kind, closing, start: i, end: name_end + 1 });
                i = name_end + 1;
            }
            None => i += 1,
        }
    }
    out
}

/// Splits raw model output into tagged segments, free-text gaps and defects.
///
/// Free text between tagged regions (including whitespace-only gaps) is
/// returned as `FreeText` segments so that all spans together tile the input.
pub fn tokenize(text: &str) -> (Vec<Segment>, Vec<StructuralDefect>) {
    let markers = scan_markers(text);
    let mut segments = Vec::new();
    let mut defects = Vec::new();

    if markers.is_empty() {
        defects.push(StructuralDefect { kind: DefectKind::NoValidTags, span: (0, text.len()) });
        return (segments, defects);
    }

    let mut cursor = 0usize;
    let mut stack: Vec<Marker> = Vec::new();
    let mut nested = false;

    let flush_gap = |segments: &mut Vec<Segment>, from: usize, to: usize| {
        if to > from {
            segments.push(Segment {
                kind: SegmentKind::FreeText,
                content: text[from..to].to_string(),
                span: (from, to),
            });
        }
    };

    for m in markers {
        if !m.closing {
            if stack.is_empty() {
                flush_gap(&mut segments, cursor, m.start);
                cursor = m.start;
                nested = false;
            } else {
                nested = true;
            }
            stack.push(m);
            continue;
        }

        let Some(top) = stack.last().copied() else {
            // Stray closing tag with nothing open.
            flush_gap(&mut segments, cursor, m.start);
            defects.push(StructuralDefect { kind: DefectKind::MismatchedTag, span: (m.start, m.end) });
            cursor = m.end;
            continue;
        };

        if top.kind != m.kind {
            defects.push(StructuralDefect { kind: DefectKind::MismatchedTag, span: (cursor, m.end) });
            stack.clear();
            cursor = m.end;
            continue;
        }

        stack.pop();
        if !stack.is_empty() {
            continue;
        }
        if nested {
            defects.push(StructuralDefect { kind: DefectKind::NestedTag, span: (cursor, m.end) });
        } else {
            segments.push(Segment {
                kind: m.kind,
                content: text[top.end..m.start].to_string(),
                span: (top.start, m.end),
            });
        }
        cursor = m.end;
    }

    if !stack.is_empty() {
        let kind = if nested { DefectKind::NestedTag } else { DefectKind::UnclosedTag };
        defects.push(StructuralDefect { kind, span: (cursor, text.len()) });
    } else {
        flush_gap(&mut segments, cursor, text.len());
    }

    (segments, defects)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(segs: &[Segment]) -> Vec<SegmentKind> {
        segs.iter().map(|s| s.kind).collect()
    }

    #[test]
    fn minimal_well_formed() {
        let (segs, defects) = tokenize("<think>a</think><answer>b</answer>");
        assert!(defects.is_empty());
        assert_eq!(kinds(&segs), vec![SegmentKind::Think, SegmentKind::Answer]);
        assert_eq!(segs[0].content, "a");
        assert_eq!(segs[1].content, "b");
        assert_eq!(segs[1].span, (16, 34));
    }

    #[test]
    fn nested_is_a_defect() {
        let (segs, defects) = tokenize("<think>a<answer>b</answer></think>");
        assert!(segs.is_empty());
        assert_eq!(defects.len(), 1);
        assert_eq!(defects[0].kind, DefectKind::NestedTag);
        assert_eq!(defects[0].span, (0, 34));
    }

    #[test]
    fn no_tags() {
        let (segs, defects) = tokenize("no tags here at all");
        assert!(segs.is_empty());
        assert_eq!(defects, vec![StructuralDefect { kind: DefectKind::NoValidTags, span: (0, 19) }]);
    }

    #[test]
    fn unclosed_and_mismatched() {
        let (_, d) = tokenize("<think>a</think><answer>b");
        assert_eq!(d[0].kind, DefectKind::UnclosedTag);
        assert_eq!(d[0].span, (16, 25));

        let (_, d) = tokenize("<think>a</answer>");
        assert_eq!(d[0].kind, DefectKind::MismatchedTag);

        let (segs, d) = tokenize("x</think><answer>b</answer>");
        assert_eq!(d[0].kind, DefectKind::MismatchedTag);
        assert_eq!(d[0].span, (1, 9));
        assert_eq!(kinds(&segs), vec![SegmentKind::FreeText, SegmentKind::Answer]);
    }

    #[test]
    fn unknown_tags_are_free_text() {
        let (segs, d) = tokenize("<foo>x</foo><answer>y</answer>");
        assert!(d.is_empty());
        assert_eq!(segs[0].kind, SegmentKind::FreeText);
        assert_eq!(segs[0].content, "<foo>x</foo>");
    }

    #[test]
    fn non_ascii_content() {
        let (segs, d) = tokenize("<answer>24 January 76 – 10 July 138</answer>é<");
        assert!(d.is_empty());
        assert_eq!(segs[0].content, "24 January 76 – 10 July 138");
        assert_eq!(segs[1].content, "é<");
    }
}
