//! Structured-output parsing for agent completions.
//!
//! Parsing is pure and total per architecture: a completion either yields a
//! [`ParsedAction`] or a [`ParseError`] describing why. The re-prompt and
//! fail-soft policies live in the proposal loop, not here.

use serde::Deserialize;
use thiserror::Error;

use crate::mdp::Action;

use super::{ArchitectureName, ParsedAction};

/// Why a completion could not be parsed.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty completion")]
    Empty,

    #[error("no structured block found")]
    MissingBlock,

    #[error("structured block is not valid JSON: {0}")]
    BadJson(String),

    #[error("structured block is missing the {0:?} field")]
    MissingField(&'static str),

    #[error("no action line found (expected Search[...] or Finish[...])")]
    MissingActionLine,

    #[error("no answer marker found (expected a line starting with \"Answer:\")")]
    MissingAnswerMarker,

    #[error("search query is empty")]
    EmptyQuery,
}

#[derive(Deserialize)]
struct StructuredOutput {
    #[serde(default)]
    predicted_answer: Option<String>,
    #[serde(default)]
    generated_query: Option<String>,
}

/// Parses a completion under the conventions of `arch`.
pub fn parse_action(arch: ArchitectureName, completion: &str) -> Result<ParsedAction, ParseError> {
    if completion.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    match arch {
        ArchitectureName::Direct => parse_whole_answer(completion),
        ArchitectureName::Cot | ArchitectureName::Rag => parse_answer_marker(completion),
        ArchitectureName::React => parse_bracket_action(completion),
        ArchitectureName::SearchO1 => parse_structured(completion, false),
        ArchitectureName::Re2search => parse_structured(completion, true),
    }
}

fn parse_whole_answer(completion: &str) -> Result<ParsedAction, ParseError> {
    let answer = completion.trim().to_string();
    Ok(ParsedAction {
        action: Action::Answer(answer.clone()),
        predicted_answer: Some(answer),
        reasoning_text: String::new(),
        raw: completion.to_string(),
    })
}

fn parse_answer_marker(completion: &str) -> Result<ParsedAction, ParseError> {
    let lower = completion.to_lowercase();
    let pos = lower.rfind("answer:").ok_or(ParseError::MissingAnswerMarker)?;
    let answer = completion[pos + "answer:".len()..].trim().to_string();
    if answer.is_empty() {
        return Err(ParseError::MissingAnswerMarker);
    }
    Ok(ParsedAction {
        action: Action::Answer(answer.clone()),
        predicted_answer: Some(answer),
        reasoning_text: completion[..pos].trim().to_string(),
        raw: completion.to_string(),
    })
}

fn parse_bracket_action(completion: &str) -> Result<ParsedAction, ParseError> {
    let search_pos = completion.rfind("Search[");
    let finish_pos = completion.rfind("Finish[");
    let (pos, is_search) = match (search_pos, finish_pos) {
        (Some(s), Some(f)) => {
            if s > f {
                (s, true)
            } else {
                (f, false)
            }
        }
        (Some(s), None) => (s, true),
        (None, Some(f)) => (f, false),
        (None, None) => return Err(ParseError::MissingActionLine),
    };
    let open = pos + if is_search { "Search[".len() } else { "Finish[".len() };
    let close = completion[open..]
        .find(']')
        .ok_or(ParseError::MissingActionLine)?;
    let payload = completion[open..open + close].trim().to_string();
    let reasoning = completion[..pos].trim().to_string();
    if is_search {
        if payload.is_empty() {
            return Err(ParseError::EmptyQuery);
        }
        Ok(ParsedAction {
            action: Action::Search(payload),
            predicted_answer: None,
            reasoning_text: reasoning,
            raw: completion.to_string(),
        })
    } else {
        Ok(ParsedAction {
            action: Action::Answer(payload.clone()),
            predicted_answer: Some(payload),
            reasoning_text: reasoning,
            raw: completion.to_string(),
        })
    }
}

fn parse_structured(
    completion: &str,
    require_predicted_answer: bool,
) -> Result<ParsedAction, ParseError> {
    let (block, block_start) = extract_structured_block(completion).ok_or(ParseError::MissingBlock)?;
    let parsed: StructuredOutput = lenient_json(&block)?;
    let predicted_answer = parsed.predicted_answer;
    if require_predicted_answer && predicted_answer.is_none() {
        return Err(ParseError::MissingField("predicted_answer"));
    }
    let reasoning = completion[..block_start].trim().to_string();
    let query = parsed.generated_query.unwrap_or_default();
    let query = query.trim();
    if query.is_empty() || query.eq_ignore_ascii_case("none") {
        // No query generated: the predicted answer is the action. An absent
        // or empty answer becomes the empty answer (scores 0) rather than a
        // crash.
        let answer = predicted_answer.clone().unwrap_or_default();
        Ok(ParsedAction {
            action: Action::Answer(answer),
            predicted_answer,
            reasoning_text: reasoning,
            raw: completion.to_string(),
        })
    } else {
        Ok(ParsedAction {
            action: Action::Search(query.to_string()),
            predicted_answer,
            reasoning_text: reasoning,
            raw: completion.to_string(),
        })
    }
}

/// Locates the structured block: the last fenced code block containing a
/// JSON object, falling back to the last brace-balanced object in the raw
/// text. Returns the block and its byte offset in the completion.
fn extract_structured_block(completion: &str) -> Option<(String, usize)> {
    if let Some(found) = last_fenced_object(completion) {
        return Some(found);
    }
    last_balanced_object(completion)
}

fn last_fenced_object(completion: &str) -> Option<(String, usize)> {
    let mut best: Option<(String, usize)> = None;
    let mut rest = completion;
    let mut offset = 0;
    while let Some(open) = rest.find("```") {
        let after_open = open + 3;
        // Skip the info string (e.g. "json") to the end of line.
        let body_start = match rest[after_open..].find('\n') {
            Some(nl) => after_open + nl + 1,
            None => break,
        };
        let Some(close) = rest[body_start..].find("```") else {
            break;
        };
        let body = &rest[body_start..body_start + close];
        if body.contains('{') {
            if let Some((obj, rel)) = last_balanced_object(body) {
                best = Some((obj, offset + body_start + rel));
            }
        }
        let consumed = body_start + close + 3;
        offset += consumed;
        rest = &rest[consumed..];
    }
    best
}

/// Finds the last `{...}` region with balanced braces, ignoring braces
/// inside JSON string literals.
fn last_balanced_object(text: &str) -> Option<(String, usize)> {
    let bytes = text.as_bytes();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = balanced_end(text, i) {
                best = Some((i, end));
                i = end;
                continue;
            }
        }
        i += 1;
    }
    best.map(|(start, end)| (text[start..end].to_string(), start))
}

fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses JSON, tolerating trailing commas before `}` or `]` (a common
/// model-output artifact).
fn lenient_json<T: serde::de::DeserializeOwned>(block: &str) -> Result<T, ParseError> {
    match serde_json::from_str(block) {
        Ok(v) => Ok(v),
        Err(first_err) => {
            let stripped = strip_trailing_commas(block);
            serde_json::from_str(&stripped).map_err(|_| ParseError::BadJson(first_err.to_string()))
        }
    }
}

fn strip_trailing_commas(block: &str) -> String {
    let bytes = block.as_bytes();
    let mut out = String::with_capacity(block.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        let c = b as char;
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        if b == b'"' {
            in_string = true;
            out.push(c);
            continue;
        }
        if b == b',' {
            // Drop the comma when the next non-whitespace byte closes a
            // container.
            let next = bytes[i + 1..].iter().find(|&&n| !n.is_ascii_whitespace());
            if matches!(next, Some(b'}') | Some(b']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Extracts and parses the last JSON object of a completion into `T`,
/// tolerating fences and trailing commas. Used wherever a prompt mandates a
/// JSON tail (structured actions, ranking annotations).
pub fn extract_last_json<T: serde::de::DeserializeOwned>(
    completion: &str,
) -> Result<T, ParseError> {
    let (block, _) = extract_structured_block(completion).ok_or(ParseError::MissingBlock)?;
    lenient_json(&block)
}

/// Best-effort answer extraction for the fail-soft path: a structured block
/// answer if one exists, otherwise text after an `Answer:` marker, otherwise
/// the last non-empty line.
pub fn best_effort_answer(completion: &str) -> String {
    if let Some((block, _)) = extract_structured_block(completion) {
        if let Ok(parsed) = lenient_json::<StructuredOutput>(&block) {
            if let Some(answer) = parsed.predicted_answer {
                return answer;
            }
        }
    }
    let lower = completion.to_lowercase();
    if let Some(pos) = lower.rfind("answer:") {
        let rest = completion[pos + "answer:".len()..].trim();
        if !rest.is_empty() {
            return rest.to_string();
        }
    }
    completion
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_none_query_is_an_answer() {
        let parsed = parse_action(
            ArchitectureName::Re2search,
            r#"{"predicted_answer":"X","generated_query":"None"}"#,
        )
        .unwrap();
        assert_eq!(parsed.action, Action::Answer("X".into()));
        assert_eq!(parsed.predicted_answer.as_deref(), Some("X"));
    }

    #[test]
    fn structured_query_is_a_search() {
        let parsed = parse_action(
            ArchitectureName::Re2search,
            r#"{"predicted_answer":"Mackenzie Bowell","generated_query":"Who is the last surviving Canadian father of Confederation?"}"#,
        )
        .unwrap();
        assert_eq!(
            parsed.action,
            Action::Search("Who is the last surviving Canadian father of Confederation?".into())
        );
        assert_eq!(parsed.predicted_answer.as_deref(), Some("Mackenzie Bowell"));
    }

    #[test]
    fn fenced_block_wins_over_earlier_braces() {
        let completion = r#"### Step-by-step Reasoning
Some reasoning mentioning {braces} loosely... here is a draft: {"predicted_answer": "draft"}

### Structured Output
```json
{
    "predicted_answer": "final",
    "generated_query": "None",
}
```"#;
        let parsed = parse_action(ArchitectureName::Re2search, completion).unwrap();
        assert_eq!(parsed.action, Action::Answer("final".into()));
        assert!(parsed.reasoning_text.contains("Some reasoning"));
    }

    #[test]
    fn trailing_comma_is_tolerated() {
        let parsed = parse_action(
            ArchitectureName::SearchO1,
            "```json\n{\"predicted_answer\": \"a\", \"generated_query\": \"next\",}\n```",
        )
        .unwrap();
        assert_eq!(parsed.action, Action::Search("next".into()));
    }

    #[test]
    fn empty_completion_is_an_error() {
        assert_eq!(
            parse_action(ArchitectureName::Re2search, "  \n"),
            Err(ParseError::Empty)
        );
    }

    #[test]
    fn re2search_requires_predicted_answer() {
        let result = parse_action(
            ArchitectureName::Re2search,
            r#"{"generated_query":"something"}"#,
        );
        assert_eq!(result, Err(ParseError::MissingField("predicted_answer")));
        // search_o1 tolerates a missing predicted answer while searching.
        let parsed = parse_action(
            ArchitectureName::SearchO1,
            r#"{"generated_query":"something"}"#,
        )
        .unwrap();
        assert_eq!(parsed.action, Action::Search("something".into()));
    }

    #[test]
    fn empty_answer_with_none_query_scores_as_empty_answer() {
        let parsed = parse_action(
            ArchitectureName::Re2search,
            r#"{"predicted_answer":"","generated_query":"None"}"#,
        )
        .unwrap();
        assert_eq!(parsed.action, Action::Answer(String::new()));
    }

    #[test]
    fn react_brackets() {
        let parsed = parse_action(
            ArchitectureName::React,
            "I should look this up.\nSearch[capital of France]",
        )
        .unwrap();
        assert_eq!(parsed.action, Action::Search("capital of France".into()));
        assert_eq!(parsed.reasoning_text, "I should look this up.");

        let parsed = parse_action(ArchitectureName::React, "I know it now.\nFinish[Paris]").unwrap();
        assert_eq!(parsed.action, Action::Answer("Paris".into()));
    }

    #[test]
    fn react_takes_the_last_action() {
        let parsed = parse_action(
            ArchitectureName::React,
            "Search[first idea]\nActually, better:\nSearch[second idea]",
        )
        .unwrap();
        assert_eq!(parsed.action, Action::Search("second idea".into()));
    }

    #[test]
    fn cot_extracts_after_answer_marker() {
        let parsed = parse_action(
            ArchitectureName::Cot,
            "Step 1: think.\nStep 2: conclude.\nAnswer: 42",
        )
        .unwrap();
        assert_eq!(parsed.action, Action::Answer("42".into()));
        assert!(parsed.reasoning_text.contains("Step 1"));
    }

    #[test]
    fn cot_without_marker_is_malformed() {
        assert_eq!(
            parse_action(ArchitectureName::Cot, "just rambling"),
            Err(ParseError::MissingAnswerMarker)
        );
    }

    #[test]
    fn direct_takes_the_whole_completion() {
        let parsed = parse_action(ArchitectureName::Direct, "  Paris \n").unwrap();
        assert_eq!(parsed.action, Action::Answer("Paris".into()));
    }

    #[test]
    fn best_effort_prefers_structured_then_marker_then_last_line() {
        assert_eq!(
            best_effort_answer(r#"junk {"predicted_answer":"X"} junk"#),
            "X"
        );
        assert_eq!(best_effort_answer("blah\nAnswer: Y"), "Y");
        assert_eq!(best_effort_answer("first\nlast line"), "last line");
    }
}
