//! Prompt templates and state rendering.
//!
//! Templates use `{{placeholder}}` syntax and ship embedded in the binary;
//! any of them can be overridden by a file of the same name in a config
//! directory. Rendering is total: an unexpanded placeholder in the output is
//! a hard error, never a silently broken prompt.

use std::collections::BTreeMap;
use std::path::Path;

use crate::mdp::{Action, Document, Question, RetrievalRecord, State};
use crate::text::truncate_chars;

use super::{AgentError, ArchitectureName};

const BUILTIN_TEMPLATES: &[(&str, &str)] = &[
    ("direct_system", include_str!("../../templates/direct_system.txt")),
    ("direct_user", include_str!("../../templates/direct_user.txt")),
    ("cot_system", include_str!("../../templates/cot_system.txt")),
    ("cot_user", include_str!("../../templates/cot_user.txt")),
    ("rag_system", include_str!("../../templates/rag_system.txt")),
    ("rag_user", include_str!("../../templates/rag_user.txt")),
    ("react_system", include_str!("../../templates/react_system.txt")),
    ("react_user", include_str!("../../templates/react_user.txt")),
    (
        "react_user_forced",
        include_str!("../../templates/react_user_forced.txt"),
    ),
    (
        "search_o1_system",
        include_str!("../../templates/search_o1_system.txt"),
    ),
    (
        "search_o1_user",
        include_str!("../../templates/search_o1_user.txt"),
    ),
    (
        "search_o1_user_forced",
        include_str!("../../templates/search_o1_user_forced.txt"),
    ),
    (
        "re2search_system",
        include_str!("../../templates/re2search_system.txt"),
    ),
    (
        "re2search_user",
        include_str!("../../templates/re2search_user.txt"),
    ),
    (
        "re2search_user_forced",
        include_str!("../../templates/re2search_user_forced.txt"),
    ),
    (
        "summarizer_system",
        include_str!("../../templates/summarizer_system.txt"),
    ),
    (
        "summarizer_user",
        include_str!("../../templates/summarizer_user.txt"),
    ),
    (
        "annotator_system",
        include_str!("../../templates/annotator_system.txt"),
    ),
    (
        "annotator_user",
        include_str!("../../templates/annotator_user.txt"),
    ),
];

/// Rendering knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptOptions {
    /// Per-document character budget when raw documents are rendered into
    /// history sections (non-summarizing agents).
    pub doc_char_budget: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            doc_char_budget: 1500,
        }
    }
}

/// The per-architecture system/user templates plus the summarization and
/// ranking templates.
#[derive(Debug, Clone)]
pub struct PromptBundle {
    templates: BTreeMap<String, String>,
    pub options: PromptOptions,
}

impl Default for PromptBundle {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptBundle {
    /// The embedded default templates.
    pub fn builtin() -> Self {
        PromptBundle {
            templates: BUILTIN_TEMPLATES
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            options: PromptOptions::default(),
        }
    }

    /// Builtin templates with any `<name>.txt` files found in `dir` taking
    /// precedence.
    pub fn with_overrides_from_dir(dir: &Path) -> Result<Self, AgentError> {
        let mut bundle = Self::builtin();
        for entry in std::fs::read_dir(dir).map_err(|e| AgentError::TemplateIo {
            path: dir.display().to_string(),
            reason: e.to_string(),
        })? {
            let entry = entry.map_err(|e| AgentError::TemplateIo {
                path: dir.display().to_string(),
                reason: e.to_string(),
            })?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if !bundle.templates.contains_key(stem) {
                return Err(AgentError::TemplateIo {
                    path: path.display().to_string(),
                    reason: format!("unknown template name {stem:?}"),
                });
            }
            let text = std::fs::read_to_string(&path).map_err(|e| AgentError::TemplateIo {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            bundle.templates.insert(stem.to_string(), text);
        }
        Ok(bundle)
    }

    fn template(&self, key: &str) -> Result<&str, AgentError> {
        self.templates
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| AgentError::TemplateIo {
                path: key.to_string(),
                reason: "missing template".into(),
            })
    }

    /// Fills `{{name}}` placeholders and rejects any left unexpanded.
    fn render(&self, key: &str, slots: &[(&str, &str)]) -> Result<String, AgentError> {
        let mut text = self.template(key)?.to_string();
        for (name, value) in slots {
            text = text.replace(&format!("{{{{{name}}}}}"), value);
        }
        if let Some(pos) = text.find("{{") {
            let tail: String = text[pos..].chars().take(40).collect();
            return Err(AgentError::UnexpandedPlaceholder {
                template: key.to_string(),
                context: tail,
            });
        }
        Ok(text)
    }

    pub fn system_for(&self, arch: ArchitectureName) -> Result<String, AgentError> {
        self.render(&format!("{}_system", arch.as_str()), &[])
    }

    /// The user message for `arch` at `state`. `forced` removes the query
    /// instruction so the agent must answer.
    pub fn user_for(
        &self,
        arch: ArchitectureName,
        state: &State,
        forced: bool,
    ) -> Result<String, AgentError> {
        let key = if forced && arch.can_search() {
            format!("{}_user_forced", arch.as_str())
        } else {
            format!("{}_user", arch.as_str())
        };
        let question = render_question(&state.question);
        let history = self.render_history(arch, &state.history);
        self.render(&key, &[("question", &question), ("history", &history)])
    }

    /// The summarization user message for one retrieval record.
    pub fn summarize_user(
        &self,
        question: &Question,
        query: &str,
        docs: &[Document],
    ) -> Result<String, AgentError> {
        let documents = render_documents(docs, self.options.doc_char_budget);
        self.render(
            "summarizer_user",
            &[
                ("documents", &documents),
                ("question", &render_question(question)),
                ("query", query),
            ],
        )
    }

    pub fn summarize_system(&self) -> Result<String, AgentError> {
        self.render("summarizer_system", &[])
    }

    /// The ranking user message over candidate actions for one state.
    pub fn rank_user(&self, state: &State, candidates: &[Action]) -> Result<String, AgentError> {
        let actions = render_actions(candidates);
        // Annotators see summarized history when available; it is both more
        // compact and what summarizing agents acted on.
        let history = render_history_summaries(&state.history, self.options.doc_char_budget);
        self.render(
            "annotator_user",
            &[
                ("question", &render_question(&state.question)),
                ("history", &history),
                ("actions", &actions),
            ],
        )
    }

    pub fn rank_system(&self) -> Result<String, AgentError> {
        self.render("annotator_system", &[])
    }

    fn render_history(&self, arch: ArchitectureName, history: &[RetrievalRecord]) -> String {
        if arch.summarizes_documents() {
            render_history_summaries(history, self.options.doc_char_budget)
        } else {
            render_history_documents(history, self.options.doc_char_budget)
        }
    }
}

/// Question text plus any multiple-choice options.
pub fn render_question(question: &Question) -> String {
    if question.choices.is_empty() {
        question.text.clone()
    } else {
        let mut out = question.text.clone();
        for choice in &question.choices {
            out.push_str(&format!("\n{}. {}", choice.label, choice.text));
        }
        out
    }
}

/// History as numbered query–answer pairs (summarizing agents).
pub fn render_history_summaries(history: &[RetrievalRecord], doc_char_budget: usize) -> String {
    if history.is_empty() {
        return "(no searches performed yet)".into();
    }
    history
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let answer = match &record.summary {
                Some(s) => s.clone(),
                None => render_documents(&record.documents, doc_char_budget),
            };
            format!("[{}] Query: {}\n    Answer: {}", i + 1, record.query, answer)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// History as numbered queries with raw documents (non-summarizing agents).
pub fn render_history_documents(history: &[RetrievalRecord], doc_char_budget: usize) -> String {
    if history.is_empty() {
        return "(no searches performed yet)".into();
    }
    history
        .iter()
        .enumerate()
        .map(|(i, record)| {
            format!(
                "[{}] Query: {}\n    Documents:\n{}",
                i + 1,
                record.query,
                render_documents(&record.documents, doc_char_budget)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Numbered document list with per-document truncation.
pub fn render_documents(docs: &[Document], doc_char_budget: usize) -> String {
    if docs.is_empty() {
        return "(no documents retrieved)".into();
    }
    docs.iter()
        .enumerate()
        .map(|(i, d)| {
            let text = truncate_chars(&d.text, doc_char_budget);
            format!("({}) {} — {}", i + 1, d.title, text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Candidate actions as an indexed list for the ranking prompt. Indices are
/// 0-based and are the indices expected back in `ranked_indices`.
pub fn render_actions(candidates: &[Action]) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(i, action)| format!("[{}] {}: {}", i, action.kind_str(), action.payload()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Canonical text rendering of a state, used by the critic's feature
/// extractor and the reward-model export. Uses summaries when present and
/// falls back to document titles, mirroring what summarizing agents acted
/// on while staying compact for lexical features.
pub fn render_state_text(state: &State) -> String {
    let mut out = format!("question: {}", render_question(&state.question));
    for record in &state.history {
        out.push_str(&format!("\nquery: {}", record.query));
        match &record.summary {
            Some(summary) => out.push_str(&format!("\nanswer: {summary}")),
            None => {
                let titles: Vec<&str> =
                    record.documents.iter().map(|d| d.title.as_str()).collect();
                out.push_str(&format!("\ndocuments: {}", titles.join("; ")));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TaskKind;

    fn question() -> Question {
        Question {
            id: "q".into(),
            text: "Who mentored the painter?".into(),
            task_kind: TaskKind::OpenQa,
            choices: Vec::new(),
            gold: None,
        }
    }

    fn state_with_history() -> State {
        State {
            question: question(),
            history: vec![RetrievalRecord {
                query: "painter mentor".into(),
                documents: vec![Document {
                    doc_id: "d1".into(),
                    title: "Painter".into(),
                    text: "The painter was mentored by X.".into(),
                    score: 1.0,
                }],
                summary: Some("The mentor was X.".into()),
            }],
            step_index: 2,
        }
    }

    #[test]
    fn re2search_prompt_has_reflection_section() {
        let bundle = PromptBundle::builtin();
        let state = State {
            question: question(),
            history: Vec::new(),
            step_index: 1,
        };
        let user = bundle
            .user_for(ArchitectureName::Re2search, &state, false)
            .unwrap();
        assert!(user.contains("Unverified Claim Identification"));
        assert!(user.contains("Step-by-step Reasoning"));
        assert!(user.contains("Structured Output"));
        assert!(user.contains("(no searches performed yet)"));
    }

    #[test]
    fn summarizing_agents_render_query_answer_pairs() {
        let bundle = PromptBundle::builtin();
        let user = bundle
            .user_for(ArchitectureName::SearchO1, &state_with_history(), false)
            .unwrap();
        assert!(user.contains("[1] Query: painter mentor"));
        assert!(user.contains("Answer: The mentor was X."));
        assert!(!user.contains("The painter was mentored by X."));
    }

    #[test]
    fn non_summarizing_agents_render_raw_documents() {
        let bundle = PromptBundle::builtin();
        let user = bundle
            .user_for(ArchitectureName::React, &state_with_history(), false)
            .unwrap();
        assert!(user.contains("The painter was mentored by X."));
    }

    #[test]
    fn direct_prompt_contains_only_the_question() {
        let bundle = PromptBundle::builtin();
        let state = State {
            question: question(),
            history: Vec::new(),
            step_index: 1,
        };
        let user = bundle
            .user_for(ArchitectureName::Direct, &state, false)
            .unwrap();
        assert!(user.contains("Who mentored the painter?"));
        assert!(!user.to_lowercase().contains("step-by-step"));
        assert!(!user.to_lowercase().contains("reason"));
    }

    #[test]
    fn rendering_rejects_unexpanded_placeholders() {
        let mut bundle = PromptBundle::builtin();
        bundle
            .templates
            .insert("direct_user".into(), "{{question}} {{bogus}}".into());
        let state = State {
            question: question(),
            history: Vec::new(),
            step_index: 1,
        };
        assert!(matches!(
            bundle.user_for(ArchitectureName::Direct, &state, false),
            Err(AgentError::UnexpandedPlaceholder { .. })
        ));
    }

    #[test]
    fn overrides_replace_builtin_templates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("direct_user.txt"), "Q: {{question}}").unwrap();
        let bundle = PromptBundle::with_overrides_from_dir(dir.path()).unwrap();
        let state = State {
            question: question(),
            history: Vec::new(),
            step_index: 1,
        };
        let user = bundle
            .user_for(ArchitectureName::Direct, &state, false)
            .unwrap();
        assert_eq!(user, "Q: Who mentored the painter?");
    }

    #[test]
    fn unknown_override_name_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("mystery.txt"), "x").unwrap();
        assert!(PromptBundle::with_overrides_from_dir(dir.path()).is_err());
    }

    #[test]
    fn rank_prompt_lists_indexed_candidates_and_criteria() {
        let bundle = PromptBundle::builtin();
        let user = bundle
            .rank_user(
                &state_with_history(),
                &[
                    Action::Search("next hop".into()),
                    Action::Answer("X".into()),
                ],
            )
            .unwrap();
        assert!(user.contains("[0] search: next hop"));
        assert!(user.contains("[1] answer: X"));
        assert!(user.contains("Sufficiency Check"));
        assert!(user.contains("Utility Check"));
        assert!(user.contains("Redundancy Check"));
    }

    #[test]
    fn multiple_choice_questions_render_choices() {
        let q = Question {
            id: "mc".into(),
            text: "Pick the best option.".into(),
            task_kind: TaskKind::MultipleChoice,
            choices: vec![crate::mdp::Choice {
                label: "A".into(),
                text: "option a".into(),
            }],
            gold: None,
        };
        assert!(render_question(&q).contains("A. option a"));
    }

    #[test]
    fn document_truncation_respects_budget() {
        let docs = vec![Document {
            doc_id: "d".into(),
            title: "T".into(),
            text: "x".repeat(5000),
            score: 0.0,
        }];
        let rendered = render_documents(&docs, 100);
        assert!(rendered.len() < 200);
    }
}
