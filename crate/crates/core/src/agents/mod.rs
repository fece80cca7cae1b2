//! The six agent architectures and their behavior: prompt rendering,
//! candidate proposal, structured-output parsing and history summarization.
//!
//! Each architecture is a fixed configuration over six functional
//! components (answer generation, question reasoning, retrieval
//! augmentation, query generation, document summarization, reasoning
//! reflection). The component matrix drives rendering and parsing: agents
//! without query generation can never emit a search action, and agents with
//! document summarization consume query–summary pairs instead of raw
//! documents.

pub mod parse;
pub mod prompts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError, GenerationConfig, RoleKind};
use crate::mdp::{Action, Document, Question, State};

pub use parse::{best_effort_answer, parse_action, ParseError};
pub use prompts::{render_state_text, PromptBundle, PromptOptions};

/// Errors from prompt rendering and action proposal.
#[derive(Debug, Error)]
pub enum AgentError {
    #[error("template {path}: {reason}")]
    TemplateIo { path: String, reason: String },

    #[error("template {template} left placeholder unexpanded near {context:?}")]
    UnexpandedPlaceholder { template: String, context: String },

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error("proposal needs at least one candidate")]
    NoCandidates,
}

/// The named architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureName {
    Direct,
    Cot,
    Rag,
    React,
    SearchO1,
    Re2search,
}

impl ArchitectureName {
    pub const ALL: [ArchitectureName; 6] = [
        ArchitectureName::Direct,
        ArchitectureName::Cot,
        ArchitectureName::Rag,
        ArchitectureName::React,
        ArchitectureName::SearchO1,
        ArchitectureName::Re2search,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ArchitectureName::Direct => "direct",
            ArchitectureName::Cot => "cot",
            ArchitectureName::Rag => "rag",
            ArchitectureName::React => "react",
            ArchitectureName::SearchO1 => "search_o1",
            ArchitectureName::Re2search => "re2search",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }

    /// Whether this architecture can emit search actions from the LLM
    /// (query generation component).
    pub fn can_search(&self) -> bool {
        self.components().query_generation
    }

    /// Whether history is consumed as query–summary pairs.
    pub fn summarizes_documents(&self) -> bool {
        self.components().document_summarization
    }

    /// The architecture's component matrix.
    pub fn components(&self) -> ComponentMatrix {
        use ArchitectureName::*;
        match self {
            Direct => ComponentMatrix {
                answer_generation: true,
                question_reasoning: false,
                retrieval_augmentation: false,
                query_generation: false,
                document_summarization: false,
                reasoning_reflection: false,
            },
            Cot => ComponentMatrix {
                answer_generation: true,
                question_reasoning: true,
                retrieval_augmentation: false,
                query_generation: false,
                document_summarization: false,
                reasoning_reflection: false,
            },
            Rag => ComponentMatrix {
                answer_generation: true,
                question_reasoning: true,
                retrieval_augmentation: true,
                query_generation: false,
                document_summarization: false,
                reasoning_reflection: false,
            },
            React => ComponentMatrix {
                answer_generation: true,
                question_reasoning: true,
                retrieval_augmentation: true,
                query_generation: true,
                document_summarization: false,
                reasoning_reflection: false,
            },
            SearchO1 => ComponentMatrix {
                answer_generation: true,
                question_reasoning: true,
                retrieval_augmentation: true,
                query_generation: true,
                document_summarization: true,
                reasoning_reflection: false,
            },
            Re2search => ComponentMatrix {
                answer_generation: true,
                question_reasoning: true,
                retrieval_augmentation: true,
                query_generation: true,
                document_summarization: true,
                reasoning_reflection: true,
            },
        }
    }
}

/// The six functional-component flags of an architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentMatrix {
    pub answer_generation: bool,
    pub question_reasoning: bool,
    pub retrieval_augmentation: bool,
    pub query_generation: bool,
    pub document_summarization: bool,
    pub reasoning_reflection: bool,
}

/// An architecture instance: its name plus the component matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentArchitecture {
    pub name: ArchitectureName,
    pub components: ComponentMatrix,
}

impl AgentArchitecture {
    pub fn named(name: ArchitectureName) -> Self {
        AgentArchitecture {
            name,
            components: name.components(),
        }
    }
}

/// An action extracted from a completion, plus the surrounding text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAction {
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_answer: Option<String>,
    pub reasoning_text: String,
    pub raw: String,
}

/// Default generation budget for actor and summarizer calls.
pub const DEFAULT_MAX_TOKENS: usize = 1024;

/// How many repair re-prompts a malformed completion gets before the
/// fail-soft fallback kicks in.
const MAX_REPAIR_ATTEMPTS: usize = 2;

/// An architecture bound to its prompt bundle.
#[derive(Debug, Clone)]
pub struct Agent {
    pub arch: AgentArchitecture,
    pub prompts: PromptBundle,
    pub max_tokens: usize,
}

impl Agent {
    pub fn new(name: ArchitectureName) -> Self {
        Agent {
            arch: AgentArchitecture::named(name),
            prompts: PromptBundle::builtin(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_prompts(name: ArchitectureName, prompts: PromptBundle) -> Self {
        Agent {
            arch: AgentArchitecture::named(name),
            prompts,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Renders the actor request for `state`.
    pub fn render_prompt(
        &self,
        state: &State,
        generation: GenerationConfig,
    ) -> Result<ChatRequest, AgentError> {
        Ok(ChatRequest {
            system: self.prompts.system_for(self.arch.name)?,
            user: self.prompts.user_for(self.arch.name, state, false)?,
            generation,
        })
    }

    /// Renders the answer-only request used at the step cap: the same
    /// architecture prompt with the query instruction removed.
    pub fn render_forced_answer_prompt(
        &self,
        state: &State,
        generation: GenerationConfig,
    ) -> Result<ChatRequest, AgentError> {
        Ok(ChatRequest {
            system: self.prompts.system_for(self.arch.name)?,
            user: self.prompts.user_for(self.arch.name, state, true)?,
            generation,
        })
    }

    /// Proposes `n` candidate actions for `state`.
    ///
    /// The prompt is rendered once and `n` completions are requested; each
    /// is parsed under the architecture's conventions. Malformed completions
    /// are re-prompted with a repair instruction up to two times, then fall
    /// soft to an answer action with a best-effort extracted answer. Two
    /// special cases need no LLM at all: the RAG architecture's first step
    /// is always a search for the original question text, and a forced step
    /// parses search results as answers.
    pub fn propose_actions(
        &self,
        gateway: &Gateway,
        state: &State,
        n: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<ParsedAction>, AgentError> {
        if n == 0 {
            return Err(AgentError::NoCandidates);
        }
        if self.arch.name == ArchitectureName::Rag && state.history.is_empty() {
            let query = state.question.text.clone();
            return Ok(vec![ParsedAction {
                action: Action::Search(query),
                predicted_answer: None,
                reasoning_text: String::new(),
                raw: String::new(),
            }]);
        }
        let generation = if n == 1 && temperature <= 0.0 {
            GenerationConfig::greedy(self.max_tokens)
        } else {
            GenerationConfig::sampled(n, temperature, self.max_tokens, seed)
        };
        let request = self.render_prompt(state, generation)?;
        let completions = gateway.complete(RoleKind::Actor, &request)?;
        let mut parsed = Vec::with_capacity(completions.len());
        for (i, completion) in completions.iter().enumerate() {
            parsed.push(self.parse_with_repair(
                gateway,
                &request,
                completion,
                crate::seed::derive_seed(seed, &format!("repair/{i}")),
            )?);
        }
        Ok(parsed)
    }

    /// Requests the forced final answer at the step cap.
    pub fn forced_answer(
        &self,
        gateway: &Gateway,
        state: &State,
        seed: u64,
    ) -> Result<ParsedAction, AgentError> {
        let request = self.render_forced_answer_prompt(
            state,
            GenerationConfig {
                temperature: 0.0,
                n_samples: 1,
                max_tokens: self.max_tokens,
                seed: Some(seed),
            },
        )?;
        let completions = gateway.complete(RoleKind::Actor, &request)?;
        let completion = &completions[0];
        let parsed = match parse_action(self.arch.name, completion) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("forced answer parse failed ({e}); extracting best effort");
                fail_soft(completion)
            }
        };
        // Searching is disabled at the cap: a non-compliant search becomes
        // its predicted answer (or the empty answer).
        Ok(match parsed.action {
            Action::Answer(_) => parsed,
            Action::Search(_) => {
                log::warn!("forced answer step still produced a search; coercing to answer");
                let answer = parsed.predicted_answer.clone().unwrap_or_default();
                ParsedAction {
                    action: Action::Answer(answer),
                    ..parsed
                }
            }
        })
    }

    fn parse_with_repair(
        &self,
        gateway: &Gateway,
        original: &ChatRequest,
        completion: &str,
        repair_seed: u64,
    ) -> Result<ParsedAction, AgentError> {
        let mut current = completion.to_string();
        for attempt in 0..=MAX_REPAIR_ATTEMPTS {
            match parse_action(self.arch.name, &current) {
                Ok(parsed) => return Ok(parsed),
                Err(e) => {
                    if attempt == MAX_REPAIR_ATTEMPTS {
                        log::warn!(
                            "parse failed after {MAX_REPAIR_ATTEMPTS} repairs ({e}); falling soft"
                        );
                        return Ok(fail_soft(&current));
                    }
                    let repair = ChatRequest {
                        system: original.system.clone(),
                        user: format!(
                            "{}\n\nYour previous output could not be parsed ({e}). \
                             Reproduce your answer in exactly the required output format.\n\
                             Previous output:\n{current}",
                            original.user
                        ),
                        generation: GenerationConfig {
                            temperature: original.generation.temperature,
                            n_samples: 1,
                            max_tokens: original.generation.max_tokens,
                            seed: Some(repair_seed.wrapping_add(attempt as u64)),
                        },
                    };
                    match gateway.complete(RoleKind::Actor, &repair) {
                        Ok(repaired) => current = repaired[0].clone(),
                        Err(gateway_err) => {
                            // A backend that cannot serve the repair prompt
                            // (e.g. a strict mock) ends the repair loop.
                            log::warn!("repair prompt failed ({gateway_err}); falling soft");
                            return Ok(fail_soft(&current));
                        }
                    }
                }
            }
        }
        unreachable!("repair loop returns within the attempt bound")
    }

    /// Summarizes one retrieval record for the information-seeking history.
    ///
    /// Always issued under the summarizer role: tuned actors never change
    /// summaries.
    pub fn summarize_record(
        &self,
        gateway: &Gateway,
        question: &Question,
        query: &str,
        docs: &[Document],
    ) -> Result<String, AgentError> {
        let request = ChatRequest {
            system: self.prompts.summarize_system()?,
            user: self.prompts.summarize_user(question, query, docs)?,
            generation: GenerationConfig::greedy(self.max_tokens),
        };
        let completions = gateway.complete(RoleKind::Summarizer, &request)?;
        Ok(completions.into_iter().next().expect("n_samples is 1"))
    }
}

fn fail_soft(completion: &str) -> ParsedAction {
    let answer = best_effort_answer(completion);
    ParsedAction {
        action: Action::Answer(answer.clone()),
        predicted_answer: Some(answer),
        reasoning_text: String::new(),
        raw: completion.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{request_digest, ExchangeRecord, ScriptBackend, ScriptMode};
    use crate::mdp::{initial_state, TaskKind};
    use std::sync::Arc;

    fn question() -> Question {
        Question {
            id: "q".into(),
            text: "Who mentored the painter?".into(),
            task_kind: TaskKind::OpenQa,
            choices: Vec::new(),
            gold: None,
        }
    }

    fn scripted_gateway(role: RoleKind, request: &ChatRequest, completions: &[&str]) -> Gateway {
        let record = ExchangeRecord {
            digest: request_digest(role, request),
            request: request.clone(),
            completions: completions.iter().map(|s| s.to_string()).collect(),
            role,
            wall_time: 0,
        };
        Gateway::uniform(Arc::new(ScriptBackend::from_records(
            vec![record],
            ScriptMode::Mock,
            "test",
        )))
    }

    #[test]
    fn table_rows_match_component_definitions() {
        // Spot checks; the acceptance suite asserts all 36 flags.
        assert!(!ArchitectureName::Direct.components().question_reasoning);
        assert!(ArchitectureName::Rag.components().retrieval_augmentation);
        assert!(!ArchitectureName::Rag.components().query_generation);
        assert!(ArchitectureName::SearchO1.components().document_summarization);
        assert!(!ArchitectureName::SearchO1.components().reasoning_reflection);
        assert!(ArchitectureName::Re2search.components().reasoning_reflection);
        for arch in ArchitectureName::ALL {
            assert!(arch.components().answer_generation);
        }
    }

    #[test]
    fn rag_first_step_searches_the_question_without_llm() {
        let agent = Agent::new(ArchitectureName::Rag);
        let state = initial_state(&question()).unwrap();
        // Empty mock: any LLM call would error out.
        let gateway = Gateway::uniform(Arc::new(ScriptBackend::from_records(
            Vec::new(),
            ScriptMode::Mock,
            "empty",
        )));
        let proposals = agent
            .propose_actions(&gateway, &state, 4, 1.0, 0)
            .unwrap();
        assert_eq!(proposals.len(), 1);
        assert_eq!(
            proposals[0].action,
            Action::Search("Who mentored the painter?".into())
        );
    }

    #[test]
    fn direct_candidates_are_always_answers() {
        let agent = Agent::new(ArchitectureName::Direct);
        let state = initial_state(&question()).unwrap();
        let request = agent
            .render_prompt(&state, GenerationConfig::sampled(3, 1.0, DEFAULT_MAX_TOKENS, 9))
            .unwrap();
        let gateway = scripted_gateway(RoleKind::Actor, &request, &["A", "B", "C"]);
        let proposals = agent.propose_actions(&gateway, &state, 3, 1.0, 9).unwrap();
        assert_eq!(proposals.len(), 3);
        assert!(proposals.iter().all(|p| p.action.is_answer()));
    }

    #[test]
    fn malformed_completion_falls_soft_after_failed_repairs() {
        let agent = Agent::new(ArchitectureName::Cot);
        let state = initial_state(&question()).unwrap();
        let request = agent
            .render_prompt(&state, GenerationConfig::greedy(DEFAULT_MAX_TOKENS))
            .unwrap();
        // The mock has no entry for the repair prompt, so repairs fail and
        // the fail-soft path extracts the last line.
        let gateway = scripted_gateway(RoleKind::Actor, &request, &["no marker here\nlast line"]);
        let proposals = agent.propose_actions(&gateway, &state, 1, 0.0, 0).unwrap();
        assert_eq!(proposals[0].action, Action::Answer("last line".into()));
    }

    #[test]
    fn repair_prompt_fixes_malformed_output() {
        let agent = Agent::new(ArchitectureName::Cot);
        let state = initial_state(&question()).unwrap();
        let request = agent
            .render_prompt(&state, GenerationConfig::greedy(DEFAULT_MAX_TOKENS))
            .unwrap();
        let malformed = "rambling without a marker";
        let repair_user = format!(
            "{}\n\nYour previous output could not be parsed ({}). \
             Reproduce your answer in exactly the required output format.\n\
             Previous output:\n{malformed}",
            request.user,
            ParseError::MissingAnswerMarker,
        );
        let repair_request = ChatRequest {
            system: request.system.clone(),
            user: repair_user,
            generation: GenerationConfig {
                temperature: 0.0,
                n_samples: 1,
                max_tokens: DEFAULT_MAX_TOKENS,
                seed: None,
            },
        };
        let records = vec![
            ExchangeRecord {
                digest: request_digest(RoleKind::Actor, &request),
                request: request.clone(),
                completions: vec![malformed.into()],
                role: RoleKind::Actor,
                wall_time: 0,
            },
            ExchangeRecord {
                digest: request_digest(RoleKind::Actor, &repair_request),
                request: repair_request,
                completions: vec!["Answer: fixed".into()],
                role: RoleKind::Actor,
                wall_time: 0,
            },
        ];
        let gateway = Gateway::uniform(Arc::new(ScriptBackend::from_records(
            records,
            ScriptMode::Mock,
            "test",
        )));
        let proposals = agent.propose_actions(&gateway, &state, 1, 0.0, 0).unwrap();
        assert_eq!(proposals[0].action, Action::Answer("fixed".into()));
    }

    #[test]
    fn summaries_come_from_the_summarizer_role() {
        let agent = Agent::new(ArchitectureName::Re2search);
        let q = question();
        let docs = vec![Document {
            doc_id: "d".into(),
            title: "T".into(),
            text: "The capital is Paris.".into(),
            score: 1.0,
        }];
        let request = ChatRequest {
            system: agent.prompts.summarize_system().unwrap(),
            user: agent.prompts.summarize_user(&q, "capital?", &docs).unwrap(),
            generation: GenerationConfig::greedy(DEFAULT_MAX_TOKENS),
        };
        // Scripted only under the summarizer role: actor-role lookups for
        // the same request would miss, proving the role wiring.
        let gateway = scripted_gateway(RoleKind::Summarizer, &request, &["The capital is Paris."]);
        let summary = agent
            .summarize_record(&gateway, &q, "capital?", &docs)
            .unwrap();
        assert_eq!(summary, "The capital is Paris.");
    }

    #[test]
    fn forced_answer_coerces_stray_searches() {
        let agent = Agent::new(ArchitectureName::Re2search);
        let state = initial_state(&question()).unwrap();
        let request = agent
            .render_forced_answer_prompt(
                &state,
                GenerationConfig {
                    temperature: 0.0,
                    n_samples: 1,
                    max_tokens: DEFAULT_MAX_TOKENS,
                    seed: Some(5),
                },
            )
            .unwrap();
        let gateway = scripted_gateway(
            RoleKind::Actor,
            &request,
            &[r#"{"predicted_answer":"best guess","generated_query":"more digging"}"#],
        );
        let parsed = agent.forced_answer(&gateway, &state, 5).unwrap();
        assert_eq!(parsed.action, Action::Answer("best guess".into()));
    }
}
