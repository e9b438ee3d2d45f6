use thiserror::Error;

use super::{generate, GenerationConfig, Message, PromptRequest, ProviderError, TextProvider};
use crate::text::first_number;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("reply contains no number: {0:?}")]
    UnparseableScore(String),
    #[error("code to score is empty")]
    EmptyCode,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

const SCORE_SYSTEM: &str = "You are a meticulous reviewer of data visualization code. \
You estimate how likely a program is to run without errors and to correctly address its stated goal.";

pub fn correctness_prompt(code: &str, context: &str) -> PromptRequest {
    let body = format!(
        "Context:\n{context}\n\nCode:\n```\n{code}\n```\n\n\
What is the probability (a number between 0 and 1) that this code is correct and \
produces the intended visualization? Reply with the number only."
    );
    PromptRequest::completion(SCORE_SYSTEM, vec![Message::user(body)]).with_meta("task", "score_correctness")
}

/// First real number in the reply, clamped to `[0, 1]`.
pub fn parse_probability(reply: &str) -> Result<f64, ScoreError> {
    first_number(reply).map(|x| x.clamp(0.0, 1.0)).ok_or_else(|| ScoreError::UnparseableScore(reply.to_string()))
}

/// Elicits a correctness probability for `code`. Callers that rank
/// candidates treat [`ScoreError::UnparseableScore`] as a score of 0.
pub fn score_correctness(
    provider: &dyn TextProvider,
    code: &str,
    context: &str,
    config: &GenerationConfig,
) -> Result<f64, ScoreError> {
    if code.trim().is_empty() {
        return Err(ScoreError::EmptyCode);
    }
    let config = GenerationConfig { n_candidates: 1, ..config.clone() };
    let reply = generate(provider, &correctness_prompt(code, context), &config)?;
    parse_probability(reply.first())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedProvider;

    fn score_with(reply: &'static str) -> Result<f64, ScoreError> {
        let p = ScriptedProvider::constant(reply);
        score_correctness(&p, "x = 1", "ctx", &GenerationConfig::default())
    }

    #[test]
    fn direct_parse() {
        assert_eq!(score_with("0.92").unwrap(), 0.92);
    }

    #[test]
    fn prose_is_unparseable() {
        assert!(matches!(score_with("certainly correct"), Err(ScoreError::UnparseableScore(_))));
    }

    #[test]
    fn clamps_to_unit_interval() {
        let clamp = |x: f64| x.clamp(0.0, 1.0);
        assert_eq!(score_with("1.7").unwrap(), clamp(1.7));
        assert_eq!(score_with("-0.3").unwrap(), clamp(-0.3));
    }

    #[test]
    fn empty_code_is_rejected() {
        let p = ScriptedProvider::constant("0.5");
        assert_eq!(score_correctness(&p, "  ", "", &GenerationConfig::default()), Err(ScoreError::EmptyCode));
    }

    proptest::proptest! {
        #[test]
        fn always_in_unit_interval(x in -1e6f64..1e6) {
            let v = parse_probability(&format!("p={x}")).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
