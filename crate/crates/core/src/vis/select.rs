//! Candidate filtering: consensus clustering and correctness ranking.

use std::collections::HashMap;

use super::scaffold::CodeStyle;
use super::{CandidateProgram, CandidateStatus, VisError};
use crate::llm::{score_correctness, GenerationConfig, ScoreError, TextProvider};

/// Canonical form used to decide whether two candidates are the same
/// program: comments removed, whitespace runs deleted except between two
/// word characters (where one space is kept), blank lines dropped. With
/// `significant_indentation` line breaks and leading indentation survive.
pub fn normalize_code(code: &str, style: &CodeStyle) -> String {
    let lines: Vec<String> = code
        .lines()
        .map(|l| strip_comment(l, style.line_comment.as_deref()))
        .filter(|l| !l.trim().is_empty())
        .collect();
    if style.significant_indentation {
        lines
            .iter()
            .map(|l| {
                let body = l.trim_start();
                let indent = &l[..l.len() - body.len()];
                format!("{indent}{}", squeeze(body))
            })
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        squeeze(&lines.join("\n"))
    }
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn squeeze(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_whitespace() {
            out.push(chars[i]);
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        let before = start.checked_sub(1).map(|j| chars[j]);
        let after = chars.get(i).copied();
        if before.is_some_and(is_word) && after.is_some_and(is_word) {
            out.push(' ');
        }
    }
    out
}

/// Removes a trailing line comment that is not inside a string literal.
fn strip_comment(line: &str, marker: Option<&str>) -> String {
    let Some(marker) = marker else {
        return line.to_string();
    };
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        if c == '"' || c == '\'' {
            quote = Some(c);
        } else if line[i..].starts_with(marker) {
            return line[..i].to_string();
        }
    }
    line.to_string()
}

/// Index (into `keys`) of the representative of the largest cluster among
/// the viable entries. Ties go to the cluster whose first member has the
/// lowest position; the representative is that first member.
pub fn consensus_index(keys: &[Option<String>]) -> Option<usize> {
    let mut clusters: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, key) in keys.iter().enumerate() {
        if let Some(k) = key {
            clusters.entry(k.as_str()).and_modify(|c| c.1 += 1).or_insert((i, 1));
        }
    }
    clusters.into_values().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(first, _)| first)
}

/// Argmax with ties going to the lowest position.
pub fn argmax_lowest(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= *s => {}
            _ => best = Some(i),
        }
    }
    best
}

fn ordered(candidates: &[CandidateProgram]) -> Vec<&CandidateProgram> {
    let mut v: Vec<&CandidateProgram> = candidates.iter().collect();
    v.sort_by_key(|c| c.candidate_index);
    v
}

/// Picks a member of the largest cluster of compiled candidates.
pub fn select_by_consistency<'a>(
    candidates: &'a [CandidateProgram],
    style: &CodeStyle,
) -> Result<&'a CandidateProgram, VisError> {
    let ordered = ordered(candidates);
    let keys: Vec<Option<String>> = ordered
        .iter()
        .map(|c| (c.status == CandidateStatus::CompiledOk).then(|| normalize_code(&c.stub, style)))
        .collect();
    consensus_index(&keys).map(|i| ordered[i]).ok_or_else(|| VisError::no_viable(candidates))
}

/// Scores every compiled candidate and returns the highest-scoring one
/// together with the scores (unparseable replies count as 0). Scores are
/// written back into `candidates`.
pub fn select_by_correctness(
    candidates: &mut [CandidateProgram],
    provider: &dyn TextProvider,
    context: &str,
    config: &GenerationConfig,
) -> Result<CandidateProgram, VisError> {
    candidates.sort_by_key(|c| c.candidate_index);
    let mut scores = Vec::new();
    let mut positions = Vec::new();
    for (pos, c) in candidates.iter_mut().enumerate() {
        if c.status != CandidateStatus::CompiledOk {
            continue;
        }
        let score = match score_correctness(provider, &c.assembled_code, context, config) {
            Ok(p) => p,
            Err(ScoreError::UnparseableScore(_)) | Err(ScoreError::EmptyCode) => 0.0,
            Err(ScoreError::Provider(e)) => return Err(VisError::Provider(e)),
        };
        c.correctness_score = Some(score);
        scores.push(score);
        positions.push(pos);
    }
    argmax_lowest(&scores).map(|i| candidates[positions[i]].clone()).ok_or_else(|| VisError::no_viable(candidates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ProviderResponse, ScriptedProvider};
    use proptest::prelude::*;

    fn plain() -> CodeStyle {
        CodeStyle::default()
    }

    fn py() -> CodeStyle {
        CodeStyle { line_comment: Some("#".into()), significant_indentation: true }
    }

    fn cand(i: usize, stub: &str, ok: bool) -> CandidateProgram {
        CandidateProgram {
            goal_index: 0,
            candidate_index: i,
            scaffold_ref: "g".into(),
            stub: stub.into(),
            assembled_code: stub.into(),
            status: if ok { CandidateStatus::CompiledOk } else { CandidateStatus::CompileError },
            error_detail: None,
            artifact: None,
            correctness_score: None,
        }
    }

    #[test]
    fn whitespace_only_differences_collapse() {
        assert_eq!(normalize_code("x=1", &plain()), normalize_code("x  =  1", &plain()));
        assert_eq!(normalize_code("x=1", &py()), normalize_code("x  =  1  # set x", &py()));
        assert_ne!(normalize_code("a b", &plain()), normalize_code("ab", &plain()));
        assert_eq!(normalize_code("f(a,\n\n   b)", &plain()), "f(a,b)");
    }

    #[test]
    fn python_keeps_block_structure() {
        let a = "    if x:\n        y()\n    z()";
        let b = "    if x:\n        y()\n        z()";
        assert_ne!(normalize_code(a, &py()), normalize_code(b, &py()));
        assert_eq!(normalize_code("    s = 'a # b'  # c", &py()), "    s='a#b'");
    }

    #[test]
    fn majority_and_tie_break() {
        let c = vec![cand(0, "a", true), cand(1, "b", true), cand(2, "b", true)];
        assert_eq!(select_by_consistency(&c, &plain()).unwrap().candidate_index, 1);
        let c = vec![cand(0, "a", true), cand(1, "b", true), cand(2, "c", true)];
        assert_eq!(select_by_consistency(&c, &plain()).unwrap().candidate_index, 0);
        let c = vec![cand(0, "a", false), cand(1, "a", false), cand(2, "c", true)];
        assert_eq!(select_by_consistency(&c, &plain()).unwrap().candidate_index, 2);
        let c = vec![cand(0, "a", false)];
        assert!(matches!(select_by_consistency(&c, &plain()), Err(VisError::NoViableCandidate { .. })));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_lowest(&[0.2, 0.9, 0.5]), Some(1));
        assert_eq!(argmax_lowest(&[0.7, 0.7]), Some(0));
        assert_eq!(argmax_lowest(&[]), None);
    }

    #[test]
    fn correctness_uses_provider_scores() {
        let p = ScriptedProvider::new(|req, _| {
            let text = req.full_text();
            Ok(ProviderResponse::new(vec![if text.contains("CODE_A") { "no idea".into() } else { "0.3".into() }]))
        });
        let mut c = vec![cand(0, "CODE_A", true), cand(1, "CODE_B", true), cand(2, "CODE_C", false)];
        let best = select_by_correctness(&mut c, &p, "ctx", &GenerationConfig::default()).unwrap();
        assert_eq!(best.candidate_index, 1);
        assert_eq!(c[0].correctness_score, Some(0.0));
        assert_eq!(c[2].correctness_score, None);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(code in "[a-z =()\n#'\t]{0,40}") {
            for style in [plain(), py()] {
                let once = normalize_code(&code, &style);
                prop_assert_eq!(normalize_code(&once, &style), once.clone());
            }
        }

        #[test]
        fn selected_candidate_is_compiled(stubs in proptest::collection::vec(("[ab]", any::<bool>()), 1..7)) {
            let c: Vec<_> = stubs.iter().enumerate().map(|(i, (s, ok))| cand(i, s, *ok)).collect();
            match select_by_consistency(&c, &plain()) {
                Ok(sel) => prop_assert_eq!(sel.status, CandidateStatus::CompiledOk),
                Err(_) => prop_assert!(c.iter().all(|x| x.status != CandidateStatus::CompiledOk)),
            }
        }
    }
}
