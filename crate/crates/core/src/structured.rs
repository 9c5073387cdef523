//! Structured output with one repair round.

use std::fmt::Display;

use thiserror::Error;

use crate::instructions::{fill, Instructions};
use crate::providers::{ProviderError, TextProvider, TextRequest};

#[derive(Debug, Error)]
pub enum StructuredError<E> {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    /// Both the first response and the repaired one were rejected.
    #[error("response rejected after repair: {last}")]
    Rejected { first: E, last: E },
}

/// Ask `provider`, validate with `parse`, and on rejection ask once more with
/// the problems and the rejected response appended.
pub fn generate_with_repair<T, E: Display>(
    provider: &dyn TextProvider,
    instructions: &Instructions,
    request: &TextRequest,
    parse: impl Fn(&str) -> Result<T, E>,
) -> Result<T, StructuredError<E>> {
    let first_raw = provider.generate(request)?;
    let first = match parse(&first_raw) {
        Ok(v) => return Ok(v),
        Err(e) => e,
    };
    log::info!("{:?} response rejected, requesting repair: {first}", request.task);
    let problems = first.to_string();
    let mut repair = request.clone();
    repair.user = format!(
        "{}\n\n{}",
        request.user,
        fill(
            &instructions.repair,
            &[("problems", &problems), ("previous", &first_raw)]
        )
    );
    repair.inputs.insert("repair_of".into(), problems.into());
    let second_raw = provider.generate(&repair)?;
    parse(&second_raw).map_err(|last| StructuredError::Rejected { first, last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::ScriptedText;
    use crate::providers::TextTask;

    fn parse_num(s: &str) -> Result<u32, String> {
        s.parse().map_err(|_| format!("`{s}` is not a number"))
    }

    #[test]
    fn repairs_once() {
        let p = ScriptedText::new(vec![Ok("x".into()), Ok("5".into())]);
        let req = TextRequest::new(TextTask::Ideation, "s", "give a number");
        let v = generate_with_repair(&p, &Instructions::builtin(), &req, parse_num).unwrap();
        assert_eq!(v, 5);
        let reqs = p.requests();
        assert_eq!(reqs.len(), 2);
        assert!(reqs[1].user.starts_with("give a number"));
        assert!(reqs[1].user.contains("`x` is not a number"));
    }

    #[test]
    fn gives_up_after_one_repair() {
        let p = ScriptedText::new(vec![Ok("x".into()), Ok("y".into()), Ok("1".into())]);
        let req = TextRequest::new(TextTask::Ideation, "s", "u");
        match generate_with_repair(&p, &Instructions::builtin(), &req, parse_num) {
            Err(StructuredError::Rejected { last, .. }) => assert!(last.contains("`y`")),
            other => panic!("{other:?}"),
        }
        assert_eq!(p.requests().len(), 2);
    }

    #[test]
    fn provider_errors_pass_through() {
        let p = ScriptedText::new(vec![Err(ProviderError::refusal("no"))]);
        let req = TextRequest::new(TextTask::Ideation, "s", "u");
        assert!(matches!(
            generate_with_repair(&p, &Instructions::builtin(), &req, parse_num),
            Err(StructuredError::Provider(_))
        ));
    }
}
