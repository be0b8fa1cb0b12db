//! Parsing of 0/1 outcome streams.

use std::fmt;

use dht_core::Outcome;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenError {
    pub line: usize,
    pub token: String,
}

impl fmt::Display for TokenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: unexpected token '{}' (expected 0 or 1)",
            self.line, self.token
        )
    }
}

impl std::error::Error for TokenError {}

/// Whitespace- or comma-separated `0` (success) / `1` (failure) tokens;
/// text after `#` is a comment. Line numbers are 1-based.
pub fn parse_outcomes(text: &str) -> Result<Vec<Outcome>, TokenError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        for token in body
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
        {
            let mut outcome = match token {
                "0" => Outcome::success(),
                "1" => Outcome::failure(),
                _ => {
                    return Err(TokenError {
                        line: i + 1,
                        token: token.to_owned(),
                    })
                }
            };
            outcome.source = Some(format!("line {}", i + 1));
            out.push(outcome);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_mixed_separators_and_comments() {
        let got = parse_outcomes("0 1,0\n# header\n1 # trailing\n").unwrap();
        let fails: Vec<bool> = got.iter().map(Outcome::is_failure).collect();
        assert_eq!(fails, [false, true, false, true]);
    }

    #[test]
    fn names_the_offending_line() {
        let err = parse_outcomes("0\n0\n1\n2\n").unwrap_err();
        assert_eq!(
            err,
            TokenError {
                line: 4,
                token: "2".into()
            }
        );
        assert!(err.to_string().contains("line 4"));
    }
}
