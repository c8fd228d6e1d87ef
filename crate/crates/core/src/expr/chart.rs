use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the second coordinate block holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SecondBlock {
    /// Momenta `p_i` on `T*Q x R`.
    Momentum,
    /// Velocities `qdot^i` on `TQ x R`.
    Velocity,
}

/// Coordinate names laid out as `(q^1..q^n | second block | z)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartSpec {
    names: Vec<String>,
    n: usize,
    second: SecondBlock,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl ChartSpec {
    /// Custom names; `names.len()` must be `2n + 1` with `n >= 1`.
    pub fn new(names: Vec<String>, second: SecondBlock) -> Result<ChartSpec> {
        if names.len() < 3 || names.len() % 2 == 0 {
            return Err(Error::InvalidChart(format!(
                "need 2n+1 coordinates with n >= 1, got {}",
                names.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if !is_identifier(name) {
                return Err(Error::InvalidChart(format!(
                    "`{name}` is not an identifier"
                )));
            }
            if names[..i].contains(name) {
                return Err(Error::InvalidChart(format!(
                    "duplicate coordinate `{name}`"
                )));
            }
        }
        let n = (names.len() - 1) / 2;
        Ok(ChartSpec { names, n, second })
    }

    fn default_names(n: usize, second: &str) -> Vec<String> {
        if n == 1 {
            vec!["q".into(), second.into(), "z".into()]
        } else {
            let mut names: Vec<String> = (1..=n).map(|i| format!("q{i}")).collect();
            names.extend((1..=n).map(|i| format!("{second}{i}")));
            names.push("z".into());
            names
        }
    }

    /// `(q, p, z)` for `n = 1`, otherwise `(q1.., p1.., z)`.
    pub fn darboux(n: usize) -> Result<ChartSpec> {
        if n == 0 {
            return Err(Error::InvalidChart(
                "base dimension must be at least 1".into(),
            ));
        }
        ChartSpec::new(Self::default_names(n, "p"), SecondBlock::Momentum)
    }

    /// `(q, qdot, z)` for `n = 1`, otherwise `(q1.., qdot1.., z)`.
    pub fn tangent(n: usize) -> Result<ChartSpec> {
        if n == 0 {
            return Err(Error::InvalidChart(
                "base dimension must be at least 1".into(),
            ));
        }
        ChartSpec::new(Self::default_names(n, "qdot"), SecondBlock::Velocity)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Base dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn second_block(&self) -> SecondBlock {
        self.second
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|s| s == name)
    }

    pub fn q(&self, i: usize) -> usize {
        i
    }

    /// Index of the `i`-th momentum or velocity.
    pub fn s(&self, i: usize) -> usize {
        self.n + i
    }

    pub fn z(&self) -> usize {
        2 * self.n
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_names() {
        assert_eq!(ChartSpec::darboux(1).unwrap().names(), ["q", "p", "z"]);
        let t = ChartSpec::tangent(2).unwrap();
        assert_eq!(t.names(), ["q1", "q2", "qdot1", "qdot2", "z"]);
        assert_eq!(t.z(), 4);
        assert_eq!(t.s(1), 3);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(ChartSpec::darboux(0).is_err());
        let dup = vec!["a".to_string(), "a".into(), "z".into()];
        assert!(ChartSpec::new(dup, SecondBlock::Momentum).is_err());
        let even = vec!["a".to_string(), "b".into()];
        assert!(ChartSpec::new(even, SecondBlock::Momentum).is_err());
        let bad = vec!["1a".to_string(), "b".into(), "z".into()];
        assert!(ChartSpec::new(bad, SecondBlock::Momentum).is_err());
    }
}
