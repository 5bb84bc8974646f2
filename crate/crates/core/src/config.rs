//! Flat `key = value` configuration with dotted section names.
//!
//! ```text
//! # comment
//! fisher.n_draws = 2000
//! bayes.mu0 = 10,12,13,15
//! binary.prior_cov = 4,10,10;10,100,50;10,50,100
//! ```
//!
//! Lists are comma separated; matrix rows are separated by `;`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, found {raw:?}",
                    index + 1
                ))
            })?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Config(format!(
                    "line {}: invalid key {key:?}",
                    index + 1
                )));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets or replaces a key; later settings win.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    /// Fills keys that are not yet present.
    pub fn set_default(&mut self, key: &str, value: impl Into<String>) {
        self.entries
            .entry(key.to_string())
            .or_insert_with(|| value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key).map(|v| parse_list(key, v)).transpose()
    }

    pub fn get_usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|t| {
                        t.trim().parse().map_err(|_| {
                            Error::Config(format!("{key}: cannot parse {t:?} as an integer"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn get_matrix(&self, key: &str) -> Result<Option<DMatrix<f64>>> {
        self.raw(key)
            .map(|v| {
                let rows = v
                    .split(';')
                    .map(|row| parse_list(key, row))
                    .collect::<Result<Vec<_>>>()?;
                let n = rows.len();
                if rows.iter().any(|r| r.len() != rows[0].len()) {
                    return Err(Error::Config(format!("{key}: ragged matrix")));
                }
                Ok(DMatrix::from_row_slice(n, rows[0].len(), &rows.concat()))
            })
            .transpose()
    }
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("{key}: cannot parse {t:?} as a number")))
        })
        .collect()
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut c = Config::parse("# top\nfisher.n_draws = 500\n\nbayes.mu0 = 1, 2,3 # trailing\n")
            .unwrap();
        assert_eq!(c.get::<usize>("fisher.n_draws").unwrap(), Some(500));
        assert_eq!(c.get_list("bayes.mu0").unwrap(), Some(vec![1.0, 2.0, 3.0]));
        c.set("fisher.n_draws", "1000");
        c.set_default("fisher.n_draws", "7");
        assert_eq!(c.get_or::<usize>("fisher.n_draws", 0).unwrap(), 1000);
        assert_eq!(Config::parse(&c.to_string()).unwrap(), c);
        assert!(Config::parse("novalue").is_err());
        assert!(c.get::<f64>("bayes.mu0").is_err());
    }

    #[test]
    fn matrices() {
        let c = Config::parse(crate::fixtures::TABLE5_CONFIG).unwrap();
        let m = c.get_matrix("binary.prior_cov").unwrap().unwrap();
        assert_eq!(m[(1, 2)], 50.0);
        assert_eq!(m, m.transpose());
        assert!(Config::parse("m = 1,2;3").unwrap().get_matrix("m").is_err());
    }
}
