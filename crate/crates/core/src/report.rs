//! Line-oriented `key: value` reports with dotted nested keys.

use std::fmt;

use crate::format::sig9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, key: impl Into<String>, value: impl fmt::Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn num(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.entries.push((key.into(), sig9(value)));
        self
    }

    /// Appends `value`'s fields under `prefix.`.
    pub fn section(&mut self, prefix: &str, value: &impl ToReport) -> &mut Self {
        let mut inner = Report::new();
        value.to_report(&mut inner);
        for (k, v) in inner.entries {
            self.entries.push((format!("{prefix}.{k}"), v));
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

pub trait ToReport {
    fn to_report(&self, out: &mut Report);
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Pair(f64, f64);

    impl ToReport for Pair {
        fn to_report(&self, out: &mut Report) {
            out.num("a", self.0).num("b", self.1);
        }
    }

    #[test]
    fn nested_keys_are_dotted() {
        let mut r = Report::new();
        r.text("model", "x").section("stats", &Pair(1.0, 0.5));
        assert_eq!(
            r.to_string(),
            "model: x\nstats.a: 1.00000000\nstats.b: 0.500000000\n"
        );
        assert_eq!(r.get("stats.b"), Some("0.500000000"));
    }
}
