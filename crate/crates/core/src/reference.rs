//! Published reference values for the optimal-phase table, loaded from a
//! versioned fixture so runs can be diffed against them.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const FIXTURE: &str = include_str!("../fixtures/reference_table.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub n: usize,
    pub iterations: usize,
    pub omega: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub version: u32,
    /// Code the values were computed for, in `k,n,m;octal...` form.
    pub code: String,
    /// Zero-error, `N = 4` single reported probability.
    pub point_value: ReferenceRow,
    pub rows: Vec<ReferenceRow>,
}

impl ReferenceTable {
    pub fn row(&self, n: usize) -> Option<&ReferenceRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

pub fn reference_table() -> &'static ReferenceTable {
    static TABLE: OnceLock<ReferenceTable> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(FIXTURE).expect("embedded reference fixture parses"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::ConvCode;

    #[test]
    fn fixture_loads() {
        let t = reference_table();
        assert_eq!(t.version, 1);
        assert_eq!(ConvCode::parse(&t.code).unwrap(), ConvCode::paper_code());
        assert_eq!(t.rows.iter().map(|r| r.n).collect::<Vec<_>>(), (3..=10).collect::<Vec<_>>());
        assert_eq!(t.row(4).unwrap().iterations, 3);
        assert!(t.row(11).is_none());
        assert_eq!(t.point_value.prob, 0.673);
    }
}
