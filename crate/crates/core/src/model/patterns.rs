//! Exclusion-restriction patterns for the rows of the structural matrix.
//!
//! A pattern for equation `n` lists which of the `N` contemporaneous
//! coefficients are free. Its selection matrix `V` is `r × N` with a single
//! one per row, placing the free coefficients `b` into the structural row
//! `b V`. Equations with more than one pattern take part in time-varying
//! identification; equations with one pattern are ordinary fixed rows.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One restriction pattern: the sorted set of free columns of a structural row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    label: String,
    n_vars: usize,
    free: Vec<usize>,
}

impl Pattern {
    /// Parses a pattern string over `{*, 0}`, e.g. `"***000"`.
    pub fn parse(label: impl Into<String>, spec: &str) -> Result<Self> {
        let label = label.into();
        let mut free = Vec::new();
        let mut n_vars = 0;
        for (j, ch) in spec.trim().chars().enumerate() {
            match ch {
                '*' => free.push(j),
                '0' => {}
                other => {
                    return Err(Error::Pattern(format!(
                        "pattern {label:?}: unexpected character {other:?} (use '*' or '0')"
                    )))
                }
            }
            n_vars += 1;
        }
        Self::from_free(label, n_vars, free)
    }

    pub fn from_free(label: impl Into<String>, n_vars: usize, mut free: Vec<usize>) -> Result<Self> {
        let label = label.into();
        free.sort_unstable();
        free.dedup();
        if n_vars == 0 {
            return Err(Error::Pattern(format!("pattern {label:?} is empty")));
        }
        if free.is_empty() {
            return Err(Error::Pattern(format!(
                "pattern {label:?} restricts every coefficient; the structural row would vanish"
            )));
        }
        if let Some(&j) = free.iter().find(|&&j| j >= n_vars) {
            return Err(Error::Pattern(format!(
                "pattern {label:?}: column {j} out of range for {n_vars} variables"
            )));
        }
        Ok(Pattern { label, n_vars, free })
    }

    pub fn unrestricted(label: impl Into<String>, n_vars: usize) -> Result<Self> {
        Self::from_free(label, n_vars, (0..n_vars).collect())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Number of free coefficients `r`.
    pub fn rank(&self) -> usize {
        self.free.len()
    }

    /// Free columns in increasing order.
    pub fn free_columns(&self) -> &[usize] {
        &self.free
    }

    pub fn is_free(&self, column: usize) -> bool {
        self.free.binary_search(&column).is_ok()
    }

    /// The `r × N` selection matrix.
    pub fn selection_matrix(&self) -> DMatrix<f64> {
        let mut v = DMatrix::zeros(self.rank(), self.n_vars);
        for (i, &j) in self.free.iter().enumerate() {
            v[(i, j)] = 1.0;
        }
        v
    }

    /// Places `b` at the free columns: the structural row `b V`.
    pub fn apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.rank() {
            return Err(Error::dimension(format!(
                "pattern {:?} has {} free coefficients, got {}",
                self.label,
                self.rank(),
                b.len()
            )));
        }
        let mut row = vec![0.0; self.n_vars];
        for (&j, &value) in self.free.iter().zip(b) {
            row[j] = value;
        }
        Ok(row)
    }

    /// Reads the free coefficients back out of a structural row: `row Vᵀ`.
    pub fn extract(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_vars {
            return Err(Error::dimension(format!(
                "row has length {}, pattern expects {}",
                row.len(),
                self.n_vars
            )));
        }
        Ok(self.free.iter().map(|&j| row[j]).collect())
    }

    /// Zeroes the restricted entries of a row in place.
    pub fn mask(&self, row: &mut [f64]) {
        for (j, value) in row.iter_mut().enumerate() {
            if !self.is_free(j) {
                *value = 0.0;
            }
        }
    }

    pub fn to_pattern_string(&self) -> String {
        (0..self.n_vars)
            .map(|j| if self.is_free(j) { '*' } else { '0' })
            .collect()
    }
}

/// Patterns available to one equation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationPatterns {
    patterns: Vec<Pattern>,
}

impl EquationPatterns {
    pub fn new(patterns: Vec<Pattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::Pattern("an equation needs at least one pattern".into()));
        }
        for (i, a) in patterns.iter().enumerate() {
            for b in &patterns[..i] {
                if a.label == b.label {
                    return Err(Error::Pattern(format!("duplicate pattern label {:?}", a.label)));
                }
                if a.free == b.free {
                    return Err(Error::Pattern(format!(
                        "patterns {:?} and {:?} restrict the same coefficients",
                        b.label, a.label
                    )));
                }
            }
        }
        Ok(EquationPatterns { patterns })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn is_tvi(&self) -> bool {
        self.patterns.len() > 1
    }

    pub fn get(&self, k: usize) -> &Pattern {
        &self.patterns[k]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pattern> {
        self.patterns.iter()
    }

    /// Number of patterns restricting `column` to zero.
    pub fn restricting_count(&self, column: usize) -> usize {
        self.patterns.iter().filter(|p| !p.is_free(column)).count()
    }
}

/// Default structure for equations without declared patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DefaultRows {
    #[default]
    LowerTriangular,
    Unrestricted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSet {
    n_vars: usize,
    equations: Vec<EquationPatterns>,
}

impl PatternSet {
    pub fn new(equations: Vec<EquationPatterns>) -> Result<Self> {
        let n_vars = equations.len();
        if n_vars == 0 {
            return Err(Error::Pattern("pattern set has no equations".into()));
        }
        for (n, eq) in equations.iter().enumerate() {
            if let Some(p) = eq.iter().find(|p| p.n_vars != n_vars) {
                return Err(Error::Pattern(format!(
                    "equation {}: pattern {:?} has {} columns, expected {n_vars}",
                    n + 1,
                    p.label,
                    p.n_vars
                )));
            }
        }
        Ok(PatternSet { n_vars, equations })
    }

    /// Every equation gets a single pattern from `default`.
    pub fn fixed(n_vars: usize, default: DefaultRows) -> Result<Self> {
        let equations = (0..n_vars)
            .map(|n| EquationPatterns::new(vec![default_pattern(n, n_vars, default)?]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(equations)
    }

    /// Builds a pattern set from a plain-text declaration.
    ///
    /// Each non-empty line is `<equation> [label] <pattern>` with a 1-based
    /// equation index and a pattern string over `{*, 0}`. Lines starting with
    /// `#` are comments. Undeclared equations receive `default`.
    pub fn parse(text: &str, n_vars: usize, default: DefaultRows) -> Result<Self> {
        let mut declared: Vec<Vec<Pattern>> = vec![Vec::new(); n_vars];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let (eq, label, spec) = match fields.as_slice() {
                [eq, spec] => (*eq, None, *spec),
                [eq, label, spec] => (*eq, Some(*label), *spec),
                _ => {
                    return Err(Error::Pattern(format!(
                        "line {}: expected `<equation> [label] <pattern>`",
                        lineno + 1
                    )))
                }
            };
            let n: usize = eq
                .parse()
                .map_err(|_| Error::Pattern(format!("line {}: bad equation index {eq:?}", lineno + 1)))?;
            if n == 0 || n > n_vars {
                return Err(Error::Pattern(format!(
                    "line {}: equation {n} out of range 1..={n_vars}",
                    lineno + 1
                )));
            }
            let slot = &mut declared[n - 1];
            let label = label
                .map(str::to_string)
                .unwrap_or_else(|| format!("pattern{}", slot.len() + 1));
            let pattern = Pattern::parse(label, spec)?;
            if pattern.n_vars != n_vars {
                return Err(Error::Pattern(format!(
                    "line {}: pattern has {} columns, expected {n_vars}",
                    lineno + 1,
                    pattern.n_vars
                )));
            }
            slot.push(pattern);
        }
        let equations = declared
            .into_iter()
            .enumerate()
            .map(|(n, patterns)| {
                if patterns.is_empty() {
                    EquationPatterns::new(vec![default_pattern(n, n_vars, default)?])
                } else {
                    EquationPatterns::new(patterns)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(equations)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn equation(&self, n: usize) -> &EquationPatterns {
        &self.equations[n]
    }

    pub fn equations(&self) -> &[EquationPatterns] {
        &self.equations
    }

    /// Indices of equations with more than one pattern.
    pub fn tvi_equations(&self) -> Vec<usize> {
        (0..self.n_vars).filter(|&n| self.equations[n].is_tvi()).collect()
    }

    pub fn to_declaration(&self) -> String {
        let mut out = String::new();
        for (n, eq) in self.equations.iter().enumerate() {
            for p in eq.iter() {
                out.push_str(&format!("{} {} {}\n", n + 1, p.label, p.to_pattern_string()));
            }
        }
        out
    }
}

fn default_pattern(n: usize, n_vars: usize, default: DefaultRows) -> Result<Pattern> {
    match default {
        DefaultRows::LowerTriangular => Pattern::from_free("fixed", n_vars, (0..=n).collect()),
        DefaultRows::Unrestricted => Pattern::unrestricted("fixed", n_vars),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn baseline_row_selects_first_three() {
        let p = Pattern::parse("baseline", "***000").unwrap();
        let v = p.selection_matrix();
        assert_eq!(v.shape(), (3, 6));
        assert_eq!(p.rank(), 3);
        for i in 0..3 {
            for j in 0..6 {
                assert_eq!(v[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn only_money_row() {
        let p = Pattern::parse("only m", "00*0*0").unwrap();
        let v = p.selection_matrix();
        assert_eq!(v.shape(), (2, 6));
        assert_eq!(v[(0, 2)], 1.0);
        assert_eq!(v[(1, 4)], 1.0);
        assert_eq!(v.sum(), 2.0);
    }

    #[test]
    fn scalar_pattern() {
        let p = Pattern::parse("x", "*").unwrap();
        assert_eq!(p.selection_matrix(), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn all_zero_pattern_rejected() {
        assert!(matches!(Pattern::parse("z", "000"), Err(Error::Pattern(_))));
    }

    #[test]
    fn duplicate_patterns_rejected() {
        let a = Pattern::parse("a", "**0").unwrap();
        let b = Pattern::parse("b", "**0").unwrap();
        assert!(EquationPatterns::new(vec![a.clone(), b]).is_err());
        let c = Pattern::parse("a", "*0*").unwrap();
        assert!(EquationPatterns::new(vec![a, c]).is_err());
    }

    #[test]
    fn apply_places_coefficients() {
        let p = Pattern::parse("p", "*0*").unwrap();
        assert_eq!(p.apply(&[2.0, 3.0]).unwrap(), vec![2.0, 0.0, 3.0]);
        assert!(matches!(p.apply(&[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn parse_declaration_with_defaults() {
        let text = "# monetary policy row\n3 baseline ***000\n3 with_ts ****00\n4 unrest ******\n4 with0 **0***\n";
        let set = PatternSet::parse(text, 6, DefaultRows::LowerTriangular).unwrap();
        assert_eq!(set.tvi_equations(), vec![2, 3]);
        assert_eq!(set.equation(0).get(0).to_pattern_string(), "*00000");
        assert_eq!(set.equation(5).get(0).to_pattern_string(), "******");
        assert_eq!(set.equation(2).get(1).label(), "with_ts");
        let again = PatternSet::parse(&set.to_declaration(), 6, DefaultRows::Unrestricted).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn bad_declarations() {
        assert!(PatternSet::parse("7 ***", 3, DefaultRows::LowerTriangular).is_err());
        assert!(PatternSet::parse("1 **", 3, DefaultRows::LowerTriangular).is_err());
        assert!(PatternSet::parse("1 *x*", 3, DefaultRows::LowerTriangular).is_err());
    }

    fn arb_pattern() -> impl Strategy<Value = Pattern> {
        (1usize..8)
            .prop_flat_map(|n| proptest::collection::vec(any::<bool>(), n))
            .prop_filter("non-empty", |mask| mask.iter().any(|&b| b))
            .prop_map(|mask| {
                let free = mask.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect();
                Pattern::from_free("p", mask.len(), free).unwrap()
            })
    }

    proptest! {
        #[test]
        fn selection_is_orthonormal(p in arb_pattern()) {
            let v = p.selection_matrix();
            let vvt = &v * v.transpose();
            prop_assert_eq!(vvt, DMatrix::identity(p.rank(), p.rank()));
            for j in 0..p.n_vars() {
                prop_assert!(v.column(j).sum() <= 1.0);
            }
        }

        #[test]
        fn extract_inverts_apply(p in arb_pattern(), seed in any::<u64>()) {
            let b: Vec<f64> = (0..p.rank()).map(|i| ((seed >> (i % 60)) as f64).sin()).collect();
            let mut row = p.apply(&b).unwrap();
            prop_assert_eq!(p.extract(&row).unwrap(), b);
            let before = row.clone();
            p.mask(&mut row);
            prop_assert_eq!(row, before);
        }
    }
}
