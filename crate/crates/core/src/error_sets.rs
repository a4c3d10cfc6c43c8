//! Error-set hierarchy generated by natural jumps and their backaction, and symmetrized products.

use std::collections::HashMap;
use std::fmt;

use crate::error::{check_dim, Error, Result};
use crate::linalg::CMatrix;
use crate::superop::{Operator, Superoperator};

pub const DEFAULT_DEGREE_CAP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    /// Natural jump, 1-based.
    Jump(usize),
    /// User-supplied extra first-order error, 1-based.
    Extra(usize),
    /// Backaction Hamiltonian insertion (weight 2).
    Backaction,
}

impl Token {
    pub fn weight(self) -> usize {
        match self {
            Token::Jump(_) | Token::Extra(_) => 1,
            Token::Backaction => 2,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Jump(k) => write!(f, "F{k}"),
            Token::Extra(k) => write!(f, "S{k}"),
            Token::Backaction => write!(f, "BA"),
        }
    }
}

/// Operator word, read left to right as a matrix product.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ErrorLabel(pub Vec<Token>);

impl ErrorLabel {
    pub fn identity() -> Self {
        Self(Vec::new())
    }

    pub fn weight(&self) -> usize {
        self.0.iter().map(|t| t.weight()).sum()
    }

    fn prepend(&self, t: Token) -> Self {
        let mut w = Vec::with_capacity(self.0.len() + 1);
        w.push(t);
        w.extend_from_slice(&self.0);
        Self(w)
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "I" {
            return Ok(Self::identity());
        }
        let bad = || Error::InvalidInput(format!("malformed error label '{s}'"));
        s.split('.')
            .map(|t| {
                if t == "BA" {
                    Ok(Token::Backaction)
                } else if let Some(k) = t.strip_prefix('F') {
                    k.parse().ok().filter(|k| *k > 0).map(Token::Jump).ok_or_else(bad)
                } else if let Some(k) = t.strip_prefix('S') {
                    k.parse().ok().filter(|k| *k > 0).map(Token::Extra).ok_or_else(bad)
                } else {
                    Err(bad())
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl fmt::Display for ErrorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "I");
        }
        let parts: Vec<String> = self.0.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

#[derive(Clone, Debug)]
pub struct ErrorEntry {
    pub label: ErrorLabel,
    pub op: Operator,
}

#[derive(Clone, Debug)]
pub struct ErrorSetHierarchy {
    pub order: usize,
    /// `sets[n]` is E^[n] in construction order.
    pub sets: Vec<Vec<ErrorEntry>>,
    pub backaction: Operator,
    pub num_generators: usize,
}

impl ErrorSetHierarchy {
    pub fn dim(&self) -> usize {
        self.backaction.dim()
    }

    /// E^[~c] flattened in construction order.
    pub fn all(&self) -> impl Iterator<Item = &ErrorEntry> {
        self.sets.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sub-hierarchy up to order `c`.
    pub fn truncated(&self, c: usize) -> Self {
        let c = c.min(self.order);
        Self {
            order: c,
            sets: self.sets[..=c].to_vec(),
            backaction: self.backaction.clone(),
            num_generators: self.num_generators,
        }
    }
}

/// Σ F_k† F_k; zero operator of dimension `dim` for an empty list.
pub fn backaction_hamiltonian(dim: usize, jumps: &[Operator]) -> Result<Operator> {
    let mut h = CMatrix::zeros(dim, dim);
    for (i, f) in jumps.iter().enumerate() {
        check_dim(&format!("jump {}", i + 1), dim, f.dim())?;
        h += f.adjoint().matrix() * f.matrix();
    }
    Ok(Operator::wrap(h))
}

pub fn build_error_sets(dim: usize, jumps: &[Operator], c: usize) -> Result<ErrorSetHierarchy> {
    build_error_sets_with_extras(dim, jumps, &[], c)
}

/// Hierarchy whose first-order generators are the natural jumps followed by `extras`
/// (for instance superpositions of jumps). The backaction term uses the natural jumps only.
pub fn build_error_sets_with_extras(
    dim: usize,
    jumps: &[Operator],
    extras: &[Operator],
    c: usize,
) -> Result<ErrorSetHierarchy> {
    let backaction = backaction_hamiltonian(dim, jumps)?;
    for (i, e) in extras.iter().enumerate() {
        check_dim(&format!("extra error {}", i + 1), dim, e.dim())?;
    }
    let generators: Vec<(Token, &Operator)> = jumps
        .iter()
        .enumerate()
        .map(|(k, f)| (Token::Jump(k + 1), f))
        .chain(extras.iter().enumerate().map(|(k, f)| (Token::Extra(k + 1), f)))
        .collect();
    let mut sets: Vec<Vec<ErrorEntry>> = vec![vec![ErrorEntry {
        label: ErrorLabel::identity(),
        op: Operator::identity(dim),
    }]];
    for n in 1..=c {
        let mut next = Vec::new();
        for (tok, f) in &generators {
            for e in &sets[n - 1] {
                next.push(ErrorEntry {
                    label: e.label.prepend(*tok),
                    op: *f * &e.op,
                });
            }
        }
        if n >= 2 {
            for e in &sets[n - 2] {
                next.push(ErrorEntry {
                    label: e.label.prepend(Token::Backaction),
                    op: &backaction * &e.op,
                });
            }
        }
        sets.push(next);
    }
    Ok(ErrorSetHierarchy {
        order: c,
        sets,
        backaction,
        num_generators: generators.len(),
    })
}

/// Memoized sums over all distinct orderings of factor powers, optionally right-multiplied by a base.
pub struct SymmetrizedProducts<'a> {
    factors: Vec<&'a CMatrix>,
    base: CMatrix,
    cap: usize,
    memo: HashMap<Vec<usize>, CMatrix>,
}

impl<'a> SymmetrizedProducts<'a> {
    pub fn new(factors: &[&'a Superoperator], cap: usize) -> Self {
        let n = factors.first().map_or(0, |f| f.matrix().nrows());
        Self::with_base(factors, CMatrix::identity(n, n), cap)
    }

    /// S(k)·base for every requested multiplicity tuple k.
    pub fn with_base(factors: &[&'a Superoperator], base: CMatrix, cap: usize) -> Self {
        Self {
            factors: factors.iter().map(|f| f.matrix()).collect(),
            base,
            cap,
            memo: HashMap::new(),
        }
    }

    pub fn get(&mut self, ks: &[usize]) -> Result<CMatrix> {
        if ks.len() != self.factors.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} multiplicities, got {}",
                self.factors.len(),
                ks.len()
            )));
        }
        let degree: usize = ks.iter().sum();
        if degree > self.cap {
            return Err(Error::DegreeCap {
                degree,
                cap: self.cap,
            });
        }
        Ok(self.eval(ks))
    }

    fn eval(&mut self, ks: &[usize]) -> CMatrix {
        if ks.iter().all(|&k| k == 0) {
            return self.base.clone();
        }
        if let Some(m) = self.memo.get(ks) {
            return m.clone();
        }
        let mut acc = CMatrix::zeros(self.base.nrows(), self.base.ncols());
        let mut sub = ks.to_vec();
        for i in 0..ks.len() {
            if ks[i] == 0 {
                continue;
            }
            sub[i] -= 1;
            let inner = self.eval(&sub);
            acc += self.factors[i] * inner;
            sub[i] += 1;
        }
        self.memo.insert(ks.to_vec(), acc.clone());
        acc
    }
}

/// Sum over all distinct orderings of the given factor powers, with unit prefactors.
pub fn symmetrized_product(
    factors: &[(&Superoperator, usize)],
    cap: usize,
) -> Result<Superoperator> {
    let Some((first, _)) = factors.first() else {
        return Err(Error::InvalidInput("no factors".into()));
    };
    let dim = first.dim();
    for (f, _) in factors {
        check_dim("symmetrized product factor", dim, f.dim())?;
    }
    let ops: Vec<&Superoperator> = factors.iter().map(|(f, _)| *f).collect();
    let ks: Vec<usize> = factors.iter().map(|(_, k)| *k).collect();
    let m = SymmetrizedProducts::new(&ops, cap).get(&ks)?;
    Ok(Superoperator::wrap(dim, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn sigma_minus() -> Operator {
        Operator::new(CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)])).unwrap()
    }

    #[test]
    fn backaction_of_lowering_is_number_operator() {
        let h = backaction_hamiltonian(2, &[sigma_minus()]).unwrap();
        let want = CMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(1.0)]);
        assert_eq!(h.matrix(), &want);
        let id = backaction_hamiltonian(2, &[Operator::identity(2)]).unwrap();
        assert_eq!(id, Operator::identity(2));
        assert_eq!(backaction_hamiltonian(2, &[]).unwrap().norm(), 0.0);
    }

    #[test]
    fn order_zero_is_identity_only() {
        let h = build_error_sets(2, &[sigma_minus()], 0).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.sets[0][0].label.to_string(), "I");
    }

    #[test]
    fn second_order_single_jump() {
        let f = sigma_minus();
        let h = build_error_sets(2, std::slice::from_ref(&f), 2).unwrap();
        let labels: Vec<String> = h.sets[2].iter().map(|e| e.label.to_string()).collect();
        assert_eq!(labels, vec!["F1.F1", "BA"]);
        assert_eq!(h.sets[2][0].op, &f * &f);
        assert_eq!(h.sets[2][1].op, h.backaction);
    }

    #[test]
    fn cardinality_recursion() {
        let f = sigma_minus();
        let h = build_error_sets(2, &[f.clone(), f.adjoint()], 3).unwrap();
        let sizes: Vec<usize> = h.sets.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 2, 5, 12]);
        for (n, set) in h.sets.iter().enumerate() {
            assert!(set.iter().all(|e| e.label.weight() == n));
        }
    }

    #[test]
    fn label_round_trip() {
        for s in ["I", "F1", "F1.F2", "BA.F1", "S2.BA"] {
            assert_eq!(ErrorLabel::parse(s).unwrap().to_string(), s);
        }
        assert!(ErrorLabel::parse("G1").is_err());
        assert!(ErrorLabel::parse("F0").is_err());
    }

    #[test]
    fn extras_extend_first_order() {
        let f = sigma_minus();
        let h = build_error_sets_with_extras(2, std::slice::from_ref(&f), &[f.adjoint()], 2).unwrap();
        assert_eq!(h.sets[1].len(), 2);
        assert_eq!(h.sets[1][1].label.to_string(), "S1");
        assert_eq!(h.sets[2].len(), 2 * 2 + 1);
        assert_eq!(h.backaction, backaction_hamiltonian(2, &[f]).unwrap());
    }

    #[test]
    fn two_a_one_b() {
        let a = Superoperator::new(
            1,
            CMatrix::from_element(1, 1, c(2.0)),
        )
        .unwrap();
        let b = Superoperator::new(1, CMatrix::from_element(1, 1, c(3.0))).unwrap();
        let s = symmetrized_product(&[(&a, 2), (&b, 1)], 8).unwrap();
        assert!((s.matrix()[(0, 0)].re - 3.0 * 4.0 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn degree_cap_enforced() {
        let a = Superoperator::identity(1);
        assert!(matches!(
            symmetrized_product(&[(&a, 5), (&a, 4)], 8),
            Err(Error::DegreeCap { degree: 9, cap: 8 })
        ));
    }
}
