//! Sparse distributed polynomials over a small prime field.
//!
//! A polynomial is the list of its non-zero terms sorted on strictly
//! decreasing monomial order. The order of a monomial is its total degree;
//! callers working with bivariate data collapse exponents before building a
//! [`SparsePoly`].

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The prime field `F_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpec {
    p: u64,
}

impl FieldSpec {
    pub fn new(p: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        Ok(Self { p })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.p
    }

    #[inline]
    pub fn reduce(&self, x: i64) -> u64 {
        x.rem_euclid(self.p as i64) as u64
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        (a * b) % self.p
    }
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self { p: 3 }
    }
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// A non-zero term `coeff * x^order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Term {
    pub coeff: u64,
    pub order: u64,
}

impl Term {
    pub fn new(coeff: u64, order: u64) -> Self {
        Self { coeff, order }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SparsePoly {
    terms: Vec<Term>,
}

impl SparsePoly {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// Reduces coefficients mod `p`, combines equal orders, drops zeros and
    /// sorts on decreasing order.
    pub fn normalize<I>(field: FieldSpec, raw: I) -> Self
    where
        I: IntoIterator<Item = (i64, u64)>,
    {
        let mut raw: Vec<(u64, u64)> = raw
            .into_iter()
            .map(|(c, o)| (field.reduce(c), o))
            .collect();
        raw.sort_unstable_by_key(|t| std::cmp::Reverse(t.1));
        let mut terms: Vec<Term> = Vec::with_capacity(raw.len());
        let mut iter = raw.into_iter().peekable();
        while let Some((mut acc, order)) = iter.next() {
            while let Some(&(c, o)) = iter.peek() {
                if o != order {
                    break;
                }
                acc = (acc + c) % field.modulus();
                iter.next();
            }
            if acc != 0 {
                terms.push(Term::new(acc, order));
            }
        }
        Self { terms }
    }

    /// Builds a polynomial from terms that already satisfy the representation
    /// invariants. Returns `None` when they do not.
    pub fn from_sorted_terms(field: FieldSpec, terms: Vec<Term>) -> Option<Self> {
        let ok = terms
            .iter()
            .all(|t| t.coeff != 0 && t.coeff < field.modulus())
            && terms.windows(2).all(|w| w[0].order > w[1].order);
        ok.then_some(Self { terms })
    }

    #[inline]
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Order of the leading term; `None` for the zero polynomial.
    #[inline]
    pub fn max_order(&self) -> Option<u64> {
        self.terms.first().map(|t| t.order)
    }

    pub fn as_pairs(&self) -> Vec<(u64, u64)> {
        self.terms.iter().map(|t| (t.coeff, t.order)).collect()
    }
}

/// One sums-of-products input: `k` together with `g_1..g_{k-1}` and
/// `h_1..h_{k-1}`. Pair `i` multiplies `g_i` with `h_{k-i}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SopInstance {
    pub field: FieldSpec,
    pub k: usize,
    pub gs: Vec<SparsePoly>,
    pub hs: Vec<SparsePoly>,
}

impl SopInstance {
    /// Panics if `gs` and `hs` do not both hold `k - 1` polynomials.
    pub fn new(field: FieldSpec, gs: Vec<SparsePoly>, hs: Vec<SparsePoly>) -> Self {
        assert_eq!(gs.len(), hs.len(), "g and h sequences differ in length");
        let k = gs.len() + 1;
        Self { field, k, gs, hs }
    }

    /// Number of pairs, `k - 1`.
    #[inline]
    pub fn pairs(&self) -> usize {
        self.gs.len()
    }

    /// The operands `(g_i, h_{k-i})` of pair `i`, 1-based.
    #[inline]
    pub fn pair(&self, i: usize) -> (&SparsePoly, &SparsePoly) {
        (&self.gs[i - 1], &self.hs[self.k - i - 1])
    }

    /// Total count of monomial products, `sum_i #g_i * #h_{k-i}`.
    pub fn product_count(&self) -> u64 {
        (1..=self.pairs())
            .map(|i| {
                let (g, h) = self.pair(i);
                (g.len() * h.len()) as u64
            })
            .sum()
    }

    /// Largest order a product can reach.
    pub fn degree_bound(&self) -> u64 {
        (1..=self.pairs())
            .filter_map(|i| {
                let (g, h) = self.pair(i);
                Some(g.max_order()? + h.max_order()?)
            })
            .max()
            .unwrap_or(0)
    }

    /// Writes the text fixture format:
    ///
    /// ```text
    /// p 3 k 3
    /// g 1
    /// 1 2
    /// g 2
    /// h 1
    /// 2 0
    /// h 2
    /// ```
    ///
    /// A `g <i>` / `h <j>` line opens a polynomial; the `coeff order` lines
    /// that follow are its terms. A polynomial with no term lines is zero.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "p {} k {}", self.field.modulus(), self.k);
        for (tag, polys) in [("g", &self.gs), ("h", &self.hs)] {
            for (idx, poly) in polys.iter().enumerate() {
                let _ = writeln!(out, "{tag} {}", idx + 1);
                for t in poly.terms() {
                    let _ = writeln!(out, "{} {}", t.coeff, t.order);
                }
            }
        }
        out
    }
}

impl FromStr for SopInstance {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines.next().ok_or_else(|| perr(1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (p, k) = match fields.as_slice() {
            ["p", p, "k", k] => (
                p.parse::<u64>().map_err(|_| perr(hline, "bad modulus"))?,
                k.parse::<usize>().map_err(|_| perr(hline, "bad k"))?,
            ),
            _ => return Err(perr(hline, "expected `p <modulus> k <count>`")),
        };
        if k < 2 {
            return Err(perr(hline, "k must be at least 2"));
        }
        let field = FieldSpec::new(p)?;

        let mut raw_g: Vec<Option<Vec<(i64, u64)>>> = vec![None; k - 1];
        let mut raw_h: Vec<Option<Vec<(i64, u64)>>> = vec![None; k - 1];
        let mut current: Option<&mut Vec<(i64, u64)>> = None;
        for (n, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [tag @ ("g" | "h"), idx] => {
                    let idx: usize = idx.parse().map_err(|_| perr(n, "bad index"))?;
                    if idx == 0 || idx >= k {
                        return Err(perr(n, "polynomial index out of range"));
                    }
                    let slot = if *tag == "g" {
                        &mut raw_g[idx - 1]
                    } else {
                        &mut raw_h[idx - 1]
                    };
                    if slot.is_some() {
                        return Err(perr(n, "polynomial defined twice"));
                    }
                    current = Some(slot.insert(Vec::new()));
                }
                [c, o] => {
                    let c: i64 = c.parse().map_err(|_| perr(n, "bad coefficient"))?;
                    let o: u64 = o.parse().map_err(|_| perr(n, "bad order"))?;
                    current
                        .as_mut()
                        .ok_or_else(|| perr(n, "term before any `g`/`h` line"))?
                        .push((c, o));
                }
                _ => return Err(perr(n, "expected `coeff order` or `g|h <index>`")),
            }
        }
        let build = |raw: Vec<Option<Vec<(i64, u64)>>>| -> Vec<SparsePoly> {
            raw.into_iter()
                .map(|r| SparsePoly::normalize(field, r.unwrap_or_default()))
                .collect()
        };
        Ok(SopInstance::new(field, build(raw_g), build(raw_h)))
    }
}

/// Reference `S_k = sum_i g_i * h_{k-i}` by dense accumulation indexed by
/// order. Every kernel variant is checked against this.
pub fn naive_sum_of_products(inst: &SopInstance) -> SparsePoly {
    let p = inst.field.modulus();
    let bound = inst.degree_bound() as usize;
    let mut dense = vec![0u64; bound + 1];
    let mut touched = false;
    for i in 1..=inst.pairs() {
        let (g, h) = inst.pair(i);
        for a in g.terms() {
            for b in h.terms() {
                let slot = &mut dense[(a.order + b.order) as usize];
                *slot = (*slot + a.coeff * b.coeff) % p;
                touched = true;
            }
        }
    }
    if !touched {
        return SparsePoly::zero();
    }
    let terms = dense
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, &c)| c != 0)
        .map(|(o, &c)| Term::new(c, o as u64))
        .collect();
    SparsePoly { terms }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f3() -> FieldSpec {
        FieldSpec::new(3).unwrap()
    }

    fn poly(field: FieldSpec, pairs: &[(i64, u64)]) -> SparsePoly {
        SparsePoly::normalize(field, pairs.iter().copied())
    }

    #[test]
    fn rejects_composite_modulus() {
        assert_eq!(FieldSpec::new(9), Err(Error::NotPrime(9)));
        assert_eq!(FieldSpec::new(1), Err(Error::NotPrime(1)));
        assert!(FieldSpec::new(7).is_ok());
    }

    #[test]
    fn normalize_examples() {
        let f = f3();
        assert_eq!(poly(f, &[(2, 5), (2, 5)]).as_pairs(), vec![(1, 5)]);
        assert!(poly(f, &[(1, 4), (2, 4)]).is_zero());
        assert_eq!(poly(f, &[(1, 0), (2, 7), (1, 7)]).as_pairs(), vec![(1, 0)]);
        assert_eq!(poly(f, &[(-1, 3)]).as_pairs(), vec![(2, 3)]);
    }

    #[test]
    fn sop_single_product() {
        let f = f3();
        let inst = SopInstance::new(f, vec![poly(f, &[(1, 1)])], vec![poly(f, &[(1, 1)])]);
        assert_eq!(naive_sum_of_products(&inst).as_pairs(), vec![(1, 2)]);
    }

    #[test]
    fn sop_full_cancellation() {
        let f = f3();
        // g1 = x, g2 = 1, h1 = x, h2 = 2: x*2 + 1*x = 3x = 0
        let inst = SopInstance::new(
            f,
            vec![poly(f, &[(1, 1)]), poly(f, &[(1, 0)])],
            vec![poly(f, &[(1, 1)]), poly(f, &[(2, 0)])],
        );
        assert!(naive_sum_of_products(&inst).is_zero());
    }

    #[test]
    fn sop_hand_multiplication() {
        let f = f3();
        // (x^2 + 1) * x^2 + x * 2
        let inst = SopInstance::new(
            f,
            vec![poly(f, &[(1, 2), (1, 0)]), poly(f, &[(1, 1)])],
            vec![poly(f, &[(2, 0)]), poly(f, &[(1, 2)])],
        );
        assert_eq!(
            naive_sum_of_products(&inst).as_pairs(),
            vec![(1, 4), (1, 2), (2, 1)]
        );
    }

    #[test]
    fn zero_operands() {
        let f = f3();
        let inst = SopInstance::new(f, vec![SparsePoly::zero()], vec![poly(f, &[(1, 3)])]);
        assert!(naive_sum_of_products(&inst).is_zero());
        assert_eq!(inst.degree_bound(), 0);
    }

    #[test]
    fn text_round_trip() {
        let f = FieldSpec::new(7).unwrap();
        let inst = SopInstance::new(
            f,
            vec![poly(f, &[(3, 4), (1, 0)]), SparsePoly::zero()],
            vec![poly(f, &[(6, 2)]), poly(f, &[(5, 1), (2, 0)])],
        );
        let back: SopInstance = inst.to_text().parse().unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn text_errors() {
        assert!(matches!(
            "q 3 k 2".parse::<SopInstance>(),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            "p 4 k 2".parse::<SopInstance>(),
            Err(Error::NotPrime(4))
        ));
        assert!(matches!(
            "p 3 k 2\n1 2".parse::<SopInstance>(),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            "p 3 k 2\ng 2".parse::<SopInstance>(),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn from_sorted_terms_checks_invariants() {
        let f = f3();
        assert!(SparsePoly::from_sorted_terms(f, vec![Term::new(1, 3), Term::new(2, 1)]).is_some());
        assert!(SparsePoly::from_sorted_terms(f, vec![Term::new(1, 1), Term::new(2, 3)]).is_none());
        assert!(SparsePoly::from_sorted_terms(f, vec![Term::new(0, 1)]).is_none());
        assert!(SparsePoly::from_sorted_terms(f, vec![Term::new(3, 1)]).is_none());
    }
}
