#![allow(dead_code)]

use funnel_core::poly::{FieldSpec, SopInstance, SparsePoly};
use rand::seq::index::sample;
use rand::Rng;

/// Up to `max_terms` distinct orders in `[0, max_order]` with coefficients
/// in `[1, p - 1]`; empty with probability `zero_p`.
pub fn random_poly<R: Rng>(rng: &mut R, field: FieldSpec, max_terms: usize, max_order: u64, zero_p: f64) -> SparsePoly {
    if rng.gen_bool(zero_p) {
        return SparsePoly::zero();
    }
    let span = max_order as usize + 1;
    let n = rng.gen_range(1..=max_terms.min(span));
    let p = field.modulus();
    let raw = sample(rng, span, n)
        .into_iter()
        .map(|o| (rng.gen_range(1..p) as i64, o as u64));
    SparsePoly::normalize(field, raw)
}

pub fn random_instance<R: Rng>(rng: &mut R, p: u64, max_k: usize, max_terms: usize) -> SopInstance {
    let field = FieldSpec::new(p).unwrap();
    let k = rng.gen_range(2..=max_k);
    let max_order = rng.gen_range(0..=48u64);
    let gs = (1..k).map(|_| random_poly(rng, field, max_terms, max_order, 0.1)).collect();
    let hs = (1..k).map(|_| random_poly(rng, field, max_terms, max_order, 0.1)).collect();
    SopInstance::new(field, gs, hs)
}

/// Instance whose pairs cancel exactly: pair `i` and pair `k - i` compute
/// the same product with negated coefficients.
pub fn cancelling_instance<R: Rng>(rng: &mut R, p: u64, half: usize, max_terms: usize) -> SopInstance {
    let field = FieldSpec::new(p).unwrap();
    let k = 2 * half + 1;
    let mut gs = vec![SparsePoly::zero(); k - 1];
    let mut hs = vec![SparsePoly::zero(); k - 1];
    for i in 1..=half {
        let g = random_poly(rng, field, max_terms, 20, 0.0);
        let h = random_poly(rng, field, max_terms, 20, 0.0);
        let neg = SparsePoly::normalize(field, h.terms().iter().map(|t| (-(t.coeff as i64), t.order)));
        let j = k - i;
        // pair i: g_i * h_{k-i}; pair j: g_j * h_i
        gs[i - 1] = g.clone();
        hs[k - i - 1] = h;
        gs[j - 1] = g;
        hs[i - 1] = neg;
    }
    SopInstance::new(field, gs, hs)
}
