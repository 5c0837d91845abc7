//! Degree-0/1 operators on the linearized presheaf: the coboundary `delta`,
//! its adjoint `d_dual`, and zeta/Möbius operators on functors.

use crate::presheaf::{FieldBundle, FiniteSetPresheaf, InnerProductWeights};

/// One vector over `F_b` for every strict pair `a -> b` (`b < a`), in the
/// poset's canonical pair order. Self-pairs `a -> a` are not represented.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBundle(pub Vec<Vec<f64>>);

impl MessageBundle {
    pub fn zeros(f: &FiniteSetPresheaf) -> Self {
        Self::constant(f, 0.0)
    }

    pub fn constant(f: &FiniteSetPresheaf, value: f64) -> Self {
        MessageBundle(
            f.poset()
                .pairs()
                .iter()
                .map(|&(_, b)| vec![value; f.size(b)])
                .collect(),
        )
    }

    pub fn parts(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn get(&self, k: usize) -> &[f64] {
        &self.0[k]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map(&self, mut g: impl FnMut(f64) -> f64) -> Self {
        MessageBundle(
            self.0
                .iter()
                .map(|v| v.iter().map(|&x| g(x)).collect())
                .collect(),
        )
    }

    pub fn zip_with(&self, other: &Self, mut g: impl FnMut(f64, f64) -> f64) -> Self {
        MessageBundle(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(u, v)| u.iter().zip(v).map(|(&x, &y)| g(x, y)).collect())
                .collect(),
        )
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().flatten().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// Sup-norm of the difference; entries that are `-inf` on both sides agree.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        let mut d = 0.0f64;
        for (x, y) in self.0.iter().flatten().zip(other.0.iter().flatten()) {
            if x == y {
                continue;
            }
            let diff = (x - y).abs();
            d = d.max(if diff.is_nan() { f64::INFINITY } else { diff });
        }
        d
    }

    /// Pairing where message `a -> b` uses the weights of `F_b`.
    pub fn dot(&self, other: &Self, f: &FiniteSetPresheaf, weights: &InnerProductWeights) -> f64 {
        let mut s = 0.0;
        for (k, &(_, b)) in f.poset().pairs().iter().enumerate() {
            let w = weights.get(b);
            for x in 0..self.0[k].len() {
                s += w[x] * self.0[k][x] * other.0[k][x];
            }
        }
        s
    }
}

/// `delta(v)(a -> b) = F~^a_b(v_a) - v_b`.
pub fn delta(f: &FiniteSetPresheaf, v: &FieldBundle) -> MessageBundle {
    MessageBundle(
        f.poset()
            .pairs()
            .iter()
            .map(|&(a, b)| {
                let mut m = f.push(a, b, v.get(a));
                m.iter_mut().zip(v.get(b)).for_each(|(x, y)| *x -= y);
                m
            })
            .collect(),
    )
}

/// Adjoint of [`delta`] for the weighted products:
/// `d(l)(a) = sum_{b < a} F^{a,dagger}_b(l_{a->b}) - sum_{b > a} l_{b->a}`.
pub fn d_dual(f: &FiniteSetPresheaf, weights: &InnerProductWeights, l: &MessageBundle) -> FieldBundle {
    let mut out = FieldBundle::zeros(f);
    for (k, &(a, b)) in f.poset().pairs().iter().enumerate() {
        let up = f.adj(weights, a, b, l.get(k));
        out.get_mut(a).iter_mut().zip(&up).for_each(|(x, y)| *x += y);
        out.get_mut(b).iter_mut().zip(l.get(k)).for_each(|(x, y)| *x -= y);
    }
    out
}

/// `zeta(v)(a) = sum_{b <= a} F^{a,dagger}_b(v_b)`.
pub fn zeta_functor(f: &FiniteSetPresheaf, weights: &InnerProductWeights, v: &FieldBundle) -> FieldBundle {
    transport_sum(f, v, |a, b| (1.0, f.adj(weights, a, b, v.get(b))))
}

/// `mu(v)(a) = sum_{b <= a} mu(a, b) F^{a,dagger}_b(v_b)`; inverse of [`zeta_functor`].
pub fn mu_functor(f: &FiniteSetPresheaf, weights: &InnerProductWeights, v: &FieldBundle) -> FieldBundle {
    let mobius = f.poset().mobius();
    transport_sum(f, v, |a, b| (mobius.mu(a, b) as f64, f.adj(weights, a, b, v.get(b))))
}

/// Möbius operator of the dual functor under the standard identification
/// (transport by pullback).
pub fn mu_dual_covariant(f: &FiniteSetPresheaf, v: &FieldBundle) -> FieldBundle {
    let mobius = f.poset().mobius();
    transport_sum(f, v, |a, b| (mobius.mu(a, b) as f64, f.pull(a, b, v.get(b))))
}

/// Zeta operator of the dual functor (transport by pullback).
pub fn zeta_dual_covariant(f: &FiniteSetPresheaf, v: &FieldBundle) -> FieldBundle {
    transport_sum(f, v, |a, b| (1.0, f.pull(a, b, v.get(b))))
}

fn transport_sum(
    f: &FiniteSetPresheaf,
    v: &FieldBundle,
    term: impl Fn(usize, usize) -> (f64, Vec<f64>),
) -> FieldBundle {
    let p = f.poset();
    FieldBundle(
        (0..p.len())
            .map(|a| {
                let mut acc = v.get(a).to_vec();
                for &b in p.below(a) {
                    let (coef, t) = term(a, b);
                    if coef != 0.0 {
                        acc.iter_mut().zip(&t).for_each(|(x, y)| *x += coef * y);
                    }
                }
                acc
            })
            .collect(),
    )
}
