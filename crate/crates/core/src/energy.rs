//! Hamiltonians, the local free energy and its inverse differential, the
//! Bethe free energy, and a numerical criticality certificate.

use crate::calculus::mu_dual_covariant;
use crate::error::{Error, Result};
use crate::linalg;
use crate::presheaf::{FieldBundle, FiniteSetPresheaf, InnerProductWeights};

/// Extended-real energies per element. `+inf` marks a forbidden state; the
/// admissible states must form a subobject.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonians(FieldBundle);

impl Hamiltonians {
    pub fn new(f: &FiniteSetPresheaf, h: FieldBundle) -> Result<Self> {
        h.check_shape(f)?;
        let p = f.poset();
        for (a, v) in h.parts().iter().enumerate() {
            if let Some(i) = v.iter().position(|x| x.is_nan() || *x == f64::NEG_INFINITY) {
                return Err(Error::Validation(format!(
                    "energy at `{}`[{i}] is {}",
                    p.name(a),
                    v[i]
                )));
            }
        }
        let any_inf = h.parts().iter().flatten().any(|x| x.is_infinite());
        if any_inf {
            for &(a, b) in p.pairs() {
                let m = f.map(a, b);
                for x in 0..f.size(a) {
                    if h.get(a)[x].is_finite() && !h.get(b)[m[x]].is_finite() {
                        return Err(Error::SubobjectViolation {
                            a: p.name(a).into(),
                            b: p.name(b).into(),
                            state: x,
                        });
                    }
                }
            }
            for a in 0..p.len() {
                if h.get(a).iter().all(|x| x.is_infinite()) {
                    return Err(Error::AllMassMasked(p.name(a).into()));
                }
            }
        }
        Ok(Self(h))
    }

    pub fn zeros(f: &FiniteSetPresheaf) -> Self {
        Self(FieldBundle::zeros(f))
    }

    pub fn get(&self, a: usize) -> &[f64] {
        self.0.get(a)
    }

    pub fn bundle(&self) -> &FieldBundle {
        &self.0
    }

    pub fn into_bundle(self) -> FieldBundle {
        self.0
    }

    pub fn has_masked(&self) -> bool {
        self.0.parts().iter().flatten().any(|x| x.is_infinite())
    }

    /// Admissible (finite-energy) states per element.
    pub fn support(&self) -> Vec<Vec<bool>> {
        self.0
            .parts()
            .iter()
            .map(|v| v.iter().map(|x| x.is_finite()).collect())
            .collect()
    }
}

/// `H_a(x) = sum_{b <= a} -ln f_b(F^a_b x)`; a zero factor gives `+inf`.
/// For a graphical presheaf this is the sum over sub-regions of `a`.
pub fn hamiltonians_from_factors(f: &FiniteSetPresheaf, factors: &FieldBundle) -> Result<Hamiltonians> {
    factors.check_shape(f)?;
    let p = f.poset();
    for (a, v) in factors.parts().iter().enumerate() {
        if let Some((i, &x)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0) || x.is_infinite()) {
            return Err(Error::NegativeFactor {
                element: p.name(a).into(),
                index: i,
                value: x,
            });
        }
    }
    let neg_log = factors.map(|x| if x == 0.0 { f64::INFINITY } else { -x.ln() });
    let mut h = neg_log.clone();
    for a in 0..p.len() {
        for &b in p.below(a) {
            let t = f.pull(a, b, neg_log.get(b));
            h.get_mut(a).iter_mut().zip(&t).for_each(|(x, y)| *x += y);
        }
    }
    Hamiltonians::new(f, h)
}

/// Local free energy `FE_a(h) = sum h H + sum h ln h`.
pub fn local_free_energy(h: &Hamiltonians, v: &FieldBundle) -> Vec<f64> {
    v.parts()
        .iter()
        .enumerate()
        .map(|(a, va)| {
            va.iter()
                .zip(h.get(a))
                .map(|(&q, &e)| if q == 0.0 { 0.0 } else { q * e + q * q.ln() })
                .sum()
        })
        .collect()
}

/// `H_a(x) + ln v_a(x) + 1` on admissible states; `+inf` on masked ones.
pub fn fe_differential(f: &FiniteSetPresheaf, h: &Hamiltonians, v: &FieldBundle) -> Result<FieldBundle> {
    v.check_shape(f)?;
    let p = f.poset();
    let mut out = Vec::with_capacity(p.len());
    for a in 0..p.len() {
        let mut row = Vec::with_capacity(f.size(a));
        for (x, (&q, &e)) in v.get(a).iter().zip(h.get(a)).enumerate() {
            if e.is_infinite() {
                row.push(f64::INFINITY);
            } else if !(q > 0.0) {
                return Err(Error::NonPositiveBelief {
                    element: p.name(a).into(),
                    index: x,
                    value: q,
                });
            } else {
                row.push(e + q.ln() + 1.0);
            }
        }
        out.push(row);
    }
    Ok(FieldBundle(out))
}

/// Inverse of [`fe_differential`] under the weighted identification of the
/// dual: `exp(-H + w l - 1)`, with `exp(-inf) = 0`.
pub fn g_h(h: &Hamiltonians, weights: &InnerProductWeights, l: &FieldBundle) -> FieldBundle {
    FieldBundle(
        l.parts()
            .iter()
            .enumerate()
            .map(|(a, la)| {
                la.iter()
                    .zip(h.get(a))
                    .zip(weights.get(a))
                    .map(|((&x, &e), &w)| {
                        if e.is_infinite() {
                            0.0
                        } else {
                            (-e + w * x - 1.0).exp()
                        }
                    })
                    .collect()
            })
            .collect(),
    )
}

/// `sum_a c(a) (E_{Q_a}[H_a] - S(Q_a))` with `0 ln 0 = 0` and `0 * inf = 0`.
pub fn bethe_free_energy(f: &FiniteSetPresheaf, h: &Hamiltonians, q: &FieldBundle) -> Result<f64> {
    q.check_shape(f)?;
    let p = f.poset();
    let c = p.overcount();
    let mut total = 0.0;
    for a in 0..p.len() {
        let qa = q.get(a);
        let sum: f64 = qa.iter().sum();
        if (sum - 1.0).abs() > 1e-8 || qa.iter().any(|&x| x < 0.0) {
            return Err(Error::NotNormalized {
                element: p.name(a).into(),
                sum,
            });
        }
        if c[a] == 0 {
            continue;
        }
        let mut local = 0.0;
        for (&x, &e) in qa.iter().zip(h.get(a)) {
            if x > 0.0 {
                if e.is_infinite() {
                    return Ok(f64::INFINITY);
                }
                local += x * e + x * x.ln();
            }
        }
        total += c[a] as f64 * local;
    }
    Ok(total)
}

/// Residuals returned by [`criticality_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criticality {
    /// Worst violation of `Q in lim PF`.
    pub section: f64,
    /// Norm of the Bethe gradient restricted to the tangent space of `lim PF`.
    pub critical: f64,
}

impl Criticality {
    pub fn is_critical(&self, section_tol: f64, critical_tol: f64) -> bool {
        self.section < section_tol && self.critical < critical_tol
    }
}

pub const DEFAULT_SECTION_TOL: f64 = 1e-8;
pub const DEFAULT_CRITICAL_TOL: f64 = 1e-6;

/// Certifies `Q` as a constrained critical point of the Bethe free energy.
///
/// The gradient `mu_{F*}(dFE(Q))` is projected on the tangent space of the
/// probabilistic sections: vectors of `lim F~` with zero mass on every
/// element. Everything is evaluated on the admissible sub-presheaf.
pub fn criticality_residual(f: &FiniteSetPresheaf, h: &Hamiltonians, q: &FieldBundle) -> Result<Criticality> {
    let mut section = f.section_violation(q)?;
    for (a, qa) in q.parts().iter().enumerate() {
        for (&x, &e) in qa.iter().zip(h.get(a)) {
            if e.is_infinite() {
                section = section.max(x.abs());
            }
        }
    }

    let (sub, kept) = f.restrict(&h.support())?;
    let restrict = |bundle: &FieldBundle| {
        FieldBundle(
            kept.iter()
                .enumerate()
                .map(|(a, ks)| ks.iter().map(|&x| bundle.get(a)[x]).collect())
                .collect(),
        )
    };
    let hs = Hamiltonians(restrict(h.bundle()));
    let qs = restrict(q);
    let y = fe_differential(&sub, &hs, &qs)?;
    let grad = mu_dual_covariant(&sub, &y).flatten();

    let mut constraints = sub.section_constraints();
    let offsets = sub.offsets();
    for a in 0..sub.poset().len() {
        let mut row = vec![0.0; constraints.cols];
        row[offsets[a]..offsets[a] + sub.size(a)].iter_mut().for_each(|x| *x = 1.0);
        constraints.push_row(&row);
    }
    let tangent = linalg::nullspace(&constraints, 1e-10);
    let critical = tangent
        .iter()
        .map(|t| linalg::dot(t, &grad).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(Criticality { section, critical })
}

/// Least-squares form of the certificate, solving `mu_{F*} dFE = d_{F*}(l) + constants`
/// through the normal equations. Used as an independent cross-check.
pub fn criticality_lstsq(f: &FiniteSetPresheaf, h: &Hamiltonians, q: &FieldBundle) -> Result<f64> {
    let (sub, kept) = f.restrict(&h.support())?;
    let hs = Hamiltonians(FieldBundle(
        kept.iter()
            .enumerate()
            .map(|(a, ks)| ks.iter().map(|&x| h.get(a)[x]).collect())
            .collect(),
    ));
    let qs = FieldBundle(
        kept.iter()
            .enumerate()
            .map(|(a, ks)| ks.iter().map(|&x| q.get(a)[x]).collect())
            .collect(),
    );
    let y = fe_differential(&sub, &hs, &qs)?;
    let g = mu_dual_covariant(&sub, &y).flatten();

    // Columns: d_{F*} of each unit message, then one constant vector per element.
    let n = sub.total_size();
    let offsets = sub.offsets();
    let w = InnerProductWeights::ones(&sub);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (k, &(_, b)) in sub.poset().pairs().iter().enumerate() {
        for x in 0..sub.size(b) {
            let mut l = crate::calculus::MessageBundle::zeros(&sub);
            l.0[k][x] = 1.0;
            cols.push(crate::calculus::d_dual(&sub, &w, &l).flatten());
        }
    }
    for a in 0..sub.poset().len() {
        let mut c = vec![0.0; n];
        c[offsets[a]..offsets[a] + sub.size(a)].iter_mut().for_each(|x| *x = 1.0);
        cols.push(c);
    }
    // Residual of the projection on span(cols) = norm of g minus its projection
    // on an orthonormal basis of the span.
    let basis = linalg::orthonormalize(cols);
    let mut r = g.clone();
    for q in &basis {
        let c = linalg::dot(&r, q);
        r.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
    }
    Ok(linalg::dot(&r, &r).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poset::Poset;
    use crate::presheaf::GraphicalSpec;
    use std::sync::Arc;

    fn path2() -> FiniteSetPresheaf {
        GraphicalSpec::pairwise(&[2, 2], &[(0, 1)]).unwrap().presheaf().unwrap()
    }

    fn singleton(n: usize) -> FiniteSetPresheaf {
        let p = Arc::new(Poset::new::<&str>(&["a"], &[]).unwrap());
        FiniteSetPresheaf::identity(p, n).unwrap()
    }

    #[test]
    fn factors_to_hamiltonians() {
        let f = path2();
        let factors = FieldBundle(vec![vec![2.0, 1.0], vec![1.0, 1.0], vec![1.0; 4]]);
        let h = hamiltonians_from_factors(&f, &factors).unwrap();
        let ln2 = 2f64.ln();
        assert_eq!(h.get(0), &[-ln2, 0.0]);
        assert_eq!(h.get(2), &[-ln2, 0.0, -ln2, 0.0]);

        let ones = FieldBundle::constant(&f, 1.0);
        assert_eq!(hamiltonians_from_factors(&f, &ones).unwrap(), Hamiltonians::zeros(&f));

        let zero = FieldBundle(vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0; 4]]);
        let h = hamiltonians_from_factors(&f, &zero).unwrap();
        assert_eq!(h.get(0)[0], f64::INFINITY);
        assert!(h.get(2)[0].is_infinite() && h.get(2)[2].is_infinite());
        assert!(h.get(2)[1].is_finite());

        let neg = FieldBundle(vec![vec![-1.0, 1.0], vec![1.0, 1.0], vec![1.0; 4]]);
        assert!(matches!(
            hamiltonians_from_factors(&f, &neg),
            Err(Error::NegativeFactor { .. })
        ));
    }

    #[test]
    fn subobject_condition_checked() {
        let f = path2();
        let h = FieldBundle(vec![vec![f64::INFINITY, 0.0], vec![0.0; 2], vec![0.0; 4]]);
        assert!(matches!(Hamiltonians::new(&f, h), Err(Error::SubobjectViolation { .. })));
    }

    #[test]
    fn fe_differential_examples() {
        let f = singleton(3);
        let h = Hamiltonians::zeros(&f);
        let v = FieldBundle(vec![vec![(-1f64).exp(); 3]]);
        assert!(fe_differential(&f, &h, &v).unwrap().sup_norm() < 1e-15);
        let v = FieldBundle(vec![vec![1.0; 3]]);
        assert_eq!(fe_differential(&f, &h, &v).unwrap(), FieldBundle(vec![vec![1.0; 3]]));
        let v = FieldBundle(vec![vec![1.0, 0.0, 1.0]]);
        assert!(matches!(
            fe_differential(&f, &h, &v),
            Err(Error::NonPositiveBelief { index: 1, .. })
        ));
    }

    #[test]
    fn g_h_examples() {
        let f = path2();
        let w = InnerProductWeights::ones(&f);
        let g = g_h(&Hamiltonians::zeros(&f), &w, &FieldBundle::zeros(&f));
        assert!(g.parts().iter().flatten().all(|&x| (x - 0.36787944117144233).abs() < 1e-15));
        let h = Hamiltonians::new(
            &f,
            FieldBundle(vec![vec![f64::INFINITY, 0.0], vec![0.0; 2], vec![f64::INFINITY, 0.0, f64::INFINITY, 0.0]]),
        )
        .unwrap();
        let g = g_h(&h, &w, &FieldBundle::constant(&f, 50.0));
        assert_eq!(g.get(0)[0], 0.0);
        assert_eq!(g.get(2)[2], 0.0);
    }

    #[test]
    fn bethe_examples() {
        let f = singleton(2);
        let q = FieldBundle(vec![vec![0.5, 0.5]]);
        let e = bethe_free_energy(&f, &Hamiltonians::zeros(&f), &q).unwrap();
        assert!((e + 2f64.ln()).abs() < 1e-15);

        let p2 = path2();
        let qv = [0.3, 0.7];
        let qw = [0.6, 0.4];
        let qe: Vec<f64> = (0..4).map(|k| qv[k % 2] * qw[k / 2]).collect();
        let q = FieldBundle(vec![qv.to_vec(), qw.to_vec(), qe.clone()]);
        let e = bethe_free_energy(&p2, &Hamiltonians::zeros(&p2), &q).unwrap();
        let neg_s: f64 = qe.iter().map(|x| x * x.ln()).sum();
        assert!((e - neg_s).abs() < 1e-15);

        let bad = FieldBundle(vec![vec![0.5, 0.6]]);
        assert!(matches!(
            bethe_free_energy(&f, &Hamiltonians::zeros(&f), &bad),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn singleton_gibbs_is_critical() {
        let f = singleton(4);
        let hv = vec![0.3, -1.2, 2.0, 0.7];
        let z: f64 = hv.iter().map(|e: &f64| (-e).exp()).sum();
        let q = FieldBundle(vec![hv.iter().map(|e| (-e).exp() / z).collect()]);
        let h = Hamiltonians::new(&f, FieldBundle(vec![hv])).unwrap();
        let c = criticality_residual(&f, &h, &q).unwrap();
        assert!(c.critical < 1e-10 && c.section < 1e-12, "{c:?}");
        assert!(criticality_lstsq(&f, &h, &q).unwrap() < 1e-10);
        let q2 = FieldBundle(vec![vec![0.25; 4]]);
        assert!(criticality_residual(&f, &h, &q2).unwrap().critical > 1e-3);
    }
}
