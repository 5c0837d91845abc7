//! Natural transformations between presheaves (coherent binnings) and the
//! transport of Hamiltonians, messages and message-passing dynamics.

use rand::Rng;

use crate::bp::log_sum_exp;
use crate::calculus::MessageBundle;
use crate::energy::Hamiltonians;
use crate::error::{Error, Result};
use crate::mp::{delta_mp, mp_step};
use crate::presheaf::{FieldBundle, FiniteSetPresheaf, GraphicalSpec, InnerProductWeights};
use crate::random::random_messages;

/// `phi_a : F_a -> G_a` for every element, commuting with the maps.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalTransformation {
    source: FiniteSetPresheaf,
    target: FiniteSetPresheaf,
    comps: Vec<Vec<usize>>,
}

/// First failing naturality square, if any.
fn naturality_failure(f: &FiniteSetPresheaf, g: &FiniteSetPresheaf, comps: &[Vec<usize>]) -> Option<(usize, usize, usize)> {
    for &(a, b) in f.poset().pairs() {
        let (fm, gm) = (f.map(a, b), g.map(a, b));
        for x in 0..f.size(a) {
            if gm[comps[a][x]] != comps[b][fm[x]] {
                return Some((a, b, x));
            }
        }
    }
    None
}

fn check_shapes(f: &FiniteSetPresheaf, g: &FiniteSetPresheaf, comps: &[Vec<usize>]) -> Result<()> {
    if f.poset() != g.poset() && **f.poset() != **g.poset() {
        return Err(Error::PosetMismatch);
    }
    if comps.len() != f.poset().len() {
        return Err(Error::Dimension(format!(
            "{} components for {} elements",
            comps.len(),
            f.poset().len()
        )));
    }
    for (a, c) in comps.iter().enumerate() {
        let name = f.poset().name(a);
        if c.len() != f.size(a) {
            return Err(Error::Dimension(format!(
                "component at `{name}` has length {}, expected {}",
                c.len(),
                f.size(a)
            )));
        }
        if let Some(&y) = c.iter().find(|&&y| y >= g.size(a)) {
            return Err(Error::Validation(format!(
                "component at `{name}` maps to state {y}, target has {}",
                g.size(a)
            )));
        }
    }
    Ok(())
}

/// Whether the squares `G^a_b o phi_a = phi_b o F^a_b` all commute.
pub fn validate(f: &FiniteSetPresheaf, g: &FiniteSetPresheaf, comps: &[Vec<usize>]) -> Result<bool> {
    check_shapes(f, g, comps)?;
    Ok(naturality_failure(f, g, comps).is_none())
}

impl NaturalTransformation {
    pub fn new(source: FiniteSetPresheaf, target: FiniteSetPresheaf, comps: Vec<Vec<usize>>) -> Result<Self> {
        check_shapes(&source, &target, &comps)?;
        if let Some((a, b, x)) = naturality_failure(&source, &target, &comps) {
            let p = source.poset();
            return Err(Error::NaturalityFailed {
                a: p.name(a).into(),
                b: p.name(b).into(),
                state: x,
            });
        }
        Ok(Self { source, target, comps })
    }

    pub fn identity(f: &FiniteSetPresheaf) -> Self {
        let comps = f.sizes().iter().map(|&n| (0..n).collect()).collect();
        Self {
            source: f.clone(),
            target: f.clone(),
            comps,
        }
    }

    pub fn source(&self) -> &FiniteSetPresheaf {
        &self.source
    }

    pub fn target(&self) -> &FiniteSetPresheaf {
        &self.target
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.comps
    }

    pub fn component(&self, a: usize) -> &[usize] {
        &self.comps[a]
    }

    pub fn validate(&self) -> bool {
        naturality_failure(&self.source, &self.target, &self.comps).is_none()
    }

    /// Elements whose component misses some target state.
    pub fn non_surjective(&self) -> Vec<usize> {
        (0..self.comps.len())
            .filter(|&a| {
                let mut hit = vec![false; self.target.size(a)];
                self.comps[a].iter().for_each(|&y| hit[y] = true);
                hit.contains(&false)
            })
            .collect()
    }

    pub fn is_surjective(&self) -> bool {
        self.non_surjective().is_empty()
    }

    fn require_surjective(&self) -> Result<()> {
        match self.non_surjective().first() {
            Some(&a) => Err(Error::NotSurjective(self.source.poset().name(a).into())),
            None => Ok(()),
        }
    }

    /// Fiber sums.
    pub fn push_vector(&self, a: usize, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.target.size(a)];
        for (x, &y) in self.comps[a].iter().enumerate() {
            out[y] += u[x];
        }
        out
    }

    /// Adjoint of [`Self::push_vector`]: `(w_G(phi x) / w_F(x)) v(phi x)`.
    pub fn phi_adjoint(&self, wf: &InnerProductWeights, wg: &InnerProductWeights, a: usize, v: &[f64]) -> Vec<f64> {
        let (wfa, wga) = (wf.get(a), wg.get(a));
        self.comps[a]
            .iter()
            .enumerate()
            .map(|(x, &y)| wga[y] / wfa[x] * v[y])
            .collect()
    }

    pub fn push_bundle(&self, u: &FieldBundle) -> FieldBundle {
        FieldBundle((0..self.comps.len()).map(|a| self.push_vector(a, u.get(a))).collect())
    }

    pub fn lift_bundle(&self, wf: &InnerProductWeights, wg: &InnerProductWeights, v: &FieldBundle) -> FieldBundle {
        FieldBundle((0..self.comps.len()).map(|a| self.phi_adjoint(wf, wg, a, v.get(a))).collect())
    }

    /// Fiber sizes: `w_a(x) = |phi_a^{-1}(phi_a(x))|`.
    pub fn phi_weights(&self) -> InnerProductWeights {
        let w = (0..self.comps.len())
            .map(|a| {
                let mut count = vec![0usize; self.target.size(a)];
                self.comps[a].iter().for_each(|&y| count[y] += 1);
                self.comps[a].iter().map(|&y| count[y] as f64).collect()
            })
            .collect();
        InnerProductWeights::new(FieldBundle(w)).expect("fiber sizes are positive")
    }

    /// `psi(H)_a(y) = -ln sum_{phi_a(x) = y} exp(-H_a(x))`, `+inf` off the image.
    pub fn push_hamiltonian(&self, h: &Hamiltonians) -> Result<Hamiltonians> {
        let out = (0..self.comps.len())
            .map(|a| {
                let mut fibers = vec![Vec::new(); self.target.size(a)];
                for (x, &y) in self.comps[a].iter().enumerate() {
                    fibers[y].push(-h.get(a)[x]);
                }
                fibers.into_iter().map(|fib| -log_sum_exp(fib)).collect()
            })
            .collect();
        Hamiltonians::new(&self.target, FieldBundle(out))
    }

    /// Pair-wise [`Self::push_vector`] on messages.
    pub fn push_messages(&self, l: &MessageBundle) -> MessageBundle {
        MessageBundle(
            self.source
                .poset()
                .pairs()
                .iter()
                .enumerate()
                .map(|(k, &(_, b))| self.push_vector(b, l.get(k)))
                .collect(),
        )
    }

    /// Pair-wise [`Self::phi_adjoint`] on messages.
    pub fn lift_messages(&self, wf: &InnerProductWeights, wg: &InnerProductWeights, l: &MessageBundle) -> MessageBundle {
        MessageBundle(
            self.source
                .poset()
                .pairs()
                .iter()
                .enumerate()
                .map(|(k, &(_, b))| self.phi_adjoint(wf, wg, b, l.get(k)))
                .collect(),
        )
    }

    /// `phi_1 o Delta_{F,H} o phi_1^dagger` evaluated at `l` on `G`.
    pub fn transported_delta(
        &self,
        h: &Hamiltonians,
        wf: &InnerProductWeights,
        wg: &InnerProductWeights,
        l: &MessageBundle,
    ) -> MessageBundle {
        self.push_messages(&delta_mp(&self.source, h, wf, &self.lift_messages(wf, wg, l)))
    }

    /// Max over random message bundles of
    /// `||Delta_{G,psi(H)}(l) - phi_1 Delta_{F,H} phi_1^dagger (l)||_inf`.
    pub fn check_theorem1<R: Rng>(
        &self,
        h: &Hamiltonians,
        wf: &InnerProductWeights,
        wg: &InnerProductWeights,
        trials: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let hg = self.push_hamiltonian(h)?;
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let l = random_messages(rng, &self.target, -1.0, 1.0);
            let direct = delta_mp(&self.target, &hg, wg, &l);
            let via = self.transported_delta(h, wf, wg, &l);
            worst = worst.max(direct.sup_distance(&via));
        }
        Ok(worst)
    }

    /// With `phi_weights` on `F` and standard weights on `G`, over random
    /// vectors: the largest deviation of `phi o phi^dagger` from the identity
    /// on `im phi`, and of `<phi^dagger f, phi^dagger g>` from `<f, g>`.
    pub fn isometry_residuals<R: Rng>(&self, trials: usize, rng: &mut R) -> (f64, f64) {
        let wf = self.phi_weights();
        let wg = InnerProductWeights::ones(&self.target);
        let image: Vec<Vec<bool>> = (0..self.comps.len())
            .map(|a| {
                let mut hit = vec![false; self.target.size(a)];
                self.comps[a].iter().for_each(|&y| hit[y] = true);
                hit
            })
            .collect();
        let on_image = |rng: &mut R| {
            FieldBundle(
                image
                    .iter()
                    .map(|row| row.iter().map(|&h| if h { rng.gen_range(-1.0..=1.0) } else { 0.0 }).collect())
                    .collect(),
            )
        };
        let (mut r_id, mut r_ip) = (0.0f64, 0.0f64);
        for _ in 0..trials {
            let u = on_image(rng);
            let v = on_image(rng);
            let back = self.push_bundle(&self.lift_bundle(&wf, &wg, &u));
            r_id = r_id.max(back.zip_with(&u, |x, y| x - y).sup_norm());
            let lhs = self.lift_bundle(&wf, &wg, &u).dot(&self.lift_bundle(&wf, &wg, &v), &wf);
            let rhs = u.dot(&v, &wg);
            r_ip = r_ip.max((lhs - rhs).abs());
        }
        (r_id, r_ip)
    }

    /// Flags for [`Self::isometry_residuals`] at tolerance `tol`.
    pub fn check_isometry<R: Rng>(&self, tol: f64, rng: &mut R) -> (bool, bool) {
        let (a, b) = self.isometry_residuals(20, rng);
        (a < tol, b < tol)
    }

    /// Max over random `l` of `||MP_{G,psi(H)}(l) - phi_1 MP_{F,H} phi_1^dagger(l)||_inf`,
    /// with fiber-size weights on `F` and standard weights on `G`.
    pub fn check_theorem3<R: Rng>(&self, h: &Hamiltonians, trials: usize, rng: &mut R) -> Result<f64> {
        self.require_surjective()?;
        let hg = self.push_hamiltonian(h)?;
        let wf = self.phi_weights();
        let wg = InnerProductWeights::ones(&self.target);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let l = random_messages(rng, &self.target, -1.0, 1.0);
            let direct = mp_step(&self.target, &hg, &wg, &l, 1.0)?;
            let lifted = self.lift_messages(&wf, &wg, &l);
            let via = self.push_messages(&mp_step(&self.source, h, &wf, &lifted, 1.0)?);
            worst = worst.max(direct.sup_distance(&via));
        }
        Ok(worst)
    }

    /// Pushes an MP fixed point of `F` (computed with fiber-size weights) to
    /// `G`. The pushed messages are fixed on `G` when `l` is constant on the
    /// fibers of `phi`; `fiber_defect` measures how far it is from that.
    pub fn transport_fixed_point(&self, h: &Hamiltonians, l: &MessageBundle) -> Result<FixedPointTransport> {
        self.require_surjective()?;
        let hg = self.push_hamiltonian(h)?;
        let wf = self.phi_weights();
        let wg = InnerProductWeights::ones(&self.target);
        let pushed = self.push_messages(l);
        let back = self.lift_messages(&wf, &wg, &pushed);
        Ok(FixedPointTransport {
            source_residual: delta_mp(&self.source, h, &wf, l).sup_norm(),
            target_residual: delta_mp(&self.target, &hg, &wg, &pushed).sup_norm(),
            fiber_defect: back.sup_distance(l),
            messages: pushed,
        })
    }

    /// `psi o self`.
    pub fn compose(&self, psi: &NaturalTransformation) -> Result<NaturalTransformation> {
        if self.target.sizes() != psi.source.sizes() || self.target.maps() != psi.source.maps() {
            return Err(Error::Mismatch("target of the first is not the source of the second".into()));
        }
        if **self.source.poset() != **psi.source.poset() {
            return Err(Error::Mismatch("different posets".into()));
        }
        let comps = self
            .comps
            .iter()
            .zip(&psi.comps)
            .map(|(p, q)| p.iter().map(|&y| q[y]).collect())
            .collect();
        NaturalTransformation::new(self.source.clone(), psi.target.clone(), comps)
    }

    /// `im phi` as a presheaf, and its embedding into the target.
    pub fn image_subpresheaf(&self) -> Result<(FiniteSetPresheaf, NaturalTransformation)> {
        let keep: Vec<Vec<bool>> = (0..self.comps.len())
            .map(|a| {
                let mut hit = vec![false; self.target.size(a)];
                self.comps[a].iter().for_each(|&y| hit[y] = true);
                hit
            })
            .collect();
        let (sub, kept) = self.target.restrict(&keep)?;
        let emb = NaturalTransformation::new(sub.clone(), self.target.clone(), kept)?;
        Ok((sub, emb))
    }
}

/// Result of [`NaturalTransformation::transport_fixed_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTransport {
    pub messages: MessageBundle,
    pub source_residual: f64,
    pub target_residual: f64,
    pub fiber_defect: f64,
}

/// Bins the states of one variable of a graphical model: `bins[s]` is the
/// new state of old state `s`. Returns the coarse model and the binning.
pub fn bin_variable(spec: &GraphicalSpec, var: usize, bins: &[usize]) -> Result<(GraphicalSpec, NaturalTransformation)> {
    if bins.len() != spec.domain(var) {
        return Err(Error::Dimension(format!(
            "{} bins for a domain of size {}",
            bins.len(),
            spec.domain(var)
        )));
    }
    let k = bins.iter().max().map_or(0, |m| m + 1);
    let mut variables = spec.variables().to_vec();
    variables[var].1 = k;
    let coarse = GraphicalSpec::from_indices(variables, spec.regions().to_vec())?;
    let f = spec.presheaf()?;
    let g = coarse.presheaf()?;
    let comps = (0..spec.regions().len())
        .map(|r| {
            let pos = spec.regions()[r].iter().position(|&v| v == var);
            (0..spec.region_size(r))
                .map(|x| {
                    let mut d = spec.decode(r, x);
                    if let Some(p) = pos {
                        d[p] = bins[d[p]];
                    }
                    coarse.encode(r, &d)
                })
                .collect()
        })
        .collect();
    Ok((coarse, NaturalTransformation::new(f, g, comps)?))
}
