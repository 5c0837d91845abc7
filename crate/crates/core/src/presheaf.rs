//! Presheaves of finite sets over a poset, graphical presheaves, and their
//! linear extensions (pushforward, pullback, weighted adjoint).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, Dense};
use crate::poset::Poset;

/// Default cap on brute-force enumeration.
pub const DEFAULT_SEARCH_CAP: u128 = 10_000_000;

/// One real vector per poset element, `v_a in R^{F_a}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBundle(pub Vec<Vec<f64>>);

impl FieldBundle {
    pub fn zeros(f: &FiniteSetPresheaf) -> Self {
        Self::constant(f, 0.0)
    }

    pub fn constant(f: &FiniteSetPresheaf, value: f64) -> Self {
        FieldBundle(f.sizes().iter().map(|&n| vec![value; n]).collect())
    }

    pub fn parts(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn get(&self, a: usize) -> &[f64] {
        &self.0[a]
    }

    pub fn get_mut(&mut self, a: usize) -> &mut Vec<f64> {
        &mut self.0[a]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_shape(&self, f: &FiniteSetPresheaf) -> Result<()> {
        if self.0.len() != f.poset().len()
            || self.0.iter().zip(f.sizes()).any(|(v, &n)| v.len() != n)
        {
            return Err(Error::Dimension("field bundle does not match presheaf".into()));
        }
        Ok(())
    }

    pub fn map(&self, mut g: impl FnMut(f64) -> f64) -> Self {
        FieldBundle(
            self.0
                .iter()
                .map(|v| v.iter().map(|&x| g(x)).collect())
                .collect(),
        )
    }

    pub fn zip_with(&self, other: &Self, mut g: impl FnMut(f64, f64) -> f64) -> Self {
        FieldBundle(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(u, v)| u.iter().zip(v).map(|(&x, &y)| g(x, y)).collect())
                .collect(),
        )
    }

    /// Weighted pairing `sum_a sum_x w_a(x) u_a(x) v_a(x)`.
    pub fn dot(&self, other: &Self, weights: &InnerProductWeights) -> f64 {
        let mut s = 0.0;
        for a in 0..self.0.len() {
            for x in 0..self.0[a].len() {
                s += weights.0 .0[a][x] * self.0[a][x] * other.0[a][x];
            }
        }
        s
    }

    pub fn sup_norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn unflatten(f: &FiniteSetPresheaf, flat: &[f64]) -> Self {
        let mut out = Vec::with_capacity(f.poset().len());
        let mut off = 0;
        for &n in f.sizes() {
            out.push(flat[off..off + n].to_vec());
            off += n;
        }
        FieldBundle(out)
    }
}

/// Diagonal inner products, one strictly positive weight vector per element.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductWeights(FieldBundle);

impl InnerProductWeights {
    pub fn new(weights: FieldBundle) -> Result<Self> {
        for (a, v) in weights.0.iter().enumerate() {
            if let Some((i, w)) = v.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
                return Err(Error::Validation(format!(
                    "weight {w} at element #{a}, state {i} is not strictly positive"
                )));
            }
        }
        Ok(Self(weights))
    }

    /// The standard product.
    pub fn ones(f: &FiniteSetPresheaf) -> Self {
        Self(FieldBundle::constant(f, 1.0))
    }

    pub fn get(&self, a: usize) -> &[f64] {
        self.0.get(a)
    }

    pub fn bundle(&self) -> &FieldBundle {
        &self.0
    }

    pub fn is_standard(&self) -> bool {
        self.0 .0.iter().flatten().all(|&w| w == 1.0)
    }
}

/// A presheaf of finite sets: `F_a = {0, .., n_a - 1}` and index maps
/// `F^a_b : F_a -> F_b` for every strict pair `b < a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSetPresheaf {
    poset: Arc<Poset>,
    sizes: Vec<usize>,
    // aligned with poset.pairs()
    maps: Vec<Vec<usize>>,
}

impl FiniteSetPresheaf {
    /// `maps` is aligned with `poset.pairs()`.
    pub fn new(poset: Arc<Poset>, sizes: Vec<usize>, maps: Vec<Vec<usize>>) -> Result<Self> {
        if sizes.len() != poset.len() {
            return Err(Error::Dimension(format!(
                "{} set sizes for {} elements",
                sizes.len(),
                poset.len()
            )));
        }
        if let Some(a) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::Validation(format!(
                "set at `{}` is empty",
                poset.name(a)
            )));
        }
        if maps.len() != poset.pairs().len() {
            return Err(Error::Dimension(format!(
                "{} maps for {} strict pairs",
                maps.len(),
                poset.pairs().len()
            )));
        }
        for (&(a, b), m) in poset.pairs().iter().zip(&maps) {
            if m.len() != sizes[a] {
                return Err(Error::Validation(format!(
                    "map {} -> {} has length {}, expected {}",
                    poset.name(a),
                    poset.name(b),
                    m.len(),
                    sizes[a]
                )));
            }
            if let Some(&y) = m.iter().find(|&&y| y >= sizes[b]) {
                return Err(Error::Validation(format!(
                    "map {} -> {} sends a state to {y}, outside 0..{}",
                    poset.name(a),
                    poset.name(b),
                    sizes[b]
                )));
            }
        }
        let f = Self { poset, sizes, maps };
        f.check_composition()?;
        Ok(f)
    }

    fn check_composition(&self) -> Result<()> {
        let p = &self.poset;
        for &(a, b) in p.pairs() {
            for &c in p.below(b) {
                let ab = self.map(a, b);
                let bc = self.map(b, c);
                let ac = self.map(a, c);
                if let Some(x) = (0..self.sizes[a]).find(|&x| bc[ab[x]] != ac[x]) {
                    return Err(Error::Validation(format!(
                        "maps do not compose on ({}, {}, {}) at state {x}",
                        p.name(a),
                        p.name(b),
                        p.name(c)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every element carries the same set and every map is the identity.
    pub fn identity(poset: Arc<Poset>, size: usize) -> Result<Self> {
        let maps = poset.pairs().iter().map(|_| (0..size).collect()).collect();
        Self::new(poset.clone(), vec![size; poset.len()], maps)
    }

    pub fn poset(&self) -> &Arc<Poset> {
        &self.poset
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, a: usize) -> usize {
        self.sizes[a]
    }

    pub fn total_size(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// `F^a_b` for `b < a`. Panics if the pair is not strict.
    pub fn map(&self, a: usize, b: usize) -> &[usize] {
        let k = self
            .poset
            .pair_index(a, b)
            .unwrap_or_else(|| panic!("no map {a} -> {b}"));
        &self.maps[k]
    }

    pub fn map_by_pair(&self, k: usize) -> &[usize] {
        &self.maps[k]
    }

    pub fn maps(&self) -> &[Vec<usize>] {
        &self.maps
    }

    fn comparable(&self, a: usize, b: usize) -> Result<()> {
        if self.poset.leq(b, a) {
            Ok(())
        } else {
            Err(Error::NotComparable {
                a: self.poset.name(a).into(),
                b: self.poset.name(b).into(),
            })
        }
    }

    /// Fiber sums of `u` along `F^a_b`.
    pub fn pushforward(&self, a: usize, b: usize, u: &[f64]) -> Result<Vec<f64>> {
        self.comparable(a, b)?;
        Ok(self.push(a, b, u))
    }

    pub(crate) fn push(&self, a: usize, b: usize, u: &[f64]) -> Vec<f64> {
        if a == b {
            return u.to_vec();
        }
        let m = self.map(a, b);
        let mut out = vec![0.0; self.sizes[b]];
        for (x, &y) in m.iter().enumerate() {
            out[y] += u[x];
        }
        out
    }

    /// `l o F^a_b`.
    pub fn pullback(&self, a: usize, b: usize, l: &[f64]) -> Result<Vec<f64>> {
        self.comparable(a, b)?;
        Ok(self.pull(a, b, l))
    }

    pub(crate) fn pull(&self, a: usize, b: usize, l: &[f64]) -> Vec<f64> {
        if a == b {
            return l.to_vec();
        }
        self.map(a, b).iter().map(|&y| l[y]).collect()
    }

    /// Adjoint of the pushforward for the weighted products on `F_a` and `F_b`.
    pub fn adjoint(
        &self,
        weights: &InnerProductWeights,
        a: usize,
        b: usize,
        v: &[f64],
    ) -> Result<Vec<f64>> {
        self.comparable(a, b)?;
        Ok(self.adj(weights, a, b, v))
    }

    pub(crate) fn adj(&self, weights: &InnerProductWeights, a: usize, b: usize, v: &[f64]) -> Vec<f64> {
        if a == b {
            return v.to_vec();
        }
        let (wa, wb) = (weights.get(a), weights.get(b));
        self.map(a, b)
            .iter()
            .enumerate()
            .map(|(x, &y)| wb[y] / wa[x] * v[y])
            .collect()
    }

    fn search_space(&self) -> u128 {
        self.sizes
            .iter()
            .fold(1u128, |acc, &n| acc.saturating_mul(n as u128))
    }

    /// All compatible families `(x_a)`, sorted lexicographically by element order.
    pub fn sections(&self, cap: u128) -> Result<Vec<Vec<usize>>> {
        let size = self.search_space();
        if size > cap {
            return Err(Error::SearchSpaceTooLarge { size, cap });
        }
        let order = self.poset.linear_extension().to_vec();
        let mut out = Vec::new();
        let mut cur = vec![usize::MAX; self.poset.len()];
        self.extend_sections(&order, 0, &mut cur, &mut out);
        out.sort();
        Ok(out)
    }

    fn extend_sections(
        &self,
        order: &[usize],
        depth: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if depth == order.len() {
            out.push(cur.clone());
            return;
        }
        let a = order[depth];
        for x in 0..self.sizes[a] {
            // elements below a precede it in the linear extension
            if self.poset.below(a).iter().all(|&b| self.map(a, b)[x] == cur[b]) {
                cur[a] = x;
                self.extend_sections(order, depth + 1, cur, out);
            }
        }
        cur[a] = usize::MAX;
    }

    /// Stacked marginalization constraints `F~^a_b(v_a) - v_b = 0`, one row
    /// per pair and state of `F_b`, over the flattened bundle.
    pub(crate) fn section_constraints(&self) -> Dense {
        let offsets = self.offsets();
        let n = self.total_size();
        let mut m = Dense::zeros(0, n);
        for &(a, b) in self.poset.pairs() {
            let map = self.map(a, b);
            for y in 0..self.sizes[b] {
                let mut row = vec![0.0; n];
                for (x, &fx) in map.iter().enumerate() {
                    if fx == y {
                        row[offsets[a] + x] += 1.0;
                    }
                }
                row[offsets[b] + y] -= 1.0;
                m.push_row(&row);
            }
        }
        m
    }

    pub(crate) fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.sizes.len());
        let mut acc = 0;
        for &n in &self.sizes {
            off.push(acc);
            acc += n;
        }
        off
    }

    /// Orthonormal basis (standard product) of the vector-space limit.
    pub fn linear_sections_basis(&self) -> Vec<FieldBundle> {
        linalg::nullspace(&self.section_constraints(), 1e-10)
            .into_iter()
            .map(|v| FieldBundle::unflatten(self, &v))
            .collect()
    }

    /// Nonnegative, normalized and marginally consistent within `tol`.
    pub fn probabilistic_section_check(&self, q: &FieldBundle, tol: f64) -> bool {
        self.section_violation(q).map(|r| r <= tol).unwrap_or(false)
    }

    /// Largest violation of nonnegativity, normalization or marginalization.
    pub fn section_violation(&self, q: &FieldBundle) -> Result<f64> {
        q.check_shape(self)?;
        let mut worst = 0.0f64;
        for v in &q.0 {
            for &x in v {
                if x.is_nan() {
                    return Ok(f64::INFINITY);
                }
                worst = worst.max(-x);
            }
            worst = worst.max((v.iter().sum::<f64>() - 1.0).abs());
        }
        for &(a, b) in self.poset.pairs() {
            let m = self.push(a, b, q.get(a));
            for (x, y) in m.iter().zip(q.get(b)) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst)
    }

    /// Sub-presheaf keeping the flagged states. Requires the kept states to
    /// form a subobject. Returns the restriction and, per element, the
    /// original index of every kept state.
    pub fn restrict(&self, keep: &[Vec<bool>]) -> Result<(FiniteSetPresheaf, Vec<Vec<usize>>)> {
        let p = &self.poset;
        let kept: Vec<Vec<usize>> = keep
            .iter()
            .map(|k| (0..k.len()).filter(|&x| k[x]).collect())
            .collect();
        let mut new_index = vec![Vec::new(); p.len()];
        for a in 0..p.len() {
            if kept[a].is_empty() {
                return Err(Error::AllMassMasked(p.name(a).into()));
            }
            let mut ix = vec![usize::MAX; self.sizes[a]];
            for (i, &x) in kept[a].iter().enumerate() {
                ix[x] = i;
            }
            new_index[a] = ix;
        }
        let mut maps = Vec::with_capacity(p.pairs().len());
        for &(a, b) in p.pairs() {
            let m = self.map(a, b);
            let mut nm = Vec::with_capacity(kept[a].len());
            for &x in &kept[a] {
                let y = new_index[b][m[x]];
                if y == usize::MAX {
                    return Err(Error::SubobjectViolation {
                        a: p.name(a).into(),
                        b: p.name(b).into(),
                        state: x,
                    });
                }
                nm.push(y);
            }
            maps.push(nm);
        }
        let sizes = kept.iter().map(|k| k.len()).collect();
        Ok((FiniteSetPresheaf::new(p.clone(), sizes, maps)?, kept))
    }
}

/// Variables with finite domains and a family of regions (subsets of variables).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphicalSpec {
    variables: Vec<(String, usize)>,
    // each region sorted by declaration order
    regions: Vec<Vec<usize>>,
}

impl GraphicalSpec {
    pub fn new<S: AsRef<str>>(variables: Vec<(String, usize)>, regions: &[Vec<S>]) -> Result<Self> {
        for (i, (name, size)) in variables.iter().enumerate() {
            if *size == 0 {
                return Err(Error::Validation(format!("variable `{name}` has an empty domain")));
            }
            if variables[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Validation(format!("variable `{name}` declared twice")));
            }
        }
        let mut idx_regions = Vec::with_capacity(regions.len());
        for (r, region) in regions.iter().enumerate() {
            if region.is_empty() {
                return Err(Error::EmptyRegion(r));
            }
            let mut ix = Vec::with_capacity(region.len());
            for v in region {
                let i = variables
                    .iter()
                    .position(|(n, _)| n == v.as_ref())
                    .ok_or_else(|| Error::UnknownVariable(v.as_ref().to_string()))?;
                if !ix.contains(&i) {
                    ix.push(i);
                }
            }
            ix.sort_unstable();
            idx_regions.push(ix);
        }
        Self::from_indices(variables, idx_regions)
    }

    pub fn from_indices(variables: Vec<(String, usize)>, mut regions: Vec<Vec<usize>>) -> Result<Self> {
        for (r, region) in regions.iter_mut().enumerate() {
            if region.is_empty() {
                return Err(Error::EmptyRegion(r));
            }
            if let Some(&v) = region.iter().find(|&&v| v >= variables.len()) {
                return Err(Error::UnknownVariable(format!("#{v}")));
            }
            region.sort_unstable();
            region.dedup();
        }
        let spec = Self { variables, regions };
        for i in 0..spec.regions.len() {
            if spec.regions[..i].contains(&spec.regions[i]) {
                return Err(Error::DuplicateRegion(spec.region_name(i)));
            }
        }
        Ok(spec)
    }

    /// Binary-or-larger pairwise model: one region per vertex and per edge.
    pub fn pairwise(domains: &[usize], edges: &[(usize, usize)]) -> Result<Self> {
        let variables = domains
            .iter()
            .enumerate()
            .map(|(i, &d)| (format!("x{}", i + 1), d))
            .collect();
        let mut regions: Vec<Vec<usize>> = (0..domains.len()).map(|i| vec![i]).collect();
        regions.extend(edges.iter().map(|&(u, v)| vec![u, v]));
        Self::from_indices(variables, regions)
    }

    pub fn variables(&self) -> &[(String, usize)] {
        &self.variables
    }

    pub fn regions(&self) -> &[Vec<usize>] {
        &self.regions
    }

    pub fn domain(&self, var: usize) -> usize {
        self.variables[var].1
    }

    pub fn variable_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Element identifier of a region: variable names joined by commas.
    pub fn region_name(&self, r: usize) -> String {
        self.regions[r]
            .iter()
            .map(|&v| self.variables[v].0.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn region_size(&self, r: usize) -> usize {
        self.regions[r].iter().map(|&v| self.domain(v)).product()
    }

    /// Digits of a region configuration, least-significant first.
    pub fn decode(&self, r: usize, mut code: usize) -> Vec<usize> {
        self.regions[r]
            .iter()
            .map(|&v| {
                let d = self.domain(v);
                let digit = code % d;
                code /= d;
                digit
            })
            .collect()
    }

    pub fn encode(&self, r: usize, digits: &[usize]) -> usize {
        let mut code = 0;
        for (k, &v) in self.regions[r].iter().enumerate().rev() {
            code = code * self.domain(v) + digits[k];
        }
        code
    }

    /// Project a full joint configuration (one digit per variable) to region `r`.
    pub fn project_joint(&self, r: usize, joint: &[usize]) -> usize {
        let mut code = 0;
        for &v in self.regions[r].iter().rev() {
            code = code * self.domain(v) + joint[v];
        }
        code
    }

    pub fn poset(&self) -> Result<Poset> {
        let names = (0..self.regions.len()).map(|r| self.region_name(r)).collect();
        Poset::from_subsets(names, &self.regions)
    }

    /// Product sets with coordinate projections.
    pub fn presheaf(&self) -> Result<FiniteSetPresheaf> {
        let poset = Arc::new(self.poset()?);
        let sizes: Vec<usize> = (0..self.regions.len()).map(|r| self.region_size(r)).collect();
        let mut maps = Vec::with_capacity(poset.pairs().len());
        for &(a, b) in poset.pairs() {
            let positions: Vec<usize> = self.regions[b]
                .iter()
                .map(|v| self.regions[a].iter().position(|w| w == v).unwrap())
                .collect();
            let map = (0..sizes[a])
                .map(|x| {
                    let digits = self.decode(a, x);
                    let sub: Vec<usize> = positions.iter().map(|&p| digits[p]).collect();
                    self.encode(b, &sub)
                })
                .collect();
            maps.push(map);
        }
        FiniteSetPresheaf::new(poset, sizes, maps)
    }
}

/// Convenience wrapper for [`GraphicalSpec::presheaf`].
pub fn graphical_presheaf(spec: &GraphicalSpec) -> Result<FiniteSetPresheaf> {
    spec.presheaf()
}
