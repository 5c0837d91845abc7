//! Finite posets with their zeta operator and Möbius inversion.
//!
//! The full order relation is stored (not the Hasse diagram). Element order
//! is the declaration order and fixes every matrix layout downstream,
//! including the canonical ordering of message pairs `a -> b` with `b < a`.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Integer Möbius coefficients `mu(a, b)` for `b <= a`, and the overcounting
/// numbers `c(a) = sum_{b >= a} mu(b, a)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MobiusTable {
    n: usize,
    mu: Vec<i64>,
    overcount: Vec<i64>,
}

impl MobiusTable {
    /// `mu(a, b)`; zero when `b` is not below `a`.
    pub fn mu(&self, a: usize, b: usize) -> i64 {
        self.mu[a * self.n + b]
    }

    pub fn overcount(&self) -> &[i64] {
        &self.overcount
    }

    pub fn c(&self, a: usize) -> i64 {
        self.overcount[a]
    }
}

#[derive(Debug, Clone)]
pub struct Poset {
    names: Vec<String>,
    index: HashMap<String, usize>,
    // leq[b * n + a] <=> b <= a
    leq: Vec<bool>,
    linear_extension: Vec<usize>,
    below: Vec<Vec<usize>>,
    above: Vec<Vec<usize>>,
    pairs: Vec<(usize, usize)>,
    pair_index: Vec<Option<usize>>,
    mobius: MobiusTable,
}

impl PartialEq for Poset {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.leq == other.leq
    }
}

impl Poset {
    /// Builds the reflexive-transitive closure of `relation` (pairs `(b, a)`
    /// meaning `b <= a`) and rejects it if antisymmetry fails.
    pub fn new<S: AsRef<str>>(elements: &[S], relation: &[(S, S)]) -> Result<Self> {
        let mut index = HashMap::new();
        let mut names = Vec::with_capacity(elements.len());
        for (i, e) in elements.iter().enumerate() {
            let e = e.as_ref().to_string();
            if index.insert(e.clone(), i).is_some() {
                return Err(Error::DuplicateElement(e));
            }
            names.push(e);
        }
        let lookup = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| Error::UnknownElement(s.to_string()))
        };
        let mut idx_pairs = Vec::with_capacity(relation.len());
        for (b, a) in relation {
            idx_pairs.push((lookup(b.as_ref())?, lookup(a.as_ref())?));
        }
        Self::from_indices(names, &idx_pairs)
    }

    pub fn from_indices(names: Vec<String>, relation: &[(usize, usize)]) -> Result<Self> {
        let n = names.len();
        let mut leq = vec![false; n * n];
        for i in 0..n {
            leq[i * n + i] = true;
        }
        for &(b, a) in relation {
            if b >= n || a >= n {
                return Err(Error::UnknownElement(format!("#{}", b.max(a))));
            }
            leq[b * n + a] = true;
        }
        // Warshall
        for k in 0..n {
            for i in 0..n {
                if leq[i * n + k] {
                    for j in 0..n {
                        if leq[k * n + j] {
                            leq[i * n + j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if leq[i * n + j] && leq[j * n + i] {
                    return Err(Error::Cycle(names[i].clone(), names[j].clone()));
                }
            }
        }
        let index = names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();

        let mut below = vec![Vec::new(); n];
        let mut above = vec![Vec::new(); n];
        for a in 0..n {
            for b in 0..n {
                if a != b && leq[b * n + a] {
                    below[a].push(b);
                    above[b].push(a);
                }
            }
        }

        // Linear extension: sort by down-set size (strictly increasing along <).
        let mut linear_extension: Vec<usize> = (0..n).collect();
        linear_extension.sort_by_key(|&a| (below[a].len(), a));

        let mut pairs = Vec::new();
        let mut pair_index = vec![None; n * n];
        for a in 0..n {
            for &b in &below[a] {
                pair_index[a * n + b] = Some(pairs.len());
                pairs.push((a, b));
            }
        }

        let mobius = compute_mobius(n, &leq, &below, &linear_extension);

        Ok(Self {
            names,
            index,
            leq,
            linear_extension,
            below,
            above,
            pairs,
            pair_index,
            mobius,
        })
    }

    /// The poset of a collection of subsets ordered by inclusion.
    pub fn from_subsets(names: Vec<String>, subsets: &[Vec<usize>]) -> Result<Self> {
        let mut rel = Vec::new();
        for (i, si) in subsets.iter().enumerate() {
            for (j, sj) in subsets.iter().enumerate() {
                if i != j && si.iter().all(|x| sj.contains(x)) {
                    rel.push((i, j));
                }
            }
        }
        Self::from_indices(names, &rel)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, a: usize) -> &str {
        &self.names[a]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownElement(name.to_string()))
    }

    /// `b <= a`.
    pub fn leq(&self, b: usize, a: usize) -> bool {
        self.leq[b * self.len() + a]
    }

    /// Elements strictly below `a`.
    pub fn below(&self, a: usize) -> &[usize] {
        &self.below[a]
    }

    /// Elements strictly above `a`.
    pub fn above(&self, a: usize) -> &[usize] {
        &self.above[a]
    }

    /// Elements ordered so that `b < a` implies `b` comes first.
    pub fn linear_extension(&self) -> &[usize] {
        &self.linear_extension
    }

    /// All strict pairs `(a, b)` with `b < a`, a-major then b-minor.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pair_index(&self, a: usize, b: usize) -> Option<usize> {
        self.pair_index[a * self.len() + b]
    }

    /// All `(b, a)` with `b <= a` in the closure, including the diagonal.
    pub fn relation(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for b in 0..n {
            for a in 0..n {
                if self.leq(b, a) {
                    out.push((b, a));
                }
            }
        }
        out
    }

    pub fn mobius(&self) -> &MobiusTable {
        &self.mobius
    }

    pub fn overcount(&self) -> &[i64] {
        self.mobius.overcount()
    }

    /// `zeta(lambda)(a) = sum_{b <= a} lambda(b)`.
    pub fn zeta_scalar(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|a| lambda[a] + self.below[a].iter().map(|&b| lambda[b]).sum::<f64>())
            .collect()
    }

    pub fn zeta_int(&self, lambda: &[i64]) -> Vec<i64> {
        (0..self.len())
            .map(|a| lambda[a] + self.below[a].iter().map(|&b| lambda[b]).sum::<i64>())
            .collect()
    }

    /// `mu(lambda)(a) = sum_{b <= a} mu(a, b) lambda(b)`, the inverse of `zeta_scalar`.
    pub fn mobius_scalar(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|a| {
                lambda[a]
                    + self.below[a]
                        .iter()
                        .map(|&b| self.mobius.mu(a, b) as f64 * lambda[b])
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn mobius_int(&self, lambda: &[i64]) -> Vec<i64> {
        (0..self.len())
            .map(|a| {
                lambda[a]
                    + self.below[a]
                        .iter()
                        .map(|&b| self.mobius.mu(a, b) * lambda[b])
                        .sum::<i64>()
            })
            .collect()
    }

    /// Connected components of the comparability graph.
    pub fn components(&self) -> Vec<usize> {
        let n = self.len();
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(c: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while c[r] != r {
                r = c[r];
            }
            let mut y = x;
            while c[y] != r {
                let nx = c[y];
                c[y] = r;
                y = nx;
            }
            r
        }
        for &(a, b) in &self.pairs {
            let (ra, rb) = (find(&mut comp, a), find(&mut comp, b));
            if ra != rb {
                comp[ra.max(rb)] = ra.min(rb);
            }
        }
        let roots: Vec<usize> = (0..n).map(|x| find(&mut comp, x)).collect();
        let mut label = HashMap::new();
        roots
            .iter()
            .map(|r| {
                let next = label.len();
                *label.entry(*r).or_insert(next)
            })
            .collect()
    }
}

fn compute_mobius(
    n: usize,
    leq: &[bool],
    below: &[Vec<usize>],
    linear_extension: &[usize],
) -> MobiusTable {
    let mut mu = vec![0i64; n * n];
    let mut position = vec![0usize; n];
    for (p, &a) in linear_extension.iter().enumerate() {
        position[a] = p;
    }
    for a in 0..n {
        mu[a * n + a] = 1;
        // Back-substitution down the interval: mu(a, b) = -sum_{b < c <= a} mu(a, c).
        let mut down: Vec<usize> = below[a].clone();
        down.sort_by_key(|&b| std::cmp::Reverse(position[b]));
        for &b in &down {
            let mut s = 0i64;
            for c in 0..n {
                if c != b && leq[b * n + c] && leq[c * n + a] {
                    s += mu[a * n + c];
                }
            }
            mu[a * n + b] = -s;
        }
    }
    let overcount = (0..n)
        .map(|a| (0..n).filter(|&b| leq[a * n + b]).map(|b| mu[b * n + a]).sum())
        .collect();
    MobiusTable { n, mu, overcount }
}
