//! Seeded generators for randomized checks.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::calculus::MessageBundle;
use crate::energy::Hamiltonians;
use crate::error::Result;
use crate::poset::Poset;
use crate::presheaf::{FieldBundle, FiniteSetPresheaf, GraphicalSpec, InnerProductWeights};
use crate::transform::NaturalTransformation;

/// Random poset on `n` elements: a random DAG on a shuffled order, closed
/// transitively. Each forward edge is kept with probability `density`.
pub fn random_poset<R: Rng>(rng: &mut R, n: usize, density: f64) -> Poset {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut rel = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                rel.push((order[i], order[j]));
            }
        }
    }
    let names = (0..n).map(|i| format!("p{i}")).collect();
    Poset::from_indices(names, &rel).expect("forward edges are acyclic")
}

/// Random tree on `n` vertices (each vertex after the first attaches to an
/// earlier one), returned as a pairwise model.
pub fn random_tree_spec<R: Rng>(rng: &mut R, n: usize, domain: usize) -> GraphicalSpec {
    let edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    GraphicalSpec::pairwise(&vec![domain; n], &edges).expect("valid tree")
}

/// Random connected graph with `extra` edges beyond a spanning tree.
pub fn random_cyclic_spec<R: Rng>(rng: &mut R, n: usize, extra: usize, domain: usize) -> GraphicalSpec {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    let mut missing: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|e| !edges.contains(e))
        .collect();
    missing.shuffle(rng);
    edges.extend(missing.into_iter().take(extra));
    GraphicalSpec::pairwise(&vec![domain; n], &edges).expect("valid graph")
}

/// Factors `exp(U(-strength, strength))` on every region.
pub fn random_factors<R: Rng>(rng: &mut R, spec: &GraphicalSpec, strength: f64) -> FieldBundle {
    FieldBundle(
        (0..spec.regions().len())
            .map(|r| {
                (0..spec.region_size(r))
                    .map(|_| rng.gen_range(-strength..=strength).exp())
                    .collect()
            })
            .collect(),
    )
}

pub fn random_bundle<R: Rng>(rng: &mut R, f: &FiniteSetPresheaf, lo: f64, hi: f64) -> FieldBundle {
    FieldBundle::zeros(f).map(|_| rng.gen_range(lo..=hi))
}

pub fn random_messages<R: Rng>(rng: &mut R, f: &FiniteSetPresheaf, lo: f64, hi: f64) -> MessageBundle {
    MessageBundle::zeros(f).map(|_| rng.gen_range(lo..=hi))
}

pub fn random_hamiltonians<R: Rng>(rng: &mut R, f: &FiniteSetPresheaf, scale: f64) -> Hamiltonians {
    Hamiltonians::new(f, random_bundle(rng, f, -scale, scale)).expect("finite energies")
}

pub fn random_weights<R: Rng>(rng: &mut R, f: &FiniteSetPresheaf) -> InnerProductWeights {
    InnerProductWeights::new(random_bundle(rng, f, 0.5, 2.0)).expect("positive weights")
}

/// Compatible families over the strict down-set of `a`, given the maps
/// already built for smaller elements.
fn down_set_sections(
    poset: &Poset,
    sizes: &[usize],
    maps: &std::collections::HashMap<(usize, usize), Vec<usize>>,
    a: usize,
) -> Vec<Vec<(usize, usize)>> {
    let order: Vec<usize> = poset
        .linear_extension()
        .iter()
        .cloned()
        .filter(|&b| b != a && poset.leq(b, a))
        .rev()
        .collect();
    let mut out = Vec::new();
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    fn rec(
        k: usize,
        order: &[usize],
        sizes: &[usize],
        maps: &std::collections::HashMap<(usize, usize), Vec<usize>>,
        chosen: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if out.len() >= 4096 {
            return;
        }
        if k == order.len() {
            out.push(chosen.clone());
            return;
        }
        let b = order[k];
        // `order` is top-down, so everything above b in the down-set is fixed.
        for x in 0..sizes[b] {
            let ok = chosen
                .iter()
                .all(|&(c, y)| maps.get(&(c, b)).map_or(true, |m| m[y] == x));
            if ok {
                chosen.push((b, x));
                rec(k + 1, order, sizes, maps, chosen, out);
                chosen.pop();
            }
        }
    }
    rec(0, &order, sizes, maps, &mut chosen, &mut out);
    out
}

/// Random presheaf of finite sets with `1..=max_size` states per element.
/// States of `a` are sent to random compatible families over its down-set.
pub fn random_presheaf<R: Rng>(rng: &mut R, poset: Arc<Poset>, max_size: usize) -> FiniteSetPresheaf {
    let n = poset.len();
    'retry: loop {
        let mut sizes = vec![0usize; n];
        let mut maps = std::collections::HashMap::new();
        for &a in poset.linear_extension() {
            sizes[a] = rng.gen_range(1..=max_size);
            let families = down_set_sections(&poset, &sizes, &maps, a);
            if families.is_empty() {
                continue 'retry;
            }
            let picks: Vec<&Vec<(usize, usize)>> =
                (0..sizes[a]).map(|_| families.choose(rng).expect("non-empty")).collect();
            for &b in poset.below(a) {
                let m: Vec<usize> = picks
                    .iter()
                    .map(|fam| fam.iter().find(|(c, _)| *c == b).expect("family covers down-set").1)
                    .collect();
                maps.insert((a, b), m);
            }
        }
        let ordered = poset.pairs().iter().map(|k| maps.remove(k).expect("map built")).collect();
        return FiniteSetPresheaf::new(poset.clone(), sizes, ordered).expect("compatible by construction");
    }
}

/// Random surjective quotient `phi: F -> G`. The class of `x` in `F_a` is
/// determined by the classes of its images plus a random split, which makes
/// the induced maps of `G` well defined.
pub fn random_quotient<R: Rng>(rng: &mut R, f: &FiniteSetPresheaf, splits: usize) -> NaturalTransformation {
    let p = f.poset().clone();
    let n = p.len();
    let mut comps: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut keys: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n];
    for &a in p.linear_extension() {
        let mut classes: Vec<Vec<usize>> = Vec::new();
        let mut comp = Vec::with_capacity(f.size(a));
        for x in 0..f.size(a) {
            let mut key: Vec<usize> = p.below(a).iter().map(|&b| comps[b][f.map(a, b)[x]]).collect();
            key.push(rng.gen_range(0..splits.max(1)));
            let idx = match classes.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    classes.push(key);
                    classes.len() - 1
                }
            };
            comp.push(idx);
        }
        comps[a] = comp;
        keys[a] = classes;
    }
    let sizes: Vec<usize> = keys.iter().map(|k| k.len()).collect();
    let maps = p
        .pairs()
        .iter()
        .map(|&(a, b)| {
            let pos = p.below(a).iter().position(|&c| c == b).expect("b below a");
            keys[a].iter().map(|k| k[pos]).collect()
        })
        .collect();
    let g = FiniteSetPresheaf::new(p, sizes, maps).expect("induced maps compose");
    NaturalTransformation::new(f.clone(), g, comps).expect("natural by construction")
}

/// Adds `extra` states to random elements of the target, each copying the
/// images of an existing state, so the transformation is no longer surjective.
pub fn widen_target<R: Rng>(rng: &mut R, phi: &NaturalTransformation, extra: usize) -> Result<NaturalTransformation> {
    let g = phi.target();
    let p = g.poset().clone();
    let mut sizes = g.sizes().to_vec();
    let mut maps: Vec<Vec<usize>> = g.maps().to_vec();
    for _ in 0..extra {
        let a = rng.gen_range(0..p.len());
        let copy = rng.gen_range(0..sizes[a]);
        sizes[a] += 1;
        for &b in p.below(a) {
            let k = p.pair_index(a, b).expect("pair");
            let img = maps[k][copy];
            maps[k].push(img);
        }
    }
    let g2 = FiniteSetPresheaf::new(p, sizes, maps)?;
    NaturalTransformation::new(phi.source().clone(), g2, phi.components().to_vec())
}
