//! Brute-force ground truth by enumeration.

use crate::energy::Hamiltonians;
use crate::error::{Error, Result};
use crate::presheaf::{FieldBundle, FiniteSetPresheaf, GraphicalSpec, DEFAULT_SEARCH_CAP};

fn joint_size(spec: &GraphicalSpec) -> Result<usize> {
    let size: u128 = spec.variables().iter().map(|(_, d)| *d as u128).product();
    if size > DEFAULT_SEARCH_CAP {
        return Err(Error::SearchSpaceTooLarge {
            size,
            cap: DEFAULT_SEARCH_CAP,
        });
    }
    Ok(size as usize)
}

/// Digits of a joint configuration, first-declared variable least significant.
pub fn decode_joint(spec: &GraphicalSpec, mut code: usize) -> Vec<usize> {
    spec.variables()
        .iter()
        .map(|(_, d)| {
            let digit = code % d;
            code /= d;
            digit
        })
        .collect()
}

fn normalize(mut w: Vec<f64>) -> Result<Vec<f64>> {
    let z: f64 = w.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::ZeroPartition);
    }
    w.iter_mut().for_each(|x| *x /= z);
    Ok(w)
}

/// `P(x) ∝ prod_a f_a(x_a)` over the full joint space.
pub fn exact_joint(spec: &GraphicalSpec, factors: &FieldBundle) -> Result<Vec<f64>> {
    let n = joint_size(spec)?;
    let regions = spec.regions().len();
    if factors.len() != regions || (0..regions).any(|r| factors.get(r).len() != spec.region_size(r)) {
        return Err(Error::Dimension("factors do not match the regions".into()));
    }
    let mut w = Vec::with_capacity(n);
    for code in 0..n {
        let x = decode_joint(spec, code);
        w.push((0..regions).map(|r| factors.get(r)[spec.project_joint(r, &x)]).product());
    }
    normalize(w)
}

/// `P(x) ∝ exp(-sum_a c(a) H_a(x_a))`; a state is forbidden as soon as one
/// of its projections has infinite energy.
pub fn exact_joint_hamiltonians(spec: &GraphicalSpec, f: &FiniteSetPresheaf, h: &Hamiltonians) -> Result<Vec<f64>> {
    let n = joint_size(spec)?;
    let c = f.poset().overcount();
    let mut energies = Vec::with_capacity(n);
    for code in 0..n {
        let x = decode_joint(spec, code);
        let mut e = 0.0;
        let mut forbidden = false;
        for (r, &cr) in c.iter().enumerate() {
            let v = h.get(r)[spec.project_joint(r, &x)];
            if v.is_infinite() {
                forbidden = true;
                break;
            }
            e += cr as f64 * v;
        }
        energies.push(if forbidden { f64::INFINITY } else { e });
    }
    let m = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    if !m.is_finite() {
        return Err(Error::ZeroPartition);
    }
    normalize(energies.iter().map(|e| (m - e).exp()).collect())
}

/// Per-region marginals of a joint.
pub fn exact_marginals(spec: &GraphicalSpec, joint: &[f64]) -> FieldBundle {
    let mut out: Vec<Vec<f64>> = (0..spec.regions().len()).map(|r| vec![0.0; spec.region_size(r)]).collect();
    for (code, &p) in joint.iter().enumerate() {
        let x = decode_joint(spec, code);
        for (r, row) in out.iter_mut().enumerate() {
            row[spec.project_joint(r, &x)] += p;
        }
    }
    FieldBundle(out)
}

/// Marginals of `P(s) ∝ exp(-sum_a c(a) H_a(s_a))` over the sections of an
/// arbitrary presheaf, together with `ln Z`.
pub fn section_marginals(f: &FiniteSetPresheaf, h: &Hamiltonians, cap: u128) -> Result<(FieldBundle, f64)> {
    let sections = f.sections(cap)?;
    let c = f.poset().overcount();
    let energies: Vec<f64> = sections
        .iter()
        .map(|s| {
            let mut e = 0.0;
            for (a, &x) in s.iter().enumerate() {
                let v = h.get(a)[x];
                if v.is_infinite() {
                    return f64::INFINITY;
                }
                e += c[a] as f64 * v;
            }
            e
        })
        .collect();
    let m = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    if !m.is_finite() {
        return Err(Error::ZeroPartition);
    }
    let w: Vec<f64> = energies.iter().map(|e| (m - e).exp()).collect();
    let z: f64 = w.iter().sum();
    let mut out = FieldBundle::zeros(f);
    for (s, wi) in sections.iter().zip(&w) {
        for (a, &x) in s.iter().enumerate() {
            out.get_mut(a)[x] += wi / z;
        }
    }
    Ok((out, z.ln() - m))
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Undirected simple graph on the variables of a pairwise model.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Edges are the two-variable regions. Larger regions are rejected.
    pub fn from_spec(spec: &GraphicalSpec) -> Result<Self> {
        let mut edges = Vec::new();
        for (r, reg) in spec.regions().iter().enumerate() {
            match reg.len() {
                1 => {}
                2 => edges.push((reg[0], reg[1])),
                _ => {
                    return Err(Error::Validation(format!(
                        "region `{}` has more than two variables",
                        spec.region_name(r)
                    )))
                }
            }
        }
        Ok(Self {
            vertices: spec.variables().len(),
            edges,
        })
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    pub fn is_forest(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.vertices).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return false;
            }
            parent[ra] = rb;
        }
        true
    }
}

struct TreeMarginals {
    graph: Graph,
    vertex: Vec<Vec<f64>>,
    edge: Vec<Vec<f64>>,
}

fn tree_marginals(spec: &GraphicalSpec, joint: &[f64]) -> Result<TreeMarginals> {
    let graph = Graph::from_spec(spec)?;
    if !graph.is_forest() {
        return Err(Error::NotTree);
    }
    let nv = graph.vertices;
    let mut vertex: Vec<Vec<f64>> = (0..nv).map(|v| vec![0.0; spec.domain(v)]).collect();
    let mut edge: Vec<Vec<f64>> = graph
        .edges
        .iter()
        .map(|&(a, b)| vec![0.0; spec.domain(a) * spec.domain(b)])
        .collect();
    for (code, &p) in joint.iter().enumerate() {
        let x = decode_joint(spec, code);
        for v in 0..nv {
            vertex[v][x[v]] += p;
        }
        for (k, &(a, b)) in graph.edges.iter().enumerate() {
            edge[k][x[a] + spec.domain(a) * x[b]] += p;
        }
    }
    Ok(TreeMarginals { graph, vertex, edge })
}

/// `max_x |P(x) - prod_e P_e(x_e) / prod_v P_v(x_v)^(d(v)-1)|`.
pub fn tree_factorization_check(spec: &GraphicalSpec, joint: &[f64]) -> Result<f64> {
    let tm = tree_marginals(spec, joint)?;
    let mut worst = 0.0f64;
    for (code, &p) in joint.iter().enumerate() {
        let x = decode_joint(spec, code);
        let mut q = 1.0;
        for (k, &(a, b)) in tm.graph.edges.iter().enumerate() {
            q *= tm.edge[k][x[a] + spec.domain(a) * x[b]];
        }
        for v in 0..tm.graph.vertices {
            q /= tm.vertex[v][x[v]].powi(tm.graph.degree(v) as i32 - 1);
        }
        worst = worst.max((p - q).abs());
    }
    Ok(worst)
}

/// `|S(P) - (sum_e S(P_e) - sum_v (d(v)-1) S(P_v))|`.
pub fn entropy_decomposition_check(spec: &GraphicalSpec, joint: &[f64]) -> Result<f64> {
    let tm = tree_marginals(spec, joint)?;
    Ok(entropy_decomposition_residual(&tm.graph, entropy(joint), &tm.vertex, &tm.edge))
}

/// The decomposition residual for supplied marginals (vertex marginals
/// indexed by variable, edge marginals in `graph.edges` order).
pub fn entropy_decomposition_residual(graph: &Graph, joint_entropy: f64, vertex: &[Vec<f64>], edge: &[Vec<f64>]) -> f64 {
    let se: f64 = edge.iter().map(|p| entropy(p)).sum();
    let sv: f64 = (0..graph.vertices)
        .map(|v| (graph.degree(v) as f64 - 1.0) * entropy(&vertex[v]))
        .sum();
    (joint_entropy - (se - sv)).abs()
}

/// `F(Q) = E_Q[-ln P(x, y)] - S(Q)` for a joint stored as `joint[x * ny + y]`.
pub fn variational_free_energy(joint: &[f64], ny: usize, y_obs: usize, q: &[f64]) -> f64 {
    q.iter()
        .enumerate()
        .filter(|(_, &qx)| qx > 0.0)
        .map(|(x, &qx)| {
            let p = joint[x * ny + y_obs];
            if p > 0.0 {
                qx * (qx.ln() - p.ln())
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// `|F(P_{X|Y=y}) + ln P_Y(y)|`, the free energy evaluated at the posterior.
pub fn variational_identity_check(joint: &[f64], nx: usize, ny: usize, y_obs: usize) -> Result<f64> {
    if joint.len() != nx * ny || y_obs >= ny {
        return Err(Error::Dimension(format!(
            "joint of length {} with {nx} x {ny} blocks, observation {y_obs}",
            joint.len()
        )));
    }
    let py: f64 = (0..nx).map(|x| joint[x * ny + y_obs]).sum();
    if !(py > 0.0) {
        return Err(Error::ZeroEvidence);
    }
    let post: Vec<f64> = (0..nx).map(|x| joint[x * ny + y_obs] / py).collect();
    Ok((variational_free_energy(joint, ny, y_obs, &post) + py.ln()).abs())
}

/// Masks (`+inf`) every region state that disagrees with an observed value.
pub fn conditioning_to_hamiltonian(
    spec: &GraphicalSpec,
    f: &FiniteSetPresheaf,
    h: &Hamiltonians,
    observed: &[(usize, usize)],
) -> Result<Hamiltonians> {
    let mut out = h.bundle().clone();
    for &(var, state) in observed {
        if var >= spec.variables().len() {
            return Err(Error::UnknownVariable(format!("#{var}")));
        }
        if state >= spec.domain(var) {
            return Err(Error::Validation(format!(
                "observed state {state} of `{}` is outside its domain of size {}",
                spec.variables()[var].0,
                spec.domain(var)
            )));
        }
        for (r, reg) in spec.regions().iter().enumerate() {
            if let Some(pos) = reg.iter().position(|&v| v == var) {
                for x in 0..spec.region_size(r) {
                    if spec.decode(r, x)[pos] != state {
                        out.get_mut(r)[x] = f64::INFINITY;
                    }
                }
            }
        }
    }
    for (r, row) in out.parts().iter().enumerate() {
        if row.iter().all(|x| x.is_infinite()) {
            return Err(Error::InconsistentEvidence(spec.region_name(r)));
        }
    }
    Hamiltonians::new(f, out)
}
