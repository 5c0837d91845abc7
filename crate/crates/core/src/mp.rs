//! Message passing in operator form: `l <- l + delta(g_H(zeta(-d(l))))`.
//!
//! Incoming messages enter a belief with a positive sign, matching
//! `l = ln m` for belief propagation: `ln h_a = ln b~_a - 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bp::{log_sum_exp, normalize_log_messages, softmax_rows, Init, TraceEntry};
use crate::calculus::{d_dual, zeta_functor, MessageBundle};
use crate::energy::{bethe_free_energy, Hamiltonians};
use crate::error::{Error, Result};
use crate::linalg::{self, Dense};
use crate::presheaf::{FieldBundle, FiniteSetPresheaf, InnerProductWeights};

/// `ln g_H(zeta(-d(l)))`: `-H_a + w_a zeta(-d l)_a - 1`, `-inf` on masked states.
pub fn mp_log_beliefs(
    f: &FiniteSetPresheaf,
    h: &Hamiltonians,
    weights: &InnerProductWeights,
    l: &MessageBundle,
) -> FieldBundle {
    let dl = d_dual(f, weights, l).map(|x| -x);
    let z = zeta_functor(f, weights, &dl);
    FieldBundle(
        z.parts()
            .iter()
            .enumerate()
            .map(|(a, za)| {
                za.iter()
                    .zip(h.get(a))
                    .zip(weights.get(a))
                    .map(|((&x, &e), &w)| {
                        if e.is_infinite() {
                            f64::NEG_INFINITY
                        } else {
                            -e + w * x - 1.0
                        }
                    })
                    .collect()
            })
            .collect(),
    )
}

/// `delta` applied to `exp(log_h)`, with a max-shift per target entry taken
/// over both terms of the difference.
fn delta_exp(f: &FiniteSetPresheaf, log_h: &FieldBundle) -> MessageBundle {
    MessageBundle(
        f.poset()
            .pairs()
            .iter()
            .map(|&(a, b)| {
                let mut fibers = vec![Vec::new(); f.size(b)];
                for (y, &x) in f.map(a, b).iter().enumerate() {
                    fibers[x].push(log_h.get(a)[y]);
                }
                fibers
                    .into_iter()
                    .enumerate()
                    .map(|(x, fib)| {
                        let own = log_h.get(b)[x];
                        let s = fib.iter().cloned().fold(own, f64::max);
                        if s == f64::NEG_INFINITY {
                            return 0.0;
                        }
                        if !s.is_finite() {
                            return f64::NAN;
                        }
                        let pushed: f64 = fib.iter().map(|v| (v - s).exp()).sum();
                        s.exp() * (pushed - (own - s).exp())
                    })
                    .collect()
            })
            .collect(),
    )
}

/// The increment `delta_F(g_H(zeta(-d(l))))`.
pub fn delta_mp(
    f: &FiniteSetPresheaf,
    h: &Hamiltonians,
    weights: &InnerProductWeights,
    l: &MessageBundle,
) -> MessageBundle {
    delta_exp(f, &mp_log_beliefs(f, h, weights, l))
}

/// `l + damping * delta_mp(l)`.
pub fn mp_step(
    f: &FiniteSetPresheaf,
    h: &Hamiltonians,
    weights: &InnerProductWeights,
    l: &MessageBundle,
    damping: f64,
) -> Result<MessageBundle> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::InvalidOption(format!("damping must lie in (0, 1], got {damping}")));
    }
    let d = delta_mp(f, h, weights, l);
    Ok(l.zip_with(&d, |x, y| x + damping * y))
}

/// Normalized `g_H(zeta(-d(l)))`.
pub fn beliefs_mp(
    f: &FiniteSetPresheaf,
    h: &Hamiltonians,
    weights: &InnerProductWeights,
    l: &MessageBundle,
) -> Result<FieldBundle> {
    softmax_rows(f, &mp_log_beliefs(f, h, weights, l))
}

/// How the damping is turned into a step length at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// `l + damping * delta`.
    Fixed,
    /// `l + damping / max h * delta`, where `max h` is the largest entry of
    /// the unnormalized beliefs. The increment is linear in `h` while `l`
    /// enters `h` exponentially, so this keeps the step scale-free.
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
    pub init: Init,
    pub step: StepRule,
}

impl Default for MpOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-10,
            damping: 0.5,
            init: Init::Ones,
            step: StepRule::Scaled,
        }
    }
}

impl MpOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidOption(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidOption(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidOption("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpRun {
    pub messages: MessageBundle,
    pub beliefs: FieldBundle,
    pub converged: bool,
    /// Number of updates applied.
    pub iterations: usize,
    /// `||delta_mp||_inf` at the returned messages.
    pub residual: f64,
    pub trace: Vec<TraceEntry>,
}

/// Initial MP messages (finite everywhere; masked states are zeroed by `g_H`).
pub fn initial_mp_messages(f: &FiniteSetPresheaf, init: Init) -> MessageBundle {
    match init {
        Init::Ones => MessageBundle::zeros(f),
        Init::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            MessageBundle::zeros(f).map(|_| rng.gen_range(-0.1..=0.1))
        }
    }
}

pub fn mp_run(
    f: &FiniteSetPresheaf,
    h: &Hamiltonians,
    weights: &InnerProductWeights,
    options: &MpOptions,
) -> Result<MpRun> {
    mp_run_from(f, h, weights, initial_mp_messages(f, options.init), options)
}

/// Iterates until `||delta_mp(l)||_inf < tol`. Non-finite increments stop the
/// run and are reported as non-convergence.
pub fn mp_run_from(
    f: &FiniteSetPresheaf,
    h: &Hamiltonians,
    weights: &InnerProductWeights,
    init: MessageBundle,
    options: &MpOptions,
) -> Result<MpRun> {
    options.validate()?;
    let mut l = init;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut residual;
    loop {
        let log_h = mp_log_beliefs(f, h, weights, &l);
        let d = delta_exp(f, &log_h);
        residual = d.sup_norm();
        let energy = softmax_rows(f, &log_h)
            .and_then(|b| bethe_free_energy(f, h, &b))
            .unwrap_or(f64::NAN);
        trace.push(TraceEntry {
            change: residual,
            energy,
        });
        if !residual.is_finite() {
            break;
        }
        if residual < options.tol {
            converged = true;
            break;
        }
        if iterations >= options.max_iters {
            break;
        }
        let alpha = match options.step {
            StepRule::Fixed => options.damping,
            StepRule::Scaled => {
                let m = log_h.parts().iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
                options.damping * (-m).exp()
            }
        };
        l = l.zip_with(&d, |x, y| x + alpha * y);
        iterations += 1;
    }
    let beliefs = beliefs_mp(f, h, weights, &l)?;
    Ok(MpRun {
        messages: l,
        beliefs,
        converged,
        iterations,
        residual,
        trace,
    })
}

/// Log-messages of belief propagation to MP messages.
///
/// Messages are normalized, then shifted by per-pair constants so that the
/// unnormalized MP beliefs of all elements carry the same mass. Without the
/// shift a belief-propagation fixed point only yields beliefs that are
/// consistent up to per-element scalars, which is not an MP fixed point.
/// The common mass is forced when the overcounting numbers of a connected
/// component do not sum to zero; otherwise the shift is a best effort.
/// Masked (`-inf`) entries become 0.
pub fn transfer_bp_to_mp(
    f: &FiniteSetPresheaf,
    h: &Hamiltonians,
    weights: &InnerProductWeights,
    log_m: &MessageBundle,
) -> MessageBundle {
    let p = f.poset();
    let mut l = normalize_log_messages(log_m).map(|x| if x == f64::NEG_INFINITY { 0.0 } else { x });
    if p.pairs().is_empty() {
        return l;
    }
    let log_h = mp_log_beliefs(f, h, weights, &l);
    let log_mass: Vec<f64> = log_h.parts().iter().map(|r| log_sum_exp(r.iter().cloned())).collect();
    if log_mass.iter().any(|m| !m.is_finite()) {
        return l;
    }

    let n = p.len();
    let c = p.overcount();
    let comp = p.components();
    let mut target = vec![0.0; n];
    for &root in comp.iter().collect::<std::collections::BTreeSet<_>>() {
        let members: Vec<usize> = (0..n).filter(|&a| comp[a] == root).collect();
        let csum: i64 = members.iter().map(|&a| c[a]).sum();
        let ln_lambda = if csum != 0 {
            members.iter().map(|&a| c[a] as f64 * log_mass[a]).sum::<f64>() / csum as f64
        } else {
            members.iter().map(|&a| log_mass[a]).sum::<f64>() / members.len() as f64
        };
        for &a in &members {
            target[a] = ln_lambda - log_mass[a];
        }
    }
    // Shifts s = zeta(-d k) on the scalar presheaf; solve -d k = mu(target).
    let mut u = p.mobius_scalar(&target);
    for &root in comp.iter().collect::<std::collections::BTreeSet<_>>() {
        let members: Vec<usize> = (0..n).filter(|&a| comp[a] == root).collect();
        let mean = members.iter().map(|&a| u[a]).sum::<f64>() / members.len() as f64;
        members.iter().for_each(|&a| u[a] -= mean);
    }
    // k = delta(phi) with (L + P) phi = -u, L the comparability Laplacian and P
    // the component indicator; d(delta(phi)) = L phi.
    let mut m = Dense::zeros(n, n);
    for &(a, b) in p.pairs() {
        m.add(a, a, 1.0);
        m.add(b, b, 1.0);
        m.add(a, b, -1.0);
        m.add(b, a, -1.0);
    }
    for a in 0..n {
        for b in 0..n {
            if comp[a] == comp[b] {
                m.add(a, b, 1.0);
            }
        }
    }
    let rhs: Vec<f64> = u.iter().map(|x| -x).collect();
    let Some(phi) = linalg::solve(&m, &rhs) else {
        return l;
    };
    for (k, &(a, b)) in p.pairs().iter().enumerate() {
        let shift = phi[a] - phi[b];
        l.0[k].iter_mut().zip(weights.get(b)).for_each(|(x, w)| *x += shift / w);
    }
    l
}

/// MP messages to belief-propagation log-messages (the identity).
pub fn transfer_mp_to_bp(l: &MessageBundle) -> MessageBundle {
    l.clone()
}
