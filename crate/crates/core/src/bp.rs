//! Generalized belief propagation in the log domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::MessageBundle;
use crate::energy::{bethe_free_energy, Hamiltonians};
use crate::error::{Error, Result};
use crate::presheaf::{FieldBundle, FiniteSetPresheaf};

/// `ln sum exp`, with `-inf` for an empty or fully masked input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log bottom-up messages.
#[derive(Debug, Clone, PartialEq)]
pub struct BottomUp {
    /// `ln n_{b->a}` for every strict pair, stored like a [`MessageBundle`]
    /// (indexed by the pair `a -> b`, living on `F_b`).
    pub pairs: MessageBundle,
    /// The `b = a` factor of the belief: `sum_{c > a} ln m_{c->a}` on `F_a`.
    pub own: FieldBundle,
}

/// `ln n_{b->a}(x_b) = sum_{c : b <= c, c !<= a} ln m_{c->b}(x_b)`.
pub fn bottom_up(f: &FiniteSetPresheaf, log_m: &MessageBundle) -> BottomUp {
    let p = f.poset();
    let pairs = p
        .pairs()
        .iter()
        .map(|&(a, b)| {
            let mut acc = vec![0.0; f.size(b)];
            for &c in p.above(b) {
                if !p.leq(c, a) {
                    let k = p.pair_index(c, b).expect("c above b");
                    acc.iter_mut().zip(log_m.get(k)).for_each(|(x, y)| *x += y);
                }
            }
            acc
        })
        .collect();
    let own = (0..p.len())
        .map(|a| {
            let mut acc = vec![0.0; f.size(a)];
            for &c in p.above(a) {
                let k = p.pair_index(c, a).expect("c above a");
                acc.iter_mut().zip(log_m.get(k)).for_each(|(x, y)| *x += y);
            }
            acc
        })
        .collect();
    BottomUp {
        pairs: MessageBundle(pairs),
        own: FieldBundle(own),
    }
}

/// `ln b~_a = -H_a + own_a + sum_{b < a} ln n_{b->a} o F^a_b`, unnormalized.
pub fn log_beliefs_unnormalized(f: &FiniteSetPresheaf, h: &Hamiltonians, log_m: &MessageBundle) -> FieldBundle {
    let n = bottom_up(f, log_m);
    let mut out = n.own;
    for (a, row) in out.0.iter_mut().enumerate() {
        row.iter_mut().zip(h.get(a)).for_each(|(x, e)| *x -= e);
    }
    for (k, &(a, b)) in f.poset().pairs().iter().enumerate() {
        let t = f.pull(a, b, n.pairs.get(k));
        out.get_mut(a).iter_mut().zip(&t).for_each(|(x, y)| *x += y);
    }
    out
}

/// Normalizes each row of log-weights into a probability vector.
pub(crate) fn softmax_rows(f: &FiniteSetPresheaf, logs: &FieldBundle) -> Result<FieldBundle> {
    let mut out = Vec::with_capacity(logs.len());
    for (a, row) in logs.parts().iter().enumerate() {
        let z = log_sum_exp(row.iter().cloned());
        if !z.is_finite() {
            return Err(Error::AllMassMasked(f.poset().name(a).into()));
        }
        out.push(row.iter().map(|x| (x - z).exp()).collect());
    }
    Ok(FieldBundle(out))
}

/// Normalized beliefs `b_a`.
pub fn beliefs_bp(f: &FiniteSetPresheaf, h: &Hamiltonians, log_m: &MessageBundle) -> Result<FieldBundle> {
    softmax_rows(f, &log_beliefs_unnormalized(f, h, log_m))
}

/// One synchronous update
/// `ln m'_{a->b} = ln m_{a->b} + ln sum_{fiber} b~_a - ln b~_b`.
///
/// A message is `-inf` wherever the pushed belief vanishes; where `b~_b`
/// vanishes but the pushed belief does not, the old value is kept.
pub fn bp_step(f: &FiniteSetPresheaf, h: &Hamiltonians, log_m: &MessageBundle) -> Result<MessageBundle> {
    let lb = log_beliefs_unnormalized(f, h, log_m);
    for (a, row) in lb.parts().iter().enumerate() {
        if row.iter().all(|&x| x == f64::NEG_INFINITY) {
            return Err(Error::AllMassMasked(f.poset().name(a).into()));
        }
    }
    let out = f
        .poset()
        .pairs()
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let map = f.map(a, b);
            let mut fibers = vec![Vec::new(); f.size(b)];
            for (y, &x) in map.iter().enumerate() {
                fibers[x].push(lb.get(a)[y]);
            }
            fibers
                .into_iter()
                .enumerate()
                .map(|(x, fib)| {
                    let num = log_sum_exp(fib);
                    let den = lb.get(b)[x];
                    let old = log_m.get(k)[x];
                    if num == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else if den == f64::NEG_INFINITY {
                        old
                    } else {
                        old + num - den
                    }
                })
                .collect()
        })
        .collect();
    Ok(MessageBundle(out))
}

/// Shifts every message so its log-sum-exp is 0. Fully masked messages are
/// left alone.
pub fn normalize_log_messages(log_m: &MessageBundle) -> MessageBundle {
    MessageBundle(
        log_m
            .parts()
            .iter()
            .map(|v| {
                let z = log_sum_exp(v.iter().cloned());
                if z.is_finite() {
                    v.iter().map(|x| x - z).collect()
                } else {
                    v.clone()
                }
            })
            .collect(),
    )
}

/// Message initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `m = 1`, i.e. all log-messages zero.
    Ones,
    /// Seeded uniform log-messages in `[-0.1, 0.1]`.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
    pub init: Init,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-10,
            damping: 0.5,
            init: Init::Ones,
        }
    }
}

impl BpOptions {
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

/// Initial log-messages with `-inf` on masked states.
pub fn initial_messages(f: &FiniteSetPresheaf, h: &Hamiltonians, init: Init) -> MessageBundle {
    let mut rng = match init {
        Init::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Init::Ones => None,
    };
    MessageBundle(
        f.poset()
            .pairs()
            .iter()
            .map(|&(_, b)| {
                h.get(b)
                    .iter()
                    .map(|e| {
                        let v = rng.as_mut().map_or(0.0, |r| r.gen_range(-0.1..=0.1));
                        if e.is_infinite() {
                            f64::NEG_INFINITY
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpState {
    pub log_messages: MessageBundle,
    pub iteration: usize,
    pub last_delta: f64,
}

/// One row of an iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub change: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpRun {
    pub state: BpState,
    pub beliefs: FieldBundle,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

/// Damped synchronous iteration from the configured initialization.
pub fn bp_run(f: &FiniteSetPresheaf, h: &Hamiltonians, options: &BpOptions) -> Result<BpRun> {
    let init = initial_messages(f, h, options.init);
    bp_run_from(f, h, init, options)
}

/// As [`bp_run`], starting from the given messages.
pub fn bp_run_from(f: &FiniteSetPresheaf, h: &Hamiltonians, init: MessageBundle, options: &BpOptions) -> Result<BpRun> {
    options.validate()?;
    let alpha = options.damping;
    let mut lm = normalize_log_messages(&init);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iteration = 0;
    let mut last_delta = f64::INFINITY;
    while iteration < options.max_iters {
        let step = bp_step(f, h, &lm)?;
        let next = normalize_log_messages(&lm.zip_with(&step, |x, y| {
            if alpha == 1.0 {
                y
            } else {
                (1.0 - alpha) * x + alpha * y
            }
        }));
        last_delta = next.sup_distance(&lm);
        lm = next;
        iteration += 1;
        let energy = beliefs_bp(f, h, &lm)
            .and_then(|b| bethe_free_energy(f, h, &b))
            .unwrap_or(f64::NAN);
        trace.push(TraceEntry {
            change: last_delta,
            energy,
        });
        if last_delta.is_nan() {
            break;
        }
        if last_delta < options.tol {
            converged = true;
            break;
        }
    }
    let beliefs = beliefs_bp(f, h, &lm)?;
    Ok(BpRun {
        state: BpState {
            log_messages: lm,
            iteration,
            last_delta,
        },
        beliefs,
        converged,
        trace,
    })
}
