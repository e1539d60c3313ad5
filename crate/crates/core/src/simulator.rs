//! Seeded Monte Carlo simulation of plant, observer and attacked links.
//!
//! Per step `k`:
//!
//! ```text
//! ỹ(k)   = Π1 C x(k) + (I − Π1) Π2 C x(k)
//! u(k)   = Π3 K x̂(k) + (I − Π3) Π4 K x̂(k)
//! x̂(k+1) = A x̂(k) + B u(k) + L [ỹ(k) − Δ̄1 C x̂(k)]
//! x(k+1) = A x(k) + B u(k)
//! ```
//!
//! Every random number is addressed by `(seed, run, step, channel)` in a
//! ChaCha8 stream, so results do not depend on scheduling or thread count.
//! Channels `0..p` are the sensors and `p..p+m` the actuators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{AttackChannel, AttackedSystem, Gains, InjectionDistribution};
use crate::moments;
use crate::settings::NumericSettings;

/// Environment variable capping the number of simulation threads.
pub const THREADS_ENV: &str = "RESILIENT_LMI_THREADS";

/// 32-bit words reserved per (step, channel) slot.
const WORDS_PER_SLOT: u128 = 16;

const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
}

impl SimConfig {
    pub fn check(&self, sys: &AttackedSystem) -> Result<()> {
        let n = sys.plant.states();
        if self.steps == 0 || self.runs == 0 {
            return Err(Error::InvalidSimConfig("steps and runs must be >= 1".into()));
        }
        if self.x0.len() != n || self.xhat0.len() != n {
            return Err(Error::InvalidSimConfig(format!(
                "initial states have lengths {} and {}, plant has {n} states",
                self.x0.len(),
                self.xhat0.len()
            )));
        }
        if self.x0.iter().chain(&self.xhat0).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSimConfig("initial state is not finite".into()));
        }
        Ok(())
    }
}

/// One simulated run. Indices `0..=last` are populated for every field, where
/// `last == steps` unless the run diverged earlier.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub run: usize,
    pub x: Vec<Vec<f64>>,
    pub xhat: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub ytilde: Vec<Vec<f64>>,
    /// Sensor indicators, 1 when the link works normally.
    pub alpha: Vec<Vec<u8>>,
    /// Actuator indicators, 1 when the link works normally.
    pub gamma: Vec<Vec<u8>>,
    pub beta: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
    /// First step whose state norm exceeded the divergence threshold.
    pub diverged_at: Option<usize>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `‖x(k)‖² + ‖x(k) − x̂(k)‖²`.
    pub fn zeta_norm_sq(&self, k: usize) -> f64 {
        self.x[k]
            .iter()
            .zip(&self.xhat[k])
            .map(|(x, xh)| x * x + (x - xh) * (x - xh))
            .sum()
    }

    pub fn zeta(&self, k: usize) -> Vec<f64> {
        let e = self.x[k].iter().zip(&self.xhat[k]).map(|(x, xh)| x - xh);
        self.x[k].iter().copied().chain(e).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsEstimate {
    /// `m(k)` for `k = 0..=steps`, averaged over runs that did not diverge.
    pub mean_square: Vec<f64>,
    /// Least-squares slope of `ln m(k)`; `None` when fewer than two positive
    /// samples exist.
    pub decay_slope: Option<f64>,
    pub empirically_stable: bool,
    pub diverged_runs: usize,
    /// False when every run diverged.
    pub usable: bool,
}

fn draw_uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen::<f64>()
}

/// `(indicator, injected value)` for one link at one step.
fn sample_link(rng: &mut ChaCha8Rng, ch: &AttackChannel) -> (u8, f64) {
    let healthy = u8::from(draw_uniform(rng) < ch.bernoulli_mean);
    let var = ch.injection_variance;
    let injected = match ch.distribution {
        InjectionDistribution::Constant => ch.injection_mean,
        InjectionDistribution::Uniform => {
            ch.injection_mean + (2.0 * draw_uniform(rng) - 1.0) * (3.0 * var).sqrt()
        }
        InjectionDistribution::Gaussian => {
            // Box-Muller; 1 − U keeps the log argument in (0, 1]
            let u1 = 1.0 - draw_uniform(rng);
            let u2 = draw_uniform(rng);
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            ch.injection_mean + var.sqrt() * z
        }
    };
    (healthy, injected)
}

fn gain(healthy: u8, injected: f64) -> f64 {
    if healthy == 1 {
        1.0
    } else {
        injected
    }
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j) * v[j]).sum())
        .collect()
}

struct Stepper<'a> {
    sys: &'a AttackedSystem,
    gains: &'a Gains,
    sensor_mean: Vec<f64>,
    base: ChaCha8Rng,
    threshold: f64,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a AttackedSystem, gains: &'a Gains, seed: u64, threshold: f64) -> Self {
        Self {
            sys,
            gains,
            sensor_mean: sys.sensors.iter().map(|c| moments::channel_moments(c).mean).collect(),
            base: ChaCha8Rng::seed_from_u64(seed),
            threshold,
        }
    }

    fn run(&self, cfg: &SimConfig, run: usize) -> TrajectoryRecord {
        let plant = &self.sys.plant;
        let (p, m) = (plant.outputs(), plant.inputs());
        let channels = (p + m) as u128;
        let mut rng = self.base.clone();
        rng.set_stream(run as u64);

        let cap = cfg.steps + 1;
        let mut rec = TrajectoryRecord {
            run,
            x: Vec::with_capacity(cap),
            xhat: Vec::with_capacity(cap),
            u: Vec::with_capacity(cap),
            ytilde: Vec::with_capacity(cap),
            alpha: Vec::with_capacity(cap),
            gamma: Vec::with_capacity(cap),
            beta: Vec::with_capacity(cap),
            delta: Vec::with_capacity(cap),
            diverged_at: None,
        };
        let mut x = cfg.x0.clone();
        let mut xhat = cfg.xhat0.clone();
        for k in 0..=cfg.steps {
            let norm = x.iter().chain(&xhat).map(|v| v * v).sum::<f64>().sqrt();
            if norm.is_nan() || norm > self.threshold {
                rec.diverged_at = Some(k);
                break;
            }
            let slot = |ch: usize| ((k as u128) * channels + ch as u128) * WORDS_PER_SLOT;

            let cx = mat_vec(&plant.c, &x);
            let mut alpha = Vec::with_capacity(p);
            let mut beta = Vec::with_capacity(p);
            let mut ytilde = Vec::with_capacity(p);
            for (i, ch) in self.sys.sensors.iter().enumerate() {
                rng.set_word_pos(slot(i));
                let (a, b) = sample_link(&mut rng, ch);
                ytilde.push(if a == 1 { cx[i] } else { b * cx[i] });
                alpha.push(a);
                beta.push(b);
            }

            let kx = mat_vec(&self.gains.k, &xhat);
            let mut gamma = Vec::with_capacity(m);
            let mut delta = Vec::with_capacity(m);
            let mut u = Vec::with_capacity(m);
            for (j, ch) in self.sys.actuators.iter().enumerate() {
                rng.set_word_pos(slot(p + j));
                let (g, d) = sample_link(&mut rng, ch);
                u.push(gain(g, d) * kx[j]);
                gamma.push(g);
                delta.push(d);
            }

            rec.x.push(x.clone());
            rec.xhat.push(xhat.clone());
            rec.u.push(u.clone());
            rec.ytilde.push(ytilde.clone());
            rec.alpha.push(alpha);
            rec.gamma.push(gamma);
            rec.beta.push(beta);
            rec.delta.push(delta);
            if k == cfg.steps {
                break;
            }

            let bu = mat_vec(&plant.b, &u);
            let cxh = mat_vec(&plant.c, &xhat);
            let innov: Vec<f64> = (0..p).map(|i| ytilde[i] - self.sensor_mean[i] * cxh[i]).collect();
            let linnov = mat_vec(&self.gains.l, &innov);
            let axh = mat_vec(&plant.a, &xhat);
            let ax = mat_vec(&plant.a, &x);
            xhat = (0..x.len()).map(|i| axh[i] + bu[i] + linnov[i]).collect();
            x = (0..x.len()).map(|i| ax[i] + bu[i]).collect();
        }
        rec
    }
}

fn validate(sys: &AttackedSystem, gains: &Gains, cfg: &SimConfig) -> Result<()> {
    sys.clone().validate(&NumericSettings::default())?;
    gains.check_dims(&sys.plant)?;
    cfg.check(sys)
}

pub fn simulate_run(
    sys: &AttackedSystem,
    gains: &Gains,
    cfg: &SimConfig,
    run_index: usize,
) -> Result<TrajectoryRecord> {
    validate(sys, gains, cfg)?;
    let threshold = NumericSettings::default().divergence_threshold;
    Ok(Stepper::new(sys, gains, cfg.seed, threshold).run(cfg, run_index))
}

/// Thread count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Maps every run through `f` in parallel and folds the per-chunk results in
/// run order.
fn map_runs<T, F, A>(cfg: &SimConfig, threads: Option<usize>, f: F, mut fold: A) -> Result<()>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
    A: FnMut(T),
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads.or_else(thread_cap) {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidSimConfig(format!("thread pool: {e}")))?;
    let chunks: Vec<(usize, usize)> = (0..cfg.runs)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(cfg.runs)))
        .collect();
    for group in chunks.chunks(64) {
        let results: Vec<Vec<T>> = pool.install(|| {
            group
                .par_iter()
                .map(|&(s, e)| (s..e).map(&f).collect())
                .collect()
        });
        results.into_iter().flatten().for_each(&mut fold);
    }
    Ok(())
}

#[derive(Default)]
struct Accumulator {
    sum: Vec<f64>,
    used: usize,
    diverged: usize,
}

impl Accumulator {
    fn add(&mut self, rec: &TrajectoryRecord) {
        if rec.diverged_at.is_some() {
            self.diverged += 1;
            return;
        }
        if self.sum.is_empty() {
            self.sum = vec![0.0; rec.len()];
        }
        for (k, s) in self.sum.iter_mut().enumerate() {
            *s += rec.zeta_norm_sq(k);
        }
        self.used += 1;
    }

    fn finish(self, steps: usize) -> MsEstimate {
        if self.used == 0 {
            return MsEstimate {
                mean_square: vec![f64::NAN; steps + 1],
                decay_slope: None,
                empirically_stable: false,
                diverged_runs: self.diverged,
                usable: false,
            };
        }
        let mean_square: Vec<f64> = self.sum.iter().map(|s| s / self.used as f64).collect();
        let decay_slope = fit_decay(&mean_square);
        let empirically_stable = self.diverged == 0
            && match decay_slope {
                Some(s) => s < 0.0,
                None => *mean_square.last().expect("nonempty") <= FLOOR,
            };
        MsEstimate {
            mean_square,
            decay_slope,
            empirically_stable,
            diverged_runs: self.diverged,
            usable: true,
        }
    }
}

const FLOOR: f64 = 1e-12;

/// Slope of the least-squares line through `(k, ln m(k))` over
/// `[len/4, last k with m(k) > FLOOR]`, widened to start at 0 when that
/// window holds fewer than two points.
pub fn fit_decay(m: &[f64]) -> Option<f64> {
    let last = m.iter().rposition(|&v| v > FLOOR)?;
    let steps = m.len().saturating_sub(1);
    let fit = |start: usize| -> Option<f64> {
        let pts: Vec<(f64, f64)> = (start..=last)
            .filter(|&k| m[k] > FLOOR)
            .map(|k| (k as f64, m[k].ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some(sxy / sxx)
    };
    fit(steps / 4).or_else(|| fit(0))
}

pub fn monte_carlo(sys: &AttackedSystem, gains: &Gains, cfg: &SimConfig) -> Result<MsEstimate> {
    Ok(monte_carlo_inner(sys, gains, cfg, None, false)?.0)
}

/// As [`monte_carlo`], also returning every run's record in run order.
pub fn monte_carlo_with_records(
    sys: &AttackedSystem,
    gains: &Gains,
    cfg: &SimConfig,
) -> Result<(MsEstimate, Vec<TrajectoryRecord>)> {
    monte_carlo_inner(sys, gains, cfg, None, true)
}

/// [`monte_carlo`] on an explicit number of threads.
pub fn monte_carlo_threads(
    sys: &AttackedSystem,
    gains: &Gains,
    cfg: &SimConfig,
    threads: usize,
) -> Result<MsEstimate> {
    Ok(monte_carlo_inner(sys, gains, cfg, Some(threads), false)?.0)
}

fn monte_carlo_inner(
    sys: &AttackedSystem,
    gains: &Gains,
    cfg: &SimConfig,
    threads: Option<usize>,
    keep: bool,
) -> Result<(MsEstimate, Vec<TrajectoryRecord>)> {
    validate(sys, gains, cfg)?;
    let stepper = Stepper::new(sys, gains, cfg.seed, NumericSettings::default().divergence_threshold);
    let mut acc = Accumulator::default();
    let mut kept = Vec::new();
    map_runs(
        cfg,
        threads,
        |r| stepper.run(cfg, r),
        |rec| {
            acc.add(&rec);
            if keep {
                kept.push(rec);
            }
        },
    )?;
    Ok((acc.finish(cfg.steps), kept))
}

/// Empirical `E[ζ(k) ζ(k)ᵀ]` for `k = 0..=steps` over runs that did not diverge.
pub fn empirical_second_moments(
    sys: &AttackedSystem,
    gains: &Gains,
    cfg: &SimConfig,
) -> Result<Vec<Matrix>> {
    validate(sys, gains, cfg)?;
    let stepper = Stepper::new(sys, gains, cfg.seed, NumericSettings::default().divergence_threshold);
    let d = 2 * sys.plant.states();
    let mut sums = vec![vec![0.0; d * d]; cfg.steps + 1];
    let mut used = 0usize;
    map_runs(
        cfg,
        None,
        |r| {
            let rec = stepper.run(cfg, r);
            if rec.diverged_at.is_some() {
                return None;
            }
            Some((0..rec.len()).map(|k| rec.zeta(k)).collect::<Vec<_>>())
        },
        |zetas| {
            if let Some(zs) = zetas {
                used += 1;
                for (s, z) in sums.iter_mut().zip(&zs) {
                    for i in 0..d {
                        for j in 0..d {
                            s[i * d + j] += z[i] * z[j];
                        }
                    }
                }
            }
        },
    )?;
    if used == 0 {
        return Err(Error::InvalidSimConfig("every run diverged".into()));
    }
    sums.into_iter()
        .map(|s| Matrix::new(d, d, s.into_iter().map(|v| v / used as f64).collect()))
        .collect()
}
