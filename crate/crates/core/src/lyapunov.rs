//! Maximum Lyapunov exponent by co-integrating the flow and its linearization.
//!
//! The exponent is estimated with a single tangent vector (Benettin's method):
//! the state and a tangent vector are integrated together, the tangent is
//! renormalized to unit length at fixed intervals, and the running estimate is
//! the accumulated log-growth divided by elapsed time. For the pendulum the
//! time-rescaled field [`RescaledField`] is used, so exponents are per unit of
//! rescaled time.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Partial, Result};
use crate::integrator::{IntegratorConfig, Stepper, VectorField};
use crate::model::{coefficients, FullState, Params, RescaledField};

/// A vector field with an analytic Jacobian.
pub trait Linearized<const N: usize>: VectorField<N> {
    fn jacobian(&self, y: &[f64; N]) -> [[f64; N]; N];
}

/// Jacobian of the time-rescaled field, columns ordered `(phi1, phi2, v1, v2)`.
pub fn jacobian(p: &Params, s: &FullState) -> [[f64; 4]; 4] {
    rescaled_jacobian(p, &s.to_array())
}

fn rescaled_jacobian(p: &Params, y: &[f64; 4]) -> [[f64; 4]; 4] {
    let [phi1, _, v1, v2] = *y;
    let co = coefficients(p, y);
    let (a11, a12, a22, r1, r2) = (co.A11, co.A12, co.A22, co.r1, co.r2);
    let c = p.coupling();
    let (sn, cs) = phi1.sin_cos();
    let lever = p.lever();

    let d = a11 * a22 - a12 * a12;
    // phi1-derivatives of the inertia entries and of the determinant
    let da12 = -c * sn;
    let da22 = -2.0 * c * sn;
    let dd = a11 * da22 - 2.0 * a12 * da12;

    let r1_phi1 = -p.k1 - c * v2 * v2 * cs;
    let r1_v2 = -2.0 * c * v2 * sn;
    let r2_phi1 = -p.force * lever * cs + c * v1 * (v1 + 2.0 * v2) * cs;
    let r2_phi2 = -p.k2;
    let r2_v1 = 2.0 * c * (v1 + v2) * sn;
    let r2_v2 = 2.0 * c * v1 * sn;

    [
        [v1 * dd, 0.0, d, 0.0],
        [v2 * dd, 0.0, 0.0, d],
        [
            da22 * r1 + a22 * r1_phi1 - da12 * r2 - a12 * r2_phi1,
            -a12 * r2_phi2,
            -a12 * r2_v1,
            a22 * r1_v2 - a12 * r2_v2,
        ],
        [
            a11 * r2_phi1 - da12 * r1 - a12 * r1_phi1,
            a11 * r2_phi2,
            a11 * r2_v1,
            a11 * r2_v2 - a12 * r1_v2,
        ],
    ]
}

impl Linearized<4> for RescaledField {
    fn jacobian(&self, y: &[f64; 4]) -> [[f64; 4]; 4] {
        rescaled_jacobian(&self.params, y)
    }
}

/// `x' = M x` for a constant matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearField<const N: usize> {
    pub matrix: [[f64; N]; N],
}

impl<const N: usize> VectorField<N> for LinearField<N> {
    fn rhs(&self, y: &[f64; N]) -> [f64; N] {
        std::array::from_fn(|i| (0..N).map(|j| self.matrix[i][j] * y[j]).sum())
    }
}

impl<const N: usize> Linearized<N> for LinearField<N> {
    fn jacobian(&self, _: &[f64; N]) -> [[f64; N]; N] {
        self.matrix
    }
}

/// State and tangent stacked into one vector of length `M = 2 N`.
struct Variational<'a, S, const N: usize> {
    system: &'a S,
}

impl<S: Linearized<N>, const N: usize, const M: usize> VectorField<M> for Variational<'_, S, N> {
    #[inline]
    fn rhs(&self, y: &[f64; M]) -> [f64; M] {
        let x: [f64; N] = std::array::from_fn(|i| y[i]);
        let f = self.system.rhs(&x);
        let j = self.system.jacobian(&x);
        let mut out = [0.0; M];
        for i in 0..N {
            out[i] = f[i];
            let mut acc = 0.0;
            for (k, jik) in j[i].iter().enumerate() {
                acc += jik * y[N + k];
            }
            out[N + i] = acc;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRecord {
    /// Renormalization times.
    pub times: Vec<f64>,
    /// Running estimate `cumulative / t`.
    pub chi: Vec<f64>,
    /// `ln |x|` just before each renormalization.
    pub log_growth: Vec<f64>,
    /// Accumulated log-growth.
    pub cumulative: Vec<f64>,
    pub seed: u64,
    pub initial_tangent: Vec<f64>,
    pub initial_state: Vec<f64>,
    pub params: Option<Params>,
    /// Range of the time-rescaling density seen at renormalization times.
    pub density_range: Option<(f64, f64)>,
}

impl LyapunovRecord {
    pub fn final_chi(&self) -> Option<f64> {
        self.chi.last().copied()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Smallest estimate over the last decade `[t_end / 10, t_end]`.
    pub fn last_decade_min(&self) -> Option<f64> {
        let start = self.final_time() / 10.0;
        self.times
            .iter()
            .zip(&self.chi)
            .filter(|(t, _)| **t >= start)
            .map(|(_, c)| *c)
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlceSettings {
    pub t_total: f64,
    pub renorm_interval: f64,
    pub seed: u64,
}

impl Default for MlceSettings {
    fn default() -> Self {
        MlceSettings {
            t_total: 1e4,
            renorm_interval: 1.0,
            seed: 0x5eed,
        }
    }
}

/// A unit vector with normally distributed direction, deterministic in `seed`.
pub fn random_unit_vector<const N: usize>(seed: u64) -> [f64; N] {
    let mut rng = SplitMix64::seed_from_u64(seed);
    loop {
        let v: [f64; N] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.map(|x| x / norm);
        }
    }
}

/// Maximum Lyapunov exponent of a general linearizable system. `M` must be `2 N`.
pub fn mlce_with<S: Linearized<N>, const N: usize, const M: usize>(
    system: &S,
    y0: [f64; N],
    tangent0: [f64; N],
    cfg: &IntegratorConfig,
    settings: &MlceSettings,
) -> Result<LyapunovRecord> {
    assert_eq!(M, 2 * N, "stacked dimension must be twice the state dimension");
    cfg.validate()?;
    if !(settings.t_total > 0.0 && settings.renorm_interval > 0.0) {
        return Err(Error::Config("t_total and renorm_interval must be positive".into()));
    }
    let norm0 = tangent0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm0 > 0.0) || y0.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("initial state must be finite and tangent nonzero"));
    }

    let mut record = LyapunovRecord {
        times: Vec::new(),
        chi: Vec::new(),
        log_growth: Vec::new(),
        cumulative: Vec::new(),
        seed: settings.seed,
        initial_tangent: tangent0.to_vec(),
        initial_state: y0.to_vec(),
        params: None,
        density_range: None,
    };

    let var = Variational { system };
    let mut y = [0.0; M];
    y[..N].copy_from_slice(&y0);
    for i in 0..N {
        y[N + i] = tangent0[i] / norm0;
    }
    let mut stepper = Stepper::new(&var, 0.0, y, cfg);
    let mut acc = 0.0;
    let mut k: u64 = 1;
    loop {
        let target = (k as f64 * settings.renorm_interval).min(settings.t_total);
        while stepper.t() < target {
            if stepper.stats.accepted >= cfg.max_steps {
                log::warn!("mlce step budget exhausted at t = {}", stepper.t());
                return Ok(record);
            }
            if let Err(reason) = stepper.step(target) {
                return Err(Error::Integration {
                    t: stepper.t(),
                    reason,
                    partial: Some(Box::new(Partial::Lyapunov(record))),
                });
            }
        }
        let mut y = *stepper.y();
        let norm = y[N..].iter().map(|x| x * x).sum::<f64>().sqrt();
        let growth = norm.ln();
        acc += growth;
        for x in &mut y[N..] {
            *x /= norm;
        }
        stepper.reset_state(y);
        record.times.push(target);
        record.log_growth.push(growth);
        record.cumulative.push(acc);
        record.chi.push(acc / target);
        if target >= settings.t_total {
            break;
        }
        k += 1;
    }
    Ok(record)
}

/// Maximum Lyapunov exponent of the pendulum in rescaled time.
pub fn mlce(p: &Params, s0: &FullState, cfg: &IntegratorConfig, settings: &MlceSettings) -> Result<LyapunovRecord> {
    p.validate()?;
    let field = RescaledField::new(*p);
    let tangent = random_unit_vector::<4>(settings.seed);
    let mut rec = mlce_with::<_, 4, 8>(&field, s0.to_array(), tangent, cfg, settings).map_err(|e| match e {
        Error::Integration { t, reason, partial } => Error::Integration {
            t,
            reason,
            partial: partial.map(|b| match *b {
                Partial::Lyapunov(mut r) => {
                    r.params = Some(*p);
                    Box::new(Partial::Lyapunov(r))
                }
                other => Box::new(other),
            }),
        },
        other => other,
    })?;
    rec.params = Some(*p);
    rec.density_range = Some(density_bounds(&field));
    Ok(rec)
}

/// Range of `D = A11 A22 - A12^2` over all angles.
fn density_bounds(field: &RescaledField) -> (f64, f64) {
    (0..=720)
        .map(|i| field.density(i as f64 * std::f64::consts::PI / 720.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStabilityReport {
    pub seeds: Vec<u64>,
    pub final_chi: Vec<f64>,
    pub max: f64,
    pub min: f64,
    /// `(max - min) / max`.
    pub relative_spread: f64,
    /// Every final estimate is below the regular-motion threshold.
    pub all_regular: bool,
    /// Either all regular, or spread below 10% of the maximum.
    pub consistent: bool,
}

/// Repeats [`mlce`] for several tangent seeds and summarizes the spread.
pub fn chi_vs_seed_stability(
    p: &Params,
    s0: &FullState,
    cfg: &IntegratorConfig,
    settings: &MlceSettings,
    seeds: &[u64],
    regular_threshold: f64,
) -> Result<SeedStabilityReport> {
    if seeds.len() < 3 {
        return Err(Error::Config("seed stability needs at least three seeds".into()));
    }
    let finals = seeds
        .par_iter()
        .map(|&seed| {
            let rec = mlce(p, s0, cfg, &MlceSettings { seed, ..*settings })?;
            rec.final_chi()
                .ok_or_else(|| Error::domain("mlce produced no estimate"))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = finals.iter().cloned().fold(f64::INFINITY, f64::min);
    let relative_spread = if max > 0.0 { (max - min) / max } else { f64::INFINITY };
    let all_regular = finals.iter().all(|c| *c < regular_threshold);
    Ok(SeedStabilityReport {
        seeds: seeds.to_vec(),
        final_chi: finals,
        max,
        min,
        relative_spread,
        all_regular,
        consistent: all_regular || relative_spread < 0.1,
    })
}
