//! Identification of transfer functions from logged input/output data,
//! model adequacy scoring, and residual-based fault detection.
//!
//! Fits use the discrete regressions that the block realization in
//! [`crate::dynamics`] satisfies exactly:
//!
//! ```text
//! first order:  y[k] = a·y[k−1] + b·u[k−1−d]
//! second order: y[k] = a1·y[k−1] + a2·y[k−2] + b·u[k−2−d]
//! ```
//!
//! An ordinary least-squares estimate is refined by instrumental-variable
//! iterations (instruments: the model's own noise-free simulation), which
//! removes the bias that output noise causes in the autoregressive terms,
//! then polished by a Levenberg–Marquardt fit of the simulation residual
//! with a free output offset.

mod anomaly;
mod dataset;

use nalgebra::{DMatrix, DVector};

pub use anomaly::{detect_anomaly, detect_anomaly_with_prefix, Anomaly, DEFAULT_HEALTHY_FRACTION};
pub use dataset::IdentDataset;

use crate::dynamics::{DynamicsError, Signal, TransferFunction};

/// Minimum dataset length accepted by the fits.
pub const MIN_SAMPLES: usize = 10;
/// Second-order fits with `T2 < DEGENERATE_RATIO·T1²` are flagged.
pub const DEGENERATE_RATIO: f64 = 0.05;
const IV_ITERATIONS: usize = 12;
const OE_ITERATIONS: usize = 60;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SysidError {
    #[error("dataset has {len} samples, at least {MIN_SAMPLES} required")]
    TooShort { len: usize },
    #[error("input and output do not share a time base")]
    Timebase,
    #[error("input has no excitation; parameters are unidentifiable")]
    Unidentifiable,
    #[error("candidate delay {delay} s gives an unstable or unmappable model: {detail}")]
    Instability { delay: f64, detail: String },
    #[error("delay grid is empty or has negative or non-finite entries")]
    BadGrid,
    #[error("fit percent undefined for a constant output")]
    ConstantOutput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("window must be at least 2, got {0}")]
    Window(usize),
    #[error("healthy prefix of {prefix} samples is shorter than the window {window}")]
    Prefix { prefix: usize, window: usize },
    #[error("dataset: {0}")]
    Data(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub tf: TransferFunction,
    pub fit_percent: f64,
    /// y − ŷ, one value per dataset sample.
    pub residuals: Signal,
    /// Model output ŷ.
    pub simulated: Signal,
    /// Second-order fit whose poles are so far apart that a first-order
    /// model explains the data.
    pub degenerate: bool,
}

impl FitResult {
    /// Plant-config fragment: `[<name>]` with gain, t1, t2, dead_time.
    pub fn to_toml_fragment(&self, name: &str) -> String {
        #[derive(serde::Serialize)]
        struct Wrap<'a> {
            #[serde(flatten)]
            inner: std::collections::BTreeMap<&'a str, &'a TransferFunction>,
        }
        let mut map = std::collections::BTreeMap::new();
        map.insert(name, &self.tf);
        toml::to_string(&Wrap { inner: map }).expect("tf serializes")
    }
}

/// Default delay candidates: 0 to 5 s in steps of `dt`.
pub fn default_delay_grid(dt: f64) -> Vec<f64> {
    let n = (5.0 / dt + 1e-9).floor() as usize;
    (0..=n).map(|i| i as f64 * dt).collect()
}

/// `100·(1 − ‖y − ŷ‖ / ‖y − mean(y)‖)`.
pub fn fit_percent(y: &[f64], y_hat: &[f64]) -> Result<f64, SysidError> {
    if y.len() != y_hat.len() {
        return Err(SysidError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(SysidError::ConstantOutput);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let num = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den = y.iter().map(|a| (a - mean).powi(2)).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(SysidError::ConstantOutput);
    }
    Ok(100.0 * (1.0 - num / den))
}

/// Deviation data: input and output relative to their initial steady
/// level (the mean over the samples before the input first changes).
struct Deviation {
    u: Vec<f64>,
    y: Vec<f64>,
    u0: f64,
    y0: f64,
}

fn deviation(ds: &IdentDataset) -> Result<Deviation, SysidError> {
    let (u, y) = (ds.u.values(), ds.y.values());
    if u.len() < MIN_SAMPLES {
        return Err(SysidError::TooShort { len: u.len() });
    }
    let u0 = u[0];
    let first_change = u.iter().position(|v| *v != u0).ok_or(SysidError::Unidentifiable)?;
    let y0 = y[..first_change.max(1)].iter().sum::<f64>() / first_change.max(1) as f64;
    Ok(Deviation {
        u: u.iter().map(|v| v - u0).collect(),
        y: y.iter().map(|v| v - y0).collect(),
        u0,
        y0,
    })
}

fn check_grid(grid: &[f64]) -> Result<(), SysidError> {
    if grid.is_empty() || grid.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(SysidError::BadGrid);
    }
    Ok(())
}

/// ARX model `y[k] = Σ a_i·y[k−i] + b·u[k−n−d]` with `n = a.len()`, plus
/// a constant output offset.
#[derive(Debug, Clone)]
struct Arx {
    a: Vec<f64>,
    b: f64,
    d: usize,
    offset: f64,
}

impl Arx {
    fn order(&self) -> usize {
        self.a.len()
    }

    /// Noise-free output from rest; `None` if it diverges.
    fn simulate(&self, u: &[f64]) -> Option<Vec<f64>> {
        let n = self.order();
        let mut x = vec![0.0; u.len()];
        for k in 0..u.len() {
            let mut v = 0.0;
            for (i, ai) in self.a.iter().enumerate() {
                if k > i {
                    v += ai * x[k - 1 - i];
                }
            }
            if k >= n + self.d {
                v += self.b * u[k - n - self.d];
            }
            if !v.is_finite() || v.abs() > 1e12 {
                return None;
            }
            x[k] = v;
        }
        Some(x)
    }

    /// Poles strictly inside the unit circle.
    fn is_stable(&self) -> bool {
        match self.a[..] {
            [a] => a.abs() < 1.0,
            [a1, a2] => a2.abs() < 1.0 && a1.abs() < 1.0 - a2,
            _ => false,
        }
    }

    fn sse(&self, u: &[f64], y: &[f64]) -> Option<(Vec<f64>, f64)> {
        let x = self.simulate(u)?;
        let sse = x.iter().zip(y).map(|(p, q)| (p + self.offset - q).powi(2)).sum();
        Some((x, sse))
    }

    /// Output sensitivities to (a_1..a_n, b, offset) along a simulation `x`.
    fn sensitivities(&self, u: &[f64], x: &[f64]) -> DMatrix<f64> {
        let n = self.order();
        let p = n + 2;
        let mut s = DMatrix::zeros(x.len(), p);
        for k in 0..x.len() {
            for j in 0..=n {
                let mut v = if j < n {
                    if k > j {
                        x[k - 1 - j]
                    } else {
                        0.0
                    }
                } else if k >= n + self.d {
                    u[k - n - self.d]
                } else {
                    0.0
                };
                for (i, ai) in self.a.iter().enumerate() {
                    if k > i {
                        v += ai * s[(k - 1 - i, j)];
                    }
                }
                s[(k, j)] = v;
            }
            s[(k, n + 1)] = 1.0;
        }
        s
    }

    fn perturbed(&self, delta: &DVector<f64>) -> Arx {
        let n = self.order();
        Arx {
            a: self.a.iter().zip(delta.iter()).map(|(a, d)| a + d).collect(),
            b: self.b + delta[n],
            d: self.d,
            offset: self.offset + delta[n + 1],
        }
    }
}

/// Levenberg–Marquardt on the simulation residual (output-error fit).
fn refine_output_error(mut model: Arx, u: &[f64], y: &[f64]) -> Arx {
    let Some((mut x, mut sse)) = model.sse(u, y) else { return model };
    let mut mu = 1e-3;
    for _ in 0..OE_ITERATIONS {
        let s = model.sensitivities(u, &x);
        let r = DVector::from_iterator(y.len(), y.iter().zip(&x).map(|(q, p)| q - p - model.offset));
        let jtj = s.transpose() * &s;
        let g = s.transpose() * r;
        let mut accepted = false;
        for _ in 0..12 {
            let mut lhs = jtj.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += mu * jtj[(i, i)].max(f64::MIN_POSITIVE);
            }
            let Some(delta) = lhs.lu().solve(&g) else {
                mu *= 10.0;
                continue;
            };
            let cand = model.perturbed(&delta);
            if cand.is_stable() {
                if let Some((cx, csse)) = cand.sse(u, y) {
                    if csse < sse {
                        let gain = (sse - csse) / sse.max(f64::MIN_POSITIVE);
                        model = cand;
                        x = cx;
                        sse = csse;
                        mu = (mu * 0.3).max(1e-12);
                        accepted = gain > 1e-12;
                        break;
                    }
                }
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    model
}

fn solve_ls(phi: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    phi.clone().svd(true, true).solve(y, 1e-14).ok()
}

fn regressors<'a>(src: &'a [f64], u: &'a [f64], n: usize, d: usize, k: usize) -> impl Iterator<Item = f64> + 'a {
    (1..=n).map(move |i| src[k - i]).chain(std::iter::once(u[k - n - d]))
}

/// LS estimate refined by instrumental-variable iterations.
fn estimate(u: &[f64], y: &[f64], n: usize, d: usize) -> Option<Arx> {
    let k0 = n + d;
    if y.len() <= k0 + n + 1 {
        return None;
    }
    let rows = y.len() - k0;
    let phi = DMatrix::from_row_iterator(rows, n + 1, (k0..y.len()).flat_map(|k| regressors(y, u, n, d, k)));
    let target = DVector::from_iterator(rows, y[k0..].iter().copied());
    let to_arx = |theta: &DVector<f64>| Arx {
        a: theta.iter().take(n).copied().collect(),
        b: theta[n],
        d,
        offset: 0.0,
    };
    let mut model = to_arx(&solve_ls(&phi, &target)?);
    for _ in 0..IV_ITERATIONS {
        let Some(x) = model.simulate(u) else { break };
        let z = DMatrix::from_row_iterator(rows, n + 1, (k0..y.len()).flat_map(|k| regressors(&x, u, n, d, k)));
        let Some(theta) = (z.transpose() * &phi).lu().solve(&(z.transpose() * &target)) else {
            break;
        };
        if theta.iter().any(|v| !v.is_finite()) {
            break;
        }
        let next = to_arx(&theta);
        let change = next.a.iter().zip(&model.a).map(|(p, q)| (p - q).abs()).fold((next.b - model.b).abs(), f64::max);
        model = next;
        if change < 1e-13 {
            break;
        }
    }
    if !model.is_stable() {
        return Some(model);
    }
    Some(refine_output_error(model, u, y))
}

struct Candidate {
    tf: TransferFunction,
    y_hat: Vec<f64>,
    sse: f64,
    degenerate: bool,
}

fn evaluate(model: &Arx, dev: &Deviation, dt: f64, delay: f64) -> Result<Candidate, SysidError> {
    let unstable = |detail: String| SysidError::Instability { delay, detail };
    let x = model.simulate(&dev.u).ok_or_else(|| unstable("simulation diverges".into()))?;
    let (tf, degenerate) = match model.order() {
        1 => {
            let a = model.a[0];
            if !(a > 0.0 && a < 1.0) {
                return Err(unstable(format!("pole {a} outside (0, 1)")));
            }
            let gain = model.b / (1.0 - a);
            let tf = TransferFunction::first_order(gain, -dt / a.ln(), model.d as f64 * dt).map_err(|e| unstable(e.to_string()))?;
            (tf, false)
        }
        _ => second_order_tf(model, dt).map_err(unstable)?,
    };
    let y_hat: Vec<f64> = x.iter().map(|v| v + model.offset + dev.y0).collect();
    let sse = x.iter().zip(&dev.y).map(|(p, q)| (p + model.offset - q).powi(2)).sum();
    Ok(Candidate {
        tf,
        y_hat,
        sse,
        degenerate,
    })
}

/// Maps an ARX(2) model back to continuous time.
fn second_order_tf(model: &Arx, dt: f64) -> Result<(TransferFunction, bool), String> {
    let (a1, a2) = (model.a[0], model.a[1]);
    let dc = 1.0 - a1 - a2;
    if dc <= 0.0 {
        return Err(format!("no finite DC gain (1 − a1 − a2 = {dc})"));
    }
    let gain = model.b / dc;
    let dead_time = model.d as f64 * dt;
    let disc = a1 * a1 + 4.0 * a2;
    if disc >= 0.0 {
        let root = disc.sqrt();
        let (z1, z2) = ((a1 + root) / 2.0, (a1 - root) / 2.0);
        if z1 >= 1.0 {
            return Err(format!("pole {z1} on or outside the unit circle"));
        }
        if z1 <= 0.0 {
            return Err(format!("dominant pole {z1} is not positive"));
        }
        // a pole at the origin is one extra sample of delay
        if z2 < 1e-9 {
            if z2.abs() > 0.5 * z1 {
                return Err(format!("negative pole {z2} has no continuous equivalent"));
            }
            let tf = TransferFunction::first_order(gain, -dt / z1.ln(), dead_time + dt).map_err(|e| e.to_string())?;
            return Ok((tf, true));
        }
        let (ta, tb) = (-dt / z1.ln(), -dt / z2.ln());
        let (t1, t2) = (ta + tb, ta * tb);
        let tf = TransferFunction::second_order(gain, t1, t2, dead_time).map_err(|e| e.to_string())?;
        Ok((tf, t2 < DEGENERATE_RATIO * t1 * t1))
    } else {
        let r = (-a2).sqrt();
        if r >= 1.0 {
            return Err(format!("complex pole pair of radius {r} is unstable"));
        }
        let theta = ((-disc).sqrt() / 2.0).atan2(a1 / 2.0);
        let (sigma, omega) = (r.ln() / dt, theta / dt);
        let mag2 = sigma * sigma + omega * omega;
        let tf = TransferFunction::second_order(gain, -2.0 * sigma / mag2, 1.0 / mag2, dead_time).map_err(|e| e.to_string())?;
        Ok((tf, false))
    }
}

fn fit(ds: &IdentDataset, delay_grid: &[f64], order: usize) -> Result<FitResult, SysidError> {
    check_grid(delay_grid)?;
    let dev = deviation(ds)?;
    let dt = ds.u.dt();
    let mut best: Option<Candidate> = None;
    let mut first_err = None;
    let mut seen = Vec::new();
    for &delay in delay_grid {
        let d = (delay / dt).round() as usize;
        if seen.contains(&d) {
            continue;
        }
        seen.push(d);
        let Some(model) = estimate(&dev.u, &dev.y, order, d) else { continue };
        match evaluate(&model, &dev, dt, d as f64 * dt) {
            Ok(c) => {
                if best.as_ref().is_none_or(|b| c.sse < b.sse) {
                    best = Some(c);
                }
            }
            Err(e) => {
                log::debug!("{e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let best = best.ok_or_else(|| first_err.unwrap_or(SysidError::TooShort { len: dev.y.len() }))?;
    let _ = dev.u0;
    let y = ds.y.values();
    let fit_percent = fit_percent(y, &best.y_hat)?;
    let residuals = ds.y.with_values(y.iter().zip(&best.y_hat).map(|(a, b)| a - b).collect());
    Ok(FitResult {
        tf: best.tf,
        fit_percent,
        residuals,
        simulated: ds.y.with_values(best.y_hat),
        degenerate: best.degenerate,
    })
}

/// Fits `K·e^(−τs)/(T1·s + 1)`, choosing τ from `delay_grid` by smallest
/// simulation residual.
pub fn fit_first_order(ds: &IdentDataset, delay_grid: &[f64]) -> Result<FitResult, SysidError> {
    fit(ds, delay_grid, 1)
}

/// Fits `K·e^(−τs)/(T2·s² + T1·s + 1)`. A pole at the discrete origin
/// collapses the model to first order and sets `degenerate`.
pub fn fit_second_order(ds: &IdentDataset, delay_grid: &[f64]) -> Result<FitResult, SysidError> {
    fit(ds, delay_grid, 2)
}
