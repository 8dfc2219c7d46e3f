//! Unconstrained BFGS minimization with a strong-Wolfe line search.
//!
//! The inverse-Hessian approximation is returned alongside the minimizer;
//! maximum simulated likelihood uses it as the asymptotic covariance.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once `‖∇f‖ ≤ grad_tol · (1 + |f|)`.
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub inv_hessian: DMatrix<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl BfgsResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

struct Probe {
    step: f64,
    value: f64,
    slope: f64,
    gradient: Vec<f64>,
}

struct Objective<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    trial: Vec<f64>,
    evaluations: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective<'_, F> {
    fn probe(&mut self, step: f64) -> Probe {
        for ((t, x), d) in self.trial.iter_mut().zip(self.x).zip(self.dir) {
            *t = x + step * d;
        }
        let mut gradient = vec![0.0; self.x.len()];
        let value = (self.f)(&self.trial, &mut gradient);
        self.evaluations += 1;
        let slope = gradient.iter().zip(self.dir).map(|(g, d)| g * d).sum();
        let value = if value.is_finite() && gradient.iter().all(|g| g.is_finite()) {
            value
        } else {
            f64::INFINITY
        };
        Probe {
            step,
            value,
            slope,
            gradient,
        }
    }
}

/// Minimizer of the cubic through two probes, safeguarded into the interior
/// of the bracket.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = (lo.step, hi.step);
    let width = b - a;
    let mut t = 0.5 * (a + b);
    if hi.value.is_finite() {
        let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
        let disc = d1 * d1 - lo.slope * hi.slope;
        if disc >= 0.0 {
            let d2 = disc.sqrt() * width.signum();
            let c = b - width * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
            if c.is_finite() {
                t = c;
            }
        }
    }
    let (min, max) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (max - min);
    t.clamp(min + margin, max - margin)
}

fn line_search<F: FnMut(&[f64], &mut [f64]) -> f64>(
    obj: &mut Objective<'_, F>,
    f0: f64,
    slope0: f64,
    initial: f64,
    opts: &BfgsOptions,
) -> Option<Probe> {
    let armijo = |p: &Probe| p.value <= f0 + opts.c1 * p.step * slope0;
    let curvature = |p: &Probe| p.slope.abs() <= -opts.c2 * slope0;

    let mut prev = Probe {
        step: 0.0,
        value: f0,
        slope: slope0,
        gradient: Vec::new(),
    };
    let mut step = initial;
    let bracket = 'search: {
        for i in 0..opts.max_line_search {
            let p = obj.probe(step);
            if !p.value.is_finite() {
                step = prev.step + 0.25 * (step - prev.step);
                continue;
            }
            if !armijo(&p) || (i > 0 && p.value >= prev.value) {
                break 'search Ok((prev, p));
            }
            if curvature(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                break 'search Ok((p, prev));
            }
            step = 2.0 * p.step;
            prev = p;
        }
        Err(prev)
    };
    let (mut lo, mut hi) = match bracket {
        Ok(b) => b,
        Err(last) => return (last.step > 0.0).then_some(last),
    };
    for _ in 0..opts.max_line_search {
        let step = interpolate(&lo, &hi);
        if (step - lo.step).abs() < 1e-16 * lo.step.abs().max(1.0) {
            break;
        }
        let p = obj.probe(step);
        if !armijo(&p) || p.value >= lo.value {
            hi = p;
        } else {
            if curvature(&p) {
                return Some(p);
            }
            if p.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    (lo.step > 0.0).then_some(lo)
}

/// Minimizes `f`, which returns the objective and writes its gradient.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    let grad_norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();

    for iter in 0..opts.max_iter {
        if grad_norm(&g) <= opts.grad_tol * (1.0 + fx.abs()) {
            termination = Termination::Converged;
            break;
        }
        iterations = iter + 1;
        let gv = DVector::from_column_slice(&g);
        let mut dir: Vec<f64> = (-(&h * &gv)).iter().cloned().collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if slope >= 0.0 || !slope.is_finite() {
            h.fill_with_identity();
            scaled = false;
            dir = g.iter().map(|v| -v).collect();
            slope = -grad_norm(&g).powi(2);
        }
        let initial = if scaled { 1.0 } else { (1.0 / grad_norm(&g)).min(1.0) };
        let mut obj = Objective {
            f: &mut f,
            x: &x,
            dir: &dir,
            trial: vec![0.0; n],
            evaluations: 0,
        };
        let probe = line_search(&mut obj, fx, slope, initial, opts);
        evaluations += obj.evaluations;
        let Some(p) = probe else {
            termination = Termination::LineSearchFailed;
            break;
        };

        let s = DVector::from_iterator(n, dir.iter().map(|d| d * p.step));
        let y = DVector::from_iterator(n, p.gradient.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                h.fill_with_identity();
                h *= sy / y.dot(&y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h += &s * s.transpose() * (rho * rho * yhy + rho);
        }
        x.iter_mut().zip(s.iter()).for_each(|(xi, si)| *xi += si);
        fx = p.value;
        g = p.gradient;
    }
    if termination == Termination::MaxIterations && grad_norm(&g) <= opts.grad_tol * (1.0 + fx.abs()) {
        termination = Termination::Converged;
    }
    BfgsResult {
        x: DVector::from_vec(x),
        value: fx,
        gradient: DVector::from_vec(g),
        inv_hessian: h,
        iterations,
        evaluations,
        termination,
    }
}
