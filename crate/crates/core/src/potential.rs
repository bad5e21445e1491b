//! Radial potential density `v(s) = exp(−(n/2) ∫₁^s η(w)/w dw)` and force
//! coefficient `φ(s) = (n/2s) η(s) = −v'/v`, with `s = |F|²/2`.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance of the adaptive quadrature used for tabulated `η`.
pub const QUADRATURE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub enum PotentialKind {
    /// `η ≡ 0`, `v ≡ 1`
    ZeroEta,
    /// `η(w) = 2γw/n`
    Gaussian {
        gamma: f64,
    },
    /// `η(w) = κ w^{p+1}`
    Power {
        kappa: f64,
        p: f64,
    },
    Tabulated(Arc<EtaTable>),
}

#[derive(Clone, Debug)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Dimension of the hypersurface; 1 for curves.
    pub n: f64,
}

impl PotentialSpec {
    pub fn zero_eta() -> Self {
        Self {
            kind: PotentialKind::ZeroEta,
            n: 1.0,
        }
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::config("potential.gamma must be finite"));
        }
        Ok(Self {
            kind: PotentialKind::Gaussian { gamma },
            n: 1.0,
        })
    }

    pub fn power(kappa: f64, p: f64) -> Result<Self> {
        if !kappa.is_finite() || !(p >= 0.0) || !p.is_finite() {
            return Err(Error::config(
                "potential.kappa must be finite and potential.p >= 0",
            ));
        }
        Ok(Self {
            kind: PotentialKind::Power { kappa, p },
            n: 1.0,
        })
    }

    pub fn tabulated(table: EtaTable) -> Self {
        Self {
            kind: PotentialKind::Tabulated(Arc::new(table)),
            n: 1.0,
        }
    }

    pub fn is_zero_eta(&self) -> bool {
        matches!(self.kind, PotentialKind::ZeroEta)
    }

    /// `η(w)`
    pub fn eta(&self, w: f64) -> Result<f64> {
        check_arg(w)?;
        Ok(match &self.kind {
            PotentialKind::ZeroEta => 0.0,
            PotentialKind::Gaussian { gamma } => 2.0 * gamma * w / self.n,
            PotentialKind::Power { kappa, p } => kappa * w.powf(p + 1.0),
            PotentialKind::Tabulated(t) => t.eta(w)?,
        })
    }

    /// `log v(s)`, closed form where available.
    pub fn log_v(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        let half_n = 0.5 * self.n;
        Ok(match &self.kind {
            PotentialKind::ZeroEta => 0.0,
            PotentialKind::Gaussian { gamma } => -gamma * (s - 1.0),
            PotentialKind::Power { kappa, p } => {
                -half_n * kappa * (s.powf(p + 1.0) - 1.0) / (p + 1.0)
            }
            PotentialKind::Tabulated(t) => -half_n * t.integral_from_one(s)?,
        })
    }

    /// `log v(s)` by adaptive quadrature of `η/w`, for every kind.
    pub fn log_v_quadrature(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        if s == 1.0 {
            return Ok(0.0);
        }
        let integrand = |w: f64| self.eta(w).map(|e| e / w).unwrap_or(f64::NAN);
        let integral = adaptive_gauss_kronrod(integrand, 1.0, s, QUADRATURE_TOL)?;
        Ok(-0.5 * self.n * integral)
    }

    pub fn v(&self, s: f64) -> Result<f64> {
        Ok(self.log_v(s)?.exp())
    }

    /// `φ(s) = (n/2s) η(s)`
    pub fn phi(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        let half_n = 0.5 * self.n;
        Ok(match &self.kind {
            PotentialKind::ZeroEta => 0.0,
            PotentialKind::Gaussian { gamma } => *gamma,
            PotentialKind::Power { kappa, p } => half_n * kappa * s.powf(*p),
            PotentialKind::Tabulated(t) => half_n * t.eta(s)? / s,
        })
    }

    /// `φ'(s)`
    pub fn dphi(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        let half_n = 0.5 * self.n;
        Ok(match &self.kind {
            PotentialKind::ZeroEta | PotentialKind::Gaussian { .. } => 0.0,
            PotentialKind::Power { kappa, p } => {
                if *p == 0.0 {
                    0.0
                } else {
                    half_n * kappa * p * s.powf(p - 1.0)
                }
            }
            PotentialKind::Tabulated(t) => {
                let (eta, deta) = t.eta_with_slope(s)?;
                half_n * (deta / s - eta / (s * s))
            }
        })
    }

    /// `(v, φ, φ')` at one point.
    pub fn eval(&self, s: f64) -> Result<PotentialValues> {
        Ok(PotentialValues {
            v: self.v(s)?,
            phi: self.phi(s)?,
            dphi: self.dphi(s)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialValues {
    pub v: f64,
    pub phi: f64,
    pub dphi: f64,
}

fn check_arg(s: f64) -> Result<()> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::numerical(format!(
            "potential argument s = {s} is not a finite nonnegative number"
        )));
    }
    Ok(())
}

pub fn v_of_s(spec: &PotentialSpec, s: f64) -> Result<f64> {
    spec.v(s)
}

pub fn phi_of_s(spec: &PotentialSpec, s: f64) -> Result<f64> {
    spec.phi(s)
}

/// Outcome of sampling the growth condition `0 < |η(w)/w| ≤ |w|^p`.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub pass: bool,
    /// Zero-eta potentials sit on the boundary `η ≡ 0` of the condition and
    /// are reported as passing.
    pub on_boundary: bool,
    /// Smallest `|w|^p − |η/w|` over the samples.
    pub worst_margin: f64,
    pub worst_w: f64,
}

pub fn check_growth(spec: &PotentialSpec, p: f64, range: (f64, f64)) -> Result<GrowthReport> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || !(p >= 0.0) {
        return Err(Error::config(format!(
            "growth check needs 0 < lo < hi and p >= 0 (got [{lo}, {hi}], p = {p})"
        )));
    }
    if spec.is_zero_eta() {
        return Ok(GrowthReport {
            pass: true,
            on_boundary: true,
            worst_margin: 0.0,
            worst_w: lo,
        });
    }
    const SAMPLES: usize = 1001;
    let ratio = hi / lo;
    let mut worst = (f64::INFINITY, lo);
    let mut positive = true;
    for i in 0..SAMPLES {
        let w = lo * ratio.powf(i as f64 / (SAMPLES - 1) as f64);
        let q = (spec.eta(w)? / w).abs();
        positive &= q > 0.0;
        let bound = w.powf(p);
        // equality cases are exact in the formula but not in floating point
        let margin = bound - q;
        let margin = if margin.abs() <= 1e-12 * bound {
            0.0
        } else {
            margin
        };
        if margin < worst.0 {
            worst = (margin, w);
        }
    }
    Ok(GrowthReport {
        pass: positive && worst.0 >= 0.0,
        on_boundary: false,
        worst_margin: worst.0,
        worst_w: worst.1,
    })
}

/// `η` sampled at strictly increasing positive `w`, interpolated by a natural
/// cubic spline. Arguments outside the table are errors.
#[derive(Clone, Debug)]
pub struct EtaTable {
    w: Vec<f64>,
    eta: Vec<f64>,
    /// spline second derivatives at the knots
    m2: Vec<f64>,
    /// `∫_{w_0}^{w_i} η/w dw`
    cumulative: Vec<f64>,
    at_one: f64,
}

impl EtaTable {
    pub fn new(w: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        if w.len() != eta.len() || w.len() < 4 {
            return Err(Error::config("eta table needs at least 4 rows of (w, eta)"));
        }
        if w.iter().chain(&eta).any(|v| !v.is_finite()) {
            return Err(Error::config("eta table contains non-finite values"));
        }
        if w[0] <= 0.0 {
            return Err(Error::config("eta table: w must be positive"));
        }
        if w.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::config("eta table: w must be strictly increasing"));
        }
        if !(w[0] <= 1.0 && 1.0 <= *w.last().unwrap()) {
            return Err(Error::config("eta table must cover w = 1"));
        }
        let m2 = natural_spline_second_derivatives(&w, &eta);
        let mut table = Self {
            w,
            eta,
            m2,
            cumulative: Vec::new(),
            at_one: 0.0,
        };
        let mut cumulative = vec![0.0];
        for i in 0..table.w.len() - 1 {
            let piece = table.integrate_piece(table.w[i], table.w[i + 1])?;
            cumulative.push(cumulative[i] + piece);
        }
        table.cumulative = cumulative;
        table.at_one = table.integral_from_start(1.0)?;
        Ok(table)
    }

    /// Reads a two-column CSV `w, eta`. A non-numeric first row is taken as a header.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let (mut w, mut eta) = (Vec::new(), Vec::new());
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::config(format!(
                    "{}: row {} has {} columns, expected 2",
                    path.display(),
                    i + 1,
                    record.len()
                )));
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => {
                    w.push(v[0]);
                    eta.push(v[1]);
                }
                Err(_) if i == 0 => continue,
                Err(e) => {
                    return Err(Error::config(format!(
                        "{}: row {}: {e}",
                        path.display(),
                        i + 1
                    )))
                }
            }
        }
        Self::new(w, eta)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.w[0], *self.w.last().unwrap())
    }

    fn locate(&self, x: f64) -> Result<usize> {
        let (lo, hi) = self.range();
        if !(lo <= x && x <= hi) {
            return Err(Error::numerical(format!(
                "argument {x} outside the eta table range [{lo}, {hi}]"
            )));
        }
        let i = self.w.partition_point(|&k| k <= x);
        Ok(i.saturating_sub(1).min(self.w.len() - 2))
    }

    fn piece(&self, i: usize, x: f64) -> (f64, f64) {
        let h = self.w[i + 1] - self.w[i];
        let a = (self.w[i + 1] - x) / h;
        let b = (x - self.w[i]) / h;
        let (m0, m1) = (self.m2[i], self.m2[i + 1]);
        let value = a * self.eta[i]
            + b * self.eta[i + 1]
            + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let slope = (self.eta[i + 1] - self.eta[i]) / h
            + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        (value, slope)
    }

    pub fn eta(&self, x: f64) -> Result<f64> {
        Ok(self.eta_with_slope(x)?.0)
    }

    pub fn eta_with_slope(&self, x: f64) -> Result<(f64, f64)> {
        let i = self.locate(x)?;
        Ok(self.piece(i, x))
    }

    fn integrate_piece(&self, a: f64, b: f64) -> Result<f64> {
        let i = self.locate(0.5 * (a + b))?;
        adaptive_gauss_kronrod(|w| self.piece(i, w).0 / w, a, b, QUADRATURE_TOL)
    }

    fn integral_from_start(&self, x: f64) -> Result<f64> {
        let i = self.locate(x)?;
        Ok(self.cumulative[i] + self.integrate_piece(self.w[i], x)?)
    }

    /// `∫₁^x η(w)/w dw`
    pub fn integral_from_one(&self, x: f64) -> Result<f64> {
        Ok(self.integral_from_start(x)? - self.at_one)
    }
}

/// Second derivatives of the natural cubic spline through `(x, y)` (Thomas algorithm).
fn natural_spline_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    let interior = n - 2;
    let mut diag = vec![0.0; interior];
    let mut upper = vec![0.0; interior];
    let mut rhs = vec![0.0; interior];
    for k in 0..interior {
        let i = k + 1;
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        diag[k] = 2.0 * (h0 + h1);
        upper[k] = h1;
        rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    for k in 1..interior {
        let lower = x[k + 1] - x[k];
        let factor = lower / diag[k - 1];
        diag[k] -= factor * upper[k - 1];
        rhs[k] -= factor * rhs[k - 1];
    }
    for k in (0..interior).rev() {
        let next = if k + 1 < interior { m[k + 2] } else { 0.0 };
        m[k + 1] = (rhs[k] - upper[k] * next) / diag[k];
    }
    m
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd-indexed Kronrod nodes (and the centre).
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = K15_WEIGHTS[7] * fc;
    let mut gauss = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += K15_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (G7/K15) quadrature to absolute-or-relative tolerance `tol`.
pub fn adaptive_gauss_kronrod(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 2000;
    if a == b {
        return Ok(0.0);
    }
    let (value, error) = gauss_kronrod_15(&f, a, b);
    let mut intervals = vec![(a, b, value, error)];
    loop {
        let total: f64 = intervals.iter().map(|i| i.2).sum();
        let err: f64 = intervals.iter().map(|i| i.3).sum();
        if !total.is_finite() {
            return Err(Error::numerical("quadrature produced a non-finite value"));
        }
        if err <= tol * total.abs().max(1.0) {
            return Ok(total);
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::numerical(format!(
                "quadrature on [{a}, {b}] did not reach tolerance {tol:e} (error estimate {err:e})"
            )));
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        for (l, h) in [(lo, mid), (mid, hi)] {
            let (v, e) = gauss_kronrod_15(&f, l, h);
            intervals.push((l, h, v, e));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn closed_form_examples() {
        let z = PotentialSpec::zero_eta();
        assert_eq!(z.v(7.3).unwrap(), 1.0);
        assert_eq!(z.phi(7.3).unwrap(), 0.0);
        let g = PotentialSpec::gaussian(0.5).unwrap();
        assert!((g.v(3.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(g.phi(0.3).unwrap(), 0.5);
        for spec in [z, g, PotentialSpec::power(0.7, 1.5).unwrap()] {
            assert_eq!(spec.v(1.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let specs = [
            PotentialSpec::gaussian(0.4).unwrap(),
            PotentialSpec::power(1.3, 2.0).unwrap(),
            PotentialSpec::power(0.5, 0.5).unwrap(),
        ];
        for spec in &specs {
            for s in [0.2, 0.9, 1.0, 2.5, 4.0] {
                let a = spec.log_v(s).unwrap();
                let b = spec.log_v_quadrature(s).unwrap();
                assert!((a - b).abs() < 1e-10, "{spec:?} s={s}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn phi_is_minus_log_derivative() {
        let specs = [
            PotentialSpec::zero_eta(),
            PotentialSpec::gaussian(0.3).unwrap(),
            PotentialSpec::power(1.0, 1.0).unwrap(),
            PotentialSpec::power(0.8, 2.5).unwrap(),
        ];
        let d = 1e-5;
        for spec in &specs {
            let fd = -(spec.v(2.0 + d).unwrap() - spec.v(2.0 - d).unwrap())
                / (2.0 * d * spec.v(2.0).unwrap());
            assert!((fd - spec.phi(2.0).unwrap()).abs() < 1e-8, "{spec:?}");
            let dfd = (spec.phi(2.0 + d).unwrap() - spec.phi(2.0 - d).unwrap()) / (2.0 * d);
            assert!((dfd - spec.dphi(2.0).unwrap()).abs() < 1e-7, "{spec:?}");
        }
    }

    #[test]
    fn growth_examples() {
        let r = check_growth(&PotentialSpec::gaussian(0.4).unwrap(), 0.0, (0.5, 4.0)).unwrap();
        assert!(r.pass && !r.on_boundary);
        assert!((r.worst_margin - 0.2).abs() < 1e-12);
        let r = check_growth(&PotentialSpec::gaussian(0.6).unwrap(), 0.0, (0.5, 4.0)).unwrap();
        assert!(!r.pass);
        let r = check_growth(&PotentialSpec::power(1.0, 1.0).unwrap(), 1.0, (0.1, 2.0)).unwrap();
        assert!(r.pass);
        let r = check_growth(&PotentialSpec::zero_eta(), 0.0, (0.5, 4.0)).unwrap();
        assert!(r.pass && r.on_boundary);
        assert!(check_growth(&PotentialSpec::zero_eta(), 0.0, (0.0, 4.0)).is_err());
    }

    fn gaussian_table(gamma: f64) -> EtaTable {
        let w: Vec<f64> = (0..=60).map(|i| 0.05 + 0.1 * i as f64).collect();
        let eta = w.iter().map(|w| 2.0 * gamma * w).collect();
        EtaTable::new(w, eta).unwrap()
    }

    #[test]
    fn tabulated_linear_eta_matches_gaussian() {
        let tab = PotentialSpec::tabulated(gaussian_table(0.5));
        let gauss = PotentialSpec::gaussian(0.5).unwrap();
        for s in [0.1, 0.6, 1.0, 3.0, 5.9] {
            assert!((tab.v(s).unwrap() - gauss.v(s).unwrap()).abs() < 1e-8);
            assert!((tab.phi(s).unwrap() - 0.5).abs() < 1e-10);
        }
        assert!(tab.v(7.0).is_err());
        assert!(tab.v(0.01).is_err());
    }

    #[test]
    fn tabulated_curved_eta_matches_power() {
        let w: Vec<f64> = (0..=400).map(|i| 0.2 + 0.01 * i as f64).collect();
        let eta = w.iter().map(|w| 0.7 * w.powi(3)).collect();
        let tab = PotentialSpec::tabulated(EtaTable::new(w, eta).unwrap());
        let pow = PotentialSpec::power(0.7, 2.0).unwrap();
        for s in [0.3, 1.0, 2.2, 4.1] {
            assert!((tab.log_v(s).unwrap() - pow.log_v(s).unwrap()).abs() < 1e-6);
            assert!((tab.dphi(s).unwrap() - pow.dphi(s).unwrap()).abs() < 1e-3);
        }
    }

    #[test]
    fn table_validation() {
        assert!(EtaTable::new(vec![0.5, 0.7, 0.6, 2.0], vec![0.0; 4]).is_err());
        assert!(EtaTable::new(vec![1.5, 1.7, 1.8, 2.0], vec![0.0; 4]).is_err());
        assert!(EtaTable::new(vec![0.5, 1.0, 1.5], vec![0.0; 3]).is_err());
    }

    #[test]
    fn csv_table_with_header() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "w,eta").unwrap();
        for i in 0..=20 {
            let w = 0.25 + 0.25 * i as f64;
            writeln!(file, "{w},{}", 0.8 * w).unwrap();
        }
        let table = EtaTable::from_csv(file.path()).unwrap();
        assert_eq!(table.range(), (0.25, 5.25));
        let spec = PotentialSpec::tabulated(table);
        assert!((spec.v(2.0).unwrap() - (-0.4f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn gauss_kronrod_on_smooth_and_peaked_integrands() {
        let v = adaptive_gauss_kronrod(f64::exp, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-13);
        let v = adaptive_gauss_kronrod(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() < 1e-8 * exact);
    }
}
