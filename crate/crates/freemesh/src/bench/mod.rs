//! Test functions, seeded random grids, error metrics, and the experiment
//! runner for convergence studies.

mod rng;

pub use rng::{random_grid, BoundingBox, SplitMix64, Xoshiro256PlusPlus};

use crate::error::{Error, Result};
use crate::fmt::mesh_to_tree;
use crate::multiindex::{rank_stride, MomentBasis};
use std::sync::Arc;
use std::time::Instant;

/// Default cap on grid sizes (8^6). Larger grids need `allow_large`; the
/// biggest published-style runs are far beyond desk-scale budgets.
pub const DEFAULT_MAX_GRID: usize = 262_144;

/// Salt mixed into seed_p to derive polynomial test-function coefficients.
const POLY_COEFF_SALT: u64 = 0x706F6C79636F6566; // "polycoef"

/// Three-dimensional Franke test function: a sum of four Gaussians with
/// coefficients 3/4, 3/4, 1/2, -1/5 on the unit cube.
pub fn franke3d(x: f64, y: f64, z: f64) -> f64 {
    let t1 = (-0.25
        * ((9.0 * x - 2.0).powi(2) + (9.0 * y - 2.0).powi(2) + (9.0 * z - 2.0).powi(2)))
    .exp();
    let t2 = (-(9.0 * x + 1.0).powi(2) / 49.0
        - (9.0 * y + 1.0).powi(2) / 10.0
        - (9.0 * z + 1.0).powi(2) / 10.0)
        .exp();
    let t3 = (-0.25
        * ((9.0 * x - 7.0).powi(2) + (9.0 * y - 3.0).powi(2) + (9.0 * z - 5.0).powi(2)))
    .exp();
    let t4 = (-(9.0 * x - 4.0).powi(2) - (9.0 * y - 7.0).powi(2) - (9.0 * z - 5.0).powi(2)).exp();
    0.75 * (t1 + t2) + 0.5 * t3 - 0.2 * t4
}

/// RMS and max-abs error of `predicted` against `truth`.
pub fn error_metrics(predicted: &[f64], truth: &[f64]) -> (f64, f64) {
    assert_eq!(predicted.len(), truth.len(), "length mismatch");
    assert!(
        !predicted.is_empty(),
        "error_metrics needs at least one value"
    );
    let mut sum_sq = 0.0f64;
    let mut max = 0.0f64;
    for (p, t) in predicted.iter().zip(truth) {
        let d = p - t;
        sum_sq += d * d;
        max = max.max(d.abs());
    }
    ((sum_sq / predicted.len() as f64).sqrt(), max)
}

/// Test function fitted by an experiment.
#[derive(Clone)]
pub enum TestFunction {
    Franke3d,
    /// Random polynomial of the given total degree; coefficients are drawn
    /// uniform in [-1, 1) from a generator seeded by seed_p ^ salt, so the
    /// function is pinned by the experiment config.
    Polynomial {
        degree: usize,
    },
    /// User-registered function.
    Custom {
        name: String,
        f: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestFunction::Franke3d => write!(f, "Franke3d"),
            TestFunction::Polynomial { degree } => write!(f, "Polynomial({degree})"),
            TestFunction::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl TestFunction {
    /// Name used in CSV rows.
    pub fn name(&self) -> String {
        match self {
            TestFunction::Franke3d => "franke3d".into(),
            TestFunction::Polynomial { degree } => format!("poly{degree}"),
            TestFunction::Custom { name, .. } => name.clone(),
        }
    }

    /// Binds any seed-dependent state and returns an evaluator.
    fn materialize(&self, seed_p: u64) -> Result<Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>> {
        match self {
            TestFunction::Franke3d => Ok(Box::new(franke3d)),
            TestFunction::Polynomial { degree } => {
                let basis = MomentBasis::new(*degree)?;
                let mut gen = Xoshiro256PlusPlus::new(seed_p ^ POLY_COEFF_SALT);
                let coeffs: Vec<f64> = (0..basis.rank())
                    .map(|_| 2.0 * gen.next_unit() - 1.0)
                    .collect();
                Ok(Box::new(move |x, y, z| {
                    let row = basis.moment_row([x, y, z]);
                    row.iter().zip(&coeffs).map(|(r, c)| r * c).sum()
                }))
            }
            TestFunction::Custom { f, .. } => {
                let f = f.clone();
                Ok(Box::new(move |x, y, z| f(x, y, z)))
            }
        }
    }
}

/// One experiment: sample grid p, fit the tree, evaluate on grid q, and
/// score against direct function evaluation.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_p: usize,
    pub n_q: usize,
    pub lmax: usize,
    pub tau: f64,
    pub seed_p: u64,
    pub seed_q: u64,
    pub function: TestFunction,
    pub domain: BoundingBox,
    /// Allows grids beyond [`DEFAULT_MAX_GRID`].
    pub allow_large: bool,
}

impl ExperimentConfig {
    /// Franke-3D defaults on the unit cube with distinct grid seeds.
    pub fn new(n_p: usize, lmax: usize, tau: f64) -> Self {
        Self {
            n_p,
            n_q: n_p,
            lmax,
            tau,
            seed_p: 1,
            seed_q: 2,
            function: TestFunction::Franke3d,
            domain: BoundingBox::unit(),
            allow_large: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rank = rank_stride(self.lmax + 1);
        if self.lmax > crate::multiindex::MAX_LMAX {
            return Err(Error::UnsupportedOrder {
                lmax: self.lmax,
                max: crate::multiindex::MAX_LMAX,
            });
        }
        if self.n_p < rank {
            return Err(Error::InsufficientPoints {
                needed: rank,
                got: self.n_p,
            });
        }
        if self.n_q == 0 {
            return Err(Error::InvalidConfig("n_q must be at least 1".into()));
        }
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tau must be positive and finite, got {}",
                self.tau
            )));
        }
        if !self.allow_large && (self.n_p > DEFAULT_MAX_GRID || self.n_q > DEFAULT_MAX_GRID) {
            return Err(Error::InvalidConfig(format!(
                "grid size {} exceeds the desk-scale cap {DEFAULT_MAX_GRID}; set allow_large to override",
                self.n_p.max(self.n_q)
            )));
        }
        Ok(())
    }
}

/// One benchmark row. Everything except the timings is a pure function of
/// the config.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub n_p: usize,
    pub n_q: usize,
    pub lmax: usize,
    pub tau: f64,
    pub seed_p: u64,
    pub seed_q: u64,
    pub function: String,
    pub node_count: u64,
    pub max_depth: usize,
    pub e_rms: f64,
    pub e_inf: f64,
    pub fit_seconds: f64,
    pub eval_seconds: f64,
}

/// CSV header for benchmark output.
pub const CSV_HEADER: &str =
    "n_p,n_q,lmax,tau,seed_p,seed_q,function,node_count,max_depth,e_rms,e_inf,fit_seconds,eval_seconds";

/// Full round-trip float formatting (17 significant digits).
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl ExperimentResult {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n_p,
            self.n_q,
            self.lmax,
            format_f64(self.tau),
            self.seed_p,
            self.seed_q,
            self.function,
            self.node_count,
            self.max_depth,
            format_f64(self.e_rms),
            format_f64(self.e_inf),
            format_f64(self.fit_seconds),
            format_f64(self.eval_seconds),
        )
    }
}

/// Runs one experiment end to end. Truth values on grid q come from direct
/// function evaluation, never from stored samples.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let basis = MomentBasis::new(config.lmax)?;
    let eval_fn = config.function.materialize(config.seed_p)?;

    let x_p = random_grid(config.n_p, config.seed_p, config.domain);
    let f_p: Vec<f64> = x_p.iter().map(|p| eval_fn(p[0], p[1], p[2])).collect();

    let t_fit = Instant::now();
    let fit = mesh_to_tree(&x_p, &f_p, &basis, config.tau)?;
    let fit_seconds = t_fit.elapsed().as_secs_f64();
    drop(x_p);

    let x_q = random_grid(config.n_q, config.seed_q, config.domain);
    let t_eval = Instant::now();
    let eval = fit.tree.evaluate(&x_q);
    let eval_seconds = t_eval.elapsed().as_secs_f64();

    let truth: Vec<f64> = x_q.iter().map(|p| eval_fn(p[0], p[1], p[2])).collect();
    let (e_rms, e_inf) = error_metrics(&eval.values, &truth);

    Ok(ExperimentResult {
        n_p: config.n_p,
        n_q: config.n_q,
        lmax: config.lmax,
        tau: config.tau,
        seed_p: config.seed_p,
        seed_q: config.seed_q,
        function: config.function.name(),
        node_count: fit.tree.node_count,
        max_depth: fit.tree.max_depth,
        e_rms,
        e_inf,
        fit_seconds,
        eval_seconds,
    })
}

/// Outcome of one sweep cell; failures keep the sweep going.
#[derive(Debug)]
pub struct SweepRow {
    pub config: ExperimentConfig,
    pub outcome: std::result::Result<ExperimentResult, Error>,
}

impl SweepRow {
    /// CSV row; failed runs carry NaN metrics and zero counts so the
    /// column layout stays fixed.
    pub fn to_csv_row(&self) -> String {
        match &self.outcome {
            Ok(r) => r.to_csv_row(),
            Err(_) => format!(
                "{},{},{},{},{},{},{},0,0,NaN,NaN,NaN,NaN",
                self.config.n_p,
                self.config.n_q,
                self.config.lmax,
                format_f64(self.config.tau),
                self.config.seed_p,
                self.config.seed_q,
                self.config.function.name(),
            ),
        }
    }
}

/// Cartesian sweep over grid sizes (outer), orders (middle), and
/// thresholds (inner). Each n sets both n_p and n_q. Rows come back in
/// configuration order; failures are recorded, not propagated.
pub fn sweep(
    base: &ExperimentConfig,
    lmax_list: &[usize],
    tau_list: &[f64],
    n_list: &[usize],
) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(lmax_list.len() * tau_list.len() * n_list.len());
    for &n in n_list {
        for &lmax in lmax_list {
            for &tau in tau_list {
                let mut config = base.clone();
                config.n_p = n;
                config.n_q = n;
                config.lmax = lmax;
                config.tau = tau;
                let outcome = run_experiment(&config);
                rows.push(SweepRow { config, outcome });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn franke3d_gaussian_centers() {
        // the first exponent vanishes at (2/9, 2/9, 2/9)
        let x: f64 = 2.0 / 9.0;
        let v = franke3d(x, x, x);
        let rest = 0.75
            * (-(9.0 * x + 1.0).powi(2) / 49.0
                - (9.0 * x + 1.0).powi(2) / 10.0
                - (9.0 * x + 1.0).powi(2) / 10.0)
                .exp()
            + 0.5
                * (-0.25
                    * ((9.0 * x - 7.0).powi(2)
                        + (9.0 * x - 3.0).powi(2)
                        + (9.0 * x - 5.0).powi(2)))
                .exp()
            - 0.2
                * (-(9.0 * x - 4.0).powi(2) - (9.0 * x - 7.0).powi(2) - (9.0 * x - 5.0).powi(2))
                    .exp();
        assert!((v - (0.75 + rest)).abs() < 1e-15);

        // the fourth exponent vanishes at (4/9, 7/9, 5/9)
        let (x, y, z): (f64, f64, f64) = (4.0 / 9.0, 7.0 / 9.0, 5.0 / 9.0);
        let others = 0.75
            * ((-0.25
                * ((9.0 * x - 2.0).powi(2) + (9.0 * y - 2.0).powi(2) + (9.0 * z - 2.0).powi(2)))
            .exp()
                + (-(9.0 * x + 1.0).powi(2) / 49.0
                    - (9.0 * y + 1.0).powi(2) / 10.0
                    - (9.0 * z + 1.0).powi(2) / 10.0)
                    .exp())
            + 0.5
                * (-0.25
                    * ((9.0 * x - 7.0).powi(2)
                        + (9.0 * y - 3.0).powi(2)
                        + (9.0 * z - 5.0).powi(2)))
                .exp();
        assert!((franke3d(x, y, z) - (others - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn error_metrics_cases() {
        assert_eq!(error_metrics(&[1.0, 2.0], &[1.0, 2.0]), (0.0, 0.0));
        let (rms, inf) = error_metrics(&[1.5], &[1.0]);
        assert_eq!((rms, inf), (0.5, 0.5));
        let (rms, inf) = error_metrics(&[3.0, 4.0], &[0.0, 0.0]);
        assert!((rms - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(inf, 4.0);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::new(100, 2, 1e-6);
        assert!(c.validate().is_ok());
        c.n_p = 5; // below rank 10
        assert!(matches!(
            c.validate(),
            Err(Error::InsufficientPoints { needed: 10, got: 5 })
        ));
        let mut c = ExperimentConfig::new(400_000, 2, 1e-6);
        assert!(c.validate().is_err());
        c.allow_large = true;
        assert!(c.validate().is_ok());
        let c = ExperimentConfig::new(100, 2, -1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn polynomial_run_is_exact_single_node() {
        let mut config = ExperimentConfig::new(200, 2, 1e-6);
        config.function = TestFunction::Polynomial { degree: 2 };
        let r = run_experiment(&config).unwrap();
        assert_eq!(r.node_count, 1);
        assert!(r.e_rms <= 1e-9, "e_rms {}", r.e_rms);
        assert!(r.e_rms <= r.e_inf);
    }

    #[test]
    fn run_is_deterministic_modulo_timings() {
        let config = ExperimentConfig::new(600, 3, 1e-4);
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.node_count, b.node_count);
        assert_eq!(a.e_rms.to_bits(), b.e_rms.to_bits());
        assert_eq!(a.e_inf.to_bits(), b.e_inf.to_bits());
    }

    #[test]
    fn custom_function_slot() {
        let mut config = ExperimentConfig::new(64, 1, 1e-6);
        config.function = TestFunction::Custom {
            name: "plane".into(),
            f: Arc::new(|x, y, z| 1.0 + x - 2.0 * y + 0.5 * z),
        };
        let r = run_experiment(&config).unwrap();
        assert_eq!(r.function, "plane");
        assert_eq!(r.node_count, 1);
        assert!(r.e_inf <= 1e-10);
    }

    #[test]
    fn sweep_rows_in_order() {
        let base = ExperimentConfig::new(128, 1, 1e-4);
        assert!(sweep(&base, &[], &[1e-4], &[128]).is_empty());

        let rows = sweep(&base, &[1, 2], &[1e-2, 1e-4], &[128]);
        assert_eq!(rows.len(), 4);
        let got: Vec<(usize, f64)> = rows.iter().map(|r| (r.config.lmax, r.config.tau)).collect();
        assert_eq!(got, vec![(1, 1e-2), (1, 1e-4), (2, 1e-2), (2, 1e-4)]);
        assert!(rows.iter().all(|r| r.outcome.is_ok()));
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let base = ExperimentConfig::new(128, 1, 1e-4);
        // lmax 3 needs 20 points; n=10 fails, n=128 succeeds
        let rows = sweep(&base, &[3], &[1e-4], &[10, 128]);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].outcome.is_err());
        assert!(rows[1].outcome.is_ok());
        assert!(rows[0].to_csv_row().contains("NaN"));
    }

    #[test]
    fn sweep_node_count_monotone_as_tau_tightens() {
        let base = ExperimentConfig::new(2048, 2, 1e-4);
        let rows = sweep(&base, &[2], &[1e-2, 1e-3, 1e-4, 1e-5], &[2048]);
        let counts: Vec<u64> = rows
            .iter()
            .map(|r| r.outcome.as_ref().unwrap().node_count)
            .collect();
        for w in counts.windows(2) {
            assert!(w[1] >= w[0], "node counts must not shrink: {counts:?}");
        }
        assert!(counts[counts.len() - 1] > counts[0], "sweep never refined");
    }

    #[test]
    fn csv_row_shape() {
        let config = ExperimentConfig::new(64, 1, 1e-4);
        let r = run_experiment(&config).unwrap();
        let row = r.to_csv_row();
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        assert!(row.starts_with("64,64,1,"));
        // 17 significant digits round-trip
        let tau: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(tau.to_bits(), 1e-4f64.to_bits());
    }
}
