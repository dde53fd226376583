//! Sample covariance lags, synthetic generators (linear AR with a latent
//! hub; nonlinear Hopfield oscillator network), decimation, and CSV I/O.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blockmat::BlockRow;
use crate::error::{Error, Result};

/// A multivariate time series: `N x m` values, sampling period `dt`, and
/// channel labels. All entries finite, `N >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    dt: f64,
    labels: Vec<String>,
}

impl TimeSeries {
    pub fn new(values: DMatrix<f64>, dt: f64, labels: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 samples, got {}",
                values.nrows()
            )));
        }
        if labels.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} channels",
                labels.len(),
                values.ncols()
            )));
        }
        if !values.iter().all(|x| x.is_finite()) {
            return Err(Error::InsufficientData("non-finite sample".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        Ok(TimeSeries { values, dt, labels })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

fn default_labels(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("x{i}")).collect()
}

/// First `p+1` sample covariance lags of a mean-centered series:
/// `R_k = (1/N) sum_{t=k+1}^N x(t) x(t-k)^T`, with `R_0` symmetrized.
pub fn covariance_lags(ts: &TimeSeries, p: usize) -> Result<BlockRow> {
    let n = ts.n_samples();
    let m = ts.n_channels();
    if n <= p + 1 {
        return Err(Error::InsufficientData(format!(
            "need more than p+1 = {} samples, got {}",
            p + 1,
            n
        )));
    }
    let mut centered = ts.values.clone();
    for j in 0..m {
        let mean = centered.column(j).mean();
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
    }
    let mut blocks = Vec::with_capacity(p + 1);
    for k in 0..=p {
        let mut acc = DMatrix::zeros(m, m);
        for t in k..n {
            for a in 0..m {
                for b in 0..m {
                    acc[(a, b)] += centered[(t, a)] * centered[(t - k, b)];
                }
            }
        }
        blocks.push(acc / n as f64);
    }
    BlockRow::new(blocks)
}

/// Linear AR(1) generator with manifest chain edges and one latent source
/// hub feeding every manifest channel it has a weight for. Accepted as a
/// JSON config file (see [`LinearArConfig::from_json`]) or built in code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearArConfig {
    pub n_manifest: usize,
    /// Directed manifest edges `(from, to, weight)`.
    pub edges: Vec<(usize, usize, f64)>,
    /// Latent-to-manifest weights, one per manifest channel (zeros allowed).
    /// The latent channel is simulated but never returned.
    pub latent_weights: Vec<f64>,
    pub manifest_self: f64,
    pub latent_self: f64,
    pub noise_std: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl LinearArConfig {
    /// Ten manifest channels with seven chain edges and a white latent hub
    /// connected to every channel. Keeping the latent a memoryless source
    /// makes its contribution to the inverse manifest spectrum an exact
    /// degree-one rank-one pseudo-polynomial, so the generating model lies
    /// inside the fitted class.
    pub fn fig1(n_samples: usize, seed: u64) -> Self {
        let edges = vec![
            (0, 1, 0.45),
            (1, 2, -0.40),
            (3, 4, 0.50),
            (4, 5, 0.42),
            (6, 7, -0.45),
            (7, 8, 0.48),
            (8, 9, 0.40),
        ];
        let latent_weights = vec![0.40, -0.35, 0.38, 0.42, -0.36, 0.40, 0.37, -0.41, 0.39, 0.35];
        LinearArConfig {
            n_manifest: 10,
            edges,
            latent_weights,
            manifest_self: 0.20,
            latent_self: 0.0,
            noise_std: 1.0,
            n_samples,
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            row: e.line(),
            col: e.column(),
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn has_latent(&self) -> bool {
        self.latent_weights.iter().any(|w| *w != 0.0)
    }

    /// Full transition matrix over manifest channels plus the latent
    /// channel (last index) when present.
    fn transition(&self) -> Result<DMatrix<f64>> {
        let m = self.n_manifest;
        if self.latent_weights.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} latent weights for {} manifest channels",
                self.latent_weights.len(),
                m
            )));
        }
        let q = m + usize::from(self.has_latent());
        let mut a = DMatrix::zeros(q, q);
        for i in 0..m {
            a[(i, i)] = self.manifest_self;
        }
        for &(from, to, w) in &self.edges {
            if from >= m || to >= m {
                return Err(Error::InvalidConfig(format!(
                    "edge ({from}, {to}) out of range for {m} channels"
                )));
            }
            a[(to, from)] = w;
        }
        if self.has_latent() {
            a[(q - 1, q - 1)] = self.latent_self;
            for (i, &w) in self.latent_weights.iter().enumerate() {
                a[(i, q - 1)] = w;
            }
        }
        Ok(a)
    }
}

/// Structural conditional-dependence pattern among the manifest channels of
/// the generated AR(1) process: pair `(i,j)` is an edge when `A_ij`,
/// `A_ji`, or a shared child (`(A^T A)_{ij}`) is structurally nonzero.
pub fn linear_ar_true_support(cfg: &LinearArConfig) -> Result<DMatrix<bool>> {
    let a = cfg.transition()?;
    let m = cfg.n_manifest;
    let q = a.nrows();
    Ok(DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            return false;
        }
        if a[(i, j)] != 0.0 || a[(j, i)] != 0.0 {
            return true;
        }
        (0..q).any(|k| a[(k, i)] != 0.0 && a[(k, j)] != 0.0)
    }))
}

fn burn_in_samples(m: usize) -> usize {
    1000usize.max(10 * m)
}

/// Simulates the AR(1) system and returns the manifest channels after
/// burn-in. The transition matrix is rescaled to spectral radius 0.95 (with
/// a warning) if the configured weights are unstable.
pub fn gen_linear_ar(cfg: &LinearArConfig) -> Result<TimeSeries> {
    let mut a = cfg.transition()?;
    let radius = a
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    if !radius.is_finite() {
        return Err(Error::UnstableSystem("non-finite spectral radius".into()));
    }
    if radius > 0.95 {
        eprintln!("warning: AR transition rescaled from spectral radius {radius:.3} to 0.95");
        a *= 0.95 / radius;
    }
    let q = a.nrows();
    let m = cfg.n_manifest;
    let burn = burn_in_samples(m);
    let total = cfg.n_samples + burn;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let normal = StandardNormal;
    let mut x = DMatrix::zeros(q, 1);
    let mut out = DMatrix::zeros(cfg.n_samples, m);
    for t in 0..total {
        let mut next = &a * &x;
        for i in 0..q {
            let e: f64 = normal.sample(&mut rng);
            next[(i, 0)] += cfg.noise_std * e;
        }
        x = next;
        if t >= burn {
            for i in 0..m {
                out[(t - burn, i)] = x[(i, 0)];
            }
        }
    }
    TimeSeries::new(out, 1.0, default_labels(m))
}

/// Hopfield oscillator network
/// `dx_i = (-x_i + tanh(sat_gain * sum_j G_ij x_j)) dt + noise_std dW_i`,
/// integrated with the Euler-Maruyama scheme at resolution `dt`. Accepted
/// as a JSON config file (coupling as rows) or built in code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfieldConfig {
    /// Coupling matrix with zero diagonal; `G_ij` is the strength of the
    /// connection from `x_j` to `x_i`.
    #[serde(with = "matrix_rows")]
    pub coupling: DMatrix<f64>,
    pub noise_std: f64,
    pub dt: f64,
    pub duration: f64,
    pub sat_gain: f64,
    pub seed: u64,
    /// Initial state; seeded uniform in `(-0.5, 0.5)` when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    /// Samples discarded up front; `max(1000, 10 n)` when absent.
    #[serde(default)]
    pub burn_in: Option<usize>,
}

/// Serializes a dense matrix as a list of rows.
mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged coupling matrix"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

/// Directed 4-node ring with one inhibitory link; oscillates for
/// `w * sat_gain` large enough.
fn ring(coupling: &mut DMatrix<f64>, nodes: [usize; 4], w: f64) {
    coupling[(nodes[1], nodes[0])] = w;
    coupling[(nodes[2], nodes[1])] = w;
    coupling[(nodes[3], nodes[2])] = w;
    coupling[(nodes[0], nodes[3])] = -w;
}

impl HopfieldConfig {
    /// Two 4-node ring clusters with identical gains and symmetric
    /// inter-cluster links between nodes 1 and 5: phase-coupled
    /// oscillations sharing one dominant frequency, slow relative to the
    /// sampling rate.
    pub fn coupled(seed: u64) -> Self {
        let mut coupling = DMatrix::zeros(8, 8);
        ring(&mut coupling, [0, 1, 2, 3], 3.0);
        ring(&mut coupling, [4, 5, 6, 7], 3.0);
        coupling[(4, 0)] = 0.8;
        coupling[(0, 4)] = 0.8;
        HopfieldConfig {
            coupling,
            noise_std: 0.02,
            dt: 0.25,
            duration: 19000.0,
            sat_gain: 1.0,
            seed,
            initial: None,
            burn_in: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            row: e.line(),
            col: e.column(),
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Two decoupled clusters oscillating at distinct frequencies: a fast
    /// 3-node ring with a follower node against a slower chord-asymmetrized
    /// 4-node ring.
    pub fn decoupled(seed: u64) -> Self {
        let mut coupling = DMatrix::zeros(8, 8);
        coupling[(1, 0)] = 5.0;
        coupling[(2, 1)] = 5.0;
        coupling[(0, 2)] = -5.0;
        coupling[(3, 0)] = 2.0; // follower
        ring(&mut coupling, [4, 5, 6, 7], 2.6);
        coupling[(6, 4)] = 2.0; // chord: splits the quadrature pair
        HopfieldConfig {
            coupling,
            noise_std: 0.02,
            dt: 0.25,
            duration: 19000.0,
            sat_gain: 1.0,
            seed,
            initial: None,
            burn_in: None,
        }
    }
}

/// Integrates the Hopfield SDE and returns the trajectory after burn-in.
pub fn gen_hopfield(cfg: &HopfieldConfig) -> Result<TimeSeries> {
    let n = cfg.coupling.nrows();
    if cfg.coupling.ncols() != n {
        return Err(Error::DimensionMismatch("coupling must be square".into()));
    }
    if (0..n).any(|i| cfg.coupling[(i, i)] != 0.0) {
        return Err(Error::InvalidConfig("coupling diagonal must be zero".into()));
    }
    if !(cfg.dt > 0.0 && cfg.dt <= cfg.duration) {
        return Err(Error::InvalidConfig("need 0 < dt <= duration".into()));
    }
    if cfg.noise_std < 0.0 {
        return Err(Error::InvalidConfig("noise_std must be non-negative".into()));
    }
    let steps = (cfg.duration / cfg.dt).floor() as usize;
    let burn = cfg.burn_in.unwrap_or_else(|| burn_in_samples(n));
    if steps < burn + 2 {
        return Err(Error::InsufficientData(format!(
            "duration yields {steps} steps, burn-in needs {burn} + 2"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let normal = StandardNormal;
    let mut x: Vec<f64> = match &cfg.initial {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "initial state has {} entries for {} nodes",
                    x0.len(),
                    n
                )));
            }
            x0.clone()
        }
        None => (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
    };
    let noise_scale = cfg.noise_std * cfg.dt.sqrt();
    let mut out = DMatrix::zeros(steps - burn, n);
    let mut drive = vec![0.0; n];
    for t in 0..steps {
        for (i, d) in drive.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, xj) in x.iter().enumerate() {
                acc += cfg.coupling[(i, j)] * xj;
            }
            *d = (cfg.sat_gain * acc).tanh();
        }
        for i in 0..n {
            let e: f64 = normal.sample(&mut rng);
            x[i] += cfg.dt * (-x[i] + drive[i]) + noise_scale * e;
        }
        if t >= burn {
            for i in 0..n {
                out[(t - burn, i)] = x[i];
            }
        }
    }
    TimeSeries::new(out, cfg.dt, default_labels(n))
}

/// Keeps every `period`-th sample and scales `dt` accordingly. No
/// anti-alias filter: the altered frequency content is the point.
pub fn decimate(ts: &TimeSeries, period: usize) -> Result<TimeSeries> {
    if period == 0 {
        return Err(Error::InvalidConfig("period must be >= 1".into()));
    }
    if period == 1 {
        return Ok(ts.clone());
    }
    let kept: Vec<usize> = (0..ts.n_samples()).step_by(period).collect();
    if kept.len() < 2 {
        return Err(Error::EmptyResult(format!(
            "decimation by {period} leaves {} samples",
            kept.len()
        )));
    }
    let m = ts.n_channels();
    let values = DMatrix::from_fn(kept.len(), m, |i, j| ts.values[(kept[i], j)]);
    TimeSeries::new(values, ts.dt * period as f64, ts.labels.clone())
}

/// Writes a header row of labels and one row per sample.
pub fn write_csv(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    text.push_str(&ts.labels.join(","));
    text.push('\n');
    for i in 0..ts.n_samples() {
        let row: Vec<String> = (0..ts.n_channels())
            .map(|j| format!("{}", ts.values[(i, j)]))
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads a header-labelled CSV of decimal reals. Rejects non-finite values
/// and rows whose width disagrees with the header; errors carry the
/// offending 1-based row and column. The sampling period is not stored in
/// the file and defaults to 1.
pub fn read_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse {
        row: 1,
        col: 1,
        msg: "empty file".into(),
    })?;
    let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let m = labels.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (li, line) in lines.enumerate() {
        let row_no = li + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != m {
            return Err(Error::Parse {
                row: row_no,
                col: fields.len(),
                msg: format!("expected {} columns per header, found {}", m, fields.len()),
            });
        }
        let mut row = Vec::with_capacity(m);
        for (ci, field) in fields.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|e| Error::Parse {
                row: row_no,
                col: ci + 1,
                msg: format!("{e}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    col: ci + 1,
                    msg: "non-finite value".into(),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 rows, got {}",
            rows.len()
        )));
    }
    let values = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
    TimeSeries::new(values, 1.0, labels)
}
