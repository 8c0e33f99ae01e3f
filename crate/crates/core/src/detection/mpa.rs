use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{normalize_log, DetectionResult};
use crate::channel::{dd_coefficient, ChannelRealization};
use crate::constellation::Constellation;
use crate::error::{shape_err, OtfsError, Result};

const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpaOptions {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Weight of the new var-to-observation message, `p = d p_new + (1-d) p_old`.
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iter() -> usize {
    30
}

fn default_damping() -> f64 {
    0.6
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for MpaOptions {
    fn default() -> Self {
        Self { max_iter: default_max_iter(), damping: default_damping(), tol: default_tol() }
    }
}

/// Bipartite graph of the integer-Doppler DD relation. Observation `(l,k)`
/// connects, for every path `i`, to the variable `([l-l_i]_M, [k-k_i]_N)`
/// through the exact DD coefficient of that path at `(l,k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    m: usize,
    n: usize,
    paths: usize,
    // per observation, one (variable, coefficient) per path
    obs_edges: Vec<Vec<(usize, Complex64)>>,
    // per variable, (observation, edge id) with edge id = obs * paths + slot
    var_edges: Vec<Vec<(usize, usize)>>,
}

impl FactorGraph {
    pub fn new(ch: &ChannelRealization, m: usize, n: usize) -> Result<Self> {
        if !ch.is_integer() {
            return Err(OtfsError::InputRange(
                "message passing needs integer Doppler indices; fractional Doppler breaks the sparse graph".into(),
            ));
        }
        let mut bins: Vec<(usize, usize)> =
            ch.paths().iter().map(|p| (p.delay % m, crate::grid::wrap(p.doppler.round() as i64, n))).collect();
        bins.sort_unstable();
        bins.dedup();
        if bins.len() != ch.len() {
            return Err(OtfsError::Configuration("paths must occupy distinct delay-Doppler bins".into()));
        }
        let paths = ch.len();
        let mn = m * n;
        let mut obs_edges = Vec::with_capacity(mn);
        let mut var_edges = vec![Vec::with_capacity(paths); mn];
        for obs in 0..mn {
            let (l, k) = (obs % m, obs / m);
            let mut edges = Vec::with_capacity(paths);
            for (slot, path) in ch.paths().iter().enumerate() {
                let tap = dd_coefficient(path, l, k, m, n)?;
                let var = tap.src_l + tap.src_k * m;
                edges.push((var, tap.coeff));
                var_edges[var].push((obs, obs * paths + slot));
            }
            obs_edges.push(edges);
        }
        let graph = Self { m, n, paths, obs_edges, var_edges };
        debug_assert!(graph.var_edges.iter().all(|e| e.len() == paths));
        Ok(graph)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Degree of every node.
    pub fn degree(&self) -> usize {
        self.paths
    }

    /// Observations that see variable `var` (one per path).
    pub fn observations_of(&self, var: usize) -> impl Iterator<Item = usize> + '_ {
        self.var_edges[var].iter().map(|(obs, _)| *obs)
    }

    /// Variables seen by observation `obs`, in path order.
    pub fn variables_of(&self, obs: usize) -> impl Iterator<Item = usize> + '_ {
        self.obs_edges[obs].iter().map(|(v, _)| *v)
    }

    /// Variables interfering with `var` at observation `obs`.
    pub fn interferers(&self, obs: usize, var: usize) -> impl Iterator<Item = usize> + '_ {
        self.variables_of(obs).filter(move |v| *v != var)
    }

    /// Edge coefficients of observation `obs`, in path order.
    pub fn coefficients(&self, obs: usize) -> impl Iterator<Item = Complex64> + '_ {
        self.obs_edges[obs].iter().map(|(_, h)| *h)
    }
}

/// Gaussian-approximation message passing on the DD factor graph with a
/// flooding schedule: all observation messages, then all variable messages.
/// Interference is matched by its full real 2x2 covariance, so improper
/// constellations such as BPSK keep their one-dimensional structure.
pub fn detect_mpa(
    y: &[Complex64],
    graph: &FactorGraph,
    noise_var: f64,
    c: &Constellation,
    opts: &MpaOptions,
) -> Result<DetectionResult> {
    let mn = graph.m * graph.n;
    if y.len() != mn {
        return shape_err(format!("observation of length {} for a {mn}-node graph", y.len()));
    }
    if !(noise_var >= 0.0) {
        return Err(OtfsError::InputRange(format!("noise variance {noise_var}")));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) || opts.max_iter == 0 {
        return Err(OtfsError::Configuration("damping must lie in (0, 1] and max_iter be positive".into()));
    }
    let q = c.len();
    let pts = c.points();
    let p = graph.paths;
    let edges = mn * p;
    let mut to_var = vec![0.0f64; edges * q]; // log-likelihood messages
    let mut to_obs = vec![1.0 / q as f64; edges * q];
    let mut posteriors = vec![vec![1.0 / q as f64; q]; mn];
    let mut mean = vec![Complex64::default(); p];
    let mut cov = vec![[0.0f64; 3]; p];
    let mut iterations = 0;
    let mut converged = false;
    // no observation couples two variables: one pass is exact
    let max_iter = if p <= 1 { 1 } else { opts.max_iter };

    while iterations < max_iter {
        iterations += 1;
        for (obs, row) in graph.obs_edges.iter().enumerate() {
            let mut tm = Complex64::default();
            let mut tc = [0.0f64; 3];
            for (slot, (_, h)) in row.iter().enumerate() {
                let probs = &to_obs[(obs * p + slot) * q..][..q];
                let mut m1 = Complex64::default();
                let mut m2 = [0.0f64; 3];
                for (pr, a) in probs.iter().zip(pts) {
                    let s = h * a;
                    m1 += s * *pr;
                    m2[0] += pr * s.re * s.re;
                    m2[1] += pr * s.im * s.im;
                    m2[2] += pr * s.re * s.im;
                }
                mean[slot] = m1;
                cov[slot] = [(m2[0] - m1.re * m1.re).max(0.0), (m2[1] - m1.im * m1.im).max(0.0), m2[2] - m1.re * m1.im];
                tm += m1;
                for (t, c) in tc.iter_mut().zip(&cov[slot]) {
                    *t += c;
                }
            }
            for (slot, (_, h)) in row.iter().enumerate() {
                let zeta = y[obs] - (tm - mean[slot]);
                // real 2x2 covariance of interference plus noise
                let rr = (tc[0] - cov[slot][0] + 0.5 * noise_var).max(VARIANCE_FLOOR);
                let ii = (tc[1] - cov[slot][1] + 0.5 * noise_var).max(VARIANCE_FLOOR);
                let ri = tc[2] - cov[slot][2];
                let det = (rr * ii - ri * ri).max(VARIANCE_FLOOR * VARIANCE_FLOOR);
                let out = &mut to_var[(obs * p + slot) * q..][..q];
                for (o, a) in out.iter_mut().zip(pts) {
                    let d = zeta - h * a;
                    *o = -0.5 * (ii * d.re * d.re - 2.0 * ri * d.re * d.im + rr * d.im * d.im) / det;
                }
            }
        }
        let mut change = 0.0f64;
        let mut total = vec![0.0; q];
        let mut ext = vec![0.0; q];
        for (v_idx, incident) in graph.var_edges.iter().enumerate() {
            total.iter_mut().for_each(|t| *t = 0.0);
            for &(_, e) in incident {
                for (t, m) in total.iter_mut().zip(&to_var[e * q..][..q]) {
                    *t += m;
                }
            }
            let mut post = total.clone();
            normalize_log(&mut post);
            for (new, old) in post.iter().zip(&posteriors[v_idx]) {
                change = change.max((new - old).abs());
            }
            posteriors[v_idx] = post;
            for &(_, e) in incident {
                for ((x, t), m) in ext.iter_mut().zip(&total).zip(&to_var[e * q..][..q]) {
                    *x = t - m;
                }
                normalize_log(&mut ext);
                for (o, x) in to_obs[e * q..][..q].iter_mut().zip(&ext) {
                    *o = opts.damping * x + (1.0 - opts.damping) * *o;
                }
            }
        }
        if p <= 1 || (iterations > 1 && change < opts.tol) {
            converged = true;
            break;
        }
    }
    let mut out = DetectionResult::from_posteriors(posteriors);
    out.iterations_used = iterations;
    out.converged = converged;
    Ok(out)
}
