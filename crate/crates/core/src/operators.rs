//! Pointwise operators: the dyadic fractional maximal operator, the discrete
//! multilinear fractional integral, sparse operators and iterated sparse averages.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{AverageTable, DyadicCube, GridFunction, GridSpec, Measure, Pyramid, Shift, SparseFamily};
use crate::scalar::{compensated_sum, Scalar};

/// Tolerance for the defining identity `1/q = Σ 1/p_i − η`.
pub const Q_IDENTITY_TOL: f64 = 1e-12;

/// Exponent data shared by the operators and forms.
///
/// Indices in `tau` and `tau_prime` are zero-based slot numbers. `s` may be
/// `f64::INFINITY`; `s_prime` is stored on its own.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentConfig {
    pub m: usize,
    pub eta: f64,
    pub r: Vec<f64>,
    pub s: f64,
    pub s_prime: f64,
    pub p: Vec<f64>,
    pub q: f64,
    pub z: f64,
    pub k: Vec<u32>,
    pub t: Vec<u32>,
    pub tau: Vec<usize>,
    pub tau_prime: Vec<usize>,
}

/// `q` from `1/q = Σ 1/p_i − η`.
pub fn derived_q(p: &[f64], eta: f64) -> f64 {
    1.0 / (p.iter().map(|x| 1.0 / x).sum::<f64>() - eta)
}

/// Hölder conjugate, `∞` for 1 and 1 for `∞`.
pub fn conjugate(x: f64) -> f64 {
    if x.is_infinite() {
        1.0
    } else if x == 1.0 {
        f64::INFINITY
    } else {
        x / (x - 1.0)
    }
}

impl ExponentConfig {
    /// Symbol-free configuration with `q` derived from `p` and `η`, `s = ∞`, `s' = 1`, `z = 1`.
    pub fn new(eta: f64, r: Vec<f64>, p: Vec<f64>) -> Self {
        let m = r.len();
        let q = derived_q(&p, eta);
        ExponentConfig {
            m,
            eta,
            r,
            s: f64::INFINITY,
            s_prime: 1.0,
            p,
            q,
            z: 1.0,
            k: vec![0; m],
            t: vec![0; m],
            tau: Vec::new(),
            tau_prime: Vec::new(),
        }
    }

    /// Configuration used only for averaging: `p_i` are set to `2 r_i m`-style
    /// placeholders that keep `q` well defined.
    pub fn averaging(eta: f64, r: Vec<f64>) -> Self {
        let m = r.len() as f64;
        let p = r.iter().map(|&ri| (ri.max(1.0) * 2.0 * m).max(2.0 * m + 2.0 * eta * m + 1.0)).collect();
        Self::new(eta, r, p)
    }

    pub fn with_s(mut self, s: f64, s_prime: f64) -> Self {
        self.s = s;
        self.s_prime = s_prime;
        self
    }

    pub fn with_symbols(mut self, k: Vec<u32>, t: Vec<u32>, tau: Vec<usize>, tau_prime: Vec<usize>) -> Self {
        self.k = k;
        self.t = t;
        self.tau = tau;
        self.tau_prime = tau_prime;
        self
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z = z;
        self
    }

    /// `τ^c` in slot order.
    pub fn tau_complement(&self) -> Vec<usize> {
        (0..self.m).filter(|i| !self.tau.contains(i)).collect()
    }

    /// `(r⃗, s) ≺ (p⃗, q)`: `r_i < p_i` and `q < s`.
    pub fn precedes_strict(&self) -> bool {
        self.r.iter().zip(&self.p).all(|(r, p)| r < p) && self.q < self.s
    }

    /// `(r⃗, s) ⪯ (p⃗, q)`: `r_i ≤ p_i` and `q < s`.
    pub fn precedes(&self) -> bool {
        self.r.iter().zip(&self.p).all(|(r, p)| r <= p) && self.q < self.s
    }

    /// `(r⃗, s) ⪯* (p⃗, q)`: `r_i ≤ p_i` and `q ≤ s`.
    pub fn precedes_star(&self) -> bool {
        self.r.iter().zip(&self.p).all(|(r, p)| r <= p) && self.q <= self.s
    }

    /// Every structural violation, each naming the violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let m = self.m;
        if m == 0 {
            v.push("arity m ≥ 1 violated".to_string());
        }
        for (name, len) in [("r", self.r.len()), ("p", self.p.len()), ("k", self.k.len()), ("t", self.t.len())] {
            if len != m {
                v.push(format!("length of {name} must equal m = {m} (got {len})"));
            }
        }
        if !(self.eta >= 0.0 && self.eta < m as f64) {
            v.push(format!("η ∈ [0, m) violated (η = {})", self.eta));
        }
        for (i, &r) in self.r.iter().enumerate() {
            if !(r >= 1.0) || r.is_infinite() {
                v.push(format!("r_{} ∈ [1, ∞) violated (r = {r})", i + 1));
            }
        }
        for (i, &p) in self.p.iter().enumerate() {
            if !(p > 1.0) || p.is_infinite() {
                v.push(format!("p_{} ∈ (1, ∞) violated (p = {p})", i + 1));
            }
        }
        let inv_q = self.p.iter().map(|x| 1.0 / x).sum::<f64>() - self.eta;
        if !(inv_q > 0.0) {
            v.push(format!("Σ1/p_i − η > 0 violated (value {inv_q})"));
        } else if (1.0 / self.q - inv_q).abs() > Q_IDENTITY_TOL {
            v.push(format!("1/q = Σ1/p_i − η violated (q = {}, expected {})", self.q, 1.0 / inv_q));
        }
        let rmax = self.r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(self.s > rmax) {
            v.push(format!("max_i r_i < s violated (s = {})", self.s));
        }
        if !(self.s_prime >= 1.0) || self.s_prime.is_infinite() {
            v.push(format!("s' ∈ [1, ∞) violated (s' = {})", self.s_prime));
        }
        if !(self.z >= 1.0) {
            v.push(format!("z ≥ 1 violated (z = {})", self.z));
        }
        for (i, (t, k)) in self.t.iter().zip(&self.k).enumerate() {
            if t > k {
                v.push(format!("t ≤ k violated at slot {} ({t} > {k})", i + 1));
            }
        }
        if let Some(i) = self.tau.iter().find(|&&i| i >= m) {
            v.push(format!("τ ⊆ {{1..m}} violated (slot {})", i + 1));
        }
        if let Some(i) = self.tau_prime.iter().find(|i| !self.tau.contains(i)) {
            v.push(format!("τ' ⊆ τ violated (slot {})", i + 1));
        }
        let mut sorted = self.tau.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.tau.len() {
            v.push("τ has repeated slots".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Precondition(v.join("; ")))
        }
    }
}

fn check_inputs<S: Scalar>(fs: &[GridFunction<S>], m: usize, mu: &Measure<S>) -> Result<()> {
    if fs.len() != m {
        return Err(Error::Arity { expected: m, got: fs.len() });
    }
    for f in fs {
        mu.grid().check_same(&f.grid())?;
    }
    Ok(())
}

/// `λ_Q = μ(Q)^η ∏_j avg(f_j, r_j, Q)` for every cube.
pub fn cube_values<S: Scalar>(fs: &[GridFunction<S>], eta: f64, r: &[f64], mu: &Measure<S>) -> Result<Pyramid<S>> {
    check_inputs(fs, r.len(), mu)?;
    let tables = fs.iter().zip(r).map(|(f, &rj)| AverageTable::build(f, rj, mu)).collect::<Result<Vec<_>>>()?;
    let grid = mu.grid();
    let eta_s = S::of(eta);
    let levels = (0..=grid.level())
        .map(|k| {
            let masses = mu.masses().level(k);
            let mut vals: Vec<S> =
                if eta == 0.0 { vec![S::one(); masses.len()] } else { masses.iter().map(|&m| m.powf(eta_s)).collect() };
            for t in &tables {
                for (v, a) in vals.iter_mut().zip(t.level_averages(k)) {
                    *v = *v * a;
                }
            }
            vals
        })
        .collect();
    Pyramid::from_levels(levels)
}

/// Pointwise sup over the cubes containing each cell of a per-cube quantity.
pub fn sup_over_containing<S: Scalar>(grid: &GridSpec, values: &Pyramid<S>) -> GridFunction<S> {
    let mut best = vec![values.get(DyadicCube::ROOT)];
    for k in 1..=grid.level() {
        let lv = values.level(k);
        best = lv.iter().enumerate().map(|(j, &v)| v.max(best[j >> 1])).collect();
    }
    let mut out = vec![S::zero(); grid.cells()];
    for (rot, v) in best.into_iter().enumerate() {
        out[grid.cell_at(rot)] = v;
    }
    GridFunction::new(*grid, out).expect("finite maximal values")
}

/// `M_{η,r⃗}` over the dyadic cubes, with explicit `η` and `r⃗`.
pub fn fractional_maximal<S: Scalar>(
    fs: &[GridFunction<S>],
    eta: f64,
    r: &[f64],
    mu: &Measure<S>,
) -> Result<GridFunction<S>> {
    let values = cube_values(fs, eta, r, mu)?;
    Ok(sup_over_containing(&mu.grid(), &values))
}

/// Dyadic `m`-linear fractional `r⃗`-type maximal operator.
pub fn dyadic_maximal<S: Scalar>(
    fs: &[GridFunction<S>],
    cfg: &ExponentConfig,
    mu: &Measure<S>,
) -> Result<GridFunction<S>> {
    if cfg.r.len() != cfg.m {
        return Err(Error::Arity { expected: cfg.m, got: cfg.r.len() });
    }
    fractional_maximal(fs, cfg.eta, &cfg.r, mu)
}

/// Pointwise max of the dyadic maximal operator on the standard and the 1/3-shifted lattice.
pub fn two_grid_maximal<S: Scalar>(
    fs: &[GridFunction<S>],
    cfg: &ExponentConfig,
    mu: &Measure<S>,
) -> Result<GridFunction<S>> {
    let a = dyadic_maximal(fs, cfg, mu)?;
    let shifted = GridSpec::shifted(mu.grid().level(), Shift::THIRD)?;
    let mu_s = mu.on_grid(shifted)?;
    let fs_s = fs.iter().map(|f| f.on_grid(shifted)).collect::<Result<Vec<_>>>()?;
    let b = dyadic_maximal(&fs_s, cfg, &mu_s)?;
    a.zip_with(&b.on_grid(a.grid())?, |x, y| x.max(y))
}

/// Treatment of kernel tuples sharing the finest cell of `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DiagonalPolicy {
    /// Omit the term.
    #[default]
    SkipSharedCell,
    /// Replace the ball measure by the mass of the cell of `x`.
    CapAtCellScale,
}

/// Kernel options for `frac_integral`; the quadrature is always the midpoint rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct KernelSpec {
    pub diagonal: DiagonalPolicy,
}

/// Largest `N^(m+1)` work accepted by `frac_integral`.
pub const FRAC_INTEGRAL_WORK_LIMIT: f64 = 68_719_476_736.0; // 2^36

/// Torus distance in cells.
#[inline]
fn cell_distance(n: usize, x: usize, y: usize) -> usize {
    let d = x.abs_diff(y);
    d.min(n - d)
}

/// `μ(B(x, k·h))` for every cell `x` and every `k ≤ N/2`, counting the two
/// boundary cells at half mass.
fn ball_masses<S: Scalar>(mu: &Measure<S>, x: usize) -> Vec<S> {
    let n = mu.grid().cells();
    let m = mu.cell_masses();
    let total = mu.total();
    let half = S::of(0.5);
    let mut out = Vec::with_capacity(n / 2 + 1);
    out.push(S::zero());
    let mut inner = S::zero();
    for k in 1..=n / 2 {
        let lo = (x + n - (k - 1)) % n;
        let hi = (x + k - 1) % n;
        inner = inner + if k == 1 { m[x] } else { m[lo] + m[hi] };
        let edge = m[(x + n - k) % n] + m[(x + k) % n];
        let b = inner + half * edge;
        out.push(if 2 * k >= n { total } else { b.min(total) });
    }
    out
}

/// Kernel values `(ball)^(η−m)` for every distance class, per evaluation point.
fn kernel_row<S: Scalar>(mu: &Measure<S>, x: usize, exponent: S, spec: KernelSpec) -> (Vec<S>, Option<S>) {
    let balls = ball_masses(mu, x);
    let row: Vec<S> = balls.iter().map(|&b| if b > S::zero() { b.powf(exponent) } else { S::zero() }).collect();
    let diag = match spec.diagonal {
        DiagonalPolicy::SkipSharedCell => None,
        DiagonalPolicy::CapAtCellScale => Some(mu.cell_mass(x)),
    };
    (row, diag)
}

/// Discrete multilinear fractional integral `I_η` for `m ∈ {1, 2}`.
pub fn frac_integral<S: Scalar>(
    fs: &[GridFunction<S>],
    eta: f64,
    spec: KernelSpec,
    mu: &Measure<S>,
) -> Result<GridFunction<S>> {
    let m = fs.len();
    if m == 0 {
        return Err(Error::Arity { expected: 1, got: 0 });
    }
    for f in fs {
        mu.grid().check_same(&f.grid())?;
    }
    if !(eta >= 0.0 && eta < m as f64) {
        return Err(Error::Exponent(format!("η = {eta} outside [0, {m})")));
    }
    let n = mu.grid().cells();
    let work = (n as f64).powi(m as i32 + 1);
    if m > 2 || work > FRAC_INTEGRAL_WORK_LIMIT {
        return Err(Error::Unsupported(format!(
            "frac_integral with m = {m} at L = {} needs N^(m+1) = {work:.3e} kernel evaluations (limit m ≤ 2, {FRAC_INTEGRAL_WORK_LIMIT:.3e})",
            mu.grid().level()
        )));
    }
    let cells: Vec<usize> = (0..n).collect();
    let vals = frac_integral_at(fs, eta, spec, mu, &cells, None)?;
    GridFunction::new(mu.grid(), vals)
}

/// `I_η` evaluated at `points`, with each input restricted to `support` (lattice-order
/// arc `[start, start+len)`) when given.
pub fn frac_integral_at<S: Scalar>(
    fs: &[GridFunction<S>],
    eta: f64,
    spec: KernelSpec,
    mu: &Measure<S>,
    points: &[usize],
    support: Option<(usize, usize)>,
) -> Result<Vec<S>> {
    let m = fs.len();
    if m == 0 || m > 2 {
        return Err(Error::Unsupported(format!("frac_integral_at supports m ∈ {{1,2}}, got {m}")));
    }
    let grid = mu.grid();
    let n = grid.cells();
    let exponent = S::of(eta - m as f64);
    let lebesgue = mu.is_lebesgue();
    let weighted: Vec<Vec<S>> =
        fs.iter().map(|f| f.values().iter().zip(mu.cell_masses()).map(|(&v, &w)| v * w).collect()).collect();
    let support_cells: Vec<usize> = match support {
        None => (0..n).collect(),
        Some((start, len)) => (start..start + len).map(|r| grid.cell_at(r % n)).collect(),
    };
    let shared = if lebesgue { Some(kernel_row(mu, 0, exponent, spec)) } else { None };
    let out: Vec<S> = points
        .par_iter()
        .map(|&x| {
            let own;
            let (row, diag) = match &shared {
                Some(r) => r,
                None => {
                    own = kernel_row(mu, x, exponent, spec);
                    &own
                }
            };
            if m == 1 {
                let f = &weighted[0];
                let mut acc = S::zero();
                for &y in &support_cells {
                    let d = cell_distance(n, x, y);
                    let kv = if d == 0 {
                        match diag {
                            None => continue,
                            Some(c) => c.powf(exponent),
                        }
                    } else {
                        row[d]
                    };
                    acc = acc + kv * f[y];
                }
                acc
            } else {
                let balls: Vec<S> = match &shared {
                    Some(_) => ball_masses(mu, 0),
                    None => ball_masses(mu, x),
                };
                // collapse each input onto distance classes from x
                let classes = n / 2 + 1;
                let mut g1 = vec![S::zero(); classes];
                let mut g2 = vec![S::zero(); classes];
                for &y in &support_cells {
                    let d = cell_distance(n, x, y);
                    g1[d] = g1[d] + weighted[0][y];
                    g2[d] = g2[d] + weighted[1][y];
                }
                let cap = diag.map(|c| c);
                let ball = |d: usize| -> Option<S> {
                    if d == 0 {
                        cap
                    } else {
                        Some(balls[d])
                    }
                };
                let mut acc = S::zero();
                for (d1, &a) in g1.iter().enumerate() {
                    if a == S::zero() {
                        continue;
                    }
                    let Some(b1) = ball(d1) else { continue };
                    let mut inner = S::zero();
                    for (d2, &b) in g2.iter().enumerate() {
                        if b == S::zero() {
                            continue;
                        }
                        let Some(b2) = ball(d2) else { continue };
                        inner = inner + (b1 + b2).powf(exponent) * b;
                    }
                    acc = acc + a * inner;
                }
                acc
            }
        })
        .collect();
    Ok(out)
}

/// `Σ_Q c_Q χ_Q`, summed along each root-to-cell chain.
pub fn family_sum<S: Scalar>(grid: &GridSpec, coeffs: &BTreeMap<DyadicCube, S>) -> GridFunction<S> {
    let mut levels: Vec<Vec<S>> = (0..=grid.level()).map(|k| vec![S::zero(); 1 << k]).collect();
    for (c, &v) in coeffs {
        levels[c.level as usize][c.index as usize] = levels[c.level as usize][c.index as usize] + v;
    }
    for k in 1..=grid.level() as usize {
        let (up, down) = levels.split_at_mut(k);
        let parent = &up[k - 1];
        for (j, v) in down[0].iter_mut().enumerate() {
            *v = parent[j >> 1] + *v;
        }
    }
    let finest = levels.pop().unwrap();
    let mut out = vec![S::zero(); grid.cells()];
    for (rot, v) in finest.into_iter().enumerate() {
        out[grid.cell_at(rot)] = v;
    }
    GridFunction::new(*grid, out).expect("finite family sum")
}

/// `Σ_{Q∈S} μ(Q)^η ∏_j avg(f_j, r_j, Q) χ_Q`.
pub fn sparse_operator<S: Scalar>(
    family: &SparseFamily,
    fs: &[GridFunction<S>],
    cfg: &ExponentConfig,
    mu: &Measure<S>,
) -> Result<GridFunction<S>> {
    check_inputs(fs, cfg.m, mu)?;
    mu.grid().check_same(&family.grid())?;
    let tables = fs.iter().zip(&cfg.r).map(|(f, &r)| AverageTable::build(f, r, mu)).collect::<Result<Vec<_>>>()?;
    let eta = S::of(cfg.eta);
    let coeffs = family
        .iter()
        .map(|&q| {
            let v = tables.iter().fold(mu.mass(q).powf(eta), |acc, t| acc * t.average(q));
            (q, v)
        })
        .collect();
    Ok(family_sum(&mu.grid(), &coeffs))
}

/// `A_S(φ) = Σ_{Q∈S} ⟨φ⟩_{1,Q} χ_Q`.
pub fn sparse_average<S: Scalar>(
    family: &SparseFamily,
    phi: &GridFunction<S>,
    mu: &Measure<S>,
) -> Result<GridFunction<S>> {
    mu.grid().check_same(&phi.grid())?;
    mu.grid().check_same(&family.grid())?;
    let t = AverageTable::build(phi, 1.0, mu)?;
    let coeffs = family.iter().map(|&q| (q, t.average(q))).collect();
    Ok(family_sum(&mu.grid(), &coeffs))
}

/// `A_{S,v}^j(φ)` with `A_{S,v}(φ) = A_S(φ)·v`; `j = 0` returns `φ`.
pub fn sparse_avg_iterate<S: Scalar>(
    family: &SparseFamily,
    phi: &GridFunction<S>,
    v: &GridFunction<S>,
    j: usize,
    mu: &Measure<S>,
) -> Result<GridFunction<S>> {
    if !v.is_nonnegative() {
        return Err(Error::Precondition("sparse_avg_iterate needs v ≥ 0".into()));
    }
    let mut cur = phi.clone();
    for _ in 0..j {
        cur = sparse_average(family, &cur, mu)?.mul(v)?;
    }
    Ok(cur)
}

/// Both sides of `(Σ λ_Q χ_Q)^p ≤ p Σ_Q λ_Q χ_Q (Σ_{Q'⊆Q} λ_{Q'} χ_{Q'})^(p−1)` per cell.
pub fn layered_power_sides<S: Scalar>(
    grid: &GridSpec,
    coeffs: &BTreeMap<DyadicCube, S>,
    p: f64,
) -> Result<(GridFunction<S>, GridFunction<S>)> {
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::Exponent(format!("layered power bound needs p ≥ 1, got {p}")));
    }
    if coeffs.values().any(|&v| v < S::zero()) {
        return Err(Error::Precondition("coefficients must be nonnegative".into()));
    }
    let ps = S::of(p);
    let pm1 = S::of(p - 1.0);
    let n = grid.cells();
    let mut lhs = vec![S::zero(); n];
    let mut rhs = vec![S::zero(); n];
    for cell in 0..n {
        let chain: Vec<S> =
            (0..=grid.level()).filter_map(|k| coeffs.get(&grid.cube_containing(cell, k)).copied()).collect();
        let mut tail = S::zero();
        let mut terms = Vec::with_capacity(chain.len());
        for &a in chain.iter().rev() {
            tail = tail + a;
            terms.push(if a == S::zero() { S::zero() } else { a * tail.powf(pm1) });
        }
        lhs[cell] = tail.powf(ps);
        rhs[cell] = ps * compensated_sum(terms);
    }
    Ok((GridFunction::new(*grid, lhs)?, GridFunction::new(*grid, rhs)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::avg;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(g: GridSpec, rng: &mut ChaCha8Rng) -> GridFunction<f64> {
        GridFunction::new(g, (0..g.cells()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn config_validation_names_constraints() {
        let cfg = ExponentConfig::new(0.25, vec![1.0, 1.0], vec![2.0, 2.0]);
        assert!((cfg.q - 4.0 / 3.0).abs() < 1e-15);
        assert!(cfg.validate().is_ok());
        let mut bad = cfg.clone();
        bad.q = 2.0;
        bad.t = vec![1, 0];
        let v = bad.violations();
        assert!(v.iter().any(|s| s.contains("1/q = Σ1/p_i − η")));
        assert!(v.iter().any(|s| s.contains("t ≤ k")));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn orderings() {
        let cfg = ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(4.0, 4.0 / 3.0);
        assert!(!cfg.precedes_strict());
        assert!(!cfg.precedes());
        assert!(cfg.precedes_star());
        let cfg = ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(8.0, 8.0 / 7.0);
        assert!(cfg.precedes_strict() && cfg.precedes() && cfg.precedes_star());
    }

    #[test]
    fn maximal_quarter_indicator_l2() {
        let g = GridSpec::new(2).unwrap();
        let mu = Measure::lebesgue(g);
        let f = GridFunction::<f64>::interval_indicator(g, 0.0, 0.25);
        let cfg = ExponentConfig::averaging(0.0, vec![1.0]);
        let mf = dyadic_maximal(&[f], &cfg, &mu).unwrap();
        assert_eq!(mf.values(), &[1.0, 0.5, 0.25, 0.25]);
    }

    #[test]
    fn maximal_constants_attained_at_root() {
        let g = GridSpec::new(6).unwrap();
        let mu = Measure::lebesgue(g);
        let fs = vec![GridFunction::constant(g, 2.0f64), GridFunction::constant(g, 0.5)];
        let cfg = ExponentConfig::averaging(0.5, vec![1.0, 3.0]);
        let mf = dyadic_maximal(&fs, &cfg, &mu).unwrap();
        assert!(mf.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn maximal_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for shift in [Shift::ZERO, Shift::THIRD] {
            let g = GridSpec::shifted(7, shift).unwrap();
            let w = random_fn(g, &mut rng).map(|v| v + 0.2);
            let mu = Measure::with_density(&w).unwrap();
            let fs = vec![random_fn(g, &mut rng), random_fn(g, &mut rng)];
            let cfg = ExponentConfig::averaging(0.5, vec![1.5, 2.0]);
            let mf = dyadic_maximal(&fs, &cfg, &mu).unwrap();
            for cell in 0..g.cells() {
                let mut best = 0.0f64;
                for cube in g.cubes() {
                    if !g.cube_cells(cube).any(|c| c == cell) {
                        continue;
                    }
                    // naive averages
                    let mass: f64 = g.cube_cells(cube).map(|c| mu.cell_mass(c)).sum();
                    let mut v = mass.powf(0.5);
                    for (f, r) in fs.iter().zip([1.5, 2.0]) {
                        let s: f64 = g.cube_cells(cube).map(|c| f.get(c).powf(r) * mu.cell_mass(c)).sum();
                        v *= (s / mass).powf(1.0 / r);
                    }
                    best = best.max(v);
                }
                assert!((mf.get(cell) - best).abs() <= 1e-12 * best.max(1.0));
            }
        }
    }

    #[test]
    fn maximal_homogeneity_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GridSpec::new(8).unwrap();
        let mu = Measure::lebesgue(g);
        let fs = vec![random_fn(g, &mut rng), random_fn(g, &mut rng)];
        let cfg = ExponentConfig::averaging(0.25, vec![1.0, 1.0]);
        let base = dyadic_maximal(&fs, &cfg, &mu).unwrap();
        let scaled = dyadic_maximal(&[fs[0].scale(4.0), fs[1].clone()], &cfg, &mu).unwrap();
        for (a, b) in base.values().iter().zip(scaled.values()) {
            assert_eq!(4.0 * a, *b);
        }
    }

    #[test]
    fn frac_integral_zero_and_symmetry() {
        let g = GridSpec::new(10).unwrap();
        let mu = Measure::lebesgue(g);
        let z = frac_integral(&[GridFunction::zeros(g)], 0.5, KernelSpec::default(), &mu).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let one = frac_integral(&[GridFunction::constant(g, 1.0f64)], 0.5, KernelSpec::default(), &mu).unwrap();
        let n = g.cells();
        for i in 0..n {
            assert!((one.get(i) - one.get(n - 1 - i)).abs() < 1e-12);
        }
    }

    #[test]
    fn frac_integral_matches_fine_quadrature() {
        // ∫ min(2|x−y|_T, 1)^{-1/2} dy = 2; the skipped own cell carries 2√h of it
        let fine = trapezoid_oracle(18);
        let cap = KernelSpec { diagonal: DiagonalPolicy::CapAtCellScale };
        for (level, spec) in [(12, cap), (14, KernelSpec::default())] {
            let g = GridSpec::new(level).unwrap();
            let mu = Measure::lebesgue(g);
            let v = frac_integral(&[GridFunction::constant(g, 1.0f64)], 0.5, spec, &mu).unwrap();
            let x = g.cells() / 2;
            assert!(((v.get(x) - fine) / fine).abs() < 1e-2, "L = {level}: {} vs {}", v.get(x), fine);
        }
    }

    // trapezoid on a finer grid with the singular endpoint integrated analytically
    fn trapezoid_oracle(level: u32) -> f64 {
        let n = 1usize << level;
        let h = 1.0 / n as f64;
        let k = |u: f64| (2.0 * u).powf(-0.5);
        let mut s = 2.0 * (2.0 * h).sqrt();
        for i in 1..n / 2 {
            let a = i as f64 * h;
            s += 2.0 * 0.5 * h * (k(a) + k(a + h));
        }
        s
    }

    #[test]
    fn frac_integral_weighted_reduces_to_lebesgue() {
        let g = GridSpec::new(7).unwrap();
        let mu = Measure::lebesgue(g);
        let mu_w = Measure::with_density(&GridFunction::constant(g, 1.0f64)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_fn(g, &mut rng);
        let a = frac_integral(&[f.clone()], 0.3, KernelSpec::default(), &mu).unwrap();
        let cap = KernelSpec { diagonal: DiagonalPolicy::CapAtCellScale };
        let b = frac_integral(&[f.clone()], 0.3, cap, &mu_w).unwrap();
        for i in 0..g.cells() {
            let own = (g.cell_width()).powf(0.3 - 1.0) * f.get(i) * g.cell_width();
            assert!((a.get(i) + own - b.get(i)).abs() < 1e-10 * b.get(i));
        }
    }

    #[test]
    fn frac_integral_bilinear_matches_direct() {
        let g = GridSpec::new(5).unwrap();
        let mu = Measure::lebesgue(g);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f1 = random_fn(g, &mut rng);
        let f2 = random_fn(g, &mut rng);
        let v = frac_integral(&[f1.clone(), f2.clone()], 0.7, KernelSpec::default(), &mu).unwrap();
        let n = g.cells();
        let h = g.cell_width();
        for x in 0..n {
            let mut s = 0.0;
            for y1 in 0..n {
                for y2 in 0..n {
                    let d1 = cell_distance(n, x, y1);
                    let d2 = cell_distance(n, x, y2);
                    if d1 == 0 || d2 == 0 {
                        continue;
                    }
                    let b = |d: usize| (2.0 * d as f64 * h).min(1.0);
                    s += (b(d1) + b(d2)).powf(0.7 - 2.0) * f1.get(y1) * f2.get(y2) * h * h;
                }
            }
            assert!((v.get(x) - s).abs() < 1e-10 * s);
        }
    }

    #[test]
    fn frac_integral_rejects_large_arity() {
        let g = GridSpec::new(4).unwrap();
        let mu = Measure::lebesgue(g);
        let fs = vec![GridFunction::constant(g, 1.0f64); 3];
        match frac_integral(&fs, 0.5, KernelSpec::default(), &mu) {
            Err(Error::Unsupported(msg)) => assert!(msg.contains("kernel evaluations")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sparse_operator_examples() {
        let g = GridSpec::new(10).unwrap();
        let mu = Measure::lebesgue(g);
        let one = GridFunction::constant(g, 1.0f64);
        let root = SparseFamily::from_cubes(g, [DyadicCube::ROOT], 1.0).unwrap();
        let cfg = ExponentConfig::averaging(0.0, vec![1.0]);
        let v = sparse_operator(&root, &[one.clone()], &cfg, &mu).unwrap();
        assert!(v.values().iter().all(|&x| x == 1.0));
        let chain = SparseFamily::left_chain(g, 6).unwrap();
        let cfg = ExponentConfig::averaging(1.0 - 1e-300, vec![1.0]);
        let mut cfg1 = cfg.clone();
        cfg1.eta = 1.0;
        let v = sparse_operator(&chain, &[one], &cfg1, &mu).unwrap();
        for cell in 0..g.cells() {
            let x = g.midpoint(cell);
            let j = ((-x.log2()).floor() as i32).min(6);
            let expect: f64 = (0..=j).map(|i| (-(i as f64)).exp2()).sum();
            assert!((v.get(cell) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn sparse_operator_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = GridSpec::new(8).unwrap();
        let mu = Measure::lebesgue(g);
        let fs = vec![random_fn(g, &mut rng), random_fn(g, &mut rng)];
        let cubes: Vec<DyadicCube> = (0..40)
            .map(|_| {
                let k = rng.gen_range(0..=8u32);
                DyadicCube::new(k, rng.gen_range(0..(1u32 << k)))
            })
            .collect();
        let fam = SparseFamily::from_cubes(g, cubes, 0.5).unwrap();
        let cfg = ExponentConfig::averaging(0.75, vec![1.0, 2.5]);
        let v = sparse_operator(&fam, &fs, &cfg, &mu).unwrap();
        let mut naive = vec![0.0; g.cells()];
        for &q in fam.iter() {
            let c = mu.mass(q).powf(0.75) * avg(&fs[0], 1.0, q, &mu).unwrap() * avg(&fs[1], 2.5, q, &mu).unwrap();
            for cell in g.cube_cells(q) {
                naive[cell] += c;
            }
        }
        for (a, b) in v.values().iter().zip(&naive) {
            assert!((a - b).abs() < 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn iterate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = GridSpec::new(8).unwrap();
        let mu = Measure::lebesgue(g);
        let phi = random_fn(g, &mut rng);
        let v = random_fn(g, &mut rng);
        let root = SparseFamily::from_cubes(g, [DyadicCube::ROOT], 1.0).unwrap();
        assert_eq!(sparse_avg_iterate(&root, &phi, &v, 0, &mu).unwrap(), phi);
        let once = sparse_avg_iterate(&root, &phi, &GridFunction::constant(g, 1.0), 1, &mu).unwrap();
        let m = crate::lattice::mean(&phi, DyadicCube::ROOT, &mu).unwrap();
        assert!(once.values().iter().all(|&x| (x - m).abs() < 1e-14));

        let chain = SparseFamily::left_chain(g, 6).unwrap();
        let two = sparse_avg_iterate(&chain, &phi, &v, 2, &mu).unwrap();
        // direct double loop
        let mut cur = phi.values().to_vec();
        for _ in 0..2 {
            let mut next = vec![0.0; g.cells()];
            for &q in chain.iter() {
                let cells: Vec<usize> = g.cube_cells(q).collect();
                let a: f64 = cells.iter().map(|&c| cur[c].abs()).sum::<f64>() / cells.len() as f64;
                for &c in &cells {
                    next[c] += a;
                }
            }
            cur = next.iter().zip(v.values()).map(|(a, b)| a * b).collect();
        }
        for (a, b) in two.values().iter().zip(&cur) {
            assert!((a - b).abs() < 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn layered_power_examples() {
        let g = GridSpec::new(4).unwrap();
        let mut coeffs = BTreeMap::new();
        coeffs.insert(DyadicCube::ROOT, 1.0f64);
        coeffs.insert(DyadicCube::new(1, 0), 2.0);
        let (l, r) = layered_power_sides(&g, &coeffs, 2.0).unwrap();
        // on [0,1/2): (1+2)^2 = 9 ≤ 2(1·3 + 2·2) = 14
        assert_eq!(l.get(0), 9.0);
        assert_eq!(r.get(0), 14.0);
        assert_eq!(l.get(15), 1.0);
        assert_eq!(r.get(15), 2.0);
        let (l, r) = layered_power_sides(&g, &coeffs, 1.0).unwrap();
        assert_eq!(l, r);
    }
}
