//! Sparse families: verification, stopping-time constructions and the
//! sparse-domination algorithm driven by empirical exceedance sets.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{form_a_with_t, FormInputs};
use crate::lattice::{cube_mean, AverageTable, DyadicCube, GridFunction, GridSpec, Measure, SparseFamily};
use crate::operators::{
    dyadic_maximal, frac_integral_at, fractional_maximal, sparse_operator, ExponentConfig, KernelSpec,
};
use crate::scalar::{compensated_sum, Scalar};

/// Arc `[start, start + len)` of the lattice order (rotated cell indices, mod `N`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeArc {
    pub start: usize,
    pub len: usize,
}

impl LatticeArc {
    pub fn of_cube(grid: &GridSpec, cube: DyadicCube) -> Self {
        LatticeArc { start: grid.cube_start(cube), len: grid.cube_len(cube) }
    }

    pub fn contains(&self, n: usize, rot: usize) -> bool {
        (rot + n - self.start) % n < self.len
    }

    /// Cell indices of the arc.
    pub fn cells<'a>(&self, grid: &'a GridSpec) -> impl Iterator<Item = usize> + 'a {
        let (start, len, n) = (self.start, self.len, grid.cells());
        (start..start + len).map(move |r| grid.cell_at(r % n))
    }
}

/// Concentric `β`-dilate of `cube` on the torus, in whole cells; `None` means the whole space.
pub fn dilate(grid: &GridSpec, cube: DyadicCube, beta: f64) -> Option<LatticeArc> {
    let n = grid.cells();
    let len = grid.cube_len(cube);
    if beta * cube.length() >= 1.0 {
        return None;
    }
    let ext = (((beta - 1.0) * len as f64) / 2.0).ceil().max(0.0) as usize;
    let total = len + 2 * ext;
    if total >= n {
        return None;
    }
    Some(LatticeArc { start: (grid.cube_start(cube) + n - ext) % n, len: total })
}

/// `f χ_A` (or `f` itself for `A = None`, the whole space).
pub fn restrict<S: Scalar>(f: &GridFunction<S>, arc: Option<LatticeArc>) -> GridFunction<S> {
    let Some(arc) = arc else { return f.clone() };
    let grid = f.grid();
    let n = grid.cells();
    let mut v = vec![S::zero(); n];
    for c in arc.cells(&grid) {
        v[c] = f.get(c);
    }
    GridFunction::new(grid, v).expect("restriction of a finite function")
}

/// An `m`-linear operator that can be evaluated at selected cells.
pub trait OperatorHandle<S: Scalar>: Sync {
    fn arity(&self) -> usize;

    /// `T(f⃗)` at `points` (cell indices). `support`, when given, promises that every
    /// input vanishes outside that arc.
    fn eval_at(&self, fs: &[GridFunction<S>], support: Option<LatticeArc>, points: &[usize]) -> Result<Vec<S>>;

    /// `T(f⃗ χ_{X∖A})` at `points`, given `full = T(f⃗)` at the same points.
    fn eval_excluding(
        &self,
        fs: &[GridFunction<S>],
        _full: &[S],
        excluded: LatticeArc,
        points: &[usize],
    ) -> Result<Vec<S>> {
        let masked: Vec<GridFunction<S>> = fs.iter().map(|f| exclude(f, excluded)).collect();
        self.eval_at(&masked, None, points)
    }
}

/// `f χ_{X∖A}`.
pub fn exclude<S: Scalar>(f: &GridFunction<S>, excluded: LatticeArc) -> GridFunction<S> {
    let grid = f.grid();
    let mut v = f.values().to_vec();
    for c in excluded.cells(&grid) {
        v[c] = S::zero();
    }
    GridFunction::new(grid, v).expect("masked input")
}

/// The discrete fractional integral `I_η` as an operator handle.
#[derive(Clone, Debug)]
pub struct FracIntegralOp<S> {
    pub eta: f64,
    pub m: usize,
    pub spec: KernelSpec,
    pub mu: Measure<S>,
}

impl<S: Scalar> OperatorHandle<S> for FracIntegralOp<S> {
    fn arity(&self) -> usize {
        self.m
    }

    fn eval_at(&self, fs: &[GridFunction<S>], support: Option<LatticeArc>, points: &[usize]) -> Result<Vec<S>> {
        frac_integral_at(fs, self.eta, self.spec, &self.mu, points, support.map(|a| (a.start, a.len)))
    }

    fn eval_excluding(
        &self,
        fs: &[GridFunction<S>],
        full: &[S],
        excluded: LatticeArc,
        points: &[usize],
    ) -> Result<Vec<S>> {
        if self.m != 1 {
            let masked: Vec<GridFunction<S>> = fs.iter().map(|f| exclude(f, excluded)).collect();
            return self.eval_at(&masked, None, points);
        }
        // linear: T(f χ_{X∖A}) = T(f) − T(f χ_A)
        let inside = frac_integral_at(fs, self.eta, self.spec, &self.mu, points, Some((excluded.start, excluded.len)))?;
        Ok(full.iter().zip(inside).map(|(&a, b)| a - b).collect())
    }
}

/// The dyadic fractional maximal operator `M_{η,r⃗}` as an operator handle.
#[derive(Clone, Debug)]
pub struct MaximalOp<S> {
    pub eta: f64,
    pub r: Vec<f64>,
    pub mu: Measure<S>,
}

impl<S: Scalar> OperatorHandle<S> for MaximalOp<S> {
    fn arity(&self) -> usize {
        self.r.len()
    }

    fn eval_at(&self, fs: &[GridFunction<S>], _support: Option<LatticeArc>, points: &[usize]) -> Result<Vec<S>> {
        let full = fractional_maximal(fs, self.eta, &self.r, &self.mu)?;
        Ok(points.iter().map(|&c| full.get(c)).collect())
    }
}

/// Outcome of [`verify_sparse`].
#[derive(Clone, Debug, PartialEq)]
pub struct SparseReport {
    /// `min_Q μ(E_Q)/μ(Q)` for the canonical witness; 1 for an empty family.
    pub delta_actual: f64,
    /// For each cell, the smallest family cube containing it (the `Q` whose `E_Q` owns it).
    pub witness: Vec<Option<DyadicCube>>,
}

impl SparseReport {
    pub fn is_sparse(&self, delta: f64) -> bool {
        self.delta_actual >= delta
    }
}

/// Sparseness with the canonical witness `E_Q = Q ∖ ∪{R ∈ S : R ⊊ Q}`.
pub fn verify_sparse<S: Scalar>(family: &SparseFamily, mu: &Measure<S>) -> Result<SparseReport> {
    let grid = mu.grid();
    grid.check_same(&family.grid())?;
    let masks = family.level_masks();
    let l = grid.level();
    let mut witness = vec![None; grid.cells()];
    let mut owned: std::collections::BTreeMap<DyadicCube, crate::scalar::CompensatedSum<S>> =
        family.iter().map(|&q| (q, crate::scalar::CompensatedSum::new())).collect();
    for rot in 0..grid.cells() {
        let owner = (0..=l).rev().find_map(|k| {
            let idx = rot >> (l - k);
            masks[k as usize][idx].then(|| DyadicCube::new(k, idx as u32))
        });
        if let Some(q) = owner {
            let cell = grid.cell_at(rot);
            witness[cell] = Some(q);
            owned.get_mut(&q).unwrap().add(mu.cell_mass(cell));
        }
    }
    let delta_actual = owned.iter().map(|(q, e)| (e.value() / mu.mass(*q)).as_f64()).fold(1.0f64, f64::min);
    Ok(SparseReport { delta_actual, witness })
}

/// Output of [`sparse_from_maximal`].
#[derive(Clone, Debug)]
pub struct StoppingFamily {
    pub family: SparseFamily,
    /// `max_x M(f⃗)(x) / A_S(f⃗)(x)` over cells where `M(f⃗) > 0`.
    pub c_stop: f64,
}

/// `a = 2^(Σ 1/r_j + η + 1)`.
pub fn default_stopping_ratio(cfg: &ExponentConfig) -> f64 {
    2f64.powf(cfg.r.iter().map(|r| 1.0 / r).sum::<f64>() + cfg.eta + 1.0)
}

/// Stopping family realising the dyadic maximal operator: `Q` is selected when
/// `λ_Q > a·λ_P` for its nearest selected ancestor `P`; the root is always selected.
pub fn sparse_from_maximal<S: Scalar>(
    fs: &[GridFunction<S>],
    cfg: &ExponentConfig,
    mu: &Measure<S>,
    a: f64,
) -> Result<StoppingFamily> {
    if !(a > 1.0) {
        return Err(Error::Precondition(format!("stopping ratio {a} must exceed 1")));
    }
    if fs.iter().any(|f| !f.is_nonnegative()) {
        return Err(Error::Precondition("sparse_from_maximal needs nonnegative inputs".into()));
    }
    let grid = mu.grid();
    let values = crate::operators::cube_values(fs, cfg.eta, &cfg.r, mu)?;
    let a_s = S::of(a);
    let mut family = SparseFamily::new(grid, 0.5)?;
    family.insert(DyadicCube::ROOT)?;
    let mut anchor = vec![values.get(DyadicCube::ROOT)];
    for k in 1..=grid.level() {
        let lv = values.level(k);
        let mut next = Vec::with_capacity(lv.len());
        for (i, &v) in lv.iter().enumerate() {
            let parent = anchor[i >> 1];
            if v > a_s * parent {
                family.insert(DyadicCube::new(k, i as u32))?;
                next.push(v);
            } else {
                next.push(parent);
            }
        }
        anchor = next;
    }
    let big_m = dyadic_maximal(fs, cfg, mu)?;
    let sparse = sparse_operator(&family, fs, cfg, mu)?;
    let c_stop = big_m
        .values()
        .iter()
        .zip(sparse.values())
        .filter(|(m, _)| **m > S::zero())
        .map(|(&m, &s)| (m / s).as_f64())
        .fold(0.0f64, f64::max);
    Ok(StoppingFamily { family, c_stop })
}

/// Output of [`augment_for_symbol`].
#[derive(Clone, Debug)]
pub struct Augmented {
    pub family: SparseFamily,
    /// `sup_{x, Q∋x} |b(x) − b_Q| / Σ_{R∈S̃, x∈R⊆Q} ⟨|b − b_R|⟩_{1,R}`.
    pub c_aug: f64,
}

fn mean_oscillation<S: Scalar>(b: &GridFunction<S>, center: S, cube: DyadicCube, mu: &Measure<S>) -> S {
    let grid = mu.grid();
    let s = compensated_sum(grid.cube_cells(cube).map(|c| (b.get(c) - center).abs() * mu.cell_mass(c)));
    s / mu.mass(cube)
}

/// Local mean-oscillation stopping inside every cube of `S`: maximal `R ⊊ Q` with
/// `⟨|b − b_Q|⟩_R > 2⟨|b − b_Q|⟩_Q` are added and the stopping restarts from each `R`.
pub fn augment_for_symbol<S: Scalar>(family: &SparseFamily, b: &GridFunction<S>, mu: &Measure<S>) -> Result<Augmented> {
    let grid = mu.grid();
    grid.check_same(&b.grid())?;
    grid.check_same(&family.grid())?;
    let mut out = family.clone();
    let mut stack: Vec<DyadicCube> = family.iter().copied().collect();
    while let Some(q) = stack.pop() {
        let bq = cube_mean(b, q, mu);
        let osc_q = mean_oscillation(b, bq, q, mu);
        if osc_q == S::zero() {
            continue;
        }
        let bar = S::of(2.0) * osc_q;
        let mut frontier: Vec<DyadicCube> = if q.level < grid.level() { q.children().to_vec() } else { Vec::new() };
        while let Some(r) = frontier.pop() {
            if mean_oscillation(b, bq, r, mu) > bar {
                if out.insert(r)? {
                    stack.push(r);
                }
            } else if r.level < grid.level() {
                frontier.extend(r.children());
            }
        }
    }
    // chains of family cubes above each cell, outermost first
    let osc: std::collections::BTreeMap<DyadicCube, (S, S)> = out
        .iter()
        .map(|&r| {
            let m = cube_mean(b, r, mu);
            (r, (m, mean_oscillation(b, m, r, mu)))
        })
        .collect();
    let l = grid.level();
    let c_aug = (0..grid.cells())
        .into_par_iter()
        .map(|cell| {
            let chain: Vec<(S, S)> = (0..=l).filter_map(|k| osc.get(&grid.cube_containing(cell, k)).copied()).collect();
            let mut tail = S::zero();
            let mut best = 0.0f64;
            for &(mean, o) in chain.iter().rev() {
                tail = tail + o;
                let num = (b.get(cell) - mean).abs();
                if num > S::zero() {
                    let r = if tail > S::zero() { (num / tail).as_f64() } else { f64::INFINITY };
                    best = best.max(r);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(Augmented { family: out, c_aug })
}

/// Parameters of the domination algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct DominationConfig {
    /// Dilation factor `β ≥ 1`.
    pub beta: f64,
    /// `c_1 ≥ 1` with `μ(βP) ≤ c_1 μ(P)`.
    pub c1: f64,
    /// Calderón–Zygmund height is `1/c_2`, `c_2 ≥ 2`.
    pub c2: f64,
    /// Generation cap; `None` means the lattice depth.
    pub max_depth: Option<u32>,
    /// Sampled pairs per cube for the oscillation.
    pub osc_pairs: usize,
    /// Evaluate every pair instead of sampling.
    pub exhaustive: bool,
    /// Oscillation exponent, `max_i r_i < s`.
    pub s: f64,
    pub seed: u64,
}

impl Default for DominationConfig {
    fn default() -> Self {
        DominationConfig {
            beta: 3.0,
            c1: 3.0,
            c2: 2.0,
            max_depth: None,
            osc_pairs: 64,
            exhaustive: false,
            s: 2.0,
            seed: 0,
        }
    }
}

impl DominationConfig {
    pub fn validate(&self, cfg: &ExponentConfig) -> Result<()> {
        let mut v = Vec::new();
        if !(self.beta >= 1.0) {
            v.push(format!("β ≥ 1 violated (β = {})", self.beta));
        }
        if !(self.c1 >= 1.0) {
            v.push(format!("c1 ≥ 1 violated (c1 = {})", self.c1));
        }
        if !(self.c2 >= 2.0) {
            v.push(format!("c2 ≥ 2 violated (c2 = {})", self.c2));
        }
        if self.osc_pairs == 0 {
            v.push("oscPairs ≥ 1 violated".into());
        }
        let rmax = cfg.r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(self.s > rmax) {
            v.push(format!("max_i r_i < s violated (s = {}, max r = {rmax})", self.s));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Precondition(v.join("; ")))
        }
    }

    /// `λ₀ = 1/(6|τ|(|k⃗|+1)c₁c₂)` with `|τ|` read as at least 1.
    pub fn lambda0(&self, cfg: &ExponentConfig) -> f64 {
        let tau = cfg.tau.len().max(1) as f64;
        let k: u32 = cfg.tau.iter().map(|&i| cfg.k[i]).sum();
        1.0 / (6.0 * tau * (k as f64 + 1.0) * self.c1 * self.c2)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cube_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ p))
}

fn cube_id(q: DyadicCube) -> u64 {
    ((q.level as u64) << 32) | q.index as u64
}

/// `osc_s` of `values` (indexed by position in `cells`) with cell masses `w`.
fn oscillation_of(values: &[f64], w: &[f64], s: f64) -> f64 {
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    for (i, &a) in values.iter().enumerate() {
        for (j, &b) in values.iter().enumerate().skip(i + 1) {
            acc += 2.0 * w[i] * w[j] * (a - b).abs().powf(s);
        }
    }
    (acc / (total * total)).powf(1.0 / s)
}

/// Per-cell sharp grand maximal values on `P`, for inputs vanishing outside `support`.
///
/// Cubes not contained in `P` contribute nothing there: their dilates contain the
/// dilate of `P`, which already holds the support.
fn sharp_on_cube<S: Scalar, T: OperatorHandle<S> + ?Sized>(
    op: &T,
    hs: &[GridFunction<S>],
    support: Option<LatticeArc>,
    p: DyadicCube,
    dom: &DominationConfig,
    mu: &Measure<S>,
    salt: u64,
) -> Result<Vec<f64>> {
    let grid = mu.grid();
    let n = grid.cells();
    let p_start = grid.cube_start(p);
    let p_len = grid.cube_len(p);
    let p_cells: Vec<usize> = (p_start..p_start + p_len).map(|r| grid.cell_at(r % n)).collect();
    let full: Vec<S> = op.eval_at(hs, support, &p_cells)?;
    let sub: Vec<DyadicCube> = (p.level..=grid.level())
        .flat_map(|k| {
            let w = 1u32 << (k - p.level);
            (p.index * w..(p.index + 1) * w).map(move |i| DyadicCube::new(k, i))
        })
        .collect();
    let values: Vec<(DyadicCube, f64)> = sub
        .par_iter()
        .map(|&q| -> Result<(DyadicCube, f64)> {
            let Some(arc) = dilate(&grid, q, dom.beta) else { return Ok((q, 0.0)) };
            let len = grid.cube_len(q);
            if len == 1 {
                return Ok((q, 0.0));
            }
            let off = (grid.cube_start(q) + n - p_start) % n;
            let masses: Vec<f64> = (0..len).map(|j| mu.cell_mass(p_cells[off + j]).as_f64()).collect();
            let exhaustive = dom.exhaustive || len * len <= dom.osc_pairs;
            let picks: Option<Vec<usize>> = if exhaustive {
                None
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cube_seed(dom.seed, &[salt, cube_id(q)]));
                let dist = WeightedIndex::new(&masses).map_err(|e| Error::Construction(e.to_string()))?;
                Some((0..2 * dom.osc_pairs).map(|_| dist.sample(&mut rng)).collect())
            };
            let uniq: Vec<usize> = match &picks {
                None => (0..len).collect(),
                Some(p) => {
                    let mut u = p.clone();
                    u.sort_unstable();
                    u.dedup();
                    u
                }
            };
            let points: Vec<usize> = uniq.iter().map(|&j| p_cells[off + j]).collect();
            let full_pts: Vec<S> = uniq.iter().map(|&j| full[off + j]).collect();
            let vals = op.eval_excluding(hs, &full_pts, arc, &points)?;
            let lookup = |j: usize| vals[uniq.binary_search(&j).unwrap()].as_f64();
            let osc = match &picks {
                None => {
                    let v: Vec<f64> = (0..len).map(lookup).collect();
                    oscillation_of(&v, &masses, dom.s)
                }
                Some(p) => {
                    // all distinct index pairs among the draws, not just consecutive ones
                    let v: Vec<f64> = p.iter().map(|&j| lookup(j)).collect();
                    let mut acc = 0.0;
                    for (i, a) in v.iter().enumerate() {
                        for b in &v[i + 1..] {
                            let d = (a - b).abs();
                            acc += if dom.s == 2.0 { d * d } else { d.powf(dom.s) };
                        }
                    }
                    let count = v.len() * (v.len() - 1) / 2;
                    (acc / count as f64).powf(1.0 / dom.s)
                }
            };
            Ok((q, osc))
        })
        .collect::<Result<_>>()?;
    // sup over the cubes Q ⊆ P containing each cell
    let mut out = vec![0.0f64; p_len];
    for (q, v) in values {
        let off = (grid.cube_start(q) + n - p_start) % n;
        for o in &mut out[off..off + grid.cube_len(q)] {
            *o = o.max(v);
        }
    }
    Ok(out)
}

/// `M^#_{T,s,β}(f⃗)` at every cell, oscillations sampled per [`DominationConfig`].
pub fn grand_maximal_sharp<S: Scalar, T: OperatorHandle<S> + ?Sized>(
    op: &T,
    fs: &[GridFunction<S>],
    cfg: &ExponentConfig,
    dom: &DominationConfig,
    mu: &Measure<S>,
) -> Result<GridFunction<S>> {
    dom.validate(cfg)?;
    if fs.len() != op.arity() {
        return Err(Error::Arity { expected: op.arity(), got: fs.len() });
    }
    let grid = mu.grid();
    let vals = sharp_on_cube(op, fs, None, DyadicCube::ROOT, dom, mu, 0)?;
    let mut out = vec![S::zero(); grid.cells()];
    for (rot, v) in vals.into_iter().enumerate() {
        out[grid.cell_at(rot)] = S::of(v);
    }
    GridFunction::new(grid, out)
}

/// Cells of `P` (in lattice order) whose value exceeds the smallest threshold leaving
/// at most `budget` mass above it.
fn exceedance(values: &[f64], masses: &[f64], budget: f64) -> Vec<bool> {
    let t = threshold(values, masses, budget);
    values.iter().map(|&v| v > t).collect()
}

/// `min{Φ ≥ 0 : mass{v > Φ} ≤ budget}` for nonnegative `values`; the minimum is
/// attained at one of the values.
fn threshold(values: &[f64], masses: &[f64], budget: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let limit = budget * (1.0 + 1e-12);
    let mut above = 0.0;
    let mut best = 0.0;
    let mut i = 0;
    while i < idx.len() && above <= limit {
        let v = values[idx[i]];
        best = v;
        while i < idx.len() && values[idx[i]] == v {
            above += masses[idx[i]];
            i += 1;
        }
    }
    best
}

/// Output of [`dominate`].
#[derive(Clone, Debug)]
pub struct Domination {
    pub family: SparseFamily,
    /// `lhs / rhs`, 0 when both vanish.
    pub c_emp: f64,
    /// `⟨|T^{b,k}_τ(f⃗)|, g⟩`.
    pub lhs: f64,
    /// `Σ_{t⃗ ≤ k⃗} 𝒜^{b,k,t}` over the family.
    pub rhs: f64,
    pub generations: u32,
    /// Largest `Σ_{P'} μ(P')/μ(P)` over recursion nodes (at most 1/2).
    pub worst_child_fraction: f64,
}

/// Every `t⃗` with `t_i ≤ k_i` on `τ` and `t_i = 0` elsewhere, in lexicographic order.
pub fn t_vectors(cfg: &ExponentConfig) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; cfg.m]];
    for &i in &cfg.tau {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..=cfg.k[i]).map(move |ti| {
                    let mut u = t.clone();
                    u[i] = ti;
                    u
                })
            })
            .collect();
    }
    out
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn twisted_inputs<S: Scalar>(
    fs: &[GridFunction<S>],
    bs: &[GridFunction<S>],
    centers: &[S],
    t: &[u32],
    support: Option<LatticeArc>,
) -> Vec<GridFunction<S>> {
    fs.iter()
        .enumerate()
        .map(|(i, f)| {
            let h = if t[i] == 0 {
                f.clone()
            } else {
                let c = centers[i];
                let e = t[i] as i32;
                f.zip_with(&bs[i], |a, b| a * (b - c).powi(e)).expect("same grid")
            };
            restrict(&h, support)
        })
        .collect()
}

fn arc_mean<S: Scalar>(b: &GridFunction<S>, arc: Option<LatticeArc>, mu: &Measure<S>) -> S {
    let grid = mu.grid();
    let arc = arc.unwrap_or(LatticeArc { start: 0, len: grid.cells() });
    let num = compensated_sum(arc.cells(&grid).map(|c| b.get(c) * mu.cell_mass(c)));
    let den = compensated_sum(arc.cells(&grid).map(|c| mu.cell_mass(c)));
    num / den
}

/// `M_r(h)` at the cells of `P` for `h` vanishing outside `support ⊇ P`.
fn local_maximal<S: Scalar>(h: &GridFunction<S>, r: f64, p: DyadicCube, mu: &Measure<S>) -> Result<Vec<f64>> {
    let grid = mu.grid();
    let n = grid.cells();
    let table = AverageTable::build(h, r, mu)?;
    let start = grid.cube_start(p);
    let len = grid.cube_len(p);
    let mut above = 0.0f64;
    let mut q = p;
    while let Some(parent) = q.parent() {
        above = above.max(table.average(parent).as_f64());
        q = parent;
    }
    let mut out = vec![above.max(table.average(p).as_f64()); len];
    for k in p.level + 1..=grid.level() {
        let w = 1u32 << (k - p.level);
        let cl = grid.cells() >> k;
        for i in p.index * w..(p.index + 1) * w {
            let v = table.average(DyadicCube::new(k, i)).as_f64();
            let off = (grid.cube_start(DyadicCube::new(k, i)) + n - start) % n;
            for o in &mut out[off..off + cl] {
                *o = o.max(v);
            }
        }
    }
    Ok(out)
}

/// Calderón–Zygmund cubes of `χ_Ω` inside `P` at height `1/c2`: maximal `R ⊆ P` with
/// `μ(R ∩ Ω) ≥ μ(R)/c2`.
fn cz_cubes<S: Scalar>(omega: &[bool], p: DyadicCube, c2: f64, mu: &Measure<S>) -> Vec<DyadicCube> {
    let grid = mu.grid();
    let n = grid.cells();
    let start = grid.cube_start(p);
    let masses: Vec<f64> = (0..omega.len()).map(|j| mu.cell_mass(grid.cell_at((start + j) % n)).as_f64()).collect();
    let mut out = Vec::new();
    let mut stack = vec![p];
    while let Some(r) = stack.pop() {
        let off = (grid.cube_start(r) + n - start) % n;
        let len = grid.cube_len(r);
        let hit: f64 = (off..off + len).filter(|&j| omega[j]).map(|j| masses[j]).sum();
        if hit == 0.0 {
            continue;
        }
        let total: f64 = masses[off..off + len].iter().sum();
        if r != p && hit >= total / c2 {
            out.push(r);
        } else if r.level < grid.level() {
            let [a, b] = r.children();
            stack.push(b);
            stack.push(a);
        }
    }
    out.sort();
    out
}

/// Sparse domination of `⟨|T^{b,k}_τ(f⃗)|, g⟩` by `Σ_{t⃗} 𝒜^{b,k,t}` over a constructed
/// `1/2`-sparse family, with exceedance sets taken at empirical quantiles.
pub fn dominate<S: Scalar, T: OperatorHandle<S> + ?Sized>(
    op: &T,
    fs: &[GridFunction<S>],
    g: &GridFunction<S>,
    bs: &[GridFunction<S>],
    cfg: &ExponentConfig,
    dom: &DominationConfig,
    mu: &Measure<S>,
) -> Result<Domination> {
    dom.validate(cfg)?;
    let m = cfg.m;
    if fs.len() != m || bs.len() != m || op.arity() != m {
        return Err(Error::Arity { expected: m, got: fs.len() });
    }
    if !g.is_nonnegative() {
        return Err(Error::Precondition("dominate needs g ≥ 0".into()));
    }
    let grid = mu.grid();
    let n = grid.cells();
    let all: Vec<usize> = (0..n).collect();
    let ts = t_vectors(cfg);

    // lhs through the binomial expansion of ∏(b_i(x) − b_i(y_i))^{k_i} around c_i = mean b_i
    let centers: Vec<S> = bs.iter().map(|b| arc_mean(b, None, mu)).collect();
    let mut total = vec![S::zero(); n];
    for t in &ts {
        let hs = twisted_inputs(fs, bs, &centers, t, None);
        let tv = op.eval_at(&hs, None, &all)?;
        for x in 0..n {
            let mut coeff = S::one();
            for &i in &cfg.tau {
                let (k, ti) = (cfg.k[i], t[i]);
                let sign = if ti % 2 == 1 { -1.0 } else { 1.0 };
                coeff = coeff * S::of(sign * binomial(k, ti)) * (bs[i].get(x) - centers[i]).powi((k - ti) as i32);
            }
            total[x] = total[x] + coeff * tv[x];
        }
    }
    let lhs = compensated_sum((0..n).map(|x| total[x].abs() * g.get(x) * mu.cell_mass(x))).as_f64();

    let lambda0 = dom.lambda0(cfg);
    let max_depth = dom.max_depth.unwrap_or(grid.level());
    let mut family = SparseFamily::new(grid, 0.5)?;
    family.insert(DyadicCube::ROOT)?;
    let mut current = vec![DyadicCube::ROOT];
    let mut generations = 0;
    let mut worst = 0.0f64;
    while !current.is_empty() && generations < max_depth {
        let next: Vec<(Vec<DyadicCube>, f64)> = current
            .par_iter()
            .map(|&p| -> Result<(Vec<DyadicCube>, f64)> {
                let support = dilate(&grid, p, dom.beta);
                let start = grid.cube_start(p);
                let len = grid.cube_len(p);
                let masses: Vec<f64> = (0..len).map(|j| mu.cell_mass(grid.cell_at((start + j) % n)).as_f64()).collect();
                let mass_p: f64 = masses.iter().sum();
                let p_cells: Vec<usize> = (0..len).map(|j| grid.cell_at((start + j) % n)).collect();
                let centers_p: Vec<S> = bs.iter().map(|b| arc_mean(b, support, mu)).collect();

                let mut quantities: Vec<Vec<f64>> = Vec::new();
                let mut seen_slots: Vec<(usize, u32)> = Vec::new();
                for (ti, t) in ts.iter().enumerate() {
                    let hs = twisted_inputs(fs, bs, &centers_p, t, support);
                    let tv = op.eval_at(&hs, support, &p_cells)?;
                    quantities.push(tv.iter().map(|v| v.abs().as_f64()).collect());
                    let salt = cube_seed(dom.seed, &[cube_id(p), ti as u64]);
                    quantities.push(sharp_on_cube(op, &hs, support, p, dom, mu, salt)?);
                    for i in 0..m {
                        if !seen_slots.contains(&(i, t[i])) {
                            seen_slots.push((i, t[i]));
                            quantities.push(local_maximal(&hs[i], cfg.r[i], p, mu)?);
                        }
                    }
                }
                let lam = lambda0.min(1.0 / (2.0 * dom.c2 * quantities.len() as f64));
                let mut omega = vec![false; len];
                for q in &quantities {
                    for (o, e) in omega.iter_mut().zip(exceedance(q, &masses, lam * mass_p)) {
                        *o |= e;
                    }
                }
                let kids = cz_cubes(&omega, p, dom.c2, mu);
                let kid_mass: f64 = kids.iter().map(|&k| mu.mass(k).as_f64()).sum();
                let frac = kid_mass / mass_p;
                if frac > 0.5 + 1e-12 {
                    return Err(Error::Construction(format!("children of {p:?} carry {frac} of its measure (> 1/2)")));
                }
                Ok((kids, frac))
            })
            .collect::<Result<_>>()?;
        let mut upcoming = Vec::new();
        for (kids, frac) in next {
            worst = worst.max(frac);
            for k in kids {
                family.insert(k)?;
                upcoming.push(k);
            }
        }
        upcoming.sort();
        current = upcoming;
        generations += 1;
    }

    let inp = FormInputs { f: fs, g, b: bs, cfg, family: &family, mu };
    let rhs =
        compensated_sum(ts.iter().map(|t| form_a_with_t(&inp, t).map(|v| v.as_f64())).collect::<Result<Vec<_>>>()?);
    let c_emp = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        return Err(Error::Construction(format!("rhs vanished with lhs = {lhs}")));
    };
    Ok(Domination { family, c_emp, lhs, rhs, generations, worst_child_fraction: worst })
}

/// Empirical `Φ(λ)` of Definition-type locally weak estimates on one cube.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakTypeModulus {
    pub samples: Vec<(f64, f64)>,
}

/// For each `λ`, the smallest `Φ` with `μ{x ∈ Q : |G(f⃗χ_Q)(x)| > Φ μ(Q)^η ∏ avg(f_j, r_j, Q)} ≤ λ μ(Q)`.
pub fn weak_modulus<S: Scalar, T: OperatorHandle<S> + ?Sized>(
    op: &T,
    cfg: &ExponentConfig,
    q: DyadicCube,
    fs: &[GridFunction<S>],
    lambdas: &[f64],
    mu: &Measure<S>,
) -> Result<WeakTypeModulus> {
    let grid = mu.grid();
    grid.check_cube(q)?;
    if fs.len() != op.arity() || cfg.r.len() != fs.len() {
        return Err(Error::Arity { expected: op.arity(), got: fs.len() });
    }
    if let Some(l) = lambdas.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::Precondition(format!("λ = {l} outside (0, 1)")));
    }
    let arc = LatticeArc::of_cube(&grid, q);
    let restricted: Vec<GridFunction<S>> = fs.iter().map(|f| restrict(f, Some(arc))).collect();
    let cells: Vec<usize> = arc.cells(&grid).collect();
    let vals = op.eval_at(&restricted, Some(arc), &cells)?;
    let mut norm = mu.mass(q).as_f64().powf(cfg.eta);
    for (f, &r) in restricted.iter().zip(&cfg.r) {
        norm *= crate::lattice::avg(f, r, q, mu)?.as_f64();
    }
    let masses: Vec<f64> = cells.iter().map(|&c| mu.cell_mass(c).as_f64()).collect();
    let ratios: Vec<f64> = vals.iter().map(|v| v.abs().as_f64()).collect();
    let mass_q = mu.mass(q).as_f64();
    let mut samples = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let t = threshold(&ratios, &masses, l * mass_q);
        let phi = if norm > 0.0 {
            t / norm
        } else if t == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        samples.push((l, phi));
    }
    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if sorted.windows(2).any(|w| w[1].1 > w[0].1) {
        return Err(Error::Inconsistent("weak modulus increased in λ".into()));
    }
    Ok(WeakTypeModulus { samples })
}
