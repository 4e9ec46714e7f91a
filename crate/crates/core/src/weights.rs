//! Weight characteristics: `A_p`, the multilinear fractional class, BMO norms,
//! Bloom-type derived weights and the composite constants built from them.
//!
//! Every supremum is an exhaustive scan over all cubes of the lattice. Weight
//! averages are taken with respect to Lebesgue measure on the grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{form_a, FormInputs};
use crate::lattice::{cube_mean, lp_norm, pow_abs, DyadicCube, GridFunction, GridSpec, Measure, Pyramid};
use crate::operators::{conjugate, ExponentConfig};
use crate::scalar::{compensated_sum, Scalar};

/// Relative tolerance for the agreement of the two multiweight evaluations.
pub const MULTIWEIGHT_TOL: f64 = 1e-10;

/// Weights `ω_1..ω_m` with their product `ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTuple<S> {
    components: Vec<GridFunction<S>>,
    product: GridFunction<S>,
}

impl<S: Scalar> WeightTuple<S> {
    pub fn new(components: Vec<GridFunction<S>>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::Precondition("empty weight tuple".into()))?;
        let grid = first.grid();
        for w in &components {
            grid.check_same(&w.grid())?;
            check_positive(w, "weight")?;
        }
        let mut product = first.clone();
        for w in &components[1..] {
            product = product.mul(w)?;
        }
        check_positive(&product, "weight product")?;
        Ok(WeightTuple { components, product })
    }

    /// `m` copies of the constant weight 1.
    pub fn ones(grid: GridSpec, m: usize) -> Result<Self> {
        Self::new(vec![GridFunction::constant(grid, S::one()); m])
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn grid(&self) -> GridSpec {
        self.product.grid()
    }

    pub fn components(&self) -> &[GridFunction<S>] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &GridFunction<S> {
        &self.components[j]
    }

    pub fn product(&self) -> &GridFunction<S> {
        &self.product
    }

    /// `(ω_1, .., ω_m, ω^-1)`.
    pub fn extended(&self) -> Vec<GridFunction<S>> {
        let mut v = self.components.clone();
        v.push(self.product.map(|x| x.recip()));
        v
    }
}

fn check_positive<S: Scalar>(w: &GridFunction<S>, what: &str) -> Result<()> {
    if w.values().iter().all(|&x| x > S::zero() && x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{what} must be positive and finite")))
    }
}

/// Pointwise `w^e`, failing on overflow.
fn power<S: Scalar>(w: &GridFunction<S>, e: f64) -> Result<GridFunction<S>> {
    if e == 1.0 {
        return Ok(w.clone());
    }
    let es = S::of(e);
    w.try_map(|x| x.powf(es)).map_err(|_| Error::Precondition(format!("weight power {e} overflows")))
}

/// Lebesgue power means `⟨w⟩_{ρ,Q}` over every cube; `ρ = ∞` gives the max.
pub fn power_means<S: Scalar>(w: &GridFunction<S>, rho: f64) -> Result<Pyramid<S>> {
    let grid = w.grid();
    if rho.is_infinite() {
        let a: Vec<S> = w.values().iter().map(|v| v.abs()).collect();
        return Ok(Pyramid::maxima(&grid, &a));
    }
    if !(rho > 0.0) {
        return Err(Error::Exponent(format!("power mean index {rho} must be positive")));
    }
    let rs = S::of(rho);
    let a: Vec<S> = w.values().iter().map(|&v| pow_abs(v, rs)).collect();
    let sums = Pyramid::sums(&grid, &a);
    let inv = S::of(1.0 / rho);
    let levels = (0..=grid.level())
        .map(|k| {
            let count = S::of((grid.cells() >> k) as f64);
            sums.level(k)
                .iter()
                .map(|&s| {
                    let mean = s / count;
                    if rho == 1.0 {
                        mean
                    } else {
                        mean.powf(inv)
                    }
                })
                .collect()
        })
        .collect();
    Pyramid::from_levels(levels)
}

/// Largest entry of a per-cube table with the first maximising cube in lattice order.
pub fn pyramid_sup<S: Scalar>(values: &Pyramid<S>) -> (S, DyadicCube) {
    let mut best = (S::neg_infinity(), DyadicCube::ROOT);
    for k in 0..=values.depth() {
        for (i, &v) in values.level(k).iter().enumerate() {
            if v > best.0 || v.is_nan() {
                best = (v, DyadicCube::new(k, i as u32));
            }
        }
    }
    best
}

/// `1/(1/a − 1/b)`, read as `∞` when the difference vanishes.
pub fn dual_index(a: f64, b: f64) -> f64 {
    let d = 1.0 / a - 1.0 / b;
    if d.abs() <= 1e-14 * (1.0 / a).abs().max(1.0 / b.abs()) {
        f64::INFINITY
    } else {
        1.0 / d
    }
}

/// A weight characteristic together with the cube attaining it.
///
/// `formal` marks values of `A_p` with `p ∉ (1, ∞)`, where the display formula is
/// applied as written and carries no class meaning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightConstant<S> {
    pub value: S,
    pub formal: bool,
    pub argmax: DyadicCube,
}

/// `[w]_{A_p} = sup_Q ⟨w⟩_{1,Q} ⟨w^{1/(1−p)}⟩_{1,Q}^{p−1}`.
pub fn ap_constant<S: Scalar>(w: &GridFunction<S>, p: f64) -> Result<WeightConstant<S>> {
    if p == 0.0 || p == 1.0 || !p.is_finite() {
        return Err(Error::Exponent(format!("A_p index {p} not allowed")));
    }
    check_positive(w, "A_p weight")?;
    let first = power_means(w, 1.0)?;
    let dual = power_means(&power(w, 1.0 / (1.0 - p))?, 1.0)?;
    let ps = S::of(p - 1.0);
    let levels = (0..=first.depth())
        .map(|k| first.level(k).iter().zip(dual.level(k)).map(|(&a, &b)| a * b.powf(ps)).collect())
        .collect();
    let (value, argmax) = pyramid_sup(&Pyramid::from_levels(levels)?);
    let formal = !(p > 1.0);
    if !formal && value.as_f64() < 1.0 - 1e-12 {
        return Err(Error::Inconsistent(format!("[w]_A_{p} = {value} < 1")));
    }
    Ok(WeightConstant { value, formal, argmax })
}

/// Both evaluations of the multiweight characteristic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiweightReport<S> {
    /// `sup_Q ∏_j ⟨ω_j^-1⟩_{1/(1/r_j−1/p_j),Q} · ⟨ω⟩_{1/(1/q−1/s),Q}`.
    pub value: S,
    /// The same supremum with `ω_{m+1} = ω^-1`, `r_{m+1} = s'`, `p_{m+1} = q'`.
    pub extended: S,
    pub argmax: DyadicCube,
}

fn check_multiweight<S: Scalar>(w: &WeightTuple<S>, cfg: &ExponentConfig) -> Result<()> {
    if w.m() != cfg.m || cfg.r.len() != cfg.m || cfg.p.len() != cfg.m {
        return Err(Error::Arity { expected: cfg.m, got: w.m() });
    }
    if !cfg.precedes_star() {
        return Err(Error::Precondition(format!(
            "(r, s) ⪯* (p, q) violated: r = {:?}, p = {:?}, q = {}, s = {}",
            cfg.r, cfg.p, cfg.q, cfg.s
        )));
    }
    Ok(())
}

/// Per-cube factors `⟨ω_j^-1⟩_{ρ_j,Q}` of the extended `(m+1)`-tuple.
fn extended_factors<S: Scalar>(w: &WeightTuple<S>, cfg: &ExponentConfig) -> Result<Vec<Pyramid<S>>> {
    let q_prime = conjugate(cfg.q);
    let ext = w.extended();
    let mut out = Vec::with_capacity(cfg.m + 1);
    for (j, wj) in ext.iter().enumerate() {
        let (r, p) = if j < cfg.m { (cfg.r[j], cfg.p[j]) } else { (cfg.s_prime, q_prime) };
        if r > p * (1.0 + 1e-14) {
            return Err(Error::Precondition(format!("slot {} has r = {r} > p = {p}", j + 1)));
        }
        out.push(power_means(&wj.map(|x| x.recip()), dual_index(r, p))?);
    }
    Ok(out)
}

fn product_levels<S: Scalar>(factors: &[Pyramid<S>]) -> Result<Pyramid<S>> {
    let levels = (0..=factors[0].depth())
        .map(|k| {
            let mut v = factors[0].level(k).to_vec();
            for f in &factors[1..] {
                for (a, &b) in v.iter_mut().zip(f.level(k)) {
                    *a = *a * b;
                }
            }
            v
        })
        .collect();
    Pyramid::from_levels(levels)
}

/// Per-cube products of Definition form `∏_j ⟨ω_j^-1⟩_{ρ_j,Q} ⟨ω⟩_{σ,Q}`.
pub fn multiweight_per_cube<S: Scalar>(w: &WeightTuple<S>, cfg: &ExponentConfig) -> Result<Pyramid<S>> {
    check_multiweight(w, cfg)?;
    let mut factors = Vec::with_capacity(cfg.m + 1);
    for j in 0..cfg.m {
        factors.push(power_means(&w.component(j).map(|x| x.recip()), dual_index(cfg.r[j], cfg.p[j]))?);
    }
    factors.push(power_means(w.product(), dual_index(cfg.q, cfg.s))?);
    product_levels(&factors)
}

/// Per-cube products of the `(m+1)`-form.
pub fn multiweight_per_cube_extended<S: Scalar>(w: &WeightTuple<S>, cfg: &ExponentConfig) -> Result<Pyramid<S>> {
    check_multiweight(w, cfg)?;
    product_levels(&extended_factors(w, cfg)?)
}

/// `[ω⃗]_{(p⃗,q),(r⃗,s)}`, cross-checked against its `(m+1)`-form.
pub fn multiweight_constant<S: Scalar>(w: &WeightTuple<S>, cfg: &ExponentConfig) -> Result<MultiweightReport<S>> {
    let (value, argmax) = pyramid_sup(&multiweight_per_cube(w, cfg)?);
    let (extended, _) = pyramid_sup(&multiweight_per_cube_extended(w, cfg)?);
    let (a, b) = (value.as_f64(), extended.as_f64());
    if !(a == b || (a - b).abs() <= MULTIWEIGHT_TOL * a.abs().max(b.abs())) {
        return Err(Error::Inconsistent(format!(
            "multiweight constant {a} differs from its (m+1)-form {b} (is s' the conjugate of s?)"
        )));
    }
    Ok(MultiweightReport { value, extended, argmax })
}

/// `Θ = max{p_i/(p_i − r_i), q'/(q' − s')}`.
pub fn theta_exponent(cfg: &ExponentConfig) -> Result<f64> {
    let q_prime = conjugate(cfg.q);
    if !(cfg.s_prime < q_prime) {
        return Err(Error::Exponent(format!("Θ needs s' < q' (s' = {}, q' = {q_prime})", cfg.s_prime)));
    }
    let primal = primal_theta_exponent(cfg)?;
    Ok(primal.max(q_prime / (q_prime - cfg.s_prime)))
}

/// `max_i p_i/(p_i − r_i)` alone.
pub fn primal_theta_exponent(cfg: &ExponentConfig) -> Result<f64> {
    let mut best = 1.0f64;
    for (i, (&r, &p)) in cfg.r.iter().zip(&cfg.p).enumerate() {
        if !(r < p) {
            return Err(Error::Exponent(format!("Θ needs r_{0} < p_{0} (r = {r}, p = {p})", i + 1)));
        }
        best = best.max(p / (p - r));
    }
    Ok(best)
}

/// Max over all cubes of a per-cube value, in parallel with a deterministic tie-break.
fn cube_scan<S, F>(grid: &GridSpec, f: F) -> Option<(S, DyadicCube)>
where
    S: Scalar,
    F: Fn(DyadicCube) -> Option<S> + Sync,
{
    let cubes: Vec<DyadicCube> = grid.cubes().collect();
    cubes.par_iter().filter_map(|&c| f(c).map(|v| (v, c))).reduce_with(|a, b| {
        if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    })
}

fn oscillation<S: Scalar>(b: &GridFunction<S>, cube: DyadicCube, mu: &Measure<S>, p: S, weight: Option<&[S]>) -> S {
    let grid = mu.grid();
    let m = cube_mean(b, cube, mu);
    let masses = mu.cell_masses();
    let vals = b.values();
    compensated_sum(grid.cube_cells(cube).map(|c| {
        let d = pow_abs(vals[c] - m, p) * masses[c];
        match weight {
            Some(w) => d * w[c],
            None => d,
        }
    }))
}

/// `sup_Q avg(|b − b_Q|, p, Q)`, or `sup_Q ν(Q)^-1 ∫_Q |b − b_Q| dμ` when `ν` is given.
pub fn bmo_norm<S: Scalar>(b: &GridFunction<S>, p: f64, nu: Option<&GridFunction<S>>, mu: &Measure<S>) -> Result<S> {
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::Exponent(format!("BMO exponent {p} must be in [1, ∞)")));
    }
    let grid = mu.grid();
    grid.check_same(&b.grid())?;
    let ps = S::of(p);
    let inv = S::of(1.0 / p);
    let best = match nu {
        None => cube_scan(&grid, |q| {
            let v = oscillation(b, q, mu, ps, None) / mu.mass(q);
            Some(if p == 1.0 { v } else { v.powf(inv) })
        }),
        Some(nu) => {
            if p != 1.0 {
                return Err(Error::Precondition(format!("weighted BMO is defined for p = 1 only (got {p})")));
            }
            grid.check_same(&nu.grid())?;
            check_positive(nu, "BMO weight")?;
            let nu_cells: Vec<S> = nu.values().iter().zip(mu.cell_masses()).map(|(&a, &m)| a * m).collect();
            let nu_mass = Pyramid::sums(&grid, &nu_cells);
            cube_scan(&grid, |q| Some(oscillation(b, q, mu, S::one(), None) / nu_mass.get(q)))
        }
    };
    Ok(best.map(|x| x.0).unwrap_or(S::zero()))
}

/// Outcome of [`john_nirenberg_ratio`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JohnNirenbergReport<S> {
    pub ratio: S,
    pub argmax: Option<DyadicCube>,
    /// Set when `b` is constant; the ratio is then defined as 0.
    pub constant_symbol: bool,
}

/// `sup_Q ∫_Q w|b − b_Q|^s dμ / (w(Q) ‖b‖_BMO^s)` over cubes with `w(Q) > 0`.
pub fn john_nirenberg_ratio<S: Scalar>(
    b: &GridFunction<S>,
    w: &GridFunction<S>,
    s: f64,
    mu: &Measure<S>,
) -> Result<JohnNirenbergReport<S>> {
    if !(s > 0.0) || s.is_infinite() {
        return Err(Error::Exponent(format!("oscillation exponent {s} must be finite and positive")));
    }
    let grid = mu.grid();
    grid.check_same(&w.grid())?;
    if !w.is_nonnegative() {
        return Err(Error::Precondition("John–Nirenberg weight must be nonnegative".into()));
    }
    let norm = bmo_norm(b, 1.0, None, mu)?;
    if norm == S::zero() {
        log::warn!("john_nirenberg_ratio: constant symbol, ratio set to 0");
        return Ok(JohnNirenbergReport { ratio: S::zero(), argmax: None, constant_symbol: true });
    }
    let ss = S::of(s);
    let w_cells: Vec<S> = w.values().iter().zip(mu.cell_masses()).map(|(&a, &m)| a * m).collect();
    let w_mass = Pyramid::sums(&grid, &w_cells);
    let denom_scale = norm.powf(ss);
    let best = cube_scan(&grid, |q| {
        let wq = w_mass.get(q);
        (wq > S::zero()).then(|| oscillation(b, q, mu, ss, Some(w.values())) / (wq * denom_scale))
    });
    Ok(JohnNirenbergReport {
        ratio: best.map(|x| x.0).unwrap_or(S::zero()),
        argmax: best.map(|x| x.1),
        constant_symbol: false,
    })
}

/// A composite constant and whether any `A_p` inside it was evaluated formally.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositeValue<S> {
    pub value: S,
    pub formal: bool,
}

/// The composite Bloom constant `𝒞_{ω1,ω2,ω3}(x1..x5)` with its `γ`:
///
/// `([ω1^x3]^{(x1−2)/2} [ω2^x4 ω3^x5]^{x1/2})^M [ω2]^M [ω2^x3 ω3^{−|x2|}]^{(2−γ)M}`,
/// all characteristics at index `x2` and `M = max(1, 1/(x2 − 1))`.
pub fn composite_constant<S: Scalar>(
    w1: &GridFunction<S>,
    w2: &GridFunction<S>,
    w3: &GridFunction<S>,
    x: [f64; 5],
    gamma: f64,
) -> Result<CompositeValue<S>> {
    let [x1, x2, x3, x4, x5] = x;
    if x2 == 1.0 {
        return Err(Error::Exponent("composite constant with x2 = 1 has a zero denominator".into()));
    }
    let big_m = (1.0 / (x2 - 1.0)).max(1.0);
    let a1 = ap_constant(&power(w1, x3)?, x2)?;
    let a2 = ap_constant(&power(w2, x4)?.mul(&power(w3, x5)?)?, x2)?;
    let a3 = ap_constant(w2, x2)?;
    let a4 = ap_constant(&power(w2, x3)?.mul(&power(w3, -x2.abs())?)?, x2)?;
    let v = a1.value.as_f64().powf((x1 - 2.0) / 2.0) * a2.value.as_f64().powf(x1 / 2.0);
    let value = v.powf(big_m) * a3.value.as_f64().powf(big_m) * a4.value.as_f64().powf((2.0 - gamma) * big_m);
    Ok(CompositeValue { value: S::of(value), formal: a1.formal || a2.formal || a3.formal || a4.formal })
}

/// Which Bloom bookkeeping to follow for the slots in `τ \ τ'`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BloomVariant {
    /// One derived weight `ν_0` shared by every slot of `τ \ τ'`.
    Maximal,
    /// A derived weight for the first slot of `τ \ τ'` only, via the doubled dual exponent.
    Holder,
}

/// Derived weight data of one slot `k ∈ τ'`.
#[derive(Clone, Debug, PartialEq)]
pub struct BloomSlot<S> {
    pub slot: usize,
    /// `⌊k_k r_k⌋`.
    pub a: u32,
    /// `k_k r_k − (a − 1)`.
    pub gamma: f64,
    /// `(u_k/ω_k)^{−r_k/(a + γ_k − 1)}`.
    pub nu: GridFunction<S>,
    /// `𝒞_{u_k,ω_k,ν_k}(a, p_k/r_k, p_k, p_k, −γ_k p_k/r_k)^{1/r_k}`.
    pub composite: CompositeValue<S>,
}

/// Output of [`bloom_derive`].
#[derive(Clone, Debug, PartialEq)]
pub struct BloomReport<S> {
    pub variant: BloomVariant,
    pub slots: Vec<BloomSlot<S>>,
    /// `⌊s' Σ_{ℓ∈τ\τ'} k_ℓ⌋` (maximal) or `⌊2 k_{i0} s'⌋` (holder).
    pub big_l: u32,
    pub gamma_outer: f64,
    /// `i0` for the holder variant.
    pub outer_slot: Option<usize>,
    /// `ν_0` (maximal) or `ν_{i0}` (holder).
    pub nu_outer: GridFunction<S>,
    /// The dual-side composite constant raised to `1/s'`.
    pub outer_composite: CompositeValue<S>,
}

impl<S: Scalar> BloomReport<S> {
    /// Product of every composite constant in the report.
    pub fn composite_product(&self) -> f64 {
        self.slots.iter().map(|s| s.composite.value.as_f64()).product::<f64>() * self.outer_composite.value.as_f64()
    }
}

/// `(⌊x⌋, x − (⌊x⌋ − 1))`.
pub fn floor_split(x: f64) -> (u32, f64) {
    let a = x.floor();
    (a as u32, x - (a - 1.0))
}

/// Derived Bloom weights and composite constants for target weights `ω⃗` and source weights `u⃗`.
pub fn bloom_derive<S: Scalar>(
    cfg: &ExponentConfig,
    u: &WeightTuple<S>,
    omega: &WeightTuple<S>,
    variant: BloomVariant,
) -> Result<BloomReport<S>> {
    let m = cfg.m;
    if u.m() != m || omega.m() != m || cfg.k.len() != m || cfg.r.len() != m || cfg.p.len() != m {
        return Err(Error::Arity { expected: m, got: u.m().min(omega.m()) });
    }
    u.grid().check_same(&omega.grid())?;
    if let Some(i) = cfg.tau_prime.iter().find(|i| !cfg.tau.contains(i)) {
        return Err(Error::Precondition(format!("τ' ⊆ τ violated (slot {})", i + 1)));
    }
    let q_prime = conjugate(cfg.q);
    let sp = cfg.s_prime;

    let mut slots = Vec::new();
    for &k in &cfg.tau_prime {
        let kr = cfg.k[k] as f64 * cfg.r[k];
        let (a, gamma) = floor_split(kr);
        if a as f64 + gamma - 1.0 == 0.0 {
            return Err(Error::Exponent(format!("slot {}: a + γ − 1 = 0 (k_k r_k = 0)", k + 1)));
        }
        let ratio = u.component(k).zip_with(omega.component(k), |x, y| x / y)?;
        let nu = power(&ratio, -cfg.r[k] / (a as f64 + gamma - 1.0))?;
        let (p, r) = (cfg.p[k], cfg.r[k]);
        let c = composite_constant(
            u.component(k),
            omega.component(k),
            &nu,
            [a as f64, p / r, p, p, -gamma * p / r],
            gamma,
        )?;
        let composite = CompositeValue { value: c.value.powf(S::of(1.0 / r)), formal: c.formal };
        slots.push(BloomSlot { slot: k, a, gamma, nu, composite });
    }

    let rest: Vec<usize> = cfg.tau.iter().copied().filter(|i| !cfg.tau_prime.contains(i)).collect();
    let v = u.product();
    let w = omega.product();
    let (total, scale, outer_slot) = match variant {
        BloomVariant::Maximal => (sp * rest.iter().map(|&l| cfg.k[l] as f64).sum::<f64>(), sp, None),
        BloomVariant::Holder => {
            let i0 = *rest
                .iter()
                .min()
                .ok_or_else(|| Error::Precondition("holder variant needs τ \\ τ' nonempty".into()))?;
            (2.0 * cfg.k[i0] as f64 * sp, 2.0 * sp, Some(i0))
        }
    };
    let (big_l, gamma_outer) = floor_split(total);
    if big_l as f64 + gamma_outer - 1.0 == 0.0 {
        return Err(Error::Exponent("outer derived weight has γ + L − 1 = 0".into()));
    }
    let base = v.zip_with(&power(w, 2.0 * gamma_outer - 3.0)?, |x, y| x / y)?;
    let nu_outer = power(&base, scale / (big_l as f64 + gamma_outer - 1.0))?;
    let x =
        [big_l as f64, -q_prime / scale, -q_prime, q_prime * (3.0 - 2.0 * gamma_outer), -gamma_outer * q_prime / scale];
    let c = composite_constant(v, w, &nu_outer, x, gamma_outer)?;
    let outer_composite = CompositeValue { value: c.value.powf(S::of(1.0 / sp)), formal: c.formal };
    Ok(BloomReport { variant, slots, big_l, gamma_outer, outer_slot, nu_outer, outer_composite })
}

/// Ingredients of the weighted bound for `𝒜` and the constant they leave over.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainReport {
    pub form_value: f64,
    pub bmo_factor: f64,
    pub characteristic: f64,
    pub theta: f64,
    pub norm_factor: f64,
    /// `form / (bmo_factor · characteristic^θ · norm_factor)`.
    pub constant: f64,
}

/// Splits `𝒜^{b,k,t}(f⃗, g)` against `∏‖b_i‖^{k_i} [ω⃗]^Θ ∏‖f_i‖_{L^{p_i}(ω_i^{p_i})} ‖g‖_{L^{q'}(ω^{−q'})}`.
pub fn chain_constant<S: Scalar>(inp: &FormInputs<S>, omega: &WeightTuple<S>) -> Result<ChainReport> {
    let cfg = inp.cfg;
    let form_value = form_a(inp)?.as_f64();
    let mut bmo_factor = 1.0;
    for &i in &cfg.tau {
        bmo_factor *= bmo_norm(&inp.b[i], 1.0, None, inp.mu)?.as_f64().powi(cfg.k[i] as i32);
    }
    let characteristic = multiweight_constant(omega, cfg)?.value.as_f64();
    let theta = theta_exponent(cfg)?;
    let density = inp.mu.density();
    let weighted = |w: GridFunction<S>| -> Result<Measure<S>> { Measure::with_density(&w.mul(&density)?) };
    let mut norm_factor = 1.0;
    for j in 0..cfg.m {
        let mu_j = weighted(power(omega.component(j), cfg.p[j])?)?;
        norm_factor *= lp_norm(&inp.f[j], cfg.p[j], &mu_j)?.as_f64();
    }
    let q_prime = conjugate(cfg.q);
    let mu_g = weighted(power(omega.product(), -q_prime)?)?;
    norm_factor *= lp_norm(inp.g, q_prime, &mu_g)?.as_f64();
    let denom = bmo_factor * characteristic.powf(theta) * norm_factor;
    if !(denom > 0.0) {
        return Err(Error::Precondition("chain denominator vanishes (constant symbol or zero input)".into()));
    }
    Ok(ChainReport { form_value, bmo_factor, characteristic, theta, norm_factor, constant: form_value / denom })
}
