//! Multilinear fractional sparse forms and the reduction inequality between them.
//!
//! Every form is a sum over `Q ∈ S` of `μ(Q)^(η+1)` times local averages. Terms
//! are produced per cube (in parallel) and then summed in the family's cube order
//! with compensated summation, so the result does not depend on scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{cube_mean, pow_abs, AverageTable, DyadicCube, GridFunction, Measure, SparseFamily};
use crate::operators::ExponentConfig;
use crate::scalar::{compensated_sum, Scalar};

/// Relative slack allowed by `reduce_check`.
pub const REDUCTION_TOL: f64 = 1e-10;

/// Inputs shared by the forms.
#[derive(Clone, Copy, Debug)]
pub struct FormInputs<'a, S> {
    pub f: &'a [GridFunction<S>],
    pub g: &'a GridFunction<S>,
    pub b: &'a [GridFunction<S>],
    pub cfg: &'a ExponentConfig,
    pub family: &'a SparseFamily,
    pub mu: &'a Measure<S>,
}

impl<'a, S: Scalar> FormInputs<'a, S> {
    pub fn validate(&self) -> Result<()> {
        let m = self.cfg.m;
        if self.f.len() != m {
            return Err(Error::Arity { expected: m, got: self.f.len() });
        }
        if self.b.len() != m {
            return Err(Error::Arity { expected: m, got: self.b.len() });
        }
        if self.cfg.r.len() != m {
            return Err(Error::Arity { expected: m, got: self.cfg.r.len() });
        }
        let grid = self.mu.grid();
        grid.check_same(&self.family.grid())?;
        grid.check_same(&self.g.grid())?;
        for h in self.f.iter().chain(self.b) {
            grid.check_same(&h.grid())?;
        }
        if let Some(i) = self.cfg.tau.iter().find(|&&i| i >= m) {
            return Err(Error::Precondition(format!("τ ⊆ {{1..m}} violated (slot {})", i + 1)));
        }
        Ok(())
    }
}

/// `Σ_Q μ(Q)^(η+1) ∏_{j≤m+1} avg(f_j, r_j, Q)` with `f_{m+1} = g`, `r_{m+1} = r_last`.
pub fn plain_form<S: Scalar>(inp: &FormInputs<S>, r_last: f64) -> Result<S> {
    inp.validate()?;
    let mut tables =
        inp.f.iter().zip(&inp.cfg.r).map(|(f, &r)| AverageTable::build(f, r, inp.mu)).collect::<Result<Vec<_>>>()?;
    tables.push(AverageTable::build(inp.g, r_last, inp.mu)?);
    let power = S::of(inp.cfg.eta + 1.0);
    let terms: Vec<S> = inp
        .family
        .iter()
        .map(|&q| tables.iter().fold(inp.mu.mass(q).powf(power), |acc, t| acc * t.average(q)))
        .collect();
    Ok(compensated_sum(terms))
}

/// Per-cube terms of the twisted form
/// `μ(Q)^(η+1) ∏_i avg(|f_i| |b_i − b_iQ|^{a_i}, r_i) · avg(∏_i |b_i − b_iQ|^{c_i} |g|, s')`.
///
/// `f_twist[i] = a_i` and `g_twist[i] = c_i`; slots with zero twist use cached tables.
pub fn twisted_terms<S: Scalar>(inp: &FormInputs<S>, f_twist: &[u32], g_twist: &[u32]) -> Result<Vec<(DyadicCube, S)>> {
    inp.validate()?;
    let m = inp.cfg.m;
    if f_twist.len() != m || g_twist.len() != m {
        return Err(Error::Arity { expected: m, got: f_twist.len().min(g_twist.len()) });
    }
    let mu = inp.mu;
    let grid = mu.grid();
    let plain_tables = (0..m)
        .map(|i| {
            if f_twist[i] == 0 {
                Some(AverageTable::build(&inp.f[i], inp.cfg.r[i], mu)).transpose()
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let g_plain =
        if g_twist.iter().all(|&c| c == 0) { Some(AverageTable::build(inp.g, inp.cfg.s_prime, mu)?) } else { None };
    crate::lattice::check_average_exponent(inp.cfg.s_prime)?;
    let power = S::of(inp.cfg.eta + 1.0);
    let twisted_slots: Vec<usize> = (0..m).filter(|&i| f_twist[i] > 0 || g_twist[i] > 0).collect();
    let cubes: Vec<DyadicCube> = inp.family.iter().copied().collect();
    let terms = cubes
        .par_iter()
        .map(|&q| {
            let means: Vec<(usize, S)> = twisted_slots.iter().map(|&i| (i, cube_mean(&inp.b[i], q, mu))).collect();
            let osc = |i: usize, cell: usize| -> S {
                let bq = means.iter().find(|(j, _)| *j == i).unwrap().1;
                (inp.b[i].get(cell) - bq).abs()
            };
            let mass = mu.mass(q);
            let mut term = mass.powf(power);
            for i in 0..m {
                let a = match &plain_tables[i] {
                    Some(t) => t.average(q),
                    None => {
                        let r = S::of(inp.cfg.r[i]);
                        let tw = f_twist[i] as i32;
                        let s = compensated_sum(
                            grid.cube_cells(q)
                                .map(|c| pow_abs(inp.f[i].get(c) * osc(i, c).powi(tw), r) * mu.cell_mass(c)),
                        );
                        root(s / mass, inp.cfg.r[i])
                    }
                };
                term = term * a;
            }
            let gavg = match &g_plain {
                Some(t) => t.average(q),
                None => {
                    let sp = S::of(inp.cfg.s_prime);
                    let s = compensated_sum(grid.cube_cells(q).map(|c| {
                        let mut v = inp.g.get(c).abs();
                        for &i in &twisted_slots {
                            if g_twist[i] > 0 {
                                v = v * osc(i, c).powi(g_twist[i] as i32);
                            }
                        }
                        pow_abs(v, sp) * mu.cell_mass(c)
                    }));
                    root(s / mass, inp.cfg.s_prime)
                }
            };
            (q, term * gavg)
        })
        .collect();
    Ok(terms)
}

fn root<S: Scalar>(x: S, r: f64) -> S {
    if r == 1.0 {
        x
    } else if r == 2.0 {
        x.sqrt()
    } else {
        x.powf(S::of(1.0 / r))
    }
}

fn sum_terms<S: Scalar>(terms: &[(DyadicCube, S)]) -> S {
    compensated_sum(terms.iter().map(|t| t.1))
}

fn a_twists(cfg: &ExponentConfig, t: &[u32]) -> Result<(Vec<u32>, Vec<u32>)> {
    let mut ft = vec![0; cfg.m];
    let mut gt = vec![0; cfg.m];
    for &i in &cfg.tau {
        if i >= cfg.m {
            return Err(Error::Precondition(format!("τ ⊆ {{1..m}} violated (slot {})", i + 1)));
        }
        if t[i] > cfg.k[i] {
            return Err(Error::Precondition(format!("t ≤ k violated at slot {}", i + 1)));
        }
        ft[i] = t[i];
        gt[i] = cfg.k[i] - t[i];
    }
    Ok((ft, gt))
}

fn b_twists(cfg: &ExponentConfig, tau_prime: &[usize]) -> Result<(Vec<u32>, Vec<u32>)> {
    let mut ft = vec![0; cfg.m];
    let mut gt = vec![0; cfg.m];
    for &i in &cfg.tau {
        if i >= cfg.m {
            return Err(Error::Precondition(format!("τ ⊆ {{1..m}} violated (slot {})", i + 1)));
        }
        if tau_prime.contains(&i) {
            ft[i] = cfg.k[i];
        } else {
            gt[i] = cfg.k[i];
        }
    }
    if let Some(i) = tau_prime.iter().find(|i| !cfg.tau.contains(i)) {
        return Err(Error::Precondition(format!("τ' ⊆ τ violated (slot {})", i + 1)));
    }
    Ok((ft, gt))
}

/// `𝒜^{b,k,t}` with the configured `t⃗`.
pub fn form_a<S: Scalar>(inp: &FormInputs<S>) -> Result<S> {
    form_a_with_t(inp, &inp.cfg.t)
}

/// `𝒜^{b,k,t}` for an explicit `t⃗ ≤ k⃗`.
pub fn form_a_with_t<S: Scalar>(inp: &FormInputs<S>, t: &[u32]) -> Result<S> {
    if t.len() != inp.cfg.m {
        return Err(Error::Arity { expected: inp.cfg.m, got: t.len() });
    }
    let (ft, gt) = a_twists(inp.cfg, t)?;
    Ok(sum_terms(&twisted_terms(inp, &ft, &gt)?))
}

/// `ℬ^{b,k}` with the configured `τ'`.
pub fn form_b<S: Scalar>(inp: &FormInputs<S>) -> Result<S> {
    form_b_with(inp, &inp.cfg.tau_prime)
}

/// `ℬ^{b,k}` for an explicit `τ' ⊆ τ`.
pub fn form_b_with<S: Scalar>(inp: &FormInputs<S>, tau_prime: &[usize]) -> Result<S> {
    let (ft, gt) = b_twists(inp.cfg, tau_prime)?;
    Ok(sum_terms(&twisted_terms(inp, &ft, &gt)?))
}

/// Outcome of the reduction check `𝒜 ≤ Σ_{τ'⊆τ} ℬ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `(rhs − lhs)/rhs`, or 0 when both sides vanish.
    pub margin: f64,
    /// The inequality also holds cube by cube.
    pub per_cube_holds: bool,
    pub worst_cube_margin: f64,
}

fn relative_margin(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        (rhs - lhs) / rhs
    } else if lhs > 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

/// Subsets of `tau`, in bitmask order.
pub fn subsets(tau: &[usize]) -> Vec<Vec<usize>> {
    (0u32..(1 << tau.len()))
        .map(|mask| tau.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &i)| i).collect())
        .collect()
}

/// Checks `𝒜^{b,k,t} ≤ Σ_{τ'⊆τ} ℬ^{b,k}_{τ'}` globally and per cube.
pub fn reduce_check<S: Scalar>(inp: &FormInputs<S>) -> Result<ReductionReport> {
    let (ft, gt) = a_twists(inp.cfg, &inp.cfg.t)?;
    let a_terms = twisted_terms(inp, &ft, &gt)?;
    let mut b_total = vec![S::zero(); a_terms.len()];
    let mut b_sums = Vec::new();
    for tp in subsets(&inp.cfg.tau) {
        let (ft, gt) = b_twists(inp.cfg, &tp)?;
        let terms = twisted_terms(inp, &ft, &gt)?;
        for (acc, (_, v)) in b_total.iter_mut().zip(&terms) {
            *acc = *acc + *v;
        }
        b_sums.push(sum_terms(&terms));
    }
    let lhs = sum_terms(&a_terms).as_f64();
    let rhs = compensated_sum(b_sums).as_f64();
    let mut worst = f64::INFINITY;
    for ((_, a), b) in a_terms.iter().zip(&b_total) {
        worst = worst.min(relative_margin(a.as_f64(), b.as_f64()));
    }
    if a_terms.is_empty() {
        worst = 0.0;
    }
    Ok(ReductionReport {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + REDUCTION_TOL),
        margin: relative_margin(lhs, rhs),
        per_cube_holds: worst >= -REDUCTION_TOL,
        worst_cube_margin: worst,
    })
}
