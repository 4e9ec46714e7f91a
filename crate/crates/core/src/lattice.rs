//! Dyadic geometry on the unit torus `[0,1)`.
//!
//! The finest level `L` splits the torus into `N = 2^L` cells. Cube `(k, j)`
//! is `[shift + j 2^-k, shift + (j+1) 2^-k) mod 1`, where the shift is rounded
//! down to whole finest cells. Functions are piecewise constant on the cells and
//! continuum formulas are sampled at cell midpoints.
//!
//! Per-cube integrals are stored in a dyadic pyramid (level `k` holds `2^k`
//! partial sums, built pairwise from the cells), which plays the role of a
//! prefix-sum table for the dyadic cubes while keeping pairwise summation error.

use std::any::Any;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Scalar};

pub const MAX_LEVEL: u32 = 24;

/// Rational translation of the lattice, `num/den` in `[0,1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Shift {
    num: u64,
    den: u64,
}

impl Shift {
    pub const ZERO: Shift = Shift { num: 0, den: 1 };
    pub const THIRD: Shift = Shift { num: 1, den: 3 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num >= den {
            return Err(Error::Grid(format!("shift {num}/{den} not in [0,1)")));
        }
        Ok(Shift { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }
}

impl Default for Shift {
    fn default() -> Self {
        Shift::ZERO
    }
}

/// Half-open dyadic interval of level `level` and index `index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    pub level: u32,
    pub index: u32,
}

impl DyadicCube {
    pub const ROOT: DyadicCube = DyadicCube { level: 0, index: 0 };

    pub fn new(level: u32, index: u32) -> Self {
        DyadicCube { level, index }
    }

    pub fn parent(&self) -> Option<DyadicCube> {
        (self.level > 0).then(|| DyadicCube::new(self.level - 1, self.index >> 1))
    }

    pub fn children(&self) -> [DyadicCube; 2] {
        let l = self.level + 1;
        [DyadicCube::new(l, self.index << 1), DyadicCube::new(l, (self.index << 1) | 1)]
    }

    /// Ancestor at `level` (the cube itself when the levels agree).
    pub fn ancestor(&self, level: u32) -> Option<DyadicCube> {
        (level <= self.level).then(|| DyadicCube::new(level, self.index >> (self.level - level)))
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.level >= self.level && other.index >> (other.level - self.level) == self.index
    }

    /// Side length `2^-k`.
    pub fn length(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }
}

/// Finest level plus lattice shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    level: u32,
    shift: Shift,
}

impl GridSpec {
    pub fn new(level: u32) -> Result<Self> {
        Self::shifted(level, Shift::ZERO)
    }

    pub fn shifted(level: u32, shift: Shift) -> Result<Self> {
        if level == 0 || level > MAX_LEVEL {
            return Err(Error::Grid(format!("level {level} outside 1..={MAX_LEVEL}")));
        }
        Ok(GridSpec { level, shift })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn shift(&self) -> Shift {
        self.shift
    }

    pub fn cells(&self) -> usize {
        1usize << self.level
    }

    pub fn cell_width(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// Lattice shift in whole finest cells.
    pub fn offset(&self) -> usize {
        ((self.shift.num as u128 * self.cells() as u128) / self.shift.den as u128) as usize
    }

    pub fn midpoint(&self, cell: usize) -> f64 {
        (cell as f64 + 0.5) * self.cell_width()
    }

    pub fn root(&self) -> DyadicCube {
        DyadicCube::ROOT
    }

    pub fn check_cube(&self, cube: DyadicCube) -> Result<()> {
        if cube.level > self.level || (cube.index as u64) >= (1u64 << cube.level) {
            return Err(Error::Grid(format!("cube {cube:?} not in a level-{} lattice", self.level)));
        }
        Ok(())
    }

    /// Number of finest cells in `cube`.
    pub fn cube_len(&self, cube: DyadicCube) -> usize {
        1usize << (self.level - cube.level)
    }

    /// First cell of `cube` in lattice (rotated) coordinates.
    pub fn cube_start(&self, cube: DyadicCube) -> usize {
        (cube.index as usize) << (self.level - cube.level)
    }

    /// Cell index for a position counted from the lattice origin.
    pub fn cell_at(&self, rotated: usize) -> usize {
        (rotated + self.offset()) & (self.cells() - 1)
    }

    /// Position of `cell` counted from the lattice origin.
    pub fn rotated(&self, cell: usize) -> usize {
        (cell + self.cells() - self.offset()) & (self.cells() - 1)
    }

    pub fn cube_cells(&self, cube: DyadicCube) -> impl Iterator<Item = usize> + '_ {
        let start = self.cube_start(cube);
        (start..start + self.cube_len(cube)).map(move |r| self.cell_at(r))
    }

    pub fn cube_containing(&self, cell: usize, level: u32) -> DyadicCube {
        DyadicCube::new(level, (self.rotated(cell) >> (self.level - level)) as u32)
    }

    /// All cubes, level by level.
    pub fn cubes(&self) -> impl Iterator<Item = DyadicCube> {
        (0..=self.level).flat_map(|k| (0..(1u32 << k)).map(move |j| DyadicCube::new(k, j)))
    }

    pub fn cube_count(&self) -> usize {
        2 * self.cells() - 1
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Per-cube aggregates for every level, stored in lattice order.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid<S> {
    levels: Vec<Vec<S>>,
}

impl<S: Scalar> Pyramid<S> {
    /// Sums of `cell_values` over every cube.
    pub fn sums(grid: &GridSpec, cell_values: &[S]) -> Self {
        Self::build(grid, cell_values, |a, b| a + b)
    }

    /// Maxima of `cell_values` over every cube.
    pub fn maxima(grid: &GridSpec, cell_values: &[S]) -> Self {
        Self::build(grid, cell_values, |a, b| a.max(b))
    }

    fn build(grid: &GridSpec, cell_values: &[S], op: impl Fn(S, S) -> S) -> Self {
        let n = grid.cells();
        let finest: Vec<S> = (0..n).map(|r| cell_values[grid.cell_at(r)]).collect();
        let mut levels = vec![finest];
        while levels.last().unwrap().len() > 1 {
            let prev = levels.last().unwrap();
            let next: Vec<S> = prev.chunks_exact(2).map(|c| op(c[0], c[1])).collect();
            levels.push(next);
        }
        levels.reverse();
        Pyramid { levels }
    }

    /// Wraps per-level vectors; level `k` must hold `2^k` entries.
    pub fn from_levels(levels: Vec<Vec<S>>) -> Result<Self> {
        for (k, l) in levels.iter().enumerate() {
            if l.len() != 1 << k {
                return Err(Error::Grid(format!("pyramid level {k} has {} entries", l.len())));
            }
        }
        Ok(Pyramid { levels })
    }

    pub fn get(&self, cube: DyadicCube) -> S {
        self.levels[cube.level as usize][cube.index as usize]
    }

    pub fn depth(&self) -> u32 {
        self.levels.len() as u32 - 1
    }

    pub fn level(&self, k: u32) -> &[S] {
        &self.levels[k as usize]
    }
}

/// Piecewise-constant function on the finest cells.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<S> {
    grid: GridSpec,
    values: Vec<S>,
}

impl<S: Scalar> GridFunction<S> {
    pub fn new(grid: GridSpec, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::Grid(format!("{} values for {} cells", values.len(), grid.cells())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("non-finite value at cell {i}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn constant(grid: GridSpec, c: S) -> Self {
        GridFunction { grid, values: vec![c; grid.cells()] }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, S::zero())
    }

    /// Samples `f` at cell midpoints.
    pub fn sample(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.cells()).map(|i| S::of(f(grid.midpoint(i)))).collect();
        Self::new(grid, values)
    }

    pub fn from_cells(grid: GridSpec, f: impl Fn(usize) -> S) -> Result<Self> {
        Self::new(grid, (0..grid.cells()).map(f).collect())
    }

    /// `χ_[a,b)` sampled at midpoints.
    pub fn interval_indicator(grid: GridSpec, a: f64, b: f64) -> Self {
        let values = (0..grid.cells())
            .map(|i| {
                let x = grid.midpoint(i);
                if x >= a && x < b {
                    S::one()
                } else {
                    S::zero()
                }
            })
            .collect();
        GridFunction { grid, values }
    }

    pub fn cube_indicator(grid: GridSpec, cube: DyadicCube) -> Self {
        let mut values = vec![S::zero(); grid.cells()];
        for c in grid.cube_cells(cube) {
            values[c] = S::one();
        }
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, cell: usize) -> S {
        self.values[cell]
    }

    /// Same values on another lattice of the same level.
    pub fn on_grid(&self, grid: GridSpec) -> Result<Self> {
        if grid.level() != self.grid.level() {
            return Err(Error::GridMismatch(format!("level {} vs {}", grid.level(), self.grid.level())));
        }
        Ok(GridFunction { grid, values: self.values.clone() })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        GridFunction { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn try_map(&self, f: impl Fn(S) -> S) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(GridFunction { grid: self.grid, values })
    }

    pub fn abs(&self) -> Self {
        self.map(|v| v.abs())
    }

    pub fn scale(&self, c: S) -> Self {
        self.map(|v| v * c)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= S::zero())
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }
}

/// Measure with positive density `w`; the mass of a cell is `w · 2^-L`.
#[derive(Clone, Debug)]
pub struct Measure<S> {
    grid: GridSpec,
    density: Vec<S>,
    cell_mass: Vec<S>,
    masses: Arc<Pyramid<S>>,
}

impl<S: Scalar> Measure<S> {
    pub fn lebesgue(grid: GridSpec) -> Self {
        Self::build(grid, vec![S::one(); grid.cells()])
    }

    pub fn with_density(density: &GridFunction<S>) -> Result<Self> {
        if density.values().iter().any(|&w| w <= S::zero()) {
            return Err(Error::Precondition("measure density must be positive".into()));
        }
        Ok(Self::build(density.grid(), density.values().to_vec()))
    }

    fn build(grid: GridSpec, density: Vec<S>) -> Self {
        let h = S::of(grid.cell_width());
        let cell_mass: Vec<S> = density.iter().map(|&w| w * h).collect();
        let masses = Arc::new(Pyramid::sums(&grid, &cell_mass));
        Measure { grid, density, cell_mass, masses }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn density(&self) -> GridFunction<S> {
        GridFunction { grid: self.grid, values: self.density.clone() }
    }

    pub fn is_lebesgue(&self) -> bool {
        self.density.iter().all(|&w| w == S::one())
    }

    pub fn cell_mass(&self, cell: usize) -> S {
        self.cell_mass[cell]
    }

    pub fn cell_masses(&self) -> &[S] {
        &self.cell_mass
    }

    pub fn mass(&self, cube: DyadicCube) -> S {
        self.masses.get(cube)
    }

    pub fn total(&self) -> S {
        self.masses.get(DyadicCube::ROOT)
    }

    pub fn masses(&self) -> &Pyramid<S> {
        &self.masses
    }

    /// Same density on another lattice of the same level.
    pub fn on_grid(&self, grid: GridSpec) -> Result<Self> {
        if grid.level() != self.grid.level() {
            return Err(Error::GridMismatch("measure level differs".into()));
        }
        Ok(Self::build(grid, self.density.clone()))
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: &GridFunction<S>) -> Result<S> {
        self.grid.check_same(&f.grid())?;
        Ok(compensated_sum(f.values().iter().zip(&self.cell_mass).map(|(&v, &m)| v * m)))
    }
}

pub(crate) fn check_average_exponent(r: f64) -> Result<()> {
    if r.is_nan() || r < 1.0 {
        return Err(Error::Exponent(format!("average exponent {r} < 1")));
    }
    Ok(())
}

/// `∫_Q |f|^r dμ` (or `max_Q |f|` for `r = ∞`) for every cube, ready for `avg` queries.
#[derive(Clone, Debug)]
pub struct AverageTable<S> {
    exponent: f64,
    integrals: Pyramid<S>,
    masses: Arc<Pyramid<S>>,
}

impl<S: Scalar> AverageTable<S> {
    pub fn build(f: &GridFunction<S>, r: f64, mu: &Measure<S>) -> Result<Self> {
        check_average_exponent(r)?;
        mu.grid().check_same(&f.grid())?;
        let grid = mu.grid();
        let integrals = if r.is_infinite() {
            let a: Vec<S> = f.values().iter().map(|v| v.abs()).collect();
            Pyramid::maxima(&grid, &a)
        } else {
            let rs = S::of(r);
            let a: Vec<S> = f.values().iter().zip(mu.cell_masses()).map(|(&v, &m)| pow_abs(v, rs) * m).collect();
            Pyramid::sums(&grid, &a)
        };
        Ok(AverageTable { exponent: r, integrals, masses: mu.masses.clone() })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn average(&self, cube: DyadicCube) -> S {
        if self.exponent.is_infinite() {
            return self.integrals.get(cube);
        }
        let mean = self.integrals.get(cube) / self.masses.get(cube);
        root(mean, self.exponent)
    }

    /// Averages of every cube of level `k`, in index order.
    pub fn level_averages(&self, k: u32) -> Vec<S> {
        let sums = self.integrals.level(k);
        if self.exponent.is_infinite() {
            return sums.to_vec();
        }
        let masses = self.masses.level(k);
        sums.iter().zip(masses).map(|(&s, &m)| root(s / m, self.exponent)).collect()
    }
}

/// `|v|^r` with `0^r = 0`.
pub(crate) fn pow_abs<S: Scalar>(v: S, r: S) -> S {
    let a = v.abs();
    if r == S::one() {
        a
    } else if r == S::of(2.0) {
        a * a
    } else {
        a.powf(r)
    }
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

type CacheMap = HashMap<u64, Arc<dyn Any + Send + Sync>>;

const CACHE_CAPACITY: usize = 512;

fn cache() -> &'static RwLock<CacheMap> {
    static CACHE: OnceLock<RwLock<CacheMap>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn content_key<S: Scalar>(f: &GridFunction<S>, r: f64, mu: &Measure<S>) -> u64 {
    let mut h = DefaultHasher::new();
    std::any::TypeId::of::<S>().hash(&mut h);
    mu.grid().hash(&mut h);
    r.to_bits().hash(&mut h);
    for v in f.values() {
        v.as_f64().to_bits().hash(&mut h);
    }
    for w in &mu.density {
        w.as_f64().to_bits().hash(&mut h);
    }
    h.finish()
}

/// Average table for `(f, r, mu)`, shared through a content-addressed cache.
///
/// Entries are write-once; concurrent builders may race but produce identical tables.
pub fn average_table<S: Scalar>(f: &GridFunction<S>, r: f64, mu: &Measure<S>) -> Result<Arc<AverageTable<S>>> {
    let key = content_key(f, r, mu);
    if let Some(hit) = cache().read().unwrap().get(&key) {
        if let Ok(t) = hit.clone().downcast::<AverageTable<S>>() {
            return Ok(t);
        }
    }
    let table = Arc::new(AverageTable::build(f, r, mu)?);
    let mut map = cache().write().unwrap();
    if map.len() >= CACHE_CAPACITY {
        map.clear();
    }
    let entry = map.entry(key).or_insert_with(|| table.clone() as Arc<dyn Any + Send + Sync>);
    Ok(entry.clone().downcast::<AverageTable<S>>().unwrap_or(table))
}

/// `(μ(Q)^-1 ∫_Q |f|^r dμ)^(1/r)`; `r = ∞` gives the max over the cells of `Q`.
pub fn avg<S: Scalar>(f: &GridFunction<S>, r: f64, cube: DyadicCube, mu: &Measure<S>) -> Result<S> {
    mu.grid().check_cube(cube)?;
    Ok(average_table(f, r, mu)?.average(cube))
}

/// Signed mean `μ(Q)^-1 ∫_Q b dμ`.
pub fn mean<S: Scalar>(b: &GridFunction<S>, cube: DyadicCube, mu: &Measure<S>) -> Result<S> {
    mu.grid().check_same(&b.grid())?;
    mu.grid().check_cube(cube)?;
    Ok(cube_mean(b, cube, mu))
}

pub(crate) fn cube_mean<S: Scalar>(b: &GridFunction<S>, cube: DyadicCube, mu: &Measure<S>) -> S {
    let grid = mu.grid();
    let s = compensated_sum(grid.cube_cells(cube).map(|c| b.values[c] * mu.cell_mass[c]));
    s / mu.mass(cube)
}

/// `(∫ |f|^p dμ)^(1/p)`, a quasi-norm for `p < 1`.
pub fn lp_norm<S: Scalar>(f: &GridFunction<S>, p: f64, mu: &Measure<S>) -> Result<S> {
    if !(p > 0.0) || p.is_infinite() {
        return Err(Error::Exponent(format!("lp exponent {p} must be finite and positive")));
    }
    mu.grid().check_same(&f.grid())?;
    let ps = S::of(p);
    let s = compensated_sum(f.values().iter().zip(mu.cell_masses()).map(|(&v, &m)| pow_abs(v, ps) * m));
    Ok(s.powf(S::of(1.0 / p)))
}

/// `sup_λ λ μ{|F| > λ}^(1/p)`, evaluated at every distinct cell value.
pub fn weak_quasinorm<S: Scalar>(big_f: &GridFunction<S>, p: f64, mu: &Measure<S>) -> Result<S> {
    if !(p > 0.0) || p.is_infinite() {
        return Err(Error::Exponent(format!("weak exponent {p} must be finite and positive")));
    }
    mu.grid().check_same(&big_f.grid())?;
    let mut cells: Vec<(S, S)> = big_f.values().iter().zip(mu.cell_masses()).map(|(&v, &m)| (v.abs(), m)).collect();
    cells.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let inv_p = S::of(1.0 / p);
    let mut best = S::zero();
    let mut acc = crate::scalar::CompensatedSum::new();
    let mut i = 0;
    while i < cells.len() {
        let v = cells[i].0;
        while i < cells.len() && cells[i].0 == v {
            acc.add(cells[i].1);
            i += 1;
        }
        // sup over λ < v of λ·μ{|F| > λ}^(1/p) approaches v·μ{|F| ≥ v}^(1/p)
        best = best.max(v * acc.value().powf(inv_p));
    }
    Ok(best)
}

/// Pointwise `(Σ_i |F_i|^z)^(1/z)`.
pub fn lz_family_norm<S: Scalar>(family: &[GridFunction<S>], z: f64) -> Result<GridFunction<S>> {
    let first = family.first().ok_or_else(|| Error::Precondition("empty family".into()))?;
    if z.is_nan() || z < 1.0 {
        return Err(Error::Exponent(format!("l^z exponent {z} < 1")));
    }
    for f in family {
        first.grid().check_same(&f.grid())?;
    }
    let zs = S::of(z);
    let values = (0..first.len())
        .map(|c| {
            if z.is_infinite() {
                family.iter().fold(S::zero(), |m, f| m.max(f.values[c].abs()))
            } else if family.len() == 1 {
                first.values[c].abs()
            } else {
                let s = compensated_sum(family.iter().map(|f| pow_abs(f.values[c], zs)));
                s.powf(S::one() / zs)
            }
        })
        .collect();
    GridFunction::new(first.grid(), values)
}

/// Finite family of dyadic cubes with a target sparsity constant.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseFamily {
    grid: GridSpec,
    cubes: BTreeSet<DyadicCube>,
    delta: f64,
}

impl SparseFamily {
    pub fn new(grid: GridSpec, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Precondition(format!("sparsity constant {delta} not in (0,1]")));
        }
        Ok(SparseFamily { grid, cubes: BTreeSet::new(), delta })
    }

    pub fn from_cubes(grid: GridSpec, cubes: impl IntoIterator<Item = DyadicCube>, delta: f64) -> Result<Self> {
        let mut s = Self::new(grid, delta)?;
        for c in cubes {
            s.insert(c)?;
        }
        Ok(s)
    }

    /// `{[0, 2^-j)}` for `j = 0..=depth` (in lattice coordinates).
    pub fn left_chain(grid: GridSpec, depth: u32) -> Result<Self> {
        Self::from_cubes(grid, (0..=depth).map(|j| DyadicCube::new(j, 0)), 0.5)
    }

    pub fn insert(&mut self, cube: DyadicCube) -> Result<bool> {
        self.grid.check_cube(cube)?;
        Ok(self.cubes.insert(cube))
    }

    pub fn contains(&self, cube: &DyadicCube) -> bool {
        self.cubes.contains(cube)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DyadicCube> {
        self.cubes.iter()
    }

    pub fn cubes(&self) -> &BTreeSet<DyadicCube> {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Precondition(format!("sparsity constant {delta} not in (0,1]")));
        }
        self.delta = delta;
        Ok(self)
    }

    /// Per-level membership masks.
    pub(crate) fn level_masks(&self) -> Vec<Vec<bool>> {
        let mut masks: Vec<Vec<bool>> = (0..=self.grid.level()).map(|k| vec![false; 1 << k]).collect();
        for c in &self.cubes {
            masks[c.level as usize][c.index as usize] = true;
        }
        masks
    }
}
