//! `key=value` experiment configuration.
//!
//! Slot lists (`tau`, `tau_prime`) are 1-based here and converted to the
//! 0-based slots of [`ExponentConfig`]. Every problem found is collected, so a
//! bad file is reported in one pass.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use sparselab_core::operators::{conjugate, derived_q};
use sparselab_core::{ExponentConfig, GridSpec, Shift};

use crate::emit::Format;

pub const DEFAULT_LEVEL: u32 = 14;
pub const MIN_LEVEL: u32 = 4;
pub const MAX_LEVEL: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    SharpnessK,
    SharpnessTheta,
    ReduceFuzz,
    DominateDemo,
    MaximalEquiv,
    WeightsReport,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::SharpnessK,
        Experiment::SharpnessTheta,
        Experiment::ReduceFuzz,
        Experiment::DominateDemo,
        Experiment::MaximalEquiv,
        Experiment::WeightsReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SharpnessK => "sharpness-k",
            Experiment::SharpnessTheta => "sharpness-theta",
            Experiment::ReduceFuzz => "reduce-fuzz",
            Experiment::DominateDemo => "dominate-demo",
            Experiment::MaximalEquiv => "maximal-equiv",
            Experiment::WeightsReport => "weights-report",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    /// Experiment-specific keys accepted on top of the common ones.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Experiment::SharpnessK => &["lambda", "J"],
            Experiment::SharpnessTheta => &["lambda", "delta", "J", "trials", "restarts"],
            Experiment::ReduceFuzz => &["trials"],
            Experiment::DominateDemo => &["levels", "osc_pairs", "beta"],
            Experiment::MaximalEquiv => &["weight_exponents", "trials"],
            Experiment::WeightsReport => &["delta"],
        }
    }

    /// Experiments whose exponent data comes from the config.
    fn takes_exponents(self) -> bool {
        matches!(self, Experiment::DominateDemo | Experiment::MaximalEquiv | Experiment::WeightsReport)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const COMMON_KEYS: &[&str] = &["experiment", "L", "shift", "seed", "out", "format"];
const EXPONENT_KEYS: &[&str] = &["eta", "r", "p", "q", "s", "s_prime", "z", "k", "t", "tau", "tau_prime"];

/// Sweep and size parameters; fields an experiment does not use keep their defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub lambda: Vec<f64>,
    pub delta: Vec<f64>,
    /// Depth `J` of the nested chain `[0, 2^-j)`, `j ≤ J`.
    pub depth: u32,
    pub trials: usize,
    /// Independent search seeds per sweep point.
    pub restarts: usize,
    pub levels: Vec<u32>,
    pub weight_exponents: Vec<f64>,
    pub osc_pairs: usize,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub grid: GridSpec,
    pub cfg: ExponentConfig,
    pub sweep: Sweep,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
}

/// All problems found in a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.violations.join("; "))
    }
}

impl std::error::Error for ConfigError {}

/// Parses `key=value` lines; `#` starts a comment. Later lines override earlier ones.
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut errs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => out.push((k.trim().to_string(), v.trim().to_string())),
            _ => errs.push(format!("line {}: expected key=value (got {line:?})", n + 1)),
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(ConfigError { violations: errs })
    }
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    errs: Vec<String>,
}

impl<'a> Reader<'a> {
    fn raw(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).map(String::as_str)
    }

    fn num(&mut self, key: &str) -> Option<f64> {
        let v = self.raw(key)?;
        match parse_num(v) {
            Some(x) => Some(x),
            None => {
                self.errs.push(format!("{key}: not a number ({v:?})"));
                None
            }
        }
    }

    fn nums(&mut self, key: &str) -> Option<Vec<f64>> {
        let v = self.raw(key)?;
        let items = split_list(v);
        let parsed: Option<Vec<f64>> = items.iter().map(|s| parse_num(s)).collect();
        if parsed.is_none() {
            self.errs.push(format!("{key}: expected a comma-separated list of numbers ({v:?})"));
        }
        parsed
    }

    fn ints<T: std::str::FromStr>(&mut self, key: &str) -> Option<Vec<T>> {
        let v = self.raw(key)?;
        let parsed: Option<Vec<T>> = split_list(v).iter().map(|s| s.parse().ok()).collect();
        if parsed.is_none() {
            self.errs.push(format!("{key}: expected a comma-separated list of nonnegative integers ({v:?})"));
        }
        parsed
    }

    fn int<T: std::str::FromStr>(&mut self, key: &str) -> Option<T> {
        let v = self.raw(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.errs.push(format!("{key}: expected a nonnegative integer ({v:?})"));
                None
            }
        }
    }
}

fn split_list(v: &str) -> Vec<&str> {
    let v = v.trim().trim_start_matches('[').trim_end_matches(']').trim();
    if v.is_empty() {
        Vec::new()
    } else {
        v.split(',').map(str::trim).collect()
    }
}

/// Decimal, `a/b` fraction, or `inf`.
pub fn parse_num(s: &str) -> Option<f64> {
    let s = s.trim();
    match s {
        "inf" | "∞" | "+inf" => return Some(f64::INFINITY),
        _ => {}
    }
    if let Some((a, b)) = s.split_once('/') {
        let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return (b != 0.0).then_some(a / b);
    }
    s.parse().ok().filter(|x: &f64| !x.is_nan())
}

fn parse_shift(s: &str) -> Option<Shift> {
    let s = s.trim();
    if s == "0" {
        return Some(Shift::ZERO);
    }
    let (a, b) = s.split_once('/')?;
    Shift::new(a.trim().parse().ok()?, b.trim().parse().ok()?).ok()
}

/// Exponent defaults per experiment (before file and flag overrides).
pub fn default_exponents(e: Experiment) -> ExponentConfig {
    match e {
        // m = 1, η = 1 is outside η ∈ [0, m); the experiment builds it directly
        Experiment::SharpnessK => {
            let mut c = ExponentConfig::averaging(0.5, vec![2.0]).with_s(f64::INFINITY, 2.0).with_symbols(
                vec![2],
                vec![1],
                vec![0],
                vec![],
            );
            c.eta = 1.0;
            c
        }
        Experiment::SharpnessTheta | Experiment::MaximalEquiv => ExponentConfig::new(0.0, vec![2.0], vec![4.0])
            .with_s(4.0, 4.0 / 3.0)
            .with_symbols(vec![2], vec![1], vec![0], vec![]),
        Experiment::WeightsReport => ExponentConfig::new(0.0, vec![2.0], vec![4.0])
            .with_s(4.0, 4.0 / 3.0)
            .with_symbols(vec![2], vec![1], vec![0], vec![]),
        Experiment::ReduceFuzz => ExponentConfig::averaging(0.0, vec![1.0]),
        Experiment::DominateDemo => ExponentConfig::new(0.5, vec![1.0], vec![1.25])
            .with_s(4.0, 4.0 / 3.0)
            .with_symbols(vec![1], vec![0], vec![0], vec![]),
    }
}

fn default_sweep(e: Experiment, level: u32) -> Sweep {
    Sweep {
        lambda: match e {
            Experiment::SharpnessK => vec![1.0, 2.0, 4.0],
            _ => vec![1.0],
        },
        delta: vec![1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0],
        depth: level.saturating_sub(4),
        trials: match e {
            Experiment::ReduceFuzz => 1000,
            _ => 64,
        },
        restarts: 4,
        levels: vec![level.saturating_sub(2), level],
        weight_exponents: vec![1.0 / 16.0],
        osc_pairs: 64,
        beta: 3.0,
    }
}

/// Builds a validated configuration from file entries followed by flag overrides.
/// `experiment` (the command-line positional) overrides the file's `experiment` key.
pub fn parse_config(
    file_entries: &[(String, String)],
    flag_entries: &[(String, String)],
    experiment: Option<&str>,
) -> Result<ExperimentConfig, ConfigError> {
    let mut map = BTreeMap::new();
    for (k, v) in file_entries.iter().chain(flag_entries) {
        map.insert(k.clone(), v.clone());
    }
    if let Some(e) = experiment {
        map.insert("experiment".into(), e.into());
    }
    let mut errs = Vec::new();
    let exp = match map.get("experiment") {
        None => {
            return Err(ConfigError { violations: vec!["experiment: missing".into()] });
        }
        Some(name) => match Experiment::parse(name) {
            Some(e) => e,
            None => {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                return Err(ConfigError {
                    violations: vec![format!(
                        "experiment: unknown experiment {name:?} (expected one of {})",
                        names.join(", ")
                    )],
                });
            }
        },
    };
    for key in map.keys() {
        let known = COMMON_KEYS.contains(&key.as_str())
            || exp.keys().contains(&key.as_str())
            || (exp.takes_exponents() && EXPONENT_KEYS.contains(&key.as_str()));
        if !known {
            let any = EXPONENT_KEYS.contains(&key.as_str())
                || Experiment::ALL.iter().any(|e| e.keys().contains(&key.as_str()));
            if any {
                errs.push(format!("{key}: not applicable to experiment {exp}"));
            } else {
                errs.push(format!("{key}: unknown key"));
            }
        }
    }

    let mut rd = Reader { map: &map, errs: Vec::new() };
    let level = rd.int::<u32>("L").unwrap_or(DEFAULT_LEVEL);
    if !(MIN_LEVEL..=MAX_LEVEL).contains(&level) {
        rd.errs.push(format!("L: grid level must lie in [{MIN_LEVEL}, {MAX_LEVEL}] (got {level})"));
    }
    let shift = match rd.raw("shift") {
        None => Shift::ZERO,
        Some(s) => parse_shift(s).unwrap_or_else(|| {
            rd.errs.push(format!("shift: expected 0 or a fraction a/b in [0, 1) ({s:?})"));
            Shift::ZERO
        }),
    };
    let seed = rd.int::<u64>("seed").unwrap_or(0);
    let out = PathBuf::from(rd.raw("out").unwrap_or("sparselab-out"));
    let format = match rd.raw("format") {
        None => Format::Csv,
        Some(f) => f.parse().unwrap_or_else(|e: String| {
            rd.errs.push(format!("format: {e}"));
            Format::Csv
        }),
    };

    let mut sweep = default_sweep(exp, level);
    if let Some(v) = rd.nums("lambda") {
        sweep.lambda = v;
    }
    if let Some(v) = rd.nums("delta") {
        sweep.delta = v;
    }
    if let Some(j) = rd.int::<u32>("J") {
        sweep.depth = j;
    }
    if let Some(t) = rd.int::<usize>("trials") {
        sweep.trials = t;
    }
    if let Some(r) = rd.int::<usize>("restarts") {
        sweep.restarts = r;
    }
    if let Some(v) = rd.ints::<u32>("levels") {
        sweep.levels = v;
    }
    if let Some(v) = rd.nums("weight_exponents") {
        sweep.weight_exponents = v;
    }
    if let Some(v) = rd.int::<usize>("osc_pairs") {
        sweep.osc_pairs = v;
    }
    if let Some(v) = rd.num("beta") {
        sweep.beta = v;
    }

    let before = rd.errs.len();
    let cfg = if exp.takes_exponents() { read_exponents(exp, &mut rd) } else { default_exponents(exp) };
    // orderings are meaningless when an exponent failed to parse
    let exponents_parsed = rd.errs.len() == before;
    errs.append(&mut rd.errs);

    errs.extend(check_sweep(exp, &sweep, level, &cfg));
    if exp.takes_exponents() && exponents_parsed {
        errs.extend(exponent_violations(&cfg));
    }
    if !errs.is_empty() {
        return Err(ConfigError { violations: errs });
    }
    let grid = GridSpec::shifted(level, shift).map_err(|e| ConfigError { violations: vec![format!("grid: {e}")] })?;
    Ok(ExperimentConfig { experiment: exp, grid, cfg, sweep, seed, out, format })
}

fn read_exponents(exp: Experiment, rd: &mut Reader) -> ExponentConfig {
    let mut c = default_exponents(exp);
    let r = rd.nums("r");
    let p = rd.nums("p");
    if let Some(r) = r {
        c.r = r;
    }
    if let Some(p) = p {
        c.p = p;
    }
    let m = c.r.len();
    if m != c.m {
        // a new arity resets the per-slot symbol data unless given
        c.m = m;
        c.k = vec![0; m];
        c.t = vec![0; m];
        c.tau = Vec::new();
        c.tau_prime = Vec::new();
    }
    if let Some(eta) = rd.num("eta") {
        c.eta = eta;
    }
    c.q = rd.num("q").unwrap_or_else(|| derived_q(&c.p, c.eta));
    if let Some(s) = rd.num("s") {
        c.s = s;
        c.s_prime = conjugate(s);
    }
    if let Some(sp) = rd.num("s_prime") {
        c.s_prime = sp;
    }
    if let Some(z) = rd.num("z") {
        c.z = z;
    }
    if let Some(k) = rd.ints::<u32>("k") {
        c.k = k;
    }
    if let Some(t) = rd.ints::<u32>("t") {
        c.t = t;
    }
    for (key, dst) in [("tau", &mut c.tau), ("tau_prime", &mut c.tau_prime)] {
        if let Some(v) = rd.ints::<usize>(key) {
            if v.contains(&0) {
                rd.errs.push(format!("{key}: slots are numbered from 1"));
            } else {
                *dst = v.into_iter().map(|i| i - 1).collect();
            }
        }
    }
    c
}

/// Structural violations plus the orderings the experiments rely on.
pub fn exponent_violations(c: &ExponentConfig) -> Vec<String> {
    let mut v = c.violations();
    for (i, (r, p)) in c.r.iter().zip(&c.p).enumerate() {
        if !(r < p) {
            v.push(format!("(r⃗,s) ≺ (p⃗,q) violated: r_{} = {r} is not below p_{} = {p}", i + 1, i + 1));
        }
    }
    if !(c.q <= c.s) {
        v.push(format!("(r⃗,s) ⪯ (p⃗,q) violated: q = {} exceeds s = {}", c.q, c.s));
    }
    v
}

fn check_sweep(exp: Experiment, sw: &Sweep, level: u32, cfg: &ExponentConfig) -> Vec<String> {
    let mut v = Vec::new();
    match exp {
        Experiment::SharpnessK | Experiment::SharpnessTheta => {
            if sw.depth > level {
                v.push(format!("J: chain depth {} exceeds the grid level {level}", sw.depth));
            }
            if sw.lambda.iter().any(|l| !(l.is_finite() && *l != 0.0)) {
                v.push("lambda: values must be finite and nonzero".into());
            }
        }
        _ => {}
    }
    if exp == Experiment::SharpnessTheta || exp == Experiment::WeightsReport {
        if sw.delta.iter().any(|d| !(*d > 0.0 && *d <= 0.125)) {
            v.push("delta: values must lie in (0, 1/8] (x^{-4δ} is integrable only for δ < 1/4)".into());
        }
    }
    if matches!(exp, Experiment::SharpnessTheta | Experiment::ReduceFuzz | Experiment::MaximalEquiv) && sw.trials == 0 {
        v.push("trials: must be at least 1".into());
    }
    if exp == Experiment::SharpnessTheta && sw.restarts == 0 {
        v.push("restarts: must be at least 1".into());
    }
    if exp == Experiment::DominateDemo {
        if sw.levels.is_empty() {
            v.push("levels: at least one level".into());
        }
        if let Some(l) = sw.levels.iter().find(|l| !(MIN_LEVEL..=MAX_LEVEL).contains(*l)) {
            v.push(format!("levels: grid level must lie in [{MIN_LEVEL}, {MAX_LEVEL}] (got {l})"));
        }
        if sw.osc_pairs == 0 {
            v.push("osc_pairs: must be at least 1".into());
        }
        if !(sw.beta >= 1.0) {
            v.push(format!("beta: β ≥ 1 violated (β = {})", sw.beta));
        }
        if cfg.m != 1 {
            v.push(format!("dominate-demo runs the linear fractional integral: m = 1 required (got m = {})", cfg.m));
        }
    }
    if exp == Experiment::MaximalEquiv && sw.weight_exponents.len() != cfg.m {
        v.push(format!("weight_exponents: one exponent per slot (m = {}, got {})", cfg.m, sw.weight_exponents.len()));
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(text: &str) -> Vec<(String, String)> {
        parse_lines(text).unwrap()
    }

    #[test]
    fn numbers_and_fractions() {
        assert_eq!(parse_num("4/3"), Some(4.0 / 3.0));
        assert_eq!(parse_num("inf"), Some(f64::INFINITY));
        assert_eq!(parse_num("0.25"), Some(0.25));
        assert_eq!(parse_num("1/0"), None);
        assert_eq!(parse_num("x"), None);
    }

    #[test]
    fn comments_and_blank_lines() {
        let e = entries("# header\n\nexperiment = reduce-fuzz  # trailing\nseed=3\n");
        assert_eq!(e, vec![("experiment".into(), "reduce-fuzz".into()), ("seed".into(), "3".into())]);
        assert!(parse_lines("no equals sign").is_err());
    }

    #[test]
    fn tau_is_one_based() {
        let c = parse_config(&entries("experiment=dominate-demo\ntau=1\nk=2"), &[], None).unwrap();
        assert_eq!(c.cfg.tau, vec![0]);
        let err = parse_config(&entries("experiment=dominate-demo\ntau=0"), &[], None).unwrap_err();
        assert!(err.violations.iter().any(|v| v.contains("numbered from 1")));
    }
}
