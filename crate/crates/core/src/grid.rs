//! Deterministic randomized sampling over per-variable boxes.
//!
//! Grids drive every numeric check in the crate. Generation is a pure
//! function of the seed, so all reports are reproducible bit-for-bit.

use crate::error::{Error, Result};
use crate::expr::{evaluate_with, Assignment, Expr, FnTable};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

pub const DEFAULT_BOX: (f64, f64) = (0.5, 2.0);
pub const DEFAULT_POINTS: usize = 12;
pub const DEFAULT_SEED: u64 = 0x1dc0_ffee;

/// Sampling domain: one interval per symbol, a default interval for
/// everything unlisted, a point budget, a seed and exclusion guards.
#[derive(Debug, Clone)]
pub struct Grid {
    boxes: BTreeMap<String, (f64, f64)>,
    default_box: (f64, f64),
    points: usize,
    seed: u64,
    max_draws: usize,
    /// Expressions that must stay bounded away from zero at sample points.
    exclusions: Vec<Expr>,
    exclusion_eps: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            boxes: BTreeMap::new(),
            default_box: DEFAULT_BOX,
            points: DEFAULT_POINTS,
            seed: DEFAULT_SEED,
            max_draws: 600,
            exclusions: Vec::new(),
            exclusion_eps: 5e-2,
        }
    }
}

impl Grid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_box(mut self, name: &str, lo: f64, hi: f64) -> Self {
        assert!(lo < hi, "empty interval for {name}");
        self.boxes.insert(name.to_string(), (lo, hi));
        self
    }

    pub fn with_default_box(mut self, lo: f64, hi: f64) -> Self {
        self.default_box = (lo, hi);
        self
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points = points;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_exclusion(mut self, guard: Expr) -> Self {
        self.exclusions.push(guard);
        self
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn interval(&self, name: &str) -> (f64, f64) {
        self.boxes.get(name).copied().unwrap_or(self.default_box)
    }

    /// Fixes a symbol to a single value.
    pub fn pin(self, name: &str, value: f64) -> Self {
        let eps = value.abs().max(1.0) * 1e-12;
        self.with_box(name, value - eps, value + eps)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, symbols: &BTreeSet<String>) -> Assignment {
        let mut a = Assignment::new();
        for s in symbols {
            let (lo, hi) = self.interval(s);
            a.insert(s, rng.gen_range(lo..hi));
        }
        a
    }

    fn admits(&self, a: &Assignment, fns: &FnTable) -> bool {
        self.exclusions.iter().all(|g| match evaluate_with(g, a, fns) {
            Ok(v) => v.abs() >= self.exclusion_eps,
            Err(_) => false,
        })
    }

    /// Draws `points` assignments over `symbols` for which `accept` holds,
    /// resampling on singularities up to a bounded number of draws.
    pub fn sample_where(
        &self,
        symbols: &BTreeSet<String>,
        fns: &FnTable,
        mut accept: impl FnMut(&Assignment) -> bool,
    ) -> Result<Vec<Assignment>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.points);
        for _ in 0..self.max_draws {
            if out.len() == self.points {
                return Ok(out);
            }
            let a = self.draw(&mut rng, symbols);
            if self.admits(&a, fns) && accept(&a) {
                out.push(a);
            }
        }
        if out.len() == self.points {
            Ok(out)
        } else {
            Err(Error::Sampling(format!(
                "could not draw {} admissible points over {:?} in {} attempts",
                self.points, symbols, self.max_draws
            )))
        }
    }

    /// Draws assignments at which every listed expression evaluates.
    pub fn samples_for(&self, exprs: &[&Expr], fns: &FnTable) -> Result<Vec<Assignment>> {
        let mut symbols = BTreeSet::new();
        for e in exprs {
            symbols.extend(e.free_symbols());
        }
        self.sample_where(&symbols, fns, |a| {
            exprs.iter().all(|e| evaluate_with(e, a, fns).is_ok())
        })
    }
}
