//! Catalogs of weighted affine iterated function systems.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for weight and probability normalization.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Relative tolerance (in units of `b - a`) for endpoint comparisons.
pub const ENDPOINT_TOL: f64 = 1e-12;

/// `x -> r x + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionMap {
    pub r: f64,
    pub c: f64,
}

impl ContractionMap {
    pub fn new(r: f64, c: f64) -> Self {
        ContractionMap { r, c }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.r * x + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedIfs {
    pub maps: Vec<ContractionMap>,
    pub weights: Vec<f64>,
}

impl WeightedIfs {
    pub fn new(maps: Vec<ContractionMap>, weights: Vec<f64>) -> Self {
        WeightedIfs { maps, weights }
    }

    /// Number of maps.
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Per-map products `r_i * m_i`.
    pub fn scale_products(&self) -> impl Iterator<Item = f64> + '_ {
        self.maps.iter().zip(&self.weights).map(|(s, m)| s.r * m)
    }

    /// `sum_i (r_i m_i)^x`.
    pub fn scale_sum(&self, x: f64) -> f64 {
        self.scale_products().map(|p| p.powf(x)).sum()
    }
}

/// Minima and maxima of ratios and weights over the whole catalog,
/// with `eta = r_inf * m_inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleExtrema {
    pub r_inf: f64,
    pub r_sup: f64,
    pub m_inf: f64,
    pub m_sup: f64,
    pub eta: f64,
}

/// Indexed family of weighted IFSs on a base interval, with a sampling
/// distribution over the index set.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    a: f64,
    b: f64,
    systems: Vec<WeightedIfs>,
    p: Vec<f64>,
    extrema: Option<ScaleExtrema>,
}

impl Catalog {
    /// Builds a catalog without validating it; see [`validate_catalog`].
    pub fn new(interval: (f64, f64), systems: Vec<WeightedIfs>, p: Vec<f64>) -> Self {
        let extrema = compute_extrema(&systems);
        Catalog {
            a: interval.0,
            b: interval.1,
            systems,
            p,
            extrema,
        }
    }

    /// Builds and validates; any violation becomes [`Error::InvalidCatalog`].
    pub fn validated(interval: (f64, f64), systems: Vec<WeightedIfs>, p: Vec<f64>) -> Result<Self> {
        let catalog = Catalog::new(interval, systems, p);
        catalog.ensure_valid()?;
        Ok(catalog)
    }

    /// Catalog with uniform index distribution.
    pub fn uniform(interval: (f64, f64), systems: Vec<WeightedIfs>) -> Result<Self> {
        let n = systems.len().max(1);
        let p = vec![1.0 / n as f64; systems.len()];
        Self::validated(interval, systems, p)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_catalog(self);
        if report.is_valid() {
            Ok(())
        } else {
            let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidCatalog(msgs.join("; ")))
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn systems(&self) -> &[WeightedIfs] {
        &self.systems
    }

    pub fn system(&self, j: usize) -> &WeightedIfs {
        &self.systems[j]
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn max_maps(&self) -> usize {
        self.systems.iter().map(WeightedIfs::len).max().unwrap_or(0)
    }

    /// Cached extrema; `None` for an empty catalog.
    pub fn extrema(&self) -> Option<ScaleExtrema> {
        self.extrema
    }

    pub fn to_config(&self) -> CatalogConfig {
        CatalogConfig {
            interval: [self.a, self.b],
            systems: self.systems.clone(),
            p: Some(self.p.clone()),
        }
    }
}

fn compute_extrema(systems: &[WeightedIfs]) -> Option<ScaleExtrema> {
    let rs = || systems.iter().flat_map(|s| s.maps.iter().map(|m| m.r));
    let ms = || systems.iter().flat_map(|s| s.weights.iter().copied());
    if rs().next().is_none() || ms().next().is_none() {
        return None;
    }
    let r_inf = rs().fold(f64::INFINITY, f64::min);
    let r_sup = rs().fold(f64::NEG_INFINITY, f64::max);
    let m_inf = ms().fold(f64::INFINITY, f64::min);
    let m_sup = ms().fold(f64::NEG_INFINITY, f64::max);
    Some(ScaleExtrema {
        r_inf,
        r_sup,
        m_inf,
        m_sup,
        eta: r_inf * m_inf,
    })
}

/// Exact extrema of ratios and weights; `eta = r_inf * m_inf`.
pub fn scale_extrema(catalog: &Catalog) -> Result<ScaleExtrema> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    catalog.extrema.ok_or(Error::EmptyCatalog)
}

/// JSON form of a catalog.
///
/// ```json
/// { "interval": [0, 1],
///   "systems": [ { "maps": [ {"r": 0.333.., "c": 0}, {"r": 0.333.., "c": 0.666..} ],
///                  "weights": [0.5, 0.5] } ],
///   "p": [1.0] }
/// ```
///
/// `interval` defaults to `[0, 1]`; `p` defaults to uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogConfig {
    #[serde(default = "default_interval")]
    pub interval: [f64; 2],
    pub systems: Vec<WeightedIfs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
}

fn default_interval() -> [f64; 2] {
    [0.0, 1.0]
}

impl CatalogConfig {
    /// Converts without validation, so that violations can be reported.
    pub fn to_catalog(&self) -> Catalog {
        let p = self.p.clone().unwrap_or_else(|| {
            let n = self.systems.len().max(1);
            vec![1.0 / n as f64; self.systems.len()]
        });
        Catalog::new((self.interval[0], self.interval[1]), self.systems.clone(), p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyCatalog,
    BadInterval {
        a: f64,
        b: f64,
    },
    NonFinite {
        system: usize,
        map: usize,
    },
    TooFewMaps {
        system: usize,
        count: usize,
    },
    WeightCount {
        system: usize,
        maps: usize,
        weights: usize,
    },
    RatioOutOfRange {
        system: usize,
        map: usize,
        r: f64,
    },
    WeightOutOfRange {
        system: usize,
        map: usize,
        m: f64,
    },
    WeightSum {
        system: usize,
        sum: f64,
    },
    LeftNotAnchored {
        system: usize,
        image: f64,
    },
    RightNotAnchored {
        system: usize,
        image: f64,
    },
    CellsOverlap {
        system: usize,
        map: usize,
        right: f64,
        next_left: f64,
    },
    ProbabilityCount {
        systems: usize,
        entries: usize,
    },
    ProbabilityNegative {
        system: usize,
        p: f64,
    },
    ProbabilitySum {
        sum: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match *self {
            EmptyCatalog => write!(f, "catalog has no systems"),
            BadInterval { a, b } => write!(f, "base interval [{a}, {b}] must satisfy a < b"),
            NonFinite { system, map } => write!(f, "system {system} map {map}: non-finite value"),
            TooFewMaps { system, count } => {
                write!(f, "system {system}: N_j >= 2 required, found {count}")
            }
            WeightCount { system, maps, weights } => {
                write!(f, "system {system}: {maps} maps but {weights} weights")
            }
            RatioOutOfRange { system, map, r } => {
                write!(f, "system {system} map {map}: ratio {r} not in (0, 1)")
            }
            WeightOutOfRange { system, map, m } => {
                write!(f, "system {system} map {map}: weight {m} not in (0, 1)")
            }
            WeightSum { system, sum } => write!(f, "system {system}: weights sum to {sum}, not 1"),
            LeftNotAnchored { system, image } => {
                write!(f, "system {system}: S_1(a) = {image} must equal a")
            }
            RightNotAnchored { system, image } => {
                write!(f, "system {system}: S_N(b) = {image} must equal b")
            }
            CellsOverlap {
                system,
                map,
                right,
                next_left,
            } => write!(
                f,
                "system {system}: cells overlap: S_{}(b)={right} > S_{}(a)={next_left}",
                map + 1,
                map + 2
            ),
            ProbabilityCount { systems, entries } => {
                write!(f, "p has {entries} entries for {systems} systems")
            }
            ProbabilityNegative { system, p } => write!(f, "p[{system}] = {p} is negative"),
            ProbabilitySum { sum } => write!(f, "p sums to {sum}, not 1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Present when the catalog is non-empty.
    pub extrema: Option<ScaleExtrema>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the ordering chain `a = S_1(a) < S_1(b) <= S_2(a) < ... < S_N(b) = b`,
/// `N_j >= 2`, ratio and weight ranges, weight normalization and the index
/// distribution. Violations are collected, never raised.
pub fn validate_catalog(catalog: &Catalog) -> ValidationReport {
    let mut violations = Vec::new();
    let (a, b) = catalog.interval();
    if !(a.is_finite() && b.is_finite() && a < b) {
        violations.push(Violation::BadInterval { a, b });
    }
    if catalog.is_empty() {
        violations.push(Violation::EmptyCatalog);
    }
    let tol = ENDPOINT_TOL * (b - a).abs().max(f64::MIN_POSITIVE);

    for (j, sys) in catalog.systems().iter().enumerate() {
        if sys.maps.len() < 2 {
            violations.push(Violation::TooFewMaps {
                system: j,
                count: sys.maps.len(),
            });
        }
        if sys.weights.len() != sys.maps.len() {
            violations.push(Violation::WeightCount {
                system: j,
                maps: sys.maps.len(),
                weights: sys.weights.len(),
            });
        }
        let mut finite = true;
        for (i, map) in sys.maps.iter().enumerate() {
            if !(map.r.is_finite() && map.c.is_finite()) {
                violations.push(Violation::NonFinite { system: j, map: i });
                finite = false;
            } else if !(map.r > 0.0 && map.r < 1.0) {
                violations.push(Violation::RatioOutOfRange {
                    system: j,
                    map: i,
                    r: map.r,
                });
            }
        }
        for (i, &m) in sys.weights.iter().enumerate() {
            if !m.is_finite() {
                violations.push(Violation::NonFinite { system: j, map: i });
            } else if !(m > 0.0 && m < 1.0) {
                violations.push(Violation::WeightOutOfRange { system: j, map: i, m });
            }
        }
        let sum: f64 = sys.weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            violations.push(Violation::WeightSum { system: j, sum });
        }
        if !finite || sys.maps.is_empty() {
            continue;
        }
        let first = sys.maps[0].apply(a);
        if (first - a).abs() > tol {
            violations.push(Violation::LeftNotAnchored {
                system: j,
                image: first,
            });
        }
        let last = sys.maps[sys.maps.len() - 1].apply(b);
        if (last - b).abs() > tol {
            violations.push(Violation::RightNotAnchored { system: j, image: last });
        }
        for (i, pair) in sys.maps.windows(2).enumerate() {
            let right = pair[0].apply(b);
            let next_left = pair[1].apply(a);
            if right > next_left + tol {
                violations.push(Violation::CellsOverlap {
                    system: j,
                    map: i,
                    right,
                    next_left,
                });
            }
        }
    }

    let p = catalog.probabilities();
    if p.len() != catalog.len() {
        violations.push(Violation::ProbabilityCount {
            systems: catalog.len(),
            entries: p.len(),
        });
    }
    for (j, &pj) in p.iter().enumerate() {
        if pj.is_nan() || pj < 0.0 {
            violations.push(Violation::ProbabilityNegative { system: j, p: pj });
        }
    }
    if !p.is_empty() {
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            violations.push(Violation::ProbabilitySum { sum });
        }
    }

    ValidationReport {
        violations,
        extrema: catalog.extrema(),
    }
}

/// Ready-made catalogs used by tests, examples and the CLI.
pub mod presets {
    use super::*;

    /// Middle-thirds Cantor system with equal weights.
    pub fn cantor_system() -> WeightedIfs {
        WeightedIfs::new(
            vec![
                ContractionMap::new(1.0 / 3.0, 0.0),
                ContractionMap::new(1.0 / 3.0, 2.0 / 3.0),
            ],
            vec![0.5, 0.5],
        )
    }

    /// Two halves with equal weights; the invariant measure is Lebesgue.
    pub fn halves_system() -> WeightedIfs {
        WeightedIfs::new(
            vec![ContractionMap::new(0.5, 0.0), ContractionMap::new(0.5, 0.5)],
            vec![0.5, 0.5],
        )
    }

    /// Three maps of ratio 1/5 at 0, 2/5, 4/5 with weights 1/3.
    pub fn fifths_system() -> WeightedIfs {
        WeightedIfs::new(
            vec![
                ContractionMap::new(0.2, 0.0),
                ContractionMap::new(0.2, 0.4),
                ContractionMap::new(0.2, 0.8),
            ],
            vec![1.0 / 3.0; 3],
        )
    }

    /// Uneven two-map system: `[0, 1/4]` and `[1/2, 1]` with weights 0.3 / 0.7.
    pub fn uneven_system() -> WeightedIfs {
        WeightedIfs::new(
            vec![ContractionMap::new(0.25, 0.0), ContractionMap::new(0.5, 0.5)],
            vec![0.3, 0.7],
        )
    }

    pub fn cantor() -> Catalog {
        Catalog::validated((0.0, 1.0), vec![cantor_system()], vec![1.0]).expect("valid")
    }

    pub fn lebesgue() -> Catalog {
        Catalog::validated((0.0, 1.0), vec![halves_system()], vec![1.0]).expect("valid")
    }

    /// Cantor and fifths systems with `p = (1/2, 1/2)`.
    pub fn cantor_fifths() -> Catalog {
        Catalog::validated((0.0, 1.0), vec![cantor_system(), fifths_system()], vec![0.5, 0.5]).expect("valid")
    }

    /// Cantor and uneven systems with `p = (1/2, 1/2)`; every system has two maps.
    pub fn cantor_uneven() -> Catalog {
        Catalog::validated((0.0, 1.0), vec![cantor_system(), uneven_system()], vec![0.5, 0.5]).expect("valid")
    }
}
