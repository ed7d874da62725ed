//! Heavy-tailed target distributions and their reference statistics.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{DEFAULT_WINDOW_MAX, QUADRATURE_REL_TOL};
use crate::error::{Error, Result};
use crate::quadrature::{decade_breakpoints, integrate};

/// Domain of interest `[x_min, x_max]` for fitting and reference statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
}

impl Window {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min < 0.0 || x_min >= x_max {
            return Err(Error::InvalidParameter(format!(
                "window [{x_min}, {x_max}] must satisfy 0 <= x_min < x_max"
            )));
        }
        Ok(Window { x_min, x_max })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }
}

impl Default for Window {
    fn default() -> Self {
        Window { x_min: 0.0, x_max: DEFAULT_WINDOW_MAX }
    }
}

impl TryFrom<[f64; 2]> for Window {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        Window::new(v[0], v[1])
    }
}

impl From<Window> for [f64; 2] {
    fn from(w: Window) -> Self {
        [w.x_min, w.x_max]
    }
}

/// CCDF given at strictly increasing abscissae.
///
/// Between knots `ln ccdf` is interpolated linearly in `x`; an anchor
/// `(0, 1)` is implied when the table does not start at the origin. Past the
/// last knot the tail continues as a power law with the log-log slope of the
/// final two knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    log_ccdf: Vec<f64>,
    raw: Vec<(f64, f64)>,
    tail_slope: TailSlope,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TailSlope {
    /// `ln ccdf` linear in `ln x`.
    Power(f64),
    /// `ln ccdf` linear in `x` (only when the last two knots include `x = 0`).
    Exponential(f64),
}

impl Table {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("tabulated target needs at least one row".into()));
        }
        for (i, &(x, c)) in points.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidParameter(format!("row {i}: abscissa {x} must be >= 0")));
            }
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "row {i}: ccdf {c} must lie in (0, 1]"
                )));
            }
            if i > 0 {
                let (px, pc) = points[i - 1];
                if x <= px {
                    return Err(Error::InvalidParameter(format!(
                        "row {i}: abscissae must be strictly increasing"
                    )));
                }
                if c > pc {
                    return Err(Error::InvalidParameter(format!(
                        "row {i}: ccdf must be nonincreasing"
                    )));
                }
            }
        }
        let mut knots = points.clone();
        if knots[0].0 > 0.0 {
            knots.insert(0, (0.0, 1.0));
        }
        let xs: Vec<f64> = knots.iter().map(|p| p.0).collect();
        let log_ccdf: Vec<f64> = knots.iter().map(|p| p.1.ln()).collect();
        let tail_slope = match knots.len() {
            1 => TailSlope::Exponential(0.0),
            len => {
                let (x0, l0) = (xs[len - 2], log_ccdf[len - 2]);
                let (x1, l1) = (xs[len - 1], log_ccdf[len - 1]);
                if x0 > 0.0 {
                    TailSlope::Power((l1 - l0) / (x1.ln() - x0.ln()))
                } else {
                    TailSlope::Exponential((l1 - l0) / (x1 - x0))
                }
            }
        };
        Ok(Table { xs, log_ccdf, raw: points, tail_slope })
    }

    /// Reads an `x,ccdf` CSV with a header row. The CCDF is taken from a
    /// column named `ccdf` or `model_ccdf` if present, else the second column.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = ["ccdf", "model_ccdf"]
            .iter()
            .find_map(|name| headers.iter().position(|h| h == *name))
            .unwrap_or(1);
        let mut points = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() <= col {
                return Err(Error::InvalidParameter(format!(
                    "expected at least {} columns, found {}",
                    col + 1,
                    record.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("cannot parse '{s}': {e}")))
            };
            points.push((parse(&record[0])?, parse(&record[col])?));
        }
        Table::new(points)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Table::from_csv_reader(std::fs::File::open(path)?)
    }

    /// The rows as given, without the implicit origin anchor.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.raw
    }

    /// Knot abscissae including the implied origin.
    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    fn sf(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let last = n - 1;
        if x >= self.xs[last] {
            let l = self.log_ccdf[last]
                + match self.tail_slope {
                    TailSlope::Power(s) => s * (x.ln() - self.xs[last].ln()),
                    TailSlope::Exponential(s) => s * (x - self.xs[last]),
                };
            return l.exp();
        }
        // first knot is always 0 after anchoring
        let idx = self.xs.partition_point(|&k| k <= x);
        let (x0, x1) = (self.xs[idx - 1], self.xs[idx]);
        let (l0, l1) = (self.log_ccdf[idx - 1], self.log_ccdf[idx]);
        (l0 + (l1 - l0) * (x - x0) / (x1 - x0)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    /// `ccdf = (1 + x^c)^-d`.
    Burr { c: f64, d: f64 },
    /// Shifted (Lomax) form `ccdf = (1 + x)^-shape`.
    Pareto { shape: f64 },
    Lognormal { mu: f64, sigma: f64 },
    /// `ccdf = exp(-(x / scale)^shape)`.
    Weibull { scale: f64, shape: f64 },
    Tabulated(Table),
}

impl TargetKind {
    pub fn name(&self) -> &'static str {
        match self {
            TargetKind::Burr { .. } => "burr",
            TargetKind::Pareto { .. } => "pareto",
            TargetKind::Lognormal { .. } => "lognormal",
            TargetKind::Weibull { .. } => "weibull",
            TargetKind::Tabulated(_) => "tabulated",
        }
    }
}

/// First two window moments and the derived coefficient of variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub mean: f64,
    pub second_moment: f64,
    pub cv: f64,
}

impl MomentStats {
    pub fn from_moments(m1: f64, m2: f64) -> Result<Self> {
        let var = m2 - m1 * m1;
        if var < 0.0 {
            // allow rounding noise on near-deterministic inputs
            if var < -1e-12 * m2.abs() {
                return Err(Error::Internal(format!("negative variance {var:e} (m1 = {m1}, m2 = {m2})")));
            }
        }
        if m1 <= 0.0 {
            return Err(Error::Internal(format!("nonpositive mean {m1}")));
        }
        Ok(MomentStats { mean: m1, second_moment: m2, cv: var.max(0.0).sqrt() / m1 })
    }
}

/// An immutable heavy-tailed target together with its window of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    kind: TargetKind,
    window: Window,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be a positive real, got {v}")))
    }
}

impl TargetDistribution {
    pub fn new(kind: TargetKind, window: Window) -> Result<Self> {
        match &kind {
            TargetKind::Burr { c, d } => {
                check_positive("c", *c)?;
                check_positive("d", *d)?;
            }
            TargetKind::Pareto { shape } => check_positive("shape", *shape)?,
            TargetKind::Lognormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(Error::InvalidParameter(format!("mu must be finite, got {mu}")));
                }
                check_positive("sigma", *sigma)?;
            }
            TargetKind::Weibull { scale, shape } => {
                check_positive("scale", *scale)?;
                check_positive("shape", *shape)?;
            }
            TargetKind::Tabulated(_) => {}
        }
        Ok(TargetDistribution { kind, window })
    }

    pub fn burr(c: f64, d: f64) -> Result<Self> {
        Self::new(TargetKind::Burr { c, d }, Window::default())
    }

    pub fn pareto(shape: f64) -> Result<Self> {
        Self::new(TargetKind::Pareto { shape }, Window::default())
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(TargetKind::Lognormal { mu, sigma }, Window::default())
    }

    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        Self::new(TargetKind::Weibull { scale, shape }, Window::default())
    }

    pub fn tabulated(table: Table) -> Result<Self> {
        Self::new(TargetKind::Tabulated(table), Window::default())
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Survival function for `x >= 0`; returns 1 for negative arguments
    /// (there is no mass below the origin).
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return match &self.kind {
                TargetKind::Tabulated(t) => t.sf(0.0),
                _ => 1.0,
            };
        }
        match &self.kind {
            TargetKind::Burr { c, d } => (-d * x.powf(*c).ln_1p()).exp(),
            TargetKind::Pareto { shape } => (-shape * x.ln_1p()).exp(),
            TargetKind::Lognormal { mu, sigma } => {
                0.5 * statrs::function::erf::erfc((x.ln() - mu) / (sigma * std::f64::consts::SQRT_2))
            }
            TargetKind::Weibull { scale, shape } => (-(x / scale).powf(*shape)).exp(),
            TargetKind::Tabulated(t) => t.sf(x),
        }
    }

    fn check_domain(x: f64) -> Result<()> {
        if x.is_nan() || x < 0.0 {
            Err(Error::Domain(format!("x = {x} must be nonnegative")))
        } else {
            Ok(())
        }
    }

    pub fn ccdf(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        Ok(self.sf(x))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.ccdf(x)?)
    }

    /// Density for `x >= 0`, unchecked variant of [`pdf`](Self::pdf).
    pub fn density(&self, x: f64) -> f64 {
        match &self.kind {
            TargetKind::Burr { c, d } => {
                if x == 0.0 {
                    return if *c < 1.0 {
                        f64::INFINITY
                    } else if *c == 1.0 {
                        c * d
                    } else {
                        0.0
                    };
                }
                let xc = x.powf(*c);
                c * d * xc / x * (-(d + 1.0) * xc.ln_1p()).exp()
            }
            TargetKind::Pareto { shape } => shape * (-(shape + 1.0) * x.ln_1p()).exp(),
            TargetKind::Lognormal { mu, sigma } => {
                if x == 0.0 {
                    return 0.0;
                }
                let z = (x.ln() - mu) / sigma;
                (-0.5 * z * z).exp() / (x * sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            TargetKind::Weibull { scale, shape } => {
                if x == 0.0 {
                    return if *shape < 1.0 {
                        f64::INFINITY
                    } else if *shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    };
                }
                let r = x / scale;
                shape / scale * r.powf(shape - 1.0) * (-r.powf(*shape)).exp()
            }
            TargetKind::Tabulated(t) => {
                // central difference of the interpolated CDF
                let h = 1e-6 * x.max(1e-3);
                let (lo, hi) = if x >= h { (x - h, x + h) } else { (x, x + h) };
                ((t.sf(lo) - t.sf(hi)) / (hi - lo)).max(0.0)
            }
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        Ok(self.density(x))
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = decade_breakpoints(a, b);
        if let TargetKind::Tabulated(t) = &self.kind {
            pts.extend(t.knots().iter().copied().filter(|&k| k > a && k < b));
            pts.sort_by(f64::total_cmp);
            pts.dedup();
        }
        pts
    }

    /// `order * integral over window of x^(order-1) * ccdf(x)`.
    pub fn numeric_moment(&self, order: u32, window: Window) -> Result<f64> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidParameter(format!("moment order {order} not in {{1, 2}}")));
        }
        let bp = self.breakpoints(window.x_min, window.x_max);
        let r = match order {
            1 => integrate(|x| self.sf(x), &bp, QUADRATURE_REL_TOL, 1e-300)?,
            _ => integrate(|x| x * self.sf(x), &bp, QUADRATURE_REL_TOL, 1e-300)?,
        };
        Ok(order as f64 * r.value)
    }

    /// Mean and CV restricted to `window` (the "real" statistics a fit is
    /// compared against).
    pub fn reference_stats(&self, window: Window) -> Result<MomentStats> {
        let m1 = self.numeric_moment(1, window)?;
        let m2 = self.numeric_moment(2, window)?;
        MomentStats::from_moments(m1, m2)
    }

    pub fn to_spec(&self) -> TargetSpec {
        let mut params = BTreeMap::new();
        let mut table = None;
        match &self.kind {
            TargetKind::Burr { c, d } => {
                params.insert("c".into(), *c);
                params.insert("d".into(), *d);
            }
            TargetKind::Pareto { shape } => {
                params.insert("shape".into(), *shape);
            }
            TargetKind::Lognormal { mu, sigma } => {
                params.insert("mu".into(), *mu);
                params.insert("sigma".into(), *sigma);
            }
            TargetKind::Weibull { scale, shape } => {
                params.insert("scale".into(), *scale);
                params.insert("shape".into(), *shape);
            }
            TargetKind::Tabulated(t) => {
                table = Some(t.points().iter().map(|&(x, c)| [x, c]).collect());
            }
        }
        TargetSpec {
            kind: self.kind.name().into(),
            params,
            window: Some(self.window),
            table,
        }
    }
}

/// Serialized form: `{"kind": ..., "params": {...}, "window": [x_min, x_max]}`;
/// tabulated targets carry `"table": [[x, ccdf], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 2]>>,
}

impl TargetSpec {
    pub fn build(&self) -> Result<TargetDistribution> {
        let get = |name: &str| {
            self.params.get(name).copied().ok_or_else(|| {
                Error::InvalidParameter(format!("target '{}' needs parameter '{name}'", self.kind))
            })
        };
        let kind = match self.kind.to_ascii_lowercase().as_str() {
            "burr" => TargetKind::Burr { c: get("c")?, d: get("d")? },
            "pareto" => TargetKind::Pareto { shape: get("shape")? },
            "lognormal" => TargetKind::Lognormal { mu: get("mu")?, sigma: get("sigma")? },
            "weibull" => TargetKind::Weibull { scale: get("scale")?, shape: get("shape")? },
            "tabulated" => {
                let rows = self.table.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("tabulated target needs a 'table'".into())
                })?;
                TargetKind::Tabulated(Table::new(rows.iter().map(|r| (r[0], r[1])).collect())?)
            }
            other => return Err(Error::InvalidParameter(format!("unknown target kind '{other}'"))),
        };
        TargetDistribution::new(kind, self.window.unwrap_or_default())
    }
}

impl Serialize for TargetDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TargetDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        TargetSpec::deserialize(d)?.build().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pareto_values() {
        let t = TargetDistribution::pareto(3.1).unwrap();
        assert_eq!(t.ccdf(0.0).unwrap(), 1.0);
        assert!((t.ccdf(1.0).unwrap() - 2f64.powf(-3.1)).abs() < 1e-15);
        assert!((t.ccdf(1.0).unwrap() - 0.1166).abs() < 1e-4);
    }

    #[test]
    fn burr_values() {
        let t = TargetDistribution::burr(2.0, 1.0).unwrap();
        assert!((t.ccdf(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((t.pdf(1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weibull_value() {
        let t = TargetDistribution::weibull(5.0, 0.2).unwrap();
        assert!((t.ccdf(5.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn lognormal_at_median() {
        let t = TargetDistribution::lognormal(1.0, 2.0).unwrap();
        assert!((t.ccdf(1f64.exp()).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(t.ccdf(0.0).unwrap(), 1.0);
    }

    #[test]
    fn negative_x_is_a_domain_error() {
        let t = TargetDistribution::pareto(3.1).unwrap();
        assert!(matches!(t.ccdf(-1.0), Err(Error::Domain(_))));
        assert!(matches!(t.pdf(-0.5), Err(Error::Domain(_))));
        assert!(matches!(t.cdf(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(TargetDistribution::pareto(0.0).is_err());
        assert!(TargetDistribution::burr(2.0, -1.0).is_err());
        assert!(TargetDistribution::lognormal(1.0, 0.0).is_err());
        assert!(Window::new(5.0, 1.0).is_err());
        assert!(Window::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn table_validation() {
        assert!(Table::new(vec![(1.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(Table::new(vec![(1.0, 0.5), (2.0, 0.6)]).is_err());
        assert!(Table::new(vec![(1.0, 0.0)]).is_err());
        assert!(Table::new(vec![]).is_err());
    }

    #[test]
    fn table_interpolation_and_extension() {
        let t = Table::new(vec![(1.0, 0.5), (2.0, 0.25), (4.0, 0.0625)]).unwrap();
        let d = TargetDistribution::tabulated(t).unwrap();
        assert_eq!(d.sf(0.0), 1.0);
        // log-linear between (0, 1) and (1, 0.5)
        assert!((d.sf(0.5) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((d.sf(2.0) - 0.25).abs() < 1e-15);
        // power law past the last knot: slope ln(0.25)/ln(2) = -2
        assert!((d.sf(8.0) - 0.0625 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_exponential_mean() {
        let rows: Vec<(f64, f64)> = (0..=50).map(|i| (i as f64, (-(i as f64)).exp())).collect();
        let d = TargetDistribution::tabulated(Table::new(rows).unwrap()).unwrap();
        let m = d.numeric_moment(1, Window::new(0.0, 50.0).unwrap()).unwrap();
        assert!((m - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pareto_window_mean() {
        let t = TargetDistribution::pareto(3.1).unwrap();
        let m = t.numeric_moment(1, Window::new(0.0, 1e6).unwrap()).unwrap();
        assert!(((m - 1.0 / 2.1) / (1.0 / 2.1)).abs() < 1e-4);
        assert!((m - 0.476190).abs() < 1e-6);
    }

    #[test]
    fn burr_mean_tends_to_half_pi() {
        let t = TargetDistribution::burr(2.0, 1.0).unwrap();
        let x = 1e8;
        let m = t.numeric_moment(1, Window::new(0.0, x).unwrap()).unwrap();
        // closed form: atan(X)
        assert!((m - x.atan()).abs() < 1e-8);
        assert!((m - std::f64::consts::FRAC_PI_2).abs() < 1e-7);
    }

    #[test]
    fn moment_order_checked() {
        let t = TargetDistribution::pareto(3.1).unwrap();
        assert!(t.numeric_moment(3, Window::default()).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let t = TargetDistribution::weibull(5.0, 0.2).unwrap().with_window(Window::new(0.0, 10.0).unwrap());
        let json = serde_json::to_string(&t).unwrap();
        let back: TargetDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
        let parsed: TargetDistribution =
            serde_json::from_str(r#"{"kind": "pareto", "params": {"shape": 3.1}, "window": [0, 1e6]}"#).unwrap();
        assert_eq!(parsed.window().x_max, 1e6);
    }

    #[test]
    fn csv_table() {
        let csv = "x,ccdf\n0,1\n1,0.5\n2,0.25\n";
        let t = Table::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(t.points().len(), 3);
    }
}
