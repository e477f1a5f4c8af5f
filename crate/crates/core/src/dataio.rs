//! Ingestion of observed series and the empirical persistence pipeline:
//! point estimates with persistence scales, plug-in and bootstrap intervals,
//! p-value curves over hypothesized slopes, the conditional-variance
//! exponent diagnostic, and window-sensitivity scans.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{self, EstimateResult, VarianceExponent};
use crate::inference::{
    self, BootstrapCi, InferOptions, PluginInference, PvalueCurve, SandwichSe, TestMethod,
    WeightDist,
};

/// Smallest series the pipeline will touch.
pub const MIN_OBSERVATIONS: usize = 10;

/// One observed nonnegative series with its metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub values: Vec<f64>,
    /// Sampling frequency label, e.g. "annual" or "monthly".
    pub frequency: String,
    pub units: String,
    /// True when every value is an integer (count data).
    pub integer_flag: bool,
    /// Multiplier applied at load time (1 when no unit conversion was
    /// requested); dividing the values by it recovers the file's numbers.
    pub scale: f64,
    /// Rows dropped by the missing-value policy.
    pub dropped_rows: Vec<usize>,
}

impl Dataset {
    /// Wrap raw values, computing the integer flag.
    pub fn from_values(name: &str, values: Vec<f64>) -> Result<Dataset> {
        let ds = Dataset {
            name: name.to_string(),
            values,
            frequency: String::new(),
            units: String::new(),
            integer_flag: false,
            scale: 1.0,
            dropped_rows: Vec::new(),
        };
        let ds = Dataset {
            integer_flag: ds.values.iter().all(|v| v.fract() == 0.0),
            ..ds
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        if let Some((i, &v)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::NegativeValue { row: i + 1, value: v });
        }
        if self.integer_flag != self.values.iter().all(|v| v.fract() == 0.0) {
            return Err(Error::InvalidInput(
                "integer flag inconsistent with values".into(),
            ));
        }
        Ok(())
    }

    /// Write the values as a single-column CSV that loads back exactly.
    pub fn write_values_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for v in &self.values {
            out.push_str(&format!("{v}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// What to do with a missing field in the chosen column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaPolicy {
    /// Error out (the default: silently shortening a time series changes
    /// every lag relation).
    #[default]
    Strict,
    /// Skip the row and record its number.
    Drop,
}

/// Which CSV column holds the series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnSel {
    Index(usize),
    Name(String),
}

impl Default for ColumnSel {
    fn default() -> ColumnSel {
        ColumnSel::Index(0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadOptions {
    pub column: ColumnSel,
    pub has_header: bool,
    pub delimiter: u8,
    pub na_policy: NaPolicy,
    /// Optional unit conversion applied to every value (e.g. 100 to turn
    /// percentage points into basis points). Must be positive.
    pub scale: Option<f64>,
    pub name: String,
    pub frequency: String,
    pub units: String,
}

impl Default for LoadOptions {
    fn default() -> LoadOptions {
        LoadOptions {
            column: ColumnSel::default(),
            has_header: false,
            delimiter: b',',
            na_policy: NaPolicy::default(),
            scale: None,
            name: String::new(),
            frequency: String::new(),
            units: String::new(),
        }
    }
}

fn is_missing(field: &str) -> bool {
    let t = field.trim();
    t.is_empty() || t == "." || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("n/a")
        || t.eq_ignore_ascii_case("nan")
}

/// Load one nonnegative series from a CSV file. Row numbers in errors are
/// 1-based file lines.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let scale = match opts.scale {
        None => 1.0,
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => {
            return Err(Error::InvalidInput(format!("scale must be positive, got {s}")))
        }
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .delimiter(opts.delimiter)
        .flexible(false)
        .from_path(path)?;
    let col = match &opts.column {
        ColumnSel::Index(i) => *i,
        ColumnSel::Name(name) => {
            if !opts.has_header {
                return Err(Error::InvalidInput(format!(
                    "column selected by name {name:?} but the file has no header"
                )));
            }
            reader
                .headers()?
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("no column named {name:?} in {path:?}"))
                })?
        }
    };
    let mut values = Vec::new();
    let mut dropped_rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(values.len() + 1);
        let field = record.get(col).ok_or(Error::Parse {
            row,
            message: format!("row has {} fields, wanted column {col}", record.len()),
        })?;
        if is_missing(field) {
            match opts.na_policy {
                NaPolicy::Strict => return Err(Error::MissingValue { row }),
                NaPolicy::Drop => {
                    dropped_rows.push(row);
                    continue;
                }
            }
        }
        let raw: f64 = field.trim().parse().map_err(|e| Error::Parse {
            row,
            message: format!("{field:?}: {e}"),
        })?;
        if !raw.is_finite() || raw < 0.0 {
            return Err(Error::NegativeValue { row, value: raw });
        }
        values.push(raw * scale);
    }
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("no usable rows in {path:?}")));
    }
    let name = if opts.name.is_empty() {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "series".into())
    } else {
        opts.name.clone()
    };
    let integer_flag = values.iter().all(|v| v.fract() == 0.0);
    let ds = Dataset {
        name,
        values,
        frequency: opts.frequency.clone(),
        units: opts.units.clone(),
        integer_flag,
        scale,
        dropped_rows,
    };
    ds.validate()?;
    Ok(ds)
}

/// Point estimates and the implied persistence scales for one series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersistenceRow {
    pub name: String,
    /// Observations in the series (the fit uses n - 1 transitions).
    pub n: usize,
    pub alpha_hat: f64,
    pub mu_hat: f64,
    pub sigma2_hat: f64,
    /// 1/(1 - alpha_hat); absent when alpha_hat >= 1.
    pub k_hat: Option<f64>,
    pub k_hat_over_n: Option<f64>,
    /// ln(k_hat) / ln(transitions); absent with k_hat.
    pub tau_hat: Option<f64>,
    /// The implied persistence scale exceeds the sample size: the window
    /// is too short to distinguish this slope from a unit root.
    pub k_exceeds_n: bool,
    pub variance_warning: bool,
}

impl PersistenceRow {
    pub fn from_estimate(name: &str, n_obs: usize, est: &EstimateResult) -> PersistenceRow {
        PersistenceRow {
            name: name.to_string(),
            n: n_obs,
            alpha_hat: est.alpha_hat,
            mu_hat: est.mu_hat,
            sigma2_hat: est.sigma2_hat,
            k_hat: est.k_hat,
            k_hat_over_n: est.k_hat.map(|k| k / n_obs as f64),
            tau_hat: est.tau_hat,
            k_exceeds_n: est.k_hat.map_or(true, |k| k > n_obs as f64),
            variance_warning: est.variance_warning,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Bootstrap replications.
    pub b: usize,
    /// Interval confidence level.
    pub level: f64,
    /// Hypothesized slopes for the p-value curves.
    pub grid: Vec<f64>,
    /// Which standard errors drive the p-value curves.
    pub methods: Vec<TestMethod>,
    pub weights: WeightDist,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> PipelineOptions {
        PipelineOptions {
            b: 1000,
            level: 0.95,
            grid: inference::default_alpha_grid(),
            methods: vec![TestMethod::PluginSe, TestMethod::BootstrapSe],
            weights: WeightDist::Exp1,
            seed: 0,
        }
    }
}

/// Everything the empirical pipeline produces for one series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub row: PersistenceRow,
    pub estimate: EstimateResult,
    /// Plug-in interval; absent (with the reason) when alpha_hat >= 1.
    pub plugin: Option<PluginInference>,
    pub plugin_error: Option<String>,
    pub sandwich: Option<SandwichSe>,
    pub sandwich_error: Option<String>,
    pub bootstrap: BootstrapCi,
    pub bootstrap_sd: (f64, f64),
    pub curves: Vec<PvalueCurve>,
    pub variance_exponent: Option<VarianceExponent>,
    pub variance_exponent_error: Option<String>,
    pub options: PipelineOptions,
}

/// Run the full persistence pipeline on one series: least-squares fit,
/// plug-in and bootstrap intervals at `options.level`, p-value curves per
/// requested method, and the conditional-variance exponent diagnostic.
pub fn apply_pipeline(dataset: &Dataset, options: &PipelineOptions) -> Result<ReportBundle> {
    dataset.validate()?;
    if dataset.n() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData {
            got: dataset.n(),
            need: MIN_OBSERVATIONS,
        });
    }
    let values = &dataset.values;
    let est = estimate::ols(values)?;
    let row = PersistenceRow::from_estimate(&dataset.name, dataset.n(), &est);
    let (plugin, plugin_error) = split(inference::plugin_ci(&est, options.level));
    let (sandwich, sandwich_error) = split(inference::sandwich_se(values, &est));
    let draws = inference::bootstrap(values, options.b, options.weights, options.seed)?;
    let bootstrap = inference::bootstrap_ci(&draws, options.level)?;
    let bootstrap_sd = draws.sd();
    let infer_opts = InferOptions {
        b: options.b,
        weights: options.weights,
        seed: options.seed,
        ..InferOptions::default()
    };
    let curves = options
        .methods
        .iter()
        .map(|&m| inference::pvalue_curve(values, &options.grid, m, &infer_opts))
        .collect::<Result<Vec<_>>>()?;
    let (variance_exponent, variance_exponent_error) = split(estimate::variance_exponent(values));
    Ok(ReportBundle {
        row,
        estimate: est,
        plugin,
        plugin_error,
        sandwich,
        sandwich_error,
        bootstrap,
        bootstrap_sd,
        curves,
        variance_exponent,
        variance_exponent_error,
        options: options.clone(),
    })
}

fn split<T>(r: Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(format!("{}: {e}", e.code()))),
    }
}

/// Re-estimate over index windows `[start, end)` of the series. Each
/// window needs at least `MIN_OBSERVATIONS` observations; `k_exceeds_n`
/// flags windows too short for their own persistence estimate.
pub fn window_sensitivity(
    dataset: &Dataset,
    windows: &[(usize, usize)],
) -> Result<Vec<PersistenceRow>> {
    dataset.validate()?;
    if windows.is_empty() {
        return Err(Error::InvalidInput("no windows requested".into()));
    }
    windows
        .iter()
        .map(|&(start, end)| {
            if start >= end || end > dataset.n() || end - start < MIN_OBSERVATIONS {
                return Err(Error::WindowTooShort { start, end });
            }
            let slice = &dataset.values[start..end];
            let est = estimate::ols(slice)?;
            let name = format!("{}[{start}..{end}]", dataset.name);
            Ok(PersistenceRow::from_estimate(&name, end - start, &est))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    /// A positively autocorrelated count series long enough for the
    /// pipeline; values chosen so every estimator is well-defined.
    fn sample_series() -> Vec<f64> {
        let mut rng = crate::rng::stream_rng(42, &[99, 1]);
        let spec = crate::affine::AffineSpec::Inarch { mu: 1.0 };
        crate::affine::simulate_with_alpha(&spec, 0.9, 80, 10.0, &mut rng)
            .unwrap()
            .values
    }

    #[test]
    fn loads_single_column_headerless() {
        let f = write_temp("1\n2\n3\n");
        let ds = load_csv(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.values, vec![1.0, 2.0, 3.0]);
        assert!(ds.integer_flag);
        assert_eq!(ds.scale, 1.0);
        assert!(ds.dropped_rows.is_empty());
    }

    #[test]
    fn negative_entry_reports_its_row() {
        let f = write_temp("1\n-2\n3\n");
        match load_csv(f.path(), &LoadOptions::default()) {
            Err(Error::NegativeValue { row, value }) => {
                assert_eq!(row, 2);
                assert_eq!(value, -2.0);
            }
            other => panic!("expected a negative-value error, got {other:?}"),
        }
    }

    #[test]
    fn missing_value_strict_vs_drop() {
        let text = "date,rate\n2001-01,4.5\n2001-02,.\n2001-03,5.0\n";
        let f = write_temp(text);
        let opts = LoadOptions {
            column: ColumnSel::Name("rate".into()),
            has_header: true,
            ..LoadOptions::default()
        };
        match load_csv(f.path(), &opts) {
            Err(Error::MissingValue { row }) => assert_eq!(row, 3),
            other => panic!("expected a missing-value error, got {other:?}"),
        }
        let dropped = load_csv(
            f.path(),
            &LoadOptions {
                na_policy: NaPolicy::Drop,
                ..opts
            },
        )
        .unwrap();
        assert_eq!(dropped.values, vec![4.5, 5.0]);
        assert_eq!(dropped.dropped_rows, vec![3]);
        assert!(!dropped.integer_flag);
    }

    #[test]
    fn percent_to_basis_points_scaling() {
        let f = write_temp("4.25\n5.50\n");
        let ds = load_csv(
            f.path(),
            &LoadOptions {
                scale: Some(100.0),
                units: "basis points".into(),
                ..LoadOptions::default()
            },
        )
        .unwrap();
        assert_eq!(ds.values, vec![425.0, 550.0]);
        assert!(ds.integer_flag);
        assert_eq!(ds.scale, 100.0);
    }

    #[test]
    fn values_round_trip_exactly_through_csv() {
        let original = vec![0.1, 2.0 / 3.0, 1e-17, 16.9, 101.74];
        let ds = Dataset::from_values("roundtrip", original.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        ds.write_values_csv(&path).unwrap();
        let back = load_csv(&path, &LoadOptions::default()).unwrap();
        assert_eq!(back.values, original);
    }

    #[test]
    fn parse_error_names_the_row() {
        let f = write_temp("1\ntwo\n3\n");
        match load_csv(f.path(), &LoadOptions::default()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn pipeline_produces_a_full_bundle() {
        let ds = Dataset::from_values("synthetic", sample_series()).unwrap();
        let opts = PipelineOptions {
            b: 200,
            grid: (80..100).map(|i| i as f64 / 100.0).collect(),
            ..PipelineOptions::default()
        };
        let bundle = apply_pipeline(&ds, &opts).unwrap();
        assert_eq!(bundle.row.n, ds.n());
        assert_eq!(bundle.estimate.n, ds.n() - 1);
        assert!(bundle.row.alpha_hat.is_finite());
        assert_eq!(bundle.curves.len(), 2);
        assert_eq!(bundle.curves[0].points.len(), 20);
        if let Some(k) = bundle.row.k_hat {
            assert!((bundle.row.tau_hat.unwrap()
                - k.ln() / ((ds.n() - 1) as f64).ln())
            .abs()
                < 1e-12);
        }
        // deterministic: same options, same bundle
        let again = apply_pipeline(&ds, &opts).unwrap();
        assert_eq!(
            serde_json::to_string(&bundle).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn pipeline_rejects_short_series() {
        let ds = Dataset::from_values("short", vec![1.0; 9]).unwrap();
        assert!(matches!(
            apply_pipeline(&ds, &PipelineOptions::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn full_window_matches_whole_series_estimates() {
        let ds = Dataset::from_values("synthetic", sample_series()).unwrap();
        let full = window_sensitivity(&ds, &[(0, ds.n())]).unwrap();
        let est = estimate::ols(&ds.values).unwrap();
        assert_eq!(full[0].alpha_hat, est.alpha_hat);
        assert_eq!(full[0].mu_hat, est.mu_hat);
        assert_eq!(full[0].k_hat, est.k_hat);
    }

    #[test]
    fn window_too_short_is_an_error() {
        let ds = Dataset::from_values("synthetic", sample_series()).unwrap();
        match window_sensitivity(&ds, &[(0, 9)]) {
            Err(Error::WindowTooShort { start: 0, end: 9 }) => {}
            other => panic!("expected a window error, got {other:?}"),
        }
        assert!(window_sensitivity(&ds, &[(5, ds.n() + 1)]).is_err());
    }

    #[test]
    fn short_window_flags_k_exceeding_n() {
        // a nearly flat stretch of a persistent series: the windowed slope
        // sits close to one, so k_hat can top the window length
        let ds = Dataset::from_values("synthetic", sample_series()).unwrap();
        let rows = window_sensitivity(&ds, &[(0, 12), (0, ds.n())]).unwrap();
        for row in &rows {
            match row.k_hat {
                Some(k) => assert_eq!(row.k_exceeds_n, k > row.n as f64),
                None => assert!(row.k_exceeds_n),
            }
        }
    }
}
