//! Fidelity reports, rate/accuracy sweeps and BD-rate.
//!
//! No task network is in scope, so the accuracy proxy is feature-space SNR.
//! It is a reconstruction-quality score, not comparable to task metrics such
//! as mAP or MOTA.

use crate::bitstream::accounting;
use crate::pipeline::{decode_with_params, encode, mode_name, EncodeConfig};
use crate::tensor::{compute_stats, FeatureSet};
use crate::{Error, Result};

/// PSNR/SNR values are capped at this many dB (reached on exact
/// reconstruction).
pub const DB_CAP: f64 = 150.0;

/// Reconstruction fidelity of one tensor of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorFidelity {
    pub frame: u32,
    pub tensor: usize,
    pub mse: f64,
    /// `|mean_orig − mean_recon|`.
    pub mean_drift: f64,
    /// `|std_orig − std_recon|`.
    pub std_drift: f64,
    /// Mean drift normalized by the tensor scale `max(|mean|, std)`.
    pub rel_mean_drift: f64,
    /// Std drift normalized by the original std.
    pub rel_std_drift: f64,
}

/// Aggregate reconstruction fidelity of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub per_tensor: Vec<TensorFidelity>,
    pub mse: f64,
    /// PSNR against the original dynamic range, capped at [`DB_CAP`].
    pub psnr_db: f64,
    /// Feature-space SNR, the proxy accuracy score.
    pub snr_db: f64,
    pub max_mean_drift: f64,
    pub max_std_drift: f64,
    pub max_rel_mean_drift: f64,
    pub max_rel_std_drift: f64,
}

/// Compare a reconstructed sequence against the original.
pub fn fidelity(orig: &[FeatureSet], recon: &[FeatureSet]) -> Result<FidelityReport> {
    if orig.len() != recon.len() {
        return Err(Error::InvalidInput(format!(
            "{} original frames vs {} reconstructed",
            orig.len(),
            recon.len()
        )));
    }
    if orig.is_empty() {
        return Err(Error::InvalidInput("empty sequences have no fidelity".into()));
    }

    let mut per_tensor = Vec::new();
    let mut err_sq = 0.0f64;
    let mut orig_sq = 0.0f64;
    let mut count = 0u64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;

    for (frame_no, (fo, fr)) in orig.iter().zip(recon).enumerate() {
        if fo.shape_spec() != fr.shape_spec() {
            return Err(Error::InvalidInput(format!(
                "frame {frame_no}: tensor shapes differ between original and reconstruction"
            )));
        }
        for (tensor_no, (to, tr)) in fo.tensors().iter().zip(fr.tensors()).enumerate() {
            let mut tensor_err = 0.0f64;
            for (&a, &b) in to.data().iter().zip(tr.data()) {
                let (a, b) = (a as f64, b as f64);
                tensor_err += (a - b) * (a - b);
                orig_sq += a * a;
                lo = lo.min(a);
                hi = hi.max(a);
            }
            err_sq += tensor_err;
            count += to.element_count() as u64;

            let so = compute_stats(to);
            let sr = compute_stats(tr);
            let mean_drift = (so.mean as f64 - sr.mean as f64).abs();
            let std_drift = (so.std as f64 - sr.std as f64).abs();
            let scale = (so.mean.abs() as f64).max(so.std as f64).max(f64::MIN_POSITIVE);
            per_tensor.push(TensorFidelity {
                frame: frame_no as u32,
                tensor: tensor_no,
                mse: tensor_err / to.element_count() as f64,
                mean_drift,
                std_drift,
                rel_mean_drift: mean_drift / scale,
                rel_std_drift: std_drift / (so.std as f64).max(f64::MIN_POSITIVE),
            });
        }
    }

    let mse = err_sq / count as f64;
    let range = hi - lo;
    let psnr_db = if mse <= 0.0 || range <= 0.0 {
        DB_CAP
    } else {
        (10.0 * (range * range / mse).log10()).min(DB_CAP)
    };
    let snr_db = if err_sq <= 0.0 {
        DB_CAP
    } else {
        (10.0 * (orig_sq / err_sq).log10()).clamp(-DB_CAP, DB_CAP)
    };

    let fold = |f: fn(&TensorFidelity) -> f64| {
        per_tensor.iter().map(f).fold(0.0f64, f64::max)
    };
    Ok(FidelityReport {
        mse,
        psnr_db,
        snr_db,
        max_mean_drift: fold(|t| t.mean_drift),
        max_std_drift: fold(|t| t.std_drift),
        max_rel_mean_drift: fold(|t| t.rel_mean_drift),
        max_rel_std_drift: fold(|t| t.rel_std_drift),
        per_tensor,
    })
}

/// One point of a rate/accuracy curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateAccuracyPoint {
    pub rate: f64,
    pub accuracy: f64,
}

/// Natural cubic spline with precomputed second derivatives.
struct Spline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl Spline {
    fn natural(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        let mut second = vec![0.0f64; n];
        if n < 3 {
            return Self { xs, ys, second };
        }
        // Thomas solve of the tridiagonal system with natural boundaries.
        let mut diag = vec![0.0f64; n];
        let mut rhs = vec![0.0f64; n];
        let mut upper = vec![0.0f64; n];
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            diag[i] = (h0 + h1) / 3.0;
            upper[i] = h1 / 6.0;
            rhs[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
        }
        for i in 2..n - 1 {
            let lower = (xs[i] - xs[i - 1]) / 6.0;
            let factor = lower / diag[i - 1];
            diag[i] -= factor * upper[i - 1];
            rhs[i] -= factor * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            second[i] = (rhs[i] - upper[i] * second[i + 1]) / diag[i];
        }
        Self { xs, ys, second }
    }

    /// Exact integral over `[a, b]`, which must lie within the knot range.
    fn integrate(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.xs.len() - 1 {
            let from = a.max(self.xs[i]);
            let to = b.min(self.xs[i + 1]);
            if from >= to {
                continue;
            }
            let h = self.xs[i + 1] - self.xs[i];
            let antiderivative = |x: f64| {
                let u = self.xs[i + 1] - x;
                let v = x - self.xs[i];
                -self.second[i] * u * u * u * u / (24.0 * h)
                    + self.second[i + 1] * v * v * v * v / (24.0 * h)
                    - (self.ys[i] - self.second[i] * h * h / 6.0) * u * u / (2.0 * h)
                    + (self.ys[i + 1] - self.second[i + 1] * h * h / 6.0) * v * v / (2.0 * h)
            };
            total += antiderivative(to) - antiderivative(from);
        }
        total
    }
}

fn validate_curve(points: &[RateAccuracyPoint], name: &str) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::InsufficientPoints(format!(
            "{name} curve has {} points, need at least 4",
            points.len()
        )));
    }
    for (i, p) in points.iter().enumerate() {
        if !p.rate.is_finite() || !p.accuracy.is_finite() || p.rate <= 0.0 {
            return Err(Error::InvalidCurve(format!(
                "{name} point {i} ({}, {}) is unusable",
                p.rate, p.accuracy
            )));
        }
        if i > 0 {
            if p.rate <= points[i - 1].rate {
                return Err(Error::InvalidCurve(format!(
                    "{name} rates must be strictly increasing (point {i})"
                )));
            }
            if p.accuracy <= points[i - 1].accuracy {
                return Err(Error::InvalidCurve(format!(
                    "{name} accuracies must be strictly increasing (point {i})"
                )));
            }
        }
    }
    Ok(())
}

/// Bjøntegaard delta rate between two rate/accuracy curves, in percent.
///
/// Log-rate is interpolated over accuracy with a natural cubic spline
/// through all points and the difference is averaged over the overlapping
/// accuracy range. Negative values mean the test curve needs less rate than
/// the anchor at equal accuracy.
pub fn bd_rate(anchor: &[RateAccuracyPoint], test: &[RateAccuracyPoint]) -> Result<f64> {
    validate_curve(anchor, "anchor")?;
    validate_curve(test, "test")?;

    let lo = anchor[0].accuracy.max(test[0].accuracy);
    let hi = anchor[anchor.len() - 1]
        .accuracy
        .min(test[test.len() - 1].accuracy);
    if lo >= hi {
        return Err(Error::NoOverlap);
    }

    let spline_of = |points: &[RateAccuracyPoint]| {
        Spline::natural(
            points.iter().map(|p| p.accuracy).collect(),
            points.iter().map(|p| p.rate.log10()).collect(),
        )
    };
    let avg_anchor = spline_of(anchor).integrate(lo, hi) / (hi - lo);
    let avg_test = spline_of(test).integrate(lo, hi) / (hi - lo);
    Ok((10f64.powf(avg_test - avg_anchor) - 1.0) * 100.0)
}

/// One sweep result row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mode: &'static str,
    pub bit_depth: u8,
    pub refresh_period: u16,
    pub codec_id: u8,
    pub codec_param: Option<u8>,
    pub temporal: bool,
    pub frames: u32,
    pub total_bytes: u64,
    pub header_bytes: u64,
    pub stats_bytes: u64,
    pub minmax_bytes: u64,
    pub framing_bytes: u64,
    pub payload_bytes: u64,
    pub kbps: f64,
    pub mse: f64,
    pub psnr_db: f64,
    pub snr_db: f64,
    pub max_rel_mean_drift: f64,
    pub max_rel_std_drift: f64,
}

/// CSV column order of [`sweep_csv`], fixed for downstream parsers.
pub const SWEEP_COLUMNS: &[&str] = &[
    "mode",
    "q",
    "refresh",
    "codec",
    "codec_param",
    "temporal",
    "frames",
    "total_bytes",
    "header_bytes",
    "stats_bytes",
    "minmax_bytes",
    "framing_bytes",
    "payload_bytes",
    "kbps",
    "mse",
    "psnr_db",
    "snr_db",
    "max_rel_mean_drift",
    "max_rel_std_drift",
];

fn run_one(seq: &[FeatureSet], config: &EncodeConfig) -> Result<SweepRow> {
    let bytes = encode(seq, config)?;
    let report = accounting(&bytes)?;
    let decoded = decode_with_params(&bytes, &config.codec_params)?;
    let fid = fidelity(seq, &decoded)?;
    Ok(SweepRow {
        mode: mode_name(config.mode),
        bit_depth: config.bit_depth,
        refresh_period: config.refresh_period,
        codec_id: config.codec_id,
        codec_param: config.codec_params.requant_bits,
        temporal: config.temporal,
        frames: seq.len() as u32,
        total_bytes: report.total_bytes,
        header_bytes: report.header_bytes,
        stats_bytes: report.stats_bytes,
        minmax_bytes: report.minmax_bytes,
        framing_bytes: report.framing_bytes,
        payload_bytes: report.payload_bytes,
        kbps: report.kbps,
        mse: fid.mse,
        psnr_db: fid.psnr_db,
        snr_db: fid.snr_db,
        max_rel_mean_drift: fid.max_rel_mean_drift,
        max_rel_std_drift: fid.max_rel_std_drift,
    })
}

/// Encode, decode and measure the sequence under every configuration.
/// Rows come back in configuration order.
pub fn sweep(seq: &[FeatureSet], configs: &[EncodeConfig]) -> Result<Vec<SweepRow>> {
    sweep_parallel(seq, configs, 1)
}

/// [`sweep`] with up to `workers` configurations measured concurrently.
/// The output is identical to the sequential sweep.
pub fn sweep_parallel(
    seq: &[FeatureSet],
    configs: &[EncodeConfig],
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if configs.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one configuration".into()));
    }
    let workers = workers.max(1).min(configs.len());
    if workers == 1 {
        return configs.iter().map(|c| run_one(seq, c)).collect();
    }

    let results: Vec<std::sync::Mutex<Option<Result<SweepRow>>>> =
        (0..configs.len()).map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                *results[i].lock().unwrap() = Some(run_one(seq, &configs[i]));
            });
        }
    });
    results
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .unwrap()
                .expect("every configuration was claimed by a worker")
        })
        .collect()
}

fn csv_field(row: &SweepRow, column: &str) -> String {
    match column {
        "mode" => row.mode.to_string(),
        "q" => row.bit_depth.to_string(),
        "refresh" => row.refresh_period.to_string(),
        "codec" => row.codec_id.to_string(),
        "codec_param" => row.codec_param.map(|v| v.to_string()).unwrap_or_default(),
        "temporal" => row.temporal.to_string(),
        "frames" => row.frames.to_string(),
        "total_bytes" => row.total_bytes.to_string(),
        "header_bytes" => row.header_bytes.to_string(),
        "stats_bytes" => row.stats_bytes.to_string(),
        "minmax_bytes" => row.minmax_bytes.to_string(),
        "framing_bytes" => row.framing_bytes.to_string(),
        "payload_bytes" => row.payload_bytes.to_string(),
        "kbps" => row.kbps.to_string(),
        "mse" => row.mse.to_string(),
        "psnr_db" => row.psnr_db.to_string(),
        "snr_db" => row.snr_db.to_string(),
        "max_rel_mean_drift" => row.max_rel_mean_drift.to_string(),
        "max_rel_std_drift" => row.max_rel_std_drift.to_string(),
        _ => unreachable!("column {column} is not in SWEEP_COLUMNS"),
    }
}

/// Render sweep rows as CSV with the [`SWEEP_COLUMNS`] header.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = SWEEP_COLUMNS.join(",");
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = SWEEP_COLUMNS.iter().map(|c| csv_field(row, c)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// JSON mirror of [`sweep_csv`]: an array of flat objects with the same keys.
pub fn sweep_json(rows: &[SweepRow]) -> String {
    let mut out = String::from("[\n");
    for (i, row) in rows.iter().enumerate() {
        out.push_str("  {");
        for (j, column) in SWEEP_COLUMNS.iter().enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            let value = csv_field(row, column);
            let quoted = matches!(*column, "mode");
            let is_empty = value.is_empty();
            match (quoted, is_empty) {
                (true, _) => out.push_str(&format!("\"{column}\": \"{value}\"")),
                (false, true) => out.push_str(&format!("\"{column}\": null")),
                (false, false) => out.push_str(&format!("\"{column}\": {value}")),
            }
        }
        out.push_str(if i + 1 < rows.len() { "},\n" } else { "}\n" });
    }
    out.push(']');
    out
}

/// Read a rate/accuracy curve out of a CSV file with a header line, taking
/// `rate_column` and `accuracy_column` from each row.
pub fn parse_curve_csv(
    text: &str,
    rate_column: &str,
    accuracy_column: &str,
) -> Result<Vec<RateAccuracyPoint>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidCurve("CSV file is empty".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::InvalidCurve(format!("CSV has no `{name}` column")))
    };
    let rate_at = find(rate_column)?;
    let acc_at = find(accuracy_column)?;

    let mut points = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::InvalidCurve(format!(
                "CSV row {} has {} fields, header has {}",
                lineno + 2,
                fields.len(),
                columns.len()
            )));
        }
        let parse = |at: usize, what: &str| {
            fields[at].parse::<f64>().map_err(|_| {
                Error::InvalidCurve(format!(
                    "CSV row {}: bad {what} value `{}`",
                    lineno + 2,
                    fields[at]
                ))
            })
        };
        points.push(RateAccuracyPoint {
            rate: parse(rate_at, "rate")?,
            accuracy: parse(acc_at, "accuracy")?,
        });
    }
    points.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    Ok(points)
}
