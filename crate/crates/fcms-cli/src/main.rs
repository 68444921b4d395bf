//! `fcms`: generate, code, inspect and evaluate feature sequences.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fcms::bitstream::{accounting, demux};
use fcms::codec::{CodecParams, ExternalCodec};
use fcms::ftns::{read_ftns, write_ftns};
use fcms::metrics::{
    bd_rate, fidelity, parse_curve_csv, sweep_csv, sweep_json, sweep_parallel,
};
use fcms::pipeline::{
    decode_with_params, encode, mode_name, parse_fps, parse_mode, EncodeConfig,
};
use fcms::stats::StatsParams;
use fcms::synth::generate_sequence;
use fcms::tensor::{FeatureSet, ShapeSpec, TensorShape};

/// Print to stdout, exiting quietly if the consumer closed the pipe.
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if writeln!(std::io::stdout(), $($arg)*).is_err() {
            std::process::exit(0);
        }
    }};
}

#[derive(Parser)]
#[command(
    name = "fcms",
    version,
    about = "Feature-compression codec for split inference",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic FTNS feature sequence.
    Gen(GenArgs),
    /// Encode an FTNS sequence into an FCMS stream.
    Encode(EncodeArgs),
    /// Decode an FCMS stream back into an FTNS sequence.
    Decode(DecodeArgs),
    /// Dump header, statistics segments and byte accounting of a stream.
    Inspect(InspectArgs),
    /// Encode, decode and report fidelity in one step.
    Roundtrip(RoundtripArgs),
    /// Run a configuration matrix and write a CSV (and optional JSON) report.
    Sweep(SweepArgs),
    /// Compute BD-rate between two sweep CSV curves.
    Bdrate(BdrateArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Shape preset: `fpn` or `darknet`.
    #[arg(long, conflicts_with = "shapes")]
    preset: Option<String>,
    /// Input resolution HxW for the `fpn` preset (multiples of 32).
    #[arg(long, default_value = "256x256")]
    input_res: String,
    /// Custom shapes as `CxHxW,CxHxW,...` (alternative to --preset).
    #[arg(long)]
    shapes: Option<String>,
    #[arg(long, default_value_t = 1)]
    frames: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Linear per-frame drift of the target statistics.
    #[arg(long, default_value_t = 0.0)]
    drift: f32,
    #[arg(short, long)]
    output: PathBuf,
}

/// Encoder settings shared by `encode`, `roundtrip` and `sweep`.
/// Flags override the config file, which overrides the defaults.
#[derive(Args, Clone)]
struct CodingArgs {
    /// Plain-text `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Statistics mode: `baseline`, `full` or `simplified`.
    #[arg(long)]
    mode: Option<String>,
    /// Quantization bit depth (1..=16).
    #[arg(long)]
    q: Option<u8>,
    /// Refresh period L in coded frames.
    #[arg(long)]
    refresh: Option<u16>,
    /// Inner codec id: 0 raw, 1 zdeflate, 2 requant, 255 external.
    #[arg(long)]
    codec: Option<u8>,
    /// Reduced bit depth q' for the requant codec.
    #[arg(long)]
    codec_param: Option<u8>,
    /// Temporal downsampling (`--temporal` or `--temporal false`).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    temporal: Option<bool>,
    /// Frame rate as `30` or `30000/1001`.
    #[arg(long)]
    fps: Option<String>,
    /// External codec encode command template.
    #[arg(long)]
    external_encode: Option<String>,
    /// External codec decode command template.
    #[arg(long)]
    external_decode: Option<String>,
}

impl CodingArgs {
    fn to_config(&self) -> Result<EncodeConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                EncodeConfig::from_kv_text(&text)
                    .with_context(|| format!("parsing config file {}", path.display()))?
            }
            None => EncodeConfig::default(),
        };
        if let Some(mode) = &self.mode {
            config.mode =
                parse_mode(mode).ok_or_else(|| anyhow!("unknown mode `{mode}`"))?;
        }
        if let Some(q) = self.q {
            config.bit_depth = q;
        }
        if let Some(refresh) = self.refresh {
            config.refresh_period = refresh;
        }
        if let Some(codec) = self.codec {
            config.codec_id = codec;
        }
        if let Some(param) = self.codec_param {
            config.codec_params.requant_bits = Some(param);
        }
        if let Some(temporal) = self.temporal {
            config.temporal = temporal;
        }
        if let Some(fps) = &self.fps {
            let (num, den) = parse_fps(fps).ok_or_else(|| anyhow!("bad fps `{fps}`"))?;
            config.fps_num = num;
            config.fps_den = den;
        }
        match (&self.external_encode, &self.external_decode) {
            (Some(enc), Some(dec)) => {
                config.codec_params.external =
                    Some(ExternalCodec::new(enc.clone(), dec.clone()));
            }
            (None, None) => {}
            _ => bail!("--external-encode and --external-decode must be given together"),
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    coding: CodingArgs,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// External codec decode command template (codec 255 streams only).
    #[arg(long)]
    external_decode: Option<String>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(short, long)]
    input: PathBuf,
}

#[derive(Args)]
struct RoundtripArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    coding: CodingArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// CSV output path.
    #[arg(short, long)]
    output: PathBuf,
    /// Optional JSON mirror of the CSV rows.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Comma-separated statistics modes.
    #[arg(long, default_value = "baseline,full,simplified")]
    modes: String,
    /// Comma-separated bit depths.
    #[arg(long, default_value = "10")]
    q_values: String,
    /// Comma-separated codec ids.
    #[arg(long, default_value = "0")]
    codecs: String,
    /// Comma-separated requant depths, crossed with codec 2 only.
    #[arg(long, default_value = "")]
    codec_params: String,
    #[arg(long)]
    refresh: Option<u16>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    temporal: Option<bool>,
    #[arg(long)]
    fps: Option<String>,
    /// Worker threads for the sweep.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct BdrateArgs {
    /// Anchor curve CSV.
    #[arg(long)]
    anchor: PathBuf,
    /// Test curve CSV.
    #[arg(long)]
    test: PathBuf,
    /// Rate column name.
    #[arg(long, default_value = "kbps")]
    rate_col: String,
    /// Accuracy column name.
    #[arg(long, default_value = "snr_db")]
    acc_col: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: category={} {:#}", category_of(&err), err);
            ExitCode::FAILURE
        }
    }
}

fn category_of(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fcms::Error>() {
            return e.category();
        }
    }
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "Io";
        }
    }
    "Cli"
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(args) => gen(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Inspect(args) => inspect(args),
        Command::Roundtrip(args) => roundtrip(args),
        Command::Sweep(args) => sweep_cmd(args),
        Command::Bdrate(args) => bdrate_cmd(args),
    }
}

fn parse_dims(value: &str, parts: usize) -> Result<Vec<u32>> {
    let dims: Vec<u32> = value
        .split('x')
        .map(|d| d.trim().parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow!("bad dimensions `{value}`"))?;
    if dims.len() != parts {
        bail!("`{value}` should have {parts} `x`-separated dimensions");
    }
    Ok(dims)
}

fn resolve_spec(args: &GenArgs) -> Result<(ShapeSpec, String)> {
    if let Some(shapes) = &args.shapes {
        let parsed: Vec<TensorShape> = shapes
            .split(',')
            .map(|s| parse_dims(s, 3).map(|d| TensorShape::new(d[0], d[1], d[2])))
            .collect::<Result<_>>()?;
        return Ok((ShapeSpec::new(parsed)?, format!("shapes={shapes}")));
    }
    match args.preset.as_deref() {
        Some("darknet") => Ok((ShapeSpec::darknet(), "preset=darknet".into())),
        Some("fpn") => {
            let dims = parse_dims(&args.input_res, 2)?;
            Ok((
                ShapeSpec::fpn(dims[0], dims[1])?,
                format!("preset=fpn input-res={}", args.input_res),
            ))
        }
        Some(other) => bail!("unknown preset `{other}` (expected `fpn` or `darknet`)"),
        None => bail!("either --preset or --shapes is required"),
    }
}

fn read_sequence(path: &Path) -> Result<Vec<FeatureSet>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_ftns(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn write_sequence(path: &Path, frames: &[FeatureSet]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut writer = BufWriter::new(file);
    write_ftns(&mut writer, frames).with_context(|| format!("writing {}", path.display()))?;
    writer.flush()?;
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let (spec, describe) = resolve_spec(&args)?;
    outln!(
        "config: gen {describe} frames={} seed={} drift={} output={}",
        args.frames,
        args.seed,
        args.drift,
        args.output.display()
    );
    if args.frames == 0 {
        bail!("--frames must be at least 1");
    }
    let frames = generate_sequence(&spec, args.frames, args.seed, args.drift);
    write_sequence(&args.output, &frames)?;
    outln!("wrote {} frames to {}", frames.len(), args.output.display());
    Ok(())
}

fn cmd_encode(args: EncodeArgs) -> Result<()> {
    let config = args.coding.to_config()?;
    outln!(
        "config: encode input={} output={} {}",
        args.input.display(),
        args.output.display(),
        config.summary()
    );
    let seq = read_sequence(&args.input)?;
    let bytes = encode(&seq, &config)?;
    std::fs::write(&args.output, &bytes)
        .with_context(|| format!("writing {}", args.output.display()))?;
    outln!("wrote {} bytes ({} frames) to {}", bytes.len(), seq.len(), args.output.display());
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    outln!(
        "config: decode input={} output={}",
        args.input.display(),
        args.output.display()
    );
    let bytes =
        std::fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let params = match &args.external_decode {
        Some(dec) => CodecParams {
            requant_bits: None,
            external: Some(ExternalCodec::new(dec.clone(), dec.clone())),
        },
        None => CodecParams::default(),
    };
    let frames = decode_with_params(&bytes, &params)?;
    write_sequence(&args.output, &frames)?;
    outln!("wrote {} frames to {}", frames.len(), args.output.display());
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<()> {
    outln!("config: inspect input={}", args.input.display());
    let bytes =
        std::fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let stream = demux(&bytes)?;
    let h = &stream.header;
    outln!(
        "header: mode={} q={} n={} refresh={} fusion={} codec={} temporal={} frames={} coded_frames={} fps={}/{}",
        mode_name(h.mode),
        h.bit_depth,
        h.tensor_count(),
        h.refresh_period,
        h.fusion_id,
        h.codec_id,
        h.temporal,
        h.frame_count,
        h.coded_frame_count(),
        h.fps_num,
        h.fps_den
    );
    for (i, s) in h.tensor_shapes.iter().enumerate() {
        outln!("tensor[{i}]: {}x{}x{}", s.channels, s.height, s.width);
    }
    outln!(
        "fused: {}x{}x{}",
        h.fused_shape.channels, h.fused_shape.height, h.fused_shape.width
    );
    for (p, period) in stream.periods.iter().enumerate() {
        match &period.stats {
            StatsParams::Baseline => {
                let ranges: Vec<String> = period
                    .frames
                    .iter()
                    .map(|f| {
                        let mm = f.min_max.expect("baseline frames carry min/max");
                        format!("[{}, {}]", mm.min, mm.max)
                    })
                    .collect();
                outln!("period[{p}]: per-frame min/max {}", ranges.join(" "));
            }
            StatsParams::Full { per_tensor, fused } => {
                let pairs: Vec<String> = per_tensor
                    .iter()
                    .enumerate()
                    .map(|(i, s)| format!("tensor[{i}] mean={} std={}", s.mean, s.std))
                    .collect();
                outln!(
                    "period[{p}]: {} | fused mean={} std={}",
                    pairs.join(" | "),
                    fused.mean,
                    fused.std
                );
            }
            StatsParams::Simplified { pooled } => {
                outln!("period[{p}]: pooled mean={} std={}", pooled.mean, pooled.std);
            }
        }
    }
    let r = accounting(&bytes)?;
    outln!(
        "bytes: total={} header={} stats={} minmax={} framing={} payload={}",
        r.total_bytes, r.header_bytes, r.stats_bytes, r.minmax_bytes, r.framing_bytes,
        r.payload_bytes
    );
    outln!("kbps={}", r.kbps);
    Ok(())
}

fn roundtrip(args: RoundtripArgs) -> Result<()> {
    let config = args.coding.to_config()?;
    outln!(
        "config: roundtrip input={} {}",
        args.input.display(),
        config.summary()
    );
    let seq = read_sequence(&args.input)?;
    let bytes = encode(&seq, &config)?;
    let r = accounting(&bytes)?;
    let decoded = decode_with_params(&bytes, &config.codec_params)?;
    let fid = fidelity(&seq, &decoded)?;
    outln!(
        "bytes: total={} header={} stats={} minmax={} framing={} payload={} kbps={}",
        r.total_bytes, r.header_bytes, r.stats_bytes, r.minmax_bytes, r.framing_bytes,
        r.payload_bytes, r.kbps
    );
    outln!("fidelity: mse={} psnr_db={} snr_db={}", fid.mse, fid.psnr_db, fid.snr_db);
    outln!(
        "drift: max_rel_mean={} max_rel_std={} max_abs_mean={} max_abs_std={}",
        fid.max_rel_mean_drift, fid.max_rel_std_drift, fid.max_mean_drift, fid.max_std_drift
    );
    Ok(())
}

fn split_list<T: std::str::FromStr>(value: &str, what: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| anyhow!("bad {what} value `{s}`"))
        })
        .collect()
}

fn sweep_cmd(args: SweepArgs) -> Result<()> {
    let modes: Vec<_> = args
        .modes
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_mode(s.trim()).ok_or_else(|| anyhow!("unknown mode `{s}`")))
        .collect::<Result<_>>()?;
    let q_values: Vec<u8> = split_list(&args.q_values, "bit depth")?;
    let codecs: Vec<u8> = split_list(&args.codecs, "codec id")?;
    let codec_params: Vec<u8> = split_list(&args.codec_params, "codec parameter")?;

    let mut configs = Vec::new();
    for &mode in &modes {
        for &q in &q_values {
            for &codec_id in &codecs {
                let params: Vec<Option<u8>> = if codec_id == fcms::codec::CODEC_REQUANT {
                    if codec_params.is_empty() {
                        bail!("codec 2 in --codecs needs --codec-params");
                    }
                    codec_params.iter().copied().map(Some).collect()
                } else {
                    vec![None]
                };
                for requant_bits in params {
                    let mut config = EncodeConfig {
                        mode,
                        bit_depth: q,
                        codec_id,
                        codec_params: CodecParams { requant_bits, external: None },
                        ..Default::default()
                    };
                    if let Some(refresh) = args.refresh {
                        config.refresh_period = refresh;
                    }
                    if let Some(temporal) = args.temporal {
                        config.temporal = temporal;
                    }
                    if let Some(fps) = &args.fps {
                        let (num, den) =
                            parse_fps(fps).ok_or_else(|| anyhow!("bad fps `{fps}`"))?;
                        config.fps_num = num;
                        config.fps_den = den;
                    }
                    config.validate()?;
                    configs.push(config);
                }
            }
        }
    }
    outln!(
        "config: sweep input={} output={} configs={} workers={}",
        args.input.display(),
        args.output.display(),
        configs.len(),
        args.workers
    );

    let seq = read_sequence(&args.input)?;
    let rows = sweep_parallel(&seq, &configs, args.workers)?;
    std::fs::write(&args.output, sweep_csv(&rows))
        .with_context(|| format!("writing {}", args.output.display()))?;
    outln!("wrote {} rows to {}", rows.len(), args.output.display());
    if let Some(json_path) = &args.json {
        std::fs::write(json_path, sweep_json(&rows))
            .with_context(|| format!("writing {}", json_path.display()))?;
        outln!("wrote JSON mirror to {}", json_path.display());
    }
    Ok(())
}

fn bdrate_cmd(args: BdrateArgs) -> Result<()> {
    outln!(
        "config: bdrate anchor={} test={} rate-col={} acc-col={}",
        args.anchor.display(),
        args.test.display(),
        args.rate_col,
        args.acc_col
    );
    let read_curve = |path: &Path| -> Result<Vec<fcms::metrics::RateAccuracyPoint>> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(parse_curve_csv(&text, &args.rate_col, &args.acc_col)?)
    };
    let anchor = read_curve(&args.anchor)?;
    let test = read_curve(&args.test)?;
    let bd = bd_rate(&anchor, &test)?;
    outln!("bd_rate_percent={bd}");
    Ok(())
}
