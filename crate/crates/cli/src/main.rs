use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fvnkit::decompose::{decompose, DecomposeConfig};
use fvnkit::io::report::{csv_string, Provenance, ReportFile};
use fvnkit::io::sidecar::{generate, sha256_bytes, GenConfig, Generated, PlanSidecar};
use fvnkit::io::{wav_read_channel, wav_write, SampleFormat};
use fvnkit::recovery::{self, Alignment};
use fvnkit::simsys::{self, InputReference, LoudspeakerModel, Nonlinearity, SimulationConfig};
use fvnkit::{Error, Mode, NormPolicy};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fvnkit", version, about = "FVN test signals and component separation")]
struct Cli {
    /// Output directory [env: FVN_OUT_DIR, default: .]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a test signal WAV and its plan sidecar.
    Gen(GenArgs),
    /// Play a test signal through a simulated system.
    Simulate(SimArgs),
    /// Separate a recording into linear, nonlinear and random parts.
    Analyze(AnalyzeArgs),
    /// Recover the 4 n_o segment-expanded impulse response.
    Expand(AnalyzeArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "fourR")]
    mode: Mode,
    #[arg(long, default_value_t = 44100)]
    fs: u32,
    #[arg(long, default_value_t = 0.1)]
    sigma_t: f64,
    #[arg(long, default_value_t = 200.0)]
    n_o_ms: f64,
    #[arg(long, default_value_t = 44)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Apply the pink (1/f) shaper.
    #[arg(long)]
    pink: bool,
    #[arg(long, default_value = "peak")]
    norm: NormPolicy,
    #[arg(long, default_value = "float32")]
    format: SampleFormat,
    /// File stem for the WAV and sidecar.
    #[arg(long, default_value = "test")]
    name: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum System {
    Identity,
    Loudspeaker,
}

#[derive(Args)]
struct SimArgs {
    /// Plan sidecar written by `gen`.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, value_enum, default_value = "loudspeaker")]
    system: System,
    /// Saturation depth of the static nonlinearity; omitted means linear.
    #[arg(long)]
    alpha: Option<f64>,
    /// Input level in dB; see --input-ref.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    input_db: f64,
    /// 0 dB input is unit standard deviation (std) or unit peak (peak, i.e. dBFS).
    #[arg(long, default_value = "std")]
    input_ref: InputReference,
    /// Noise level relative to the clean output; omitted means no noise.
    #[arg(long, allow_hyphen_values = true)]
    noise_db: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "float32")]
    format: SampleFormat,
    #[arg(long, default_value = "observed")]
    name: String,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Recorded or simulated WAV.
    input: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Gain between the raw sequences and the recording; defaults to the sidecar's normalization factor.
    #[arg(long)]
    input_scale: Option<f64>,
    /// Added to every reported level.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    spl_offset: f64,
    /// Fixed first-pulse position instead of the automatic search.
    #[arg(long)]
    align: Option<usize>,
    #[arg(long, default_value = "report")]
    name: String,
}

fn out_dir(cli: &Option<PathBuf>) -> Result<PathBuf, Error> {
    let d = match cli {
        Some(p) => p.clone(),
        None => std::env::var_os("FVN_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&d)?;
    Ok(d)
}

fn n_o_from_ms(ms: f64, fs: u32) -> Result<usize, Error> {
    let n = (ms * fs as f64 / 1000.0).round();
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::Parameter(format!("--n-o-ms {ms} gives no samples at {fs} Hz")));
    }
    Ok(n as usize)
}

fn cmd_gen(a: &GenArgs, dir: &Path) -> Result<serde_json::Value, Error> {
    let cfg = GenConfig {
        mode: a.mode,
        fs: a.fs,
        sigma_t: a.sigma_t,
        n_o: n_o_from_ms(a.n_o_ms, a.fs)?,
        k_reps: a.reps,
        seed: a.seed,
        norm: a.norm,
        pink: a.pink,
    };
    let g = generate(&cfg)?;
    let wav = dir.join(format!("{}.wav", a.name));
    let side = dir.join(format!("{}.plan.json", a.name));
    wav_write(&wav, &g.signal.samples, a.fs, a.format)?;
    g.sidecar.save(&side)?;
    Ok(json!({
        "wav": wav,
        "plan": side,
        "n_o": cfg.n_o,
        "samples": g.signal.samples.len(),
        "fft_length": g.sidecar.fft_length,
        "peak_norm": g.sidecar.peak_norm,
    }))
}

fn read(path: &Path) -> Result<Vec<u8>, Error> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_plan(path: &Path) -> Result<(Generated, Vec<u8>), Error> {
    let bytes = read(path)?;
    let side: PlanSidecar = serde_json::from_slice(&bytes)?;
    Ok((side.reconstruct()?, bytes))
}

fn cmd_simulate(a: &SimArgs, dir: &Path) -> Result<serde_json::Value, Error> {
    let (g, _) = load_plan(&a.plan)?;
    let fs = g.sidecar.fs;
    let cfg = SimulationConfig {
        model: match a.system {
            System::Identity => None,
            System::Loudspeaker => Some(LoudspeakerModel::new(fs as f64)),
        },
        nonlinearity: a.alpha.map(Nonlinearity::new).transpose()?,
        noise_db: a.noise_db,
        input_db: a.input_db,
        input_reference: a.input_ref,
        reverb_ir: None,
        seed: a.seed,
    };
    let sim = simsys::simulate_measurement(&g.signal, &cfg)?;
    let wav = dir.join(format!("{}.wav", a.name));
    wav_write(&wav, &sim.observed, fs, a.format)?;
    Ok(json!({
        "wav": wav,
        "input_gain": sim.input_gain,
        "input_scale": sim.input_gain * g.signal.peak_norm,
        "clean_rms": sim.clean_rms,
        "noise_sigma": sim.noise_sigma,
    }))
}

struct Loaded {
    observed: Vec<f64>,
    gen: Generated,
    cfg: DecomposeConfig,
    provenance: Provenance,
}

fn load_analysis(a: &AnalyzeArgs) -> Result<Loaded, Error> {
    let (gen, plan_bytes) = load_plan(&a.plan)?;
    let wav_bytes = read(&a.input)?;
    let (observed, fs) = wav_read_channel(&a.input, a.channel)?;
    if fs != gen.sidecar.fs {
        return Err(Error::Parameter(format!("recording is {fs} Hz, plan is {} Hz", gen.sidecar.fs)));
    }
    let cfg = DecomposeConfig {
        alignment: a.align.map_or(Alignment::Auto, Alignment::Fixed),
        input_scale: a.input_scale.unwrap_or(gen.signal.peak_norm),
        inverse_fir: gen.shaper.as_ref().map(|s| s.fir_inverse_coeffs.clone()),
        ..DecomposeConfig::default()
    };
    let provenance = Provenance {
        input_sha256: sha256_bytes(&wav_bytes),
        plan_sha256: sha256_bytes(&plan_bytes),
        tool_version: fvnkit::VERSION.to_string(),
    };
    Ok(Loaded { observed, gen, cfg, provenance })
}

fn cmd_analyze(a: &AnalyzeArgs, dir: &Path) -> Result<serde_json::Value, Error> {
    let l = load_analysis(a)?;
    let report = decompose(&l.observed, &l.gen.signal.plan, &l.cfg)?;
    let fs = report.sample_rate;
    let json_path = dir.join(format!("{}.json", a.name));
    let csv_path = dir.join(format!("{}.csv", a.name));
    let ir_path = dir.join(format!("{}_linear_ir.wav", a.name));
    std::fs::write(&csv_path, csv_string(&report, a.spl_offset)?)?;
    wav_write(&ir_path, &report.linear_ir, fs, SampleFormat::Float32)?;
    let mut out = json!({ "report": json_path, "csv": csv_path, "linear_ir": ir_path });
    if let Some(x) = &report.linear_xpd {
        let p = dir.join(format!("{}_linear_xpd.wav", a.name));
        wav_write(&p, x, fs, SampleFormat::Float32)?;
        out["linear_xpd"] = json!(p);
    }
    let file = ReportFile::new(report, l.provenance, a.spl_offset);
    file.save(&json_path)?;
    out["levels_dbfs"] = json!(file.levels_dbfs);
    out["levels_display"] = json!(file.levels_display);
    out["strides"] = json!(file.report.strides);
    Ok(out)
}

fn cmd_expand(a: &AnalyzeArgs, dir: &Path) -> Result<serde_json::Value, Error> {
    let l = load_analysis(a)?;
    let plan = &l.gen.signal.plan;
    if plan.mode == Mode::TwoSeq {
        return Err(Error::Parameter("segment expansion needs a four-sequence plan".into()));
    }
    let observed = match &l.cfg.inverse_fir {
        Some(b) => fvnkit::decompose::fir_filter(&l.observed, b),
        None => l.observed,
    };
    let set = recovery::recover(&observed, plan, l.cfg.alignment, &l.cfg.region)?;
    let xpd = recovery::expand_response(&set.r_itr, &set.region, set.alignment, plan.n_o)?;
    let xpd: Vec<f64> = xpd.iter().map(|v| v / l.cfg.input_scale).collect();
    let p = dir.join(format!("{}_linear_xpd.wav", a.name));
    wav_write(&p, &xpd, plan.sample_rate(), SampleFormat::Float32)?;
    Ok(json!({ "linear_xpd": p, "samples": xpd.len(), "strides": set.region.len() }))
}

fn cmd_selftest() -> (serde_json::Value, bool) {
    let checks = fvnkit::selftest::run();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let ok = checks.iter().all(|c| c.passed);
    (json!({ "passed": ok }), ok)
}

fn error_json(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let value = match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(a, &out_dir(&cli.out_dir)?)?,
        Cmd::Simulate(a) => cmd_simulate(a, &out_dir(&cli.out_dir)?)?,
        Cmd::Analyze(a) => cmd_analyze(a, &out_dir(&cli.out_dir)?)?,
        Cmd::Expand(a) => cmd_expand(a, &out_dir(&cli.out_dir)?)?,
        Cmd::Selftest => {
            let (_, ok) = cmd_selftest();
            if !ok {
                eprintln!("{}", error_json("selftest", "one or more checks failed"));
                return Ok(ExitCode::FAILURE);
            }
            return Ok(ExitCode::SUCCESS);
        }
    };
    println!("{value}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error_json("usage", e.render().to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
