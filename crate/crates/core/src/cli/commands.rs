use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::*;
use super::{read_to_string, CliError, Command};
use crate::calibration::{
    default_linearize_step, fit_bias, fit_bias_seeded, linear_regime_matrix, linear_regime_signs, linearize, BiasFit,
    OdmrLineCenters, SensingMatrix, SlopeCalibration,
};
use crate::dsp::{calibrate_from_chirp, cancel_laser_noise, demodulate, Spectrum};
use crate::pipeline::{self, ToneReport};
use crate::reconstruction::{reconstruct_oracle, reconstruct_stream, ShiftFrame};
use crate::sensitivity::{sensitivity_report, SensitivityReport};
use crate::serde_mat::rows;
use crate::spin_model::{HamiltonianParams, Line, PhysicalConstants};
use crate::stream::{write_atomic, write_csv, SampleStream, Unit};
use crate::synth::{synthesize, tune_carriers, CarrierSweep, ChannelConfig, SynthConfig};
use crate::walsh::{monte_carlo, MonteCarloReport, ProjectionBridge};
use crate::VERSION;

/// Run one command. Returns the paths written, manifest last.
pub fn execute(cmd: Command, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let consts = PhysicalConstants::default();
    let mut o = Outputs::new(out, cmd)?;
    match cmd {
        Command::FitBias => {
            let mut c: FitBiasConfig = load(config)?;
            apply_seed(&mut c.seed, seed);
            cmd_fit_bias(&c, &consts, &mut o)?;
            o.finish(&c, c.seed)
        }
        Command::Linearize => {
            let mut c: LinearizeConfig = load(config)?;
            apply_seed(&mut c.seed, seed);
            cmd_linearize(&c, &consts, &mut o)?;
            o.finish(&c, c.seed)
        }
        Command::Synth => {
            let mut c: SynthCmdConfig = load(config)?;
            apply_seed(&mut c.seed, seed);
            cmd_synth(&c, &consts, &mut o)?;
            o.finish(&c, c.seed)
        }
        Command::Demod => {
            let mut c: DemodConfig = load(config)?;
            apply_seed(&mut c.seed, seed);
            cmd_demod(&c, &consts, &mut o)?;
            o.finish(&c, c.seed)
        }
        Command::Reconstruct => {
            let mut c: ReconstructConfig = load(config)?;
            apply_seed(&mut c.seed, seed);
            cmd_reconstruct(&c, &consts, &mut o)?;
            o.finish(&c, c.seed)
        }
        Command::Pipeline => {
            let mut c: PipelineCmdConfig = load(config)?;
            apply_seed(&mut c.seed, seed);
            cmd_pipeline(&c, &consts, &mut o)?;
            o.finish(&c, c.seed)
        }
        Command::Sensitivity => {
            let mut c: SensitivityCmdConfig = load(config)?;
            apply_seed(&mut c.seed, seed);
            cmd_sensitivity(&c, &consts, &mut o)?;
            o.finish(&c, c.seed)
        }
        Command::Walsh => {
            let mut c: WalshCmdConfig = load(config)?;
            apply_seed(&mut c.seed, seed);
            cmd_walsh(&c, &consts, &mut o)?;
            o.finish(&c, c.seed)
        }
    }
}

fn apply_seed(slot: &mut u64, flag: Option<u64>) {
    if let Some(s) = flag {
        *slot = s;
    }
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", p.display())))
        }
    }
}

#[derive(Serialize)]
struct Report<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a C,
    result: R,
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    bytes: u64,
}

/// Collects artifacts for one command run.
struct Outputs {
    dir: PathBuf,
    cmd: Command,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path, cmd: Command) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            cmd,
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        let p = self.path(name);
        write_atomic::<std::io::Error, _>(&p, |w| {
            use std::io::Write;
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")
        })?;
        Ok(())
    }

    fn report<C: Serialize, R: Serialize>(&mut self, config: &C, seed: u64, result: R) -> Result<(), CliError> {
        let name = format!("{}.json", self.cmd.name().replace('-', "_"));
        let r = Report {
            tool: "nvmag",
            version: VERSION,
            command: self.cmd.name(),
            seed,
            config,
            result,
        };
        self.json(&name, &r)
    }

    fn stream(&mut self, name: &str, s: &SampleStream) -> Result<(), CliError> {
        let p = self.path(name);
        s.save(&p)?;
        Ok(())
    }

    fn csv(&mut self, name: &str, names: &[&str], streams: &[&SampleStream]) -> Result<(), CliError> {
        let p = self.path(name);
        write_atomic::<std::io::Error, _>(&p, |w| write_csv(w, names, streams))?;
        Ok(())
    }

    fn spectra_csv(&mut self, name: &str, spectra: &[Spectrum; 3]) -> Result<(), CliError> {
        let p = self.path(name);
        write_atomic::<std::io::Error, _>(&p, |w| {
            use std::io::Write;
            writeln!(w, "freq_Hz,psd_x_T2/Hz,psd_y_T2/Hz,psd_z_T2/Hz")?;
            for k in 0..spectra[0].freqs.len() {
                writeln!(
                    w,
                    "{},{:e},{:e},{:e}",
                    spectra[0].freqs[k], spectra[0].psd[k], spectra[1].psd[k], spectra[2].psd[k]
                )?;
            }
            Ok(())
        })?;
        Ok(())
    }

    /// Write the resolved config and the manifest; return all paths.
    fn finish<C: Serialize>(mut self, config: &C, seed: u64) -> Result<Vec<PathBuf>, CliError> {
        self.json("config.json", config)?;
        let mut entries = Vec::new();
        for f in &self.files {
            let bytes = std::fs::metadata(f)?.len();
            let file = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            entries.push(ManifestEntry { file, bytes });
        }
        #[derive(Serialize)]
        struct Manifest<'a> {
            tool: &'static str,
            version: &'static str,
            command: &'static str,
            seed: u64,
            files: &'a [ManifestEntry],
        }
        let m = Manifest {
            tool: "nvmag",
            version: VERSION,
            command: self.cmd.name(),
            seed,
            files: &entries,
        };
        self.json("manifest.json", &m)?;
        Ok(self.files)
    }
}

const CHANNEL_NAMES: [&str; 4] = ["shift_0", "shift_1", "shift_2", "shift_3"];

fn channel_file(line: Line) -> String {
    let s = line.to_string();
    let (name, sign) = s.split_at(s.len() - 1);
    format!("shift_{}_{}.nvms", name, if sign == "+" { "plus" } else { "minus" })
}

fn fitted_point(lines: &OdmrLineCenters, consts: &PhysicalConstants) -> Result<HamiltonianParams, CliError> {
    Ok(fit_bias_seeded(lines, consts)?.params)
}

// fit-bias

#[derive(Deserialize)]
#[serde(untagged)]
enum LineFile {
    Record(OdmrLineCenters),
    Bare([f64; 8]),
}

#[derive(Serialize)]
struct FitResult<'a> {
    observed: &'a OdmrLineCenters,
    fit: &'a BiasFit,
    /// Field magnitude, T.
    field_magnitude: f64,
}

fn cmd_fit_bias(c: &FitBiasConfig, consts: &PhysicalConstants, o: &mut Outputs) -> Result<(), CliError> {
    let observed = match &c.input {
        Some(p) => {
            let text = read_to_string(p)?;
            match serde_json::from_str::<LineFile>(&text) {
                Ok(LineFile::Record(r)) => r,
                Ok(LineFile::Bare(f)) => OdmrLineCenters { frequencies: f },
                Err(_) => {
                    return Err(CliError::Schema(format!(
                        "{}: expected eight line centers in Hz, as {{\"frequencies\": [...]}} or a bare array",
                        p.display()
                    )))
                }
            }
        }
        None => c.line_centers,
    };
    let fit = match &c.initial_guess {
        Some(g) => fit_bias(&observed, g, consts)?,
        None => fit_bias_seeded(&observed, consts)?,
    };
    o.json("bias_params.json", &fit.params)?;
    o.report(
        c,
        c.seed,
        FitResult {
            observed: &observed,
            fit: &fit,
            field_magnitude: fit.params.bias_field.norm(),
        },
    )
}

// linearize

#[derive(Serialize)]
struct LinearizeResult {
    point: HamiltonianParams,
    matrix: SensingMatrix,
    /// A/γ, rows in addressed order.
    a_dimensionless: Vec<Vec<f64>>,
    /// A⁺·γ.
    a_pinv_dimensionless: Vec<Vec<f64>>,
    linear_regime_signs: [f64; 4],
    /// Largest entry of |A/γ − (±n̂)|.
    max_deviation_from_linear_regime: f64,
}

fn cmd_linearize(c: &LinearizeConfig, consts: &PhysicalConstants, o: &mut Outputs) -> Result<(), CliError> {
    let point = match c.point {
        Some(p) => p,
        None => fitted_point(&c.line_centers, consts)?,
    };
    let step = c.step.unwrap_or_else(|| default_linearize_step(consts));
    let m = linearize(&point, &c.addressed, step, consts)?;
    let signs = linear_regime_signs(&point.bias_field, &c.addressed);
    let lin = linear_regime_matrix(&c.addressed, &signs, consts);
    let dev = (m.a_dimensionless(consts) - lin.a_dimensionless(consts)).abs().max();
    o.json("matrix.json", &m)?;
    o.report(
        c,
        c.seed,
        LinearizeResult {
            point,
            a_dimensionless: rows(&m.a_dimensionless(consts)),
            a_pinv_dimensionless: rows(&m.a_pinv_dimensionless(consts)),
            matrix: m,
            linear_regime_signs: signs,
            max_deviation_from_linear_regime: dev,
        },
    )
}

// synth

#[derive(Serialize)]
struct SynthResult {
    params: HamiltonianParams,
    channels: [ChannelConfig; 4],
    samples: usize,
    sample_rate: f64,
    t0: f64,
    signal_mean: f64,
    signal_std: f64,
    reference_mean: f64,
}

fn truth(params: &Option<HamiltonianParams>, lines: &OdmrLineCenters, consts: &PhysicalConstants) -> Result<HamiltonianParams, CliError> {
    match params {
        Some(p) => Ok(*p),
        None => fitted_point(lines, consts),
    }
}

fn cmd_synth(c: &SynthCmdConfig, consts: &PhysicalConstants, o: &mut Outputs) -> Result<(), CliError> {
    let params = truth(&c.params, &c.line_centers, consts)?;
    let mut channels = c.channels;
    if c.tune_carriers {
        tune_carriers(&mut channels, &params, consts);
    }
    let (sig, reference) = synthesize(&params, &channels, &c.coils, &c.synth, c.seed, consts)?;
    o.stream("signal.nvms", &sig)?;
    o.stream("reference.nvms", &reference)?;
    if c.csv {
        o.csv("signal.csv", &["signal", "reference"], &[&sig, &reference])?;
    }
    o.report(
        c,
        c.seed,
        SynthResult {
            params,
            channels,
            samples: sig.len(),
            sample_rate: sig.rate,
            t0: sig.t0,
            signal_mean: sig.mean(),
            signal_std: sig.std(),
            reference_mean: reference.mean(),
        },
    )
}

// demod

#[derive(Serialize)]
struct DemodReport {
    slopes: SlopeCalibration,
    channels: [ChannelConfig; 4],
    enbw: f64,
    group_delay: f64,
    output_rate: f64,
    samples: usize,
    laser_noise_cancelled: bool,
    shift_mean: [f64; 4],
    shift_std: [f64; 4],
}

fn cmd_demod(c: &DemodConfig, consts: &PhysicalConstants, o: &mut Outputs) -> Result<(), CliError> {
    let sig_path = c
        .signal
        .as_ref()
        .ok_or_else(|| CliError::Schema("demod needs `signal` (path to a PL stream)".into()))?;
    let sig = SampleStream::load(sig_path)?;
    if sig.unit != Unit::Volts {
        return Err(CliError::Schema(format!("signal stream must be in volts, got {:?}", sig.unit)));
    }
    let pl = match &c.reference {
        Some(p) => cancel_laser_noise(&sig, &SampleStream::load(p)?, c.cancel_window)?,
        None => sig,
    };
    let mut channels = c.channels;
    let slopes = match c.slopes {
        Some(s) => s,
        None => {
            let params = truth(&c.params, &c.line_centers, consts)?;
            if c.tune_carriers {
                tune_carriers(&mut channels, &params, consts);
            }
            let cal = c.calibration;
            let sweep = CarrierSweep { span: cal.span, hold: cal.hold };
            let chirp = SynthConfig {
                sample_rate: pl.rate,
                duration: cal.hold + cal.ramp,
                start_time: 0.0,
                noise: cal.noise,
                sweep: Some(sweep),
                ..c.synth
            };
            let (ramp, _) = synthesize(&params, &channels, &[], &chirp, c.seed ^ 0xC41B_5EED, consts)?;
            calibrate_from_chirp(&ramp, &channels, &c.chain, &sweep)?
        }
    };
    let d = demodulate(&pl, &channels, &slopes, &c.chain)?;
    let shifts = match c.analysis_start {
        Some(t) => d.shifts.clone().map(|s| {
            let k = ((t - s.t0) * s.rate).round().max(0.0) as usize;
            let mut out = s.skip(k);
            out.t0 = s.t0 + k as f64 / s.rate;
            out
        }),
        None => d.shifts.clone(),
    };
    for (s, line) in shifts.iter().zip(&channels) {
        o.stream(&channel_file(line.line), s)?;
    }
    let refs: Vec<&SampleStream> = shifts.iter().collect();
    o.csv("shifts.csv", &CHANNEL_NAMES, &refs)?;
    o.report(
        c,
        c.seed,
        DemodReport {
            slopes,
            channels,
            enbw: d.enbw,
            group_delay: d.group_delay,
            output_rate: c.chain.output_rate(),
            samples: shifts[0].len(),
            laser_noise_cancelled: c.reference.is_some(),
            shift_mean: std::array::from_fn(|i| shifts[i].mean()),
            shift_std: std::array::from_fn(|i| shifts[i].std()),
        },
    )
}

// reconstruct

#[derive(Serialize)]
struct ReconstructReport {
    method: ReconstructMethod,
    matrix: SensingMatrix,
    samples: usize,
    out_of_range_frames: usize,
    mean: [f64; 3],
    std: [f64; 3],
}

fn cmd_reconstruct(c: &ReconstructConfig, consts: &PhysicalConstants, o: &mut Outputs) -> Result<(), CliError> {
    let paths = c
        .shifts
        .as_ref()
        .ok_or_else(|| CliError::Schema("reconstruct needs `shifts` (four shift-stream paths)".into()))?;
    let streams: Vec<SampleStream> = paths.iter().map(|p| SampleStream::load(p)).collect::<Result<_, _>>()?;
    let streams: [SampleStream; 4] = streams.try_into().expect("four paths");
    let m = match &c.matrix {
        Some(p) => {
            let text = read_to_string(p)?;
            serde_json::from_str::<SensingMatrix>(&text).map_err(|e| CliError::Schema(format!("{}: {e}", p.display())))?
        }
        None => {
            let point = fitted_point(&c.line_centers, consts)?;
            linearize(&point, &c.addressed, default_linearize_step(consts), consts)?
        }
    };
    let mut field = reconstruct_stream(&streams, &m)?;
    let n = streams[0].len();
    let mut out_of_range = 0;
    for k in 0..n {
        let frame = ShiftFrame::new(std::array::from_fn(|i| streams[i].samples[k]), streams[0].time(k));
        if !frame.in_range() {
            out_of_range += 1;
        }
        if c.method == ReconstructMethod::Oracle {
            let point = m.linearization_point.ok_or_else(|| {
                CliError::Schema("oracle reconstruction needs a matrix with a linearization point".into())
            })?;
            let v = reconstruct_oracle(&frame, &point, &m.addressed, consts)?;
            for j in 0..3 {
                field[j].samples[k] = v.b[j];
            }
        }
    }
    for (s, name) in field.iter().zip(["x", "y", "z"]) {
        o.stream(&format!("field_{name}.nvms"), s)?;
    }
    o.csv("field.csv", &["bx", "by", "bz"], &[&field[0], &field[1], &field[2]])?;
    o.report(
        c,
        c.seed,
        ReconstructReport {
            method: c.method,
            matrix: m,
            samples: n,
            out_of_range_frames: out_of_range,
            mean: std::array::from_fn(|j| field[j].mean()),
            std: std::array::from_fn(|j| field[j].std()),
        },
    )
}

// pipeline

#[derive(Serialize)]
struct PipelineReport<'a> {
    fit: &'a BiasFit,
    matrix: &'a SensingMatrix,
    channels: &'a [ChannelConfig; 4],
    slopes: &'a SlopeCalibration,
    enbw: f64,
    group_delay: f64,
    spectral_method: crate::dsp::SpectralMethod,
    tones: &'a [ToneReport],
    predicted_sensitivity: &'a SensitivityReport,
    empirical_eta: [f64; 3],
}

fn cmd_pipeline(c: &PipelineCmdConfig, consts: &PhysicalConstants, o: &mut Outputs) -> Result<(), CliError> {
    let r = pipeline::run(&c.pipeline, c.seed, consts)?;
    for (s, name) in r.field.iter().zip(["x", "y", "z"]) {
        o.stream(&format!("field_{name}.nvms"), s)?;
    }
    o.csv("field.csv", &["bx", "by", "bz"], &[&r.field[0], &r.field[1], &r.field[2]])?;
    o.spectra_csv("spectra.csv", &r.spectra)?;
    if c.write_shifts {
        for (s, ch) in r.shifts.iter().zip(&r.channels) {
            o.stream(&channel_file(ch.line), s)?;
        }
    }
    o.report(
        c,
        c.seed,
        PipelineReport {
            fit: &r.fit,
            matrix: &r.matrix,
            channels: &r.channels,
            slopes: &r.slopes,
            enbw: r.enbw,
            group_delay: r.group_delay,
            spectral_method: c.pipeline.spectral_method,
            tones: &r.tones,
            predicted_sensitivity: &r.predicted,
            empirical_eta: r.empirical_eta,
        },
    )
}

// sensitivity

fn cmd_sensitivity(c: &SensitivityCmdConfig, consts: &PhysicalConstants, o: &mut Outputs) -> Result<(), CliError> {
    let m = match &c.matrix {
        Some(m) => m.clone(),
        None => {
            let point = fitted_point(&c.line_centers, consts)?;
            linearize(&point, &c.addressed, default_linearize_step(consts), consts)?
        }
    };
    let r = sensitivity_report(&c.budget, &m, c.include_reference, consts)?;
    o.report(c, c.seed, r)
}

// walsh

#[derive(Serialize)]
struct WalshReport {
    monte_carlo: MonteCarloReport,
    bridge: ProjectionBridge,
    /// Lab-frame field from the mean simultaneous decode, T.
    lab_field: [f64; 3],
    /// Lab-frame field from the configured projections, T.
    lab_field_true: [f64; 3],
}

fn cmd_walsh(c: &WalshCmdConfig, consts: &PhysicalConstants, o: &mut Outputs) -> Result<(), CliError> {
    let mc = monte_carlo(&c.ramsey, &c.code, &c.projections, c.noise_std, c.trials, c.seed)?;
    let point = fitted_point(&c.line_centers, consts)?;
    let m = linearize(&point, &c.addressed, default_linearize_step(consts), consts)?;
    let bridge = ProjectionBridge::for_bias(&point.bias_field, &c.addressed, consts);
    let lab = bridge.to_lab_field(&mc.mean_simultaneous, &m);
    let lab_true = bridge.to_lab_field(&c.projections, &m);
    o.report(
        c,
        c.seed,
        WalshReport {
            monte_carlo: mc,
            bridge,
            lab_field: [lab.x, lab.y, lab.z],
            lab_field_true: [lab_true.x, lab_true.y, lab_true.z],
        },
    )
}
