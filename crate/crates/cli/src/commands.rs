//! The three subcommands. Each writes its artifacts under an output
//! directory and returns a value whose `summary` is the human-readable text
//! printed on stdout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use relaylift::channel::quantize_gain;
use relaylift::dsn::{self, DsnError, ProductCode, RelayCode};
use relaylift::gaussian::{self, BoundReport, InputDistribution, LiftedSystem, NoiseSpec, SimulationResult, Simulator};
use relaylift::lifting::{self, KappaParams, LiftError, LiftedCode, RateReport};
use relaylift::topology::{self, RelayNetwork, TopologyError};
use relaylift::typicality::{self, InducedDistribution, TypicalityError};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{config_hash, ExperimentConfig};
use crate::error::CliError;

impl From<TopologyError> for CliError {
    fn from(e: TopologyError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<DsnError> for CliError {
    fn from(e: DsnError) -> Self {
        match e {
            DsnError::Topology(_) | DsnError::Channel(_) | DsnError::TooLarge(_) | DsnError::Parse(_) => {
                CliError::Invalid(e.to_string())
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<TypicalityError> for CliError {
    fn from(e: TypicalityError) -> Self {
        match e {
            TypicalityError::TooLarge(_) => CliError::Invalid(e.to_string()),
            TypicalityError::Dsn(d) => d.into(),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<gaussian::GaussianError> for CliError {
    fn from(e: gaussian::GaussianError) -> Self {
        match e {
            gaussian::GaussianError::Dsn(d) => d.into(),
            other => CliError::Internal(other.to_string()),
        }
    }
}

/// Reads and validates a network file.
pub fn read_network(path: &Path) -> Result<RelayNetwork, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let net = topology::load_network(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    net.ensure_valid().map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(net)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf, CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, hash: &str, body: T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(&Artifact { config_hash: hash, body })
        .map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    write_file(&dir.join(name), &text)
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
        hasher.update(b"\n");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------- quantize

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainRow {
    pub from: usize,
    pub to: usize,
    /// `(tx antenna, rx antenna)` for 2x2 links.
    pub entry: Option<(usize, usize)>,
    pub re: f64,
    pub im: f64,
    pub quantized_re: i64,
    pub quantized_im: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizeOutput {
    pub bit_depth: u32,
    pub rows: Vec<GainRow>,
    pub written: Vec<PathBuf>,
}

impl QuantizeOutput {
    pub fn summary(&self) -> String {
        let mut s = format!("bit depth n = {}\n", self.bit_depth);
        let _ = writeln!(s, "{:<10} {:>14} {:>14} {:>8} {:>8}", "link", "h.re", "h.im", "h'.re", "h'.im");
        for r in &self.rows {
            let link = match r.entry {
                None => format!("{}->{}", r.from, r.to),
                Some((k, l)) => format!("{}->{}[{k}{l}]", r.from, r.to),
            };
            let _ = writeln!(s, "{link:<10} {:>14} {:>14} {:>8} {:>8}", r.re, r.im, r.quantized_re, r.quantized_im);
        }
        s
    }
}

/// Bit depth and quantized gain table of a network; with `out`, also
/// `quantized_gains.csv`.
pub fn cmd_quantize(network: &Path, out: Option<&Path>) -> Result<QuantizeOutput, CliError> {
    let net = read_network(network)?;
    let bit_depth = net.bit_depth().map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut rows = Vec::new();
    for e in net.edges() {
        let mimo = e.gain.antennas() > 1;
        for k in 0..e.gain.antennas() {
            for l in 0..e.gain.antennas() {
                let h = e.gain.entry(k, l);
                let q = quantize_gain(h);
                rows.push(GainRow {
                    from: e.from,
                    to: e.to,
                    entry: mimo.then_some((k, l)),
                    re: h.re,
                    im: h.im,
                    quantized_re: q.re,
                    quantized_im: q.im,
                });
            }
        }
    }
    let mut written = Vec::new();
    if let Some(dir) = out {
        create_dir(dir)?;
        let path = dir.join("quantized_gains.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_record(["from", "to", "tx_antenna", "rx_antenna", "re", "im", "quantized_re", "quantized_im"])
            .map_err(|e| CliError::Io(e.to_string()))?;
        for r in &rows {
            let (k, l) = r.entry.unwrap_or((0, 0));
            w.write_record([
                r.from.to_string(),
                r.to.to_string(),
                k.to_string(),
                l.to_string(),
                r.re.to_string(),
                r.im.to_string(),
                r.quantized_re.to_string(),
                r.quantized_im.to_string(),
            ])
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(QuantizeOutput { bit_depth, rows, written })
}

// ------------------------------------------------------------------ bounds

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsOutput {
    pub report: BoundReport,
    pub written: Vec<PathBuf>,
}

impl BoundsOutput {
    pub fn summary(&self) -> String {
        bounds_summary(&self.report)
    }
}

fn bounds_summary(r: &BoundReport) -> String {
    let mut s = format!(
        "genie bounds: {} samples, seed {}, {} input, M = {}, kappa(M) = {:.3}\n",
        r.samples, r.seed, r.input, r.m, r.kappa_network
    );
    let _ = writeln!(
        s,
        "exact H(floor(Z)) = {:.4} bits (< 8)",
        2.0 * r.cell_entropy_exact
    );
    let _ = writeln!(
        s,
        "{:<5} {:>3} {:>8} {:>8} {:>8} {:>8} {:>7} {:>8} {:>8}  status",
        "node", "in", "H(V)", "H(Z)", "H(C)", "sum", "+/-", "kappa", "margin"
    );
    for n in &r.nodes {
        let part = |f: fn(&gaussian::AntennaBound) -> f64| n.antennas.iter().map(f).sum::<f64>();
        let mut status = if n.within_kappa { "ok".to_string() } else { "EXCEEDS kappa".to_string() };
        if let (Some(b), Some(ok)) = (n.worked_bound, n.within_worked_bound) {
            let _ = write!(status, "; worked bound {b}: {}", if ok { "ok" } else { "EXCEEDED" });
        }
        let _ = writeln!(
            s,
            "{:<5} {:>3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>7.3} {:>8.3} {:>8.3}  {status}",
            n.node,
            n.in_degree,
            part(|a| a.floor_v.estimate),
            part(|a| a.floor_z.estimate),
            part(|a| a.carry.estimate),
            n.sum,
            n.slack,
            n.kappa_reference,
            n.kappa_reference - n.sum,
        );
    }
    s
}

/// Genie-bound check with uniform inputs; writes `bounds.json` under `out`.
pub fn cmd_bounds(network: &Path, samples: u64, seed: u64, out: &Path) -> Result<BoundsOutput, CliError> {
    if samples == 0 {
        return Err(CliError::Invalid("samples must be positive".into()));
    }
    let net = read_network(network)?;
    let report = gaussian::verify_genie_bounds(&net, &InputDistribution::Uniform, samples, seed)?;
    let doc = topology::save_network(&net);
    let hash = sha256_hex(&[b"bounds", samples.to_string().as_bytes(), seed.to_string().as_bytes(), doc.as_bytes()]);
    create_dir(out)?;
    let path = write_json(out, "bounds.json", &hash, &report)?;
    Ok(BoundsOutput { report, written: vec![path] })
}

// ---------------------------------------------------------------- pipeline

/// Everything the pipeline produced, in memory.
pub struct PipelineOutcome {
    pub config_hash: String,
    pub network: RelayNetwork,
    pub code: RelayCode,
    pub induced: InducedDistribution,
    pub product: ProductCode,
    pub lifted: LiftedCode,
    pub rate: RateReport,
    pub simulation: SimulationResult,
    pub bounds: BoundReport,
    pub written: Vec<PathBuf>,
}

impl PipelineOutcome {
    pub fn summary(&self) -> String {
        let r = &self.rate;
        let sim = &self.simulation;
        let mut s = String::new();
        let _ = writeln!(s, "config hash {}", self.config_hash);
        let _ = writeln!(
            s,
            "base code: {} codewords, N = {}, rate {:.3}",
            self.code.len(),
            self.code.block_length(),
            self.code.rate()
        );
        let _ = writeln!(
            s,
            "product code: {} codewords (n = {}), {} jointly typical",
            r.product_codewords, r.n_rep, r.joint_typical
        );
        let _ = writeln!(
            s,
            "kappa: formula {:.3}, used {:.3}{}; eta {:.3}{}",
            r.kappa_formula,
            r.kappa_used,
            if r.kappa_overridden { " (override)" } else { "" },
            r.eta,
            if r.eta_overridden { " (override)" } else { "" },
        );
        let _ = writeln!(
            s,
            "lifted code: {} codewords, log2 = {}, target {:.3}, envelope ±{:.3}",
            r.codewords,
            r.log2_codewords.map_or("-".to_string(), |l| format!("{l:.3}")),
            r.target_log2,
            r.epsilon_m
        );
        let _ = writeln!(
            s,
            "rate: achieved {:.4}, predicted R - M*kappa = {:.4}",
            r.achieved_rate, r.predicted_rate
        );
        let _ = writeln!(
            s,
            "simulation: {} trials, {} message errors (rate {:.5} ± {:.5}), {} decode failures",
            sim.trials,
            sim.message_errors,
            sim.message_error_rate(),
            sim.standard_error(),
            sim.decode_failures
        );
        s.push_str(&bounds_summary(&self.bounds));
        let _ = writeln!(s, "artifacts:");
        for p in &self.written {
            let _ = writeln!(s, "  {}", p.display());
        }
        s
    }
}

#[derive(Serialize)]
struct UnitSummary {
    unit: typicality::ReceptionUnit,
    entropy: f64,
    epsilon2: f64,
    typical_size: usize,
    pruned_size: usize,
    size_bounds_log2: (f64, f64),
}

#[derive(Serialize)]
struct PrunedSummary {
    seed: u64,
    n_rep: usize,
    length_factor: usize,
    kappa_used: f64,
    eta: f64,
    exponent: f64,
    units: Vec<UnitSummary>,
}

#[derive(Serialize)]
struct ProductSummary {
    base_codewords: usize,
    repetitions: usize,
    codewords: usize,
    block_length: usize,
    rate: f64,
    layered: bool,
}

#[derive(Serialize)]
struct BatchCsvRow<'a> {
    seed: u64,
    batch: u64,
    n_rep: usize,
    trials: u64,
    errors: u64,
    config_hash: &'a str,
}

fn empty_code_message(kappa: &KappaParams, detail: &str) -> String {
    if kappa.is_overridden() {
        format!("lifted code is empty with kappa_override = {}: {detail}", kappa.used())
    } else {
        format!(
            "lifted code is empty: {detail}. kappa = {:.3} bits per use is an asymptotic constant; \
             the kept fraction 2^(-n N kappa) vanishes for any enumerable code, so toy-scale runs \
             need kappa_override",
            kappa.formula()
        )
    }
}

/// search → purify → product → typicality → prune → lift → simulate →
/// bounds, writing every artifact under `config.out`.
pub fn cmd_pipeline(config: &ExperimentConfig) -> Result<PipelineOutcome, CliError> {
    config.validate()?;
    let net = read_network(&config.network)?;
    let hash = config_hash(config, &topology::save_network(&net));
    let seeds = config.seeds;
    let params = &config.base_code;

    let found = dsn::search_base_code(&net, params.block_length, params.rate, params.attempts, seeds.search)?
        .ok_or(CliError::NotFound { attempts: params.attempts })?;
    let code = dsn::purify_zero_error(&net, &found)?;
    let induced = typicality::induced_distribution(&net, &code)?;
    let product = dsn::build_product_code(&code, config.n_rep)?;
    let typical = (0..induced.units().len())
        .map(|u| typicality::enumerate_typical_receptions(&induced, u, config.n_rep, config.epsilon))
        .collect::<Result<Vec<_>, _>>()?;
    let kappa = KappaParams::for_network(&net, config.kappa_override).map_err(|e| CliError::Invalid(e.to_string()))?;
    let length_factor = if induced.is_layered() { code.block_length() } else { 1 };
    let pruned = lifting::prune_sets(typical, kappa, config.eta, config.n_rep, length_factor, seeds.prune)
        .map_err(|e| match e {
            LiftError::EmptyResult { .. } => CliError::EmptyCode(empty_code_message(&kappa, &e.to_string())),
            LiftError::InvalidParameter(m) => CliError::Invalid(m),
            LiftError::Typicality(t) => t.into(),
            LiftError::Dsn(d) => d.into(),
        })?;
    let lifted = lifting::build_lifted_code(&induced, &product, &pruned, config.epsilon);
    if lifted.is_empty() {
        return Err(CliError::EmptyCode(empty_code_message(
            &kappa,
            "no jointly typical codeword has all its receptions in the pruned sets",
        )));
    }
    let rate = lifting::rate_report(&lifted, code.rate(), code.block_length());

    let system = LiftedSystem { net: &net, code: &code, induced: &induced, product: &product, lifted: &lifted };
    let simulation = Simulator::new(system)?.simulate(
        config.trials,
        NoiseSpec::new(seeds.noise),
        config.decode_method(),
        config.batch_size,
    );
    let input = InputDistribution::from_code(&net, &code)?;
    let bounds = gaussian::verify_genie_bounds(&net, &input, config.bound_samples, seeds.bounds)?;

    let out = &config.out;
    create_dir(out)?;
    let mut written = Vec::new();
    written.push(write_json(out, "config.json", &hash, config)?);
    let code_doc: serde_json::Value =
        serde_json::from_str(&dsn::save_code(&code)).map_err(|e| CliError::Internal(e.to_string()))?;
    #[derive(Serialize)]
    struct CodeArtifact {
        search_seed: u64,
        found_codewords: usize,
        code: serde_json::Value,
    }
    written.push(write_json(
        out,
        "base_code.json",
        &hash,
        CodeArtifact { search_seed: seeds.search, found_codewords: found.len(), code: code_doc },
    )?);
    written.push(write_json(
        out,
        "product_code.json",
        &hash,
        ProductSummary {
            base_codewords: code.len(),
            repetitions: product.repetitions(),
            codewords: product.len(),
            block_length: product.block_length(),
            rate: product.rate(),
            layered: induced.is_layered(),
        },
    )?);
    written.push(write_json(
        out,
        "pruned_sets.json",
        &hash,
        PrunedSummary {
            seed: pruned.seed,
            n_rep: pruned.n_rep,
            length_factor: pruned.length_factor,
            kappa_used: pruned.kappa.used(),
            eta: pruned.eta,
            exponent: pruned.exponent(),
            units: pruned
                .units
                .iter()
                .map(|u| UnitSummary {
                    unit: u.unit(),
                    entropy: u.typical.entropy,
                    epsilon2: u.typical.epsilon2,
                    typical_size: u.typical.len(),
                    pruned_size: u.len(),
                    size_bounds_log2: u.size_bounds_log2(pruned.length_factor, pruned.kappa.used()),
                })
                .collect(),
        },
    )?);
    let metadata = BTreeMap::from([("config_hash".to_string(), hash.clone())]);
    written.push(write_file(&out.join("lifted_code.json"), &(lifting::save_lifted_code(&lifted, &metadata) + "\n"))?);
    written.push(write_json(out, "rate_report.json", &hash, &rate)?);
    written.push(write_json(out, "simulation.json", &hash, &simulation)?);
    let csv_path = out.join("simulation.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::Io(e.to_string()))?;
    for row in &simulation.batches {
        w.serialize(BatchCsvRow {
            seed: row.seed,
            batch: row.batch,
            n_rep: row.n_rep,
            trials: row.trials,
            errors: row.errors,
            config_hash: &hash,
        })
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;
    written.push(csv_path);
    written.push(write_json(out, "bounds.json", &hash, &bounds)?);

    Ok(PipelineOutcome {
        config_hash: hash,
        network: net,
        code,
        induced,
        product,
        lifted,
        rate,
        simulation,
        bounds,
        written,
    })
}
