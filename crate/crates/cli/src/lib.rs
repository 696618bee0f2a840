//! Command-line front end: synthesize corpora, explain, evaluate, render,
//! and serve in-process oracles over the line protocol.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use xsumx_core::corpus::load_corpus;
use xsumx_core::evaluation::{evaluate_corpus, DeltaScope, EvalConfig, EvalEntry, MethodGroup};
use xsumx_core::fragment_explainer::{attention_fragment_explain, lime_fragment_explain, FragmentExplanation, Method};
use xsumx_core::lime::{Kernel, LimeConfig, TOP_K};
use xsumx_core::model::{Finding, PerturbationSpec, VideoBundle};
use xsumx_core::object_explainer::{
    lime_object_explain, select_fragments_by_summarizer, select_fragments_from_explanation, ObjectExplainConfig,
    ObjectExplanation, ObjectOutcome,
};
use xsumx_core::oracle::{self, Oracle, OracleSelector};
use xsumx_core::overlay::{render_overlay, save_png, RgbFrame};
use xsumx_core::synth::{write_corpus, SynthConfig};
use xsumx_core::{Error, Result};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;

/// Exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_oracle() {
        EXIT_ORACLE
    } else {
        EXIT_INPUT
    }
}

#[derive(Debug, Parser)]
#[command(name = "xsumx", version, about = "Explain video summarizers at fragment and object level")]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic corpus with known ground truth.
    Synth(SynthArgs),
    /// Explain which fragments drive each video's scores.
    ExplainFragments(FragmentArgs),
    /// Explain which objects drive the scores inside selected fragments.
    ExplainObjects(ObjectArgs),
    /// Measure explanation faithfulness (Disc+, Disc-, SV).
    Evaluate(EvaluateArgs),
    /// Draw overlays for existing object explanations.
    Render(RenderArgs),
    /// Serve an oracle over the line protocol on stdio or TCP.
    OracleServe(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub videos: usize,
    #[arg(long, default_value_t = 12)]
    pub fragments: usize,
}

#[derive(Debug, Args)]
pub struct OracleArg {
    /// toy-attention, toy-norm, linear:BASE:W0,W1..[:SLOPE], pixel[:SCORER], exec:CMD or tcp:ADDR
    #[arg(long, env = "XSUMX_ORACLE")]
    pub oracle: String,
}

impl OracleArg {
    fn build(&self) -> Result<Box<dyn Oracle>> {
        self.oracle.parse::<OracleSelector>()?.build()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Uniform,
    Exponential,
}

#[derive(Debug, Args)]
pub struct LimeArgs {
    /// Perturbation budget; defaults to 20000 for fragments, 2000 for objects.
    #[arg(long)]
    pub perturbations: Option<usize>,
    #[arg(long, value_enum, default_value_t = KernelArg::Uniform)]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 0.25)]
    pub kernel_width: f64,
    /// Probability of masking each item in a sampled perturbation.
    #[arg(long, default_value_t = 0.5)]
    pub mask_probability: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl LimeArgs {
    fn config(&self, mut base: LimeConfig) -> LimeConfig {
        if let Some(m) = self.perturbations {
            base.num_perturbations = m;
        }
        base.kernel = match self.kernel {
            KernelArg::Uniform => Kernel::Uniform,
            KernelArg::Exponential => Kernel::Exponential,
        };
        base.kernel_width = self.kernel_width;
        base.mask_probability = self.mask_probability;
        base.ridge_lambda = self.ridge;
        base.rng_seed = self.seed;
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Lime,
    Attention,
}

#[derive(Debug, Args)]
pub struct FragmentArgs {
    /// Corpus directory containing manifest.json.
    pub corpus: PathBuf,
    #[command(flatten)]
    pub oracle: OracleArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Lime)]
    pub method: MethodArg,
    #[command(flatten)]
    pub lime: LimeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FragmentSource {
    Explanation,
    Summarizer,
}

#[derive(Debug, Args)]
pub struct ObjectArgs {
    pub corpus: PathBuf,
    #[command(flatten)]
    pub oracle: OracleArg,
    #[arg(long, value_enum, default_value_t = FragmentSource::Summarizer)]
    pub fragments_source: FragmentSource,
    /// Directory with <video>.fragments.json, for --fragments-source explanation.
    #[arg(long)]
    pub explanations: Option<PathBuf>,
    /// Keyframe objects covering less than this fraction of the frame are ignored.
    #[arg(long, default_value_t = 0.0)]
    pub min_area: f64,
    #[command(flatten)]
    pub lime: LimeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Fragments,
    Objects,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub corpus: PathBuf,
    #[command(flatten)]
    pub oracle: OracleArg,
    /// Explanation directories; each becomes one row group of the tables.
    #[arg(long, required = true)]
    pub explanations: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Level::Fragments)]
    pub level: Level,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub corpus: PathBuf,
    /// Directory with <video>.objects.<fragment>.json files.
    #[arg(long)]
    pub explanations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub oracle: OracleArg,
    /// Listen on this address instead of stdio; the bound address is printed.
    #[arg(long)]
    pub listen: Option<String>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

pub fn fragments_file(dir: &Path, video_id: &str) -> PathBuf {
    dir.join(format!("{video_id}.fragments.json"))
}

pub fn objects_file(dir: &Path, video_id: &str, fragment: usize) -> PathBuf {
    dir.join(format!("{video_id}.objects.{fragment}.json"))
}

pub fn overlay_file(dir: &Path, video_id: &str, fragment: usize) -> PathBuf {
    dir.join(format!("{video_id}.objects.{fragment}.png"))
}

/// Object explanation files in `dir`, sorted by video id then fragment.
fn object_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut found: BTreeMap<(String, usize), PathBuf> = BTreeMap::new();
    for entry in rd.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(stem) = name.strip_suffix(".json") else { continue };
        let Some((video, frag)) = stem.rsplit_once(".objects.") else { continue };
        if let Ok(frag) = frag.parse::<usize>() {
            found.insert((video.to_string(), frag), entry.path());
        }
    }
    Ok(found.into_values().collect())
}

pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if cli.workers > 0 {
        pool = pool.num_threads(cli.workers);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::ExplainFragments(a) => cmd_explain_fragments(&a),
        Command::ExplainObjects(a) => cmd_explain_objects(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Render(a) => cmd_render(&a),
        Command::OracleServe(a) => cmd_oracle_serve(&a),
    })
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    ensure_dir(&a.out)?;
    let cfg = SynthConfig {
        seed: a.seed,
        n_videos: a.videos,
        n_fragments: a.fragments,
        ..SynthConfig::default()
    };
    let truth = write_corpus(&a.out, &cfg)?;
    info!("wrote {} videos to {}", truth.videos.len(), a.out.display());
    Ok(())
}

pub fn cmd_explain_fragments(a: &FragmentArgs) -> Result<()> {
    let bundles = load_corpus(&a.corpus)?;
    let oracle = a.oracle.build()?;
    let cfg = a.lime.config(LimeConfig::fragment_default());
    ensure_dir(&a.out)?;
    let explanations = bundles
        .par_iter()
        .map(|b| {
            let e = match a.method {
                MethodArg::Lime => lime_fragment_explain(oracle.as_ref(), b, &cfg)?,
                MethodArg::Attention => attention_fragment_explain(oracle.as_ref(), b)?,
            };
            info!("{}: fragment explanation done (top {:?})", b.video_id, e.top);
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    for e in &explanations {
        write_json(&fragments_file(&a.out, &e.video_id), e)?;
    }
    Ok(())
}

fn overlay_for(bundle: &VideoBundle, e: &ObjectExplanation) -> Result<(RgbFrame, Vec<Finding>)> {
    let frames = bundle.frames()?;
    let seg = bundle.segmentation()?;
    let frame = RgbFrame::new(frames.height(), frames.width(), frames.frame(e.keyframe_index).to_vec())?;
    render_overlay(&frame, seg.frame(e.keyframe_index), &e.top, &e.bottom)
}

pub fn cmd_explain_objects(a: &ObjectArgs) -> Result<()> {
    let bundles = load_corpus(&a.corpus)?;
    if a.fragments_source == FragmentSource::Explanation {
        let dir = a.explanations.as_ref().ok_or_else(|| {
            Error::Validation("--fragments-source explanation needs --explanations DIR".into())
        })?;
        for b in bundles.iter().filter(|b| b.segmentation.is_some()) {
            let p = fragments_file(dir, &b.video_id);
            if !p.is_file() {
                return Err(Error::Validation(format!("missing fragment explanation {}", p.display())));
            }
        }
    }
    let oracle = a.oracle.build()?;
    let cfg = ObjectExplainConfig {
        lime: a.lime.config(LimeConfig::object_default()),
        min_area_fraction: a.min_area,
    };
    ensure_dir(&a.out)?;

    let per_video = bundles
        .par_iter()
        .map(|b| explain_video_objects(oracle.as_ref(), b, a, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut findings = Vec::new();
    for (explanations, f) in per_video {
        findings.extend(f);
        for (e, overlay) in explanations {
            write_json(&objects_file(&a.out, &e.video_id, e.fragment_index), &e)?;
            if let Some(img) = overlay {
                save_png(overlay_file(&a.out, &e.video_id, e.fragment_index), &img)?;
            }
        }
    }
    write_json(&a.out.join("findings.json"), &findings)
}

type VideoObjects = (Vec<(ObjectExplanation, Option<RgbFrame>)>, Vec<Finding>);

fn explain_video_objects(
    oracle: &dyn Oracle,
    b: &VideoBundle,
    a: &ObjectArgs,
    cfg: &ObjectExplainConfig,
) -> Result<VideoObjects> {
    let mut findings = Vec::new();
    if b.segmentation.is_none() {
        findings.push(Finding::new(
            "explain-objects",
            format!("video {}: no segmentation maps, skipped", b.video_id),
        ));
        return Ok((Vec::new(), findings));
    }
    let selection = match a.fragments_source {
        FragmentSource::Summarizer => {
            let baseline = oracle::score(oracle, b, &PerturbationSpec::None)?;
            select_fragments_by_summarizer(&baseline, &b.fragmentation, TOP_K)
        }
        FragmentSource::Explanation => {
            let dir = a.explanations.as_ref().expect("checked before");
            let e: FragmentExplanation = read_json(&fragments_file(dir, &b.video_id))?;
            if e.video_id != b.video_id || e.weights.len() != b.n_fragments() {
                return Err(Error::Validation(format!(
                    "fragment explanation for {} does not match the corpus",
                    b.video_id
                )));
            }
            select_fragments_from_explanation(&e, TOP_K)
        }
    };
    let mut out = Vec::new();
    for &frag in &selection.fragment_indices {
        match lime_object_explain(oracle, b, frag, cfg)? {
            ObjectOutcome::Skipped(f) => findings.push(f),
            ObjectOutcome::Explained(e) => {
                info!(
                    "{} fragment {frag}: {} objects, {} perturbations{}",
                    b.video_id,
                    e.ranking.len(),
                    e.n_perturbations,
                    if e.exhaustive { " (exhaustive)" } else { "" }
                );
                let overlay = if b.frames.is_some() {
                    let (img, f) = overlay_for(b, &e)?;
                    findings.extend(f);
                    Some(img)
                } else {
                    None
                };
                out.push((e, overlay));
            }
        }
    }
    Ok((out, findings))
}

fn group_label(dir: &Path, methods: &[Method]) -> String {
    match methods.first() {
        Some(m) if methods.iter().all(|x| x == m) => m.to_string(),
        _ => dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string()),
    }
}

fn load_groups(a: &EvaluateArgs, bundles: &[VideoBundle]) -> Result<Vec<MethodGroup>> {
    let mut groups = Vec::new();
    for dir in &a.explanations {
        let group = match a.level {
            Level::Fragments => {
                let mut entries = Vec::new();
                let mut methods = Vec::new();
                for b in bundles {
                    let p = fragments_file(dir, &b.video_id);
                    if !p.is_file() {
                        continue;
                    }
                    let e: FragmentExplanation = read_json(&p)?;
                    methods.push(e.method);
                    entries.push(EvalEntry::from(&e));
                }
                MethodGroup {
                    method: group_label(dir, &methods),
                    entries,
                }
            }
            Level::Objects => {
                let mut entries = Vec::new();
                for p in object_files(dir)? {
                    let e: ObjectExplanation = read_json(&p)?;
                    entries.push(EvalEntry::from(&e));
                }
                MethodGroup {
                    method: group_label(dir, &[]),
                    entries,
                }
            }
        };
        if group.entries.is_empty() {
            return Err(Error::Validation(format!("no explanations found in {}", dir.display())));
        }
        groups.push(group);
    }
    Ok(groups)
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let bundles = load_corpus(&a.corpus)?;
    let groups = load_groups(a, &bundles)?;
    let oracle = a.oracle.build()?;
    let cfg = EvalConfig {
        fragment_scope: DeltaScope::WholeVideo,
        ..EvalConfig::default()
    };
    let report = evaluate_corpus(oracle.as_ref(), &bundles, &groups, &cfg)?;
    ensure_dir(&a.out)?;
    std::fs::write(a.out.join("report.json"), report.to_json()?).map_err(|e| Error::Io {
        path: a.out.join("report.json"),
        source: e,
    })?;
    std::fs::write(a.out.join("report.txt"), report.to_text()).map_err(|e| Error::Io {
        path: a.out.join("report.txt"),
        source: e,
    })?;
    Ok(())
}

pub fn cmd_render(a: &RenderArgs) -> Result<()> {
    let bundles = load_corpus(&a.corpus)?;
    ensure_dir(&a.out)?;
    let mut findings = Vec::new();
    for p in object_files(&a.explanations)? {
        let e: ObjectExplanation = read_json(&p)?;
        let b = bundles
            .iter()
            .find(|b| b.video_id == e.video_id)
            .ok_or_else(|| Error::Validation(format!("no bundle for video {}", e.video_id)))?;
        if b.frames.is_none() {
            findings.push(Finding::new("render", format!("video {}: no raw frames", b.video_id)));
            continue;
        }
        let (img, f) = overlay_for(b, &e)?;
        findings.extend(f);
        save_png(overlay_file(&a.out, &e.video_id, e.fragment_index), &img)?;
    }
    write_json(&a.out.join("findings.json"), &findings)
}

pub fn cmd_oracle_serve(a: &ServeArgs) -> Result<()> {
    let oracle = a.oracle.build()?;
    match &a.listen {
        None => {
            let stdin = std::io::stdin();
            oracle::server::serve(oracle.as_ref(), stdin.lock(), std::io::stdout())
        }
        Some(addr) => {
            let listener = std::net::TcpListener::bind(addr)
                .map_err(|e| Error::Oracle(format!("cannot listen on {addr}: {e}")))?;
            let local = listener
                .local_addr()
                .map_err(|e| Error::Oracle(format!("no local address: {e}")))?;
            println!("listening on {local}");
            oracle::server::serve_tcp(oracle.as_ref(), listener)
        }
    }
}
