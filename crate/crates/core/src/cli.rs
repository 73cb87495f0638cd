//! Command-line front end.
//!
//! Every command reads a [`RunConfig`] (defaults when `--config` is absent) and
//! stamps its artifacts with the config hash, the seed and the toolkit version.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::animator::{chain_long_motion, train_animator, AnimatorModel};
use crate::body::{forward_kinematics, KinematicTree, Pose, ShapeParams};
use crate::config::RunConfig;
use crate::data::{
    extract_clips, read_motion, read_motion_dir, read_motion_document, synth_dataset, write_motion, ExtractionWarning, InteractionClip,
    MotionSequence, Provenance,
};
use crate::error::{Error, Result};
use crate::generator::{generate_interactive_pose, train_generator, GeneratorModel, PosePair};
use crate::metrics::{evaluate, train_autoencoder, FeatureExtractor};
use crate::net::TrainLog;
use crate::rng::{derive_seed, seeded};

/// Relative output paths are resolved under this directory when it is set.
pub const OUT_ROOT_ENV: &str = "INTERPOSE_OUT_ROOT";

pub const EXPORT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "interpose", version, about = "Two-person interaction synthesis from interactive poses")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Skeleton JSON; the built-in 22-joint humanoid when omitted.
    #[arg(long, global = true)]
    pub tree: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write scripted two-person sequences.
    Synth(SynthArgs),
    /// Cut fixed-length clips around interactive frames.
    Extract(ExtractArgs),
    TrainAnimator(TrainArgs),
    TrainGenerator(TrainArgs),
    /// Train the feature autoencoder used by `evaluate`.
    TrainAutoencoder(TrainArgs),
    /// Animate an interactive pose pair into a motion clip.
    Animate(AnimateArgs),
    /// Sample an interactive pose pair.
    Generate(GenerateArgs),
    /// Generate a pose pair from text, then animate it.
    Text2interaction(Text2InteractionArgs),
    /// Score generated motions against reference motions.
    Evaluate(EvaluateArgs),
    /// Write world joint positions of a motion for plotting.
    Export(ExportArgs),
    /// Print the skeleton definition.
    Tree,
    /// Print the resolved configuration.
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Overrides `synth.count`.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of clips written by `extract`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Overrides the configured step count.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Per-step loss CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnimateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Motion file holding the anchor pose pair.
    #[arg(long)]
    pub anchor: PathBuf,
    /// Frame of the anchor file to use; its `anchor_index`, else 0, by default.
    #[arg(long)]
    pub anchor_frame: Option<usize>,
    /// Output frame at which the anchor is placed.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = 1)]
    pub segments: usize,
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Motion file whose person a is kept fixed.
    #[arg(long)]
    pub pose_a: Option<PathBuf>,
    #[arg(long)]
    pub pose_frame: Option<usize>,
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Text2InteractionArgs {
    #[arg(long)]
    pub generator: PathBuf,
    #[arg(long)]
    pub animator: PathBuf,
    #[arg(long)]
    pub text: String,
    #[arg(long)]
    pub pose_a: Option<PathBuf>,
    #[arg(long)]
    pub pose_frame: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the generated pose pair here.
    #[arg(long)]
    pub pose_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub gen: PathBuf,
    #[arg(long)]
    pub ae: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub motion: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ExportFormat::Json)]
    pub format: ExportFormat,
}

/// World joint positions of both persons, one entry per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportFrameSet {
    pub version: u32,
    pub fps: f64,
    pub joint_names: Vec<String>,
    pub parents: Vec<Option<usize>>,
    pub text: Option<String>,
    pub frames: Vec<ExportFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportFrame {
    pub a: Vec<[f64; 3]>,
    pub b: Vec<[f64; 3]>,
}

impl ExportFrameSet {
    pub fn from_motion(seq: &MotionSequence, tree: &KinematicTree) -> Result<Self> {
        let joints = |pose: &Pose, shape: &ShapeParams| -> Result<Vec<[f64; 3]>> {
            Ok(forward_kinematics(pose, shape, tree)?.0.iter().map(|j| [j.x, j.y, j.z]).collect())
        };
        let frames = seq
            .poses_a
            .iter()
            .zip(&seq.poses_b)
            .map(|(a, b)| {
                Ok(ExportFrame {
                    a: joints(a, &seq.shape_a)?,
                    b: joints(b, &seq.shape_b)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            version: EXPORT_VERSION,
            fps: seq.fps,
            joint_names: tree.names().to_vec(),
            parents: (0..tree.joint_count()).map(|j| tree.parent(j)).collect(),
            text: seq.text.clone(),
            frames,
        })
    }

    /// `frame,person,joint,x,y,z` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,person,joint,x,y,z\n");
        for (f, frame) in self.frames.iter().enumerate() {
            for (person, joints) in [("a", &frame.a), ("b", &frame.b)] {
                for (name, p) in self.joint_names.iter().zip(joints.iter()) {
                    out.push_str(&format!("{f},{person},{name},{},{},{}\n", p[0], p[1], p[2]));
                }
            }
        }
        out
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 3,
        Error::Checkpoint(_) => 4,
        Error::MalformedFile { .. } => 5,
        Error::Training { .. } => 6,
        _ => 1,
    }
}

/// Machine-readable error line written to stderr.
pub fn error_json(err: &Error) -> String {
    let kind = match err {
        Error::InvalidInput(_) => "invalid_input",
        Error::ShapeMismatch(_) => "shape_mismatch",
        Error::MalformedFile { .. } => "malformed_motion",
        Error::Config(_) => "config",
        Error::Checkpoint(_) => "checkpoint",
        Error::Training { .. } => "training",
        Error::Io { .. } => "io",
        Error::Tensor(_) => "tensor",
    };
    serde_json::json!({
        "error": kind,
        "exit_code": exit_code(err),
        "message": err.to_string(),
    })
    .to_string()
}

struct Context {
    cfg: RunConfig,
    tree: KinematicTree,
    out_root: Option<PathBuf>,
}

impl Context {
    fn provenance(&self, seed: u64) -> Provenance {
        Provenance::new(self.cfg.hash(), seed)
    }

    fn out_path(&self, path: &Path) -> PathBuf {
        match &self.out_root {
            Some(root) if path.is_relative() => root.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn write_text(&self, path: &Path, text: &str) -> Result<PathBuf> {
        let path = self.out_path(path);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn write_motion(&self, path: &Path, seq: &MotionSequence, anchor: Option<usize>, seed: u64) -> Result<PathBuf> {
        let path = self.out_path(path);
        write_motion(&path, seq, anchor, Some(self.provenance(seed)))?;
        Ok(path)
    }

    fn create_dir(&self, path: &Path) -> Result<PathBuf> {
        let path = self.out_path(path);
        std::fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Clips written by `extract`; each file must carry its anchor index.
    fn load_clips(&self, dir: &Path) -> Result<Vec<InteractionClip>> {
        let mut clips = Vec::new();
        for (path, seq, anchor) in read_motion_dir(dir)? {
            let anchor = anchor.ok_or_else(|| Error::MalformedFile {
                path: path.clone(),
                field: "anchor_index".into(),
                message: "training clips need an anchor index".into(),
            })?;
            clips.push(InteractionClip::new(seq, anchor, &self.tree, self.cfg.extraction.contact_threshold)?);
        }
        if clips.is_empty() {
            return Err(Error::invalid(format!("no motion files in {}", dir.display())));
        }
        Ok(clips)
    }

    fn write_log(&self, path: Option<&Path>, log: &TrainLog) -> Result<()> {
        if let Some(p) = path {
            self.write_text(p, &log.to_csv())?;
        }
        Ok(())
    }
}

/// Picks a frame of a motion file: the explicit one, else its anchor index, else 0.
fn pick_frame(path: &Path, frame: Option<usize>) -> Result<(MotionSequence, usize)> {
    let (seq, anchor) = read_motion(path)?;
    let f = frame.or(anchor).unwrap_or(0);
    if f >= seq.len() {
        return Err(Error::invalid(format!(
            "frame {f} outside {} ({} frames)",
            path.display(),
            seq.len()
        )));
    }
    Ok((seq, f))
}

fn single_frame(pair: &[Pose; 2], shapes: &[ShapeParams; 2], fps: f64, text: Option<String>) -> Result<MotionSequence> {
    MotionSequence::new(
        vec![pair[0].clone()],
        vec![pair[1].clone()],
        shapes[0],
        shapes[1],
        fps,
        text,
    )
}

fn with_steps(mut opt: crate::net::OptimizerConfig, steps: Option<usize>) -> crate::net::OptimizerConfig {
    if let Some(s) = steps {
        opt.steps = s;
    }
    opt
}

/// Runs one command; the binary maps the error to an exit code.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let tree = match &cli.tree {
        Some(p) => KinematicTree::load(p)?,
        None => KinematicTree::default(),
    };
    let ctx = Context {
        cfg,
        tree,
        out_root: std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from),
    };
    let cfg = &ctx.cfg;
    let tree = &ctx.tree;
    let dtype = cfg.precision.dtype();

    match cli.command {
        Command::Synth(a) => {
            let mut params = cfg.synth.clone();
            if let Some(c) = a.count {
                params.count = c;
            }
            let dir = ctx.create_dir(&a.out)?;
            for (i, seq) in synth_dataset(&params, tree, a.seed)?.iter().enumerate() {
                ctx.write_motion(&dir.join(format!("seq_{i:04}.json")), seq, None, a.seed)?;
            }
            log::info!("wrote {} sequences to {}", params.count, dir.display());
        }
        Command::Extract(a) => {
            let dir = ctx.create_dir(&a.out)?;
            let mut written = 0;
            for (path, seq, _) in read_motion_dir(&a.input)? {
                let seed = read_motion_document(&path)?.provenance.map_or(0, |p| p.seed);
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("seq").to_string();
                let ex = extract_clips(&seq, tree, &cfg.extraction)?;
                for w in &ex.warnings {
                    let ExtractionWarning::TooShort { frames, needed } = w;
                    log::warn!("{}: {frames} frames, clips need {needed}; skipped", path.display());
                }
                for (k, clip) in ex.clips.iter().enumerate() {
                    // extraction is deterministic, so clips keep the seed of their source
                    ctx.write_motion(&dir.join(format!("{stem}_clip{k:02}.json")), &clip.sequence, Some(clip.anchor), seed)?;
                    written += 1;
                }
            }
            log::info!("wrote {written} clips to {}", dir.display());
        }
        Command::TrainAnimator(a) => {
            let clips = ctx.load_clips(&a.data)?;
            let opt = with_steps(cfg.optimizer.animator.clone(), a.steps);
            let (model, log) = train_animator(&clips, &cfg.animator, &opt, tree, dtype, a.seed)?;
            model.save(&ctx.out_path(&a.out), &ctx.provenance(a.seed))?;
            ctx.write_log(a.log.as_deref(), &log)?;
        }
        Command::TrainGenerator(a) => {
            let pairs: Vec<PosePair> = ctx.load_clips(&a.data)?.iter().map(PosePair::from_clip).collect();
            let opt = with_steps(cfg.optimizer.generator.clone(), a.steps);
            let (model, log) = train_generator(&pairs, &cfg.generator, &opt, tree, dtype, a.seed)?;
            model.save(&ctx.out_path(&a.out), &ctx.provenance(a.seed))?;
            ctx.write_log(a.log.as_deref(), &log)?;
        }
        Command::TrainAutoencoder(a) => {
            let motions: Vec<MotionSequence> = read_motion_dir(&a.data)?.into_iter().map(|(_, s, _)| s).collect();
            let opt = with_steps(cfg.optimizer.autoencoder.clone(), a.steps);
            let (model, log) = train_autoencoder(&motions, &cfg.metrics.autoencoder, &opt, tree, dtype, a.seed)?;
            model.save(&ctx.out_path(&a.out), &ctx.provenance(a.seed))?;
            ctx.write_log(a.log.as_deref(), &log)?;
        }
        Command::Animate(a) => {
            let (model, _) = AnimatorModel::load(&a.ckpt)?;
            let (seq, f) = pick_frame(&a.anchor, a.anchor_frame)?;
            let anchor = [seq.poses_a[f].clone(), seq.poses_b[f].clone()];
            let frames = model.config().frames;
            let mut out = chain_long_motion(
                &model,
                &anchor,
                &[seq.shape_a, seq.shape_b],
                a.index,
                frames,
                a.segments,
                tree,
                &cfg.ddim,
                &mut seeded(a.seed),
            )?;
            out.text = a.text.or(seq.text);
            ctx.write_motion(&a.out, &out, Some(a.index), a.seed)?;
        }
        Command::Generate(a) => {
            let (model, _) = GeneratorModel::load(&a.ckpt)?;
            let given = a.pose_a.as_deref().map(|p| pick_frame(p, a.pose_frame)).transpose()?;
            let pose_a = given.as_ref().map(|(s, f)| (&s.poses_a[*f], &s.shape_a));
            let pair = generate_interactive_pose(&model, pose_a, a.text.as_deref(), tree, &cfg.ddim, &mut seeded(a.seed))?;
            let seq = single_frame(&pair.poses, &pair.shapes, cfg.animator.fps, a.text)?;
            ctx.write_motion(&a.out, &seq, Some(0), a.seed)?;
        }
        Command::Text2interaction(a) => {
            let (generator, _) = GeneratorModel::load(&a.generator)?;
            let (animator, _) = AnimatorModel::load(&a.animator)?;
            let given = a.pose_a.as_deref().map(|p| pick_frame(p, a.pose_frame)).transpose()?;
            let pose_a = given.as_ref().map(|(s, f)| (&s.poses_a[*f], &s.shape_a));
            let mut rng = seeded(derive_seed(a.seed, 0));
            let pair = generate_interactive_pose(&generator, pose_a, Some(&a.text), tree, &cfg.ddim, &mut rng)?;
            if let Some(p) = &a.pose_out {
                let seq = single_frame(&pair.poses, &pair.shapes, animator.config().fps, Some(a.text.clone()))?;
                ctx.write_motion(p, &seq, Some(0), a.seed)?;
            }
            let mut rng = seeded(derive_seed(a.seed, 1));
            let mut out = chain_long_motion(
                &animator,
                &pair.poses,
                &pair.shapes,
                a.index,
                animator.config().frames,
                1,
                tree,
                &cfg.ddim,
                &mut rng,
            )?;
            out.text = Some(a.text);
            ctx.write_motion(&a.out, &out, Some(a.index), a.seed)?;
        }
        Command::Evaluate(a) => {
            let (extractor, _) = FeatureExtractor::load(&a.ae, tree)?;
            let load = |d: &Path| -> Result<Vec<MotionSequence>> {
                Ok(read_motion_dir(d)?.into_iter().map(|(_, s, _)| s).collect())
            };
            let report = evaluate(
                &load(&a.real)?,
                &load(&a.gen)?,
                &extractor,
                &cfg.metrics,
                tree,
                &ctx.provenance(a.seed),
            )?;
            ctx.write_text(&a.report, &report.to_json())?;
        }
        Command::Export(a) => {
            let (seq, _) = read_motion(&a.motion)?;
            let set = ExportFrameSet::from_motion(&seq, tree)?;
            let text = match a.format {
                ExportFormat::Json => serde_json::to_string_pretty(&set).expect("export serializes"),
                ExportFormat::Csv => set.to_csv(),
            };
            ctx.write_text(&a.out, &text)?;
        }
        Command::Tree => println!("{}", tree.to_json()),
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}
