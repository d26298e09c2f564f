//! `uvforge`: per-stage subcommands and the end-to-end texture pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 4 solver non-convergence
//! (output still written), 3 any other stage failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uvforge_core::correction::{ArtifactMasks, ParsingLabels, TemplateTexture};
use uvforge_core::error::Error;
use uvforge_core::fitting;
use uvforge_core::geometry::{load_obj, CameraPose};
use uvforge_core::image::{
    load_gray, load_labels, load_rgb, save_gray_u16, save_rgb, save_rgb_u16,
};
use uvforge_core::metrics::{bs_error_masked, BsErrorParams};
use uvforge_core::pipeline::{self, quantize16_gray, validate_config};
use uvforge_core::poisson::{poisson_clone, PoissonProblem, SolverParams};
use uvforge_core::{correction, unwrap};

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;
const EXIT_NONCONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "uvforge", version, about = "Facial UV-texture toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unwrap a photo into UV space over a posed mesh.
    Unwrap(UnwrapArgs),
    /// Match a source texture's color statistics to a target's.
    MatchColor(MatchColorArgs),
    /// Blend textures with per-texel weights.
    Fuse(FuseArgs),
    /// Build artifact masks (eyes, mouth, nostrils) in UV space.
    Masks(MasksArgs),
    /// Poisson-fill artifact masks from a template texture.
    Correct(CorrectArgs),
    /// Complete non-face regions from a template.
    Complete(CompleteArgs),
    /// Brightness Symmetry Error of a texture.
    BsError(BsErrorArgs),
    /// Fit the morphable model to a single image.
    Fit(FitArgs),
    /// Poisson-clone a source into a masked region of a target.
    Poisson(PoissonArgs),
    /// Run the full pipeline from a JSON config.
    Pipeline(PipelineArgs),
    /// Validate a pipeline config without computing anything.
    Validate(ValidateArgs),
    /// Write the default asset files (and the tiny model).
    GenAssets(GenAssetsArgs),
    /// Generate a synthetic three-view scene to try the pipeline on.
    Demo(DemoArgs),
}

#[derive(Args)]
struct UnwrapArgs {
    #[arg(long)]
    photo: PathBuf,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    pose: PathBuf,
    #[arg(long, default_value_t = 1024)]
    uv_size: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    coverage: Option<PathBuf>,
    /// Also unwrap this image-space mask (e.g. parsing face region).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    mask_out: Option<PathBuf>,
}

#[derive(Args)]
struct MatchColorArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    source_mask: PathBuf,
    #[arg(long)]
    target_mask: PathBuf,
    #[arg(long, default_value_t = 1.5)]
    omega: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Texture PNGs, in the same order as --weight.
    #[arg(long = "texture", required = true)]
    textures: Vec<PathBuf>,
    /// Weight mask PNGs, one per texture.
    #[arg(long = "weight", required = true)]
    weights: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MasksArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    texture: PathBuf,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    pose: PathBuf,
    #[arg(long)]
    nose_roi: PathBuf,
    #[arg(long, default_value_t = 1024)]
    uv_size: usize,
    #[arg(long, default_value_t = 6)]
    dilation_radius: usize,
    #[arg(long, default_value_t = 30.0)]
    nostril_percentile: f64,
    /// Output prefix; writes `<prefix>_{leye,reye,mouth,nostril}.png`.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    texture: PathBuf,
    #[arg(long)]
    template: PathBuf,
    /// Artifact mask PNGs (unioned).
    #[arg(long = "mask", required = true)]
    masks: Vec<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    texture: PathBuf,
    #[arg(long)]
    face_mask: PathBuf,
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    template_mask: PathBuf,
    #[arg(long, default_value_t = 1.5)]
    omega: f64,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BsErrorArgs {
    texture: PathBuf,
    #[arg(long, default_value_t = 55)]
    kernel_size: usize,
    #[arg(long, default_value_t = 255.0)]
    scale: f64,
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    image: PathBuf,
    /// Detected landmarks: JSON {"points": [[x, y], ...68]}.
    #[arg(long)]
    landmarks: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optionally write the final rendered fit.
    #[arg(long)]
    render: Option<PathBuf>,
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Args)]
struct PoissonArgs {
    #[arg(long)]
    region: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// One or more pipeline config files.
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    keep_intermediates: bool,
}

#[derive(Args)]
struct ValidateArgs {
    config: PathBuf,
}

#[derive(Args)]
struct GenAssetsArgs {
    dir: PathBuf,
    #[arg(long, default_value_t = 512)]
    size: usize,
}

#[derive(Args)]
struct DemoArgs {
    dir: PathBuf,
    #[arg(long, default_value_t = 256)]
    uv_size: usize,
    #[arg(long, default_value_t = 256)]
    image_size: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn classify(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Json { .. } | Error::Io { .. } | Error::ImageDecode { .. } => {
            EXIT_CONFIG
        }
        Error::Stage { source, .. } => classify(source),
        _ => EXIT_STAGE,
    }
}

fn fail(err: Error) -> u8 {
    eprintln!("error: {err}");
    let mut cause = std::error::Error::source(&err);
    while let Some(c) = cause {
        eprintln!("  caused by: {c}");
        cause = c.source();
    }
    classify(&err)
}

fn run(command: Command) -> Result<u8, Error> {
    match command {
        Command::Unwrap(args) => {
            let photo = load_rgb(&args.photo)?;
            let mesh = load_obj(&args.mesh)?;
            let pose = CameraPose::load_json(&args.pose)?;
            let res = unwrap::unwrap_texture(&photo, &mesh, &pose, args.uv_size)?;
            save_rgb_u16(&pipeline::quantize16_rgb(&res.texture), &args.out)?;
            if let Some(path) = &args.coverage {
                save_gray_u16(&quantize16_gray(&res.coverage), path)?;
            }
            if let (Some(mask_path), Some(out_path)) = (&args.mask, &args.mask_out) {
                let mask = load_gray(mask_path)?;
                let (uv_mask, _) = unwrap::unwrap_mask(&mask, &mesh, &pose, args.uv_size)?;
                save_gray_u16(&quantize16_gray(&uv_mask), out_path)?;
            }
            if res.degenerate_triangles > 0 {
                eprintln!(
                    "warning: skipped {} degenerate UV triangles",
                    res.degenerate_triangles
                );
            }
            Ok(EXIT_OK)
        }
        Command::MatchColor(args) => {
            let source = load_rgb(&args.source)?;
            let target = load_rgb(&args.target)?;
            let source_mask = load_gray(&args.source_mask)?;
            let target_mask = load_gray(&args.target_mask)?;
            let out = uvforge_core::texture::match_color(
                &source,
                &target,
                &source_mask,
                &target_mask,
                uvforge_core::texture::ColorMatchParams::new(args.omega)?,
            )?;
            save_rgb_u16(&pipeline::quantize16_rgb(&out), &args.out)?;
            Ok(EXIT_OK)
        }
        Command::Fuse(args) => {
            if args.textures.len() != args.weights.len() {
                return Err(Error::Config(format!(
                    "{} textures but {} weights",
                    args.textures.len(),
                    args.weights.len()
                )));
            }
            let textures: Vec<_> = args
                .textures
                .iter()
                .map(load_rgb)
                .collect::<Result<_, _>>()?;
            let weights: Vec<_> = args
                .weights
                .iter()
                .map(load_gray)
                .collect::<Result<_, _>>()?;
            let fused = uvforge_core::texture::linear_blend(&textures, &weights)?;
            save_rgb_u16(&pipeline::quantize16_rgb(&fused), &args.out)?;
            Ok(EXIT_OK)
        }
        Command::Masks(args) => {
            let (w, h, codes) = load_labels(&args.labels)?;
            let parsing = ParsingLabels::new(w, h, codes)?;
            let texture = load_rgb(&args.texture)?;
            let mesh = load_obj(&args.mesh)?;
            let pose = CameraPose::load_json(&args.pose)?;
            let nose_roi = load_gray(&args.nose_roi)?;
            let masks = correction::build_artifact_masks(
                &parsing,
                &texture,
                &mesh,
                &pose,
                args.uv_size,
                args.dilation_radius,
                &nose_roi,
                args.nostril_percentile,
            )?;
            let prefix = args.out_prefix.display();
            save_gray_u16(&masks.m_leye, format!("{prefix}_leye.png"))?;
            save_gray_u16(&masks.m_reye, format!("{prefix}_reye.png"))?;
            save_gray_u16(&masks.m_mouth, format!("{prefix}_mouth.png"))?;
            save_gray_u16(&masks.m_nostril, format!("{prefix}_nostril.png"))?;
            Ok(EXIT_OK)
        }
        Command::Correct(args) => {
            let texture = load_rgb(&args.texture)?;
            let template = load_rgb(&args.template)?;
            let uv = texture.width();
            let mut masks = ArtifactMasks::empty(uv);
            for (i, path) in args.masks.iter().enumerate() {
                let m = load_gray(path)?;
                let slot = match i {
                    0 => &mut masks.m_leye,
                    1 => &mut masks.m_reye,
                    2 => &mut masks.m_mouth,
                    _ => &mut masks.m_nostril,
                };
                for (dst, src) in slot.data_mut().iter_mut().zip(m.data()) {
                    if *src >= 0.5 {
                        *dst = 1.0;
                    }
                }
            }
            let template = TemplateTexture {
                face_mask: uvforge_core::image::ImageGray::constant(
                    template.width(),
                    template.height(),
                    1.0,
                ),
                image: template,
            };
            let outcome = correction::correct_artifacts(
                &texture,
                &masks,
                &template,
                SolverParams {
                    tolerance: args.tolerance,
                    max_iters: None,
                },
            )?;
            save_rgb_u16(&pipeline::quantize16_rgb(&outcome.image), &args.out)?;
            println!(
                "components: {}  iterations: {}  converged: {}",
                outcome.components, outcome.total_iterations, outcome.converged
            );
            Ok(if outcome.converged {
                EXIT_OK
            } else {
                EXIT_NONCONVERGED
            })
        }
        Command::Complete(args) => {
            let texture = load_rgb(&args.texture)?;
            let face_mask = load_gray(&args.face_mask)?;
            let template = TemplateTexture {
                image: load_rgb(&args.template)?,
                face_mask: load_gray(&args.template_mask)?,
            };
            let out = correction::complete_texture(
                &texture,
                &face_mask,
                &template,
                args.omega,
                args.levels,
            )?;
            save_rgb_u16(&pipeline::quantize16_rgb(&out), &args.out)?;
            Ok(EXIT_OK)
        }
        Command::BsError(args) => {
            let texture = load_rgb(&args.texture)?;
            let mask = args.mask.as_ref().map(load_gray).transpose()?;
            let score = bs_error_masked(
                &texture,
                &BsErrorParams {
                    kernel_size: args.kernel_size,
                    value_scale: args.scale,
                },
                mask.as_ref(),
            )?;
            println!("{score:.3}");
            Ok(EXIT_OK)
        }
        Command::Fit(args) => {
            let image = load_rgb(&args.image)?;
            let mask = load_gray(&args.mask)?;
            let model = fitting::load_model(&args.model)?;
            let detected = load_points(&args.landmarks)?;
            let init = args
                .init
                .as_ref()
                .map(fitting::FitParams::load_json)
                .transpose()?;
            let result = fitting::fit(
                &image,
                &detected,
                &mask,
                &model,
                init,
                &fitting::FitOptions::default(),
            )?;
            result.params.save_json(&args.out)?;
            if let Some(path) = &args.render {
                let (render, _) =
                    fitting::render_fit(&model, &result.params, (image.width(), image.height()))?;
                save_rgb(&render, path)?;
            }
            println!(
                "stage2 loss: {:.6} -> {:.6}; stage3 loss: {:.6} -> {:.6}",
                result.stage2_trace.first().unwrap_or(&0.0),
                result.stage2_trace.last().unwrap_or(&0.0),
                result.stage3_trace.first().unwrap_or(&0.0),
                result.stage3_trace.last().unwrap_or(&0.0),
            );
            Ok(EXIT_OK)
        }
        Command::Poisson(args) => {
            let region = load_gray(&args.region)?;
            let target = load_rgb(&args.target)?;
            let source = load_rgb(&args.source)?;
            let outcome = poisson_clone(&PoissonProblem {
                region: &region,
                target: &target,
                source: &source,
                params: SolverParams {
                    tolerance: args.tolerance,
                    max_iters: None,
                },
            })?;
            save_rgb_u16(&pipeline::quantize16_rgb(&outcome.image), &args.out)?;
            println!(
                "iterations: {:?}  converged: {}",
                outcome.iterations, outcome.converged
            );
            Ok(if outcome.converged {
                EXIT_OK
            } else {
                EXIT_NONCONVERGED
            })
        }
        Command::Pipeline(args) => run_pipelines(&args),
        Command::Validate(args) => {
            let report = validate_config(&args.config)?;
            for w in &report.warnings {
                println!("warning: {w}");
            }
            println!("ok: {}", args.config.display());
            Ok(EXIT_OK)
        }
        Command::GenAssets(args) => {
            uvforge_core::assets::write_assets(&args.dir, args.size)?;
            println!("assets written to {}", args.dir.display());
            Ok(EXIT_OK)
        }
        Command::Demo(args) => {
            let scene = uvforge_core::synthetic::write_three_view_scene(
                &args.dir,
                args.uv_size,
                args.image_size,
                args.seed,
            )?;
            println!("scene written; run:");
            println!("  uvforge pipeline {}", scene.config_path.display());
            Ok(EXIT_OK)
        }
    }
}

fn load_points(path: &PathBuf) -> Result<Vec<[f64; 2]>, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.clone(),
        detail: e.to_string(),
    })?;
    let bad = || Error::Json {
        path: path.clone(),
        detail: "expected {\"points\": [[x, y], ...]}".into(),
    };
    let points = value["points"].as_array().ok_or_else(bad)?;
    points
        .iter()
        .map(|p| {
            let pair = p.as_array().ok_or_else(bad)?;
            if pair.len() != 2 {
                return Err(bad());
            }
            Ok([
                pair[0].as_f64().ok_or_else(bad)?,
                pair[1].as_f64().ok_or_else(bad)?,
            ])
        })
        .collect()
}

/// Run one or more pipeline configs, optionally in parallel. Log lines are
/// tagged with the config stem; the exit code is the worst one observed.
fn run_pipelines(args: &PipelineArgs) -> Result<u8, Error> {
    let jobs = args.jobs.max(1);
    let queue = std::sync::Mutex::new(args.configs.iter().cloned().enumerate().collect::<Vec<_>>());
    let worst = std::sync::Mutex::new(EXIT_OK);

    std::thread::scope(|scope| {
        for _ in 0..jobs.min(args.configs.len()) {
            scope.spawn(|| {
                while let Some((_, config_path)) = {
                    let mut q = queue.lock().unwrap();
                    q.pop()
                } {
                    let tag = config_path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| config_path.display().to_string());
                    let log = |line: String| {
                        let mut out = std::io::stdout().lock();
                        let _ = writeln!(out, "[{tag}] {line}");
                    };
                    let code = match validate_config(&config_path) {
                        Err(err) => {
                            log(format!("config error: {err}"));
                            EXIT_CONFIG
                        }
                        Ok(report) => {
                            for w in &report.warnings {
                                log(format!("warning: {w}"));
                            }
                            match pipeline::run_pipeline(&report.config, args.keep_intermediates) {
                                Err(err) => {
                                    log(format!("failed: {err}"));
                                    classify(&err)
                                }
                                Ok(output) => {
                                    log(format!(
                                        "bs_error {:.3}; output {}",
                                        output.report.bs_error,
                                        output.report.output.display()
                                    ));
                                    for w in &output.report.warnings {
                                        log(format!("warning: {w}"));
                                    }
                                    if output.report.poisson.converged {
                                        EXIT_OK
                                    } else {
                                        EXIT_NONCONVERGED
                                    }
                                }
                            }
                        }
                    };
                    let mut worst = worst.lock().unwrap();
                    *worst = (*worst).max(code);
                }
            });
        }
    });

    Ok(worst.into_inner().unwrap())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => ExitCode::from(fail(err)),
    }
}
