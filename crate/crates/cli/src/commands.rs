use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hrnn::checkpoint::{load_model, save_model};
use hrnn::data::{
    generate_synthetic, load_dataset, normalize_length, random_labeled_video, read_features,
    write_dataset, LabeledVideo, LoadOptions, Split, SyntheticSpec,
};
use hrnn::eval::{evaluate_dataset, select, SelectionRule};
use hrnn::grid::GridSpec;
use hrnn::hrnn::step_cost;
use hrnn::training::{
    compare_gradients, finite_difference_gradient, sgd_train_with, GradCheckReport, TrainingConfig,
};
use hrnn::{write_atomic, KeynessModel, ModelConfig, ModelRegistry};

use crate::failure::{Context, Failure};
use crate::settings::FileConfig;
use crate::{Cli, Command, LengthArgs, ModelArgs, RuntimeArgs, SelectArgs};

const DEFAULT_MAX_FRAMES: usize = 1600;

pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = file.pick(cli.seed, "seed", 0u64)?;
    let workers = file.pick(cli.workers, "workers", 1usize)?;
    if workers == 0 {
        return Err(Failure::usage("--workers must be at least 1"));
    }
    // Only fails if a pool already exists, in which case that one is used.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global();

    let registry = ModelRegistry::builtin();
    match cli.command {
        Command::Train {
            data,
            out,
            metrics,
            model,
            length,
            learning_rate,
            epochs,
            init_scale,
            grad_clip,
            no_shuffle,
        } => {
            let training = TrainingConfig {
                learning_rate: file.pick(learning_rate, "learning-rate", 0.05)?,
                epochs: file.pick(epochs, "epochs", 50)?,
                seed,
                init_scale: file.pick(init_scale, "init-scale", 0.08)?,
                grad_clip: file.pick_opt(grad_clip, "grad-clip")?,
                shuffle: !no_shuffle && file.get::<bool>("shuffle")?.unwrap_or(true),
            };
            let metrics = metrics.unwrap_or_else(|| sibling(&out, "metrics.txt"));
            train(
                &registry, &file, &data, &out, &metrics, &model, &length, &training,
            )
        }
        Command::Evaluate {
            model,
            data,
            out,
            split,
            select,
            length,
            runtime,
        } => {
            let split = file.pick(split, "split", "test".to_string())?;
            evaluate(
                &registry, &file, &model, &data, &out, &split, &select, &length, &runtime,
            )
        }
        Command::Summarize {
            model,
            video,
            out,
            select,
            length,
            runtime,
        } => summarize(
            &registry,
            &file,
            &model,
            &video,
            out.as_deref(),
            &select,
            &length,
            &runtime,
        ),
        Command::Gradcheck {
            variant,
            instances,
            frames,
            feature_dim,
            hidden1,
            hidden2,
            subshot_len,
            flat_steps,
            init_scale,
            step,
            tolerance,
            runtime,
            corrupt_backward,
        } => {
            let config = ModelConfig {
                feature_dim,
                hidden1,
                hidden2,
                subshot_len,
                stride: runtime.stride,
                masked: runtime.masked,
                flat_steps,
            };
            gradcheck(
                &registry,
                &variant,
                &config,
                GradCheckRun {
                    seed,
                    instances,
                    frames,
                    init_scale,
                    step,
                    tolerance,
                    corrupt: corrupt_backward,
                },
            )
        }
        Command::Cost {
            frames,
            subshot_len,
        } => {
            let c = step_cost(frames, subshot_len)?;
            println!("frames\t{frames}");
            println!("subshot_len\t{subshot_len}");
            println!("hierarchical\t{}", c.hierarchical);
            println!("flat\t{}", c.flat);
            println!("reduction\t{:.1}%", 100.0 * c.reduction());
            Ok(())
        }
        Command::Synth {
            out,
            videos,
            test_videos,
            frames,
            subshot_len,
            feature_dim,
            key_fraction,
            signal,
        } => {
            let spec = SyntheticSpec {
                videos,
                frames,
                subshot_len,
                feature_dim,
                key_fraction,
                signal,
                seed,
                test_videos,
            };
            if videos == 0 || frames == 0 || subshot_len == 0 || feature_dim == 0 {
                return Err(Failure::usage(
                    "videos, frames, subshot length and feature dim must be at least 1",
                ));
            }
            let vids = generate_synthetic(&spec)?;
            write_dataset(&out, &vids).context(format!("writing {}", out.display()))?;
            println!("wrote {} videos to {}", vids.len(), out.display());
            Ok(())
        }
    }
}

/// `path` with `.suffix` appended to the file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

fn runtime_config(file: &FileConfig, args: &RuntimeArgs) -> Result<(Option<usize>, bool), Failure> {
    Ok((
        file.pick_opt(args.stride, "stride")?,
        file.switch(args.masked, "masked")?,
    ))
}

fn max_frames(file: &FileConfig, args: &LengthArgs) -> Result<Option<usize>, Failure> {
    let n = file.pick(args.max_frames, "max-frames", DEFAULT_MAX_FRAMES)?;
    Ok((n > 0).then_some(n))
}

fn selection_rule(file: &FileConfig, args: &SelectArgs) -> Result<SelectionRule, Failure> {
    let rule = match (args.budget, args.threshold) {
        (Some(b), _) => SelectionRule::Budget(b),
        (None, Some(t)) => SelectionRule::Threshold(t),
        (None, None) => match file.get::<f64>("threshold")? {
            Some(t) => SelectionRule::Threshold(t),
            None => SelectionRule::Budget(file.get("budget")?.unwrap_or(0.15)),
        },
    };
    rule.validate()?;
    Ok(rule)
}

/// Apply stride / masking and check the grid suits the variant.
fn configure(
    model: &mut dyn KeynessModel,
    stride: Option<usize>,
    masked: bool,
) -> Result<(), Failure> {
    let spec = model.grid_spec();
    if model.variant().starts_with("flat-")
        && (masked || stride.is_some_and(|s| s != spec.subshot_len))
    {
        return Err(Failure::usage(format!(
            "--stride and --masked apply only to the hierarchical variants, not {}",
            model.variant()
        )));
    }
    let cfg = ModelConfig {
        feature_dim: model.feature_dim(),
        subshot_len: spec.subshot_len,
        stride,
        masked,
        ..ModelConfig::default()
    };
    model.configure(&cfg)?;
    Ok(())
}

fn load_videos(
    data: &Path,
    grid: GridSpec,
    max_frames: Option<usize>,
) -> Result<Vec<LabeledVideo>, Failure> {
    if let Some(n) = max_frames {
        if n % grid.subshot_len != 0 {
            return Err(Failure::usage(format!(
                "--max-frames {n} must be a multiple of the subshot length {}",
                grid.subshot_len
            )));
        }
    }
    let videos = load_dataset(data, &LoadOptions { grid, max_frames })
        .context(format!("loading dataset {}", data.display()))?;
    if videos.is_empty() {
        return Err(Failure::data(format!(
            "dataset {} has no videos",
            data.display()
        )));
    }
    Ok(videos)
}

#[allow(clippy::too_many_arguments)]
fn train(
    registry: &ModelRegistry,
    file: &FileConfig,
    data: &Path,
    out: &Path,
    metrics_path: &Path,
    args: &ModelArgs,
    length: &LengthArgs,
    training: &TrainingConfig,
) -> Result<(), Failure> {
    let variant = file.pick(args.variant.clone(), "variant", "hrnn".to_string())?;
    registry.get(&variant)?;
    let (stride, masked) = runtime_config(file, &args.runtime)?;
    let mut config = ModelConfig {
        feature_dim: 1,
        hidden1: file.pick(args.hidden1, "hidden1", 128)?,
        hidden2: file.pick(args.hidden2, "hidden2", 128)?,
        subshot_len: file.pick(args.subshot_len, "subshot-len", 40)?,
        stride,
        masked,
        flat_steps: file.pick(args.flat_steps, "flat-steps", 80)?,
    };
    config.validate()?;
    training.validate()?;
    let grid = GridSpec::with_stride(config.subshot_len, stride.unwrap_or(config.subshot_len))?;
    if variant.starts_with("flat-") && (masked || !grid.is_even_cut()) {
        return Err(Failure::usage(format!(
            "--stride and --masked apply only to the hierarchical variants, not {variant}"
        )));
    }

    let videos = load_videos(data, grid, max_frames(file, length)?)?;
    let train: Vec<LabeledVideo> = videos
        .into_iter()
        .filter(|v| v.split == Split::Train)
        .collect();
    if train.is_empty() {
        return Err(Failure::data(format!(
            "dataset {} has no training videos",
            data.display()
        )));
    }
    config.feature_dim = train[0].sequence.dim();

    let mut model = registry.create(&variant, &config, training.init_scale, training.seed)?;
    let mut log = String::new();
    sgd_train_with(model.as_mut(), &train, training, |epoch, objective| {
        let _ = writeln!(log, "{epoch} {objective}");
        println!("{epoch} {objective}");
    })
    .context("training")?;
    let epochs = u32::try_from(training.epochs).map_err(|_| Failure::usage("too many epochs"))?;
    save_model(out, model.as_ref(), Some(epochs)).context(format!("writing {}", out.display()))?;
    write_atomic(metrics_path, log.as_bytes())
        .context(format!("writing {}", metrics_path.display()))?;
    Ok(())
}

fn load_configured(
    registry: &ModelRegistry,
    file: &FileConfig,
    path: &Path,
    runtime: &RuntimeArgs,
) -> Result<Box<dyn KeynessModel>, Failure> {
    let (mut model, _) = load_model(registry, path).context("loading model")?;
    let (stride, masked) = runtime_config(file, runtime)?;
    configure(model.as_mut(), stride, masked)?;
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    registry: &ModelRegistry,
    file: &FileConfig,
    model_path: &Path,
    data: &Path,
    out: &Path,
    split: &str,
    select_args: &SelectArgs,
    length: &LengthArgs,
    runtime: &RuntimeArgs,
) -> Result<(), Failure> {
    let wanted: Option<Split> = match split {
        "all" => None,
        s => Some(s.parse().map_err(Failure::usage)?),
    };
    let rule = selection_rule(file, select_args)?;
    let max = max_frames(file, length)?;
    let model = load_configured(registry, file, model_path, runtime)?;
    let videos: Vec<LabeledVideo> = load_videos(data, model.grid_spec(), max)?
        .into_iter()
        .filter(|v| wanted.is_none_or(|s| v.split == s))
        .collect();
    if videos.is_empty() {
        return Err(Failure::data(format!(
            "dataset {} has no {split} videos",
            data.display()
        )));
    }
    let report = evaluate_dataset(model.as_ref(), &videos, rule).context("evaluating")?;
    report
        .write_tsv(out)
        .context(format!("writing {}", out.display()))?;
    print!("{}", report.to_tsv());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    registry: &ModelRegistry,
    file: &FileConfig,
    model_path: &Path,
    video: &Path,
    out: Option<&Path>,
    select_args: &SelectArgs,
    length: &LengthArgs,
    runtime: &RuntimeArgs,
) -> Result<(), Failure> {
    let rule = selection_rule(file, select_args)?;
    let max = max_frames(file, length)?;
    let model = load_configured(registry, file, model_path, runtime)?;
    let mut seq = read_features(video).context(format!("reading {}", video.display()))?;
    if let Some(n) = max {
        seq = normalize_length(&seq, n, model.grid_spec().subshot_len)?;
    }
    let predictions = model
        .predict(&seq)
        .context(format!("scoring {}", video.display()))?;
    let selection = select(&predictions, rule)?;
    let mut text = String::new();
    for i in &selection.selected {
        let _ = writeln!(text, "{i}");
    }
    if let Some(p) = out {
        write_atomic(p, text.as_bytes()).context(format!("writing {}", p.display()))?;
    }
    print!("{text}");
    Ok(())
}

pub struct GradCheckRun {
    seed: u64,
    instances: u64,
    frames: usize,
    init_scale: f64,
    step: f64,
    tolerance: f64,
    corrupt: bool,
}

fn gradcheck(
    registry: &ModelRegistry,
    variant: &str,
    config: &ModelConfig,
    run: GradCheckRun,
) -> Result<(), Failure> {
    if run.instances == 0 || run.frames == 0 {
        return Err(Failure::usage(
            "--instances and --frames must be at least 1",
        ));
    }
    if run.tolerance.is_nan() || run.tolerance <= 0.0 {
        return Err(Failure::usage("--tolerance must be positive"));
    }
    let mut worst: Option<GradCheckReport> = None;
    for k in 0..run.instances {
        let seed = run.seed.wrapping_add(k);
        let model = registry.create(variant, config, run.init_scale, seed)?;
        let video = random_labeled_video(
            &format!("gradcheck_{k}"),
            run.frames,
            config.feature_dim,
            model.grid_spec(),
            seed ^ 0x5bd1_e995,
        )?;
        let (_, mut analytic) = model.loss_and_gradient(&video.sequence, &video.labels)?;
        if run.corrupt {
            analytic.scale(1.01);
        }
        let numeric =
            finite_difference_gradient(model.as_ref(), &video.sequence, &video.labels, run.step)?;
        let report = compare_gradients(&analytic, &numeric)?;
        worst = Some(match worst {
            None => report,
            Some(mut w) => {
                for ((_, a), (_, b)) in w.arrays.iter_mut().zip(&report.arrays) {
                    *a = a.max(*b);
                }
                w
            }
        });
    }
    let worst = worst.expect("at least one instance");
    println!("array\tmax_rel_error");
    for (name, err) in &worst.arrays {
        println!("{name}\t{err:e}");
    }
    println!("max\t{:e}", worst.max_error());
    let verdict = if worst.passes(run.tolerance) {
        "PASS"
    } else {
        "FAIL"
    };
    println!(
        "{verdict}: {} instances of {variant}, step {:e}, tolerance {:e}",
        run.instances, run.step, run.tolerance
    );
    if worst.passes(run.tolerance) {
        Ok(())
    } else {
        Err(Failure::numeric(format!(
            "gradient check failed: max relative error {:e} >= {:e}",
            worst.max_error(),
            run.tolerance
        )))
    }
}
