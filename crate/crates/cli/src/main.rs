use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use diskel::deform::{align_similarity, apply_tps, fit_tps, group_landmarks, procrustes_mean};
use diskel::frame::DescriptorSet;
use diskel::harness::database_config;
use diskel::harness::evaluate::evaluate;
use diskel::harness::generate::{generate_shape, Prototype, ShapeSpec};
use diskel::harness::index::{build_index, query, ShapeIndex};
use diskel::harness::render::{write_svg, Scene};
use diskel::matching::{all_candidates, best_match, MatchResult, SensitiveScales};
use diskel::semilocal::articulated_similarity;
use diskel::shape_io::{extract_boundary, load_mask, LoadOptions};
use diskel::{extract, LandmarkSet, MatchMode, Point, SensitiveFlags, SimilarityWeights, SurfaceField};

#[derive(Parser)]
#[command(
    name = "diskel",
    version,
    about = "Skeleton-based shape descriptors, matching and retrieval"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract descriptor alternatives from a PBM mask.
    Extract {
        mask: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
    },
    /// Score two descriptor files.
    Match {
        a: PathBuf,
        b: PathBuf,
        /// Enable articulated scoring with this pose tolerance.
        #[arg(long)]
        pose_epsilon: Option<f64>,
        #[command(flatten)]
        sens: SensitiveArgs,
        /// Also print the correspondence as `idxA,idxB,pair_score`.
        #[arg(long)]
        pairs: bool,
    },
    /// Build a shape index from a directory of PBM masks.
    Index {
        dir: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Rank index entries against a descriptor file.
    Query {
        index: PathBuf,
        descriptor: PathBuf,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        sens: SensitiveArgs,
    },
    /// All-pairs retrieval evaluation of a labelled index.
    Evaluate {
        index: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        sens: SensitiveArgs,
    },
    /// Draw a mask's level curves and skeleton, a descriptor, or a field dump as SVG.
    Render {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Descriptor alternative to draw.
        #[arg(long, default_value_t = 0)]
        alt: usize,
    },
    /// Rasterize a synthetic prototype shape.
    Generate {
        #[arg(long)]
        proto: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Degrees, counter-clockwise.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        rotation: f64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Limb bend in degrees.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        articulation: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Procrustes mean of landmark CSVs, or of descriptor files matched against the first.
    Mean {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// Reference branch indices to leave out (descriptor input only).
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<usize>,
        /// Write each shape's landmark set here (descriptor input only).
        #[arg(long)]
        landmarks_dir: Option<PathBuf>,
    },
    /// Thin-plate-spline warp of points (CSV) or a mask boundary (PBM).
    Warp {
        input: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Similarity-align the target onto the source first, so only the
        /// non-rigid difference is applied.
        #[arg(long)]
        align: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct LoadArgs {
    /// Keep the largest component of a multi-component mask.
    #[arg(long)]
    largest_component: bool,
    /// Fill enclosed background regions.
    #[arg(long)]
    fill_holes: bool,
}

#[derive(Args)]
struct SensitiveArgs {
    /// Penalize differences in translation, scale and/or rotation, e.g. `t,s,r`.
    #[arg(long)]
    sensitive: Option<SensitiveFlags>,
}

impl SensitiveArgs {
    fn mode(&self) -> MatchMode {
        match self.sensitive {
            Some(f) => MatchMode::Sensitive(f, SensitiveScales::default()),
            None => MatchMode::Invariant,
        }
    }
}

fn has_ext(p: &Path, ext: &str) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Extract { mask, output, load } => {
            let m = load_mask(
                &mask,
                LoadOptions {
                    allow_largest_component: load.largest_component,
                    fill_holes: load.fill_holes,
                },
            )?;
            let x = extract(&m, &database_config())?;
            let n = x.descriptors.len();
            DescriptorSet::new(x.descriptors, Some(mask.display().to_string())).save(&output)?;
            println!("{n} alternative(s), {} branches", x.branches.len());
        }
        Cmd::Match {
            a,
            b,
            pose_epsilon,
            sens,
            pairs,
        } => {
            let (da, db) = (DescriptorSet::load(&a)?, DescriptorSet::load(&b)?);
            let w = SimilarityWeights::default();
            let mode = sens.mode();
            let (score, best): (f64, Option<MatchResult>) = match pose_epsilon {
                None => {
                    let m = best_match(&da.alternatives, &db.alternatives, &w, &mode);
                    (m.as_ref().map_or(0.0, |m| m.score), m)
                }
                Some(eps) => {
                    if !(eps > 0.0) {
                        bail!(diskel::Error::Invalid(format!(
                            "pose epsilon must be positive, got {eps}"
                        )));
                    }
                    let mut best: Option<(f64, MatchResult)> = None;
                    for m in all_candidates(&da.alternatives, &db.alternatives, &w, &mode) {
                        let s =
                            articulated_similarity(&da.alternatives[m.alt_a], &db.alternatives[m.alt_b], &m, eps).score;
                        if best.as_ref().map_or(true, |(b, _)| s > *b) {
                            best = Some((s, m));
                        }
                    }
                    best.map_or((0.0, None), |(s, m)| (s, Some(m)))
                }
            };
            println!("{score:.6}");
            if pairs {
                println!("idxA,idxB,pair_score");
                if let Some(m) = best {
                    for (&(i, j), s) in m.correspondence.pairs.iter().zip(&m.correspondence.per_pair_scores) {
                        println!("{i},{j},{s:.6}");
                    }
                }
            }
        }
        Cmd::Index { dir, labels, output } => {
            let idx = build_index(&dir, &labels, &database_config(), SimilarityWeights::default())?;
            idx.save(&output)?;
            for f in &idx.failures {
                eprintln!("skipped {}: {}", f.source, f.error);
            }
            println!("{} entries, {} failures", idx.len(), idx.failures.len());
        }
        Cmd::Query {
            index,
            descriptor,
            k,
            sens,
        } => {
            let idx = ShapeIndex::load(&index)?;
            let probe = DescriptorSet::load(&descriptor)?;
            for (rank, h) in query(&idx, &probe.alternatives, k, &sens.mode()).iter().enumerate() {
                println!("{},{},{:.6}", rank + 1, h.id, h.score);
            }
        }
        Cmd::Evaluate { index, output, sens } => {
            let idx = ShapeIndex::load(&index)?;
            let (report, scores) = evaluate(&idx, &sens.mode())?;
            report.write(&scores, &output)?;
            println!("bulls_eye {:.4}", report.bulls_eye);
            println!("precision_at_full_recall {:.4}", report.precision_at_full_recall());
        }
        Cmd::Render { input, output, alt } => {
            if has_ext(&input, "pbm") {
                let m = load_mask(&input, LoadOptions::default())?;
                match extract(&m, &database_config()) {
                    Ok(x) => {
                        let d = x
                            .descriptors
                            .get(alt)
                            .with_context(|| format!("no alternative {alt}"))?;
                        write_svg(
                            &Scene {
                                field: Some(&x.field),
                                branches: &x.branches,
                                descriptor: Some(d),
                            },
                            &output,
                        )?;
                    }
                    // still draw the surface when no descriptor can be built
                    Err(e) => {
                        let sol = diskel::surface::solve_phi(&m, &database_config().phi)?;
                        eprintln!("warning: {e}; drawing level curves only");
                        write_svg(
                            &Scene {
                                field: Some(&sol.field),
                                ..Scene::default()
                            },
                            &output,
                        )?;
                    }
                }
            } else if has_ext(&input, "json") {
                let set = DescriptorSet::load(&input)?;
                let d = set
                    .alternatives
                    .get(alt)
                    .with_context(|| format!("no alternative {alt}"))?;
                write_svg(
                    &Scene {
                        descriptor: Some(d),
                        ..Scene::default()
                    },
                    &output,
                )?;
            } else {
                let f = SurfaceField::read_dump(&input)?;
                write_svg(
                    &Scene {
                        field: Some(&f),
                        ..Scene::default()
                    },
                    &output,
                )?;
            }
        }
        Cmd::Generate {
            proto,
            seed,
            rotation,
            scale,
            articulation,
            noise,
            output,
        } => {
            let spec = ShapeSpec {
                prototype: proto.parse::<Prototype>()?,
                rotation: rotation.to_radians(),
                scale,
                articulation: articulation.to_radians(),
                noise,
            };
            generate_shape(&spec, seed)?.write_pbm(&output)?;
        }
        Cmd::Mean {
            inputs,
            output,
            exclude,
            landmarks_dir,
        } => {
            let sets = if inputs.iter().all(|p| has_ext(p, "csv")) {
                inputs
                    .iter()
                    .map(|p| LandmarkSet::read_csv(p))
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                let descs = inputs
                    .iter()
                    .map(|p| DescriptorSet::load(p))
                    .collect::<Result<Vec<_>, _>>()?;
                let w = SimilarityWeights::default();
                let reference = &descs[0].alternatives[..1];
                let matches: Vec<MatchResult> = descs[1..]
                    .iter()
                    .map(|d| best_match(reference, &d.alternatives, &w, &MatchMode::Invariant).expect("non-empty sets"))
                    .collect();
                let others: Vec<_> = descs[1..]
                    .iter()
                    .zip(&matches)
                    .map(|(d, m)| (&d.alternatives[m.alt_b], m))
                    .collect();
                let sets = group_landmarks(&reference[0], &others, &exclude)?;
                if let Some(dir) = &landmarks_dir {
                    std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
                    for (p, s) in inputs.iter().zip(&sets) {
                        let stem = p.file_stem().unwrap_or_default().to_string_lossy();
                        s.write_csv(&dir.join(format!("{stem}.csv")))?;
                    }
                }
                sets
            };
            procrustes_mean(&sets)?.write_csv(&output)?;
        }
        Cmd::Warp {
            input,
            source,
            target,
            align,
            output,
        } => {
            let source = LandmarkSet::read_csv(&source)?;
            let mut target = LandmarkSet::read_csv(&target)?;
            if align {
                if target.len() != source.len() {
                    bail!(diskel::Error::Invalid("source and target sizes differ".into()));
                }
                target = align_similarity(&target, &source);
            }
            let t = fit_tps(&source, &target)?;
            let pts: Vec<Point> = if has_ext(&input, "pbm") {
                let m = load_mask(&input, LoadOptions::default())?;
                extract_boundary(&m).cells.iter().map(|c| c.to_point()).collect()
            } else {
                LandmarkSet::read_csv(&input)?.points
            };
            LandmarkSet::new(apply_tps(&t, &pts)).write_csv(&output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.downcast_ref::<diskel::Error>().is_some_and(|e| e.is_validation());
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}
