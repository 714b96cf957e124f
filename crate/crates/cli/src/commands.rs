use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use delta_verifier::eval::{self, EvalReport, ProblemCandidates, ScoredCandidate};
use delta_verifier::geometry::{self, layer_distance_curve};
use delta_verifier::store::{self, group_by_problem, Label, Manifest, ManifestEntry};
use delta_verifier::synth::{self, SynthSpec};
use delta_verifier::verifier::{self, ActivationDelta, Candidate, ExperienceSet, Verdict};
use delta_verifier::{CentroidPair, Error};
use rayon::prelude::*;

use crate::{AnalyzeArgs, BuildArgs, ClassifyArgs, Command, InputArgs, RerankArgs, SynthArgs};

pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(e) if e.is_io() => 4,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Data(e) => e.fmt(f),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Build(a) => cmd_build(&a),
        Command::Classify(a) => cmd_classify(&a),
        Command::Rerank(a) => cmd_rerank(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn real(v: f64) -> String {
    format!("{v:.8e}")
}

fn open_manifest(input: &InputArgs) -> CliResult<Manifest> {
    let mut manifest = store::scan_manifest(&input.manifest)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    if !input.allow_truncated {
        let dropped = manifest.drop_truncated();
        if dropped > 0 {
            eprintln!("note: skipped {dropped} truncated record(s); pass --allow-truncated to include them");
        }
    }
    Ok(manifest)
}

/// Loads and differences the given entries in parallel, preserving order.
fn load_deltas(manifest: &Manifest, entries: &[&ManifestEntry]) -> CliResult<Vec<ActivationDelta>> {
    Ok(entries
        .par_iter()
        .map(|e| verifier::compute_delta(&manifest.load(e)?))
        .collect::<Result<Vec<_>, Error>>()?)
}

fn check_shape(manifest: &Manifest, centroids: &CentroidPair) -> CliResult<()> {
    match manifest.dims {
        Some(d) if d != centroids.shape() => Err(Error::Dimension {
            left: d,
            right: centroids.shape(),
        }
        .into()),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Data(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Data(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))
}

fn to_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn cmd_build(args: &BuildArgs) -> CliResult<()> {
    let manifest = open_manifest(&args.input)?;
    let sample = verifier::balanced_sample(&manifest, args.per_class, args.seed)?;
    for w in &sample.warnings {
        eprintln!("warning: {w}");
    }
    let select = |ids: &[String]| -> Vec<&ManifestEntry> {
        ids.iter().filter_map(|id| manifest.get(id)).collect()
    };
    let experience = ExperienceSet {
        succ: load_deltas(&manifest, &select(&sample.success))?,
        fail: load_deltas(&manifest, &select(&sample.failure))?,
    };
    let mut centroids = verifier::build_centroids(&experience)?;
    centroids.model_tag = manifest.model_tag.clone();
    centroids.source_description = format!(
        "manifest={} per_class={} seed={}",
        args.input.manifest.display(),
        args.per_class,
        args.seed
    );
    store::write_centroids(&centroids, &args.out)?;
    let (layers, dim) = centroids.shape();
    println!(
        "n_succ={} n_fail={} layers={layers} dim={dim}",
        centroids.n_succ, centroids.n_fail
    );
    Ok(())
}

fn cmd_classify(args: &ClassifyArgs) -> CliResult<()> {
    let manifest = open_manifest(&args.input)?;
    let centroids = store::read_centroids(&args.centroids)?;
    check_shape(&manifest, &centroids)?;
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().collect();
    let deltas = load_deltas(&manifest, &entries)?;
    let scores = deltas
        .par_iter()
        .map(|d| verifier::classify(d, &centroids))
        .collect::<Result<Vec<_>, Error>>()?;

    let mut table = String::from("record_id\tproblem_id\tlabel\tpredicted\td_succ\td_fail\tmargin\n");
    let mut labeled = Vec::new();
    for (e, s) in entries.iter().zip(&scores) {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.record_id,
            e.problem_id,
            e.label,
            s.predicted,
            real(s.d_succ),
            real(s.d_fail),
            real(s.margin)
        );
        match e.label {
            Label::Success => labeled.push((s.predicted, Verdict::Success)),
            Label::Failure => labeled.push((s.predicted, Verdict::Failure)),
            Label::Unlabeled => {}
        }
    }

    let mut report = EvalReport::default();
    if !labeled.is_empty() {
        report = report.with_classification(&eval::confusion_metrics(&labeled)?);
    }
    emit(args.out.as_deref(), "classify", &table, &report)
}

fn emit(out: Option<&Path>, name: &str, table: &str, report: &EvalReport) -> CliResult<()> {
    match out {
        Some(dir) => {
            create_dir(dir)?;
            write_text(&dir.join(format!("{name}.tsv")), table)?;
            write_text(&dir.join(format!("{name}_report.txt")), &report.format_table())?;
            write_text(&dir.join(format!("{name}.json")), &to_json(report))?;
        }
        None => {
            print!("{table}");
            println!();
            print!("{}", report.format_table());
        }
    }
    Ok(())
}

fn cmd_rerank(args: &RerankArgs) -> CliResult<()> {
    if args.k.contains(&0) {
        return Err(CliError::Usage("--k values must be at least 1".into()));
    }
    let manifest = open_manifest(&args.input)?;
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no records").into());
    }
    let centroids = store::read_centroids(&args.centroids)?;
    check_shape(&manifest, &centroids)?;
    let all_labeled = manifest.entries.iter().all(|e| e.label.is_labeled());
    if args.oracle_scores && !all_labeled {
        return Err(CliError::Usage("--oracle-scores needs every record labeled".into()));
    }

    let groups = group_by_problem(&manifest.entries);
    let mut table = String::from("problem_id\trank\trecord_id\tscore\tanswer\tlabel\n");
    let mut problems = Vec::with_capacity(groups.len());
    for (problem_id, entries) in &groups {
        let deltas = load_deltas(&manifest, entries)?;
        let candidates: Vec<Candidate> = deltas
            .into_iter()
            .zip(entries)
            .map(|(delta, e)| Candidate {
                delta,
                answer: e.answer.clone(),
            })
            .collect();
        let mut ranked = verifier::rerank(&candidates, &centroids)?;
        let label_of = |id: &str| manifest.get(id).map_or(Label::Unlabeled, |e| e.label);
        if args.oracle_scores {
            for r in &mut ranked {
                r.score = if label_of(&r.record_id) == Label::Success { 0.0 } else { 1.0 };
            }
            verifier::assign_ranks(&mut ranked);
        }
        for r in &ranked {
            let _ = writeln!(
                table,
                "{problem_id}\t{}\t{}\t{}\t{}\t{}",
                r.rank,
                r.record_id,
                real(r.score),
                r.answer,
                label_of(&r.record_id)
            );
        }
        problems.push(ProblemCandidates {
            problem_id: problem_id.to_string(),
            candidates: ranked
                .iter()
                .map(|r| ScoredCandidate {
                    record_id: r.record_id.clone(),
                    answer: r.answer.clone(),
                    correct: label_of(&r.record_id) == Label::Success,
                    score: Some(r.score),
                })
                .collect(),
        });
    }

    let report = if all_labeled {
        EvalReport::default().with_ranking(&problems, &args.k)?
    } else {
        eprintln!("note: unlabeled records present; skipping accuracy metrics");
        EvalReport::default()
    };
    emit(args.out.as_deref(), "rerank", &table, &report)
}

fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let manifest = open_manifest(&args.input)?;
    let (num_layers, _) = manifest
        .dims
        .ok_or(Error::EmptyInput("manifest has no records"))?;
    let layers = if args.layers.is_empty() {
        geometry::default_layers(num_layers)
    } else {
        let mut l = args.layers.clone();
        l.sort_unstable();
        l.dedup();
        if let Some(&bad) = l.iter().find(|&&x| x == 0 || x > num_layers) {
            return Err(CliError::Usage(format!("--layers {bad} is outside 1..={num_layers}")));
        }
        l
    };

    let entries: Vec<&ManifestEntry> = manifest.entries.iter().collect();
    let deltas = load_deltas(&manifest, &entries)?;
    let labeled: Vec<(ActivationDelta, Label)> = deltas
        .into_iter()
        .zip(&entries)
        .map(|(d, e)| (d, e.label))
        .collect();

    let centroids = match &args.centroids {
        Some(p) => {
            let c = store::read_centroids(p)?;
            check_shape(&manifest, &c)?;
            c
        }
        None => verifier::build_centroids(&ExperienceSet::from_labeled(labeled.iter().cloned()))?,
    };

    create_dir(&args.out)?;
    let curve = layer_distance_curve(&centroids);
    geometry::write_curve_csv(&curve, args.out.join("curve.csv"))?;

    let source = format!(
        "manifest={} records={}",
        args.input.manifest.display(),
        labeled.len()
    );
    let projections = layers
        .par_iter()
        .map(|&layer| {
            let mut p = geometry::pca_project(&labeled, layer)?;
            p.source = source.clone();
            Ok(p)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    for p in &projections {
        if !p.converged {
            eprintln!(
                "warning: layer {} projection stopped after {} iterations without converging",
                p.layer_index, p.iterations
            );
        }
        geometry::write_projection_csv(p, args.out.join(format!("pca_layer_{}.csv", p.layer_index)))?;
    }
    println!(
        "curve: {} layers, mean distance {}; projections: {:?}",
        curve.len(),
        real(curve.mean()),
        layers
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let mut spec = SynthSpec::separated(
        args.num_layers,
        args.dim,
        args.separation,
        args.noise,
        args.onset_layer,
        args.per_class,
        args.seed,
    )?;
    spec.num_problems = args.problems;
    let output = synth::generate(&spec)?;
    let path = synth::write_synth(&output, &args.out)?;
    println!(
        "wrote {} records ({} per class) to {}",
        output.records.len(),
        args.per_class,
        path.display()
    );
    Ok(())
}
