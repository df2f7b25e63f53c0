//! Subcommand implementations. Each writes its files and returns a short
//! human-readable summary for stdout.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use gphlvm::evalmotion::{error_matrix, interpolate, jerkiness, nearest, stress_report, Trajectory};
use gphlvm::gplvm::{encode_new, train, Geometry, GphlvmModel};
use gphlvm::graphtax::{load_dataset, load_graph, synthetic_tree, LabeledDataset, TaxonomyGraph};
use gphlvm::manifold::LorentzPoint;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, SYNTHETIC_TREE_CONFIG};
use crate::error::{create_dir, read, write, CliError};
use crate::svg;

type Result<T> = std::result::Result<T, CliError>;

pub fn load_model(path: &Path) -> Result<GphlvmModel> {
    Ok(GphlvmModel::from_json(&read(path)?)?)
}

pub fn load_inputs(graph: &Path, dataset: &Path) -> Result<(TaxonomyGraph, LabeledDataset)> {
    let g = load_graph(&read(graph)?)?;
    let d = load_dataset(&read(dataset)?, &g)?;
    Ok((g, d))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>, path: &Path) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| CliError::Io { path: path.into(), source: e.into_error() })?;
    write(path, bytes)
}

fn row(w: &mut csv::Writer<Vec<u8>>, fields: &[String], path: &Path) -> Result<()> {
    w.write_record(fields).map_err(|e| CliError::Io { path: path.into(), source: e.into() })
}

/// Shortest decimal that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn latent_header(q: usize) -> Vec<String> {
    (1..=q).map(|k| format!("z{k}")).collect()
}

pub fn cmd_train(config: &Path, out_flag: Option<&Path>) -> Result<String> {
    let cfg = RunConfig::load(config)?;
    let (graph, data) = load_inputs(&cfg.graph, &cfg.dataset)?;
    let out = cfg.out_dir(out_flag);
    create_dir(&out)?;
    let model_path = cfg.model.clone().unwrap_or_else(|| out.join("model.json"));
    if let Some(parent) = model_path.parent() {
        create_dir(parent)?;
    }

    let model = train(&data, &graph, &cfg.train)?;
    write(&model_path, model.to_json())?;

    let history_path = out.join("history.csv");
    let mut w = csv_writer();
    row(&mut w, &["iteration".into(), "objective".into(), "stress".into()], &history_path)?;
    for h in &model.history {
        row(&mut w, &[h.iteration.to_string(), num(h.objective), num(h.stress)], &history_path)?;
    }
    finish(w, &history_path)?;

    let last = model.history.last();
    Ok(format!(
        "model: {}\nhistory: {}\nfinal objective {:.6} stress {:.6}",
        model_path.display(),
        history_path.display(),
        last.map_or(f64::NAN, |h| h.objective),
        last.map_or(f64::NAN, |h| h.stress),
    ))
}

pub fn cmd_eval(model: &Path, dataset: &Path, graph: &Path, out: &Path) -> Result<String> {
    let model = load_model(model)?;
    let (graph, data) = load_inputs(graph, dataset)?;
    let report = stress_report(&model, &data, &graph, &[])?;
    let errors = error_matrix(&model, &data, &graph)?;
    create_dir(out)?;

    let path = out.join("stress.csv");
    let mut w = csv_writer();
    row(&mut w, &["mean".into(), "std".into(), "pairs".into()], &path)?;
    row(&mut w, &[num(report.mean), num(report.std), report.pairs().to_string()], &path)?;
    finish(w, &path)?;

    let path = out.join("stress_pairs.csv");
    let mut w = csv_writer();
    row(&mut w, &["i".into(), "j".into(), "squared_error".into()], &path)?;
    for &(i, j, e) in &report.per_pair {
        row(&mut w, &[i.to_string(), j.to_string(), num(e)], &path)?;
    }
    finish(w, &path)?;

    let path = out.join("error_matrix.csv");
    let mut w = csv_writer();
    let ids: Vec<String> = model.classes.iter().enumerate().map(|(i, c)| format!("{i}:{c}")).collect();
    row(&mut w, &ids, &path)?;
    for i in 0..errors.nrows() {
        row(&mut w, &errors.row(i).iter().map(|&v| num(v)).collect::<Vec<_>>(), &path)?;
    }
    finish(w, &path)?;

    write(&out.join("error_matrix.svg"), svg::heatmap(&errors, "|latent distance - graph distance|"))?;
    Ok(format!("stress {:.6} ± {:.6} over {} pairs\nreports: {}", report.mean, report.std, report.pairs(), out.display()))
}

pub fn cmd_embed(model: &Path, data: &Path, graph: &Path, out: &Path) -> Result<String> {
    let model = load_model(model)?;
    if model.bc.is_none() {
        return Err(gphlvm::Error::Capability("embedding new data needs a back-constrained model".into()).into());
    }
    let graph = load_graph(&read(graph)?)?;
    let data = load_dataset(&read(data)?, &graph)?;
    if let Some(parent) = out.parent() {
        create_dir(parent)?;
    }

    let mut w = csv_writer();
    let mut header = latent_header(model.latent_dim);
    header.extend(["class".into(), "nearest_class".into()]);
    row(&mut w, &header, out)?;
    for i in 0..data.len() {
        let y = data.observations().row(i).transpose();
        let class = graph.id(data.classes()[i]);
        let x = encode_new(&model, &y, class)?;
        let mut fields: Vec<String> = model.geometry.spatial(&x).into_iter().map(num).collect();
        fields.push(class.into());
        fields.push(model.classes[nearest(&model, &x)?].clone());
        row(&mut w, &fields, out)?;
    }
    finish(w, out)?;
    Ok(format!("embedded {} rows into {}", data.len(), out.display()))
}

/// Trajectory endpoint: a training point index or spatial latent coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum Endpoint {
    Index(usize),
    Coords(Vec<f64>),
}

impl std::str::FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Ok(i) = s.trim().parse() {
            return Ok(Endpoint::Index(i));
        }
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{s}` is neither an index nor comma-separated coordinates")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Endpoint::Coords)
    }
}

impl Endpoint {
    fn resolve(&self, model: &GphlvmModel) -> Result<DVector<f64>> {
        match self {
            Endpoint::Index(i) => model.latents.get(*i).cloned().ok_or_else(|| {
                CliError::Config(format!("point index {i} out of range for {} training points", model.len()))
            }),
            Endpoint::Coords(c) => {
                if c.len() != model.latent_dim || c.iter().any(|v| !v.is_finite()) {
                    return Err(CliError::Config(format!(
                        "expected {} finite latent coordinates, got {:?}",
                        model.latent_dim, c
                    )));
                }
                Ok(model.geometry.from_spatial(c))
            }
        }
    }
}

/// 2-D plot coordinates for latent points: Poincaré disk for the hyperboloid
/// (first two coordinates when Q > 2), otherwise the plane scaled into the unit box.
pub fn plot_coords(geometry: Geometry, points: &[DVector<f64>]) -> Vec<[f64; 2]> {
    match geometry {
        Geometry::Lorentz => points
            .iter()
            .map(|x| {
                let p = LorentzPoint::from_ambient_unchecked(x.clone()).to_poincare();
                [p.coords()[0], p.coords()[1]]
            })
            .collect(),
        Geometry::Euclidean => {
            let scale = points.iter().flat_map(|x| x.iter().take(2)).fold(0.0f64, |m, v| m.max(v.abs())) * 1.05;
            let scale = if scale > 0.0 { scale } else { 1.0 };
            points.iter().map(|x| [x[0] / scale, x.get(1).copied().unwrap_or(0.0) / scale]).collect()
        }
    }
}

pub fn cmd_interpolate(
    model: &Path,
    from: &Endpoint,
    to: &Endpoint,
    steps: usize,
    dt: f64,
    out: &Path,
) -> Result<String> {
    let model = load_model(model)?;
    let a = from.resolve(&model)?;
    let b = to.resolve(&model)?;
    let traj = interpolate(&model, &a, &b, steps, dt)?;
    create_dir(out)?;
    write_trajectory(&model, &traj, &out.join("trajectory.csv"))?;

    let mut all = model.latents.clone();
    all.extend(traj.latent_path.iter().cloned());
    let coords = plot_coords(model.geometry, &all);
    let mut class_ids: Vec<&str> = model.classes.iter().map(String::as_str).collect();
    class_ids.sort_unstable();
    class_ids.dedup();
    let points: Vec<([f64; 2], usize, &str)> = model
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (coords[i], class_ids.binary_search(&c.as_str()).unwrap_or(0), c.as_str()))
        .collect();
    let title = format!("{} latent space, {} steps", model.geometry, steps);
    write(
        &out.join("trajectory.svg"),
        svg::latent_plot(&points, &coords[model.len()..], model.geometry == Geometry::Lorentz, &title),
    )?;

    let mut msg = format!(
        "trajectory: {} steps from {} to {}, latent length {:.6}",
        steps,
        traj.class_path[0],
        traj.class_path[steps - 1],
        traj.path_length(model.geometry)
    );
    if steps >= 4 {
        write!(msg, "\njerkiness {:.6e}", jerkiness(&traj)?).unwrap();
    }
    Ok(msg)
}

fn write_trajectory(model: &GphlvmModel, traj: &Trajectory, path: &Path) -> Result<()> {
    let mut w = csv_writer();
    let mut header = vec!["t".to_string()];
    header.extend(latent_header(model.latent_dim));
    header.extend((0..model.output_dim()).map(|j| format!("y{j}")));
    header.push("class".into());
    row(&mut w, &header, path)?;
    for (k, x) in traj.latent_path.iter().enumerate() {
        let mut fields = vec![num(k as f64 * traj.dt)];
        fields.extend(model.geometry.spatial(x).into_iter().map(num));
        fields.extend(traj.decoded.row(k).iter().map(|&v| num(v)));
        fields.push(traj.class_path[k].clone());
        row(&mut w, &fields, path)?;
    }
    finish(w, path)
}

/// Final `(objective, stress)` of every `(gamma, seed)` run.
pub struct SweepRow {
    pub gamma: f64,
    pub runs: Vec<(f64, f64)>,
}

pub fn cmd_gamma_sweep(config: &Path, gammas: &[f64], seeds: &[u64], out_flag: Option<&Path>) -> Result<String> {
    if gammas.len() < 2 {
        return Err(CliError::Config(format!("a sweep needs at least 2 gamma values, got {}", gammas.len())));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(CliError::Config(format!("gamma values must be finite and non-negative, got {g}")));
    }
    let cfg = RunConfig::load(config)?;
    let seeds = if seeds.is_empty() { vec![cfg.train.seed] } else { seeds.to_vec() };
    let (graph, data) = load_inputs(&cfg.graph, &cfg.dataset)?;
    let out = cfg.out_dir(out_flag);
    create_dir(&out)?;

    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let tc = gphlvm::gplvm::TrainConfig { gamma, seed, ..cfg.train.clone() };
            let model = train(&data, &graph, &tc)?;
            let last = model.history.last().expect("training records its initial state");
            log::info!("gamma {gamma} seed {seed}: objective {} stress {}", last.objective, last.stress);
            runs.push((last.objective, last.stress));
        }
        rows.push(SweepRow { gamma, runs });
    }

    let path = out.join("gamma_sweep.csv");
    let mut w = csv_writer();
    let mut header = vec!["gamma".to_string(), "objective".into(), "stress".into()];
    for s in &seeds {
        header.push(format!("objective_seed{s}"));
        header.push(format!("stress_seed{s}"));
    }
    row(&mut w, &header, &path)?;
    let mut msg = String::new();
    for r in &rows {
        let n = r.runs.len() as f64;
        let obj = r.runs.iter().map(|x| x.0).sum::<f64>() / n;
        let stress = r.runs.iter().map(|x| x.1).sum::<f64>() / n;
        let mut fields = vec![num(r.gamma), num(obj), num(stress)];
        for &(o, s) in &r.runs {
            fields.push(num(o));
            fields.push(num(s));
        }
        row(&mut w, &fields, &path)?;
        writeln!(msg, "gamma {:>10}: objective {obj:.4} stress {stress:.4}", r.gamma).unwrap();
    }
    finish(w, &path)?;
    write!(msg, "sweep: {}", path.display()).unwrap();
    Ok(msg)
}

pub struct GenData {
    pub depth: usize,
    pub branching: usize,
    pub points: usize,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Writes `graph.json`, `data.csv` and a matching `config.toml` into `out`.
pub fn cmd_gen_data(args: &GenData, out: &Path) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (graph, data) = synthetic_tree(args.depth, args.branching, args.points, args.dim, args.noise, &mut rng)?;
    create_dir(out)?;
    let files: [(PathBuf, String); 3] = [
        (out.join("graph.json"), graph.to_json()),
        (out.join("data.csv"), data.to_csv(&graph)),
        (out.join("config.toml"), SYNTHETIC_TREE_CONFIG.to_string()),
    ];
    for (p, contents) in &files {
        write(p, contents)?;
    }
    Ok(format!("{} nodes, {} observations of dimension {} in {}", graph.len(), data.len(), data.dim(), out.display()))
}
