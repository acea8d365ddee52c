//! The `canopy-strata` command: argument parsing and the subcommands.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use canopy_strata_core::eval::{
    aggregate_reports, evaluate_plot, paired_deltas, AggregateSummary, DetectedTree, MatchReport, MatchTolerances,
    PlotSpec, StemRecord,
};
use canopy_strata_core::experiment::compare_modes;
use canopy_strata_core::model::rasterize_dem;
use canopy_strata_core::segment::{canopy_layers, prepare_cloud, segment_trees};
use canopy_strata_core::synth::{simulate, StandSpec, TreeSpec};
use canopy_strata_core::{DemRaster, PipelineConfig, Point, PointCloud};
use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::format::sig6;
use crate::manifest::Manifest;
use crate::points::{column, parse_real, read_points, write_points};
use crate::report::{
    comparison_text, match_report_json, read_crowns, to_pretty_json, write_aggregate, write_assignments,
    write_comparison, write_crowns, write_layer_stats, write_plot_metrics, LayerRow,
};
use crate::stems::{read_stems, write_stems};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "STRATA_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "canopy-strata",
    version,
    about = "Stratify airborne LiDAR forest point clouds into canopy layers, segment tree crowns per layer \
             and evaluate them against field stem maps"
)]
pub struct Cli {
    /// Worker threads for per-cell and per-layer work (outputs do not depend on it).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    /// Print the effective configuration as TOML and exit without running.
    #[arg(long, global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a point cloud into canopy layers (one point file per layer plus layers.csv).
    Stratify(StratifyArgs),
    /// Segment tree crowns layer by layer (crowns.csv, layers.csv, optional assignments.csv).
    Segment(SegmentArgs),
    /// Match a crown table to a stem map and compute recall, precision and F-score.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic multi-story stand (points.csv, stems.csv, trees.csv).
    Synth(SynthArgs),
    /// Segment with and without stratification, evaluate both and compare.
    Run(RunArgs),
}

/// Pipeline settings. Each flag overrides the value from `--config`, which
/// overrides the built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file with pipeline settings (field names as printed by --print-config).
    #[arg(long, value_name = "TOML")]
    pub config: Option<PathBuf>,
    /// Locale height histogram bin width, m [default: 0.25]
    #[arg(long, value_name = "M")]
    pub bin_width: Option<f64>,
    /// Standard deviation of the Gaussian smoothing the locale histograms, m [default: 5.0]
    #[arg(long, value_name = "M")]
    pub smooth_sigma: Option<f64>,
    /// Locale radius as a multiple of the layer's average footprint [default: 6.0]
    #[arg(long, value_name = "X")]
    pub locale_factor: Option<f64>,
    /// Smallest locale radius, m [default: 1.5]
    #[arg(long, value_name = "M")]
    pub locale_min_radius: Option<f64>,
    /// Smoothed histogram mass below which a concave run is ignored [default: 1.0]
    #[arg(long, value_name = "MASS")]
    pub min_curve_mass: Option<f64>,
    /// Locales with fewer points join the current layer whole [default: 8]
    #[arg(long, value_name = "N")]
    pub min_locale_points: Option<usize>,
    /// Layers lying entirely below this height are not segmented, m [default: 4.0]
    #[arg(long, value_name = "M")]
    pub ground_vegetation_height: Option<f64>,
    /// Crowns whose average width is below this are dropped as noise, m [default: 1.5]
    #[arg(long, value_name = "M")]
    pub noise_min_width: Option<f64>,
    /// Crowns whose apex is below this height are dropped as noise, m [default: 4.0]
    #[arg(long, value_name = "M")]
    pub noise_min_height: Option<f64>,
    /// Surface model cell size, raised to the layer's average footprint, m [default: 0.5]
    #[arg(long, value_name = "M")]
    pub dsm_cell: Option<f64>,
    /// Skip the 3x3 mean smoothing of the surface model
    #[arg(long)]
    pub no_dsm_smoothing: bool,
    /// Lowest surface height that can seed a crown, m [default: 2.0]
    #[arg(long, value_name = "M")]
    pub marker_min_height: Option<f64>,
    /// Cell size of a DEM built from ground-class points, m [default: 1.0]
    #[arg(long, value_name = "M")]
    pub dem_cell: Option<f64>,
    /// A crown/stem pair needs a height difference below this fraction of stem height [default: 0.30]
    #[arg(long, value_name = "FRACTION")]
    pub match_height_tol: Option<f64>,
    /// A crown/stem pair needs a lean from vertical below this angle, degrees [default: 15.0]
    #[arg(long, value_name = "DEG")]
    pub match_lean_tol: Option<f64>,
    /// Evaluation plot radius, m [default: 11.2838, a 0.04 ha circle]
    #[arg(long, value_name = "M")]
    pub plot_radius: Option<f64>,
    /// Ring around each plot whose crowns may match but never count as commissions, m [default: 4.7]
    #[arg(long, value_name = "M")]
    pub plot_buffer: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! apply {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        apply!(
            bin_width => bin_width_m,
            smooth_sigma => smooth_sigma_m,
            locale_factor => locale_factor,
            locale_min_radius => locale_min_radius_m,
            min_curve_mass => min_curve_mass,
            min_locale_points => min_locale_points,
            ground_vegetation_height => ground_vegetation_height_m,
            noise_min_width => noise_min_width_m,
            noise_min_height => noise_min_height_m,
            dsm_cell => dsm_cell_m,
            marker_min_height => marker_min_height_m,
            dem_cell => dem_cell_m,
            match_height_tol => match_height_tol,
            match_lean_tol => match_lean_tol_deg,
            plot_radius => plot_radius_m,
            plot_buffer => plot_buffer_m,
        );
        if self.no_dsm_smoothing {
            c.dsm_smoothing = false;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Point input shared by the commands that read a cloud.
#[derive(Debug, Clone, Default, Args)]
pub struct CloudArgs {
    /// Point file (x,y,z[,class][,source_id]; class 2 = ground)
    #[arg(long, value_name = "CSV")]
    pub points: Option<PathBuf>,
    /// Ground elevation grid (ESRI ASCII). Without it a DEM is built from
    /// ground-class points; a cloud without ground points is taken as
    /// already height-normalized.
    #[arg(long, value_name = "ASC")]
    pub dem: Option<PathBuf>,
    /// Horizontal area used for point density, m^2 [default: bounding box of the points]
    #[arg(long, value_name = "M2")]
    pub area: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StratifyArgs {
    #[command(flatten)]
    pub cloud: CloudArgs,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub cloud: CloudArgs,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Segment the whole cloud as one surface (baseline without stratification)
    #[arg(long)]
    pub no_stratify: bool,
    /// Also write the crown id of every input point
    #[arg(long)]
    pub assignments: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Where the evaluation plots are.
#[derive(Debug, Clone, Default, Args)]
pub struct PlotArgs {
    /// Plot centers (plot_id,center_x,center_y)
    #[arg(long, value_name = "CSV", conflicts_with = "center")]
    pub plots: Option<PathBuf>,
    /// Center of the single plot holding every stem, as X,Y
    #[arg(long, value_name = "X,Y", allow_hyphen_values = true)]
    pub center: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Crown table written by `segment`
    #[arg(long, value_name = "CSV")]
    pub crowns: Option<PathBuf>,
    /// Stem map (plot_id,x,y,height_m,crown_class,live_flag)
    #[arg(long, value_name = "CSV")]
    pub stems: Option<PathBuf>,
    #[command(flatten)]
    pub plot: PlotArgs,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Stand specification (TOML)
    #[arg(long, value_name = "TOML")]
    pub spec: Option<PathBuf>,
    /// Seed, overriding the one in the specification
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Stand specification (TOML); one synthetic stand per seed
    #[arg(long, value_name = "TOML", conflicts_with_all = ["points", "stems"])]
    pub spec: Option<PathBuf>,
    /// Seeds as a list (1,2,5) or a half-open range (0..10) [default: the specification's seed]
    #[arg(long)]
    pub seeds: Option<String>,
    #[command(flatten)]
    pub cloud: CloudArgs,
    /// Stem map for a run on measured data
    #[arg(long, value_name = "CSV")]
    pub stems: Option<PathBuf>,
    #[command(flatten)]
    pub plot: PlotArgs,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Messages go to stderr, summaries to
/// stdout.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("canopy-strata: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = match &cli.command {
        Command::Stratify(a) => a.config.resolve()?,
        Command::Segment(a) => {
            let mut c = a.config.resolve()?;
            if a.no_stratify {
                c.stratification_enabled = false;
            }
            c
        }
        Command::Evaluate(a) => a.config.resolve()?,
        Command::Synth(a) => a.config.resolve()?,
        Command::Run(a) => a.config.resolve()?,
    };
    if cli.print_config {
        let text = toml::to_string(&config).map_err(|e| Error::Config(e.to_string()))?;
        print!("{text}");
        return Ok(());
    }
    match cli.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(&cli.command, &config))
        }
        None => dispatch(&cli.command, &config),
    }
}

fn dispatch(command: &Command, config: &PipelineConfig) -> Result<()> {
    match command {
        Command::Stratify(a) => cmd_stratify(a, config),
        Command::Segment(a) => cmd_segment(a, config),
        Command::Evaluate(a) => cmd_evaluate(a, config),
        Command::Synth(a) => cmd_synth(a, config),
        Command::Run(a) => cmd_run(a, config),
    }
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{flag} is required")))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Output directory with a list of the files written to it.
struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_csv<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> csv::Result<()>,
    {
        self.write_with(name, |w| f(w).map_err(std::io::Error::other))
    }

    fn finish(mut self, mut manifest: Manifest) -> Result<()> {
        manifest.add_outputs(&self.dir, &self.written)?;
        let text = manifest.to_json();
        self.write_with("manifest.json", |w| w.write_all(text.as_bytes()))
    }
}

/// Reads the cloud and the DEM to normalize it with, if any.
fn load_cloud(
    args: &CloudArgs,
    config: &PipelineConfig,
    manifest: &mut Manifest,
) -> Result<(PointCloud, Option<DemRaster>)> {
    let path = required(&args.points, "--points")?;
    let cloud = read_points(open(path)?, &path.to_string_lossy(), args.area)?;
    manifest.add_input(path)?;
    let dem = match &args.dem {
        Some(dem_path) => {
            let dem = crate::grid::read_ascii_grid(open(dem_path)?, &dem_path.to_string_lossy())?;
            manifest.add_input(dem_path)?;
            Some(dem)
        }
        None => {
            let ground: Vec<Point> = cloud.points().iter().filter(|p| p.ground).copied().collect();
            if ground.is_empty() {
                None
            } else {
                Some(rasterize_dem(&ground, config.dem_cell_m, cloud.bounds())?)
            }
        }
    };
    Ok((cloud, dem))
}

fn cmd_stratify(args: &StratifyArgs, config: &PipelineConfig) -> Result<()> {
    let config = PipelineConfig {
        stratification_enabled: true,
        ..config.clone()
    };
    let mut manifest = Manifest::new("stratify", &config);
    let (cloud, dem) = load_cloud(&args.cloud, &config, &mut manifest)?;
    let mut out = OutDir::create(required(&args.out, "--out")?)?;
    let (normalized, index_map) = prepare_cloud(&cloud, dem.as_ref())?;
    let layers = canopy_layers(&normalized, &config)?;
    for layer in &layers {
        let pts: Vec<Point> = layer.point_ids.iter().map(|&i| cloud.points()[index_map[i]]).collect();
        out.write_csv(&format!("layer_{}.csv", layer.index), |w| write_points(w, &pts))?;
    }
    let rows: Vec<LayerRow> = layers.iter().map(LayerRow::from).collect();
    out.write_csv("layers.csv", |w| write_layer_stats(w, &rows))?;
    out.finish(manifest)?;
    eprintln!("{} layers from {} points", layers.len(), cloud.len());
    Ok(())
}

fn cmd_segment(args: &SegmentArgs, config: &PipelineConfig) -> Result<()> {
    let mut manifest = Manifest::new("segment", config);
    let (cloud, dem) = load_cloud(&args.cloud, config, &mut manifest)?;
    let mut out = OutDir::create(required(&args.out, "--out")?)?;
    let result = segment_trees(&cloud, dem.as_ref(), config)?;
    out.write_csv("crowns.csv", |w| write_crowns(w, &result.crowns))?;
    let rows: Vec<LayerRow> = result.layers.iter().map(LayerRow::from).collect();
    out.write_csv("layers.csv", |w| write_layer_stats(w, &rows))?;
    if args.assignments {
        let a = result.assignments(cloud.len());
        out.write_csv("assignments.csv", |w| write_assignments(w, &a))?;
    }
    out.finish(manifest)?;
    eprintln!(
        "{} crowns in {} layers ({} dropped as noise)",
        result.crowns.len(),
        result.layers.len(),
        result.dropped_noise_count
    );
    Ok(())
}

/// Plots keyed by id, in id order.
fn load_plots(
    args: &PlotArgs,
    stems: &[StemRecord],
    config: &PipelineConfig,
    manifest: &mut Manifest,
) -> Result<BTreeMap<String, PlotSpec>> {
    let mut plots = BTreeMap::new();
    if let Some(path) = &args.plots {
        let origin = path.to_string_lossy().to_string();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
        let headers = rdr.headers().map_err(|e| crate::error::from_csv(&origin, e))?.clone();
        let mut idx = [0usize; 3];
        for (slot, name) in idx.iter_mut().zip(["plot_id", "center_x", "center_y"]) {
            *slot = column(&headers, name)
                .ok_or_else(|| Error::schema(&origin, format!("missing required column '{name}'")))?;
        }
        for record in rdr.records() {
            let record = record.map_err(|e| crate::error::from_csv(&origin, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let x = parse_real(&origin, line, "center_x", &record[idx[1]])?;
            let y = parse_real(&origin, line, "center_y", &record[idx[2]])?;
            if plots
                .insert(record[idx[0]].to_string(), PlotSpec::with_config(x, y, config))
                .is_some()
            {
                return Err(Error::parse(
                    &origin,
                    line,
                    format!("duplicate plot_id '{}'", &record[idx[0]]),
                ));
            }
        }
        manifest.add_input(path)?;
    } else if let Some(center) = &args.center {
        let parsed = center
            .split_once(',')
            .and_then(|(x, y)| Some((x.trim().parse::<f64>().ok()?, y.trim().parse::<f64>().ok()?)));
        let (x, y) = parsed.ok_or_else(|| Error::Config(format!("--center expects X,Y, got '{center}'")))?;
        let mut ids: Vec<&str> = stems.iter().map(|s| s.plot_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        let id = match ids.as_slice() {
            [] => "plot",
            [one] => one,
            _ => {
                return Err(Error::Config(
                    "--center needs a stem map with a single plot_id; use --plots".into(),
                ))
            }
        };
        plots.insert(id.to_string(), PlotSpec::with_config(x, y, config));
    } else {
        return Err(Error::Config("either --plots or --center is required".into()));
    }
    if let Some(s) = stems.iter().find(|s| !plots.contains_key(&s.plot_id)) {
        return Err(Error::Config(format!(
            "stem map names plot '{}' which has no center",
            s.plot_id
        )));
    }
    Ok(plots)
}

fn evaluate_all(
    detected: &[DetectedTree],
    stems: &[StemRecord],
    plots: &BTreeMap<String, PlotSpec>,
    tol: &MatchTolerances,
) -> Result<Vec<MatchReport>> {
    plots
        .iter()
        .map(|(id, plot)| {
            let own: Vec<StemRecord> = stems.iter().filter(|s| &s.plot_id == id).cloned().collect();
            Ok(evaluate_plot(id, detected, &own, plot, tol)?)
        })
        .collect()
}

/// File name for a plot id, keeping it inside the output directory.
fn plot_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("reports/{safe}.json")
}

fn cmd_evaluate(args: &EvaluateArgs, config: &PipelineConfig) -> Result<()> {
    let mut manifest = Manifest::new("evaluate", config);
    let crowns_path = required(&args.crowns, "--crowns")?;
    let stems_path = required(&args.stems, "--stems")?;
    let detected = read_crowns(open(crowns_path)?, &crowns_path.to_string_lossy())?;
    manifest.add_input(crowns_path)?;
    let stems = read_stems(open(stems_path)?, &stems_path.to_string_lossy())?;
    manifest.add_input(stems_path)?;
    let plots = load_plots(&args.plot, &stems, config, &mut manifest)?;
    let mut out = OutDir::create(required(&args.out, "--out")?)?;

    let reports = evaluate_all(&detected, &stems, &plots, &MatchTolerances::from_config(config))?;
    for r in &reports {
        let doc = to_pretty_json(&match_report_json(r));
        out.write_with(&plot_file_name(&r.plot_id), |w| w.write_all(doc.as_bytes()))?;
    }
    out.write_csv("plot_metrics.csv", |w| write_plot_metrics(w, &[("evaluate", &reports)]))?;
    let summary = aggregate_reports(&reports)?;
    out.write_csv("aggregate.csv", |w| write_aggregate(w, &summary))?;
    out.finish(manifest)?;
    print!("{}", aggregate_text(&summary));
    Ok(())
}

fn aggregate_text(summary: &AggregateSummary) -> String {
    let mut s = format!("{:<12} {:<10} {:>10} {:>8}\n", "group", "metric", "mean", "plots");
    for m in &summary.means {
        s.push_str(&format!(
            "{:<12} {:<10} {:>10} {:>8}\n",
            canopy_strata_core::eval::group_label(m.group),
            m.metric.as_str(),
            sig6(m.mean),
            m.samples
        ));
    }
    s
}

fn load_stand_spec(path: &Path) -> Result<StandSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: StandSpec = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

fn write_trees<W: Write>(writer: W, trees: &[TreeSpec]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "tree_id",
        "x",
        "y",
        "total_height_m",
        "crown_base_m",
        "crown_radius_m",
        "shape",
        "story",
    ])?;
    for t in trees {
        let shape = match t.shape {
            canopy_strata_core::synth::CrownShape::Cone => "cone",
            canopy_strata_core::synth::CrownShape::Ellipsoid => "ellipsoid",
        };
        w.write_record([
            t.id.to_string(),
            t.x.to_string(),
            t.y.to_string(),
            t.total_height_m.to_string(),
            t.crown_base_m.to_string(),
            t.crown_radius_m.to_string(),
            shape.to_string(),
            t.story.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs, config: &PipelineConfig) -> Result<()> {
    let spec_path = required(&args.spec, "--spec")?;
    let spec = load_stand_spec(spec_path)?;
    let seed = args.seed.unwrap_or(spec.seed);
    let mut manifest = Manifest::new("synth", config);
    manifest.add_input(spec_path)?;
    manifest.seeds = vec![seed];
    manifest.stand = Some(spec.clone());
    let mut out = OutDir::create(required(&args.out, "--out")?)?;
    let (trees, sim) = simulate(&spec, seed)?;
    out.write_csv("points.csv", |w| write_points(w, sim.cloud.points()))?;
    out.write_csv("stems.csv", |w| write_stems(w, &sim.stems))?;
    out.write_csv("trees.csv", |w| write_trees(w, &trees))?;
    out.finish(manifest)?;
    eprintln!("{} trees, {} points", trees.len(), sim.cloud.len());
    Ok(())
}

/// Parses `1,2,5` or `0..10`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || {
        Error::Config(format!(
            "--seeds expects a list like 1,2,5 or a range like 0..10, got '{s}'"
        ))
    };
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn cmd_run(args: &RunArgs, config: &PipelineConfig) -> Result<()> {
    let mut manifest = Manifest::new("run", config);
    let (baseline_reports, stratified_reports) = if let Some(spec_path) = &args.spec {
        let spec = load_stand_spec(spec_path)?;
        manifest.add_input(spec_path)?;
        let seeds = match &args.seeds {
            Some(s) => parse_seeds(s)?,
            None => vec![spec.seed],
        };
        let cmp = compare_modes(&spec, &seeds, config)?;
        manifest.seeds = seeds;
        manifest.stand = Some(spec);
        (cmp.baseline_reports, cmp.stratified_reports)
    } else {
        let (cloud, dem) = load_cloud(&args.cloud, config, &mut manifest)?;
        let stems_path = required(&args.stems, "--stems (or --spec)")?;
        let stems = read_stems(open(stems_path)?, &stems_path.to_string_lossy())?;
        manifest.add_input(stems_path)?;
        let plots = load_plots(&args.plot, &stems, config, &mut manifest)?;
        let tol = MatchTolerances::from_config(config);
        let mut reports = Vec::with_capacity(2);
        for stratify in [false, true] {
            let c = PipelineConfig {
                stratification_enabled: stratify,
                ..config.clone()
            };
            let seg = segment_trees(&cloud, dem.as_ref(), &c)?;
            let detected: Vec<DetectedTree> = seg.crowns.iter().map(DetectedTree::from).collect();
            reports.push(evaluate_all(&detected, &stems, &plots, &tol)?);
        }
        let stratified = reports.pop().expect("two modes");
        (reports.pop().expect("two modes"), stratified)
    };
    let mut out = OutDir::create(required(&args.out, "--out")?)?;
    let baseline = aggregate_reports(&baseline_reports)?;
    let stratified = aggregate_reports(&stratified_reports)?;
    let deltas = paired_deltas(&baseline_reports, &stratified_reports)?;
    out.write_csv("comparison.csv", |w| {
        write_comparison(w, &baseline, &stratified, &deltas)
    })?;
    out.write_csv("plot_metrics.csv", |w| {
        write_plot_metrics(
            w,
            &[("baseline", &baseline_reports), ("stratified", &stratified_reports)],
        )
    })?;
    out.finish(manifest)?;
    print!("{}", comparison_text(&baseline, &stratified, &deltas));
    Ok(())
}
