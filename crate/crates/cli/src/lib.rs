//! Commands behind the `pep` binary. Each writes plain CSV/JSON/Markdown files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pep_core::energy::{self, EnergyModel};
use pep_core::output::{save_metric_csv, save_trajectory_csv, write_drift_csv, TrajectorySummary};
use pep_core::planner::plan;
use pep_core::replan::{replan_loop, ReplanOptions};
use pep_core::scenario::{bundled, load_scenario, Scenario};
use pep_core::uncertainty::{self, DistanceUncertaintyModel, FitReport, UncertaintyModels, REFERENCE_SPEEDS};
use pep_core::{Error, Result, Trajectory};

pub const DEFAULT_N_SEEDS: usize = 20;
pub const UNCERTAINTY_MODEL_FILE: &str = "uncertainty.json";
pub const ENERGY_MODEL_FILE: &str = "energy.json";

/// Named perception weights.
pub const PRESETS: [(&str, f64); 3] = [("direct", 0.0), ("proposed", 4.0), ("hpq", 1000.0)];

pub fn parse_alpha(s: &str) -> Result<f64> {
    if let Some((_, a)) = PRESETS.iter().find(|(n, _)| n.eq_ignore_ascii_case(s)) {
        return Ok(*a);
    }
    match s.parse::<f64>() {
        Ok(a) if a.is_finite() && a >= 0.0 => Ok(a),
        _ => Err(Error::validation("alpha_p", format!("'{s}' is neither a preset nor a number >= 0"))),
    }
}

pub fn alpha_label(alpha: f64) -> String {
    PRESETS
        .iter()
        .find(|(_, a)| *a == alpha)
        .map_or_else(|| format!("alpha={alpha}"), |(n, _)| n.to_string())
}

/// A bundled scenario name or a path to a scenario JSON file.
pub fn resolve_scenario(arg: &str) -> Result<Scenario> {
    match bundled(arg) {
        Some(s) => Ok(s),
        None => load_scenario(arg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Uncertainty,
    Power,
}

impl DataKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uncertainty" => Ok(DataKind::Uncertainty),
            "power" => Ok(DataKind::Power),
            _ => Err(Error::validation("kind", format!("expected 'uncertainty' or 'power', got '{s}'"))),
        }
    }
}

/// Fitted models used for planning.
#[derive(Debug, Clone)]
pub struct Models {
    pub uncertainty: UncertaintyModels,
    pub energy: EnergyModel,
}

impl Models {
    /// Models fitted on the reference laws.
    pub fn reference() -> Self {
        Models {
            uncertainty: UncertaintyModels::reference(0),
            energy: EnergyModel::reference(0),
        }
    }

    /// Load `uncertainty.json` and `energy.json` from `dir`, or fall back to
    /// the reference models.
    pub fn load(dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else {
            return Ok(Self::reference());
        };
        let unc_text = fs::read_to_string(dir.join(UNCERTAINTY_MODEL_FILE))?;
        let energy_text = fs::read_to_string(dir.join(ENERGY_MODEL_FILE))?;
        Ok(Models {
            uncertainty: serde_json::from_str(&unc_text)?,
            energy: EnergyModel::from_json(&energy_text)?,
        })
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Write a synthetic dataset; returns the number of rows.
pub fn cmd_gen_data(kind: DataKind, out: &Path, seed: u64, n_per_speed: Option<usize>) -> Result<usize> {
    match kind {
        DataKind::Uncertainty => {
            let n = n_per_speed.unwrap_or(500);
            let data = uncertainty::generate_reference_dataset(n, &REFERENCE_SPEEDS, seed)?;
            uncertainty::save_dataset(out, &uncertainty::dataset_header(seed, n), &data)?;
            Ok(data.len())
        }
        DataKind::Power => {
            let n = n_per_speed.unwrap_or(energy::POWER_SAMPLES_PER_SPEED);
            let data = energy::generate_power_dataset(seed, n, energy::POWER_NOISE_STD);
            energy::save_power_dataset(out, &energy::power_dataset_header(seed), &data)?;
            Ok(data.len())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitSummary {
    Uncertainty(FitReport),
    Power { n_samples: usize, train_domain: (f64, f64) },
}

/// Path of the fit report written next to a model file.
pub fn report_path(model_out: &Path) -> PathBuf {
    model_out.with_extension("report.json")
}

/// Fit a model from a dataset and write it plus a fit report.
pub fn cmd_fit(kind: DataKind, data: &Path, out: &Path) -> Result<FitSummary> {
    let summary = match kind {
        DataKind::Uncertainty => {
            let samples = uncertainty::load_dataset(data)?;
            let models = UncertaintyModels {
                motion: uncertainty::fit_motion_model(&samples)?,
                distance: DistanceUncertaintyModel::default(),
            };
            write_json(out, &models)?;
            FitSummary::Uncertainty(models.motion.fit_report.clone())
        }
        DataKind::Power => {
            let samples = energy::load_power_dataset(data)?;
            let model = energy::fit_energy_model(&samples)?;
            fs::write(out, model.to_json()? + "\n")?;
            FitSummary::Power {
                n_samples: samples.len(),
                train_domain: model.train_domain,
            }
        }
    };
    write_json(&report_path(out), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummaryFile {
    pub scenario: String,
    pub alpha_p: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub summary: TrajectorySummary,
    pub generated_at: String,
}

/// Plan once and write `trajectory.csv`, `metric.csv` and `summary.json`.
pub fn cmd_plan(scenario: &Scenario, models: &Models, alpha_p: Option<f64>, seed: u64, out_dir: &Path) -> Result<Trajectory> {
    let mut s = scenario.clone().with_seed(seed);
    if let Some(a) = alpha_p {
        s = s.with_alpha_p(a);
    }
    let traj = plan(&s, &models.uncertainty, &models.energy)?;
    fs::create_dir_all(out_dir)?;
    save_trajectory_csv(out_dir.join("trajectory.csv"), &traj)?;
    save_metric_csv(out_dir.join("metric.csv"), &traj)?;
    let summary = PlanSummaryFile {
        scenario: s.id.clone(),
        alpha_p: s.params.alpha_p,
        seed,
        summary: TrajectorySummary::from(&traj),
        generated_at: timestamp(),
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub seed: u64,
    pub success: bool,
    pub energy_j: Option<f64>,
    pub perception_quality: Option<f64>,
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    /// Mean and sample standard deviation; `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, n })
    }
}

/// Results of one weight over several seeds; failed seeds stay in `rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub alpha_p: f64,
    pub label: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<RunRow>,
    pub energy_j: Option<Stat>,
    pub perception_quality: Option<Stat>,
    pub duration_s: Option<Stat>,
    pub n_failed: usize,
}

impl RunReport {
    pub fn from_rows(scenario: &str, alpha_p: f64, rows: Vec<RunRow>) -> Self {
        let pick = |f: fn(&RunRow) -> Option<f64>| -> Vec<f64> { rows.iter().filter_map(f).collect() };
        RunReport {
            scenario: scenario.to_string(),
            alpha_p,
            label: alpha_label(alpha_p),
            seeds: rows.iter().map(|r| r.seed).collect(),
            energy_j: Stat::of(&pick(|r| r.energy_j)),
            perception_quality: Stat::of(&pick(|r| r.perception_quality)),
            duration_s: Stat::of(&pick(|r| r.duration_s)),
            n_failed: rows.iter().filter(|r| !r.success).count(),
            rows,
        }
    }
}

/// Plan every (weight, seed) pair; seeds run in parallel, reports keep seed order.
pub fn run_sweep(scenario: &Scenario, models: &Models, alphas: &[f64], seeds: &[u64]) -> Result<Vec<RunReport>> {
    scenario.validate()?;
    let mut reports = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let rows: Vec<Result<RunRow>> = seeds
            .par_iter()
            .map(|&seed| {
                let s = scenario.clone().with_alpha_p(alpha).with_seed(seed);
                match plan(&s, &models.uncertainty, &models.energy) {
                    Ok(t) => Ok(RunRow {
                        seed,
                        success: true,
                        energy_j: Some(t.total_energy_j),
                        perception_quality: Some(t.total_perception),
                        duration_s: Some(t.duration_s),
                    }),
                    Err(Error::GoalUnreachable { .. }) => Ok(RunRow {
                        seed,
                        success: false,
                        energy_j: None,
                        perception_quality: None,
                        duration_s: None,
                    }),
                    Err(e) => Err(e),
                }
            })
            .collect();
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        let ok = rows.iter().filter(|r| r.success).count();
        log::info!("{} alpha_p={alpha}: {ok}/{} seeds reached the goal", scenario.id, rows.len());
        reports.push(RunReport::from_rows(&scenario.id, alpha, rows));
    }
    Ok(reports)
}

fn fmt_stat(s: &Option<Stat>, scale: f64, digits: usize) -> String {
    match s {
        Some(s) => format!("{:.*} ± {:.*}", digits, s.mean * scale, digits, s.std * scale),
        None => "n/a".to_string(),
    }
}

/// Markdown table with one row per weight.
pub fn render_markdown(reports: &[RunReport]) -> String {
    let mut out = String::new();
    if let Some(r) = reports.first() {
        out.push_str(&format!("# {} ({} seeds)\n\n", r.scenario, r.seeds.len()));
    }
    out.push_str("| planner | alpha_p | energy (kJ) | perception quality (x10^3) | duration (s) | failed |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            r.label,
            r.alpha_p,
            fmt_stat(&r.energy_j, 1e-3, 2),
            fmt_stat(&r.perception_quality, 1e-3, 1),
            fmt_stat(&r.duration_s, 1.0, 1),
            r.n_failed
        ));
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Sweep weights over seeds and write `report.md`, `report.csv`, `report.json`.
pub fn cmd_compare(scenario: &Scenario, models: &Models, alphas: &[f64], seeds: &[u64], out_dir: &Path) -> Result<Vec<RunReport>> {
    let reports = run_sweep(scenario, models, alphas, seeds)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("report.md"), render_markdown(&reports))?;
    let mut w = csv::Writer::from_path(out_dir.join("report.csv")).map_err(Error::from)?;
    w.write_record(["scenario", "label", "alpha_p", "seed", "success", "energy_j", "perception_quality", "duration_s"])?;
    for r in &reports {
        for row in &r.rows {
            w.write_record([
                r.scenario.clone(),
                r.label.clone(),
                r.alpha_p.to_string(),
                row.seed.to_string(),
                row.success.to_string(),
                opt(row.energy_j),
                opt(row.perception_quality),
                opt(row.duration_s),
            ])?;
        }
    }
    w.flush()?;
    #[derive(Serialize)]
    struct ReportFile<'a> {
        reports: &'a [RunReport],
        generated_at: String,
    }
    write_json(
        &out_dir.join("report.json"),
        &ReportFile {
            reports: &reports,
            generated_at: timestamp(),
        },
    )?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanRow {
    pub seed: u64,
    pub success: bool,
    pub final_drift: f64,
    pub final_x: f64,
    pub final_y: f64,
    pub exceed_x: Option<f64>,
    pub exceed_y: Option<f64>,
    pub n_plans: usize,
}

/// Run the receding-horizon loop per seed; writes `outcome.csv` and one
/// `drift_seed<N>.csv` trace per seed.
pub fn cmd_replan(
    scenario: &Scenario,
    models: &Models,
    alpha_p: f64,
    seeds: &[u64],
    opts: &ReplanOptions,
    out_dir: &Path,
) -> Result<Vec<ReplanRow>> {
    let outcomes: Vec<Result<_>> = seeds
        .par_iter()
        .map(|&seed| {
            let s = scenario.clone().with_alpha_p(alpha_p).with_seed(seed);
            replan_loop(&s, &models.uncertainty, &models.energy, opts).map(|o| (seed, o))
        })
        .collect();
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::with_capacity(seeds.len());
    for item in outcomes {
        let (seed, o) = item?;
        log::info!("seed {seed}: success {} after {} plans, drift {:.3}", o.success, o.plans.len(), o.final_drift);
        write_drift_csv(fs::File::create(out_dir.join(format!("drift_seed{seed}.csv")))?, &o.trace)?;
        let last = o.final_state().expect("trace holds the start");
        rows.push(ReplanRow {
            seed,
            success: o.success,
            final_drift: o.final_drift,
            final_x: last.x,
            final_y: last.y,
            exceed_x: o.exceed_point.map(|p| p.x),
            exceed_y: o.exceed_point.map(|p| p.y),
            n_plans: o.plans.len(),
        });
    }
    let mut w = csv::Writer::from_path(out_dir.join("outcome.csv")).map_err(Error::from)?;
    w.write_record(["seed", "alpha_p", "success", "final_drift", "final_x", "final_y", "exceed_x", "exceed_y", "n_plans"])?;
    for r in &rows {
        w.write_record([
            r.seed.to_string(),
            alpha_p.to_string(),
            r.success.to_string(),
            r.final_drift.to_string(),
            r.final_x.to_string(),
            r.final_y.to_string(),
            opt(r.exceed_x),
            opt(r.exceed_y),
            r.n_plans.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// Process exit code for an error: 2 when planning failed, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        1
    } else {
        2
    }
}
