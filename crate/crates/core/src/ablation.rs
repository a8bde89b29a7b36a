//! One-axis sweeps around a base configuration, written as CSV tables.

use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, StrategyKind};
use crate::cost_volume::volume_memory_mib;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::pipeline::{run_pipeline, DepthReports};

pub const BINS: [usize; 4] = [8, 16, 32, 48];
pub const BETAS: [f64; 3] = [0.1, 0.15, 0.2];
pub const FIXED_FRACTIONS: [f64; 2] = [0.5, 0.25];
/// Camera speeds (m/s) each strategy is run at.
pub const SPEED_SWEEP: [f64; 4] = [0.0, 0.5, 2.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Bins,
    Strategy,
    Beta,
    Fusion,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Bins, Axis::Strategy, Axis::Beta, Axis::Fusion];

    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Bins => "bins",
            Axis::Strategy => "strategy",
            Axis::Beta => "beta",
            Axis::Fusion => "fusion",
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown axis {s:?}; expected bins, strategy, beta or fusion")))
    }
}

/// One setting of the swept axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub setting: String,
    pub config: ExperimentConfig,
    pub is_default: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub setting: String,
    pub is_default: bool,
    /// `None` for the aggregate over [`SPEED_SWEEP`].
    pub speed: Option<f64>,
    pub reports: DepthReports,
    pub volume_mib: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub axis: Axis,
    pub rows: Vec<AblationRow>,
}

pub fn strategy_label(config: &ExperimentConfig) -> String {
    match config.strategy {
        StrategyKind::Velocity => format!("velocity(beta={})", config.beta),
        StrategyKind::Fixed => format!("fixed({})", config.fixed_fraction),
        StrategyKind::Cascade => format!("cascade({})", config.fixed_fraction),
        StrategyKind::Confidence => format!("confidence(beta={})", config.beta),
    }
}

fn with(base: &ExperimentConfig, f: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut c = base.clone();
    f(&mut c);
    c
}

/// Settings swept for `axis`, with the base configuration's own setting
/// flagged and appended when the sweep does not already contain it.
pub fn cells(base: &ExperimentConfig, axis: Axis) -> Vec<Cell> {
    let mut configs: Vec<(String, ExperimentConfig)> = match axis {
        Axis::Bins => BINS
            .iter()
            .map(|&d| (d.to_string(), with(base, |c| c.depth_bins = d)))
            .collect(),
        Axis::Beta => BETAS
            .iter()
            .map(|&b| {
                let c = with(base, |c| {
                    c.strategy = StrategyKind::Velocity;
                    c.beta = b;
                });
                (b.to_string(), c)
            })
            .collect(),
        Axis::Fusion => [("unfused", false), ("fused", true)]
            .iter()
            .map(|&(name, fuse)| (name.to_string(), with(base, |c| c.fuse = fuse)))
            .collect(),
        Axis::Strategy => {
            let mut v: Vec<ExperimentConfig> = FIXED_FRACTIONS
                .iter()
                .map(|&f| {
                    with(base, |c| {
                        c.strategy = StrategyKind::Fixed;
                        c.fixed_fraction = f;
                    })
                })
                .collect();
            v.push(with(base, |c| {
                c.strategy = StrategyKind::Cascade;
                c.fixed_fraction = 0.5;
            }));
            v.push(with(base, |c| c.strategy = StrategyKind::Confidence));
            v.extend(BETAS.iter().map(|&b| {
                with(base, |c| {
                    c.strategy = StrategyKind::Velocity;
                    c.beta = b;
                })
            }));
            v.into_iter().map(|c| (strategy_label(&c), c)).collect()
        }
    };
    let own = match axis {
        Axis::Bins => base.depth_bins.to_string(),
        Axis::Beta if base.strategy == StrategyKind::Velocity => base.beta.to_string(),
        Axis::Beta => strategy_label(base),
        Axis::Fusion => if base.fuse { "fused" } else { "unfused" }.to_string(),
        Axis::Strategy => strategy_label(base),
    };
    if !configs.iter().any(|(s, _)| *s == own) {
        configs.push((own.clone(), base.clone()));
    }
    configs
        .into_iter()
        .map(|(setting, config)| Cell {
            is_default: setting == own,
            setting,
            config,
        })
        .collect()
}

fn run_one(config: &ExperimentConfig) -> Result<DepthReports> {
    let record = run_pipeline(config, None)?;
    record.aggregate.ok_or_else(|| {
        let why = record
            .frames
            .iter()
            .find_map(|f| f.diagnostic.clone())
            .unwrap_or_else(|| "no frames".into());
        Error::Diagnostic(format!("no frame evaluated: {why}"))
    })
}

fn pooled(reports: &[DepthReports]) -> Option<DepthReports> {
    let pick = |f: fn(&DepthReports) -> MetricReport| {
        MetricReport::aggregate(&reports.iter().map(f).collect::<Vec<_>>())
    };
    Some(DepthReports {
        mono: pick(|r| r.mono)?,
        mvs: pick(|r| r.mvs)?,
        fused: pick(|r| r.fused)?,
    })
}

/// Runs every cell of the sweep. The strategy axis runs each cell at every
/// speed of [`SPEED_SWEEP`] and adds a pooled row per cell.
pub fn run_ablation(base: &ExperimentConfig, axis: Axis) -> Result<AblationTable> {
    base.validate()?;
    let cells = cells(base, axis);
    let speeds: Vec<Option<f64>> = if axis == Axis::Strategy {
        SPEED_SWEEP.iter().map(|&s| Some(s)).collect()
    } else {
        vec![None]
    };
    let jobs: Vec<(usize, Option<f64>)> = (0..cells.len())
        .flat_map(|i| speeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<DepthReports> = jobs
        .par_iter()
        .map(|&(i, speed)| {
            let mut c = cells[i].config.clone();
            if let Some(s) = speed {
                c.speed = s;
            }
            run_one(&c)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        let c = &cell.config;
        let volume_mib = volume_memory_mib(c.width, c.height, c.channels, c.groups, c.depth_bins);
        let mine: Vec<DepthReports> = jobs
            .iter()
            .zip(&results)
            .filter(|((j, _), _)| *j == i)
            .map(|(_, r)| *r)
            .collect();
        for ((_, speed), reports) in jobs.iter().filter(|(j, _)| *j == i).zip(&mine) {
            rows.push(AblationRow {
                setting: cell.setting.clone(),
                is_default: cell.is_default,
                speed: speed.or(Some(c.speed)),
                reports: *reports,
                volume_mib,
            });
        }
        if axis == Axis::Strategy {
            rows.push(AblationRow {
                setting: cell.setting.clone(),
                is_default: cell.is_default,
                speed: None,
                reports: pooled(&mine).ok_or(Error::NoValidPixels)?,
                volume_mib,
            });
        }
    }
    Ok(AblationTable { axis, rows })
}

impl AblationTable {
    pub const HEADER: [&'static str; 15] = [
        "axis",
        "setting",
        "default",
        "speed",
        "abs_rel",
        "sq_rel",
        "rmse",
        "rmse_log",
        "delta1",
        "delta2",
        "delta3",
        "mono_abs_rel",
        "mvs_abs_rel",
        "n_valid",
        "volume_mib_estimate",
    ];

    /// Fused-depth row for `setting` at `speed` (`None` for the pooled row).
    pub fn row(&self, setting: &str, speed: Option<f64>) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.setting == setting && r.speed == speed)
    }

    pub fn default_row(&self) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.is_default)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::HEADER).map_err(csv_err)?;
        for r in &self.rows {
            let f = &r.reports.fused;
            let g = |x: f64| format!("{x:.9}");
            w.write_record([
                self.axis.as_str().to_string(),
                r.setting.clone(),
                r.is_default.to_string(),
                r.speed.map_or_else(|| "all".to_string(), |s| s.to_string()),
                g(f.abs_rel),
                g(f.sq_rel),
                g(f.rmse),
                g(f.rmse_log),
                g(f.delta1),
                g(f.delta2),
                g(f.delta3),
                g(r.reports.mono.abs_rel),
                g(r.reports.mvs.abs_rel),
                f.n_valid.to_string(),
                format!("{:.6}", r.volume_mib),
            ])
            .map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_cells_flag_the_base_setting() {
        let base = ExperimentConfig::default();
        let c = cells(&base, Axis::Bins);
        assert_eq!(c.iter().map(|c| c.setting.as_str()).collect::<Vec<_>>(), ["8", "16", "32", "48"]);
        assert_eq!(c.iter().filter(|c| c.is_default).count(), 1);
        assert!(c[1].is_default);

        let odd = with(&base, |c| c.depth_bins = 12);
        let c = cells(&odd, Axis::Bins);
        assert_eq!(c.len(), 5);
        assert!(c[4].is_default && c[4].config == odd);
    }

    #[test]
    fn strategy_cells_cover_the_baselines() {
        let c = cells(&ExperimentConfig::default(), Axis::Strategy);
        let names: Vec<&str> = c.iter().map(|c| c.setting.as_str()).collect();
        assert_eq!(
            names,
            [
                "fixed(0.5)",
                "fixed(0.25)",
                "cascade(0.5)",
                "confidence(beta=0.15)",
                "velocity(beta=0.1)",
                "velocity(beta=0.15)",
                "velocity(beta=0.2)",
            ]
        );
        assert!(c[5].is_default);
        assert_eq!(c[1].config.fixed_fraction, 0.25);
    }

    #[test]
    fn fusion_and_beta_cells() {
        let base = ExperimentConfig::default();
        let f = cells(&base, Axis::Fusion);
        assert_eq!(f.iter().map(|c| c.setting.as_str()).collect::<Vec<_>>(), ["unfused", "fused"]);
        assert!(!f[0].config.fuse && f[1].config.fuse && f[1].is_default);
        let fixed = with(&base, |c| c.strategy = StrategyKind::Fixed);
        let b = cells(&fixed, Axis::Beta);
        assert_eq!(b.len(), 4);
        assert!(b[..3].iter().all(|c| c.config.strategy == StrategyKind::Velocity && !c.is_default));
        assert!(b[3].is_default && b[3].setting == "fixed(0.5)");
    }

    #[test]
    fn axis_names_round_trip() {
        for a in Axis::ALL {
            assert_eq!(a.as_str().parse::<Axis>().unwrap(), a);
        }
        assert!(matches!("speed".parse::<Axis>(), Err(Error::Config(_))));
    }
}
