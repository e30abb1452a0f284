//! Experiment orchestration behind the `iqsense` command line.
//!
//! Every command returns a [`Report`]: a provenance block plus named
//! tables, rendered as CSV (comment header, one block per table) or JSON.
//! Rendering is byte-deterministic for a given configuration and seed.

use crate::detection::{
    analytic_detection, analytic_false_alarm, conditional_matrix, decision_rule, detection_from, false_alarm_from,
    gamma_laws, literal_thresholds, two_level_rule, Convention, DecisionRule, DetectorMode, Hypothesis,
    DEFAULT_MERGE_TOL,
};
use crate::error::{Error, Result};
use crate::montecarlo::{
    evaluate_point, simulate, sweep, PointResult, ScenarioSpec, SeedSpec, SweepAxis, SweepRow,
    TallyMatrix,
};
use crate::outage::{analytic_outage, mc_outage, literal_outage, OutageScenario};
use crate::signal_model::irr_to_mismatch;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    /// Give the receiver the same IRR as the transmitter at each point.
    #[serde(default)]
    pub rx_follows_tx: bool,
}

/// OFDMA frame layout for the `frame` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_users")]
    pub users: usize,
    /// Per-user activity; user `u` owns the `u`-th contiguous block of `K/U`
    /// subcarriers in index order `-K/2..-1, 1..K/2`.
    #[serde(default)]
    pub users_active: Option<Vec<bool>>,
    /// Explicit list of active subcarrier indices; overrides `users_active`.
    #[serde(default)]
    pub active_subcarriers: Option<Vec<i64>>,
}

fn default_k() -> usize {
    512
}

fn default_users() -> usize {
    4
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self { k: default_k(), users: default_users(), users_active: None, active_subcarriers: None }
    }
}

/// Primary link parameters for outage evaluation; powers relative to the
/// primary receiver noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageConfig {
    #[serde(default = "default_primary_snr")]
    pub primary_snr_db: f64,
    #[serde(default = "default_secondary_snr")]
    pub secondary_snr_db: f64,
    #[serde(default = "default_rate")]
    pub rate_p: f64,
    #[serde(default = "default_unit")]
    pub var_g: f64,
    #[serde(default = "default_unit")]
    pub var_h: f64,
}

fn default_primary_snr() -> f64 {
    10.0
}

fn default_secondary_snr() -> f64 {
    10.0
}

fn default_rate() -> f64 {
    1.0
}

fn default_unit() -> f64 {
    1.0
}

impl Default for OutageConfig {
    fn default() -> Self {
        Self {
            primary_snr_db: default_primary_snr(),
            secondary_snr_db: default_secondary_snr(),
            rate_p: default_rate(),
            var_g: default_unit(),
            var_h: default_unit(),
        }
    }
}

impl OutageConfig {
    /// Scenario with the secondary transmitter at the given IRR (absent: ideal).
    pub fn scenario(&self, irr_db: Option<f64>) -> Result<OutageScenario> {
        let beta_sq_sec = match irr_db {
            Some(irr) => irr_to_mismatch(irr)?.coefficients().beta.norm_sqr(),
            None => 0.0,
        };
        let sc = OutageScenario {
            p_mk: 10f64.powf(self.primary_snr_db / 10.0),
            p0: 10f64.powf(self.secondary_snr_db / 10.0),
            beta_sq_sec,
            noise_p: 1.0,
            var_g: self.var_g,
            var_h: self.var_h,
            rate_p: self.rate_p,
        };
        sc.validate()?;
        Ok(sc)
    }
}

/// Top-level JSON configuration; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_scenario")]
    pub scenario: ScenarioSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Trials per hypothesis per evaluated point.
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Detectors evaluated by `sweep`.
    #[serde(default = "default_modes")]
    pub modes: Vec<DetectorMode>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "default_deltas")]
    pub delta_snr_db: Vec<f64>,
    #[serde(default = "default_irr_grid")]
    pub irr_grid_db: Vec<f64>,
    #[serde(default = "default_snr1_grid")]
    pub snr1_grid_db: Vec<f64>,
    #[serde(default)]
    pub frame: FrameConfig,
    #[serde(default)]
    pub outage: OutageConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_scenario() -> ScenarioSpec {
    ScenarioSpec::new(0.0, -10.0, Some(-15.0))
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> u64 {
    1_000_000
}

fn default_modes() -> Vec<DetectorMode> {
    vec![DetectorMode::FourLevel, DetectorMode::TwoLevelBayes]
}

fn default_deltas() -> Vec<f64> {
    vec![-10.0, 0.0, 10.0]
}

/// `-30, -27.5, ..., -5` dB.
pub fn default_irr_grid() -> Vec<f64> {
    (0..=10).map(|i| -30.0 + 2.5 * i as f64).collect()
}

/// `-20, -18, ..., 20` dB.
pub fn default_snr1_grid() -> Vec<f64> {
    (0..=20).map(|i| -20.0 + 2.0 * i as f64).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config uses defaults")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one detector mode is required".into()));
        }
        for m in &self.modes {
            m.validate()?;
        }
        self.scenario.build()?;
        Ok(())
    }

    /// SHA-256 of the configuration with output settings stripped.
    pub fn digest(&self) -> String {
        let stripped = Self { out: None, format: OutputFormat::Csv, ..self.clone() };
        let bytes = serde_json::to_vec(&stripped).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One table cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_finite() => v.to_string(),
            Cell::Float(_) | Cell::Empty => String::new(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) if !v.is_finite() => Value::Null,
            Cell::Empty => Value::Null,
            other => serde_json::to_value(other).expect("cell serializes"),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self { name: name.to_string(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub trials: u64,
    pub notes: Vec<String>,
    pub tables: Vec<Table>,
    /// Outcome of the analytic/empirical closure check, when requested.
    pub verified: Option<bool>,
}

impl Report {
    fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: cfg.digest(),
            seed: cfg.seed,
            trials: cfg.trials,
            notes: Vec::new(),
            tables: Vec::new(),
            verified: None,
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        writeln!(buf, "# iqsense {VERSION}")?;
        writeln!(buf, "# command: {}", self.command)?;
        writeln!(buf, "# config_sha256: {}", self.config_sha256)?;
        writeln!(buf, "# seed: {}", self.seed)?;
        writeln!(buf, "# trials_per_hypothesis: {}", self.trials)?;
        if let Some(v) = self.verified {
            writeln!(buf, "# verified: {v}")?;
        }
        for note in &self.notes {
            writeln!(buf, "# note: {note}")?;
        }
        for (i, table) in self.tables.iter().enumerate() {
            if i > 0 {
                writeln!(buf)?;
            }
            writeln!(buf, "# table: {}", table.name)?;
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::csv))?;
            }
            w.flush()?;
        }
        Ok(buf)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let tables: Vec<Value> = self
            .tables
            .iter()
            .map(|t| {
                json!({
                    "name": t.name,
                    "columns": t.columns,
                    "rows": t.rows.iter().map(|r| r.iter().map(Cell::json).collect::<Vec<_>>()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let doc = json!({
            "provenance": {
                "library": "iqsense",
                "version": VERSION,
                "command": self.command,
                "config_sha256": self.config_sha256,
                "seed": self.seed,
                "trials_per_hypothesis": self.trials,
            },
            "verified": self.verified,
            "notes": self.notes,
            "tables": tables,
        });
        let mut out = serde_json::to_vec_pretty(&doc)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn render(&self, format: OutputFormat) -> Result<Vec<u8>> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

fn seed_of(cfg: &ExperimentConfig) -> SeedSpec {
    SeedSpec::new(cfg.seed, 0)
}

fn irr_cell(irr: Option<f64>) -> Cell {
    irr.into()
}

fn thresholds_row(table: &mut Table, label: &str, rule: &DecisionRule) {
    let all = rule.thresholds().iter().map(|t| t.to_string()).collect::<Vec<_>>().join("|");
    table.push(vec![
        label.into(),
        rule.s01().into(),
        rule.s12().into(),
        rule.s23().into(),
        all.into(),
    ]);
}

fn merge_notes(rule: &DecisionRule, notes: &mut Vec<String>) {
    for (a, b) in rule.merged() {
        notes.push(format!("{a} and {b} have equal variance and share one decision region"));
    }
    if rule.groups().len() == 2 {
        notes.push("four-level rule reduces to a single-threshold binary detector".into());
    }
}

/// Variances, thresholds and closed-form metrics for the configured scenario.
pub fn cmd_analytic(cfg: &ExperimentConfig) -> Result<Report> {
    let sc = cfg.scenario.build()?;
    let v = sc.variances()?;
    let shape = sc.n_packets;
    let mut report = Report::new("analytic", cfg);

    let mut variances = Table::new("variances", &["hypothesis", "description", "sigma_sq", "mean_z"]);
    for h in Hypothesis::ALL {
        variances.push(vec![h.label().into(), h.description().into(), v.get(h).into(), (2.0 * v.get(h)).into()]);
    }

    let four = decision_rule(&v, shape, DEFAULT_MERGE_TOL);
    merge_notes(&four, &mut report.notes);
    let mut regions = Table::new("regions", &["decided", "members", "lower", "upper"]);
    for (g, (decided, lo, hi)) in four.groups().iter().zip(four.regions()) {
        let members = g.members.iter().map(|h| h.label()).collect::<Vec<_>>().join("|");
        regions.push(vec![decided.label().into(), members.into(), lo.into(), Cell::from(hi.is_finite().then_some(hi))]);
    }

    let mut thresholds = Table::new("thresholds", &["rule", "s01", "s12", "s23", "boundaries"]);
    thresholds_row(&mut thresholds, "four-level", &four);
    let verbatim = literal_thresholds(&v, shape).ok();
    if let Some(vb) = verbatim {
        let all = format!("{}|{}|{}", vb.s01, vb.s12, vb.s23);
        thresholds.push(vec!["four-level-verbatim".into(), vb.s01.into(), vb.s12.into(), vb.s23.into(), all.into()]);
    }

    let mut probs = Table::new("probabilities", &["mode", "convention", "law", "p_fa", "p_d"]);
    let exact = sc.exact_laws().ok();
    let mut modes = vec![DetectorMode::FourLevel, DetectorMode::TwoLevelBayes];
    if let DetectorMode::TwoLevelCfar { .. } = sc.mode {
        modes.push(sc.mode);
    }
    for mode in modes {
        let rule = sc.rule_for(mode)?;
        if mode != DetectorMode::FourLevel {
            thresholds_row(&mut thresholds, &mode.label(), &rule);
        }
        for convention in Convention::BOTH {
            probs.push(vec![
                mode.label().into(),
                convention.label().into(),
                "gamma".into(),
                analytic_false_alarm(&v, &rule, convention)?.into(),
                analytic_detection(&v, &rule, convention)?.into(),
            ]);
            if let Some(laws) = &exact {
                let m = conditional_matrix(laws, &rule)?;
                probs.push(vec![
                    mode.label().into(),
                    convention.label().into(),
                    "exact".into(),
                    false_alarm_from(&m, convention).into(),
                    detection_from(&m, convention).into(),
                ]);
            }
        }
    }
    if let Some(vb) = verbatim {
        probs.push(vec!["four-level".into(), "unweighted-sum".into(), "verbatim".into(), vb.p_fa.into(), vb.p_d.into()]);
    }

    let mut outage = Table::new("outage", &["irr_db", "beta_sq", "analytic", "verbatim"]);
    let osc = cfg.outage.scenario(cfg.scenario.irr_db)?;
    outage.push(vec![
        irr_cell(cfg.scenario.irr_db),
        osc.beta_sq_sec.into(),
        analytic_outage(&osc)?.into(),
        literal_outage(&osc)?.into(),
    ]);

    report.tables = vec![variances, regions, thresholds, probs, outage];
    Ok(report)
}

const CONDITIONAL_COLUMNS: &[&str] =
    &["truth", "decided", "count", "trials", "frequency", "wilson_lo", "wilson_hi", "gamma", "exact"];

/// One Monte Carlo run at the configured scenario; with `verify`, checks
/// every conditional frequency against the exact law within 3 standard errors.
pub fn cmd_sense(cfg: &ExperimentConfig, verify: bool) -> Result<Report> {
    let sc = cfg.scenario.build()?;
    if verify && sc.block_fading {
        return Err(Error::Config("--verify needs a closed-form law, which block fading does not have".into()));
    }
    let rule = sc.rule()?;
    let out = simulate(&sc, std::slice::from_ref(&rule), cfg.trials, seed_of(cfg))?;
    let tally = out.tallies[0];
    let mut report = Report::new("sense", cfg);
    merge_notes(&rule, &mut report.notes);

    let gamma = conditional_matrix(&gamma_laws(&sc.variances()?, sc.n_packets)?, &rule)?;
    let exact = sc.exact_laws().ok().map(|l| conditional_matrix(&l, &rule)).transpose()?;

    let mut conditionals = Table::new("conditionals", CONDITIONAL_COLUMNS);
    let mut verify_table = Table::new("verify", &["truth", "decided", "exact", "frequency", "tolerance", "ok"]);
    let mut all_ok = true;
    for truth in Hypothesis::ALL {
        let n = tally.row_total(truth);
        for decided in Hypothesis::ALL {
            let count = tally.count(truth, decided);
            let f = count as f64 / n as f64;
            let (lo, hi) = crate::numerics::wilson_interval(count, n, crate::numerics::Z95);
            let p_exact = exact.map(|m| m[truth.index()][decided.index()]);
            conditionals.push(vec![
                truth.label().into(),
                decided.label().into(),
                count.into(),
                n.into(),
                f.into(),
                lo.into(),
                hi.into(),
                gamma[truth.index()][decided.index()].into(),
                p_exact.into(),
            ]);
            if let (true, Some(p)) = (verify, p_exact) {
                let tol = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
                let ok = (f - p).abs() <= tol;
                all_ok &= ok;
                verify_table.push(vec![
                    truth.label().into(),
                    decided.label().into(),
                    p.into(),
                    f.into(),
                    tol.into(),
                    ok.into(),
                ]);
            }
        }
    }

    let mut metrics = Table::new(
        "metrics",
        &["mode", "convention", "metric", "empirical", "lower", "upper", "gamma", "exact"],
    );
    for convention in Convention::BOTH {
        let emp = crate::montecarlo::empirical_metrics(&tally, convention)?;
        let rows = [
            ("p_fa", emp.p_fa, false_alarm_from(&gamma, convention), exact.map(|m| false_alarm_from(&m, convention))),
            ("p_d", emp.p_d, detection_from(&gamma, convention), exact.map(|m| detection_from(&m, convention))),
        ];
        for (name, est, g, e) in rows {
            metrics.push(vec![
                sc.mode.label().into(),
                convention.label().into(),
                name.into(),
                est.value.into(),
                est.lower.into(),
                est.upper.into(),
                g.into(),
                e.into(),
            ]);
        }
    }

    report.tables = vec![conditionals, metrics];
    if verify {
        report.tables.push(verify_table);
        report.verified = Some(all_ok);
    }
    Ok(report)
}

const SWEEP_COLUMNS: &[&str] = &[
    "series",
    "axis",
    "axis_value",
    "snr1_db",
    "snr2_db",
    "irr_db",
    "rx_irr_db",
    "mode",
    "convention",
    "gamma_p_fa",
    "gamma_p_d",
    "exact_p_fa",
    "exact_p_d",
    "p_fa",
    "p_fa_lo",
    "p_fa_hi",
    "p_d",
    "p_d_lo",
    "p_d_hi",
];

fn push_point(table: &mut Table, series: &str, axis: &str, value: f64, spec: &ScenarioSpec, r: &PointResult) {
    let e = &r.empirical;
    table.push(vec![
        series.into(),
        axis.into(),
        value.into(),
        spec.snr1_db.into(),
        spec.snr2_db.into(),
        irr_cell(spec.irr_db),
        irr_cell(spec.rx_irr_db),
        r.mode.label().into(),
        r.convention.label().into(),
        r.gamma_p_fa.into(),
        r.gamma_p_d.into(),
        r.exact_p_fa.into(),
        r.exact_p_d.into(),
        e.p_fa.value.into(),
        e.p_fa.lower.into(),
        e.p_fa.upper.into(),
        e.p_d.value.into(),
        e.p_d.lower.into(),
        e.p_d.upper.into(),
    ]);
}

fn push_sweep(
    table: &mut Table,
    series: &str,
    template: &ScenarioSpec,
    axis: SweepAxis,
    rx_follows_tx: bool,
    rows: &[SweepRow],
) {
    for row in rows {
        let spec = axis.apply(template, row.axis_value, rx_follows_tx);
        push_point(table, series, axis.label(), row.axis_value, &spec, &row.result);
    }
}

/// Sweep of the configured axis (default: IRR over the default grid).
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let sweep_cfg = cfg.sweep.clone().unwrap_or(SweepConfig {
        axis: SweepAxis::IrrDb,
        grid: cfg.irr_grid_db.clone(),
        rx_follows_tx: false,
    });
    let rows = sweep(
        &cfg.scenario,
        sweep_cfg.axis,
        &sweep_cfg.grid,
        sweep_cfg.rx_follows_tx,
        &cfg.modes,
        cfg.trials,
        seed_of(cfg),
    )?;
    let mut table = Table::new("sweep", SWEEP_COLUMNS);
    push_sweep(&mut table, "sweep", &cfg.scenario, sweep_cfg.axis, sweep_cfg.rx_follows_tx, &rows);
    let mut report = Report::new("sweep", cfg);
    report.tables.push(table);
    Ok(report)
}

/// Figures that [`cmd_figure`] can regenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    /// False alarm vs IRR, four-level and two-level, `SNR₂ = -10 dB`.
    FalseAlarmVsIrr,
    /// False alarm vs `SNR₁` for several `ΔSNR` at `IRR = -15 dB`, with ideal baselines.
    FalseAlarmVsDeltaSnr,
    /// Detection vs IRR, Tx-only and joint Tx–Rx imbalance.
    JointDetection,
    /// Primary outage vs IRR.
    Outage,
}

impl FigureId {
    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            3 => Ok(FigureId::FalseAlarmVsIrr),
            4 => Ok(FigureId::FalseAlarmVsDeltaSnr),
            5 => Ok(FigureId::JointDetection),
            6 => Ok(FigureId::Outage),
            other => Err(Error::Config(format!("unknown figure {other}; expected 3, 4, 5 or 6"))),
        }
    }

    pub fn number(self) -> u32 {
        match self {
            FigureId::FalseAlarmVsIrr => 3,
            FigureId::FalseAlarmVsDeltaSnr => 4,
            FigureId::JointDetection => 5,
            FigureId::Outage => 6,
        }
    }
}

fn two_modes() -> [DetectorMode; 2] {
    [DetectorMode::FourLevel, DetectorMode::TwoLevelBayes]
}

pub fn cmd_figure(cfg: &ExperimentConfig, id: FigureId) -> Result<Report> {
    let mut report = Report::new(&format!("figure{}", id.number()), cfg);
    let seed = seed_of(cfg);
    match id {
        FigureId::FalseAlarmVsIrr => {
            let template = ScenarioSpec { snr2_db: -10.0, rx_irr_db: None, ..cfg.scenario.clone() };
            let rows = sweep(&template, SweepAxis::IrrDb, &cfg.irr_grid_db, false, &two_modes(), cfg.trials, seed)?;
            let mut table = Table::new("figure3", SWEEP_COLUMNS);
            push_sweep(&mut table, "tx-only", &template, SweepAxis::IrrDb, false, &rows);
            report.tables.push(table);
        }
        FigureId::FalseAlarmVsDeltaSnr => {
            let mut table = Table::new("figure4", SWEEP_COLUMNS);
            let mut stream = 0u32;
            for &delta in &cfg.delta_snr_db {
                for (series, irr) in [(format!("delta={delta}"), Some(-15.0)), (format!("delta={delta},ideal"), None)] {
                    for &snr1 in &cfg.snr1_grid_db {
                        let spec = ScenarioSpec {
                            snr1_db: snr1,
                            snr2_db: snr1 - delta,
                            irr_db: irr,
                            rx_irr_db: None,
                            ..cfg.scenario.clone()
                        };
                        let sc = spec.build()?;
                        for r in evaluate_point(&sc, &two_modes(), cfg.trials, seed.with_stream(stream))? {
                            push_point(&mut table, &series, "snr1_db", snr1, &spec, &r);
                        }
                        stream += 1;
                    }
                }
            }
            report.tables.push(table);
        }
        FigureId::JointDetection => {
            let template = ScenarioSpec { rx_irr_db: None, ..cfg.scenario.clone() };
            let modes = [DetectorMode::FourLevel];
            let mut table = Table::new("figure5", SWEEP_COLUMNS);
            // Both series share streams, so their difference is a paired comparison.
            for (series, joint) in [("tx-only", false), ("joint", true)] {
                let rows = sweep(&template, SweepAxis::IrrDb, &cfg.irr_grid_db, joint, &modes, cfg.trials, seed)?;
                push_sweep(&mut table, series, &template, SweepAxis::IrrDb, joint, &rows);
            }
            report.tables.push(table);
        }
        FigureId::Outage => {
            let mut table = Table::new(
                "figure6",
                &["irr_db", "beta_sq", "analytic", "verbatim", "baseline", "mc", "mc_lo", "mc_hi"],
            );
            let baseline = analytic_outage(&cfg.outage.scenario(None)?)?;
            for (i, &irr) in cfg.irr_grid_db.iter().enumerate() {
                let sc = cfg.outage.scenario(Some(irr))?;
                let mc = mc_outage(&sc, cfg.trials, seed.with_stream(i as u32))?;
                table.push(vec![
                    irr.into(),
                    sc.beta_sq_sec.into(),
                    analytic_outage(&sc)?.into(),
                    literal_outage(&sc)?.into(),
                    baseline.into(),
                    mc.frequency.into(),
                    mc.lower.into(),
                    mc.upper.into(),
                ]);
            }
            report.tables.push(table);
        }
    }
    Ok(report)
}

/// Primary activity of every subcarrier in a `K`-subcarrier frame.
///
/// Positions `0..K` map to indices `-K/2..-1, 1..K/2`; there is no DC entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyMap {
    k: usize,
    active: Vec<bool>,
}

impl OccupancyMap {
    pub fn new(k: usize, active: Vec<bool>) -> Result<Self> {
        if k == 0 || !k.is_multiple_of(2) {
            return Err(Error::Config(format!("subcarrier count must be even and positive, got {k}")));
        }
        if active.len() != k {
            return Err(Error::Config(format!("occupancy map has {} entries for K = {k}", active.len())));
        }
        Ok(Self { k, active })
    }

    /// Contiguous equal user blocks in index order.
    pub fn from_users(k: usize, users_active: &[bool]) -> Result<Self> {
        let users = users_active.len();
        if users == 0 || !k.is_multiple_of(users) {
            return Err(Error::Config(format!("{users} users cannot split {k} subcarriers evenly")));
        }
        let block = k / users;
        Self::new(k, (0..k).map(|p| users_active[p / block]).collect())
    }

    pub fn from_active_list(k: usize, indices: &[i64]) -> Result<Self> {
        let mut map = Self::new(k, vec![false; k])?;
        for &i in indices {
            if i == 0 {
                return Err(Error::Config("the DC subcarrier carries no data".into()));
            }
            let p = map.position(i).ok_or_else(|| Error::Config(format!("subcarrier {i} outside +/-{}", k / 2)))?;
            map.active[p] = true;
        }
        Ok(map)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn index(&self, position: usize) -> i64 {
        let half = (self.k / 2) as i64;
        let p = position as i64;
        if p < half {
            p - half
        } else {
            p - half + 1
        }
    }

    pub fn position(&self, index: i64) -> Option<usize> {
        let half = (self.k / 2) as i64;
        match index {
            0 => None,
            i if (-half..0).contains(&i) => Some((i + half) as usize),
            i if (1..=half).contains(&i) => Some((i + half - 1) as usize),
            _ => None,
        }
    }

    pub fn is_active(&self, index: i64) -> bool {
        self.position(index).is_some_and(|p| self.active[p])
    }

    /// Ground truth on `index`, from its own activity and its mirror's.
    pub fn truth(&self, index: i64) -> Hypothesis {
        Hypothesis::from_activity(self.is_active(index), self.is_active(-index))
    }
}

fn frame_map(frame: &FrameConfig) -> Result<OccupancyMap> {
    match (&frame.active_subcarriers, &frame.users_active) {
        (Some(list), _) => OccupancyMap::from_active_list(frame.k, list),
        (None, Some(users)) => {
            if users.len() != frame.users {
                return Err(Error::Config(format!("users_active has {} entries for {} users", users.len(), frame.users)));
            }
            OccupancyMap::from_users(frame.k, users)
        }
        (None, None) => OccupancyMap::from_users(frame.k, &default_users_active(frame.users)),
    }
}

/// Alternate users on, starting with the first.
fn default_users_active(users: usize) -> Vec<bool> {
    (0..users).map(|u| u % 2 == 0).collect()
}

/// Senses every subcarrier of one frame with the four-level rule and the
/// configured two-level baseline.
pub fn cmd_frame(cfg: &ExperimentConfig) -> Result<Report> {
    let map = frame_map(&cfg.frame)?;
    // Every active subcarrier carries the same power, set by snr1_db.
    let spec = ScenarioSpec { snr2_db: cfg.scenario.snr1_db, ..cfg.scenario.clone() };
    let sc = spec.build()?;
    let baseline = match sc.mode {
        DetectorMode::FourLevel => DetectorMode::TwoLevelBayes,
        other => other,
    };
    let v = sc.variances()?;
    let four = decision_rule(&v, sc.n_packets, DEFAULT_MERGE_TOL);
    let two = two_level_rule(&v, sc.n_packets, baseline)?;
    let sampler = sc.sampler()?;
    let seed = seed_of(cfg);

    let mut rows = Table::new("subcarriers", &["index", "user", "truth", "z", "four_level", "two_level", "warning"]);
    let mut tally_four = TallyMatrix::new();
    let mut tally_two = TallyMatrix::new();
    let (mut warnings, mut exposed_two, mut exposed_four) = (0u64, 0u64, 0u64);
    let block = map.k() / cfg.frame.users.max(1);
    let mut z_by_position = vec![0.0; map.k()];
    for p in 0..map.k() / 2 {
        // Negative index of the pair, sensed jointly with its mirror.
        let index = map.index(p);
        let truth = map.truth(index);
        let mut rng = seed.rng(0, p as u64);
        let (z, z_mirror) = sampler.pair_statistics(truth, &mut rng);
        z_by_position[p] = z;
        z_by_position[map.position(-index).expect("mirror exists")] = z_mirror;
    }
    for (p, &z) in z_by_position.iter().enumerate() {
        let index = map.index(p);
        let truth = map.truth(index);
        let d4 = four.classify(z);
        let d2 = two.classify(z);
        tally_four.record(truth, d4);
        tally_two.record(truth, d2);
        let warning = d4 == Hypothesis::H1;
        warnings += u64::from(warning);
        if truth == Hypothesis::H1 {
            exposed_two += u64::from(!d2.primary_on_k());
            exposed_four += u64::from(d4 == Hypothesis::H0);
        }
        rows.push(vec![
            Cell::Text(index.to_string()),
            ((p / block) as u64).into(),
            truth.label().into(),
            z.into(),
            d4.label().into(),
            d2.label().into(),
            Cell::Text(if warning { "vacant but mirror-active".into() } else { String::new() }),
        ]);
    }

    let mut confusion = Table::new("confusion", &["detector", "truth", "H0", "H1", "H2", "H3"]);
    for (name, t) in [("four-level", &tally_four), (baseline.label().as_str(), &tally_two)] {
        for truth in Hypothesis::ALL {
            let mut row: Vec<Cell> = vec![name.into(), truth.label().into()];
            row.extend(Hypothesis::ALL.iter().map(|d| Cell::Int(t.count(truth, *d))));
            confusion.push(row);
        }
    }

    let mut summary = Table::new("summary", &["quantity", "value"]);
    summary.push(vec!["subcarriers".into(), (map.k() as u64).into()]);
    summary.push(vec!["truth_h1_subcarriers".into(), tally_four.row_total(Hypothesis::H1).into()]);
    summary.push(vec!["four_level_mirror_active_warnings".into(), warnings.into()]);
    summary.push(vec!["four_level_idle_with_active_mirror".into(), exposed_four.into()]);
    summary.push(vec!["two_level_idle_with_active_mirror".into(), exposed_two.into()]);

    let mut report = Report::new("frame", cfg);
    report.notes.push(format!(
        "{warnings} subcarriers flagged vacant but mirror-active; transmitting there leaks into an active mirror"
    ));
    report.notes.push(format!("{exposed_two} two-level idle decisions have an active mirror"));
    report.tables = vec![rows, confusion, summary];
    Ok(report)
}

/// Outage at the scenario's transmitter IRR: closed form, literal form and Monte Carlo.
pub fn cmd_outage(cfg: &ExperimentConfig) -> Result<Report> {
    let sc = cfg.outage.scenario(cfg.scenario.irr_db)?;
    let mc = mc_outage(&sc, cfg.trials, seed_of(cfg))?;
    let mut table = Table::new(
        "outage",
        &["irr_db", "beta_sq", "sigma_x1", "sigma_x2", "gamma_th", "analytic", "verbatim", "mc", "mc_lo", "mc_hi"],
    );
    table.push(vec![
        irr_cell(cfg.scenario.irr_db),
        sc.beta_sq_sec.into(),
        sc.sigma_x1().into(),
        sc.sigma_x2().into(),
        sc.gamma_th().into(),
        analytic_outage(&sc)?.into(),
        literal_outage(&sc)?.into(),
        mc.frequency.into(),
        mc.lower.into(),
        mc.upper.into(),
    ]);
    let mut report = Report::new("outage", cfg);
    report.tables.push(table);
    Ok(report)
}
