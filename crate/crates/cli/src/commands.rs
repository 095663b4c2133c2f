use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use qqual_core::bench::{run_classification, run_factor_table, run_regression, ClassRun, RegCell};
use qqual_core::complexity::{characterize, MetricVector, METRIC_NAMES};
use qqual_core::datagen::{
    gen_classification_set, gen_regression_curve, ClassKind, TargetFunction, REGRESSION_RANGE,
    REGRESSION_SIGMAS,
};
use qqual_core::dvcs::{
    attach_qualifier, bundled_corpus, ingest, matched_controls, refit_dvcs_qualifier, regime_map,
    run_campaign, t_trend, validate_sets, write_outcomes, write_sets, ControlMode, KinematicSet,
    ToyHarmonic, ValidationReport,
};
use qqual_core::geometry::sign_agreement;
use qqual_core::perfmetrics::{classification_efficiency, ConfusionMatrix};
use qqual_core::qualifier::{
    eval_qualifier, fit_qualifier, prediction_rms, published_table, zero_crossing_centers,
    QualifierCorpusEntry, QualifierTable,
};

use crate::config::RunConfig;
use crate::svg;

/// Failure classes, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Config(String),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "validation failed: {m}"),
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<qqual_core::Error> for Failure {
    fn from(e: qqual_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

/// Output directory of one run; every file of the run is written here.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> qqual_core::Result<()>,
    ) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, buf)
    }

    /// resolved_config.json plus report.md with the config appended.
    pub fn finish(&self, command: &str, cfg: &RunConfig, mut report: String) -> anyhow::Result<()> {
        let json = serde_json::to_string_pretty(cfg)?;
        self.write("resolved_config.json", format!("{json}\n"))?;
        let _ = write!(
            report,
            "\n## Resolved configuration\n\nRe-run with `qqual {command} --config resolved_config.json`.\n\n```json\n{json}\n```\n"
        );
        self.write("report.md", report)
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("{e}"))?)
}

fn cm_cells(cm: &ConfusionMatrix) -> [String; 4] {
    [
        cm.counts[0][0],
        cm.counts[0][1],
        cm.counts[1][0],
        cm.counts[1][1],
    ]
    .map(|c| c.to_string())
}

fn class_rows(label: &str, runs: &[ClassRun]) -> Vec<Vec<String>> {
    runs.iter()
        .map(|r| {
            let mut row = vec![label.to_string(), r.seed.to_string()];
            row.extend(cm_cells(&r.cdnn));
            row.extend(cm_cells(&r.qdnn));
            row.push(r.cdnn_efficiency.to_string());
            row.push(r.qdnn_efficiency.to_string());
            row
        })
        .collect()
}

const CLASS_LEDGER_HEADER: [&str; 12] = [
    "config",
    "seed",
    "cdnn_00",
    "cdnn_01",
    "cdnn_10",
    "cdnn_11",
    "qdnn_00",
    "qdnn_01",
    "qdnn_10",
    "qdnn_11",
    "cdnn_efficiency",
    "qdnn_efficiency",
];

/// Efficiency of the two published confusion matrices, as a standing check
/// of the metric definition.
fn published_matrix_note() -> String {
    let q =
        classification_efficiency(&ConfusionMatrix::new([[65, 6], [9, 70]])).unwrap_or(f64::NAN);
    let c =
        classification_efficiency(&ConfusionMatrix::new([[70, 24], [4, 52]])).unwrap_or(f64::NAN);
    format!(
        "Efficiency is macro-averaged precision. On the published matrices it gives {q:.4} for the QDNN \
         (published 0.8998) and {c:.4} for the CDNN. The published CDNN value is 0.8144; no standard \
         confusion-matrix statistic reproduces it, and the 7e-4 gap is left as reported.\n"
    )
}

pub fn bench_class(cfg: &RunConfig, out: &RunDir) -> CmdResult {
    let bc = &cfg.bench_class;
    info!("classification base run, ensemble {}", bc.base.ensemble);
    let base = run_classification(&bc.base)?;
    let mut rows = class_rows("base", &base.runs);
    let mut report = String::from("# Classification benchmark\n\n");
    let _ = writeln!(
        report,
        "Base dataset: {}, {} training / {} test samples, {} features, noise {}σ, class offset {}.\n",
        bc.base.kind, bc.base.n_train, bc.base.n_test, bc.base.n_features, bc.base.noise_level, bc.base.class_offset
    );
    let _ = writeln!(
        report,
        "Ensemble mean over {} seeds: CDNN {:.4}, QDNN {:.4}. QDNN ahead: {}.\n",
        base.runs.len(),
        base.mean_cdnn,
        base.mean_qdnn,
        if base.mean_qdnn > base.mean_cdnn {
            "yes"
        } else {
            "no"
        }
    );
    report.push_str(&published_matrix_note());

    if bc.factor_table {
        info!("four-factor table");
        let table = run_factor_table(&bc.base);
        let mut t_rows = Vec::new();
        report.push_str("\n## Factor table\n\n| Factor | Change | CDNN | QDNN | Ratio change |\n|---|---|---|---|---|\n");
        for row in &table {
            match row {
                Ok(r) => {
                    let c = format!("{:.4} -> {:.4}", r.cdnn.0, r.cdnn.1);
                    let q = format!("{:.4} -> {:.4}", r.qdnn.0, r.qdnn.1);
                    let pct = format!("{:+.1}%", 100.0 * r.ratio_change);
                    let _ = writeln!(
                        report,
                        "| {} | {} | {c} | {q} | {pct} |",
                        r.factor, r.change
                    );
                    t_rows.push(vec![r.factor.clone(), r.change.clone(), c, q, pct]);
                }
                Err(e) => {
                    warn!("{e}");
                    let _ = writeln!(report, "| failed: {e} | | | | |");
                }
            }
        }
        out.write(
            "table1.csv",
            csv_bytes(
                &["factor", "change", "cdnn", "qdnn", "ratio_change"],
                &t_rows,
            )?,
        )?;
    }
    rows.sort_by(|a, b| a[0].cmp(&b[0]));
    out.write("ledger.csv", csv_bytes(&CLASS_LEDGER_HEADER, &rows)?)?;
    out.finish("bench-class", cfg, report)?;
    Ok(())
}

/// bench-reg ledger row: one checkpoint of one cell, with the cell's metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegLedgerRow {
    pub dataset: String,
    pub sigma: f64,
    pub seed: u64,
    pub epoch: usize,
    pub m_cdnn: f64,
    pub m_qdnn: f64,
    pub xi: f64,
    pub reference: bool,
    pub nonlinearity: f64,
    pub frequency_complexity: f64,
    pub fractal_dimension: f64,
    pub mutual_information: f64,
    pub fourier_complexity: f64,
}

impl RegLedgerRow {
    fn metrics(&self) -> MetricVector {
        MetricVector::from_array([
            self.nonlinearity,
            self.frequency_complexity,
            self.fractal_dimension,
            self.mutual_information,
            self.fourier_complexity,
        ])
    }
}

fn reg_rows(cells: &[RegCell]) -> Vec<RegLedgerRow> {
    cells
        .iter()
        .flat_map(|c| {
            let m = c.metrics;
            c.records.iter().map(move |r| RegLedgerRow {
                dataset: r.dataset.clone(),
                sigma: r.sigma,
                seed: r.seed,
                epoch: r.epoch,
                m_cdnn: r.m_cdnn,
                m_qdnn: r.m_qdnn,
                xi: r.xi,
                reference: qqual_core::bench::is_reference_cell(c.function, c.sigma, r.epoch),
                nonlinearity: m.nonlinearity,
                frequency_complexity: m.frequency_complexity,
                fractal_dimension: m.fractal_dimension,
                mutual_information: m.mutual_information,
                fourier_complexity: m.fourier_complexity,
            })
        })
        .collect()
}

pub fn read_reg_ledger(path: &Path) -> anyhow::Result<Vec<RegLedgerRow>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("{} line {}", path.display(), i + 2)))
        .collect()
}

pub fn bench_reg(cfg: &RunConfig, out: &RunDir) -> CmdResult {
    let rc = &cfg.bench_reg;
    info!(
        "regression grid: {} functions × {} noise levels",
        rc.functions.len(),
        rc.sigmas.len()
    );
    let results = run_regression(rc);
    let mut cells = Vec::new();
    let mut report = String::from("# Regression benchmark\n\n");
    for r in results {
        match r {
            Ok(c) => cells.push(c),
            Err(e) => {
                warn!("{e}");
                let _ = writeln!(report, "- failed cell: {e}");
            }
        }
    }
    if cells.is_empty() {
        return Err(Failure::Runtime(anyhow!("every regression cell failed")));
    }
    let rows = reg_rows(&cells);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(anyhow::Error::from)?;
    }
    out.write("ledger.csv", w.into_inner().map_err(|e| anyhow!("{e}"))?)?;

    let last = *rc.checkpoints.last().unwrap();
    let _ = writeln!(
        report,
        "{} cells, {} points each, checkpoints {:?}. M_reg is the trapezoidal L1 gap to the noiseless curve; Ξ = M_CDNN / M_QDNN − 1.\n",
        cells.len(),
        rc.n_points,
        rc.checkpoints
    );
    let _ = writeln!(
        report,
        "| function | σ | M_CDNN | M_QDNN | Ξ at epoch {last} | |\n|---|---|---|---|---|---|"
    );
    for c in &cells {
        let r = c.records.last().unwrap();
        let flag = if qqual_core::bench::is_reference_cell(c.function, c.sigma, r.epoch) {
            "reference cell"
        } else {
            ""
        };
        let _ = writeln!(
            report,
            "| {} | {} | {:.4} | {:.4} | {:+.3} | {flag} |",
            c.function, c.sigma, r.m_cdnn, r.m_qdnn, r.xi
        );
        let title = format!(
            "{}  σ = {}  epoch {}  Ξ = {:+.3}",
            c.function, c.sigma, r.epoch, r.xi
        );
        out.write(
            &format!("reg_{}_s{}.svg", c.function, c.sigma),
            svg::regression_svg(
                &title,
                &c.xs,
                &c.ys_true,
                &c.ys_noisy,
                &c.pred_cdnn,
                &c.pred_qdnn,
            ),
        )?;
    }
    if let Some(c) = cells
        .iter()
        .find(|c| c.function == TargetFunction::Cos4x && c.sigma == 1.0)
    {
        report.push_str("\nReference cell (cos 4x, σ = 1) by epoch: ");
        let parts: Vec<String> = c
            .records
            .iter()
            .map(|r| format!("{}: {:+.3}", r.epoch, r.xi))
            .collect();
        let _ = writeln!(report, "{}.", parts.join(", "));
    }
    out.finish("bench-reg", cfg, report)?;
    Ok(())
}

/// First two numeric columns of a headed CSV, as (x, y).
pub fn read_xy(path: &Path) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> anyhow::Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    anyhow!(
                        "{} line {}: column {} is not a number",
                        path.display(),
                        i + 2,
                        k + 1
                    )
                })
        };
        xs.push(num(0)?);
        ys.push(num(1)?);
    }
    Ok((xs, ys))
}

fn table_markdown(t: &QualifierTable) -> String {
    let mut s = format!(
        "α = {}\n\n| metric | center | coefficients |\n|---|---|---|\n",
        t.alpha
    );
    for (name, row) in METRIC_NAMES.iter().zip(&t.rows) {
        let coef: Vec<String> = row
            .coefficients
            .iter()
            .map(|c| format!("{c:.4e}"))
            .collect();
        let _ = writeln!(s, "| {name} | {} | {} |", row.center, coef.join(", "));
    }
    s
}

/// Corpus drawn along one direction through the table's centers, labelled
/// by the table itself.
fn self_check_corpus(table: &QualifierTable, seed: u64) -> Vec<QualifierCorpusEntry> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dirs = [0.2, 10.0, 0.3, 0.4, 1500.0];
    let centers = table.centers();
    let mut corpus = Vec::new();
    for epoch in [10u32, 20, 30, 40, 50] {
        for _ in 0..20 {
            let z: f64 = rng.random_range(-1.0..1.0);
            let metrics =
                MetricVector::from_array(std::array::from_fn(|j| centers[j] + dirs[j] * z));
            corpus.push(QualifierCorpusEntry {
                metrics,
                xi: eval_qualifier(table, &metrics, epoch as f64),
                epoch,
            });
        }
    }
    corpus
}

pub const SELF_CHECK_RMS: f64 = 1e-2;

pub fn qualify(cfg: &RunConfig, out: &RunDir) -> CmdResult {
    let qc = &cfg.qualify;
    let table = published_table();
    let mut report = String::from("# Qualifier\n\n## Bundled table\n\n");
    report.push_str(&table_markdown(&table));

    let refit = match &qc.refit_ledger {
        None => None,
        Some(p) if !p.exists() => {
            return Err(Failure::Config(format!(
                "refit ledger {} not found",
                p.display()
            )))
        }
        Some(p) => {
            let rows = read_reg_ledger(p)?;
            let corpus: Vec<QualifierCorpusEntry> = rows
                .iter()
                .filter(|r| r.epoch >= 1)
                .map(|r| QualifierCorpusEntry {
                    metrics: r.metrics(),
                    xi: r.xi,
                    epoch: r.epoch as u32,
                })
                .collect();
            let mut epochs: Vec<u32> = corpus.iter().map(|e| e.epoch).collect();
            epochs.sort_unstable();
            epochs.dedup();
            let (t, diag) = fit_qualifier(&corpus, &epochs, zero_crossing_centers(&corpus)?)?;
            let _ = writeln!(
                report,
                "\n## Refit from {}\n\n{} entries, residual RMS {:.4}.\n",
                p.display(),
                corpus.len(),
                diag.rms_residual
            );
            for w in &diag.warnings {
                let _ = writeln!(report, "- warning: {w}");
            }
            report.push_str(&table_markdown(&t));
            out.write("refit_table.json", t.to_json()?)?;
            Some(t)
        }
    };

    let mut inputs: Vec<(String, MetricVector)> =
        vec![("centered".into(), MetricVector::from_array(table.centers()))];
    if qc.inputs.is_empty() {
        for (k, f) in TargetFunction::ALL.iter().enumerate() {
            let c = gen_regression_curve(
                *f,
                100,
                REGRESSION_RANGE,
                qc.sigma,
                qc.seed.wrapping_add(k as u64),
            )?;
            inputs.push((
                format!("{f}_s{}", qc.sigma),
                characterize(&c.xs, &c.ys_noisy)?,
            ));
        }
    } else {
        for p in &qc.inputs {
            let (xs, ys) = read_xy(p)?;
            inputs.push((p.display().to_string(), characterize(&xs, &ys)?));
        }
    }
    let mut rows = Vec::new();
    let _ = writeln!(
        report,
        "\n## Predictions at epoch {}\n\n| input | Ξ̂ (bundled) | Ξ̂ (refit) |\n|---|---|---|",
        qc.epoch
    );
    for (name, m) in &inputs {
        let a = eval_qualifier(&table, m, qc.epoch);
        let b = refit.as_ref().map(|t| eval_qualifier(t, m, qc.epoch));
        let _ = writeln!(
            report,
            "| {name} | {a:+.4e} | {} |",
            b.map_or("-".into(), |v| format!("{v:+.4e}"))
        );
        let mut row = vec![name.clone(), qc.epoch.to_string()];
        row.extend(m.to_array().iter().map(|v| v.to_string()));
        row.push(a.to_string());
        row.push(b.map_or(String::new(), |v| v.to_string()));
        rows.push(row);
    }
    let mut header = vec!["input", "epoch"];
    header.extend(METRIC_NAMES);
    header.extend(["xi_hat_bundled", "xi_hat_refit"]);
    out.write("ledger.csv", csv_bytes(&header, &rows)?)?;

    if qc.self_check {
        let corpus = self_check_corpus(&table, qc.seed);
        let (fit, _) = fit_qualifier(&corpus, &[10, 20, 30, 40, 50], table.centers())?;
        let rms = prediction_rms(&table, &fit, &corpus);
        let verdict = if rms < SELF_CHECK_RMS { "PASS" } else { "FAIL" };
        let _ = writeln!(
            report,
            "\n## Round-trip check\n\n{verdict}: refit on {} entries generated from the bundled table reproduces it with prediction RMS {rms:.3e} (threshold {SELF_CHECK_RMS}).",
            corpus.len()
        );
    }
    out.finish("qualify", cfg, report)?;
    Ok(())
}

fn load_sets(path: Option<&Path>) -> Result<Vec<KinematicSet>, Failure> {
    match path {
        None => Ok(bundled_corpus()),
        Some(p) => ingest(p)
            .map(|(s, _)| s)
            .map_err(|e| Failure::Validation(format!("{}: {e}", p.display()))),
    }
}

fn lambda_tag(l: f64) -> String {
    format!("{l}")
}

pub fn dvcs(cfg: &RunConfig, out: &RunDir) -> CmdResult {
    let dc = &cfg.dvcs;
    let sets = load_sets(dc.data.as_deref())?;
    let check = validate_sets(&sets, dc.data.is_none());
    let mut report = format!(
        "# DVCS campaign\n\n{} kinematic sets, {} points.\n\n",
        sets.len(),
        check.ingest.total_points
    );
    for issue in &check.issues {
        warn!("{issue}");
        let _ = writeln!(report, "- data issue: {issue}");
    }
    let c = &dc.campaign;
    info!(
        "campaign: {} sets × {} noise scales × {} replicas",
        sets.len(),
        c.lambdas.len(),
        c.ensemble
    );
    let mut campaign = run_campaign(&sets, &ToyHarmonic, c)?;
    for f in &campaign.failures {
        warn!("{f}");
        let _ = writeln!(report, "- failed set: {f}");
    }
    match refit_dvcs_qualifier(&campaign, c) {
        Ok((table, diag)) => {
            attach_qualifier(&mut campaign, &table);
            out.write("qualifier_table.json", table.to_json()?)?;
            let _ = writeln!(
                report,
                "\nQualifier refit on the campaign: residual RMS {:.4}.\n",
                diag.rms_residual
            );
            report.push_str(&table_markdown(&table));
        }
        Err(e) => {
            warn!("qualifier refit failed: {e}");
            let _ = writeln!(
                report,
                "\nQualifier refit failed ({e}); maps carry Ξ only.\n"
            );
        }
    }
    out.write_with("ledger.csv", |w| write_outcomes(&campaign.outcomes, w))?;

    let epoch = c.final_epoch();
    let mut stats = Vec::new();
    let _ = writeln!(
        report,
        "\n## Regime maps at epoch {epoch}\n\n| λ | Area(Ξ>0) | Area(Ξ<0) | Area(Ξ̂>0) | sign agreement |\n|---|---|---|---|---|"
    );
    for &l in &c.lambdas {
        let map = match regime_map(&campaign, l, epoch, dc.resolution, dc.smoothing) {
            Ok(m) => m,
            Err(e) => {
                warn!("λ = {l}: {e}");
                let _ = writeln!(report, "| {l} | failed: {e} | | | |");
                continue;
            }
        };
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.4}"));
        let _ = writeln!(
            report,
            "| {l} | {:.4} | {:.4} | {} | {} |",
            map.area_positive,
            map.area_negative,
            opt(map.hat_area_positive),
            opt(map.sign_agreement)
        );
        let self_agree = sign_agreement(&map.xi, &map.xi)?;
        stats.push(vec![
            "map".into(),
            l.to_string(),
            epoch.to_string(),
            map.area_positive.to_string(),
            map.area_negative.to_string(),
            map.hat_area_positive
                .map_or(String::new(), |v| v.to_string()),
            map.sign_agreement.map_or(String::new(), |v| v.to_string()),
        ]);
        stats.push(vec![
            "self_check".into(),
            l.to_string(),
            epoch.to_string(),
            String::new(),
            String::new(),
            String::new(),
            self_agree.to_string(),
        ]);
        let tag = lambda_tag(l);
        out.write_with(&format!("xi_grid_lambda_{tag}.csv"), |w| {
            map.xi.write_csv(w)
        })?;
        if let Some(h) = &map.xi_hat {
            out.write_with(&format!("xi_hat_grid_lambda_{tag}.csv"), |w| h.write_csv(w))?;
        }
        let mut inset = vec![
            format!("λ = {l}, epoch {epoch}"),
            format!("Area(Ξ>0) = {:.3}", map.area_positive),
            format!("Area(Ξ<0) = {:.3}", map.area_negative),
        ];
        if let (Some(a), Some(h)) = (map.sign_agreement, map.hat_area_positive) {
            inset.push(format!("Area(Ξ̂>0) = {h:.3}"));
            inset.push(format!("agreement = {a:.3}"));
        }
        inset.push("black: Ξ = 0".into());
        inset.push("red: Ξ̂ = 0".into());
        let svg = svg::regime_map_svg(
            &format!("Ξ_DVCS over (Q², x_B), λ = {l}"),
            &map.xi,
            &[(&map.boundary, "#000000"), (&map.hat_boundary, "#d62728")],
            &inset,
        );
        out.write(&format!("map_lambda_{tag}.svg"), svg)?;

        let slice = campaign.slice(l, epoch);
        let trend = t_trend(&slice);
        let mut t_rows: Vec<Vec<String>> = trend
            .raw
            .iter()
            .map(|(t, x)| vec!["raw".into(), t.to_string(), x.to_string()])
            .collect();
        if let Some(s) = &trend.smoothed {
            t_rows.extend(
                s.iter()
                    .map(|(t, x)| vec!["smoothed".into(), t.to_string(), x.to_string()]),
            );
        }
        out.write(
            &format!("t_trend_lambda_{tag}.csv"),
            csv_bytes(&["kind", "t", "xi"], &t_rows)?,
        )?;
        let zc: Vec<String> = trend
            .zero_crossings
            .iter()
            .map(|z| format!("{z:.3}"))
            .collect();
        let _ = writeln!(
            report,
            "\nλ = {l}: t-trend zero crossings at t = [{}].",
            zc.join(", ")
        );
        for mode in [
            ControlMode::UncertaintyQuantiles(dc.control_quantiles),
            ControlMode::DensityTopFraction(dc.control_density_fraction),
        ] {
            match matched_controls(&slice, mode) {
                Ok(r) => {
                    for g in &r.groups {
                        let zc: Vec<String> = g
                            .trend
                            .zero_crossings
                            .iter()
                            .map(|z| format!("{z:.3}"))
                            .collect();
                        let _ = writeln!(
                            report,
                            "- control {}: {} sets, zero crossings [{}]",
                            g.label,
                            g.n_sets,
                            zc.join(", ")
                        );
                    }
                    for n in &r.notes {
                        let _ = writeln!(report, "- control note: {n}");
                    }
                }
                Err(e) => {
                    let _ = writeln!(report, "- control {mode:?} failed: {e}");
                }
            }
        }
    }
    out.write(
        "stats.csv",
        csv_bytes(
            &[
                "row",
                "lambda",
                "epoch",
                "area_positive",
                "area_negative",
                "hat_area_positive",
                "sign_agreement",
            ],
            &stats,
        )?,
    )?;
    out.finish("dvcs", cfg, report)?;
    Ok(())
}

pub fn render_validation(report: &ValidationReport) -> String {
    let mut s = String::new();
    for (exp, n) in &report.ingest.points_per_experiment {
        let sets = report
            .ingest
            .sets_per_experiment
            .get(exp)
            .copied()
            .unwrap_or(0);
        let _ = writeln!(s, "{exp}: {n} points in {sets} sets");
    }
    let _ = writeln!(s, "total: {} points", report.ingest.total_points);
    for issue in &report.issues {
        let _ = writeln!(s, "issue: {issue}");
    }
    s
}

/// Validates a data file (or the bundled corpus) and prints the report.
/// `full` additionally checks the published per-experiment counts.
pub fn validate_data(path: Option<&Path>, full: bool) -> CmdResult {
    let sets = load_sets(path)?;
    let report = validate_sets(&sets, full || path.is_none());
    if sets.is_empty() {
        warn!("no data rows found");
    }
    print!("{}", render_validation(&report));
    if report.ok() {
        Ok(())
    } else {
        Err(Failure::Validation(format!(
            "{} issue(s)",
            report.issues.len()
        )))
    }
}

pub fn gen_data(cfg: &RunConfig, out: &RunDir) -> CmdResult {
    let g = &cfg.gen_data;
    out.write_with("dvcs_corpus.csv", |w| write_sets(&bundled_corpus(), w))?;
    for (k, f) in TargetFunction::ALL.iter().enumerate() {
        for (j, &s) in REGRESSION_SIGMAS.iter().enumerate() {
            let seed = g
                .seed
                .wrapping_add((k * REGRESSION_SIGMAS.len() + j) as u64);
            let c = gen_regression_curve(*f, g.n_points, REGRESSION_RANGE, s, seed)?;
            out.write_with(&format!("regression/{f}_s{s}.csv"), |w| c.write_csv(w))?;
        }
    }
    for kind in [ClassKind::OneFunction, ClassKind::ThreeFunction] {
        let d = gen_classification_set(kind, g.class_samples, 8, 0.05, g.seed)?;
        out.write_with(&format!("classification/{kind}.csv"), |w| d.write_csv(w))?;
    }
    let report = format!(
        "# Generated data\n\n- dvcs_corpus.csv: bundled synthetic DVCS corpus\n- regression/: {} curves\n- classification/: 1func and 3func sets, {} samples, 8 features\n",
        TargetFunction::ALL.len() * REGRESSION_SIGMAS.len(),
        g.class_samples
    );
    out.finish("gen-data", cfg, report)?;
    Ok(())
}
