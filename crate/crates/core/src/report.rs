//! Report assembly and rendering for the command line.
//!
//! Every report is a plain serde value. JSON goes through
//! `serde_json::Value`, whose maps keep keys sorted, so re-emitting a parsed
//! report reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::alloc::{allocate, Algorithm, Allocation};
use crate::config::{Policy, RunConfig};
use crate::error::Error;
use crate::ir::Kernel;
use crate::oracle;
use crate::reuse::{analyze_all, ReuseInfo, ReuseTable};
use crate::sim::{steady_state_cycles, window_index, CycleReport, Residency};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(Format::Table),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format `{s}`")),
        }
    }
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("reports serialize");
    let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
    s.push('\n');
    s
}

/// Columns padded to their widest cell.
fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            width[i] = width[i].max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut l = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                l.push_str("  ");
            }
            let pad = width[i] - c.chars().count();
            l.push_str(c);
            l.push_str(&" ".repeat(pad));
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn render(format: Format, title: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    match format {
        Format::Csv => csv_table(header, rows),
        _ => {
            let mut s = String::new();
            if !title.is_empty() {
                s.push_str(title);
                s.push('\n');
            }
            s.push_str(&text_table(header, rows));
            s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub kernel: String,
    pub loops: Vec<String>,
    pub iteration_points: u64,
    pub arrays: Vec<ReuseInfo>,
}

pub fn analyze(k: &Kernel) -> Result<AnalyzeReport, Error> {
    let t = analyze_all(k);
    Ok(AnalyzeReport {
        kernel: k.name.clone(),
        loops: k.loops.iter().map(|l| l.index.clone()).collect(),
        iteration_points: k.iteration_space_size(0)?,
        arrays: t.infos,
    })
}

impl AnalyzeReport {
    pub fn render(&self, format: Format) -> String {
        if format == Format::Json {
            return to_json(self);
        }
        let header = ["kernel", "array", "refs", "carrier", "alpha", "total", "after", "save", "bc"];
        let rows: Vec<Vec<String>> = self
            .arrays
            .iter()
            .map(|i| {
                vec![
                    self.kernel.clone(),
                    i.array.clone(),
                    i.refs.len().to_string(),
                    i.carrier.map(|c| self.loops[c].clone()).unwrap_or_else(|| "-".into()),
                    i.alpha.to_string(),
                    i.total_accesses.to_string(),
                    i.after_accesses.to_string(),
                    i.save.to_string(),
                    i.bc.to_string(),
                ]
            })
            .collect();
        let title = format!(
            "kernel {} ({} loops, {} iteration points)",
            self.kernel,
            self.loops.len(),
            self.iteration_points
        );
        render(format, &title, &header, &rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AllocateReport {
    pub kernel: String,
    pub budget: u64,
    pub allocations: Vec<Allocation>,
}

pub fn allocate_report(k: &Kernel, algs: &[Algorithm], cfg: &RunConfig) -> Result<AllocateReport, Error> {
    let t = analyze_all(k);
    let allocations = algs
        .iter()
        .map(|&a| allocate(a, k, &t, cfg.nr, &cfg.latencies, cfg.rr_accounting))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AllocateReport { kernel: k.name.clone(), budget: cfg.nr, allocations })
}

fn join(values: impl IntoIterator<Item = u64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn beta_cell(beta: &BTreeMap<String, u64>, order: &[String]) -> String {
    join(order.iter().map(|n| beta.get(n).copied().unwrap_or(0)))
}

impl AllocateReport {
    pub fn render(&self, format: Format) -> String {
        if format == Format::Json {
            return to_json(self);
        }
        let order: Vec<String> = self.allocations.first().map(|a| a.names.clone()).unwrap_or_default();
        let header_regs = format!("registers ({})", order.join(", "));
        let header = ["kernel", "algorithm", header_regs.as_str(), "used", "budget"];
        let rows: Vec<Vec<String>> = self
            .allocations
            .iter()
            .map(|a| {
                vec![
                    self.kernel.clone(),
                    a.algorithm.to_string(),
                    beta_cell(&a.as_map(), &order),
                    a.used().to_string(),
                    a.budget.to_string(),
                ]
            })
            .collect();
        render(format, "", &header, &rows)
    }
}

/// Registers and cycle counts reported for one kernel in the published
/// evaluation, in the published column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Published {
    pub order: Vec<String>,
    pub required: Vec<u64>,
    /// Per version v1..v3; `None` where no allocation was given.
    pub beta: Vec<Option<Vec<u64>>>,
    /// Whole-run cycles per version.
    pub cycles: Vec<u64>,
}

pub fn published(kernel: &str) -> Option<Published> {
    type Row = (&'static str, [&'static str; 3], [u64; 3], [[u64; 3]; 3], [u64; 3]);
    const TABLE: [Row; 6] = [
        ("fir", ["out", "coeff", "in"], [1, 52, 51], [[1, 52, 1], [1, 52, 11], [1, 12, 51]], [160_769, 141_334, 97_291]),
        ("decfir", ["out", "coeff", "in"], [1, 128, 127], [[1, 1, 1], [1, 62, 1], [1, 1, 62]], [777_490, 777_490, 716_139]),
        ("imi", ["frame", "img0", "img1"], [1, 48, 48], [[1, 48, 1], [1, 48, 15], [1, 31, 31]], [4_788, 3_800, 2_849]),
        ("mat", ["c", "a", "b"], [1, 16, 256], [[1, 16, 1], [1, 16, 47], [1, 16, 47]], [14_625, 13_809, 13_809]),
        ("pat", ["hits", "pat", "str"], [1, 80, 79], [[1, 1, 1], [1, 62, 1], [1, 1, 62]], [250_879, 250_879, 186_368]),
        ("bic", ["corr", "tmpl", "img"], [1, 64, 512], [[1, 56, 1], [1, 56, 7], [1, 56, 7]], [633_024, 579_720, 579_720]),
    ];
    if kernel == "example" {
        let order = ["c", "a", "d", "b", "e"];
        return Some(Published {
            order: order.iter().map(|s| s.to_string()).collect(),
            required: vec![20, 30, 30, 600, 1],
            beta: vec![Some(vec![20, 30, 1, 1, 1]), Some(vec![20, 30, 12, 1, 1]), None],
            cycles: vec![1800, 1560, 1184],
        });
    }
    TABLE.iter().find(|r| r.0 == kernel).map(|(_, order, req, beta, cycles)| Published {
        order: order.iter().map(|s| s.to_string()).collect(),
        required: req.to_vec(),
        beta: beta.iter().map(|b| Some(b.to_vec())).collect(),
        cycles: cycles.to_vec(),
    })
}

fn reduction(base: u64, x: u64) -> f64 {
    if base == 0 {
        return 0.0;
    }
    let pct = (base as f64 - x as f64) / base as f64 * 100.0;
    (pct * 10.0).round() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub version: String,
    pub algorithm: Algorithm,
    pub beta: BTreeMap<String, u64>,
    pub registers_used: u64,
    pub memory_cycles: u64,
    /// `(v1 - this) / v1`, percent, one decimal.
    pub reduction_pct: f64,
    pub t_exec: u64,
    pub per_level: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub kernel: String,
    pub budget: u64,
    pub policy: Policy,
    pub rr_accounting: crate::config::RrAccounting,
    pub inner_iterations: u64,
    /// Arrays in the column order used for register vectors.
    pub order: Vec<String>,
    pub required: Vec<u64>,
    pub rows: Vec<CompareRow>,
    pub published: Option<Published>,
    /// Differences from the published figures.
    pub notes: Vec<String>,
}

pub fn compare(k: &Kernel, cfg: &RunConfig) -> Result<CompareReport, Error> {
    let t = analyze_all(k);
    let sim = cfg.sim();
    let reports: Vec<CycleReport> = Algorithm::ALL
        .iter()
        .map(|&a| {
            let alloc = allocate(a, k, &t, cfg.nr, &cfg.latencies, cfg.rr_accounting)?;
            Ok(steady_state_cycles(k, &t, &alloc, &sim))
        })
        .collect::<Result<_, Error>>()?;
    let base = reports[0].memory_cycles;
    let rows: Vec<CompareRow> = reports
        .iter()
        .map(|r| CompareRow {
            version: r.algorithm.version().to_string(),
            algorithm: r.algorithm,
            beta: r.beta.clone(),
            registers_used: r.registers_used,
            memory_cycles: r.memory_cycles,
            reduction_pct: reduction(base, r.memory_cycles),
            t_exec: r.t_exec,
            per_level: r.per_level.clone(),
        })
        .collect();
    let published = published(&k.name).filter(|p| p.order.iter().all(|n| t.by_name(n).is_some()));
    let order: Vec<String> = match &published {
        Some(p) => p.order.clone(),
        None => t.iter().map(|i| i.array.clone()).collect(),
    };
    let required: Vec<u64> = order.iter().map(|n| t.by_name(n).map_or(0, |i| i.alpha)).collect();
    let mut notes = Vec::new();
    if let Some(p) = &published {
        if p.required != required {
            notes.push(format!(
                "required registers ({}) differ from the published ({})",
                join(required.iter().copied()),
                join(p.required.iter().copied())
            ));
        }
        for (row, pb) in rows.iter().zip(&p.beta) {
            let ours: Vec<u64> = order.iter().map(|n| row.beta[n]).collect();
            if let Some(pb) = pb {
                if &ours != pb {
                    notes.push(format!(
                        "{} allocation ({}) differs from the published ({})",
                        row.version,
                        join(ours),
                        join(pb.iter().copied())
                    ));
                }
            }
        }
    }
    Ok(CompareReport {
        kernel: k.name.clone(),
        budget: cfg.nr,
        policy: cfg.policy,
        rr_accounting: cfg.rr_accounting,
        inner_iterations: reports[0].inner_iterations,
        order,
        required,
        rows,
        published,
        notes,
    })
}

impl CompareReport {
    pub fn cycles(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.memory_cycles).collect()
    }

    fn table_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let (pub_beta, pub_cycles, pub_pct) = match &self.published {
                    Some(p) => (
                        p.beta[i].as_ref().map_or("-".into(), |b| join(b.iter().copied())),
                        p.cycles[i].to_string(),
                        if i == 0 { "-".into() } else { format!("{:.1}%", reduction(p.cycles[0], p.cycles[i])) },
                    ),
                    None => ("-".into(), "-".into(), "-".into()),
                };
                vec![
                    self.kernel.clone(),
                    r.version.clone(),
                    r.algorithm.to_string(),
                    beta_cell(&r.beta, &self.order),
                    r.registers_used.to_string(),
                    r.memory_cycles.to_string(),
                    if i == 0 { "-".into() } else { format!("{:.1}%", r.reduction_pct) },
                    r.t_exec.to_string(),
                    pub_beta,
                    pub_cycles,
                    pub_pct,
                ]
            })
            .collect()
    }

    pub const CSV_HEADER: [&'static str; 11] = [
        "kernel",
        "version",
        "algorithm",
        "registers",
        "used",
        "memory_cycles",
        "reduction",
        "t_exec",
        "published_registers",
        "published_cycles",
        "published_reduction",
    ];

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => to_json(self),
            Format::Csv => csv_table(&Self::CSV_HEADER, &self.table_rows()),
            Format::Table => {
                let regs = format!("registers ({})", self.order.join(", "));
                let mut header = Self::CSV_HEADER.to_vec();
                header[3] = &regs;
                let title = format!(
                    "kernel {}  NR={}  policy={}  rr={}  window={} inner iterations  required ({})",
                    self.kernel,
                    self.budget,
                    self.policy,
                    self.rr_accounting,
                    self.inner_iterations,
                    join(self.required.iter().copied())
                );
                let mut s = render(Format::Table, &title, &header, &self.table_rows());
                for n in &self.notes {
                    let _ = writeln!(s, "note: {n}");
                }
                s
            }
        }
    }
}

/// Renders several comparisons as one document.
pub fn render_compares(reports: &[CompareReport], format: Format) -> String {
    match format {
        Format::Json => to_json(&reports),
        Format::Csv => {
            let rows: Vec<Vec<String>> = reports.iter().flat_map(|r| r.table_rows()).collect();
            csv_table(&CompareReport::CSV_HEADER, &rows)
        }
        Format::Table => reports.iter().map(|r| r.render(Format::Table)).collect::<Vec<_>>().join("\n"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub quantity: String,
    pub subject: String,
    pub analytic: String,
    pub oracle: String,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub kernel: String,
    pub checks: Vec<Check>,
    pub all_agree: bool,
}

fn check(quantity: &str, subject: &str, analytic: impl ToString, oracle: impl ToString) -> Check {
    let (a, o) = (analytic.to_string(), oracle.to_string());
    Check { quantity: quantity.into(), subject: subject.into(), agree: a == o, analytic: a, oracle: o }
}

fn carrier_name(k: &Kernel, c: Option<usize>) -> String {
    c.map_or("-".to_string(), |c| k.loops[c].index.clone())
}

/// Reuse metrics, then residency and cycles for every allocator under
/// both residency policies, each against the brute-force oracle.
pub fn verify(k: &Kernel, cfg: &RunConfig) -> Result<VerifyReport, Error> {
    let t: ReuseTable = analyze_all(k);
    let o = oracle::oracle_reuse_all(k, cfg.cap)?;
    let mut checks = Vec::new();
    for (info, or) in t.iter().zip(&o) {
        let a = info.array.as_str();
        checks.push(check("carrier", a, carrier_name(k, info.carrier), carrier_name(k, or.carrier)));
        checks.push(check("alpha", a, info.alpha, or.alpha));
        checks.push(check("total", a, info.total_accesses, or.total));
        checks.push(check("after", a, info.after_accesses, or.after));
    }
    for alg in Algorithm::ALL {
        let alloc = allocate(alg, k, &t, cfg.nr, &cfg.latencies, cfg.rr_accounting)?;
        for policy in [Policy::ElementLevel, Policy::StagingOnly] {
            let subject = format!("{alg}/{policy}");
            let flags = oracle::residency_with(k, &o, &alloc, policy);
            let mut res = Residency::new(k, &t, &alloc, policy);
            let mismatches = flags.iter().filter(|(r, p, f)| res.resident(*r, p) != *f).count();
            let resident = flags.iter().filter(|f| f.2).count();
            let analytic_resident = if mismatches == 0 { resident.to_string() } else { format!("{} mismatches", mismatches) };
            checks.push(check("resident accesses", &subject, analytic_resident, resident));
            let sim = crate::config::SimConfig { policy, ..cfg.sim() };
            let ours = steady_state_cycles(k, &t, &alloc, &sim).memory_cycles;
            checks.push(check("cycles", &subject, ours, oracle::cycles_from_flags(k, &flags, cfg.ports)));
        }
    }
    let all_agree = checks.iter().all(|c| c.agree);
    Ok(VerifyReport { kernel: k.name.clone(), checks, all_agree })
}

impl VerifyReport {
    pub fn render(&self, format: Format) -> String {
        if format == Format::Json {
            return to_json(self);
        }
        let header = ["kernel", "quantity", "subject", "analytic", "oracle", "status"];
        let rows: Vec<Vec<String>> = self
            .checks
            .iter()
            .map(|c| {
                vec![
                    self.kernel.clone(),
                    c.quantity.clone(),
                    c.subject.clone(),
                    c.analytic.clone(),
                    c.oracle.clone(),
                    if c.agree { "agree".into() } else { "DISAGREE".into() },
                ]
            })
            .collect();
        let title = format!(
            "kernel {}: {} checks, {}",
            self.kernel,
            self.checks.len(),
            if self.all_agree { "all agree" } else { "disagreements found" }
        );
        render(format, &title, &header, &rows)
    }
}

/// Simulation of one allocation, with the window index for context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub window_index: i64,
    #[serde(flatten)]
    pub cycles: CycleReport,
}

pub fn simulate(k: &Kernel, alg: Algorithm, cfg: &RunConfig) -> Result<SimulateReport, Error> {
    let t = analyze_all(k);
    let alloc = allocate(alg, k, &t, cfg.nr, &cfg.latencies, cfg.rr_accounting)?;
    Ok(simulate_allocation(k, &t, &alloc, cfg))
}

pub fn simulate_allocation(k: &Kernel, t: &ReuseTable, alloc: &Allocation, cfg: &RunConfig) -> SimulateReport {
    SimulateReport { window_index: window_index(k), cycles: steady_state_cycles(k, t, alloc, &cfg.sim()) }
}

impl SimulateReport {
    pub fn render(&self, format: Format) -> String {
        if format == Format::Json {
            return to_json(self);
        }
        let c = &self.cycles;
        let header = ["kernel", "algorithm", "level", "refs", "cycles"];
        let rows: Vec<Vec<String>> = c
            .levels
            .iter()
            .zip(&c.per_level)
            .enumerate()
            .map(|(i, (refs, cyc))| {
                vec![c.kernel.clone(), c.algorithm.to_string(), i.to_string(), refs.join(" "), cyc.to_string()]
            })
            .collect();
        let title = format!(
            "kernel {}  {}  registers {}/{}  window {}={}  {} inner iterations  memory cycles {}  t_exec {}",
            c.kernel,
            c.algorithm,
            c.registers_used,
            c.beta.len(),
            "outer",
            self.window_index,
            c.inner_iterations,
            c.memory_cycles,
            c.t_exec
        );
        render(format, &title, &header, &rows)
    }
}
