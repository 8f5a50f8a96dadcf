//! Run records, CSV and Markdown rendering, speedup comparison, and an
//! arithmetic check against the reference measurements shipped with the
//! simulator.

use std::io::{self, Write};

/// One simulated run, flattened for reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub name: String,
    pub kernel: String,
    pub variant: String,
    pub irregular: String,
    pub latency: u64,
    pub seed: u64,
    pub cycles: u64,
    pub golden: u64,
    pub serialized: u64,
    pub overhead_pct: f64,
    pub outcome: String,
    pub oracle_match: bool,
    pub balanced: bool,
    pub loads: u64,
    pub stores: u64,
}

pub const CSV_HEADER: &str = "name,kernel,variant,irregular,latency,seed,cycles,golden,\
serialized,overhead_pct,outcome,oracle_match,balanced,loads,stores";

impl RunRecord {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3},{},{},{},{},{}",
            self.name,
            self.kernel,
            self.variant,
            self.irregular,
            self.latency,
            self.seed,
            self.cycles,
            self.golden,
            self.serialized,
            self.overhead_pct,
            self.outcome,
            self.oracle_match,
            self.balanced,
            self.loads,
            self.stores
        )
    }
}

pub fn write_csv<W: Write>(records: &[RunRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

pub fn read_csv(text: &str) -> Result<Vec<RunRecord>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        Some(h) => return Err(format!("unexpected CSV header {h:?}")),
        None => return Err("empty CSV".into()),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(format!("row {}: expected 15 fields, got {}", i + 2, f.len()));
        }
        let num = |s: &str, what: &str| -> Result<u64, String> {
            s.parse().map_err(|_| format!("row {}: bad {what} {s:?}", i + 2))
        };
        out.push(RunRecord {
            name: f[0].to_string(),
            kernel: f[1].to_string(),
            variant: f[2].to_string(),
            irregular: f[3].to_string(),
            latency: num(f[4], "latency")?,
            seed: num(f[5], "seed")?,
            cycles: num(f[6], "cycles")?,
            golden: num(f[7], "golden")?,
            serialized: num(f[8], "serialized")?,
            overhead_pct: f[9]
                .parse()
                .map_err(|_| format!("row {}: bad overhead {:?}", i + 2, f[9]))?,
            outcome: f[10].to_string(),
            oracle_match: f[11] == "true",
            balanced: f[12] == "true",
            loads: num(f[13], "loads")?,
            stores: num(f[14], "stores")?,
        });
    }
    Ok(out)
}

/// Render rows as an aligned Markdown table.
pub fn render_markdown(records: &[RunRecord]) -> String {
    let mut rows: Vec<Vec<String>> = vec![CSV_HEADER.split(',').map(str::to_string).collect()];
    for r in records {
        rows.push(r.csv_line().split(',').map(str::to_string).collect());
    }
    markdown_table(&rows)
}

fn markdown_table(rows: &[Vec<String>]) -> String {
    let cols = rows[0].len();
    let mut width = vec![0usize; cols];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            width[i] = width[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for (ri, row) in rows.iter().enumerate() {
        out.push('|');
        for (i, cell) in row.iter().enumerate() {
            out.push(' ');
            out.push_str(cell);
            out.extend(std::iter::repeat_n(' ', width[i] - cell.len() + 1));
            out.push('|');
        }
        out.push('\n');
        if ri == 0 {
            out.push('|');
            for w in &width {
                out.push_str(&"-".repeat(w + 2));
                out.push('|');
            }
            out.push('\n');
        }
    }
    out
}

/// Speedup of `subject` over `baseline`, row by row.
#[derive(Clone, Debug)]
pub struct ComparisonRow {
    pub name: String,
    pub kernel: String,
    pub baseline_cycles: u64,
    pub subject_cycles: u64,
    pub cycle_speedup: f64,
    pub time_speedup: Option<f64>,
}

/// Pair up two reports and compute cycle speedups, plus time speedups when
/// clock periods (baseline, subject) in nanoseconds are given. Rows must
/// describe the same workloads in the same order.
pub fn compare(
    baseline: &[RunRecord],
    subject: &[RunRecord],
    periods: Option<(f64, f64)>,
) -> Result<Vec<ComparisonRow>, String> {
    if baseline.len() != subject.len() {
        return Err(format!(
            "reports have {} and {} rows; nothing to pair",
            baseline.len(),
            subject.len()
        ));
    }
    let mut out = Vec::with_capacity(baseline.len());
    for (b, s) in baseline.iter().zip(subject) {
        if b.name != s.name || b.kernel != s.kernel {
            return Err(format!(
                "row mismatch: baseline {}/{} vs subject {}/{}",
                b.name, b.kernel, s.name, s.kernel
            ));
        }
        if s.cycles == 0 {
            return Err(format!("subject {} reports zero cycles", s.name));
        }
        let cycle_speedup = b.cycles as f64 / s.cycles as f64;
        let time_speedup = periods.map(|(pb, ps)| {
            (b.cycles as f64 * pb) / (s.cycles as f64 * ps)
        });
        out.push(ComparisonRow {
            name: b.name.clone(),
            kernel: b.kernel.clone(),
            baseline_cycles: b.cycles,
            subject_cycles: s.cycles,
            cycle_speedup,
            time_speedup,
        });
    }
    Ok(out)
}

pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let mut table = vec![vec![
        "name".into(),
        "kernel".into(),
        "baseline_cycles".into(),
        "subject_cycles".into(),
        "cycle_speedup".into(),
        "time_speedup".into(),
    ]];
    for r in rows {
        table.push(vec![
            r.name.clone(),
            r.kernel.clone(),
            r.baseline_cycles.to_string(),
            r.subject_cycles.to_string(),
            format!("{:.2}", r.cycle_speedup),
            r.time_speedup.map_or_else(String::new, |t| format!("{t:.2}")),
        ]);
    }
    markdown_table(&table)
}

/// Reference measurements: the seven kernels compiled five ways (a statically
/// scheduled flow, that flow with access/execute decoupling, a dynamically
/// scheduled flow, the dynamic flow with stream buffers, and the dynamic flow
/// fully decoupled). `path_ns` is the synthesized critical path; `time_us`
/// is the reported wall-clock time; `speedup` is relative to the first
/// column's time on the same kernel.
#[derive(Clone, Copy, Debug)]
pub struct PublishedRow {
    pub kernel: &'static str,
    pub column: &'static str,
    pub cycles: u64,
    pub path_ns: f64,
    pub time_us: f64,
    pub speedup: Option<f64>,
}

pub const PUBLISHED: [PublishedRow; 30] = [
    row("binsearch", "static", 2_298_439, 7.62, 17_507.21, None),
    row("binsearch", "static_decoupled", 65_091, 6.88, 447.7, Some(39.11)),
    row("binsearch", "dynamic", 2_039_174, 9.44, 19_243.69, Some(0.91)),
    row("binsearch", "dynamic_stream", 21_364, 12.51, 267.22, Some(65.52)),
    row("binsearch", "dynamic_decoupled", 21_354, 12.16, 259.71, Some(67.41)),
    row("binsearch_for", "static", 2_357_243, 7.05, 16_620.92, None),
    row("binsearch_for", "static_decoupled", 83_937, 8.77, 736.21, Some(22.58)),
    row("binsearch_for", "dynamic", 2_163_106, 9.29, 20_101.74, Some(0.83)),
    row("binsearch_for", "dynamic_stream", 22_230, 9.14, 203.25, Some(81.78)),
    row("binsearch_for", "dynamic_decoupled", 22_206, 9.53, 211.67, Some(78.52)),
    row("hashtable", "static", 1_953_903, 6.57, 12_829.33, None),
    row("hashtable", "static_decoupled", 53_887, 5.87, 316.26, Some(40.57)),
    row("hashtable", "dynamic", 1_687_760, 9.08, 15_331.61, Some(0.84)),
    row("hashtable", "dynamic_stream", 19_292, 10.8, 208.35, Some(61.57)),
    row("hashtable", "dynamic_decoupled", 19_086, 10.47, 199.85, Some(64.19)),
    row("mergesort", "static", 259_157, 7.95, 2_060.04, None),
    row("mergesort", "static_decoupled", 145_423, 8.99, 1_307.64, Some(1.58)),
    row("mergesort", "dynamic", 199_862, 9.83, 1_964.24, Some(1.05)),
    row("mergesort", "dynamic_decoupled", 7_038, 9.44, 66.44, Some(31.01)),
    row("mergesort_opt", "dynamic_decoupled", 3_960, 9.6, 38.0, None),
    row("multispmv", "static", 348_343, 8.53, 2_969.62, None),
    row("multispmv", "static_decoupled", 60_243, 8.54, 514.48, Some(5.77)),
    row("multispmv", "dynamic", 71_214, 13.84, 985.25, Some(3.01)),
    row("multispmv", "dynamic_stream", 32_218, 13.68, 440.84, Some(6.74)),
    row("multispmv", "dynamic_decoupled", 21_904, 13.46, 294.78, Some(10.07)),
    row("spmv", "static", 286_379, 8.62, 2_467.73, None),
    row("spmv", "static_decoupled", 55_071, 8.58, 472.51, Some(5.22)),
    row("spmv", "dynamic", 18_644, 14.0, 261.03, Some(9.45)),
    row("spmv", "dynamic_stream", 17_532, 13.42, 235.31, Some(10.49)),
    row("spmv", "dynamic_decoupled", 17_530, 13.56, 237.69, Some(10.38)),
];

const fn row(
    kernel: &'static str,
    column: &'static str,
    cycles: u64,
    path_ns: f64,
    time_us: f64,
    speedup: Option<f64>,
) -> PublishedRow {
    PublishedRow { kernel, column, cycles, path_ns, time_us, speedup }
}

#[derive(Clone, Copy, Debug)]
pub struct ArithmeticCheck {
    pub kernel: &'static str,
    pub column: &'static str,
    pub computed_us: f64,
    pub published_us: f64,
    pub tolerance_us: f64,
    pub pass: bool,
}

/// Both the path and the time carry two decimals, so cycles x path can
/// legitimately land up to cycles x 0.005 ns away from the value that was
/// rounded, plus half an ulp of the printed time itself. The floor of
/// 0.1 us keeps the bound meaningful for small cycle counts.
pub fn time_tolerance_us(cycles: u64) -> f64 {
    (cycles as f64 * 0.005 / 1000.0 + 0.005).max(0.1)
}

/// Recompute every reference time from its cycles x path pair and check it
/// against the published value.
pub fn check_arithmetic() -> Vec<ArithmeticCheck> {
    PUBLISHED
        .iter()
        .map(|r| {
            let computed_us = r.cycles as f64 * r.path_ns / 1000.0;
            let tolerance_us = time_tolerance_us(r.cycles);
            ArithmeticCheck {
                kernel: r.kernel,
                column: r.column,
                computed_us,
                published_us: r.time_us,
                tolerance_us,
                pass: (computed_us - r.time_us).abs() <= tolerance_us,
            }
        })
        .collect()
}

/// The headline binsearch result: time speedup of the fully decoupled build
/// over the static baseline, from the published times.
pub fn binsearch_published_speedup() -> f64 {
    let time = |column: &str| {
        PUBLISHED
            .iter()
            .find(|r| r.kernel == "binsearch" && r.column == column)
            .expect("binsearch rows are present")
            .time_us
    };
    time("static") / time("dynamic_decoupled")
}

pub fn render_arithmetic(checks: &[ArithmeticCheck]) -> String {
    let mut table = vec![vec![
        "kernel".into(),
        "column".into(),
        "computed_us".into(),
        "published_us".into(),
        "tolerance_us".into(),
        "pass".into(),
    ]];
    for c in checks {
        table.push(vec![
            c.kernel.into(),
            c.column.into(),
            format!("{:.3}", c.computed_us),
            format!("{:.2}", c.published_us),
            format!("{:.3}", c.tolerance_us),
            c.pass.to_string(),
        ]);
    }
    markdown_table(&table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(name: &str, cycles: u64) -> RunRecord {
        RunRecord {
            name: name.into(),
            kernel: "spmv".into(),
            variant: "decoupled".into(),
            irregular: "fixed".into(),
            latency: 100,
            seed: 1,
            cycles,
            golden: cycles / 2,
            serialized: cycles * 3,
            overhead_pct: 12.5,
            outcome: "completed".into(),
            oracle_match: true,
            balanced: true,
            loads: 10,
            stores: 4,
        }
    }

    #[test]
    fn csv_roundtrips() {
        let records = vec![record("desk/spmv", 4000), record("desk/other", 9000)];
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = read_csv(&text).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn malformed_csv_is_rejected_with_a_row_number() {
        let text = format!("{CSV_HEADER}\na,b,c\n");
        let err = read_csv(&text).unwrap_err();
        assert!(err.contains("row 2"), "{err}");
        assert!(read_csv("nope\n").is_err());
    }

    #[test]
    fn identical_runs_compare_at_speedup_one() {
        let rows = vec![record("desk/spmv", 4000)];
        let cmp = compare(&rows, &rows, None).unwrap();
        assert_eq!(cmp[0].cycle_speedup, 1.0);
        assert!(cmp[0].time_speedup.is_none());
    }

    #[test]
    fn mergesort_cycle_speedup_matches_the_reference_quotient() {
        let base = vec![record("ref/mergesort", 259_157)];
        let subj = vec![record("ref/mergesort", 7_038)];
        let cmp = compare(&base, &subj, None).unwrap();
        assert!((cmp[0].cycle_speedup - 36.82).abs() < 0.005);
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        let base = vec![record("desk/spmv", 100)];
        let subj = vec![record("desk/hashtable", 100)];
        assert!(compare(&base, &subj, None).is_err());
    }

    #[test]
    fn periods_turn_cycle_counts_into_time_speedups() {
        let base = vec![record("x", 1000)];
        let subj = vec![record("x", 100)];
        let cmp = compare(&base, &subj, Some((2.0, 4.0))).unwrap();
        assert_eq!(cmp[0].time_speedup, Some(5.0));
        assert_eq!(cmp[0].cycle_speedup, 10.0);
    }

    #[test]
    fn every_reference_time_is_reproduced_within_rounding() {
        let checks = check_arithmetic();
        assert_eq!(checks.len(), PUBLISHED.len());
        for c in &checks {
            assert!(
                c.pass,
                "{} {} computed {:.3} vs {} (tol {:.3})",
                c.kernel, c.column, c.computed_us, c.published_us, c.tolerance_us
            );
        }
    }

    #[test]
    fn the_headline_binsearch_speedup_comes_out_at_67_41() {
        assert!((binsearch_published_speedup() - 67.41).abs() <= 0.01);
    }

    #[test]
    fn markdown_columns_line_up() {
        let text = render_markdown(&[record("desk/spmv", 4000)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].len(), lines[1].len());
        assert_eq!(lines[0].len(), lines[2].len());
    }
}
