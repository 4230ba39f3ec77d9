use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sweep::{pattern_means, GridCell, RunRecord, SeriesPoint, SweepGrid};
use super::workload::MIB;
use crate::costmodel::{rank, PatternLabel};
use crate::error::{Error, Result};

/// Output artifact kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    SvgHeatmap,
    TextTable,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "grid.csv",
            ReportFormat::SvgHeatmap => "heatmap.svg",
            ReportFormat::TextTable => "grid.txt",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "svg" | "svg-heatmap" => Ok(ReportFormat::SvgHeatmap),
            "text" | "text-table" => Ok(ReportFormat::TextTable),
            other => Err(Error::Parse(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    qualified_pct: f64,
    size_bytes: u64,
    std_ms: f64,
    gray: f64,
    label: String,
    mean_p_ms: Option<f64>,
    mean_c_ms: Option<f64>,
    mean_m_ms: Option<f64>,
}

pub fn write_grid_csv<W: Write>(grid: &SweepGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in &grid.cells {
        w.serialize(GridRow {
            qualified_pct: c.qualified_pct,
            size_bytes: c.size_bytes,
            std_ms: c.std_ms,
            gray: c.gray,
            label: c.label.to_string(),
            mean_p_ms: c.mean_p_ms,
            mean_c_ms: c.mean_c_ms,
            mean_m_ms: c.mean_m_ms,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_grid_csv<R: Read>(input: R) -> Result<SweepGrid> {
    let mut r = csv::Reader::from_reader(input);
    let mut cells = Vec::new();
    for row in r.deserialize() {
        let row: GridRow = row?;
        cells.push(GridCell {
            qualified_pct: row.qualified_pct,
            size_bytes: row.size_bytes,
            std_ms: row.std_ms,
            gray: row.gray,
            label: row.label.parse()?,
            mean_p_ms: row.mean_p_ms,
            mean_c_ms: row.mean_c_ms,
            mean_m_ms: row.mean_m_ms,
        });
    }
    Ok(SweepGrid { cells })
}

pub fn write_sweep_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_series_csv<W: Write>(series: &[SeriesPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in series {
        w.serialize(p)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn size_label(bytes: u64) -> String {
    if bytes % MIB == 0 {
        format!("{} MiB", bytes / MIB)
    } else {
        format!("{bytes} B")
    }
}

/// Fixed-width text rendering of the grid: one row per qualified
/// percentage, one column per size, each cell `label (gray)`.
pub fn render_text_table(grid: &SweepGrid) -> Result<String> {
    if grid.cells.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let sizes = grid.size_axis();
    let mut s = format!("{:>8}", "q \\ S");
    for &b in &sizes {
        s += &format!(" | {:>16}", size_label(b));
    }
    s.push('\n');
    for q in grid.qualified_axis() {
        s += &format!("{:>7}%", q);
        for &b in &sizes {
            let cell = match grid.cell(q, b) {
                Some(c) => format!("{} ({:.2})", c.label, c.gray),
                None => "-".into(),
            };
            s += &format!(" | {cell:>16}");
        }
        s.push('\n');
    }
    Ok(s)
}

/// Grayscale heatmap: qualified percentage down, size across; fill is the
/// gray value (0 white, 1 black) with the label overlaid.
pub fn render_heatmap_svg(grid: &SweepGrid) -> Result<String> {
    if grid.cells.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    const CELL: usize = 80;
    const LEFT: usize = 70;
    const TOP: usize = 40;
    let sizes = grid.size_axis();
    let qs = grid.qualified_axis();
    let width = LEFT + CELL * sizes.len() + 10;
    let height = TOP + CELL * qs.len() + 40;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (col, &b) in sizes.iter().enumerate() {
        let x = LEFT + col * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, TOP - 12, size_label(b));
    }
    for (row, &q) in qs.iter().enumerate() {
        let y = TOP + row * CELL;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{q}%</text>"#, LEFT - 8, y + CELL / 2 + 5);
        for (col, &b) in sizes.iter().enumerate() {
            let Some(c) = grid.cell(q, b) else { continue };
            let x = LEFT + col * CELL;
            let level = (255.0 * (1.0 - c.gray.clamp(0.0, 1.0))).round() as u8;
            let ink = if c.gray > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({level},{level},{level})" stroke="gray"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 5,
                c.label
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">data size per step</text>"#,
        LEFT + CELL * sizes.len() / 2,
        height - 12
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes the grid in `format` under `dir`, returning the file written.
pub fn emit_report(grid: &SweepGrid, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    if grid.cells.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let bytes = match format {
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            write_grid_csv(grid, &mut buf)?;
            buf
        }
        ReportFormat::SvgHeatmap => render_heatmap_svg(grid)?.into_bytes(),
        ReportFormat::TextTable => render_text_table(grid)?.into_bytes(),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format.file_name());
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Bars of an experiment series as a text table, one row per x value.
pub fn render_series_table(series: &[SeriesPoint]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Empty("series"));
    }
    let mut xs: Vec<&str> = Vec::new();
    for p in series {
        if !xs.contains(&p.x.as_str()) {
            xs.push(&p.x);
        }
    }
    let mut s = format!("{:>8} | {:>12} | {:>12} | {:>12} | best\n", "x", "P ms", "C ms", "M ms");
    for x in xs {
        let pts: Vec<_> = series.iter().filter(|p| p.x == x).map(|p| (p.pattern, p.mean_ms)).collect();
        let col = |name: &str| {
            pts.iter()
                .find(|p| p.0.as_str() == name)
                .map_or("-".to_string(), |p| format!("{:.1}", p.1))
        };
        let best = rank(&pts, crate::costmodel::DEFAULT_EPSILON)?.label;
        s += &format!("{x:>8} | {:>12} | {:>12} | {:>12} | {best}\n", col("P"), col("C"), col("M"));
    }
    Ok(s)
}

/// One row of the recommendation table: a factor combination and the
/// recommended pattern under each preset.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub factor: String,
    pub choices: Vec<PatternLabel>,
}

/// Quadrants of the default grid: (name, qualified percentages, sizes).
fn quadrants() -> Vec<(&'static str, Vec<f64>, Vec<u64>)> {
    let low = vec![0.0, 20.0, 40.0];
    let high = vec![60.0, 80.0, 100.0];
    let small: Vec<u64> = [8, 16, 32].iter().map(|m| m * MIB).collect();
    let large: Vec<u64> = [64, 128].iter().map(|m| m * MIB).collect();
    vec![
        ("low qualified, small data", low.clone(), small.clone()),
        ("low qualified, large data", low, large.clone()),
        ("high qualified, small data", high.clone(), small),
        ("high qualified, large data", high, large),
    ]
}

/// Aggregates each quadrant of each grid into one recommendation: per
/// pattern, the mean over the quadrant's cells of makespan divided by the
/// cell's fastest makespan, ranked with `epsilon`.
pub fn recommendation_table(grids: &[&SweepGrid], epsilon: f64) -> Result<Vec<TableRow>> {
    if grids.is_empty() || grids.iter().any(|g| g.cells.is_empty()) {
        return Err(Error::Empty("sweep grid"));
    }
    let mut rows = Vec::new();
    for (name, qs, sizes) in quadrants() {
        let mut choices = Vec::new();
        for g in grids {
            let cells: Vec<&GridCell> = g
                .cells
                .iter()
                .filter(|c| qs.contains(&c.qualified_pct) && sizes.contains(&c.size_bytes))
                .collect();
            if cells.is_empty() {
                return Err(Error::config(format!("grid has no cells for quadrant {name:?}")));
            }
            let mut scores: Vec<(crate::orchestrator::TriggerPattern, f64)> = Vec::new();
            for c in &cells {
                let means = c.means();
                let min = means.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
                for (p, m) in means {
                    match scores.iter_mut().find(|s| s.0 == p) {
                        Some(s) => s.1 += m / min,
                        None => scores.push((p, m / min)),
                    }
                }
            }
            for s in &mut scores {
                s.1 /= cells.len() as f64;
            }
            choices.push(rank(&scores, epsilon)?.label);
        }
        rows.push(TableRow {
            factor: name.to_string(),
            choices,
        });
    }
    Ok(rows)
}

/// Renders recommendation rows with one column per preset name.
pub fn render_table_text(rows: &[TableRow], presets: &[&str]) -> String {
    let mut s = format!("{:<28}", "factor");
    for p in presets {
        s += &format!(" | {:>10}", format!("setting {p}"));
    }
    s.push('\n');
    for r in rows {
        s += &format!("{:<28}", r.factor);
        for c in &r.choices {
            s += &format!(" | {:>10}", c.to_string());
        }
        s.push('\n');
    }
    s
}

/// Mean makespans of a run set, for the `run` subcommand's summary.
pub fn summarize_records(records: &[RunRecord]) -> String {
    pattern_means(records)
        .into_iter()
        .map(|(p, m)| format!("{p}: {m:.1} ms\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_sweep, Mode, SweepSpec, WorkloadSpec};
    use crate::orchestrator::TriggerPattern::*;

    fn small_grid() -> SweepGrid {
        SweepGrid::from_means(
            &[
                (0.0, MIB, vec![(P, 10.0), (C, 14.0), (M, 18.0)]),
                (0.0, 2 * MIB, vec![(P, 10.0), (C, 10.2), (M, 30.0)]),
                (50.0, MIB, vec![(P, 1.0 / 3.0), (C, 0.1), (M, 0.1 + 1e-17)]),
            ],
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn grid_csv_round_trip_is_exact() {
        let g = small_grid();
        let mut buf = Vec::new();
        write_grid_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("qualified_pct,size_bytes,std_ms,gray,label,mean_p_ms,mean_c_ms,mean_m_ms\n"));
        assert_eq!(read_grid_csv(&buf[..]).unwrap(), g);
    }

    #[test]
    fn partial_means_round_trip() {
        let g = SweepGrid::from_means(&[(20.0, MIB, vec![(P, 3.0)])], 0.05).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&g, &mut buf).unwrap();
        assert_eq!(read_grid_csv(&buf[..]).unwrap(), g);
    }

    #[test]
    fn default_grid_csv_has_thirty_rows() {
        let base = WorkloadSpec { reps: 1, ..WorkloadSpec::default() };
        let r = run_sweep(&SweepSpec::default_grid(base), Mode::Predict).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = emit_report(&r.grid, ReportFormat::Csv, dir.path()).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 31);
    }

    #[test]
    fn sweep_csv_round_trip() {
        let spec = WorkloadSpec { reps: 1, ..WorkloadSpec::default() };
        let recs = crate::harness::run_predicted(&spec).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "preset,pattern,qualified_pct,size_bytes,steps,instances,pool,rep,makespan_ms,bytes_transferred,analyses_completed\n"
        ));
        assert_eq!(read_sweep_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        for f in [ReportFormat::Csv, ReportFormat::SvgHeatmap, ReportFormat::TextTable] {
            assert!(matches!(emit_report(&SweepGrid::default(), f, dir.path()), Err(Error::Empty(_))));
        }
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let target = blocker.join("sub");
        match emit_report(&small_grid(), ReportFormat::Csv, &target) {
            Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
            other => panic!("expected I/O error, got {other:?}"),
        }
    }

    #[test]
    fn output_is_deterministic() {
        let g = small_grid();
        assert_eq!(render_heatmap_svg(&g).unwrap(), render_heatmap_svg(&g).unwrap());
        assert_eq!(render_text_table(&g).unwrap(), render_text_table(&g).unwrap());
    }

    #[test]
    fn heatmap_fill_follows_gray() {
        let svg = render_heatmap_svg(&small_grid()).unwrap();
        assert!(svg.contains("fill=\"rgb(255,255,255)\""));
        assert!(svg.contains("fill=\"rgb(0,0,0)\""));
        assert!(svg.contains(">P/C<"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn table_has_one_row_per_quadrant() {
        let base = WorkloadSpec { reps: 1, ..WorkloadSpec::default() };
        let r = run_sweep(&SweepSpec::default_grid(base), Mode::Predict).unwrap();
        let rows = recommendation_table(&[&r.grid, &r.grid], 0.05).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.choices.len() == 2 && r.choices[0] == r.choices[1]));
        let text = render_table_text(&rows, &["A", "B"]);
        assert_eq!(text.lines().count(), 5);
    }
}
