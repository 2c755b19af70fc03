//! Deterministic SVG rendering of run outputs.
//!
//! Every plot is a pure function of the CSV files it reads: fixed
//! quantile contour levels, fixed palettes, fixed-precision coordinate
//! formatting, no timestamps. Re-invocation is byte-identical.

use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};
use crate::runner::RunManifest;

/// Fractions of the sorted grid values used as contour levels.
pub const CONTOUR_QUANTILES: [f64; 9] = [0.02, 0.05, 0.10, 0.18, 0.30, 0.45, 0.60, 0.75, 0.90];

/// Contour stroke colors, dark (low loss) to light (high loss).
const CONTOUR_COLORS: [&str; 9] = [
    "#16325c", "#1f4587", "#2a5ca8", "#3c76c0", "#5590cf", "#74a9da", "#97c0e3", "#bcd5ec",
    "#dde9f5",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 800.0;
const MARGIN: f64 = 60.0;

/// A rectangular grid of loss values parsed from `grid.csv`
/// (columns `x,y,mtl_loss`, x varying fastest).
pub struct GridData {
    xs: Vec<f64>,
    ys: Vec<f64>,
    values: Vec<f64>,
}

impl GridData {
    pub fn parse(text: &str, path: &Path) -> CliResult<GridData> {
        let bad = |m: String| CliError::io(format!("{}: {m}", path.display()));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        if header != "x,y,mtl_loss" {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut rows: Vec<[f64; 3]> = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut cols = [0.0; 3];
            let mut parts = line.split(',');
            for c in &mut cols {
                *c = parts
                    .next()
                    .and_then(|p| p.parse().ok())
                    .ok_or_else(|| bad(format!("row {}: expected 3 numbers", i + 2)))?;
            }
            if parts.next().is_some() {
                return Err(bad(format!("row {}: expected 3 numbers", i + 2)));
            }
            rows.push(cols);
        }
        if rows.len() < 4 {
            return Err(bad("need at least a 2x2 grid".into()));
        }
        let first_x = rows[0][0];
        let nx = rows[1..]
            .iter()
            .position(|r| r[0] == first_x)
            .map(|p| p + 1)
            .ok_or_else(|| bad("x coordinate never repeats; not a grid".into()))?;
        if !rows.len().is_multiple_of(nx) {
            return Err(bad(format!("{} rows is not a multiple of nx={nx}", rows.len())));
        }
        let ny = rows.len() / nx;
        let xs: Vec<f64> = rows[..nx].iter().map(|r| r[0]).collect();
        let ys: Vec<f64> = (0..ny).map(|iy| rows[iy * nx][1]).collect();
        let values: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        Ok(GridData { xs, ys, values })
    }

    fn nx(&self) -> usize {
        self.xs.len()
    }

    fn ny(&self) -> usize {
        self.ys.len()
    }

    fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx() + ix]
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.xs[0],
            *self.xs.last().expect("non-empty"),
            self.ys[0],
            *self.ys.last().expect("non-empty"),
        )
    }

    /// The requested quantiles of the stored values.
    fn quantile_levels(&self) -> Vec<f64> {
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        CONTOUR_QUANTILES
            .iter()
            .map(|q| {
                let idx = (q * (sorted.len() - 1) as f64).round() as usize;
                sorted[idx]
            })
            .collect()
    }
}

/// Renders every plot for a finished run directory: one contour-plus-
/// trajectory SVG and one alignment heatmap SVG per (optimizer, seed).
/// Returns the files written, in deterministic order.
pub fn plot_run_dir(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let manifest_path = dir.join("manifest.json");
    let manifest: RunManifest = serde_json::from_str(&read_input(&manifest_path)?)
        .map_err(|e| CliError::io(format!("{}: {e}", manifest_path.display())))?;

    let grid_path = dir.join("grid.csv");
    let grid = GridData::parse(&read_input(&grid_path)?, &grid_path)?;
    let levels = grid.quantile_levels();

    let plots_dir = dir.join("plots");
    std::fs::create_dir_all(&plots_dir)
        .map_err(|e| CliError::io(format!("create {}: {e}", plots_dir.display())))?;

    let mut written = Vec::new();
    for kind in manifest.config.optimizer_kinds().map_err(to_missing_input)? {
        for &seed in &manifest.config.seeds {
            let run_dir = dir.join(kind.name()).join(format!("seed{seed}"));
            let trajectory_path = run_dir.join("trajectory.csv");
            let trajectory = parse_trajectory(&read_input(&trajectory_path)?, &trajectory_path)?;
            let svg = contour_trajectory_svg(&grid, &levels, &trajectory, kind.name(), seed);
            let out = plots_dir.join(format!("{}-seed{}.svg", kind.name(), seed));
            std::fs::write(&out, svg)
                .map_err(|e| CliError::io(format!("write {}: {e}", out.display())))?;
            written.push(out);

            let alignment_path = run_dir.join("alignment.csv");
            let matrix = parse_alignment(&read_input(&alignment_path)?, &alignment_path)?;
            let svg = heatmap_svg(&matrix, kind.name(), seed);
            let out = plots_dir.join(format!("{}-seed{}-alignment.svg", kind.name(), seed));
            std::fs::write(&out, svg)
                .map_err(|e| CliError::io(format!("write {}: {e}", out.display())))?;
            written.push(out);
        }
    }
    Ok(written)
}

fn to_missing_input(e: CliError) -> CliError {
    CliError::config(e.to_string())
}

/// Reads a required input, mapping absence to a config error naming the
/// file (exit 2).
fn read_input(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("missing input {}: {e}", path.display())))
}

fn parse_trajectory(text: &str, path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let bad = |m: String| CliError::io(format!("{}: {m}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    if header != "step,phi_0,phi_1" {
        return Err(bad(format!(
            "contour plots need 2-D trajectories; header is {header:?}"
        )));
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(bad(format!("row {}: expected 3 columns", i + 2)));
        }
        let x: f64 = cols[1]
            .parse()
            .map_err(|_| bad(format!("row {}: bad number {:?}", i + 2, cols[1])))?;
        let y: f64 = cols[2]
            .parse()
            .map_err(|_| bad(format!("row {}: bad number {:?}", i + 2, cols[2])))?;
        points.push((x, y));
    }
    if points.is_empty() {
        return Err(bad("no trajectory rows".into()));
    }
    Ok(points)
}

fn parse_alignment(text: &str, path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let bad = |m: String| CliError::io(format!("{}: {m}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let t = header.split(',').count();
    let mut matrix = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut row = Vec::new();
        for c in line.split(',') {
            let v: f64 = c
                .parse()
                .map_err(|_| bad(format!("row {}: bad number {c:?}", i + 2)))?;
            row.push(v);
        }
        if row.len() != t {
            return Err(bad(format!("row {}: expected {t} columns", i + 2)));
        }
        matrix.push(row);
    }
    if matrix.len() != t {
        return Err(bad(format!("expected {t} rows, found {}", matrix.len())));
    }
    Ok(matrix)
}

/// Maps data coordinates to pixel coordinates (y axis flipped).
struct PixelMap {
    min_x: f64,
    min_y: f64,
    span_x: f64,
    span_y: f64,
}

impl PixelMap {
    fn new(bounds: (f64, f64, f64, f64)) -> PixelMap {
        PixelMap {
            min_x: bounds.0,
            min_y: bounds.2,
            span_x: bounds.1 - bounds.0,
            span_y: bounds.3 - bounds.2,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.min_x) / self.span_x * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.min_y) / self.span_y * (HEIGHT - 2.0 * MARGIN)
    }
}

fn contour_trajectory_svg(
    grid: &GridData,
    levels: &[f64],
    trajectory: &[(f64, f64)],
    optimizer: &str,
    seed: u64,
) -> String {
    let map = PixelMap::new(grid.bounds());
    let mut svg = svg_open();
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"30\" font-family=\"monospace\" font-size=\"16\">{} seed {} \
         (loss contours at fixed quantiles)</text>\n",
        MARGIN, optimizer, seed
    ));
    frame(&mut svg, grid.bounds());
    for (level, color) in levels.iter().zip(CONTOUR_COLORS.iter().rev()) {
        let segments = contour_segments(grid, *level);
        if segments.is_empty() {
            continue;
        }
        let mut d = String::new();
        for [x1, y1, x2, y2] in segments {
            d.push_str(&format!(
                "M{:.2} {:.2}L{:.2} {:.2}",
                map.px(x1),
                map.py(y1),
                map.px(x2),
                map.py(y2)
            ));
        }
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"/>\n"
        ));
    }
    let mut d = String::new();
    for (i, (x, y)) in trajectory.iter().enumerate() {
        d.push_str(&format!(
            "{}{:.2} {:.2}",
            if i == 0 { "M" } else { "L" },
            map.px(*x),
            map.py(*y)
        ));
    }
    svg.push_str(&format!(
        "<path d=\"{d}\" fill=\"none\" stroke=\"#c23616\" stroke-width=\"1.5\"/>\n"
    ));
    let last = trajectory.len() - 1;
    for (i, (x, y)) in trajectory.iter().enumerate() {
        let (r, fill) = if i == 0 {
            (5.0, "#0a8f3c")
        } else if i == last {
            (5.0, "#c23616")
        } else {
            (1.5, "#5f27cd")
        };
        svg.push_str(&format!(
            "<circle class=\"traj-marker\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r}\" \
             fill=\"{fill}\"/>\n",
            map.px(*x),
            map.py(*y)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn svg_open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         width=\"{WIDTH}\" height=\"{HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         fill=\"#ffffff\"/>\n"
    )
}

fn frame(svg: &mut String, bounds: (f64, f64, f64, f64)) {
    svg.push_str(&format!(
        "<rect x=\"{m:.2}\" y=\"{m:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"none\" \
         stroke=\"#333333\" stroke-width=\"1\"/>\n",
        m = MARGIN,
        w = WIDTH - 2.0 * MARGIN,
        h = HEIGHT - 2.0 * MARGIN,
    ));
    let (min_x, max_x, min_y, max_y) = bounds;
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\">({min_x}, \
         {min_y})</text>\n",
        MARGIN,
        HEIGHT - MARGIN + 20.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" \
         text-anchor=\"end\">({max_x}, {max_y})</text>\n",
        WIDTH - MARGIN,
        MARGIN - 8.0
    ));
}

/// Line segments (data coordinates) of one iso-level via marching
/// squares; saddle cells disambiguated by the cell-center average.
fn contour_segments(grid: &GridData, level: f64) -> Vec<[f64; 4]> {
    let mut segments = Vec::new();
    for iy in 0..grid.ny() - 1 {
        for ix in 0..grid.nx() - 1 {
            let x0 = grid.xs[ix];
            let x1 = grid.xs[ix + 1];
            let y0 = grid.ys[iy];
            let y1 = grid.ys[iy + 1];
            let v00 = grid.value(ix, iy);
            let v10 = grid.value(ix + 1, iy);
            let v11 = grid.value(ix + 1, iy + 1);
            let v01 = grid.value(ix, iy + 1);
            let mut case = 0u8;
            if v00 > level {
                case |= 1;
            }
            if v10 > level {
                case |= 2;
            }
            if v11 > level {
                case |= 4;
            }
            if v01 > level {
                case |= 8;
            }
            if case == 0 || case == 15 {
                continue;
            }
            let lerp = |a: f64, b: f64, pa: f64, pb: f64| {
                if (b - a).abs() < f64::EPSILON * (a.abs() + b.abs()).max(1.0) {
                    (pa + pb) / 2.0
                } else {
                    pa + (level - a) / (b - a) * (pb - pa)
                }
            };
            // Edge crossing points: bottom, right, top, left.
            let eb = || [lerp(v00, v10, x0, x1), y0];
            let er = || [x1, lerp(v10, v11, y0, y1)];
            let et = || [lerp(v01, v11, x0, x1), y1];
            let el = || [x0, lerp(v00, v01, y0, y1)];
            let mut push = |a: [f64; 2], b: [f64; 2]| {
                segments.push([a[0], a[1], b[0], b[1]]);
            };
            match case {
                1 | 14 => push(el(), eb()),
                2 | 13 => push(eb(), er()),
                3 | 12 => push(el(), er()),
                4 | 11 => push(er(), et()),
                6 | 9 => push(eb(), et()),
                7 | 8 => push(el(), et()),
                5 | 10 => {
                    let center = (v00 + v10 + v11 + v01) / 4.0;
                    let joined = (center > level) == (case == 5);
                    if joined {
                        push(el(), et());
                        push(eb(), er());
                    } else {
                        push(el(), eb());
                        push(er(), et());
                    }
                }
                _ => unreachable!("cases 0 and 15 handled above"),
            }
        }
    }
    segments
}

fn heatmap_svg(matrix: &[Vec<f64>], optimizer: &str, seed: u64) -> String {
    let t = matrix.len();
    let cell = 80.0;
    let margin = 70.0;
    let size = margin * 2.0 + cell * t as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {size} {size}\" \
         width=\"{size}\" height=\"{size}\">\n<rect width=\"{size}\" height=\"{size}\" \
         fill=\"#ffffff\"/>\n"
    );
    svg.push_str(&format!(
        "<text x=\"{margin:.2}\" y=\"30\" font-family=\"monospace\" font-size=\"14\">{} seed {} \
         task-gradient cosines</text>\n",
        optimizer, seed
    ));
    for (row, values) in matrix.iter().enumerate() {
        for (col, &v) in values.iter().enumerate() {
            let x = margin + col as f64 * cell;
            let y = margin + row as f64 * cell;
            svg.push_str(&format!(
                "<rect class=\"heat-cell\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell}\" \
                 height=\"{cell}\" fill=\"{}\" stroke=\"#333333\" stroke-width=\"0.5\"/>\n",
                cosine_color(v)
            ));
            svg.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"13\" \
                 text-anchor=\"middle\" fill=\"{}\">{}</text>\n",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                if v.is_finite() && v.abs() > 0.6 {
                    "#ffffff"
                } else {
                    "#000000"
                },
                format_cell(v)
            ));
        }
    }
    for i in 0..t {
        let along = margin + i as f64 * cell + cell / 2.0;
        svg.push_str(&format!(
            "<text x=\"{along:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"middle\">task_{}</text>\n",
            margin - 10.0,
            i + 1
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"end\">task_{}</text>\n",
            margin - 10.0,
            along + 4.0,
            i + 1
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        "n/a".to_string()
    }
}

/// Diverging palette: -1 blue, 0 white, +1 red; NaN gray.
fn cosine_color(v: f64) -> String {
    if !v.is_finite() {
        return "#bbbbbb".to_string();
    }
    let t = ((v + 1.0) / 2.0).clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (lerp(59.0, 255.0, u), lerp(76.0, 255.0, u), lerp(192.0, 255.0, u))
    } else {
        let u = (t - 0.5) / 0.5;
        (lerp(255.0, 180.0, u), lerp(255.0, 4.0, u), lerp(255.0, 38.0, u))
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_grid() -> GridData {
        // 3x3 grid of x^2 + y^2 over [-1, 1]^2.
        let mut text = String::from("x,y,mtl_loss\n");
        for y in [-1.0f64, 0.0, 1.0] {
            for x in [-1.0f64, 0.0, 1.0] {
                text.push_str(&format!("{x},{y},{}\n", x * x + y * y));
            }
        }
        GridData::parse(&text, Path::new("test")).unwrap()
    }

    #[test]
    fn grid_parse_recovers_shape() {
        let g = square_grid();
        assert_eq!(g.nx(), 3);
        assert_eq!(g.ny(), 3);
        assert_eq!(g.value(1, 1), 0.0);
        assert_eq!(g.bounds(), (-1.0, 1.0, -1.0, 1.0));
    }

    #[test]
    fn contour_surrounds_the_bowl_minimum() {
        let g = square_grid();
        // Level 1 crosses every cell around the center.
        let segments = contour_segments(&g, 1.0);
        assert!(!segments.is_empty());
        for [x1, y1, x2, y2] in segments {
            for v in [x1, y1, x2, y2] {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn cosine_palette_endpoints() {
        assert_eq!(cosine_color(-1.0), "#3b4cc0");
        assert_eq!(cosine_color(1.0), "#b40426");
        assert_eq!(cosine_color(0.0), "#ffffff");
        assert_eq!(cosine_color(f64::NAN), "#bbbbbb");
    }
}
