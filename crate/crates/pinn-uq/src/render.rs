//! SVG heatmaps of gridded field CSVs: one rect per lattice cell, a linear
//! color scale between the field min and max, axis labels, and a colorbar.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Colormap {
    Viridis,
    Coolwarm,
    Gray,
}

impl std::str::FromStr for Colormap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viridis" => Ok(Colormap::Viridis),
            "coolwarm" => Ok(Colormap::Coolwarm),
            "gray" | "grey" => Ok(Colormap::Gray),
            other => Err(Error::Usage(format!(
                "unknown colormap {other:?} (viridis, coolwarm, gray)"
            ))),
        }
    }
}

const VIRIDIS: [(f64, f64, f64); 11] = [
    (0.267004, 0.004874, 0.329415),
    (0.282623, 0.140926, 0.457517),
    (0.253935, 0.265254, 0.529983),
    (0.206756, 0.371758, 0.553117),
    (0.163625, 0.471133, 0.558148),
    (0.127568, 0.566949, 0.550556),
    (0.134692, 0.658636, 0.517649),
    (0.266941, 0.748751, 0.440573),
    (0.477504, 0.821444, 0.318195),
    (0.741388, 0.873449, 0.149561),
    (0.993248, 0.906157, 0.143936),
];

const COOLWARM: [(f64, f64, f64); 3] = [
    (0.2298, 0.2987, 0.7537),
    (0.8654, 0.8654, 0.8654),
    (0.7057, 0.0156, 0.1502),
];

impl Colormap {
    /// RGB for t in [0, 1].
    pub fn color(&self, t: f64) -> (u8, u8, u8) {
        let t = t.clamp(0.0, 1.0);
        let lerp = |anchors: &[(f64, f64, f64)]| -> (u8, u8, u8) {
            let n = anchors.len() - 1;
            let pos = t * n as f64;
            let i = (pos.floor() as usize).min(n - 1);
            let frac = pos - i as f64;
            let (r0, g0, b0) = anchors[i];
            let (r1, g1, b1) = anchors[i + 1];
            let ch = |a: f64, b: f64| ((a + (b - a) * frac) * 255.0).round() as u8;
            (ch(r0, r1), ch(g0, g1), ch(b0, b1))
        };
        match self {
            Colormap::Viridis => lerp(&VIRIDIS),
            Colormap::Coolwarm => lerp(&COOLWARM),
            Colormap::Gray => {
                let v = (t * 255.0).round() as u8;
                (v, v, v)
            }
        }
    }
}

/// Structural facts about a rendered map.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderInfo {
    pub cols: usize,
    pub rows: usize,
    pub cells: usize,
    pub min: f64,
    pub max: f64,
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 1000.0 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// A gridded scalar field with named axes.
pub struct GridField {
    pub axis_x_name: String,
    pub axis_y_name: String,
    pub value_name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[row * xs.len() + col]`, row indexing `ys`.
    pub values: Vec<f64>,
}

/// Parses one value column of a field CSV into a lattice. The first two
/// coordinate columns form the axes (`x,t` or `x,y`; any constant trailing
/// `t` column of a 2-D slice is ignored). Errors list missing lattice
/// points when the file is not a full regular grid.
pub fn parse_grid_csv(path: &Path, column: Option<&str>) -> Result<GridField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Structure(format!("{}: empty file", path.display())))?
        .trim_end_matches('\r')
        .split(',')
        .map(str::to_string)
        .collect();
    let n_coord = if header.len() >= 3 && header[0] == "x" && header[1] == "y" && header[2] == "t"
    {
        3
    } else if header.len() >= 2 && header[0] == "x" && header[1] == "t" {
        2
    } else {
        return Err(Error::CsvSchema {
            path: path.to_path_buf(),
            header: header.join(","),
            expected: "x,t,... | x,y,t,...".into(),
        });
    };
    let value_col = match column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Usage(format!("column {name:?} not in {header:?}")))?,
        None => n_coord,
    };
    if value_col < n_coord || value_col >= header.len() {
        return Err(Error::Usage(format!(
            "column index {value_col} is not a value column"
        )));
    }
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::CsvParse {
                path: path.to_path_buf(),
                line: idx + 2,
                detail: format!("expected {} columns, found {}", header.len(), fields.len()),
            });
        }
        let get = |k: usize| -> Result<f64> {
            fields[k].trim().parse().map_err(|_| Error::CsvParse {
                path: path.to_path_buf(),
                line: idx + 2,
                detail: format!("non-numeric field {:?}", fields[k]),
            })
        };
        rows.push((get(0)?, get(1)?, get(value_col)?));
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("{}: no data rows", path.display())));
    }
    let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let mut ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.dedup();
    let (nx, ny) = (xs.len(), ys.len());
    let mut values = vec![f64::NAN; nx * ny];
    let xi = |v: f64| xs.binary_search_by(|p| p.partial_cmp(&v).unwrap()).ok();
    let yi = |v: f64| ys.binary_search_by(|p| p.partial_cmp(&v).unwrap()).ok();
    for (x, y, v) in &rows {
        if let (Some(i), Some(j)) = (xi(*x), yi(*y)) {
            values[j * nx + i] = *v;
        }
    }
    let missing: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_nan())
        .take(5)
        .map(|(k, _)| format!("({}, {})", xs[k % nx], ys[k / nx]))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Structure(format!(
            "{}: irregular grid, missing lattice points: {}{}",
            path.display(),
            missing.join(", "),
            if values.iter().filter(|v| v.is_nan()).count() > 5 {
                ", ..."
            } else {
                ""
            }
        )));
    }
    Ok(GridField {
        axis_x_name: header[0].clone(),
        axis_y_name: header[1].clone(),
        value_name: header[value_col].clone(),
        xs,
        ys,
        values,
    })
}

/// Renders a lattice field to SVG text.
pub fn render_svg(field: &GridField, colormap: Colormap) -> (String, RenderInfo) {
    let (nx, ny) = (field.xs.len(), field.ys.len());
    let min = field.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = field
        .values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let degenerate = !(max > min);
    let norm = |v: f64| -> f64 {
        if degenerate {
            0.5
        } else {
            (v - min) / (max - min)
        }
    };
    let (w, h) = (860.0, 640.0);
    let (px, py, pw, ph) = (80.0, 50.0, 620.0, 500.0);
    let cell_w = pw / nx as f64;
    let cell_h = ph / ny as f64;
    let mut svg = String::with_capacity(nx * ny * 64);
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\" \
         text-anchor=\"middle\">{}</text>\n",
        px + pw / 2.0,
        field.value_name
    );
    for (j, _) in field.ys.iter().enumerate() {
        for (i, _) in field.xs.iter().enumerate() {
            let v = field.values[j * nx + i];
            let (r, g, b) = colormap.color(norm(v));
            // y axis points up; SVG y points down
            let cx = px + i as f64 * cell_w;
            let cy = py + ph - (j + 1) as f64 * cell_h;
            let _ = write!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                 fill=\"rgb({r},{g},{b})\"/>\n",
                cx,
                cy,
                cell_w + 0.5,
                cell_h + 0.5
            );
        }
    }
    // axes
    let _ = write!(
        svg,
        "<rect x=\"{px}\" y=\"{py}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" \
         stroke=\"black\"/>\n"
    );
    let n_ticks = 5;
    for k in 0..n_ticks {
        let f = k as f64 / (n_ticks - 1) as f64;
        let xv = field.xs[0] + f * (field.xs[nx - 1] - field.xs[0]);
        let xpix = px + f * pw;
        let _ = write!(
            svg,
            "<line x1=\"{xpix}\" y1=\"{}\" x2=\"{xpix}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{xpix}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            py + ph,
            py + ph + 6.0,
            py + ph + 22.0,
            fmt_tick(xv)
        );
        let yv = field.ys[0] + f * (field.ys[ny - 1] - field.ys[0]);
        let ypix = py + ph - f * ph;
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{ypix}\" x2=\"{px}\" y2=\"{ypix}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{}</text>\n",
            px - 6.0,
            px - 10.0,
            ypix + 4.0,
            fmt_tick(yv)
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{}</text>\n",
        px + pw / 2.0,
        py + ph + 42.0,
        field.axis_x_name
    );
    let _ = write!(
        svg,
        "<text x=\"22\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\" transform=\"rotate(-90 22 {})\">{}</text>\n",
        py + ph / 2.0,
        py + ph / 2.0,
        field.axis_y_name
    );
    // colorbar
    let (bx, bw) = (px + pw + 30.0, 24.0);
    let segments = 64;
    for s in 0..segments {
        let f = s as f64 / (segments - 1) as f64;
        let (r, g, b) = colormap.color(f);
        let sy = py + ph - (s + 1) as f64 * ph / segments as f64;
        let _ = write!(
            svg,
            "<rect x=\"{bx}\" y=\"{sy:.2}\" width=\"{bw}\" height=\"{:.2}\" \
             fill=\"rgb({r},{g},{b})\"/>\n",
            ph / segments as f64 + 0.5
        );
    }
    let _ = write!(
        svg,
        "<rect x=\"{bx}\" y=\"{py}\" width=\"{bw}\" height=\"{ph}\" fill=\"none\" \
         stroke=\"black\"/>\n"
    );
    let bar_labels = if degenerate {
        vec![(py + ph / 2.0, min)]
    } else {
        vec![(py + ph, min), (py + ph / 2.0, 0.5 * (min + max)), (py, max)]
    };
    for (ypix, v) in bar_labels {
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            bx + bw + 6.0,
            ypix + 4.0,
            fmt_tick(v)
        );
    }
    svg.push_str("</svg>\n");
    let info = RenderInfo {
        cols: nx,
        rows: ny,
        cells: nx * ny,
        min,
        max,
    };
    (svg, info)
}

/// Parses `field_csv` and writes the rendered SVG to `output_svg`.
pub fn render_heatmap(
    field_csv: &Path,
    output_svg: &Path,
    colormap: Colormap,
    column: Option<&str>,
) -> Result<RenderInfo> {
    let field = parse_grid_csv(field_csv, column)?;
    let (svg, info) = render_svg(&field, colormap);
    std::fs::write(output_svg, svg).map_err(|e| Error::io(output_svg, e))?;
    Ok(info)
}
