//! Characterized pulse response: short-term conductance jump and pulse energy
//! on a rectangular (voltage, width) grid.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Characterization shipped with the crate. Mostly synthetic, see the file header.
pub const DEFAULT_GRID_CSV: &str = include_str!("../../data/device_default.csv");

pub const CSV_HEADER: [&str; 4] = ["voltage_V", "width_us", "delta_f_nS", "energy_pJ"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub voltage: f64,
    pub width_us: f64,
    pub delta_f_ns: f64,
    pub energy_pj: f64,
}

/// Rectangular grid, row-major by width: `delta_f_ns[w * n_v + v]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseGrid {
    voltages: Vec<f64>,
    widths_us: Vec<f64>,
    delta_f_ns: Vec<f64>,
    energy_pj: Vec<f64>,
}

impl Default for PulseGrid {
    fn default() -> Self {
        PulseGrid::from_csv_reader(DEFAULT_GRID_CSV.as_bytes())
            .expect("shipped characterization grid parses")
    }
}

fn sorted_unique(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

impl PulseGrid {
    pub fn from_points(points: &[GridPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidData("empty pulse grid".into()));
        }
        for p in points {
            let finite = [p.voltage, p.width_us, p.delta_f_ns, p.energy_pj]
                .iter()
                .all(|x| x.is_finite());
            if !finite || p.width_us <= 0.0 || p.delta_f_ns < 0.0 || p.energy_pj < 0.0 {
                return Err(Error::InvalidData(format!("bad grid point {p:?}")));
            }
        }
        let voltages = sorted_unique(points.iter().map(|p| p.voltage).collect());
        let widths_us = sorted_unique(points.iter().map(|p| p.width_us).collect());
        let (n_v, n_w) = (voltages.len(), widths_us.len());
        if n_v < 2 || n_w < 2 {
            return Err(Error::InvalidData(
                "grid needs at least two voltages and two widths".into(),
            ));
        }
        if points.len() != n_v * n_w {
            return Err(Error::InvalidData(format!(
                "grid is not rectangular: {} points for {n_v} voltages x {n_w} widths",
                points.len()
            )));
        }
        let mut delta_f_ns = vec![f64::NAN; n_v * n_w];
        let mut energy_pj = vec![f64::NAN; n_v * n_w];
        for p in points {
            let vi = voltages.iter().position(|&v| v == p.voltage).unwrap();
            let wi = widths_us.iter().position(|&w| w == p.width_us).unwrap();
            let idx = wi * n_v + vi;
            if !delta_f_ns[idx].is_nan() {
                return Err(Error::InvalidData(format!(
                    "duplicate grid point ({} V, {} us)",
                    p.voltage, p.width_us
                )));
            }
            delta_f_ns[idx] = p.delta_f_ns;
            energy_pj[idx] = p.energy_pj;
        }
        let grid = PulseGrid {
            voltages,
            widths_us,
            delta_f_ns,
            energy_pj,
        };
        grid.check_monotone()?;
        Ok(grid)
    }

    fn check_monotone(&self) -> Result<()> {
        let (n_v, n_w) = (self.voltages.len(), self.widths_us.len());
        for wi in 0..n_w {
            for vi in 1..n_v {
                if self.at(vi, wi) <= self.at(vi - 1, wi) {
                    return Err(Error::InvalidData(format!(
                        "delta_f not strictly increasing in voltage at {} us",
                        self.widths_us[wi]
                    )));
                }
            }
        }
        for vi in 0..n_v {
            for wi in 1..n_w {
                if self.at(vi, wi) <= self.at(vi, wi - 1) {
                    return Err(Error::InvalidData(format!(
                        "delta_f not strictly increasing in width at {} V",
                        self.voltages[vi]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reads `voltage_V,width_us,delta_f_nS,energy_pJ` rows; `#` lines are comments.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(Error::InvalidData(format!(
                "expected header {}, found {}",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let field = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidData(format!(
                            "record {}: column {} is not a number",
                            line + 1,
                            CSV_HEADER[i]
                        ))
                    })
            };
            points.push(GridPoint {
                voltage: field(0)?,
                width_us: field(1)?,
                delta_f_ns: field(2)?,
                energy_pj: field(3)?,
            });
        }
        PulseGrid::from_points(&points)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        PulseGrid::from_csv_reader(file)
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.delta_f_ns.len());
        for (wi, &w) in self.widths_us.iter().enumerate() {
            for (vi, &v) in self.voltages.iter().enumerate() {
                let idx = wi * self.voltages.len() + vi;
                out.push(GridPoint {
                    voltage: v,
                    width_us: w,
                    delta_f_ns: self.delta_f_ns[idx],
                    energy_pj: self.energy_pj[idx],
                });
            }
        }
        out
    }

    pub fn voltages(&self) -> &[f64] {
        &self.voltages
    }

    pub fn widths_us(&self) -> &[f64] {
        &self.widths_us
    }

    fn at(&self, vi: usize, wi: usize) -> f64 {
        self.delta_f_ns[wi * self.voltages.len() + vi]
    }

    fn energy_at(&self, vi: usize, wi: usize) -> f64 {
        self.energy_pj[wi * self.voltages.len() + vi]
    }

    /// Smallest and largest characterized short-term update (nS).
    pub fn achievable_range_ns(&self) -> (f64, f64) {
        let n_v = self.voltages.len();
        let n_w = self.widths_us.len();
        (self.at(0, 0), self.at(n_v - 1, n_w - 1))
    }

    fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
        let (first, last) = (axis[0], axis[axis.len() - 1]);
        if !(first..=last).contains(&x) {
            return None;
        }
        let i = axis
            .windows(2)
            .position(|w| x <= w[1])
            .unwrap_or(axis.len() - 2);
        let t = (x - axis[i]) / (axis[i + 1] - axis[i]);
        Some((i, t))
    }

    fn locate_width(&self, width_us: f64) -> Option<(usize, f64)> {
        if width_us <= 0.0 {
            return None;
        }
        let (first, last) = (self.widths_us[0], self.widths_us[self.widths_us.len() - 1]);
        if !(first..=last).contains(&width_us) {
            return None;
        }
        let i = self
            .widths_us
            .windows(2)
            .position(|w| width_us <= w[1])
            .unwrap_or(self.widths_us.len() - 2);
        let (a, b) = (self.widths_us[i].ln(), self.widths_us[i + 1].ln());
        Some((i, (width_us.ln() - a) / (b - a)))
    }

    fn bilinear(&self, voltage: f64, width_us: f64, value: impl Fn(usize, usize) -> f64) -> Result<f64> {
        let err = || Error::Extrapolation { voltage, width_us };
        let (vi, tv) = Self::locate(&self.voltages, voltage).ok_or_else(err)?;
        let (wi, tw) = self.locate_width(width_us).ok_or_else(err)?;
        let lo = value(vi, wi) * (1.0 - tv) + value(vi + 1, wi) * tv;
        let hi = value(vi, wi + 1) * (1.0 - tv) + value(vi + 1, wi + 1) * tv;
        Ok(lo * (1.0 - tw) + hi * tw)
    }

    /// Interpolated short-term update (nS): linear in voltage, linear in log width.
    pub fn delta_f_ns(&self, voltage: f64, width_us: f64) -> Result<f64> {
        self.bilinear(voltage, width_us, |v, w| self.at(v, w))
    }

    /// Interpolated pulse energy (pJ), same scheme as [`PulseGrid::delta_f_ns`].
    pub fn energy_pj(&self, voltage: f64, width_us: f64) -> Result<f64> {
        self.bilinear(voltage, width_us, |v, w| self.energy_at(v, w))
    }

    /// Pulses on the grid lines that realize `target_ns` exactly.
    pub(crate) fn exact_candidates(&self, target_ns: f64) -> Vec<(f64, f64)> {
        let n_v = self.voltages.len();
        let n_w = self.widths_us.len();
        let mut out = Vec::new();
        // Along each width row, delta_f is piecewise linear in voltage.
        for wi in 0..n_w {
            for vi in 0..n_v - 1 {
                let (a, b) = (self.at(vi, wi), self.at(vi + 1, wi));
                if (a..=b).contains(&target_ns) {
                    let t = (target_ns - a) / (b - a);
                    let v = self.voltages[vi] + t * (self.voltages[vi + 1] - self.voltages[vi]);
                    out.push((v, self.widths_us[wi]));
                }
            }
        }
        // Along each voltage column, piecewise linear in log width.
        for vi in 0..n_v {
            for wi in 0..n_w - 1 {
                let (a, b) = (self.at(vi, wi), self.at(vi, wi + 1));
                if (a..=b).contains(&target_ns) {
                    let t = (target_ns - a) / (b - a);
                    let (la, lb) = (self.widths_us[wi].ln(), self.widths_us[wi + 1].ln());
                    let w = if t == 0.0 {
                        self.widths_us[wi]
                    } else if t == 1.0 {
                        self.widths_us[wi + 1]
                    } else {
                        (la + t * (lb - la)).exp()
                    };
                    out.push((self.voltages[vi], w));
                }
            }
        }
        out
    }
}
