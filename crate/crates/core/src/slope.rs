//! Slope geometry, cell grid and undrained (φ = 0) circular-arc limit
//! equilibrium.
//!
//! The soil body is the union of active grid cells: every column is solid from
//! the rigid base up to its top, and the tops form a non-increasing staircase
//! from crest to toe. For a trial circle with center `(x_c, y_c)` and radius
//! `R` the factor of safety is the ratio of resisting to driving moment about
//! the center:
//!
//! ```text
//! FOS = R · Σ_k c_u(s_k) · Δs_k  /  Σ_j W_j · (x_c - x_j)
//! ```
//!
//! The arc is cut into equal segments no longer than half a cell and each
//! segment takes the strength of the cell containing its midpoint. The
//! driving moment integrates soil weight above the arc column by column in
//! closed form, so it does not depend on the field and is computed once per
//! circle.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{CellGrid, FieldRealization};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlopeError {
    #[error("invalid slope geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid search specification: {0}")]
    InvalidSearch(String),
    #[error("infeasible trial circle: {0}")]
    InfeasibleCircle(&'static str),
    #[error("no feasible trial circle in the search space")]
    EmptySearch,
    #[error("field has {found} cells, grid has {expected}")]
    FieldMismatch { expected: usize, found: usize },
}

fn default_origin() -> [f64; 2] {
    [0.0, 0.0]
}

/// Slope cross-section. The crest is on the left, the toe on the right, and
/// the rigid base sits at `origin[1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeGeometry {
    /// Degrees from horizontal.
    pub slope_angle: f64,
    /// m
    pub slope_height: f64,
    /// Depth from the crest surface to the rigid base, m.
    pub foundation_depth: f64,
    /// Level ground behind the crest, m.
    pub crest_extent: f64,
    /// Level ground beyond the toe, m.
    pub toe_extent: f64,
    /// kN/m³
    pub unit_weight: f64,
    /// m
    pub cell_size: f64,
    /// Lower-left corner of the domain, m.
    #[serde(default = "default_origin")]
    pub origin: [f64; 2],
}

impl Default for SlopeGeometry {
    /// 45° slope, 5 m high, 10 m to the rigid base, 20 kN/m³ soil on 0.5 m
    /// cells. The lateral extents give 795 active cells.
    fn default() -> Self {
        Self {
            slope_angle: 45.0,
            slope_height: 5.0,
            foundation_depth: 10.0,
            crest_extent: 10.0,
            toe_extent: 12.5,
            unit_weight: 20.0,
            cell_size: 0.5,
            origin: [0.0, 0.0],
        }
    }
}

fn whole_cells(len: f64, cell: f64) -> Option<usize> {
    let k = (len / cell).round();
    ((len / cell - k).abs() < 1e-9).then_some(k as usize)
}

impl SlopeGeometry {
    pub fn validate(&self) -> Result<(), SlopeError> {
        let bad = |m: String| Err(SlopeError::InvalidGeometry(m));
        if !(self.slope_angle > 0.0 && self.slope_angle < 90.0) {
            return bad(format!("slope angle must lie in (0, 90), got {}", self.slope_angle));
        }
        if !(self.slope_height > 0.0) {
            return bad(format!("slope height must be positive, got {}", self.slope_height));
        }
        if !(self.foundation_depth >= self.slope_height) {
            return bad("foundation depth must be at least the slope height".into());
        }
        if !(self.cell_size > 0.0) || !(self.unit_weight > 0.0) {
            return bad("cell size and unit weight must be positive".into());
        }
        if !(self.crest_extent >= 0.0 && self.toe_extent >= 0.0) {
            return bad("crest and toe extents must be non-negative".into());
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return bad("origin must be finite".into());
        }
        for (name, len) in [
            ("slope height", self.slope_height),
            ("foundation depth", self.foundation_depth),
            ("domain width", self.width()),
        ] {
            if whole_cells(len, self.cell_size).is_none() {
                return bad(format!("{name} {len} m is not a whole number of {} m cells", self.cell_size));
            }
        }
        Ok(())
    }

    /// Horizontal run of the slope face.
    pub fn run(&self) -> f64 {
        self.slope_height / self.slope_angle.to_radians().tan()
    }
    pub fn width(&self) -> f64 {
        self.crest_extent + self.run() + self.toe_extent
    }
    pub fn x_crest(&self) -> f64 {
        self.origin[0] + self.crest_extent
    }
    pub fn x_toe(&self) -> f64 {
        self.x_crest() + self.run()
    }
    pub fn y_base(&self) -> f64 {
        self.origin[1]
    }
    pub fn y_crest(&self) -> f64 {
        self.origin[1] + self.foundation_depth
    }
    pub fn y_toe(&self) -> f64 {
        self.y_crest() - self.slope_height
    }

    /// Height of the idealized (straight-faced) ground surface at `x`.
    pub fn surface(&self, x: f64) -> f64 {
        if x <= self.x_crest() {
            self.y_crest()
        } else if x >= self.x_toe() {
            self.y_toe()
        } else {
            self.y_crest() - (x - self.x_crest()) * self.slope_angle.to_radians().tan()
        }
    }
}

/// Cells whose centers lie strictly below the ground surface. A center lying
/// exactly on the face (every face column of a 45° slope on square cells) is
/// outside, so the staircase is inscribed in the straight face.
pub fn build_grid(geometry: &SlopeGeometry) -> Result<CellGrid, SlopeError> {
    geometry.validate()?;
    let h = geometry.cell_size;
    let n_cols = whole_cells(geometry.width(), h).unwrap_or(0);
    let n_rows = whole_cells(geometry.foundation_depth, h).unwrap_or(0);
    let [ox, oy] = geometry.origin;
    Ok(CellGrid::from_lattice(h, geometry.origin, n_cols, n_rows, |col, row| {
        let x = ox + (col as f64 + 0.5) * h;
        let y = oy + (row as f64 + 0.5) * h;
        y < geometry.surface(x) - 1e-9 * h
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialCircle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Failed,
    Stable,
}

impl Status {
    /// 1 = failed, 0 = stable.
    pub fn label(self) -> u8 {
        match self {
            Status::Failed => 1,
            Status::Stable => 0,
        }
    }
    /// Failure is strict: a factor of safety of exactly 1 is stable.
    pub fn from_fos(fos: f64) -> Self {
        if fos < 1.0 {
            Status::Failed
        } else {
            Status::Stable
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub status: Status,
    pub fos_min: Option<f64>,
    pub critical_circle: Option<TrialCircle>,
    /// Number of circles whose FOS was evaluated.
    pub evaluations: usize,
}

/// Box of circle centers and radii scanned on a regular lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub center_x: [f64; 2],
    pub center_y: [f64; 2],
    pub radius_min: f64,
    /// `None` means the largest radius that keeps the arc above the rigid base.
    pub radius_max: Option<f64>,
    /// Lattice spacing for center x, center y and radius.
    pub spacing: [f64; 3],
}

impl SearchSpec {
    /// Centers from one slope height behind the crest to one slope height
    /// beyond the toe, and from crest level to 1.5 slope heights above it;
    /// radii from half the slope height up to base-tangent; all at cell
    /// spacing.
    pub fn default_for(geometry: &SlopeGeometry) -> Self {
        let h = geometry.slope_height;
        let s = geometry.cell_size;
        Self {
            center_x: [geometry.x_crest() - h, geometry.x_toe() + h],
            center_y: [geometry.y_crest(), geometry.y_crest() + 1.5 * h],
            radius_min: 0.5 * h,
            radius_max: None,
            spacing: [s, s, s],
        }
    }

    pub fn validate(&self) -> Result<(), SlopeError> {
        let bad = |m: &str| Err(SlopeError::InvalidSearch(m.into()));
        if self.spacing.iter().any(|&d| !(d > 0.0)) {
            return bad("spacing must be positive");
        }
        if !(self.center_x[1] >= self.center_x[0]) || !(self.center_y[1] >= self.center_y[0]) {
            return bad("center ranges must be ordered");
        }
        if !(self.radius_min > 0.0) || self.radius_max.is_some_and(|r| !(r >= self.radius_min)) {
            return bad("radius range must be positive and ordered");
        }
        Ok(())
    }

    /// Same box, every spacing divided by `factor`.
    pub fn densified(&self, factor: f64) -> Self {
        Self { spacing: self.spacing.map(|d| d / factor), ..*self }
    }

    fn steps(lo: f64, hi: f64, d: f64) -> usize {
        ((hi - lo) / d + 1e-9).floor() as usize + 1
    }

    fn radius_upper(&self, yc: f64, geometry: &SlopeGeometry) -> f64 {
        let base = yc - geometry.y_base();
        self.radius_max.map_or(base, |r| r.min(base))
    }

    /// Lattice point for (possibly half-integer) lattice coordinates, if it
    /// lies inside the box.
    fn circle_at(&self, geometry: &SlopeGeometry, ix: f64, iy: f64, ir: f64) -> Option<TrialCircle> {
        let [dx, dy, dr] = self.spacing;
        let xc = self.center_x[0] + ix * dx;
        let yc = self.center_y[0] + iy * dy;
        let r = self.radius_min + ir * dr;
        let tol = 1e-9;
        let inside = ix >= 0.0
            && iy >= 0.0
            && ir >= 0.0
            && xc <= self.center_x[1] + tol
            && yc <= self.center_y[1] + tol
            && r <= self.radius_upper(yc, geometry) + tol;
        inside.then_some(TrialCircle { center: [xc, yc], radius: r })
    }

    /// Every lattice circle, ordered by center x, center y, then radius.
    pub fn lattice(&self, geometry: &SlopeGeometry) -> Vec<TrialCircle> {
        self.lattice_indexed(geometry).into_iter().map(|(c, _)| c).collect()
    }

    fn lattice_indexed(&self, geometry: &SlopeGeometry) -> Vec<(TrialCircle, [usize; 3])> {
        let [dx, dy, dr] = self.spacing;
        let mut out = Vec::new();
        for ix in 0..Self::steps(self.center_x[0], self.center_x[1], dx) {
            for iy in 0..Self::steps(self.center_y[0], self.center_y[1], dy) {
                let yc = self.center_y[0] + iy as f64 * dy;
                let r_hi = self.radius_upper(yc, geometry);
                if r_hi < self.radius_min {
                    continue;
                }
                for ir in 0..Self::steps(self.radius_min, r_hi, dr) {
                    if let Some(c) = self.circle_at(geometry, ix as f64, iy as f64, ir as f64) {
                        out.push((c, [ix, iy, ir]));
                    }
                }
            }
        }
        out
    }
}

/// Field-independent part of a feasible circle.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleCut {
    pub circle: TrialCircle,
    /// Horizontal extent of the arc inside the soil.
    pub entry_x: f64,
    pub exit_x: f64,
    /// `Σ W_j (x_c - x_j)` in kN·m per metre run; soil behind the center
    /// (crest side) is destabilizing.
    pub driving_moment: f64,
    /// `R · Δs`, the per-segment resisting lever times segment length.
    pub segment_factor: f64,
    /// Cell index under each arc segment, in arc order.
    pub cells: Vec<u32>,
}

impl CircleCut {
    pub fn arc_length(&self) -> f64 {
        self.segment_factor / self.circle.radius * self.cells.len() as f64
    }

    /// Factor of safety for per-cell strengths `cu`; `+∞` when nothing drives
    /// the circle.
    pub fn fos(&self, cu: &[f64]) -> f64 {
        if !(self.driving_moment > 0.0) {
            return f64::INFINITY;
        }
        let s: f64 = self.cells.iter().map(|&c| cu[c as usize]).sum();
        self.segment_factor * s / self.driving_moment
    }
}

/// Intersects `circle` with the soil body. Feasible circles have their center
/// at or above the crest, stay above the rigid base, cross the ground surface
/// exactly twice and do not reach the lateral boundaries.
pub fn cut_circle(circle: &TrialCircle, geometry: &SlopeGeometry, grid: &CellGrid) -> Result<CircleCut, SlopeError> {
    let [xc, yc] = circle.center;
    let r = circle.radius;
    let h = grid.cell_size();
    let [ox, oy] = grid.origin();
    if !(r > 0.0) || !r.is_finite() {
        return Err(SlopeError::InfeasibleCircle("radius must be positive"));
    }
    if yc - r < geometry.y_base() - 1e-9 {
        return Err(SlopeError::InfeasibleCircle("arc penetrates the rigid base"));
    }
    if yc < geometry.y_crest() - 1e-9 {
        return Err(SlopeError::InfeasibleCircle("center lies below the crest"));
    }

    // Submerged x-intervals, one candidate per column.
    let mut pieces: Vec<(usize, f64, f64, f64)> = Vec::new();
    let col_lo = (((xc - r - ox) / h).floor().max(0.0)) as usize;
    let col_hi = (((xc + r - ox) / h).ceil() as usize).min(grid.n_cols());
    for col in col_lo..col_hi {
        let top = oy + grid.column_height(col) as f64 * h;
        let rise = yc - top;
        if rise >= r {
            continue;
        }
        let half = (r * r - rise * rise).sqrt();
        let xl = ox + col as f64 * h;
        let a = (xc - half).max(xl);
        let b = (xc + half).min(xl + h);
        if b > a {
            pieces.push((col, a, b, top));
        }
    }
    let mut intervals = 0;
    let mut prev_end = f64::NEG_INFINITY;
    for &(_, a, b, _) in &pieces {
        if a > prev_end + 1e-9 {
            intervals += 1;
        }
        prev_end = b;
    }
    if intervals != 1 {
        return Err(SlopeError::InfeasibleCircle("arc does not cross the ground surface exactly twice"));
    }
    let entry_x = pieces[0].1;
    let exit_x = pieces[pieces.len() - 1].2;
    let right = ox + grid.n_cols() as f64 * h;
    if entry_x <= ox + 1e-9 || exit_x >= right - 1e-9 {
        return Err(SlopeError::InfeasibleCircle("arc reaches a lateral boundary"));
    }

    let r2 = r * r;
    let cap = |u: f64| (r2 - u * u).max(0.0).powf(1.5);
    // Slope descends toward +x: soil on the crest side of the center
    // (x < x_c) turns the circle toward the toe.
    let driving_moment = -geometry.unit_weight
        * pieces
            .iter()
            .map(|&(_, a, b, top)| {
                let (ua, ub) = (a - xc, b - xc);
                (top - yc) * (ub * ub - ua * ua) / 2.0 - (cap(ub) - cap(ua)) / 3.0
            })
            .sum::<f64>();

    let theta_in = ((entry_x - xc) / r).clamp(-1.0, 1.0).asin();
    let theta_out = ((exit_x - xc) / r).clamp(-1.0, 1.0).asin();
    debug_assert!(theta_in >= -FRAC_PI_2 && theta_out <= FRAC_PI_2);
    let length = r * (theta_out - theta_in);
    let n_seg = ((length / (0.5 * h)).ceil() as usize).max(1);
    let dtheta = (theta_out - theta_in) / n_seg as f64;
    let cells = (0..n_seg)
        .map(|k| {
            let t = theta_in + (k as f64 + 0.5) * dtheta;
            let (x, y) = (xc + r * t.sin(), yc - r * t.cos());
            let col = (((x - ox) / h).floor().max(0.0) as usize).min(grid.n_cols() - 1);
            let height = grid.column_height(col).max(1);
            let row = (((y - oy) / h).floor().max(0.0) as usize).min(height - 1);
            grid.cell_at(col, row).expect("arc segment lies in an active cell") as u32
        })
        .collect();
    Ok(CircleCut { circle: *circle, entry_x, exit_x, driving_moment, segment_factor: r * (r * dtheta), cells })
}

/// Factor of safety of one trial circle.
pub fn circle_fos(field: &FieldRealization, circle: &TrialCircle, geometry: &SlopeGeometry) -> Result<f64, SlopeError> {
    let grid = build_grid(geometry)?;
    check_field(&grid, &field.values)?;
    Ok(cut_circle(circle, geometry, &grid)?.fos(&field.values))
}

fn check_field(grid: &CellGrid, cu: &[f64]) -> Result<(), SlopeError> {
    if cu.len() != grid.n_cells() {
        return Err(SlopeError::FieldMismatch { expected: grid.n_cells(), found: cu.len() });
    }
    Ok(())
}

/// Feasible coarse-lattice circles of one geometry and search box, cut once
/// and reused for every field.
#[derive(Debug, Clone)]
pub struct StabilityEvaluator {
    geometry: SlopeGeometry,
    search: SearchSpec,
    grid: CellGrid,
    bank: Vec<(CircleCut, [usize; 3])>,
}

enum Scan {
    /// First circle found below 1, with the number evaluated so far.
    Failed(TrialCircle, usize),
    Minimum { fos: f64, index: usize, evaluations: usize },
}

impl StabilityEvaluator {
    pub fn new(geometry: SlopeGeometry, search: SearchSpec) -> Result<Self, SlopeError> {
        search.validate()?;
        let grid = build_grid(&geometry)?;
        let bank: Vec<_> = search
            .lattice_indexed(&geometry)
            .into_iter()
            .filter_map(|(c, idx)| cut_circle(&c, &geometry, &grid).ok().map(|cut| (cut, idx)))
            .collect();
        if bank.is_empty() {
            return Err(SlopeError::EmptySearch);
        }
        Ok(Self { geometry, search, grid, bank })
    }

    /// Evaluator with the default search box.
    pub fn with_default_search(geometry: SlopeGeometry) -> Result<Self, SlopeError> {
        Self::new(geometry, SearchSpec::default_for(&geometry))
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }
    pub fn geometry(&self) -> &SlopeGeometry {
        &self.geometry
    }
    pub fn search(&self) -> &SearchSpec {
        &self.search
    }
    /// Feasible coarse circles, in scan order.
    pub fn circles(&self) -> impl Iterator<Item = &CircleCut> {
        self.bank.iter().map(|(c, _)| c)
    }
    pub fn n_circles(&self) -> usize {
        self.bank.len()
    }

    fn scan(&self, cu: &[f64], stop_below_one: bool) -> Scan {
        let mut best = (f64::INFINITY, 0);
        for (i, (cut, _)) in self.bank.iter().enumerate() {
            let f = cut.fos(cu);
            if stop_below_one && f < 1.0 {
                return Scan::Failed(cut.circle, i + 1);
            }
            if f < best.0 {
                best = (f, i);
            }
        }
        Scan::Minimum { fos: best.0, index: best.1, evaluations: self.bank.len() }
    }

    /// Circles at half the lattice spacing within one coarse step of the
    /// incumbent, excluding points already on the coarse lattice.
    fn refine(&self, cu: &[f64], incumbent: usize, mut best: (f64, TrialCircle)) -> ((f64, TrialCircle), usize) {
        let [ix, iy, ir] = self.bank[incumbent].1.map(|v| v as f64);
        let mut evaluations = 0;
        for kx in -2i32..=2 {
            for ky in -2i32..=2 {
                for kr in -2i32..=2 {
                    if kx % 2 == 0 && ky % 2 == 0 && kr % 2 == 0 {
                        continue;
                    }
                    let Some(c) = self.search.circle_at(
                        &self.geometry,
                        ix + kx as f64 / 2.0,
                        iy + ky as f64 / 2.0,
                        ir + kr as f64 / 2.0,
                    ) else {
                        continue;
                    };
                    let Ok(cut) = cut_circle(&c, &self.geometry, &self.grid) else { continue };
                    evaluations += 1;
                    let f = cut.fos(cu);
                    if f < best.0 {
                        best = (f, c);
                    }
                }
            }
        }
        (best, evaluations)
    }

    /// Minimum FOS over the coarse lattice followed by one refinement pass at
    /// half spacing around the coarse minimizer.
    pub fn min_fos(&self, cu: &[f64]) -> Result<StabilityResult, SlopeError> {
        check_field(&self.grid, cu)?;
        let Scan::Minimum { fos, index, evaluations } = self.scan(cu, false) else { unreachable!() };
        let ((fos, circle), extra) = self.refine(cu, index, (fos, self.bank[index].0.circle));
        Ok(StabilityResult {
            status: Status::from_fos(fos),
            fos_min: Some(fos),
            critical_circle: Some(circle),
            evaluations: evaluations + extra,
        })
    }

    /// Failed/stable label. Scans the coarse lattice in order and stops at the
    /// first circle below 1; otherwise runs the same refinement as
    /// [`min_fos`](Self::min_fos), so the label always matches
    /// `min_fos < 1`.
    pub fn classify(&self, cu: &[f64]) -> Result<StabilityResult, SlopeError> {
        check_field(&self.grid, cu)?;
        match self.scan(cu, true) {
            Scan::Failed(circle, evaluations) => Ok(StabilityResult {
                status: Status::Failed,
                fos_min: None,
                critical_circle: Some(circle),
                evaluations,
            }),
            Scan::Minimum { fos, index, evaluations } => {
                let ((fos, circle), extra) = self.refine(cu, index, (fos, self.bank[index].0.circle));
                Ok(StabilityResult {
                    status: Status::from_fos(fos),
                    fos_min: None,
                    critical_circle: Some(circle),
                    evaluations: evaluations + extra,
                })
            }
        }
    }
}

pub fn min_fos(field: &FieldRealization, geometry: &SlopeGeometry, search: &SearchSpec) -> Result<StabilityResult, SlopeError> {
    StabilityEvaluator::new(*geometry, *search)?.min_fos(&field.values)
}

pub fn classify_stability(
    field: &FieldRealization,
    geometry: &SlopeGeometry,
    search: &SearchSpec,
) -> Result<StabilityResult, SlopeError> {
    StabilityEvaluator::new(*geometry, *search)?.classify(&field.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous(n: usize, cu: f64) -> Vec<f64> {
        vec![cu; n]
    }

    #[test]
    fn rectangular_body_without_cut() {
        let g = SlopeGeometry {
            slope_angle: 45.0,
            slope_height: 1.0,
            foundation_depth: 1.0,
            crest_extent: 1.0,
            toe_extent: 0.0,
            unit_weight: 20.0,
            cell_size: 0.5,
            origin: [0.0, 0.0],
        };
        // 4x2 lattice: the crest block is whole, the face keeps one cell
        let grid = build_grid(&g).unwrap();
        assert_eq!((grid.n_cols(), grid.n_rows()), (4, 2));
        assert_eq!(grid.n_cells(), 4 + 1);
        let block = CellGrid::from_lattice(0.5, [0.0, 0.0], 2, 2, |_, _| true);
        assert_eq!(block.n_cells(), 4);
    }

    #[test]
    fn default_grid_cell_count() {
        let grid = build_grid(&SlopeGeometry::default()).unwrap();
        // 20 rows; upper 10 rows hold 20..29 cells, lower 10 rows 55 each
        assert_eq!(grid.n_cells(), 245 + 550);
        let rel = (grid.n_cells() as f64 - 800.0).abs() / 800.0;
        assert!(rel <= 0.10);
    }

    #[test]
    fn staircase_is_monotone() {
        let grid = build_grid(&SlopeGeometry::default()).unwrap();
        let heights: Vec<_> = (0..grid.n_cols()).map(|c| grid.column_height(c)).collect();
        assert!(heights.windows(2).all(|w| w[0] >= w[1]));
        // columns are solid from the base
        for (col, &h) in heights.iter().enumerate() {
            assert!((h..grid.n_rows()).all(|r| grid.cell_at(col, r).is_none()));
        }
    }

    #[test]
    fn geometry_rejects_uneven_extents() {
        let g = SlopeGeometry { crest_extent: 10.2, ..Default::default() };
        assert!(matches!(build_grid(&g), Err(SlopeError::InvalidGeometry(_))));
        let g = SlopeGeometry { slope_angle: 30.0, ..Default::default() };
        assert!(build_grid(&g).is_err());
        let g = SlopeGeometry { foundation_depth: 4.0, ..Default::default() };
        assert!(build_grid(&g).is_err());
        let g = SlopeGeometry { slope_angle: 90.0, ..Default::default() };
        assert!(build_grid(&g).is_err());
    }

    #[test]
    fn infeasible_circles() {
        let g = SlopeGeometry::default();
        let grid = build_grid(&g).unwrap();
        let below_base = TrialCircle { center: [12.5, 12.0], radius: 12.5 };
        assert!(cut_circle(&below_base, &g, &grid).is_err());
        let misses = TrialCircle { center: [12.5, 17.0], radius: 2.0 };
        assert!(cut_circle(&misses, &g, &grid).is_err());
        let too_wide = TrialCircle { center: [12.5, 16.0], radius: 15.9 };
        assert!(matches!(cut_circle(&too_wide, &g, &grid), Err(SlopeError::InfeasibleCircle(_))));
        let ok = TrialCircle { center: [12.5, 13.0], radius: 7.0 };
        let cut = cut_circle(&ok, &g, &grid).unwrap();
        assert!(cut.entry_x < g.x_crest() && cut.exit_x > g.x_crest());
        assert!(cut.driving_moment > 0.0);
        assert!(cut.segment_factor / ok.radius <= 0.25 + 1e-12);
    }

    #[test]
    fn homogeneous_fos_scales_linearly() {
        let g = SlopeGeometry::default();
        let grid = build_grid(&g).unwrap();
        let c = TrialCircle { center: [12.5, 13.0], radius: 8.0 };
        let cut = cut_circle(&c, &g, &grid).unwrap();
        let a = cut.fos(&homogeneous(grid.n_cells(), 18.6));
        let b = cut.fos(&homogeneous(grid.n_cells(), 37.2));
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn uphill_only_circle_is_not_critical() {
        // A small circle cutting only the flat crest drives nothing net.
        let g = SlopeGeometry::default();
        let grid = build_grid(&g).unwrap();
        let c = TrialCircle { center: [5.0, 10.0], radius: 2.0 };
        let cut = cut_circle(&c, &g, &grid).unwrap();
        assert!(cut.driving_moment.abs() < 1e-9);
        assert_eq!(cut.fos(&homogeneous(grid.n_cells(), 10.0)), f64::INFINITY);
    }

    #[test]
    fn refinement_never_raises_the_minimum() {
        let g = SlopeGeometry::default();
        let ev = StabilityEvaluator::with_default_search(g).unwrap();
        let cu: Vec<f64> = (0..ev.grid().n_cells()).map(|i| 15.0 + (i % 7) as f64).collect();
        let coarse = ev.circles().map(|c| c.fos(&cu)).fold(f64::INFINITY, f64::min);
        let res = ev.min_fos(&cu).unwrap();
        assert!(res.fos_min.unwrap() <= coarse);
        assert!(res.evaluations > ev.n_circles());
    }

    #[test]
    fn classify_agrees_with_min_fos() {
        let g = SlopeGeometry::default();
        let ev = StabilityEvaluator::with_default_search(g).unwrap();
        let n = ev.grid().n_cells();
        for cu in [9.3, 18.6, 33.5] {
            let v = homogeneous(n, cu);
            let m = ev.min_fos(&v).unwrap();
            let c = ev.classify(&v).unwrap();
            assert_eq!(m.status, c.status);
            assert_eq!(c.fos_min, None);
        }
        assert_eq!(ev.classify(&homogeneous(n, 9.3)).unwrap().status, Status::Failed);
        assert_eq!(ev.classify(&homogeneous(n, 33.5)).unwrap().status, Status::Stable);
    }

    #[test]
    fn tie_at_one_is_stable() {
        assert_eq!(Status::from_fos(1.0), Status::Stable);
        assert_eq!(Status::from_fos(0.999_999), Status::Failed);
    }

    #[test]
    fn field_length_checked() {
        let ev = StabilityEvaluator::with_default_search(SlopeGeometry::default()).unwrap();
        assert!(matches!(ev.min_fos(&[1.0; 3]), Err(SlopeError::FieldMismatch { .. })));
    }

    #[test]
    fn empty_search_is_an_error() {
        let g = SlopeGeometry::default();
        let s = SearchSpec { center_x: [0.0, 0.5], center_y: [30.0, 30.0], radius_min: 1.0, radius_max: Some(2.0), spacing: [0.5; 3] };
        assert!(matches!(StabilityEvaluator::new(g, s), Err(SlopeError::EmptySearch)));
    }
}
