//! Planar environment geometry.
//!
//! The free space around the manipulator tip is a convex polygon `N` given as
//! halfspaces `H r <= h`. Every facet is stored in slope-intercept form, so an
//! upper facet reads `[-m, 1] r <= h` and a lower facet reads `[m, -1] r <= h`.
//! Expanding each facet outward by the maximum admissible surface deflection
//! yields the force-safe set `P`; extra rows near each vertex of `N` keep the
//! combined deflection of two neighbouring facets bounded.

use nalgebra::Vector2;
use thiserror::Error;

/// Relative tolerance used for parallelism, ties and emptiness tests.
const GEOM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("row {row}: second column is zero, a vertical facet has no slope-intercept form")]
    ZeroSecondColumn { row: usize },
    #[error("row {row}: non-finite coefficient")]
    NonFinite { row: usize },
    #[error("rows {first} and {second} describe the same facet")]
    DuplicateRow { first: usize, second: usize },
    #[error("row {row} is redundant (it never bounds the polytope)")]
    RedundantRow { row: usize },
    #[error("polytope has an empty interior")]
    EmptyPolytope,
    #[error("polytope has no rows")]
    NoRows,
    #[error("degenerate vertex at ({x}, {y}): more than two facets meet")]
    VertexDegenerate { x: f64, y: f64 },
    #[error("vertex correction row between facets {first} and {second} is vertical")]
    VerticalVertexRow { first: usize, second: usize },
    #[error("invalid deformation model: {0}")]
    InvalidModel(&'static str),
    #[error("negative deflection {0}")]
    NegativeDeflection(f64),
    #[error("maximum deflection must be finite and non-negative, got {0}")]
    InvalidDeflection(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `y <= m x + h`, stored as `[-m, 1] r <= h`.
    Upper,
    /// `y >= m x - h`, stored as `[m, -1] r <= h`.
    Lower,
}

/// One normalized halfspace `coeffs . r <= offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub coeffs: Vector2<f64>,
    pub offset: f64,
    pub orientation: Orientation,
}

impl Facet {
    /// Builds a facet directly from slope-intercept data.
    pub fn new(coeffs: Vector2<f64>, offset: f64, orientation: Orientation) -> Self {
        Self {
            coeffs,
            offset,
            orientation,
        }
    }

    /// Slope `m` of the facet line.
    pub fn slope(&self) -> f64 {
        match self.orientation {
            Orientation::Upper => -self.coeffs.x,
            Orientation::Lower => self.coeffs.x,
        }
    }

    /// `sqrt(m^2 + 1)`, the Euclidean norm of the row.
    pub fn row_norm(&self) -> f64 {
        self.coeffs.x.hypot(1.0)
    }

    /// y-intercept of the facet line `y = m x + c`.
    fn intercept(&self) -> f64 {
        // coeffs.y is exactly +1 or -1
        self.offset * self.coeffs.y
    }

    fn line_y(&self, x: f64) -> f64 {
        self.slope() * x + self.intercept()
    }

    /// Outward unit normal: `n^U = [-m, 1]/sqrt(m^2+1)` for upper facets and
    /// `n^L = -n^U` for lower facets.
    pub fn unit_normal(&self) -> Vector2<f64> {
        self.coeffs / self.row_norm()
    }

    /// Signed distance from the facet line, positive on the infeasible side.
    pub fn signed_distance(&self, r: &Vector2<f64>) -> f64 {
        (self.coeffs.dot(r) - self.offset) / self.row_norm()
    }

    /// Penetration depth of `r` through the facet, zero when not in contact.
    pub fn deflection(&self, r: &Vector2<f64>) -> f64 {
        self.signed_distance(r).max(0.0)
    }

    /// The same line moved along its outward normal by `distance`.
    pub fn translated(&self, distance: f64) -> Self {
        Self {
            offset: self.offset + distance * self.row_norm(),
            ..*self
        }
    }
}

/// Free-function form of [`Facet::unit_normal`].
pub fn facet_normal(facet: &Facet) -> Vector2<f64> {
    facet.unit_normal()
}

/// A vertex of a polygon and the indices of the two facets that meet there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub point: Vector2<f64>,
    pub facets: (usize, usize),
}

/// Convex polygon (possibly unbounded) described by normalized halfspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspacePolytope {
    facets: Vec<Facet>,
}

impl HalfspacePolytope {
    /// Normalizes raw rows `a x + b y <= c` into slope-intercept form and
    /// validates the result (nonempty interior, no duplicate or redundant rows).
    pub fn normalize(raw: &[([f64; 2], f64)]) -> Result<Self, GeometryError> {
        if raw.is_empty() {
            return Err(GeometryError::NoRows);
        }
        let mut facets = Vec::with_capacity(raw.len());
        for (row, &([a, b], c)) in raw.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                return Err(GeometryError::NonFinite { row });
            }
            if b == 0.0 || b.abs() <= GEOM_EPS * a.abs() {
                return Err(GeometryError::ZeroSecondColumn { row });
            }
            let scale = b.abs();
            let orientation = if b > 0.0 {
                Orientation::Upper
            } else {
                Orientation::Lower
            };
            let sign = if b > 0.0 { 1.0 } else { -1.0 };
            facets.push(Facet {
                coeffs: Vector2::new(a / scale, sign),
                offset: c / scale,
                orientation,
            });
        }
        Self::from_facets(facets)
    }

    /// Validates already-normalized facets.
    pub fn from_facets(facets: Vec<Facet>) -> Result<Self, GeometryError> {
        if facets.is_empty() {
            return Err(GeometryError::NoRows);
        }
        for (row, f) in facets.iter().enumerate() {
            if !(f.coeffs.x.is_finite() && f.offset.is_finite()) {
                return Err(GeometryError::NonFinite { row });
            }
            if f.coeffs.y.abs() != 1.0 {
                return Err(GeometryError::ZeroSecondColumn { row });
            }
        }
        for i in 0..facets.len() {
            for j in (i + 1)..facets.len() {
                let (fi, fj) = (&facets[i], &facets[j]);
                if fi.orientation == fj.orientation
                    && approx_eq(fi.coeffs.x, fj.coeffs.x)
                    && approx_eq(fi.offset, fj.offset)
                {
                    return Err(GeometryError::DuplicateRow {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        let poly = Self { facets };
        poly.interior_point()?;
        for row in 0..poly.facets.len() {
            if poly.facet_interval(row).is_none() {
                return Err(GeometryError::RedundantRow { row });
            }
        }
        Ok(poly)
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn contains(&self, r: &Vector2<f64>) -> bool {
        self.facets.iter().all(|f| f.coeffs.dot(r) <= f.offset)
    }

    /// Per-row deflection of `r` (clamped at zero).
    pub fn deflection(&self, r: &Vector2<f64>) -> Vec<f64> {
        deflection(&self.facets, r)
    }

    /// A strictly feasible point.
    ///
    /// Upper facets bound `y` from above and lower facets from below, so the
    /// vertical gap `min_upper(x) - max_lower(x)` is concave and piecewise
    /// linear. Its maximizer is a breakpoint, or the gap is unbounded; the
    /// midpoint of the gap at the best candidate is returned.
    pub fn interior_point(&self) -> Result<Vector2<f64>, GeometryError> {
        let uppers: Vec<(f64, f64)> = self
            .facets
            .iter()
            .filter(|f| f.orientation == Orientation::Upper)
            .map(|f| (f.slope(), f.intercept()))
            .collect();
        let lowers: Vec<(f64, f64)> = self
            .facets
            .iter()
            .filter(|f| f.orientation == Orientation::Lower)
            .map(|f| (f.slope(), f.intercept()))
            .collect();
        let min_upper =
            |x: f64| uppers.iter().map(|&(m, c)| m * x + c).fold(f64::INFINITY, f64::min);
        let max_lower = |x: f64| {
            lowers
                .iter()
                .map(|&(m, c)| m * x + c)
                .fold(f64::NEG_INFINITY, f64::max)
        };

        if lowers.is_empty() {
            return Ok(Vector2::new(0.0, min_upper(0.0) - 1.0));
        }
        if uppers.is_empty() {
            return Ok(Vector2::new(0.0, max_lower(0.0) + 1.0));
        }

        let lines: Vec<(f64, f64)> = uppers.iter().chain(lowers.iter()).copied().collect();
        let mut candidates = Vec::new();
        for i in 0..lines.len() {
            for j in (i + 1)..lines.len() {
                let (m1, c1) = lines[i];
                let (m2, c2) = lines[j];
                if (m1 - m2).abs() > GEOM_EPS * (1.0 + m1.abs().max(m2.abs())) {
                    candidates.push((c2 - c1) / (m1 - m2));
                }
            }
        }
        let (lo, hi) = candidates
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        if candidates.is_empty() {
            candidates.push(0.0);
        } else {
            let pad = 1.0 + (hi - lo);
            candidates.push(lo - pad);
            candidates.push(hi + pad);
        }

        let scale = lines
            .iter()
            .map(|&(_, c)| c.abs())
            .fold(1.0_f64, f64::max);
        let mut best: Option<(f64, f64)> = None;
        for &x in &candidates {
            let gap = min_upper(x) - max_lower(x);
            if best.is_none_or(|(_, g)| gap > g) {
                best = Some((x, gap));
            }
        }
        match best {
            Some((x, gap)) if gap > GEOM_EPS * scale => {
                Ok(Vector2::new(x, 0.5 * (min_upper(x) + max_lower(x))))
            }
            _ => Err(GeometryError::EmptyPolytope),
        }
    }

    /// Open x-interval of facet `row` that lies on the polygon boundary, with
    /// the indices of the facets that cut it off at each end. `None` when the
    /// facet never touches the polygon in a segment of positive length.
    fn facet_interval(&self, row: usize) -> Option<FacetInterval> {
        let f = &self.facets[row];
        let (m, c) = (f.slope(), f.intercept());
        let mut iv = FacetInterval {
            lo: f64::NEG_INFINITY,
            lo_by: Vec::new(),
            hi: f64::INFINITY,
            hi_by: Vec::new(),
        };
        for (j, g) in self.facets.iter().enumerate() {
            if j == row {
                continue;
            }
            // g . (x, m x + c) <= offset  ->  a x <= beta
            let a = g.coeffs.x + g.coeffs.y * m;
            let beta = g.offset - g.coeffs.y * c;
            let tol = GEOM_EPS * (1.0 + g.coeffs.x.abs() + m.abs());
            if a.abs() <= tol {
                if beta <= GEOM_EPS * (1.0 + beta.abs().max(g.offset.abs())) {
                    return None;
                }
                continue;
            }
            let x = beta / a;
            if a > 0.0 {
                update_bound(&mut iv.hi, &mut iv.hi_by, x, j, |new, old| new < old);
            } else {
                update_bound(&mut iv.lo, &mut iv.lo_by, x, j, |new, old| new > old);
            }
        }
        let unbounded = iv.lo.is_infinite() || iv.hi.is_infinite();
        let width_tol = GEOM_EPS * (1.0 + iv.lo.abs().max(iv.hi.abs()));
        if (unbounded && iv.hi > iv.lo) || iv.hi - iv.lo > width_tol {
            Some(iv)
        } else {
            None
        }
    }

    /// All vertices, each reported once, ordered by their facet pair.
    pub fn vertices(&self) -> Result<Vec<Vertex>, GeometryError> {
        let mut out: Vec<Vertex> = Vec::new();
        for row in 0..self.facets.len() {
            let Some(iv) = self.facet_interval(row) else {
                return Err(GeometryError::RedundantRow { row });
            };
            let f = &self.facets[row];
            for (x, by) in [(iv.lo, &iv.lo_by), (iv.hi, &iv.hi_by)] {
                if !x.is_finite() {
                    continue;
                }
                let point = Vector2::new(x, f.line_y(x));
                if by.len() != 1 {
                    return Err(GeometryError::VertexDegenerate {
                        x: point.x,
                        y: point.y,
                    });
                }
                let pair = (row.min(by[0]), row.max(by[0]));
                if !out.iter().any(|v| v.facets == pair) {
                    out.push(Vertex {
                        point,
                        facets: pair,
                    });
                }
            }
        }
        out.sort_by_key(|v| v.facets);
        Ok(out)
    }
}

struct FacetInterval {
    lo: f64,
    lo_by: Vec<usize>,
    hi: f64,
    hi_by: Vec<usize>,
}

fn update_bound(
    bound: &mut f64,
    by: &mut Vec<usize>,
    x: f64,
    j: usize,
    tighter: impl Fn(f64, f64) -> bool,
) {
    if bound.is_finite() && approx_eq(x, *bound) {
        by.push(j);
    } else if tighter(x, *bound) {
        *bound = x;
        by.clear();
        by.push(j);
    }
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= GEOM_EPS * (1.0 + a.abs().max(b.abs()))
}

/// Normalizes raw `a x + b y <= c` rows. See [`HalfspacePolytope::normalize`].
pub fn normalize_polytope(raw: &[([f64; 2], f64)]) -> Result<HalfspacePolytope, GeometryError> {
    HalfspacePolytope::normalize(raw)
}

/// Per-row clamped deflection `max(0, (H_i r - h_i)/sqrt(m_i^2+1))`.
pub fn deflection(rows: &[Facet], r: &Vector2<f64>) -> Vec<f64> {
    rows.iter().map(|f| f.deflection(r)).collect()
}

/// Force-deflection law of the environment surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForceLaw {
    /// `psi(n) = k n` for `n > 0`.
    LinearSpring { stiffness: f64 },
}

/// Environment elasticity and the maximum admissible normal force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationModel {
    law: ForceLaw,
    f_max: f64,
}

impl DeformationModel {
    pub fn linear_spring(stiffness: f64, f_max: f64) -> Result<Self, GeometryError> {
        if !(stiffness.is_finite() && stiffness > 0.0) {
            return Err(GeometryError::InvalidModel("stiffness must be positive"));
        }
        if !(f_max.is_finite() && f_max > 0.0) {
            return Err(GeometryError::InvalidModel("f_max must be positive"));
        }
        Ok(Self {
            law: ForceLaw::LinearSpring { stiffness },
            f_max,
        })
    }

    pub fn law(&self) -> ForceLaw {
        self.law
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    /// `psi(n)`; zero for `n <= 0`.
    pub fn psi(&self, n: f64) -> f64 {
        if n <= 0.0 {
            return 0.0;
        }
        match self.law {
            ForceLaw::LinearSpring { stiffness } => stiffness * n,
        }
    }

    /// `psi^{-1}(force)` for `force >= 0`.
    pub fn psi_inverse(&self, force: f64) -> f64 {
        match self.law {
            ForceLaw::LinearSpring { stiffness } => force.max(0.0) / stiffness,
        }
    }

    /// Largest admissible deflection `n_max = psi^{-1}(F_max)`.
    pub fn max_deflection(&self) -> f64 {
        self.psi_inverse(self.f_max)
    }

    /// Normal contact force for a deflection `n >= 0`.
    pub fn contact_force(&self, n: f64) -> Result<f64, GeometryError> {
        if n < 0.0 || n.is_nan() {
            return Err(GeometryError::NegativeDeflection(n));
        }
        Ok(self.psi(n))
    }

    /// Normalized distance to the force limit: 1 without contact, 0 at the
    /// limit, negative when the limit is exceeded.
    pub fn safety_margin(&self, n: f64) -> f64 {
        let n_max = self.max_deflection();
        (n_max - n) / n_max
    }
}

pub fn contact_force(model: &DeformationModel, n: f64) -> Result<f64, GeometryError> {
    model.contact_force(n)
}

pub fn safety_margin(model: &DeformationModel, n: f64) -> f64 {
    model.safety_margin(n)
}

/// Force-safe set of tip positions.
///
/// `rows` holds the expanded facets followed by one row per vertex of the
/// no-contact set. `source_rows` holds the matching unexpanded lines, so the
/// deflection of `r` against `source_rows[i]` is at most `n_max` exactly when
/// `r` satisfies `rows[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeSet {
    no_contact: HalfspacePolytope,
    rows: Vec<Facet>,
    source_rows: Vec<Facet>,
    n_max: f64,
}

impl SafeSet {
    pub fn no_contact(&self) -> &HalfspacePolytope {
        &self.no_contact
    }

    pub fn rows(&self) -> &[Facet] {
        &self.rows
    }

    pub fn source_rows(&self) -> &[Facet] {
        &self.source_rows
    }

    pub fn n_max(&self) -> f64 {
        self.n_max
    }

    /// Number of facets inherited from the no-contact set.
    pub fn original_count(&self) -> usize {
        self.no_contact.len()
    }

    /// Number of appended vertex-correction rows.
    pub fn vertex_row_count(&self) -> usize {
        self.rows.len() - self.no_contact.len()
    }

    pub fn contains(&self, r: &Vector2<f64>) -> bool {
        self.rows.iter().all(|f| f.coeffs.dot(r) <= f.offset)
    }

    /// Deflection of `r` against every generating row (original and vertex).
    pub fn deflections(&self, r: &Vector2<f64>) -> Vec<f64> {
        deflection(&self.source_rows, r)
    }

    /// Largest deflection over all generating rows.
    pub fn max_deflection(&self, r: &Vector2<f64>) -> f64 {
        self.source_rows
            .iter()
            .map(|f| f.deflection(r))
            .fold(0.0, f64::max)
    }

    /// The expanded rows as a polytope, e.g. for vertex enumeration.
    pub fn as_polytope(&self) -> Result<HalfspacePolytope, GeometryError> {
        HalfspacePolytope::from_facets(self.rows.clone())
    }
}

/// Expands `env` by the maximum deflection of `model`.
pub fn expand_safe_set(
    env: &HalfspacePolytope,
    model: &DeformationModel,
) -> Result<SafeSet, GeometryError> {
    expand_by_deflection(env, model.max_deflection())
}

/// Translates every facet of `env` outward by `n_max` and appends one
/// conservative row per vertex through `c + n_max n_i` and `c + n_max n_j`.
pub fn expand_by_deflection(
    env: &HalfspacePolytope,
    n_max: f64,
) -> Result<SafeSet, GeometryError> {
    if !(n_max.is_finite() && n_max >= 0.0) {
        return Err(GeometryError::InvalidDeflection(n_max));
    }
    let mut rows: Vec<Facet> = env.facets().iter().map(|f| f.translated(n_max)).collect();
    let mut source_rows: Vec<Facet> = env.facets().to_vec();

    if n_max > 0.0 {
        let interior = env.interior_point()?;
        for v in env.vertices()? {
            let (i, j) = v.facets;
            let a = v.point + n_max * env.facets()[i].unit_normal();
            let b = v.point + n_max * env.facets()[j].unit_normal();
            let dx = b.x - a.x;
            if dx.abs() <= GEOM_EPS * (1.0 + (b.y - a.y).abs()) {
                return Err(GeometryError::VerticalVertexRow {
                    first: i,
                    second: j,
                });
            }
            let m = (b.y - a.y) / dx;
            let c = a.y - m * a.x;
            let upper = Facet::new(Vector2::new(-m, 1.0), c, Orientation::Upper);
            let row = if upper.coeffs.dot(&interior) <= upper.offset {
                upper
            } else {
                Facet::new(Vector2::new(m, -1.0), -c, Orientation::Lower)
            };
            source_rows.push(row.translated(-n_max));
            rows.push(row);
        }
    }

    Ok(SafeSet {
        no_contact: env.clone(),
        rows,
        source_rows,
        n_max,
    })
}
