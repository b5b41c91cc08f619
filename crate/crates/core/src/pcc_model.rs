//! Piecewise-constant-curvature model of a planar soft manipulator.
//!
//! Each segment bends as a circular arc described by its subtended angle
//! `q_i`. Kinematics compose per-segment arc transforms. Dynamics come from
//! the RPPR augmented rigid body: every arc is replaced by a revolute joint,
//! two prismatic joints along the chord with a point mass between them, and a
//! second revolute joint, constrained by `xi_i = m_i(q_i)`. The rigid chain's
//! mass matrix and Coriolis terms are projected onto `q` through `J_m`.
//!
//! The base frame has the undeformed robot pointing along `+x`. Gravity is not
//! modelled.

use nalgebra::{DMatrix, DVector, Matrix2xX, Vector2};
use thiserror::Error;

/// Below this angle the sinc-type values use their Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-6;
/// Derivatives of sinc-type functions lose digits to cancellation much
/// earlier than the functions themselves, so they switch to series here.
const DERIV_SERIES_THRESHOLD: f64 = 1e-2;
/// Mass matrices with a larger condition number are rejected.
pub const MAX_MASS_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),
    #[error("mass matrix is numerically singular (condition number {0:e})")]
    SingularMass(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Physical parameters of an `N`-segment planar PCC robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotParams {
    lengths: Vec<f64>,
    masses: Vec<f64>,
    stiffness: DVector<f64>,
    damping: DVector<f64>,
    input_gain: DVector<f64>,
}

/// Segment length of the reference two-segment arm, m.
pub const DEFAULT_LENGTH: f64 = 0.122;
/// Point mass per segment of the reference arm, kg.
pub const DEFAULT_MASS: f64 = 0.13;
/// Joint stiffness, N·m/rad.
pub const DEFAULT_STIFFNESS: f64 = 0.2;
/// Joint damping, N·m·s/rad.
pub const DEFAULT_DAMPING: f64 = 0.003;
/// Input gain, N·m/hPa. With the default stiffness, 80 hPa holds about 25°
/// of bending per segment (`Lambda u = K q`).
pub const DEFAULT_INPUT_GAIN: f64 = 1.09e-3;

impl RobotParams {
    /// Reference arm with `n` identical segments and the default constants.
    /// Panics if `n == 0`.
    pub fn reference(n: usize) -> Self {
        Self::new(
            vec![DEFAULT_LENGTH; n],
            vec![DEFAULT_MASS; n],
            vec![DEFAULT_STIFFNESS; n],
            vec![DEFAULT_DAMPING; n],
            vec![DEFAULT_INPUT_GAIN; n],
        )
        .expect("reference parameters are valid")
    }

    /// `stiffness`, `damping` and `input_gain` are the diagonals of `K`, `D`
    /// and `Lambda`.
    pub fn new(
        lengths: Vec<f64>,
        masses: Vec<f64>,
        stiffness: Vec<f64>,
        damping: Vec<f64>,
        input_gain: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = lengths.len();
        if n == 0 {
            return Err(ModelError::InvalidParams("at least one segment required".into()));
        }
        for (name, v) in [
            ("lengths", &lengths),
            ("masses", &masses),
            ("stiffness", &stiffness),
            ("damping", &damping),
            ("input_gain", &input_gain),
        ] {
            if v.len() != n {
                return Err(ModelError::InvalidParams(format!(
                    "{name} has {} entries, expected {n}",
                    v.len()
                )));
            }
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(ModelError::InvalidParams(format!(
                    "{name} entries must be finite and positive, got {x}"
                )));
            }
        }
        Ok(Self {
            lengths,
            masses,
            stiffness: DVector::from_vec(stiffness),
            damping: DVector::from_vec(damping),
            input_gain: DVector::from_vec(input_gain),
        })
    }

    /// Same as [`RobotParams::new`] but allows zero stiffness and damping,
    /// which is only useful for energy-conservation checks.
    pub fn new_unchecked_passive(
        lengths: Vec<f64>,
        masses: Vec<f64>,
        stiffness: Vec<f64>,
        damping: Vec<f64>,
        input_gain: Vec<f64>,
    ) -> Self {
        Self {
            lengths,
            masses,
            stiffness: DVector::from_vec(stiffness),
            damping: DVector::from_vec(damping),
            input_gain: DVector::from_vec(input_gain),
        }
    }

    pub fn n_seg(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn stiffness(&self) -> &DVector<f64> {
        &self.stiffness
    }

    pub fn damping(&self) -> &DVector<f64> {
        &self.damping
    }

    pub fn input_gain(&self) -> &DVector<f64> {
        &self.input_gain
    }

    /// Returns a copy with a different input map `Lambda`.
    pub fn with_input_gain(&self, input_gain: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(
            self.lengths.clone(),
            self.masses.clone(),
            self.stiffness.iter().copied().collect(),
            self.damping.iter().copied().collect(),
            input_gain,
        )
    }
}

/// Joint state `x = [q; qd]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl RobotState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>) -> Self {
        Self { q, qd }
    }

    pub fn at_rest(n: usize) -> Self {
        Self {
            q: DVector::zeros(n),
            qd: DVector::zeros(n),
        }
    }

    pub fn from_slices(q: &[f64], qd: &[f64]) -> Self {
        Self {
            q: DVector::from_column_slice(q),
            qd: DVector::from_column_slice(qd),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).all(|x| x.is_finite())
    }

    /// Stacked `[q; qd]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.q.len();
        DVector::from_iterator(2 * n, self.q.iter().chain(self.qd.iter()).copied())
    }

    pub fn from_vector(x: &DVector<f64>) -> Self {
        let n = x.len() / 2;
        Self {
            q: x.rows(0, n).into_owned(),
            qd: x.rows(n, n).into_owned(),
        }
    }
}

fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

fn rotate(angle: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// `sin(q)/q` and `(1 - cos q)/q` with their first two derivatives.
#[derive(Debug, Clone, Copy)]
struct ArcTerms {
    s: f64,
    ds: f64,
    dds: f64,
    c: f64,
    dc: f64,
    ddc: f64,
}

impl ArcTerms {
    fn new(q: f64) -> Self {
        let q2 = q * q;
        let (s, c) = if q.abs() < SERIES_THRESHOLD {
            (1.0 - q2 / 6.0, q / 2.0 - q * q2 / 24.0)
        } else {
            let half = (0.5 * q).sin();
            (q.sin() / q, 2.0 * half * half / q)
        };
        let (ds, dds, dc, ddc) = if q.abs() < DERIV_SERIES_THRESHOLD {
            let q3 = q2 * q;
            let q4 = q2 * q2;
            let q5 = q4 * q;
            let q6 = q4 * q2;
            let q7 = q6 * q;
            (
                -q / 3.0 + q3 / 30.0 - q5 / 840.0 + q7 / 45360.0,
                -1.0 / 3.0 + q2 / 10.0 - q4 / 168.0 + q6 / 6480.0,
                0.5 - q2 / 8.0 + q4 / 144.0 - q6 / 5760.0,
                -q / 4.0 + q3 / 36.0 - q5 / 960.0 + q7 / 50400.0,
            )
        } else {
            let (sn, cs) = q.sin_cos();
            let q3 = q2 * q;
            (
                (q * cs - sn) / q2,
                (-q2 * sn - 2.0 * q * cs + 2.0 * sn) / q3,
                (q * sn - 1.0 + cs) / q2,
                (q2 * cs - 2.0 * q * sn + 2.0 - 2.0 * cs) / q3,
            )
        };
        Self {
            s,
            ds,
            dds,
            c,
            dc,
            ddc,
        }
    }
}

/// Planar rigid transform of one arc: rotation by `angle`, then `translation`
/// expressed in the segment's base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentTransform {
    pub angle: f64,
    pub translation: Vector2<f64>,
}

impl SegmentTransform {
    /// Applies the transform to a point given in the segment's end frame.
    pub fn apply(&self, p: Vector2<f64>) -> Vector2<f64> {
        self.translation + rotate(self.angle, p)
    }
}

/// Transform from the base to the tip of an arc with length `length` and
/// subtended angle `q`: the chord `L (sin q / q, (1 - cos q)/q)` and a
/// rotation by `q`.
pub fn segment_transform(q: f64, length: f64) -> SegmentTransform {
    let t = ArcTerms::new(q);
    SegmentTransform {
        angle: q,
        translation: Vector2::new(length * t.s, length * t.c),
    }
}

/// Per-segment world-frame quantities shared by the kinematic functions.
struct ChainKinematics {
    /// Segment base positions, `N + 1` entries; the last is the tip.
    bases: Vec<Vector2<f64>>,
    /// Chord derivative `R(phi_i) t'_i`.
    chord_d: Vec<Vector2<f64>>,
    /// Chord second derivative `R(phi_i) t''_i`.
    chord_dd: Vec<Vector2<f64>>,
}

impl ChainKinematics {
    fn new(params: &RobotParams, q: &DVector<f64>) -> Self {
        let n = params.n_seg();
        let mut bases = Vec::with_capacity(n + 1);
        let mut chord_d = Vec::with_capacity(n);
        let mut chord_dd = Vec::with_capacity(n);
        let mut heading = 0.0;
        let mut p = Vector2::zeros();
        bases.push(p);
        for (i, &len) in params.lengths.iter().enumerate() {
            let t = ArcTerms::new(q[i]);
            p += rotate(heading, Vector2::new(len * t.s, len * t.c));
            chord_d.push(rotate(heading, Vector2::new(len * t.ds, len * t.dc)));
            chord_dd.push(rotate(heading, Vector2::new(len * t.dds, len * t.ddc)));
            bases.push(p);
            heading += q[i];
        }
        Self {
            bases,
            chord_d,
            chord_dd,
        }
    }

    fn tip(&self) -> Vector2<f64> {
        *self.bases.last().expect("at least one segment")
    }

    fn jacobian(&self) -> Matrix2xX<f64> {
        let n = self.chord_d.len();
        let r = self.tip();
        Matrix2xX::from_fn(n, |row, k| {
            let col = self.chord_d[k] + perp(r - self.bases[k + 1]);
            col[row]
        })
    }

    /// `d^2 r / dq_k dq_l`.
    fn hessian_entry(&self, k: usize, l: usize) -> Vector2<f64> {
        let hi = k.max(l);
        let tail = self.tip() - self.bases[hi + 1];
        let head = if k == l {
            self.chord_dd[k]
        } else {
            perp(self.chord_d[hi])
        };
        head - tail
    }
}

/// Tip position `r(q)` by composing the arc transforms from the base.
pub fn fk_tip(params: &RobotParams, q: &DVector<f64>) -> Vector2<f64> {
    params
        .lengths
        .iter()
        .zip(q.iter())
        .rev()
        .fold(Vector2::zeros(), |p, (&len, &qi)| {
            segment_transform(qi, len).apply(p)
        })
}

/// Analytic tip Jacobian `dr/dq` (2 x N).
pub fn tip_jacobian(params: &RobotParams, q: &DVector<f64>) -> Matrix2xX<f64> {
    ChainKinematics::new(params, q).jacobian()
}

/// Time derivative of the tip Jacobian along `qd`. Because the Hessian of
/// `r` is symmetric this also equals `d(J qd)/dq`.
pub fn tip_jacobian_dot(
    params: &RobotParams,
    q: &DVector<f64>,
    qd: &DVector<f64>,
) -> Matrix2xX<f64> {
    let kin = ChainKinematics::new(params, q);
    let n = params.n_seg();
    let mut out = Matrix2xX::zeros(n);
    for k in 0..n {
        let mut col = Vector2::zeros();
        for l in 0..n {
            col += kin.hessian_entry(k, l) * qd[l];
        }
        out.set_column(k, &col);
    }
    out
}

/// Position, Jacobian and `J_dot` of the tip in one pass.
pub fn tip_kinematics(
    params: &RobotParams,
    state: &RobotState,
) -> (Vector2<f64>, Matrix2xX<f64>, Matrix2xX<f64>) {
    let kin = ChainKinematics::new(params, &state.q);
    let n = params.n_seg();
    let mut jdot = Matrix2xX::zeros(n);
    for k in 0..n {
        let mut col = Vector2::zeros();
        for l in 0..n {
            col += kin.hessian_entry(k, l) * state.qd[l];
        }
        jdot.set_column(k, &col);
    }
    (kin.tip(), kin.jacobian(), jdot)
}

/// RPPR constraint map of one segment with its first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedMap {
    /// `[q/2, L sin(q/2)/q, L sin(q/2)/q, q/2]`
    pub xi: [f64; 4],
    pub dxi: [f64; 4],
    pub ddxi: [f64; 4],
}

/// Evaluates `m_i(q_i)` for the RPPR augmented body.
pub fn augmented_map(q: f64, length: f64) -> AugmentedMap {
    // sin(q/2)/q = s(q/2)/2 with s(x) = sin(x)/x
    let t = ArcTerms::new(0.5 * q);
    let half = length * 0.5 * t.s;
    let dhalf = length * 0.25 * t.ds;
    let ddhalf = length * 0.125 * t.dds;
    AugmentedMap {
        xi: [0.5 * q, half, half, 0.5 * q],
        dxi: [0.5, dhalf, dhalf, 0.5],
        ddxi: [0.0, ddhalf, ddhalf, 0.0],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum JointKind {
    Revolute,
    Prismatic,
}

const RPPR: [JointKind; 4] = [
    JointKind::Revolute,
    JointKind::Prismatic,
    JointKind::Prismatic,
    JointKind::Revolute,
];

/// Kinematics of the planar augmented rigid chain in joint coordinates `xi`.
pub struct AugmentedChain {
    /// Mass position Jacobians `d p_j / d xi`, one 2 x 4N block per segment.
    mass_jac: Vec<Matrix2xX<f64>>,
    /// Their time derivatives along `xi_dot`.
    mass_jac_dot: Vec<Matrix2xX<f64>>,
    tip: Vector2<f64>,
}

impl AugmentedChain {
    pub fn new(xi: &[f64], xi_dot: &[f64]) -> Self {
        let dof = xi.len();
        let n = dof / 4;
        // joint origin, origin velocity, heading and heading rate seen by each joint
        let mut origin = Vec::with_capacity(dof);
        let mut origin_vel = Vec::with_capacity(dof);
        let mut headings = Vec::with_capacity(dof);
        let mut heading_rates = Vec::with_capacity(dof);
        let mut mass_pos = Vec::with_capacity(n);
        let mut mass_vel = Vec::with_capacity(n);

        let mut p = Vector2::zeros();
        let mut v = Vector2::zeros();
        let mut heading = 0.0_f64;
        let mut heading_rate = 0.0_f64;
        for k in 0..dof {
            origin.push(p);
            origin_vel.push(v);
            match RPPR[k % 4] {
                JointKind::Revolute => {
                    heading += xi[k];
                    heading_rate += xi_dot[k];
                    headings.push(heading);
                    heading_rates.push(heading_rate);
                }
                JointKind::Prismatic => {
                    headings.push(heading);
                    heading_rates.push(heading_rate);
                    let e = Vector2::new(heading.cos(), heading.sin());
                    p += xi[k] * e;
                    v += xi_dot[k] * e + xi[k] * heading_rate * perp(e);
                }
            }
            if k % 4 == 1 {
                mass_pos.push(p);
                mass_vel.push(v);
            }
        }

        let mut mass_jac = Vec::with_capacity(n);
        let mut mass_jac_dot = Vec::with_capacity(n);
        for j in 0..n {
            let mut jac = Matrix2xX::zeros(dof);
            let mut jac_dot = Matrix2xX::zeros(dof);
            // joints 0 ..= 4j+1 precede mass j
            for k in 0..=(4 * j + 1) {
                let (col, col_dot) = match RPPR[k % 4] {
                    JointKind::Revolute => (
                        perp(mass_pos[j] - origin[k]),
                        perp(mass_vel[j] - origin_vel[k]),
                    ),
                    JointKind::Prismatic => {
                        let e = Vector2::new(headings[k].cos(), headings[k].sin());
                        (e, heading_rates[k] * perp(e))
                    }
                };
                jac.set_column(k, &col);
                jac_dot.set_column(k, &col_dot);
            }
            mass_jac.push(jac);
            mass_jac_dot.push(jac_dot);
        }
        Self {
            mass_jac,
            mass_jac_dot,
            tip: p,
        }
    }

    /// End point of the chain.
    pub fn tip(&self) -> Vector2<f64> {
        self.tip
    }

    /// `M_xi = sum_j m_j J_j^T J_j`.
    pub fn mass_matrix(&self, masses: &[f64]) -> DMatrix<f64> {
        let dof = self.mass_jac.first().map_or(0, |j| j.ncols());
        let mut m = DMatrix::zeros(dof, dof);
        for (jac, &mass) in self.mass_jac.iter().zip(masses) {
            m += mass * jac.transpose() * jac;
        }
        m
    }

    /// `C_xi = sum_j m_j J_j^T J_dot_j`, which makes `M_dot - 2 C` skew.
    pub fn coriolis_matrix(&self, masses: &[f64]) -> DMatrix<f64> {
        let dof = self.mass_jac.first().map_or(0, |j| j.ncols());
        let mut c = DMatrix::zeros(dof, dof);
        for ((jac, jac_dot), &mass) in self.mass_jac.iter().zip(&self.mass_jac_dot).zip(masses) {
            c += mass * jac.transpose() * jac_dot;
        }
        c
    }
}

/// `xi = m(q)`, `J_m` and `J_m_dot` for the whole robot.
fn constraint_jacobians(
    params: &RobotParams,
    state: &RobotState,
) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = params.n_seg();
    let mut xi = Vec::with_capacity(4 * n);
    let mut jm = DMatrix::zeros(4 * n, n);
    let mut jm_dot = DMatrix::zeros(4 * n, n);
    for i in 0..n {
        let map = augmented_map(state.q[i], params.lengths[i]);
        for r in 0..4 {
            xi.push(map.xi[r]);
            jm[(4 * i + r, i)] = map.dxi[r];
            jm_dot[(4 * i + r, i)] = map.ddxi[r] * state.qd[i];
        }
    }
    (xi, jm, jm_dot)
}

/// Tip position through the augmented chain; equals [`fk_tip`].
pub fn augmented_tip(params: &RobotParams, q: &DVector<f64>) -> Vector2<f64> {
    let state = RobotState::new(q.clone(), DVector::zeros(q.len()));
    let (xi, _, _) = constraint_jacobians(params, &state);
    AugmentedChain::new(&xi, &vec![0.0; xi.len()]).tip()
}

fn check_dims(params: &RobotParams, state: &RobotState) -> Result<(), ModelError> {
    let n = params.n_seg();
    for got in [state.q.len(), state.qd.len()] {
        if got != n {
            return Err(ModelError::DimensionMismatch { expected: n, got });
        }
    }
    Ok(())
}

/// Projected mass and Coriolis matrices `(M(q), C(q, qd))`.
pub fn dynamics_matrices(
    params: &RobotParams,
    state: &RobotState,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    check_dims(params, state)?;
    let (xi, jm, jm_dot) = constraint_jacobians(params, state);
    let xi_dot: Vec<f64> = (&jm * &state.qd).iter().copied().collect();
    let chain = AugmentedChain::new(&xi, &xi_dot);
    let m_xi = chain.mass_matrix(&params.masses);
    let c_xi = chain.coriolis_matrix(&params.masses);
    let jm_t = jm.transpose();
    let mass = &jm_t * &m_xi * &jm;
    let coriolis = &jm_t * (&m_xi * &jm_dot + &c_xi * &jm);

    let eig = mass.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &x| (lo.min(x), hi.max(x.abs())));
    if !(lo > 0.0) || hi / lo > MAX_MASS_CONDITION {
        return Err(ModelError::SingularMass(hi / lo.max(f64::MIN_POSITIVE)));
    }
    Ok((mass, coriolis))
}

/// Control-affine split of the joint accelerations:
/// `qdd = qdd_drift + qdd_input u`.
#[derive(Debug, Clone)]
pub struct ControlAffine {
    /// `M^{-1}(-C qd - D qd - K q)`
    pub qdd_drift: DVector<f64>,
    /// `M^{-1} Lambda`
    pub qdd_input: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub coriolis: DMatrix<f64>,
}

impl ControlAffine {
    /// `f(x) = [qd; M^{-1}(-C qd - D qd - K q)]`.
    pub fn drift(&self, state: &RobotState) -> DVector<f64> {
        let n = state.qd.len();
        DVector::from_iterator(2 * n, state.qd.iter().chain(self.qdd_drift.iter()).copied())
    }

    /// `g(x) = [0; M^{-1} Lambda]`.
    pub fn input_map(&self) -> DMatrix<f64> {
        let n = self.qdd_input.nrows();
        let mut g = DMatrix::zeros(2 * n, n);
        g.view_mut((n, 0), (n, n)).copy_from(&self.qdd_input);
        g
    }

    pub fn qdd(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.qdd_drift + &self.qdd_input * u
    }
}

/// Evaluates `f(x)` and `g(x)`.
pub fn control_affine_terms(
    params: &RobotParams,
    state: &RobotState,
) -> Result<ControlAffine, ModelError> {
    let (mass, coriolis) = dynamics_matrices(params, state)?;
    let chol = mass
        .clone()
        .cholesky()
        .ok_or(ModelError::SingularMass(f64::INFINITY))?;
    let generalized = -(&coriolis * &state.qd)
        - params.damping.component_mul(&state.qd)
        - params.stiffness.component_mul(&state.q);
    let qdd_drift = chol.solve(&generalized);
    let qdd_input = chol.solve(&DMatrix::from_diagonal(&params.input_gain));
    Ok(ControlAffine {
        qdd_drift,
        qdd_input,
        mass,
        coriolis,
    })
}

/// `x_dot = f(x) + g(x) u`, stacked as `[qd; qdd]`.
pub fn control_affine(
    params: &RobotParams,
    state: &RobotState,
    u: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    if u.len() != params.n_seg() {
        return Err(ModelError::DimensionMismatch {
            expected: params.n_seg(),
            got: u.len(),
        });
    }
    let terms = control_affine_terms(params, state)?;
    let qdd = terms.qdd(u);
    let n = params.n_seg();
    Ok(DVector::from_iterator(
        2 * n,
        state.qd.iter().chain(qdd.iter()).copied(),
    ))
}

/// Kinetic plus elastic energy `qd^T M qd / 2 + q^T K q / 2`.
pub fn total_energy(params: &RobotParams, state: &RobotState) -> Result<f64, ModelError> {
    let (mass, _) = dynamics_matrices(params, state)?;
    let kinetic = 0.5 * state.qd.dot(&(&mass * &state.qd));
    let elastic = 0.5 * state.q.dot(&params.stiffness.component_mul(&state.q));
    Ok(kinetic + elastic)
}
