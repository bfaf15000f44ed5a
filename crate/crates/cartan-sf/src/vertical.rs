//! Vertical (covector) subsystem of the maximum principle.
//!
//! On the normalized level `H = |h1| + |h2| = 1` the covector is charted by
//! `theta` with `h1 = sgn(cos theta) cos^2 theta`, `h2 = sgn(sin theta) sin^2 theta`,
//! and the reduced dynamics are `theta' = h3 / |sin 2 theta|`,
//! `h3' = s1 h4 + s2 h5` with `s1 = sgn cos theta`, `s2 = sgn sin theta`.
//! The Casimirs `h4`, `h5` and the energy `E = h3^2/2 + h1 h5 - h2 h4` are
//! conserved, which makes every arc between sign changes of `h1 h2` solvable
//! in closed form.
//!
//! Within one quadrant of `theta` the potential `V(theta) = h1 h5 - h2 h4`
//! is monotone and the antiderivative `I` of `|sin 2 theta|` satisfies
//! `I' = h3` along the flow, so `I(t)` is an explicit quadratic. All arc
//! durations reduce to `(h3_out - h3_in) / sigma` with
//! `sigma = s1 h4 + s2 h5`, except in quadrants where `sigma = 0` and the
//! crossing time is `delta I / h3`.

use crate::lie_cartan::{pair, AlgebraVector};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Default relative tolerance for equality and criticality tests.
pub const DEFAULT_TOL: f64 = 1e-9;

const TAU: f64 = 2.0 * PI;

#[derive(Debug, Error, PartialEq)]
pub enum VerticalError {
    /// The vertical state is a fixed point of the reduced flow; there is no
    /// bang dynamics to follow.
    #[error("vertical state is an equilibrium of the reduced flow")]
    Equilibrium,
    /// The flow reached a self-intersection of a critical level set and the
    /// continuation is not unique; the caller must choose a branch.
    #[error("corner point reached; a branch choice (up/down) is required")]
    CornerBranch,
    /// Numerical integration drifted off the conserved quantities.
    #[error("integration step too large: conserved quantity drift {drift:e}")]
    StepTooLarge { drift: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("casimir or energy input is not finite")]
    NonFinite,
    /// No normalized covector attains this energy: `E >= -max(|h4|,|h5|)`
    /// always holds on `H = 1`.
    #[error("energy {energy} below the attainable range for these casimirs")]
    EnergyBelowRange { energy: f64 },
    #[error("covector has H = |h1| + |h2| = 0 and cannot be normalized")]
    NotNormalizable,
}

/// Branch selector at a corner point: the sign of `h3` right after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchChoice {
    Up,
    Down,
}

/// Point of the reduced phase cylinder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalState {
    pub theta: f64,
    pub h3: f64,
}

impl VerticalState {
    pub fn new(theta: f64, h3: f64) -> Self {
        Self { theta, h3 }
    }
}

/// The two Casimirs that freeze the vertical dynamics of one extremal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Casimirs {
    pub h4: f64,
    pub h5: f64,
}

impl Casimirs {
    pub fn new(h4: f64, h5: f64) -> Self {
        Self { h4, h5 }
    }

    /// Control signs on quadrant `q` (theta in `(q pi/2, (q+1) pi/2)`).
    pub fn quadrant_signs(q: u8) -> (i8, i8) {
        match q % 4 {
            0 => (1, 1),
            1 => (-1, 1),
            2 => (-1, -1),
            _ => (1, -1),
        }
    }

    /// Slope of `h3` on quadrant `q`.
    pub fn sigma(&self, q: u8) -> f64 {
        let (s1, s2) = Self::quadrant_signs(q);
        f64::from(s1) * self.h4 + f64::from(s2) * self.h5
    }

    /// Potential `V = h1 h5 - h2 h4` at a chart boundary `theta = b pi/2`.
    pub fn v_boundary(&self, b: u8) -> f64 {
        match b % 4 {
            0 => self.h5,
            1 => -self.h4,
            2 => -self.h5,
            _ => self.h4,
        }
    }

    /// Potential `V(theta)`.
    pub fn v_at(&self, theta: f64) -> f64 {
        let c = theta.cos();
        let s = theta.sin();
        c.signum() * c * c * self.h5 - s.signum() * s * s * self.h4
    }

    /// Conserved energy of a vertical state.
    pub fn energy_of(&self, state: &VerticalState) -> f64 {
        0.5 * state.h3 * state.h3 + self.v_at(state.theta)
    }
}

pub fn normalize_theta(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t == TAU {
        0.0
    } else {
        t
    }
}

/// Covector on the dual of the Cartan algebra, by its coordinates
/// `h_i = <lambda, X_i>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovectorState {
    h: [f64; 5],
}

impl CovectorState {
    pub fn new(h: [f64; 5]) -> Self {
        Self { h }
    }

    /// Covector on the normalized cylinder from chart coordinates.
    pub fn from_theta(theta: f64, h3: f64, h4: f64, h5: f64) -> Self {
        let c = theta.cos();
        let s = theta.sin();
        Self::new([c.signum() * c * c, s.signum() * s * s, h3, h4, h5])
    }

    pub fn h(&self) -> [f64; 5] {
        self.h
    }

    pub fn h1(&self) -> f64 {
        self.h[0]
    }

    pub fn h2(&self) -> f64 {
        self.h[1]
    }

    pub fn h3(&self) -> f64 {
        self.h[2]
    }

    pub fn h4(&self) -> f64 {
        self.h[3]
    }

    pub fn h5(&self) -> f64 {
        self.h[4]
    }

    /// The Hamiltonian `H = |h1| + |h2|`.
    pub fn h_norm(&self) -> f64 {
        self.h[0].abs() + self.h[1].abs()
    }

    /// Rescale by the vertical symmetry `lambda -> k lambda` onto `H = 1`.
    pub fn normalized(&self) -> Result<CovectorState, ClassifyError> {
        let h = self.h_norm();
        if !(h > 0.0) || !h.is_finite() {
            return Err(ClassifyError::NotNormalizable);
        }
        let k = 1.0 / h;
        Ok(Self::new([
            self.h[0] * k,
            self.h[1] * k,
            self.h[2] * k,
            self.h[3] * k,
            self.h[4] * k,
        ]))
    }

    /// Chart angle on `H = 1`, in `[0, 2 pi)`.
    pub fn theta(&self) -> f64 {
        let c = self.h[0].signum() * self.h[0].abs().sqrt();
        let s = self.h[1].signum() * self.h[1].abs().sqrt();
        normalize_theta(s.atan2(c))
    }

    pub fn vertical(&self) -> VerticalState {
        VerticalState::new(self.theta(), self.h3())
    }

    pub fn casimirs(&self) -> Casimirs {
        Casimirs::new(self.h4(), self.h5())
    }

    /// The energy Casimir `E = h3^2/2 + h1 h5 - h2 h4`.
    pub fn energy(&self) -> f64 {
        0.5 * self.h[2] * self.h[2] + self.h[0] * self.h[4] - self.h[1] * self.h[3]
    }

    /// Pairing `<lambda, a>`.
    pub fn pair(&self, a: &AlgebraVector) -> f64 {
        pair(&self.h, a)
    }
}

/// Energy Casimir of a covector (free-function form of [`CovectorState::energy`]).
pub fn energy(h: &CovectorState) -> f64 {
    h.energy()
}

/// Element of the dihedral symmetry group of the square `|h1| + |h2| = 1`.
///
/// Written as `rho^rot . mu^flip` where `mu` reflects `(h1, h2) -> (h1, -h2)`
/// (and `h3 -> -h3`, `(h4, h5) -> (-h4, h5)`) and `rho` rotates the square a
/// quarter turn (`(h1, h2) -> (-h2, h1)`, `(h4, h5) -> (-h5, h4)`). The flip
/// acts first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct D4Element {
    rot: u8,
    flip: bool,
}

impl D4Element {
    pub const IDENTITY: D4Element = D4Element { rot: 0, flip: false };

    pub fn new(rot: u8, flip: bool) -> Self {
        Self { rot: rot % 4, flip }
    }

    /// All eight elements, identity first.
    pub fn all() -> [D4Element; 8] {
        [
            Self::new(0, false),
            Self::new(1, false),
            Self::new(2, false),
            Self::new(3, false),
            Self::new(0, true),
            Self::new(1, true),
            Self::new(2, true),
            Self::new(3, true),
        ]
    }

    pub fn is_identity(&self) -> bool {
        self.rot == 0 && !self.flip
    }

    pub fn inverse(&self) -> D4Element {
        if self.flip {
            *self
        } else {
            Self::new((4 - self.rot) % 4, false)
        }
    }

    /// Short name, e.g. `identity`, `rot90`, `flip+rot270`.
    pub fn name(&self) -> String {
        match (self.rot, self.flip) {
            (0, false) => "identity".to_string(),
            (r, false) => format!("rot{}", 90 * u32::from(r)),
            (0, true) => "flip".to_string(),
            (r, true) => format!("flip+rot{}", 90 * u32::from(r)),
        }
    }

    fn apply_pair(&self, p: [f64; 2], flip_second: bool, rot_map: impl Fn([f64; 2]) -> [f64; 2]) -> [f64; 2] {
        let mut q = p;
        if self.flip && flip_second {
            q = [q[0], -q[1]];
        } else if self.flip {
            q = [-q[0], q[1]];
        }
        for _ in 0..self.rot {
            q = rot_map(q);
        }
        q
    }

    /// Action on `(h1, h2)` (same as on controls and on the planar
    /// projection `(x, y)`).
    pub fn apply_h12(&self, h12: [f64; 2]) -> [f64; 2] {
        self.apply_pair(h12, true, |[a, b]| [-b, a])
    }

    /// Action on the Casimir pair `(h4, h5)`.
    pub fn apply_h45(&self, h45: [f64; 2]) -> [f64; 2] {
        self.apply_pair(h45, false, |[a, b]| [-b, a])
    }

    pub fn apply_h3(&self, h3: f64) -> f64 {
        if self.flip {
            -h3
        } else {
            h3
        }
    }

    /// Action on control pairs `(u1, u2)`.
    pub fn apply_control(&self, u: [f64; 2]) -> [f64; 2] {
        self.apply_h12(u)
    }

    /// Action on the planar projection `(x, y)` of a trajectory.
    pub fn apply_planar(&self, xy: [f64; 2]) -> [f64; 2] {
        self.apply_h12(xy)
    }

    pub fn apply_theta(&self, theta: f64) -> f64 {
        let t = if self.flip { -theta } else { theta };
        normalize_theta(t + f64::from(self.rot) * FRAC_PI_2)
    }

    /// Action on full covector coordinates.
    pub fn apply_covector(&self, h: &CovectorState) -> CovectorState {
        let [h1, h2] = self.apply_h12([h.h1(), h.h2()]);
        let [h4, h5] = self.apply_h45([h.h4(), h.h5()]);
        CovectorState::new([h1, h2, self.apply_h3(h.h3()), h4, h5])
    }
}

/// Reduce `(h4, h5)` to the fundamental domain `h4 >= h5 >= 0`.
///
/// Returns the reduced pair and the symmetry element `g` with
/// `g (h4, h5) = (h4', h5')`; trajectories of the reduced problem map back
/// through `g.inverse()`.
pub fn symmetry_reduce(h4: f64, h5: f64) -> (f64, f64, D4Element) {
    for g in D4Element::all() {
        let [a, b] = g.apply_h45([h4, h5]);
        if a >= b && b >= 0.0 {
            return (a, b, g);
        }
    }
    unreachable!("the dihedral orbit always meets the fundamental domain");
}

/// Classification record of a covector on the normalized cylinder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stratum {
    case_id: u8,
    level: u8,
    h4: f64,
    h5: f64,
    energy: f64,
    symmetry: D4Element,
    boundary: bool,
    tol: f64,
}

impl Stratum {
    pub fn case_id(&self) -> u8 {
        self.case_id
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn level_name(&self) -> String {
        format!("C{}", self.level)
    }

    /// Reduced Casimir `h4` (fundamental domain).
    pub fn h4(&self) -> f64 {
        self.h4
    }

    /// Reduced Casimir `h5`.
    pub fn h5(&self) -> f64 {
        self.h5
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Symmetry element mapping the input Casimirs into the fundamental domain.
    pub fn symmetry(&self) -> D4Element {
        self.symmetry
    }

    /// Set when the energy lies within tolerance of a critical level.
    pub fn is_boundary(&self) -> bool {
        self.boundary
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn casimirs(&self) -> Casimirs {
        Casimirs::new(self.h4, self.h5)
    }

    /// Strata consisting of fixed points of the vertical flow only.
    pub fn is_equilibrium_only(&self) -> bool {
        self.level == 1
    }

    pub fn has_bang_dynamics(&self) -> bool {
        !self.is_equilibrium_only()
    }

    /// Levels whose phase curve is a figure eight with a genuine branch
    /// point at `(3 pi/2, 0)`.
    pub fn is_figure_eight(&self) -> bool {
        matches!((self.case_id, self.level), (1, 7) | (2, 5))
    }

    /// Strata on which singular arcs can adjoin bang arcs.
    pub fn supports_mixed(&self) -> bool {
        matches!((self.case_id, self.level), (1, 7) | (2, 5) | (3, 3))
    }

    /// Switching anchor `(pi/2, +sqrt(2(E + h4)))`; `None` on equilibrium strata.
    pub fn canonical_start(&self) -> Option<VerticalState> {
        if self.is_equilibrium_only() {
            return None;
        }
        let h3 = (2.0 * (self.energy + self.h4)).max(0.0).sqrt();
        Some(VerticalState::new(FRAC_PI_2, h3))
    }

    /// Critical energy values of the reduced case.
    pub fn critical_levels(&self) -> Vec<f64> {
        match self.case_id {
            1 => vec![-self.h4, -self.h5, self.h5, self.h4],
            2 => vec![-self.h4, 0.0, self.h4],
            3 => vec![-self.h4, self.h4],
            _ => vec![0.0],
        }
    }
}

/// Classify reduced Casimirs and energy into the case and level-set strata.
pub fn classify_stratum(h4: f64, h5: f64, energy: f64, tol: f64) -> Result<Stratum, ClassifyError> {
    if !h4.is_finite() || !h5.is_finite() || !energy.is_finite() {
        return Err(ClassifyError::NonFinite);
    }
    let (h4r, h5r, symmetry) = symmetry_reduce(h4, h5);
    let scale = h4r.max(1.0);
    let eq = |x: f64, y: f64| (x - y).abs() <= tol * scale;

    // Snap the degenerate cases so that downstream slopes vanish exactly.
    let (case_id, h4s, h5s) = if eq(h4r, 0.0) && eq(h5r, 0.0) {
        (4, 0.0, 0.0)
    } else if eq(h4r, h5r) {
        let m = 0.5 * (h4r + h5r);
        (3, m, m)
    } else if eq(h5r, 0.0) {
        (2, h4r, 0.0)
    } else {
        (1, h4r, h5r)
    };

    let escale = scale.max(energy.abs());
    let eeq = |x: f64, y: f64| (x - y).abs() <= tol * escale;
    let level = match case_id {
        1 => {
            if eeq(energy, -h4s) {
                1
            } else if energy < -h4s {
                return Err(ClassifyError::EnergyBelowRange { energy });
            } else if eeq(energy, -h5s) {
                3
            } else if energy < -h5s {
                2
            } else if eeq(energy, h5s) {
                5
            } else if energy < h5s {
                4
            } else if eeq(energy, h4s) {
                7
            } else if energy < h4s {
                6
            } else {
                8
            }
        }
        2 => {
            if eeq(energy, -h4s) {
                1
            } else if energy < -h4s {
                return Err(ClassifyError::EnergyBelowRange { energy });
            } else if eeq(energy, 0.0) {
                3
            } else if energy < 0.0 {
                2
            } else if eeq(energy, h4s) {
                5
            } else if energy < h4s {
                4
            } else {
                6
            }
        }
        3 => {
            if eeq(energy, -h4s) {
                1
            } else if energy < -h4s {
                return Err(ClassifyError::EnergyBelowRange { energy });
            } else if eeq(energy, h4s) {
                3
            } else if energy < h4s {
                2
            } else {
                4
            }
        }
        _ => {
            if eeq(energy, 0.0) {
                1
            } else if energy < 0.0 {
                return Err(ClassifyError::EnergyBelowRange { energy });
            } else {
                2
            }
        }
    };

    let crits: Vec<f64> = match case_id {
        1 => vec![-h4s, -h5s, h5s, h4s],
        2 => vec![-h4s, 0.0, h4s],
        3 => vec![-h4s, h4s],
        _ => vec![0.0],
    };
    let boundary = crits.iter().any(|c| (energy - c).abs() <= tol * escale);

    Ok(Stratum {
        case_id,
        level,
        h4: h4s,
        h5: h5s,
        energy,
        symmetry,
        boundary,
        tol,
    })
}

/// Classify an arbitrary covector: normalize, reduce, stratify.
pub fn classify_covector(h: &CovectorState, tol: f64) -> Result<Stratum, ClassifyError> {
    let n = h.normalized()?;
    classify_stratum(n.h4(), n.h5(), n.energy(), tol)
}

// ---------------------------------------------------------------------------
// Exact arc walker
// ---------------------------------------------------------------------------

/// Antiderivative of `|sin 2 theta|` on quadrant `q`, ranging over
/// `[-1/2, 1/2]` from the left boundary to the right one. Along the reduced
/// flow `dI/dt = h3`.
fn i_of_theta(q: u8, theta: f64) -> f64 {
    let sign = if q % 2 == 0 { -1.0 } else { 1.0 };
    sign * (2.0 * theta).cos() * 0.5
}

fn theta_of_i(q: u8, i: f64) -> f64 {
    let iv = i.clamp(-0.5, 0.5);
    match q % 4 {
        0 => (-2.0 * iv).acos() * 0.5,
        1 => PI - (2.0 * iv).acos() * 0.5,
        2 => PI + (-2.0 * iv).acos() * 0.5,
        _ => TAU - (2.0 * iv).acos() * 0.5,
    }
}

/// One control arc of the exact vertical flow: a maximal interval of
/// constancy of `(sgn h1, sgn h2)`.
///
/// The whole arc stays in the closure of a single quadrant (a transversal
/// boundary crossing switches a control sign and ends the arc), so it is
/// described by one quadratic `I(t) = I0 + h3_0 t + sigma t^2 / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcStep {
    pub letter: (i8, i8),
    pub quadrant: u8,
    pub duration: f64,
    pub start: VerticalState,
    pub end: VerticalState,
    pub sigma: f64,
    /// Arc ended at a corner point by crossing it (branch `Up`/`Down` taken
    /// in the direction of travel).
    pub corner_exit: bool,
    /// A branch choice was consumed while producing this arc.
    pub consumed_branch: bool,
    i0: f64,
}

impl ArcStep {
    pub fn h3_at(&self, t: f64) -> f64 {
        self.start.h3 + self.sigma * t
    }

    pub fn theta_at(&self, t: f64) -> f64 {
        let i = self.i0 + self.start.h3 * t + 0.5 * self.sigma * t * t;
        theta_of_i(self.quadrant, i)
    }

    pub fn state_at(&self, t: f64) -> VerticalState {
        VerticalState::new(self.theta_at(t), self.h3_at(t))
    }
}

fn boundary_index_near(theta: f64, tol: f64) -> Option<u8> {
    let k = (theta / FRAC_PI_2).round();
    if (theta - k * FRAC_PI_2).abs() <= tol.max(1e-12) {
        Some((k as i64).rem_euclid(4) as u8)
    } else {
        None
    }
}

/// Advance the exact vertical flow through one full control arc.
///
/// The arc ends at the first genuine sign change of `h1` or `h2`. Grazing
/// touches of a chart boundary (where the vanishing Hamiltonian keeps its
/// sign) are passed through without a switching. At a corner point of a
/// critical level with two admissible continuations the `branch` argument
/// selects the sign of `h3` afterwards; `Err(CornerBranch)` is returned if
/// it is needed and absent.
pub fn next_arc(
    state: &VerticalState,
    cas: &Casimirs,
    branch: Option<BranchChoice>,
    tol: f64,
) -> Result<ArcStep, VerticalError> {
    let scale = cas.h4.abs().max(1.0);
    let sig_eps = tol * scale;
    let theta = normalize_theta(state.theta);
    let mut h3 = state.h3;
    let htol = tol * scale.max(h3.abs());

    let at_boundary = boundary_index_near(theta, tol);
    let mut consumed_branch = false;

    // Resolve the direction of travel.
    let dir: i8 = if h3.abs() > htol {
        if h3 > 0.0 {
            1
        } else {
            -1
        }
    } else {
        h3 = 0.0;
        match at_boundary {
            Some(b) => {
                let right_ok = cas.sigma(b % 4) > sig_eps;
                let left_ok = cas.sigma((b + 3) % 4) < -sig_eps;
                match (right_ok, left_ok) {
                    (false, false) => return Err(VerticalError::Equilibrium),
                    (true, false) => 1,
                    (false, true) => -1,
                    (true, true) => {
                        consumed_branch = true;
                        match branch.ok_or(VerticalError::CornerBranch)? {
                            BranchChoice::Up => 1,
                            BranchChoice::Down => -1,
                        }
                    }
                }
            }
            None => {
                let q = quadrant_containing(theta);
                let s = cas.sigma(q);
                if s.abs() <= sig_eps {
                    return Err(VerticalError::Equilibrium);
                }
                if s > 0.0 {
                    1
                } else {
                    -1
                }
            }
        }
    };

    // Quadrant of travel; boundary indices of its ends as 0..=4 so that
    // theta = idx * pi/2 is monotone across the quadrant.
    let (q, theta0) = match at_boundary {
        Some(b) => {
            let q = if dir > 0 { b % 4 } else { (b + 3) % 4 };
            (q, f64::from(b % 4) * FRAC_PI_2 + if b % 4 == 0 && dir < 0 { TAU } else { 0.0 })
        }
        None => (quadrant_containing(theta), theta),
    };
    // Express theta0 inside [q pi/2, (q+1) pi/2].
    let theta0 = if theta0 < f64::from(q) * FRAC_PI_2 - 1e-9 {
        theta0 + TAU
    } else {
        theta0
    };
    let sigma = cas.sigma(q);
    let sigma = if sigma.abs() <= sig_eps { 0.0 } else { sigma };
    let letter = Casimirs::quadrant_signs(q);
    let energy = 0.5 * h3 * h3 + cas.v_at(theta0);
    let dtol = tol * scale.max(energy.abs());
    let i0 = i_of_theta(q, theta0);
    let start = VerticalState::new(normalize_theta(theta0), h3);

    let mut cur_dir = dir;
    let mut cur_h3 = h3;
    let mut elapsed = 0.0;
    let mut cur_i = i0;

    for _pass in 0..3 {
        // Boundary ahead of the current direction, as an absolute index in 0..=4.
        let ahead: u8 = if cur_dir > 0 { q + 1 } else { q };
        let behind: u8 = if cur_dir > 0 { q } else { q + 1 };
        let v_ahead = cas.v_boundary(ahead % 4);

        if sigma == 0.0 {
            // h3 is constant and nonzero: plain crossing.
            let i_b = if cur_dir > 0 { 0.5 } else { -0.5 };
            let dur = (i_b - cur_i) / cur_h3;
            return Ok(finish(
                letter,
                q,
                elapsed + dur.max(0.0),
                start,
                ahead,
                cur_h3,
                sigma,
                false,
                consumed_branch,
                i0,
            ));
        }

        let decel = cur_h3 * sigma < 0.0;
        if !decel {
            // |h3| grows: transversal exit ahead.
            let disc = (2.0 * (energy - v_ahead)).max(0.0);
            let h3_exit = f64::from(cur_dir) * disc.sqrt();
            let dur = (h3_exit - cur_h3) / sigma;
            return Ok(finish(
                letter,
                q,
                elapsed + dur.max(0.0),
                start,
                ahead,
                h3_exit,
                sigma,
                false,
                consumed_branch,
                i0,
            ));
        }

        let disc = 2.0 * (energy - v_ahead);
        if disc > dtol {
            let h3_exit = f64::from(cur_dir) * disc.sqrt();
            let dur = (h3_exit - cur_h3) / sigma;
            return Ok(finish(
                letter,
                q,
                elapsed + dur.max(0.0),
                start,
                ahead,
                h3_exit,
                sigma,
                false,
                consumed_branch,
                i0,
            ));
        } else if disc >= -dtol {
            // Grazing arrival at the boundary ahead with h3 -> 0.
            elapsed += (-cur_h3 / sigma).max(0.0);
            let far = if cur_dir > 0 { ahead % 4 } else { (ahead + 3) % 4 };
            let crossable = cas.sigma(far) * f64::from(cur_dir) > sig_eps;
            if crossable {
                if consumed_branch {
                    // A second corner in one arc cannot occur.
                    return Err(VerticalError::CornerBranch);
                }
                consumed_branch = true;
                let choice = branch.ok_or(VerticalError::CornerBranch)?;
                let new_dir: i8 = match choice {
                    BranchChoice::Up => 1,
                    BranchChoice::Down => -1,
                };
                if new_dir == cur_dir {
                    // Cross the corner: the control switches there.
                    return Ok(finish(
                        letter,
                        q,
                        elapsed,
                        start,
                        ahead,
                        0.0,
                        sigma,
                        true,
                        consumed_branch,
                        i0,
                    ));
                }
            }
            // Reflect: same letter, reversed travel.
            cur_dir = -cur_dir;
            cur_h3 = 0.0;
            cur_i = if ahead > behind { 0.5 } else { -0.5 };
            continue;
        } else {
            // Turnaround strictly inside the quadrant, then exit behind.
            let v_behind = cas.v_boundary(behind % 4);
            let disc_b = (2.0 * (energy - v_behind)).max(0.0);
            let h3_exit = -f64::from(cur_dir) * disc_b.sqrt();
            let dur = (h3_exit - cur_h3) / sigma;
            return Ok(finish(
                letter,
                q,
                elapsed + dur.max(0.0),
                start,
                behind,
                h3_exit,
                sigma,
                false,
                consumed_branch,
                i0,
            ));
        }
    }
    unreachable!("an arc contains at most one boundary touch");
}

fn quadrant_containing(theta: f64) -> u8 {
    ((theta / FRAC_PI_2).floor() as i64).rem_euclid(4) as u8
}

#[allow(clippy::too_many_arguments)]
fn finish(
    letter: (i8, i8),
    q: u8,
    duration: f64,
    start: VerticalState,
    end_boundary: u8,
    end_h3: f64,
    sigma: f64,
    corner_exit: bool,
    consumed_branch: bool,
    i0: f64,
) -> ArcStep {
    let end_theta = f64::from(end_boundary % 4) * FRAC_PI_2;
    ArcStep {
        letter,
        quadrant: q,
        duration,
        start,
        end: VerticalState::new(end_theta, end_h3),
        sigma,
        corner_exit,
        consumed_branch,
        i0,
    }
}

// ---------------------------------------------------------------------------
// Numerical oracle
// ---------------------------------------------------------------------------

fn h_field(h: &[f64; 3], cas: &Casimirs) -> [f64; 3] {
    let s1 = if h[0] >= 0.0 { 1.0 } else { -1.0 };
    let s2 = if h[1] >= 0.0 { 1.0 } else { -1.0 };
    [-s2 * h[2], s1 * h[2], s1 * cas.h4 + s2 * cas.h5]
}

fn chart_to_h(state: &VerticalState) -> [f64; 3] {
    let c = state.theta.cos();
    let s = state.theta.sin();
    [c.signum() * c * c, s.signum() * s * s, state.h3]
}

fn h_to_chart(h: &[f64; 3]) -> VerticalState {
    let c = h[0].signum() * h[0].abs().sqrt();
    let s = h[1].signum() * h[1].abs().sqrt();
    VerticalState::new(normalize_theta(s.atan2(c)), h[2])
}

fn rk4_step(h: &mut [f64; 3], cas: &Casimirs, dt: f64) {
    let k1 = h_field(h, cas);
    let mut p = [0.0; 3];
    for i in 0..3 {
        p[i] = h[i] + 0.5 * dt * k1[i];
    }
    let k2 = h_field(&p, cas);
    for i in 0..3 {
        p[i] = h[i] + 0.5 * dt * k2[i];
    }
    let k3 = h_field(&p, cas);
    for i in 0..3 {
        p[i] = h[i] + dt * k3[i];
    }
    let k4 = h_field(&p, cas);
    for i in 0..3 {
        h[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn oracle_energy(h: &[f64; 3], cas: &Casimirs) -> f64 {
    0.5 * h[2] * h[2] + h[0] * cas.h5 - h[1] * cas.h4
}

/// Fixed-step fourth-order integration of the vertical system; test oracle
/// for the exact walker.
pub fn vertical_flow_numeric(
    state: &VerticalState,
    cas: &Casimirs,
    t: f64,
    dt: f64,
) -> Result<VerticalState, VerticalError> {
    let (end, _) = integrate_recording(state, cas, t, dt, false)?;
    Ok(end)
}

/// Switching times of the numerical vertical flow over `[0, t]`: instants
/// where `h1` or `h2` changes sign (grazing touches do not count).
pub fn numeric_switchings(
    state: &VerticalState,
    cas: &Casimirs,
    t: f64,
    dt: f64,
) -> Result<Vec<f64>, VerticalError> {
    let (_, switchings) = integrate_recording(state, cas, t, dt, true)?;
    Ok(switchings)
}

fn integrate_recording(
    state: &VerticalState,
    cas: &Casimirs,
    t: f64,
    dt: f64,
    record: bool,
) -> Result<(VerticalState, Vec<f64>), VerticalError> {
    assert!(dt > 0.0, "dt must be positive");
    let mut h = chart_to_h(state);
    let e0 = oracle_energy(&h, cas);
    let h0 = h[0].abs() + h[1].abs();

    // The right-hand side jumps where h1 or h2 changes sign, so a step that
    // straddles a crossing is bisected down to the switching surface. The
    // detector then filters grazing touches with a dead band: a switching is
    // reported only when the component reaches a definite magnitude with the
    // opposite sign afterwards.
    const DEFINITE: f64 = 1e-9;
    let mut last_def: [Option<bool>; 2] = [None, None];
    let mut pending: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut switchings = Vec::new();
    fn observe(
        time: f64,
        h: &[f64; 3],
        last_def: &mut [Option<bool>; 2],
        pending: &mut [Vec<f64>; 2],
        out: &mut Vec<f64>,
    ) {
        for c in 0..2 {
            let v = h[c];
            if v.abs() > DEFINITE {
                let sign = v > 0.0;
                if let Some(old) = last_def[c] {
                    if old != sign {
                        // The last located event is the genuine crossing.
                        if let Some(&te) = pending[c].last() {
                            out.push(te);
                        } else {
                            out.push(time);
                        }
                    }
                }
                last_def[c] = Some(sign);
                pending[c].clear();
            }
        }
    }

    if record {
        observe(0.0, &h, &mut last_def, &mut pending, &mut switchings);
    }
    let mut time = 0.0;
    while time < t {
        let step = dt.min(t - time);
        let before = h;
        let mut trial = h;
        rk4_step(&mut trial, cas, step);

        // Did a component cross zero (by raw sign) within this step?
        let crossed = |a: &[f64; 3], b: &[f64; 3], c: usize| (a[c] >= 0.0) != (b[c] >= 0.0);
        let mut event: Option<(f64, usize)> = None;
        for c in 0..2 {
            if crossed(&before, &trial, c) {
                // Bisect the substep length for the earliest crossing.
                let (mut lo, mut hi) = (0.0f64, step);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let mut probe = before;
                    rk4_step(&mut probe, cas, mid);
                    if crossed(&before, &probe, c) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 1e-14 * step.max(1e-300) {
                        break;
                    }
                }
                if event.map_or(true, |(w, _)| hi < w) {
                    event = Some((hi, c));
                }
            }
        }

        match event {
            Some((w, c)) => {
                // Land just past the crossing (the bracket end has the new sign).
                rk4_step(&mut h, cas, w);
                time += w;
                pending[c].push(time);
                if record {
                    observe(time, &h, &mut last_def, &mut pending, &mut switchings);
                }
            }
            None => {
                h = trial;
                time += step;
                if record {
                    observe(time, &h, &mut last_def, &mut pending, &mut switchings);
                }
            }
        }
    }

    let drift_e = (oracle_energy(&h, cas) - e0).abs();
    let drift_h = ((h[0].abs() + h[1].abs()) - h0).abs();
    let drift = drift_e.max(drift_h);
    if drift > 1e-6 * e0.abs().max(1.0) {
        return Err(VerticalError::StepTooLarge { drift });
    }
    Ok((h_to_chart(&h), switchings))
}
