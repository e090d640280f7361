use std::ops::Mul;

use serde::{Deserialize, Serialize};

use super::BeamError;

/// Length used by [`BeamlineElement::thin_lens`]; short enough that the thick
/// quadrupole matrix agrees with the thin-lens kick to ~1e-12.
pub const THIN_LENS_LENGTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Drift,
    Quadrupole,
    SectorBend,
}

/// A hard-edge beamline element.
///
/// `strength` is the geometric quadrupole gradient `k` (m⁻², positive focuses
/// in x) or the bend angle (rad); drifts carry zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamlineElement {
    pub kind: ElementKind,
    pub length: f64,
    #[serde(default)]
    pub strength: f64,
}

impl BeamlineElement {
    pub fn drift(length: f64) -> Self {
        BeamlineElement {
            kind: ElementKind::Drift,
            length,
            strength: 0.0,
        }
    }

    pub fn quadrupole(length: f64, k: f64) -> Self {
        BeamlineElement {
            kind: ElementKind::Quadrupole,
            length,
            strength: k,
        }
    }

    pub fn sector_bend(length: f64, angle: f64) -> Self {
        BeamlineElement {
            kind: ElementKind::SectorBend,
            length,
            strength: angle,
        }
    }

    /// A quadrupole of negligible length with integrated strength `1/f`
    /// (positive `f` focuses in x).
    pub fn thin_lens(focal_length: f64) -> Self {
        Self::quadrupole(THIN_LENS_LENGTH, 1.0 / (focal_length * THIN_LENS_LENGTH))
    }

    pub fn validate(&self) -> Result<(), BeamError> {
        let bad = |reason: &str| BeamError::InvalidElement(format!("{self:?}: {reason}"));
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(bad("length must be > 0"));
        }
        if !self.strength.is_finite() {
            return Err(bad("strength must be finite"));
        }
        if self.kind == ElementKind::Drift && self.strength != 0.0 {
            return Err(bad("a drift has zero strength"));
        }
        Ok(())
    }

    /// The first `length` meters of this element.
    pub fn slice(&self, length: f64) -> Self {
        let strength = match self.kind {
            ElementKind::SectorBend => self.strength * (length / self.length),
            _ => self.strength,
        };
        BeamlineElement {
            length,
            strength,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    X,
    Y,
}

impl Plane {
    pub const BOTH: [Plane; 2] = [Plane::X, Plane::Y];
}

/// Row-major 2×2 real matrix acting on `(x, x')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix2(pub [[f64; 2]; 2]);

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Matrix2([[m11, m12], [m21, m22]])
    }

    pub fn det(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        a * d - b * c
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn inverse(&self) -> Option<Matrix2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let [[a, b], [c, d]] = self.0;
        Some(Matrix2::new(d / det, -b / det, -c / det, a / det))
    }

    pub fn max_abs_diff(&self, other: &Matrix2) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        worst
    }
}

impl Mul for Matrix2 {
    type Output = Matrix2;

    fn mul(self, rhs: Matrix2) -> Matrix2 {
        let a = self.0;
        let b = rhs.0;
        Matrix2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

/// Decoupled per-plane transfer map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub x: Matrix2,
    pub y: Matrix2,
}

impl TransferMatrix {
    pub const IDENTITY: TransferMatrix = TransferMatrix {
        x: Matrix2::IDENTITY,
        y: Matrix2::IDENTITY,
    };

    pub fn plane(&self, plane: Plane) -> &Matrix2 {
        match plane {
            Plane::X => &self.x,
            Plane::Y => &self.y,
        }
    }
}

fn drift_matrix(length: f64) -> Matrix2 {
    Matrix2::new(1.0, length, 0.0, 1.0)
}

/// Thick-lens matrix for gradient `k` in the plane of interest.
fn quad_matrix(length: f64, k: f64) -> Matrix2 {
    if k == 0.0 {
        return drift_matrix(length);
    }
    let root = k.abs().sqrt();
    let phi = root * length;
    if k > 0.0 {
        let (s, c) = phi.sin_cos();
        Matrix2::new(c, s / root, -root * s, c)
    } else {
        let (s, c) = (phi.sinh(), phi.cosh());
        Matrix2::new(c, s / root, root * s, c)
    }
}

/// Transfer matrix of one element in one plane.
pub fn element_matrix(element: &BeamlineElement, plane: Plane) -> Result<Matrix2, BeamError> {
    element.validate()?;
    let BeamlineElement {
        kind,
        length,
        strength,
    } = *element;
    Ok(match (kind, plane) {
        (ElementKind::Drift, _) => drift_matrix(length),
        (ElementKind::Quadrupole, Plane::X) => quad_matrix(length, strength),
        (ElementKind::Quadrupole, Plane::Y) => quad_matrix(length, -strength),
        (ElementKind::SectorBend, Plane::Y) => drift_matrix(length),
        (ElementKind::SectorBend, Plane::X) => {
            if strength == 0.0 {
                drift_matrix(length)
            } else {
                // bending radius rho = L / angle
                let rho = length / strength;
                let (s, c) = strength.sin_cos();
                Matrix2::new(c, rho * s, -s / rho, c)
            }
        }
    })
}

pub fn element_transfer(element: &BeamlineElement) -> Result<TransferMatrix, BeamError> {
    Ok(TransferMatrix {
        x: element_matrix(element, Plane::X)?,
        y: element_matrix(element, Plane::Y)?,
    })
}

/// Ordered list of elements in traversal order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Beamline {
    pub elements: Vec<BeamlineElement>,
}

impl Beamline {
    pub fn new(elements: Vec<BeamlineElement>) -> Self {
        Beamline { elements }
    }

    pub fn validate(&self) -> Result<(), BeamError> {
        if self.elements.is_empty() {
            return Err(BeamError::EmptyLine);
        }
        self.elements.iter().try_for_each(BeamlineElement::validate)
    }

    pub fn total_length(&self) -> f64 {
        self.elements.iter().map(|e| e.length).sum()
    }
}

/// Product of element matrices; the first element traversed is the rightmost factor.
pub fn compose(line: &Beamline) -> Result<TransferMatrix, BeamError> {
    line.validate()?;
    line.elements
        .iter()
        .try_fold(TransferMatrix::IDENTITY, |acc, element| {
            let m = element_transfer(element)?;
            Ok(TransferMatrix {
                x: m.x * acc.x,
                y: m.y * acc.y,
            })
        })
}

/// Periodic-cell stability of one plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneStability {
    pub stable: bool,
    pub trace: f64,
    /// Phase advance per cell (rad), present when stable.
    pub phase_advance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStability {
    pub x: PlaneStability,
    pub y: PlaneStability,
}

impl CellStability {
    pub fn stable(&self) -> bool {
        self.x.stable && self.y.stable
    }
}

fn plane_stability(m: &Matrix2) -> PlaneStability {
    let trace = m.trace();
    let stable = trace.abs() <= 2.0;
    PlaneStability {
        stable,
        trace,
        phase_advance: stable.then(|| (trace / 2.0).acos()),
    }
}

/// Stable iff `|trace M| ≤ 2`, with `cos μ = trace M / 2`.
pub fn cell_stability(cell: &Beamline) -> Result<CellStability, BeamError> {
    let m = compose(cell)?;
    Ok(CellStability {
        x: plane_stability(&m.x),
        y: plane_stability(&m.y),
    })
}
