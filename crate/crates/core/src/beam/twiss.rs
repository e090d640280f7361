use serde::{Deserialize, Serialize};

use super::optics::{element_matrix, Beamline, Matrix2, Plane};
use super::BeamError;
use crate::sim::TimeSeries;

/// Unimodularity tolerance accepted by [`propagate_twiss`].
pub const DET_TOLERANCE: f64 = 1e-9;

/// Beam-ellipse parameters in one plane; `gamma = (1 + alpha²) / beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwissParams {
    pub alpha: f64,
    /// m
    pub beta: f64,
    /// m·rad
    pub emittance: f64,
}

impl TwissParams {
    pub fn new(alpha: f64, beta: f64, emittance: f64) -> Self {
        TwissParams {
            alpha,
            beta,
            emittance,
        }
    }

    pub fn gamma(&self) -> f64 {
        (1.0 + self.alpha * self.alpha) / self.beta
    }

    /// Beam half-size `sqrt(ε β)` (m).
    pub fn envelope(&self) -> f64 {
        (self.emittance * self.beta).sqrt()
    }

    pub fn validate(&self) -> Result<(), BeamError> {
        let ok = self.alpha.is_finite()
            && self.beta > 0.0
            && self.beta.is_finite()
            && self.emittance > 0.0
            && self.emittance.is_finite();
        if ok {
            Ok(())
        } else {
            Err(BeamError::InvalidTwiss(*self))
        }
    }
}

/// Twiss parameters for both transverse planes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamTwiss {
    pub x: TwissParams,
    pub y: TwissParams,
}

impl BeamTwiss {
    /// Same ellipse in both planes.
    pub fn round(tw: TwissParams) -> Self {
        BeamTwiss { x: tw, y: tw }
    }

    pub fn plane(&self, plane: Plane) -> &TwissParams {
        match plane {
            Plane::X => &self.x,
            Plane::Y => &self.y,
        }
    }

    pub fn validate(&self) -> Result<(), BeamError> {
        self.x.validate()?;
        self.y.validate()
    }
}

/// Transports Twiss parameters through a unimodular matrix.
pub fn propagate_twiss(tw: &TwissParams, m: &Matrix2) -> Result<TwissParams, BeamError> {
    tw.validate()?;
    let det = m.det();
    if !((det - 1.0).abs() <= DET_TOLERANCE) {
        return Err(BeamError::NonUnimodular(det));
    }
    let [[m11, m12], [m21, m22]] = m.0;
    let (alpha, beta, gamma) = (tw.alpha, tw.beta, tw.gamma());
    let beta_out = m11 * m11 * beta - 2.0 * m11 * m12 * alpha + m12 * m12 * gamma;
    let alpha_out = -m11 * m21 * beta + (m11 * m22 + m12 * m21) * alpha - m12 * m22 * gamma;
    Ok(TwissParams {
        alpha: alpha_out,
        beta: beta_out,
        emittance: tw.emittance,
    })
}

pub fn propagate_beam(tw: &BeamTwiss, m: &super::TransferMatrix) -> Result<BeamTwiss, BeamError> {
    Ok(BeamTwiss {
        x: propagate_twiss(&tw.x, &m.x)?,
        y: propagate_twiss(&tw.y, &m.y)?,
    })
}

/// Channel labels produced by [`envelope`], all in meters.
pub const ENVELOPE_CHANNELS: [&str; 4] = ["beta_x", "beta_y", "envelope_x", "envelope_y"];

/// Beta functions and beam half-sizes along the line, sampled at most
/// `step` apart and at every element boundary. The abscissa is the path
/// length `s` (m).
pub fn envelope(line: &Beamline, tw0: &BeamTwiss, step: f64) -> Result<TimeSeries, BeamError> {
    line.validate()?;
    tw0.validate()?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(BeamError::InvalidStep(step));
    }
    let mut s_values = vec![0.0];
    let mut points = vec![*tw0];
    let mut s_entry = 0.0;
    let mut entry = *tw0;
    for element in &line.elements {
        let pieces = (element.length / step).ceil().max(1.0) as usize;
        for piece in 1..=pieces {
            let sub = if piece == pieces {
                *element
            } else {
                element.slice(element.length * piece as f64 / pieces as f64)
            };
            let tw = BeamTwiss {
                x: propagate_twiss(&entry.x, &element_matrix(&sub, Plane::X)?)?,
                y: propagate_twiss(&entry.y, &element_matrix(&sub, Plane::Y)?)?,
            };
            s_values.push(s_entry + sub.length);
            points.push(tw);
        }
        s_entry += element.length;
        entry = *points.last().unwrap();
    }
    // thin elements can collapse onto the previous abscissa
    let mut keep_s = Vec::with_capacity(s_values.len());
    let mut keep_tw: Vec<BeamTwiss> = Vec::with_capacity(points.len());
    for (s, tw) in s_values.into_iter().zip(points) {
        if keep_s.last().is_some_and(|&last| s <= last) {
            *keep_tw.last_mut().unwrap() = tw;
        } else {
            keep_s.push(s);
            keep_tw.push(tw);
        }
    }
    let mut series = TimeSeries::new(keep_s)?;
    series.push_channel("beta_x", "m", keep_tw.iter().map(|t| t.x.beta).collect())?;
    series.push_channel("beta_y", "m", keep_tw.iter().map(|t| t.y.beta).collect())?;
    series.push_channel(
        "envelope_x",
        "m",
        keep_tw.iter().map(|t| t.x.envelope()).collect(),
    )?;
    series.push_channel(
        "envelope_y",
        "m",
        keep_tw.iter().map(|t| t.y.envelope()).collect(),
    )?;
    Ok(series)
}
