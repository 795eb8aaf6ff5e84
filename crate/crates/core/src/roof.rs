//! Roof plan area from a segmentation mask and rooftop object occupancy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{
    histogram_equalize, largest_component, mask_area_pixels, outer_contour, polygon_area, threshold, undistort,
    BinaryMask, CameraIntrinsics, Connectivity, GrayImage, ImagingError,
};

#[derive(Debug, Error)]
pub enum RoofError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mask has no roof component")]
    EmptyMask,
    #[error("roof mask is empty")]
    EmptyRoof,
    #[error("mask dimensions differ: object {0}x{1}, roof {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("no area samples to average")]
    NoSamples,
}

impl RoofError {
    pub fn kind(&self) -> &'static str {
        match self {
            RoofError::InvalidParameter(_) => "invalid_parameter",
            RoofError::EmptyMask => "empty_mask",
            RoofError::EmptyRoof => "empty_roof",
            RoofError::DimensionMismatch(..) => "dimension_mismatch",
            RoofError::NoSamples => "no_samples",
        }
    }

    pub(crate) fn is_input(&self) -> bool {
        !matches!(self, RoofError::EmptyMask)
    }
}

/// One evaluation of `C (D/f)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSample {
    pub area_m2: f64,
    /// Filled pixel count of the largest component (the `C` used).
    pub pixel_count: usize,
    /// Shoelace area of the traced outer contour, for comparison.
    pub contour_area_px: f64,
    pub depth_m: f64,
    pub focal_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaEstimate {
    pub area_m2: f64,
    pub samples: Vec<AreaSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyEstimate {
    /// Object pixels inside the roof mask.
    pub object_pixels: usize,
    pub roof_pixels: usize,
    pub percentage: f64,
    pub unclipped_object_pixels: usize,
    pub unclipped_percentage: f64,
}

/// Segmentation output to roof mask: optional undistortion, optional
/// histogram equalization, then `>= level`.
pub fn prepare_mask(
    img: &GrayImage,
    intrinsics: Option<&CameraIntrinsics>,
    equalize: bool,
    level: u8,
) -> Result<BinaryMask, ImagingError> {
    let mut g = match intrinsics {
        Some(k) => undistort(img, k)?,
        None => img.clone(),
    };
    if equalize {
        g = histogram_equalize(&g);
    }
    Ok(threshold(&g, level))
}

pub fn area_from_pixels(pixels: f64, depth_m: f64, focal_px: f64) -> f64 {
    let gsd = depth_m / focal_px;
    pixels * gsd * gsd
}

pub fn roof_area(mask: &BinaryMask, depth_m: f64, focal_px: f64) -> Result<AreaEstimate, RoofError> {
    roof_area_with(mask, depth_m, focal_px, Connectivity::Eight)
}

pub fn roof_area_with(
    mask: &BinaryMask,
    depth_m: f64,
    focal_px: f64,
    conn: Connectivity,
) -> Result<AreaEstimate, RoofError> {
    if !(depth_m.is_finite() && depth_m > 0.0) {
        return Err(RoofError::InvalidParameter(format!(
            "depth must be positive, got {depth_m}"
        )));
    }
    if !(focal_px.is_finite() && focal_px > 0.0) {
        return Err(RoofError::InvalidParameter(format!(
            "focal length must be positive, got {focal_px}"
        )));
    }
    let blob = largest_component(mask, conn);
    let c = mask_area_pixels(&blob);
    if c == 0 {
        return Err(RoofError::EmptyMask);
    }
    let sample = AreaSample {
        area_m2: area_from_pixels(c as f64, depth_m, focal_px),
        pixel_count: c,
        contour_area_px: polygon_area(&outer_contour(&blob)),
        depth_m,
        focal_px,
    };
    Ok(AreaEstimate {
        area_m2: sample.area_m2,
        samples: vec![sample],
    })
}

/// Mean area over every sample carried by `estimates`.
pub fn average_area(estimates: &[AreaEstimate]) -> Result<AreaEstimate, RoofError> {
    let samples: Vec<AreaSample> = estimates.iter().flat_map(|e| e.samples.iter().cloned()).collect();
    if samples.is_empty() {
        return Err(RoofError::NoSamples);
    }
    let area_m2 = samples.iter().map(|s| s.area_m2).sum::<f64>() / samples.len() as f64;
    Ok(AreaEstimate { area_m2, samples })
}

pub fn occupancy_percent(object_mask: &BinaryMask, roof_mask: &BinaryMask) -> Result<OccupancyEstimate, RoofError> {
    if object_mask.width != roof_mask.width || object_mask.height != roof_mask.height {
        return Err(RoofError::DimensionMismatch(
            object_mask.width,
            object_mask.height,
            roof_mask.width,
            roof_mask.height,
        ));
    }
    let roof_pixels = roof_mask.count();
    if roof_pixels == 0 {
        return Err(RoofError::EmptyRoof);
    }
    let object_pixels = object_mask
        .data
        .iter()
        .zip(&roof_mask.data)
        .filter(|(o, r)| **o && **r)
        .count();
    let unclipped = object_mask.count();
    Ok(OccupancyEstimate {
        object_pixels,
        roof_pixels,
        percentage: 100.0 * object_pixels as f64 / roof_pixels as f64,
        unclipped_object_pixels: unclipped,
        unclipped_percentage: 100.0 * unclipped as f64 / roof_pixels as f64,
    })
}
