//! Fit the per-keyframe scale, then compute signed per-point errors,
//! keyframe statistics and the per-pixel mean absolute error.

use reconeval::eval::{
    effective_region, estimate_scale, estimate_scale_median, keyframe_error_stats, median_downsample,
    pixelwise_error_map, point_depth_errors,
};
use reconeval::raster::DepthMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Raw SLAM depths in arbitrary units; the truth is roughly twice that.
    let delta = [100.0, 150.0, 210.0, 260.0, 300.0, 330.0];
    let d_gt = [201.0, 299.0, 421.5, 519.0, 600.5, 900.0];
    let ls = estimate_scale(&delta, &d_gt)?;
    let med = estimate_scale_median(&delta, &d_gt)?;
    println!("least squares lambda {:.4}, median of ratios {:.4} ({} pairs)", ls.lambda, med.lambda, ls.n_pairs);

    let gt = DepthMap::from_vec(3, 2, d_gt.to_vec())?;
    let slam = DepthMap::from_vec(3, 2, delta.iter().map(|d| d * med.lambda).collect())?;
    let errors = point_depth_errors(&gt, &slam)?;
    let e: Vec<f64> = errors.records.iter().map(|r| r.e_depth_mm).collect();
    println!("signed errors: {e:?}");
    let stats = keyframe_error_stats(&e)?;
    println!("mean {:.3} mm, variance {:.3} mm^2 over {} points", stats.mean_mm, stats.variance_mm2, stats.n);

    let map = pixelwise_error_map(&errors.records, 3, 2)?;
    println!("pixel map: {:?}", map.mean_abs.data());
    println!("3x3 median block: {:?}", median_downsample(&map.mean_abs, 3)?.data());
    let region = effective_region(&map.mean_abs, 2.0)?;
    println!("effective region at 2 mm covers {:.0}%", 100.0 * region.fraction);
    Ok(())
}
