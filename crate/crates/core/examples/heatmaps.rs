//! Render a synthetic error map as a green-to-red PPM and its effective
//! region as a mask.

use reconeval::eval::effective_region;
use reconeval::heatmap::{write_heatmap, write_mask, HeatmapStyle};
use reconeval::raster::DepthMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (64, 48);
    // Error grows towards the border; a corner is unobserved.
    let map = DepthMap::from_fn(w, h, |p, q| {
        if p < 8 && q < 8 {
            return f64::NAN;
        }
        let (y, x) = (p as f64 / h as f64 - 0.5, q as f64 / w as f64 - 0.5);
        3.0 * (x * x + y * y).sqrt()
    });
    let style = HeatmapStyle::auto(&map);
    println!("clamp {:.2}..{:.2} mm; 0 -> {:?}, mid -> {:?}, max -> {:?}", style.min_mm, style.max_mm,
        style.color(style.min_mm), style.color(0.5 * (style.min_mm + style.max_mm)), style.color(style.max_mm));

    let dir = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| dir.path().to_path_buf());
    write_heatmap(&map, &style, &out.join("error.ppm"))?;
    let region = effective_region(&map, 1.0)?;
    write_mask(&region.mask, &out.join("region.ppm"))?;
    println!("wrote error.ppm and region.ppm to {} ({:.0}% within 1 mm)", out.display(), 100.0 * region.fraction);
    Ok(())
}
