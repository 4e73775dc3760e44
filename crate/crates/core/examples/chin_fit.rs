//! Fit polynomial chin curves of increasing degree to the jaw points of
//! subjects with low and high adiposity.

use bodycomp::chinfit;
use bodycomp::dataset::synth::FaceGeometry;

fn main() -> bodycomp::Result<()> {
    for adiposity in [-2.0, 0.0, 2.0] {
        let face = FaceGeometry::from_adiposity(256, adiposity, (0.0, 0.0));
        let bbox = face.bbox();
        let pts = chinfit::normalize_points(&face.chin_points(), &bbox)?;
        println!("adiposity {adiposity:+.1}  (box {}x{})", bbox.w, bbox.h);
        for degree in 1..=chinfit::MAX_DEGREE {
            let fit = chinfit::fit_polynomial(&pts, degree)?;
            println!("  degree {degree}: rmse {:.2e}  coefficients {:+.4?}", fit.rmse, fit.coefficients);
        }
    }
    Ok(())
}
