//! Runs the self-check suites, then shows the raster check catching a
//! reverse pass with a flipped coverage derivative.
//!
//! `cargo run --release --example self_check`

use strokepaint::raster;
use strokepaint::verify::{raster_gradient_check, run_all, sign_flipped_render_backward};

fn main() -> strokepaint::Result<()> {
    let report = run_all(0, raster::render_backward)?;
    print!("{}", report.table());
    println!("all passed: {}", report.all_passed());

    let mutated = raster_gradient_check(4, 3, 48, 0, sign_flipped_render_backward)?;
    println!(
        "flipped adjoint: max rel err {:.2e} over {} parameters",
        mutated.max_rel_error, mutated.checked
    );
    Ok(())
}
