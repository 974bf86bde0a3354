//! `heightlab render`: color-map a heightmap into a PNG.

use heightlab_core::io::hgt1;
use heightlab_core::Error;

use crate::colormap::render_heightmap_png;
use crate::{CliResult, RenderArgs};

pub fn run(args: &RenderArgs) -> CliResult<()> {
    let map = hgt1::read_height_map(&args.heightmap)?;
    let img = render_heightmap_png(&map);
    img.save(&args.out)
        .map_err(|e| Error::Format(format!("PNG write failed: {e}")))?;
    println!(
        "rendered {}x{} cells to {}",
        map.grid().rows,
        map.grid().cols,
        args.out.display()
    );
    Ok(())
}
